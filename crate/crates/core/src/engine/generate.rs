//! Synthetic game generation by uniform-random legal play.
//!
//! Every game draws from its own ChaCha8 stream seeded with
//! `seed ^ game_index`, so output does not depend on how games are spread
//! over worker threads. Move choice uses 32-bit bounded sampling only, which
//! keeps the stream identical across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::board::Board;
use super::dataset::{Dataset, SourceTag};
use super::game::{GameRecord, Outcome};

/// Plays one game to completion choosing uniformly among legal moves.
pub fn random_game<R: Rng>(rng: &mut R) -> GameRecord {
    let mut board = Board::initial();
    let mut moves = Vec::with_capacity(60);
    loop {
        let legal = board.legal_moves();
        if legal.is_empty() {
            break;
        }
        let pick = rng.random_range(0..legal.len() as u32) as usize;
        let tile = legal[pick];
        moves.push(tile);
        board = board.apply_move(tile).expect("sampled move is legal");
    }
    GameRecord { moves, outcome: Some(Outcome::of(&board)) }
}

pub fn game_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ index)
}

/// `count` uniform-random games; deterministic in `(count, seed)`.
pub fn generate_games(count: usize, seed: u64) -> Dataset {
    assert!(count >= 1, "count must be positive");
    let games: Vec<GameRecord> = (0..count as u64)
        .into_par_iter()
        .map(|i| random_game(&mut game_rng(seed, i)))
        .collect();
    Dataset { games, source_tag: SourceTag::Synthetic, seed: Some(seed) }
}

/// Summary statistics matching the dataset-statistics table layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthStats {
    pub games: usize,
    pub mean: f64,
    pub std: f64,
    pub min: usize,
    pub full_length_fraction: f64,
}

pub fn length_stats(dataset: &Dataset) -> LengthStats {
    let n = dataset.games.len();
    let lens: Vec<usize> = dataset.games.iter().map(GameRecord::len).collect();
    let mean = lens.iter().sum::<usize>() as f64 / n.max(1) as f64;
    let var = lens.iter().map(|&l| (l as f64 - mean).powi(2)).sum::<f64>() / n.max(1) as f64;
    LengthStats {
        games: n,
        mean,
        std: var.sqrt(),
        min: lens.iter().copied().min().unwrap_or(0),
        full_length_fraction: lens.iter().filter(|&&l| l == 60).count() as f64 / n.max(1) as f64,
    }
}
