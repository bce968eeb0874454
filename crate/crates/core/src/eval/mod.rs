//! Legal-move error rates for 1-hop and 2-hop generation.

mod report;
mod sweep;

use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{Board, Dataset, GameRecord, Tile};
use crate::model::{encode_moves, Transformer};
use crate::scalar::Scalar;

pub use report::{read_report, write_table, ErrorReport, PositionStat, TableRow};
pub use sweep::{parse_scale, sweep, sweep_plot_data, ScaleSpec, SweepCell, SweepTable};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("malformed report: {0}")]
    Report(String),
    #[error("invalid scale {0:?}")]
    Scale(String),
    #[error("scales must be sorted ascending")]
    ScaleOrder,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Anything that proposes moves for a game prefix.
///
/// The per-game methods have straightforward defaults; models override them
/// with batched paths.
pub trait MovePredictor: Sync {
    /// Greedy generation of `k` moves after `prefix`.
    fn generate(&self, prefix: &[Tile], k: usize) -> Vec<Tile>;

    /// Top-1 move after each prefix `X_<i`, `i = 1..=len`.
    fn predict_1hop(&self, game: &GameRecord) -> Vec<Tile> {
        (0..game.len()).map(|i| self.generate(&game.moves[..i], 1)[0]).collect()
    }

    /// Two generated moves after each prefix `X_<i`, `i = 1..=len-1`.
    fn predict_2hop(&self, game: &GameRecord) -> Vec<(Tile, Tile)> {
        (0..game.len().saturating_sub(1))
            .map(|i| {
                let g = self.generate(&game.moves[..i], 2);
                (g[0], g[1])
            })
            .collect()
    }
}

impl<T: Scalar> MovePredictor for Transformer<T> {
    fn generate(&self, prefix: &[Tile], k: usize) -> Vec<Tile> {
        self.generate_k(&encode_moves(prefix), k).expect("game prefixes fit the context")
    }

    fn predict_1hop(&self, game: &GameRecord) -> Vec<Tile> {
        self.predict_all_prefixes(game).expect("game prefixes fit the context")
    }

    fn predict_2hop(&self, game: &GameRecord) -> Vec<(Tile, Tile)> {
        self.predict_all_prefixes_2(game).expect("game prefixes fit the context")
    }
}

fn boards(game: &GameRecord) -> Vec<Board> {
    game.boards().expect("evaluation games replay legally")
}

/// Per-step counts for one game; index `i` holds step `i + 1`.
fn score_game(predictor: &impl MovePredictor, game: &GameRecord, hop: u8) -> Vec<bool> {
    let boards = boards(game);
    match hop {
        1 => predictor
            .predict_1hop(game)
            .into_iter()
            .zip(&boards)
            .map(|(tile, board)| !board.is_legal(tile))
            .collect(),
        2 => predictor
            .predict_2hop(game)
            .into_iter()
            .zip(&boards)
            .map(|((first, second), board)| match board.apply_move(first) {
                Ok(next) => !next.is_legal(second),
                Err(_) => true,
            })
            .collect(),
        _ => panic!("hop must be 1 or 2"),
    }
}

fn evaluate(predictor: &impl MovePredictor, test: &Dataset, hop: u8, checkpoint_id: &str) -> ErrorReport {
    assert!(!test.is_empty(), "test set is empty");
    let per_game: Vec<Vec<bool>> = test.games.par_iter().map(|g| score_game(predictor, g, hop)).collect();
    let steps = per_game.iter().map(Vec::len).max().unwrap_or(0);
    let mut positions: Vec<PositionStat> =
        (1..=steps).map(|step| PositionStat { step, prefixes: 0, errors: 0 }).collect();
    for game in &per_game {
        for (stat, &err) in positions.iter_mut().zip(game) {
            stat.prefixes += 1;
            stat.errors += err as u64;
        }
    }
    ErrorReport::from_positions(hop, positions, test.content_hash(), checkpoint_id.to_string())
}

/// 1-hop error: the top-1 move for every true prefix `X_<i` is checked on the
/// board reached by the prefix.
pub fn eval_1hop(predictor: &impl MovePredictor, test: &Dataset, checkpoint_id: &str) -> ErrorReport {
    evaluate(predictor, test, 1, checkpoint_id)
}

/// 2-hop error: two moves are generated after each prefix with at least two
/// remaining plies; the second is checked on the board after the first
/// generated move, and an illegal first move counts directly.
pub fn eval_2hop(predictor: &impl MovePredictor, test: &Dataset, checkpoint_id: &str) -> ErrorReport {
    evaluate(predictor, test, 2, checkpoint_id)
}

pub fn eval_hop(predictor: &impl MovePredictor, test: &Dataset, hop: u8, checkpoint_id: &str) -> ErrorReport {
    evaluate(predictor, test, hop, checkpoint_id)
}

/// Mean number of legal moves over every 1-hop prefix of `test`.
pub fn mean_legal_moves(test: &Dataset) -> f64 {
    let (sum, count) = test
        .games
        .iter()
        .flat_map(|g| {
            let b = boards(g);
            b.into_iter().take(g.len()).collect::<Vec<_>>()
        })
        .fold((0u64, 0u64), |(s, c), b| (s + b.legal_mask().count_ones() as u64, c + 1));
    sum as f64 / count as f64
}
