//! Othello rules, synthetic game generation and dataset files.

mod board;
mod dataset;
mod game;
mod generate;
mod tile;

use thiserror::Error;

pub use board::{Board, Cell, Color};
pub use dataset::{read_dataset, write_dataset, Dataset, SourceTag, Split};
pub(crate) use dataset::hex_digest;
pub use game::{GameRecord, Outcome};
pub use generate::{game_rng, generate_games, length_stats, random_game, LengthStats};
pub use tile::{Tile, TILE_COUNT};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("illegal move {tile} for {:?}", board.to_move())]
    IllegalMove { tile: Tile, board: Box<Board> },
    #[error("illegal move {tile} at ply {ply}")]
    IllegalPly { ply: usize, tile: Tile },
    #[error("game has {0} moves, more than 60")]
    TooLong(usize),
    #[error("invalid tile label {0:?}")]
    BadLabel(String),
    #[error("line {line}, token {token}: unknown tile label {text:?}")]
    Parse { line: usize, token: usize, text: String },
    #[error("line {line}: move {ply} ({tile}) is illegal")]
    IllegalGame { line: usize, ply: usize, tile: Tile },
    #[error("line {line}: game has {len} moves")]
    IllegalGameLength { line: usize, len: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
