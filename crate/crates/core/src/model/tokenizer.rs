//! 62-symbol vocabulary: 60 move tokens in tile order, then BOS and PAD.

use crate::engine::{GameRecord, Tile, TILE_COUNT};

pub type Token = u32;

pub const MOVE_TOKENS: usize = TILE_COUNT;
pub const BOS: Token = 60;
pub const PAD: Token = 61;
pub const VOCAB_SIZE: usize = 62;

pub fn token_of(tile: Tile) -> Token {
    tile.index() as Token
}

/// Tile for a move token; `None` for BOS/PAD or out-of-range ids.
pub fn tile_of(token: Token) -> Option<Tile> {
    Tile::from_index(token as usize)
}

/// `[BOS, t1, …, tn]`.
pub fn encode_game(record: &GameRecord) -> Vec<Token> {
    encode_moves(&record.moves)
}

pub fn encode_moves(moves: &[Tile]) -> Vec<Token> {
    let mut out = Vec::with_capacity(moves.len() + 1);
    out.push(BOS);
    out.extend(moves.iter().map(|&t| token_of(t)));
    out
}

/// Inverse of [`encode_game`]; BOS and PAD are dropped, anything else
/// outside the vocabulary yields `None`.
pub fn decode(tokens: &[Token]) -> Option<Vec<Tile>> {
    tokens
        .iter()
        .filter(|&&t| t != BOS && t != PAD)
        .map(|&t| tile_of(t))
        .collect()
}
