use std::fmt;
use std::str::FromStr;

use super::EngineError;

/// Number of playable squares, which is also the move vocabulary size.
pub const TILE_COUNT: usize = 60;

const CENTER: [u8; 4] = [27, 28, 35, 36];

const fn build_tile_to_square() -> [u8; TILE_COUNT] {
    let mut out = [0u8; TILE_COUNT];
    let mut sq = 0u8;
    let mut t = 0;
    while sq < 64 {
        if !(sq == CENTER[0] || sq == CENTER[1] || sq == CENTER[2] || sq == CENTER[3]) {
            out[t] = sq;
            t += 1;
        }
        sq += 1;
    }
    out
}

const fn build_square_to_tile() -> [u8; 64] {
    let mut out = [u8::MAX; 64];
    let mut t = 0;
    while t < TILE_COUNT {
        out[TILE_TO_SQUARE[t] as usize] = t as u8;
        t += 1;
    }
    out
}

const TILE_TO_SQUARE: [u8; TILE_COUNT] = build_tile_to_square();
const SQUARE_TO_TILE: [u8; 64] = build_square_to_tile();

/// One of the 60 playable squares.
///
/// Index order is row-major from A1, skipping D4, E4, D5 and E5. The same
/// order is used for token ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tile(u8);

impl Tile {
    pub fn from_index(index: usize) -> Option<Tile> {
        (index < TILE_COUNT).then_some(Tile(index as u8))
    }

    /// Tile for a board square (`row * 8 + col`, A1 = 0); `None` for the
    /// four center squares.
    pub fn from_square(square: usize) -> Option<Tile> {
        match SQUARE_TO_TILE.get(square) {
            Some(&t) if t != u8::MAX => Some(Tile(t)),
            _ => None,
        }
    }

    pub fn from_row_col(row: usize, col: usize) -> Option<Tile> {
        if row < 8 && col < 8 {
            Tile::from_square(row * 8 + col)
        } else {
            None
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn square(self) -> usize {
        TILE_TO_SQUARE[self.0 as usize] as usize
    }

    pub fn row(self) -> usize {
        self.square() / 8
    }

    pub fn col(self) -> usize {
        self.square() % 8
    }

    pub fn bit(self) -> u64 {
        1u64 << self.square()
    }

    pub fn all() -> impl Iterator<Item = Tile> {
        (0..TILE_COUNT as u8).map(Tile)
    }

    pub fn label(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Tile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let col = (b'A' + self.col() as u8) as char;
        write!(f, "{}{}", col, self.row() + 1)
    }
}

impl FromStr for Tile {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EngineError::BadLabel(s.to_string());
        let bytes = s.as_bytes();
        if bytes.len() != 2 {
            return Err(bad());
        }
        let col = bytes[0].to_ascii_uppercase();
        let row = bytes[1];
        if !(b'A'..=b'H').contains(&col) || !(b'1'..=b'8').contains(&row) {
            return Err(bad());
        }
        Tile::from_row_col((row - b'1') as usize, (col - b'A') as usize).ok_or_else(bad)
    }
}
