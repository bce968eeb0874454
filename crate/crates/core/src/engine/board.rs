//! Bitboard Othello position.

use std::fmt;

use super::tile::Tile;
use super::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Color {
    Black,
    White,
}

impl Color {
    pub fn opponent(self) -> Color {
        match self {
            Color::Black => Color::White,
            Color::White => Color::Black,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Empty,
    Black,
    White,
}

const NOT_A: u64 = 0xfefe_fefe_fefe_fefe;
const NOT_H: u64 = 0x7f7f_7f7f_7f7f_7f7f;

/// (shift, mask applied after shifting). Positive shifts move toward H8.
const DIRECTIONS: [(i32, u64); 8] = [
    (1, NOT_A),
    (-1, NOT_H),
    (8, u64::MAX),
    (-8, u64::MAX),
    (9, NOT_A),
    (7, NOT_H),
    (-7, NOT_A),
    (-9, NOT_H),
];

#[inline]
fn shift(bits: u64, dir: i32, mask: u64) -> u64 {
    if dir > 0 {
        (bits << dir) & mask
    } else {
        (bits >> (-dir)) & mask
    }
}

/// Squares where `mover` may place a disc.
fn moves_for(mover: u64, other: u64) -> u64 {
    let empty = !(mover | other);
    let mut moves = 0;
    for &(dir, mask) in &DIRECTIONS {
        let mut run = shift(mover, dir, mask) & other;
        for _ in 0..5 {
            run |= shift(run, dir, mask) & other;
        }
        moves |= shift(run, dir, mask) & empty;
    }
    moves
}

/// Discs flipped when `mover` places on `bit`.
fn flips_for(mover: u64, other: u64, bit: u64) -> u64 {
    let mut flips = 0;
    for &(dir, mask) in &DIRECTIONS {
        let mut line = 0;
        let mut cur = shift(bit, dir, mask);
        while cur & other != 0 {
            line |= cur;
            cur = shift(cur, dir, mask);
        }
        if cur & mover != 0 {
            flips |= line;
        }
    }
    flips
}

/// Full board plus side to move.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Board {
    black: u64,
    white: u64,
    to_move: Color,
}

impl Default for Board {
    fn default() -> Self {
        Board::initial()
    }
}

impl Board {
    /// D4/E5 white, D5/E4 black, black to move.
    pub fn initial() -> Board {
        Board {
            black: (1 << 35) | (1 << 28),
            white: (1 << 27) | (1 << 36),
            to_move: Color::Black,
        }
    }

    /// Builds a board from raw bitboards. Overlapping discs are rejected.
    pub fn from_bitboards(black: u64, white: u64, to_move: Color) -> Option<Board> {
        (black & white == 0).then_some(Board { black, white, to_move })
    }

    pub fn black(&self) -> u64 {
        self.black
    }

    pub fn white(&self) -> u64 {
        self.white
    }

    pub fn to_move(&self) -> Color {
        self.to_move
    }

    pub fn cell(&self, square: usize) -> Cell {
        let bit = 1u64 << square;
        if self.black & bit != 0 {
            Cell::Black
        } else if self.white & bit != 0 {
            Cell::White
        } else {
            Cell::Empty
        }
    }

    pub fn disc_count(&self) -> u32 {
        (self.black | self.white).count_ones()
    }

    pub fn count(&self, color: Color) -> u32 {
        match color {
            Color::Black => self.black.count_ones(),
            Color::White => self.white.count_ones(),
        }
    }

    fn sides(&self, color: Color) -> (u64, u64) {
        match color {
            Color::Black => (self.black, self.white),
            Color::White => (self.white, self.black),
        }
    }

    /// Bitmask of legal placement squares for the side to move.
    pub fn legal_mask(&self) -> u64 {
        let (me, them) = self.sides(self.to_move);
        moves_for(me, them)
    }

    pub fn legal_mask_for(&self, color: Color) -> u64 {
        let (me, them) = self.sides(color);
        moves_for(me, them)
    }

    /// Legal tiles for the side to move, ascending by tile index. Empty means
    /// the side to move must pass (or the game is over).
    pub fn legal_moves(&self) -> Vec<Tile> {
        let mut mask = self.legal_mask();
        let mut out = Vec::with_capacity(mask.count_ones() as usize);
        while mask != 0 {
            let sq = mask.trailing_zeros() as usize;
            out.push(Tile::from_square(sq).expect("center squares are never empty"));
            mask &= mask - 1;
        }
        out.sort_unstable();
        out
    }

    pub fn is_legal(&self, tile: Tile) -> bool {
        self.legal_mask() & tile.bit() != 0
    }

    /// Discs that placing `tile` would flip for the side to move (0 if the
    /// square is occupied).
    pub fn flips(&self, tile: Tile) -> u64 {
        let bit = tile.bit();
        if (self.black | self.white) & bit != 0 {
            return 0;
        }
        let (me, them) = self.sides(self.to_move);
        flips_for(me, them, bit)
    }

    /// True when neither side can move.
    pub fn is_terminal(&self) -> bool {
        self.legal_mask_for(Color::Black) == 0 && self.legal_mask_for(Color::White) == 0
    }

    /// Places a disc for the side to move, flips bracketed discs and hands
    /// the move to the opponent unless the opponent has to pass.
    pub fn apply_move(&self, tile: Tile) -> Result<Board, EngineError> {
        let flips = self.flips(tile);
        if flips == 0 {
            return Err(EngineError::IllegalMove { tile, board: Box::new(*self) });
        }
        let bit = tile.bit();
        let (me, them) = self.sides(self.to_move);
        let me = me | bit | flips;
        let them = them & !flips;
        let (black, white) = match self.to_move {
            Color::Black => (me, them),
            Color::White => (them, me),
        };
        let mut next = Board { black, white, to_move: self.to_move.opponent() };
        if next.legal_mask() == 0 {
            next.to_move = self.to_move;
        }
        Ok(next)
    }
}

impl fmt::Debug for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "  A B C D E F G H  ({:?} to move)", self.to_move)?;
        for row in 0..8 {
            write!(f, "{}", row + 1)?;
            for col in 0..8 {
                let c = match self.cell(row * 8 + col) {
                    Cell::Empty => '.',
                    Cell::Black => 'X',
                    Cell::White => 'O',
                };
                write!(f, " {c}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
