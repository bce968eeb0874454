//! Array-based Othello rules, written independently of the bitboard engine.
#![allow(dead_code)]

use othello_probe::engine::{Board, Cell, Color};

/// Plain 8×8 array board, written without bit tricks.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Naive {
    pub cells: [[i8; 8]; 8], // 0 empty, 1 black, -1 white
    pub to_move: i8,
}

pub const DIRS: [(i32, i32); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

impl Naive {
    pub fn start() -> Naive {
        let mut cells = [[0i8; 8]; 8];
        // (row, col): D4 = (3, 3)
        cells[3][3] = -1;
        cells[4][4] = -1;
        cells[3][4] = 1;
        cells[4][3] = 1;
        Naive { cells, to_move: 1 }
    }

    pub fn flips_for(&self, r: usize, c: usize, who: i8) -> Vec<(usize, usize)> {
        if self.cells[r][c] != 0 {
            return Vec::new();
        }
        let mut all = Vec::new();
        for (dr, dc) in DIRS {
            let mut line = Vec::new();
            let (mut rr, mut cc) = (r as i32 + dr, c as i32 + dc);
            while (0..8).contains(&rr) && (0..8).contains(&cc) && self.cells[rr as usize][cc as usize] == -who {
                line.push((rr as usize, cc as usize));
                rr += dr;
                cc += dc;
            }
            if !line.is_empty()
                && (0..8).contains(&rr)
                && (0..8).contains(&cc)
                && self.cells[rr as usize][cc as usize] == who
            {
                all.extend(line);
            }
        }
        all
    }

    pub fn legal_for(&self, who: i8) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..8 {
            for c in 0..8 {
                if !self.flips_for(r, c, who).is_empty() {
                    out.push((r, c));
                }
            }
        }
        out
    }

    pub fn play(&self, r: usize, c: usize) -> Option<Naive> {
        let flips = self.flips_for(r, c, self.to_move);
        if flips.is_empty() {
            return None;
        }
        let mut next = *self;
        next.cells[r][c] = self.to_move;
        for (fr, fc) in flips {
            next.cells[fr][fc] = self.to_move;
        }
        next.to_move = if next.legal_for(-self.to_move).is_empty() { self.to_move } else { -self.to_move };
        Some(next)
    }

    pub fn perft(&self, depth: u32) -> u64 {
        if depth == 0 {
            return 1;
        }
        self.legal_for(self.to_move).into_iter().map(|(r, c)| self.play(r, c).unwrap().perft(depth - 1)).sum()
    }
}

/// Same discs and side to move.
pub fn same(board: &Board, naive: &Naive) -> bool {
    (0..64).all(|sq| {
        let v = naive.cells[sq / 8][sq % 8];
        board.cell(sq)
            == match v {
                1 => Cell::Black,
                -1 => Cell::White,
                _ => Cell::Empty,
            }
    }) && (board.to_move() == Color::Black) == (naive.to_move == 1)
}
