use super::board::{Board, Color};
use super::tile::{Tile, TILE_COUNT};
use super::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    BlackWin,
    WhiteWin,
    Draw,
}

impl Outcome {
    pub fn of(board: &Board) -> Outcome {
        let b = board.count(Color::Black);
        let w = board.count(Color::White);
        match b.cmp(&w) {
            std::cmp::Ordering::Greater => Outcome::BlackWin,
            std::cmp::Ordering::Less => Outcome::WhiteWin,
            std::cmp::Ordering::Equal => Outcome::Draw,
        }
    }
}

/// Placement moves of one game. Passes are implicit: the side to move is
/// recomputed after every placement.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct GameRecord {
    pub moves: Vec<Tile>,
    pub outcome: Option<Outcome>,
}

impl GameRecord {
    pub fn new(moves: Vec<Tile>) -> Self {
        GameRecord { moves, outcome: None }
    }

    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    /// Final board after replaying every move.
    pub fn replay(&self) -> Result<Board, EngineError> {
        if self.moves.len() > TILE_COUNT {
            return Err(EngineError::TooLong(self.moves.len()));
        }
        let mut board = Board::initial();
        for (ply, &tile) in self.moves.iter().enumerate() {
            board = board.apply_move(tile).map_err(|_| EngineError::IllegalPly { ply, tile })?;
        }
        Ok(board)
    }

    /// Boards before each move plus the final board (`len + 1` entries).
    pub fn boards(&self) -> Result<Vec<Board>, EngineError> {
        if self.moves.len() > TILE_COUNT {
            return Err(EngineError::TooLong(self.moves.len()));
        }
        let mut out = Vec::with_capacity(self.moves.len() + 1);
        let mut board = Board::initial();
        out.push(board);
        for (ply, &tile) in self.moves.iter().enumerate() {
            board = board.apply_move(tile).map_err(|_| EngineError::IllegalPly { ply, tile })?;
            out.push(board);
        }
        Ok(out)
    }

    /// Colors that played each move.
    pub fn movers(&self) -> Result<Vec<Color>, EngineError> {
        let boards = self.boards()?;
        Ok(boards[..self.moves.len()].iter().map(Board::to_move).collect())
    }

    /// Board after the first `k` moves.
    pub fn board_after(&self, k: usize) -> Result<Board, EngineError> {
        GameRecord::new(self.moves[..k.min(self.moves.len())].to_vec()).replay()
    }

    pub fn labels(&self) -> String {
        self.moves.iter().map(|t| t.label()).collect::<Vec<_>>().join(" ")
    }
}
