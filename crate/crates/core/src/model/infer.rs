//! Greedy inference over move tokens.

use super::tokenizer::{encode_game, tile_of, Token, BOS, MOVE_TOKENS, VOCAB_SIZE};
use super::transformer::{Batch, Pass, Transformer};
use super::ModelError;
use crate::engine::{GameRecord, Tile};
use crate::scalar::Scalar;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Softmax over the move-token logits of one vocabulary row.
pub fn move_softmax<T: Scalar>(row: &[T]) -> Vec<T> {
    let row = &row[..MOVE_TOKENS];
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn move_tile(token: usize) -> Tile {
    tile_of(token as Token).expect("argmax over move tokens")
}

impl<T: Scalar> Transformer<T> {
    fn check_prefix(&self, prefix: &[Token]) -> Result<(), ModelError> {
        if prefix.first() != Some(&BOS) {
            return Err(ModelError::Prefix("prefix must start with BOS".into()));
        }
        if prefix[1..].iter().any(|&t| t as usize >= MOVE_TOKENS) {
            return Err(ModelError::Prefix("prefix contains a non-move token after BOS".into()));
        }
        if prefix.len() >= self.config().max_seq_len {
            return Err(ModelError::Length { len: prefix.len(), max: self.config().max_seq_len - 1 });
        }
        Ok(())
    }

    /// Full-vocabulary logits at the final prefix position.
    pub fn last_logits(&self, prefix: &[Token]) -> Result<Vec<T>, ModelError> {
        self.check_prefix(prefix)?;
        let ex = self.prefix_example(prefix);
        let batch = Batch::from_examples(&[&ex]);
        let trace = self.forward(&batch, &mut Pass::inference());
        let last = batch.t - 1;
        Ok(trace.logits[last * VOCAB_SIZE..(last + 1) * VOCAB_SIZE].to_vec())
    }

    /// Next-move probabilities over the 60 move tokens (BOS and PAD
    /// excluded before normalization).
    pub fn next_move_distribution(&self, prefix: &[Token]) -> Result<Vec<T>, ModelError> {
        Ok(move_softmax(&self.last_logits(prefix)?))
    }

    /// Greedy decoding of `k` moves, each appended before the next is
    /// produced.
    pub fn generate_k(&self, prefix: &[Token], k: usize) -> Result<Vec<Tile>, ModelError> {
        let mut seq = prefix.to_vec();
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            let logits = self.last_logits(&seq)?;
            let tok = argmax(&logits[..MOVE_TOKENS]);
            out.push(move_tile(tok));
            seq.push(tok as Token);
        }
        Ok(out)
    }

    /// Top-1 move after every prefix `X_<i`, `i = 1..=len`.
    pub fn predict_all_prefixes(&self, game: &GameRecord) -> Result<Vec<Tile>, ModelError> {
        let n = game.len();
        if n == 0 {
            return Ok(Vec::new());
        }
        let tokens = encode_game(game);
        if self.config().is_encoder_decoder() {
            return (1..=n).map(|i| self.generate_k(&tokens[..i], 1).map(|v| v[0])).collect();
        }
        let ex = self.prefix_example(&tokens[..n]);
        let trace = self.forward(&Batch::from_examples(&[&ex]), &mut Pass::inference());
        Ok((0..n)
            .map(|p| move_tile(argmax(&trace.logits[p * VOCAB_SIZE..p * VOCAB_SIZE + MOVE_TOKENS])))
            .collect())
    }

    /// Two greedy moves after every prefix `X_<i`, `i = 1..=len-1`.
    pub fn predict_all_prefixes_2(&self, game: &GameRecord) -> Result<Vec<(Tile, Tile)>, ModelError> {
        let n = game.len();
        if n < 2 {
            return Ok(Vec::new());
        }
        let tokens = encode_game(game);
        if self.config().is_encoder_decoder() {
            return (1..n)
                .map(|i| self.generate_k(&tokens[..i], 2).map(|v| (v[0], v[1])))
                .collect();
        }
        let m = n - 1;
        let ex = self.prefix_example(&tokens[..m]);
        let trace = self.forward(&Batch::from_examples(&[&ex]), &mut Pass::inference());
        let first: Vec<usize> = (0..m)
            .map(|p| argmax(&trace.logits[p * VOCAB_SIZE..p * VOCAB_SIZE + MOVE_TOKENS]))
            .collect();
        let branch: Vec<Token> = first.iter().map(|&t| t as Token).collect();
        let logits = self.branch_logits(&trace, m, &branch);
        Ok((0..m)
            .map(|p| {
                let second = argmax(&logits[p * VOCAB_SIZE..p * VOCAB_SIZE + MOVE_TOKENS]);
                (move_tile(first[p]), move_tile(second))
            })
            .collect())
    }
}
