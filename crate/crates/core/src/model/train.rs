//! Teacher-forced next-move training.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{ModelCheckpoint, TrainingMeta};
use super::config::{ModelConfig, TrainConfig};
use super::optim::{clip_grad_norm, AdamW};
use super::tokenizer::encode_game;
use super::transformer::{Batch, Example, Pass, Transformer};
use super::ModelError;
use crate::engine::{hex_digest, Dataset};
use crate::scalar::Scalar;

/// Loss observed at one logging point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPoint {
    pub step: usize,
    pub loss: f64,
}

/// Stepwise trainer; [`train`] drives it to completion.
pub struct Trainer<T> {
    model: Transformer<T>,
    tconfig: TrainConfig,
    opt: AdamW<T>,
    examples: Vec<Example>,
    order: Vec<usize>,
    cursor: usize,
    shuffle_rng: ChaCha8Rng,
    dropout_rng: ChaCha8Rng,
    step: usize,
    dataset_hash: String,
    history: Vec<LossPoint>,
    window: (f64, usize),
    last_loss: f64,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(config: ModelConfig, tconfig: TrainConfig, data: &Dataset) -> Result<Self, ModelError> {
        tconfig.validate()?;
        let model = Transformer::<T>::new(config)?;
        Trainer::from_model(model, tconfig, data)
    }

    pub fn from_model(model: Transformer<T>, tconfig: TrainConfig, data: &Dataset) -> Result<Self, ModelError> {
        tconfig.validate()?;
        if data.is_empty() {
            return Err(ModelError::Data("training dataset is empty".into()));
        }
        let max_len = model.config().max_seq_len;
        let mut examples = Vec::with_capacity(data.len());
        for game in &data.games {
            let tokens = encode_game(game);
            if tokens.len() > max_len {
                return Err(ModelError::Length { len: tokens.len(), max: max_len });
            }
            examples.extend(model.game_examples(&tokens));
        }
        if examples.is_empty() {
            return Err(ModelError::Data("training dataset has no moves".into()));
        }
        let opt = AdamW::new(model.tensors(), tconfig.beta1, tconfig.beta2, tconfig.eps, tconfig.weight_decay);
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(tconfig.seed);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut shuffle_rng);
        let dropout_rng = ChaCha8Rng::seed_from_u64(tconfig.seed ^ 0x5eed_d209);
        Ok(Trainer {
            model,
            tconfig,
            opt,
            examples,
            order,
            cursor: 0,
            shuffle_rng,
            dropout_rng,
            step: 0,
            dataset_hash: hex_digest(data.to_text().as_bytes()),
            history: Vec::new(),
            window: (0.0, 0),
            last_loss: f64::NAN,
        })
    }

    pub fn model(&self) -> &Transformer<T> {
        &self.model
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.tconfig.total_steps
    }

    pub fn history(&self) -> &[LossPoint] {
        &self.history
    }

    fn next_batch(&mut self) -> Batch {
        let bs = self.tconfig.batch_size.min(self.examples.len());
        let mut picked = Vec::with_capacity(bs);
        while picked.len() < bs {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.shuffle_rng);
                self.cursor = 0;
            }
            picked.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        let refs: Vec<&Example> = picked.iter().map(|&i| &self.examples[i]).collect();
        Batch::from_examples(&refs)
    }

    /// One optimizer update; returns the batch loss. Loss is averaged over
    /// each `eval_interval` window and recorded in the history.
    pub fn step(&mut self) -> f64 {
        let batch = self.next_batch();
        let p = self.model.config().dropout;
        let mut pass = Pass { dropout: Some((p, &mut self.dropout_rng)), keep_hidden: false };
        let (loss, mut grads) = self.model.loss_and_grad(&batch, &mut pass);
        clip_grad_norm(&mut grads, self.tconfig.gradient_clip_norm);
        let lr = self.tconfig.lr_at(self.step);
        self.opt.step(self.model.params_mut(), &grads, lr);
        self.step += 1;
        let loss = loss.as_f64();
        self.last_loss = loss;
        self.window.0 += loss;
        self.window.1 += 1;
        if self.step % self.tconfig.eval_interval == 0 || self.step == self.tconfig.total_steps {
            let mean = self.window.0 / self.window.1 as f64;
            self.window = (0.0, 0);
            self.history.push(LossPoint { step: self.step, loss: mean });
            log::info!("step {}/{} loss {:.4}", self.step, self.tconfig.total_steps, mean);
        }
        loss
    }

    pub fn finish(self) -> ModelCheckpoint<T> {
        let meta = TrainingMeta {
            dataset_hash: self.dataset_hash,
            steps: self.step,
            final_loss: self.history.last().map_or(self.last_loss, |p| p.loss),
            optimizer_state_hash: hex_digest(&self.opt.state_bytes()),
            loss_history: self.history,
        };
        ModelCheckpoint { model: self.model, meta }
    }
}

/// Trains a fresh model for `tconfig.total_steps` updates.
pub fn train<T: Scalar>(config: ModelConfig, tconfig: TrainConfig, data: &Dataset) -> Result<ModelCheckpoint<T>, ModelError> {
    train_with(config, tconfig, data, |_| {})
}

/// As [`train`], calling `on_log` at every logging point.
pub fn train_with<T: Scalar>(
    config: ModelConfig,
    tconfig: TrainConfig,
    data: &Dataset,
    mut on_log: impl FnMut(&LossPoint),
) -> Result<ModelCheckpoint<T>, ModelError> {
    let mut trainer = Trainer::<T>::new(config, tconfig, data)?;
    let mut seen = 0;
    while !trainer.is_done() {
        trainer.step();
        if trainer.history().len() > seen {
            seen = trainer.history().len();
            on_log(trainer.history().last().expect("nonempty"));
        }
    }
    Ok(trainer.finish())
}
