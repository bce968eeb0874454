//! Decoder-only and encoder-decoder next-move transformers.

mod checkpoint;
mod config;
mod features;
mod infer;
mod ops;
mod optim;
mod params;
mod tokenizer;
mod train;
mod transformer;

use thiserror::Error;

pub use checkpoint::{ModelCheckpoint, TrainingMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{Architecture, ModelConfig, TrainConfig};
pub use features::{extract_all_layers, extract_features, FeatureMatrix, FeatureMeta, FEATURE_MAGIC};
pub use infer::{argmax, move_softmax};
pub use optim::{clip_grad_norm, AdamW};
pub use params::TensorInfo;
pub use tokenizer::{decode, encode_game, encode_moves, tile_of, token_of, Token, BOS, MOVE_TOKENS, PAD, VOCAB_SIZE};
pub use train::{train, train_with, LossPoint, Trainer};
pub use transformer::{Example, Transformer};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("invalid training data: {0}")]
    Data(String),
    #[error("sequence of length {len} exceeds maximum {max}")]
    Length { len: usize, max: usize },
    #[error("invalid prefix: {0}")]
    Prefix(String),
    #[error("layer {layer} out of range (model has {layers})")]
    Layer { layer: usize, layers: usize },
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
