pub mod align;
pub mod engine;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod viz;

pub use scalar::{DType, Scalar};

pub type Model = model::Transformer<f32>;
pub type Model64 = model::Transformer<f64>;
pub type Checkpoint = model::ModelCheckpoint<f32>;
pub type Features = model::FeatureMatrix<f32>;
pub type Mat = linalg::Matrix<f32>;
pub type Alignment = align::AlignmentMap<f32>;
pub type Pca = viz::PcaResult<f32>;
