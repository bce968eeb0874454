//! PCA of step features and next-move board figures.

mod pca;
mod projection;
mod svg;

use thiserror::Error;

use crate::align::AlignError;
use crate::engine::EngineError;
use crate::model::ModelError;

pub use pca::{pca, PcaResult};
pub use projection::{latent_move_projection, project_game, BoardProjection, ProjectionPlot};
pub use svg::{board_svg, render_board_svg};

#[derive(Debug, Error)]
pub enum VizError {
    #[error("PCA dimension {d} outside 1..={max}")]
    Dim { d: usize, max: usize },
    #[error("prefix does not replay: {0}")]
    IllegalPrefix(#[source] EngineError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
