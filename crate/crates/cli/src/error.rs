use std::path::PathBuf;

use othello_probe::align::AlignError;
use othello_probe::engine::EngineError;
use othello_probe::eval::EvalError;
use othello_probe::model::ModelError;
use othello_probe::viz::VizError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("manifest field `{path}`: {message}")]
    Manifest { path: String, message: String },
    #[error("missing {0}: run the producing command first (expected {1})")]
    MissingArtifact(&'static str, PathBuf),
    #[error("{0} already exists with different contents")]
    Conflict(PathBuf),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Viz(#[from] VizError),
}
