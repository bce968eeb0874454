//! Orthogonal alignment of hidden representations across models.

mod adversarial;
mod csls;
mod heatmap;
mod map;
mod procrustes;

use thiserror::Error;

use crate::linalg::{cosine, Matrix};
use crate::model::FeatureMatrix;
use crate::scalar::Scalar;

pub use adversarial::{align_unsupervised, Discriminator, UnsupervisedOptions};
pub use csls::{build_dictionary, csls_translation_score, CslsOptions};
pub use heatmap::{blue_ramp, layer_similarity_matrix, HeatmapGrid, HeatmapOptions};
pub use map::{AlignMode, AlignmentMap, ALIGN_MAGIC};
pub use procrustes::{align_supervised, procrustes_fit, SupervisedOptions};

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("row {0} is zero after centering")]
    DegenerateRow(usize),
    #[error("degenerate cross-covariance: {0}")]
    Rank(String),
    #[error("no mutual nearest neighbours (iteration {iteration})")]
    EmptyDictionary { iteration: usize },
    #[error("discriminator accuracy stayed at or above {threshold} for {patience} windows")]
    Collapse { threshold: f64, patience: usize },
    #[error("invalid alignment configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("malformed alignment file: {0}")]
    Format(String),
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<AlignError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl AlignError {
    fn at(self, iteration: usize) -> AlignError {
        match self {
            AlignError::AtIteration { .. } | AlignError::EmptyDictionary { .. } => self,
            other => AlignError::AtIteration { iteration, source: Box::new(other) },
        }
    }
}

/// How a pair list was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DictSource {
    Given,
    CslsMutualNn,
}

/// `(source row, target row)` pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairDictionary {
    pub pairs: Vec<(usize, usize)>,
    pub construction: DictSource,
}

impl PairDictionary {
    /// Row `i` with row `i`.
    pub fn identity(n: usize) -> Self {
        PairDictionary { pairs: (0..n).map(|i| (i, i)).collect(), construction: DictSource::Given }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Per-pair cosines after mapping, plus the unaligned (identity map) score.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityReport {
    pub mean_cosine: f64,
    pub per_pair: Vec<f64>,
    pub pairs: usize,
    pub baseline_mean_cosine: f64,
}

impl SimilarityReport {
    /// Scores `src·W` against `tgt` row by row.
    pub fn score<T: Scalar>(src: &Matrix<T>, tgt: &Matrix<T>, w: &Matrix<T>) -> SimilarityReport {
        assert_eq!(src.shape(), tgt.shape(), "held-out rows must be paired");
        let mapped = src.matmul(w);
        let per_pair: Vec<f64> = (0..src.rows()).map(|i| cosine(mapped.row(i), tgt.row(i)).as_f64()).collect();
        let baseline: f64 = (0..src.rows()).map(|i| cosine(src.row(i), tgt.row(i)).as_f64()).sum();
        let n = per_pair.len().max(1) as f64;
        SimilarityReport {
            mean_cosine: per_pair.iter().sum::<f64>() / n,
            pairs: per_pair.len(),
            per_pair,
            baseline_mean_cosine: baseline / n,
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "record=similarity mean_cosine={} baseline_mean_cosine={} pairs={}\n",
            self.mean_cosine, self.baseline_mean_cosine, self.pairs
        )
    }
}

/// Fitting rows and held-out scoring rows for both sides.
///
/// Scoring rows are paired by position; fitting rows are paired by position
/// only in supervised mode.
pub struct AlignData<'a, T> {
    pub fit_src: &'a Matrix<T>,
    pub fit_tgt: &'a Matrix<T>,
    pub eval_src: &'a Matrix<T>,
    pub eval_tgt: &'a Matrix<T>,
}

impl<T: Scalar> AlignData<'_, T> {
    fn check(&self) -> Result<usize, AlignError> {
        let h = self.fit_src.cols();
        for m in [self.fit_tgt, self.eval_src, self.eval_tgt] {
            if m.cols() != h {
                return Err(AlignError::Shape(format!("feature widths {h} and {} differ", m.cols())));
            }
        }
        if self.eval_src.rows() != self.eval_tgt.rows() {
            return Err(AlignError::Shape("held-out sets have different row counts".into()));
        }
        Ok(h)
    }
}

pub const PREPROCESS_FLAGS: &str = "center,unit_norm";

fn preprocess_matrix<T: Scalar>(f: &Matrix<T>) -> Result<Matrix<T>, AlignError> {
    if f.rows() < 2 {
        return Err(AlignError::Config("preprocessing needs at least 2 rows".into()));
    }
    let means = f.column_means();
    let mut out = f.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        for (v, &m) in row.iter_mut().zip(&means) {
            *v -= m;
        }
        let norm = row.iter().map(|&v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(AlignError::DegenerateRow(i));
        }
        let inv = T::lit(1.0 / norm);
        row.iter_mut().for_each(|v| *v *= inv);
    }
    Ok(out)
}

/// Centers columns, then scales every row to unit length.
pub fn preprocess<T: Scalar>(f: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>, AlignError> {
    let data = preprocess_matrix(&f.data)?;
    let mut meta = f.meta.clone();
    meta.flags = if meta.flags.is_empty() { PREPROCESS_FLAGS.to_string() } else { format!("{},{PREPROCESS_FLAGS}", meta.flags) };
    Ok(FeatureMatrix { data, meta })
}

/// Splits two provenance-matched feature matrices into fitting and held-out
/// parts by game index, and preprocesses each part independently.
pub fn split_and_preprocess<T: Scalar>(
    src: &FeatureMatrix<T>,
    tgt: &FeatureMatrix<T>,
    is_fit_game: impl Fn(u32) -> bool,
) -> Result<[Matrix<T>; 4], AlignError> {
    if src.meta.rows != tgt.meta.rows {
        return Err(AlignError::Shape("source and target rows have different provenance".into()));
    }
    let fit_idx: Vec<usize> = (0..src.n()).filter(|&i| is_fit_game(src.meta.rows[i].0)).collect();
    let eval_idx: Vec<usize> = (0..src.n()).filter(|&i| !is_fit_game(src.meta.rows[i].0)).collect();
    Ok([
        preprocess_matrix(&src.data.select_rows(&fit_idx))?,
        preprocess_matrix(&tgt.data.select_rows(&fit_idx))?,
        preprocess_matrix(&src.data.select_rows(&eval_idx))?,
        preprocess_matrix(&tgt.data.select_rows(&eval_idx))?,
    ])
}
