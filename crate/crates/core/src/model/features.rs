//! Per-step hidden representations and their binary file format.
//!
//! ```text
//! magic       8 bytes "OTHPFEAT"
//! version     u32     1
//! n, h        u64, u64
//! provenance  u32 length + UTF-8 key=value lines, then n × (u32 game, u32 step)
//! data        n × h little-endian f32, row-major
//! ```

use std::fs;
use std::path::Path;

use super::checkpoint::Reader;
use super::tokenizer::encode_game;
use super::transformer::{Batch, Example, Pass, Transformer};
use super::ModelError;
use crate::engine::Dataset;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub const FEATURE_MAGIC: &[u8; 8] = b"OTHPFEAT";

/// Where each row came from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeatureMeta {
    pub model_id: String,
    pub layer: usize,
    pub dataset_id: String,
    /// Comma-separated preprocessing flags, e.g. `center,unit_norm`.
    pub flags: String,
    /// `(game index, step index)` per row; steps are 1-based.
    pub rows: Vec<(u32, u32)>,
}

/// `n × h` matrix of step representations.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    pub data: Matrix<T>,
    pub meta: FeatureMeta,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(data: Matrix<T>, meta: FeatureMeta) -> Self {
        assert_eq!(data.rows(), meta.rows.len(), "one provenance entry per row");
        FeatureMatrix { data, meta }
    }

    /// Unlabeled features (provenance `(0, i + 1)`).
    pub fn from_matrix(data: Matrix<T>) -> Self {
        let rows = (0..data.rows()).map(|i| (0, i as u32 + 1)).collect();
        FeatureMatrix { data, meta: FeatureMeta { rows, ..Default::default() } }
    }

    pub fn n(&self) -> usize {
        self.data.rows()
    }

    pub fn h(&self) -> usize {
        self.data.cols()
    }

    /// Rows whose game index satisfies `keep`.
    pub fn filter_games(&self, mut keep: impl FnMut(u32) -> bool) -> FeatureMatrix<T> {
        let idx: Vec<usize> = (0..self.n()).filter(|&i| keep(self.meta.rows[i].0)).collect();
        self.select(&idx)
    }

    pub fn select(&self, idx: &[usize]) -> FeatureMatrix<T> {
        FeatureMatrix {
            data: self.data.select_rows(idx),
            meta: FeatureMeta { rows: idx.iter().map(|&i| self.meta.rows[i]).collect(), ..self.meta.clone() },
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.n() * (self.h() * 4 + 8) + 256);
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&(self.n() as u64).to_le_bytes());
        out.extend_from_slice(&(self.h() as u64).to_le_bytes());
        let text = format!(
            "model_id={}\nlayer={}\ndataset_id={}\nflags={}\n",
            self.meta.model_id, self.meta.layer, self.meta.dataset_id, self.meta.flags
        );
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        for &(g, s) in &self.meta.rows {
            out.extend_from_slice(&g.to_le_bytes());
            out.extend_from_slice(&s.to_le_bytes());
        }
        for &v in self.data.as_slice() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != FEATURE_MAGIC {
            return Err(ModelError::Format("not a feature file".into()));
        }
        let version = r.u32()?;
        if version != 1 {
            return Err(ModelError::Format(format!("unsupported feature version {version}")));
        }
        let n = r.u64()? as usize;
        let h = r.u64()? as usize;
        let mut meta = FeatureMeta::default();
        for line in r.text_block()?.lines() {
            match line.split_once('=') {
                Some(("model_id", v)) => meta.model_id = v.to_string(),
                Some(("layer", v)) => {
                    meta.layer = v.parse().map_err(|_| ModelError::Format("bad layer".into()))?
                }
                Some(("dataset_id", v)) => meta.dataset_id = v.to_string(),
                Some(("flags", v)) => meta.flags = v.to_string(),
                _ => {}
            }
        }
        meta.rows = (0..n).map(|_| Ok((r.u32()?, r.u32()?))).collect::<Result<_, ModelError>>()?;
        let raw = r.take(n * h * 4)?;
        let data = raw.chunks_exact(4).map(|c| T::lit(f32::read_le(c) as f64)).collect();
        if r.pos != bytes.len() {
            return Err(ModelError::Format("trailing bytes in feature file".into()));
        }
        Ok(FeatureMatrix { data: Matrix::from_vec(n, h, data), meta })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

const EXTRACT_BATCH: usize = 32;

/// Hidden state at the final prefix position for every game step, from
/// every decoder layer. Element `l` of the result holds layer `l`.
pub fn extract_all_layers<T: Scalar>(model: &Transformer<T>, games: &Dataset) -> Vec<FeatureMatrix<T>> {
    let cfg = model.config();
    let d = cfg.hidden_dim;
    let layers = cfg.layers;
    let mut data: Vec<Vec<T>> = vec![Vec::new(); layers];
    let mut rows = Vec::new();
    // Each job is (game, example, positions to read → step).
    let mut jobs: Vec<(u32, Example, Vec<(usize, u32)>)> = Vec::new();
    for (g, game) in games.games.iter().enumerate() {
        let n = game.len();
        if n == 0 {
            continue;
        }
        let tokens = encode_game(game);
        if cfg.is_encoder_decoder() {
            jobs.push((g as u32, model.prefix_example(&tokens[..1]), vec![(0, 1)]));
            if n >= 2 {
                let ex = model.prefix_example(&tokens[..n]);
                jobs.push((g as u32, ex, (0..n - 1).map(|p| (p, p as u32 + 2)).collect()));
            }
        } else {
            jobs.push((g as u32, model.prefix_example(&tokens[..n]), (0..n).map(|p| (p, p as u32 + 1)).collect()));
        }
    }
    for chunk in jobs.chunks(EXTRACT_BATCH) {
        let refs: Vec<&Example> = chunk.iter().map(|j| &j.1).collect();
        let batch = Batch::from_examples(&refs);
        let trace = model.forward(&batch, &mut Pass::with_hidden());
        for (bi, (g, _, picks)) in chunk.iter().enumerate() {
            for &(p, step) in picks {
                let row = bi * batch.t + p;
                for (l, out) in data.iter_mut().enumerate() {
                    let h = trace.hidden(l).expect("hidden states kept");
                    out.extend_from_slice(&h[row * d..(row + 1) * d]);
                }
                rows.push((*g, step));
            }
        }
    }
    // Encoder-decoder jobs emit step 1 before steps 2..n of the same game,
    // so rows are already (game, step) ordered.
    let n = rows.len();
    data.into_iter()
        .enumerate()
        .map(|(layer, buf)| FeatureMatrix {
            data: Matrix::from_vec(n, d, buf),
            meta: FeatureMeta { layer, rows: rows.clone(), ..Default::default() },
        })
        .collect()
}

/// Features of one decoder layer.
pub fn extract_features<T: Scalar>(
    model: &Transformer<T>,
    games: &Dataset,
    layer: usize,
) -> Result<FeatureMatrix<T>, ModelError> {
    if layer >= model.config().layers {
        return Err(ModelError::Layer { layer, layers: model.config().layers });
    }
    Ok(extract_all_layers(model, games).swap_remove(layer))
}
