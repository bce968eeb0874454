//! TOML experiment manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use othello_probe::align::{AlignMode, SupervisedOptions, UnsupervisedOptions};
use othello_probe::eval::parse_scale;
use othello_probe::model::{ModelConfig, TrainConfig};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub models: BTreeMap<String, ModelConfig>,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub align: AlignSection,
    #[serde(default)]
    pub viz: VizSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Games file to ingest instead of generating.
    pub path: Option<PathBuf>,
    pub count: usize,
    pub seed: u64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection { path: None, count: 20_000, seed: 0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub hops: Vec<u8>,
    /// Leading test games to score; 0 scores the whole test split.
    pub test_games: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { hops: vec![1, 2], test_games: 0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignSection {
    /// Model whose features are mapped. Defaults to the second model.
    pub source: Option<String>,
    /// Defaults to the first model.
    pub target: Option<String>,
    pub modes: Vec<String>,
    /// Leading test games whose step features are aligned.
    pub feature_games: usize,
    /// `[source layer, target layer]`; defaults to the last layers.
    pub layers: Option<[usize; 2]>,
    pub heatmap: bool,
    pub supervised_refinement_iters: usize,
    pub adversarial_iters: usize,
    pub refinement_iters: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for AlignSection {
    fn default() -> Self {
        let u = UnsupervisedOptions::default();
        AlignSection {
            source: None,
            target: None,
            modes: vec!["supervised".into(), "unsupervised".into()],
            feature_games: 500,
            layers: None,
            heatmap: false,
            supervised_refinement_iters: SupervisedOptions::default().refinement_iters,
            adversarial_iters: u.adversarial_iters,
            refinement_iters: u.refinement_iters,
            restarts: u.restarts,
            seed: u.seed,
        }
    }
}

impl AlignSection {
    pub fn supervised(&self) -> SupervisedOptions {
        SupervisedOptions { refinement_iters: self.supervised_refinement_iters, ..Default::default() }
    }

    pub fn unsupervised(&self) -> UnsupervisedOptions {
        UnsupervisedOptions {
            adversarial_iters: self.adversarial_iters,
            refinement_iters: self.refinement_iters,
            restarts: self.restarts,
            seed: self.seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VizSection {
    /// Board figures for evenly spaced prefixes of the chosen test game.
    pub projections: usize,
    pub pca_dim: usize,
    /// Test game index used for figures.
    pub game: usize,
}

impl Default for VizSection {
    fn default() -> Self {
        VizSection { projections: 1, pca_dim: 2, game: 0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Training-set sizes such as `"2k"`, ascending.
    pub scales: Vec<String>,
    /// Optimizer steps per scale.
    pub steps: Vec<usize>,
    #[serde(default = "default_hops")]
    pub hops: Vec<u8>,
}

fn default_hops() -> Vec<u8> {
    vec![1, 2]
}

fn field(path: impl Into<String>, message: impl ToString) -> CliError {
    CliError::Manifest { path: path.into(), message: message.to_string() }
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Manifest, CliError> {
        let de = toml::Deserializer::new(text);
        let m: Manifest = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            field(if path == "." { String::new() } else { path }, inner.message())
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<(Manifest, String), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
        Ok((Manifest::parse(&text)?, text))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.dataset.path.is_none() && self.dataset.count == 0 {
            return Err(field("dataset.count", "must be positive"));
        }
        self.train.validate().map_err(|e| field("train", e))?;
        for (name, cfg) in &self.models {
            cfg.validate().map_err(|e| field(format!("models.{name}"), e))?;
        }
        for (i, h) in self.eval.hops.iter().enumerate() {
            if !matches!(h, 1 | 2) {
                return Err(field(format!("eval.hops[{i}]"), "hop must be 1 or 2"));
            }
        }
        for (i, m) in self.align.modes.iter().enumerate() {
            m.parse::<AlignMode>().map_err(|e| field(format!("align.modes[{i}]"), e))?;
        }
        for (key, name) in [("align.source", &self.align.source), ("align.target", &self.align.target)] {
            if let Some(n) = name {
                if !self.models.contains_key(n) {
                    return Err(field(key, format!("no model named {n:?}")));
                }
            }
        }
        if self.align.feature_games < 2 {
            return Err(field("align.feature_games", "need at least 2 games"));
        }
        if !(1..=3).contains(&self.viz.pca_dim) {
            return Err(field("viz.pca_dim", "must be 1, 2 or 3"));
        }
        if let Some(s) = &self.sweep {
            if s.scales.is_empty() {
                return Err(field("sweep.scales", "must not be empty"));
            }
            for (i, label) in s.scales.iter().enumerate() {
                parse_scale(label).map_err(|e| field(format!("sweep.scales[{i}]"), e))?;
            }
            if s.steps.len() != s.scales.len() {
                return Err(field("sweep.steps", format!("need one entry per scale ({})", s.scales.len())));
            }
            if let Some(i) = s.steps.iter().position(|&n| n == 0) {
                return Err(field(format!("sweep.steps[{i}]"), "must be positive"));
            }
            for (i, h) in s.hops.iter().enumerate() {
                if !matches!(h, 1 | 2) {
                    return Err(field(format!("sweep.hops[{i}]"), "hop must be 1 or 2"));
                }
            }
        }
        Ok(())
    }

    /// Models in manifest order, or a single decoder with defaults.
    pub fn model_list(&self) -> Vec<(String, ModelConfig)> {
        if self.models.is_empty() {
            return vec![("decoder".into(), ModelConfig::decoder_default())];
        }
        self.models.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }

    pub fn modes(&self) -> Vec<AlignMode> {
        self.align.modes.iter().map(|m| m.parse().expect("validated")).collect()
    }

    /// `(source, target)` model names for alignment.
    pub fn align_pair(&self) -> Result<(String, String), CliError> {
        let names: Vec<String> = self.model_list().into_iter().map(|(n, _)| n).collect();
        let target = self.align.target.clone().unwrap_or_else(|| names[0].clone());
        let source = match &self.align.source {
            Some(s) => s.clone(),
            None => names
                .iter()
                .find(|n| **n != target)
                .cloned()
                .ok_or_else(|| field("models", "alignment needs two models"))?,
        };
        Ok((source, target))
    }
}
