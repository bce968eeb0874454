use std::fmt::Write as _;

use super::report::{write_table, TableRow};
use super::{eval_hop, EvalError};
use crate::engine::Dataset;
use crate::model::{ModelCheckpoint, ModelConfig, ModelError};
use crate::scalar::Scalar;

/// Parses `2k`, `200k`, `1m` or a plain count.
pub fn parse_scale(text: &str) -> Result<usize, EvalError> {
    let t = text.trim().to_ascii_lowercase();
    let (digits, mult) = match t.as_bytes().last() {
        Some(b'k') => (&t[..t.len() - 1], 1_000),
        Some(b'm') => (&t[..t.len() - 1], 1_000_000),
        _ => (&t[..], 1),
    };
    match digits.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n * mult),
        _ => Err(EvalError::Scale(text.to_string())),
    }
}

/// One data scale of a sweep: train on the first `games` training games for
/// `total_steps` updates.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSpec {
    pub label: String,
    pub games: usize,
    pub total_steps: usize,
}

/// What the caller is asked to train (or load) for one table cell.
pub struct SweepCell<'a> {
    pub model: &'a str,
    pub config: &'a ModelConfig,
    pub scale: &'a ScaleSpec,
    pub train: Dataset,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub rows: Vec<TableRow>,
}

impl SweepTable {
    pub fn to_text(&self) -> String {
        write_table(&self.rows)
    }

    pub fn row(&self, model: &str, scale: &str, hop: u8) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.model == model && r.scale == scale && r.hop == hop)
    }
}

/// Plot data: one point per line, `model hop games rate`.
pub fn sweep_plot_data(table: &SweepTable, scales: &[ScaleSpec]) -> String {
    let mut out = String::from("# model hop games rate\n");
    for r in &table.rows {
        if let (Some(rep), Some(s)) = (&r.report, scales.iter().find(|s| s.label == r.scale)) {
            writeln!(out, "{} {} {} {:.6}", r.model, r.hop, s.games, rep.error_rate).unwrap();
        }
    }
    out
}

/// Trains (through `provide`) and evaluates every `(config, scale)` cell.
/// A failing cell is recorded in the table and the sweep continues.
pub fn sweep<T: Scalar>(
    configs: &[(String, ModelConfig)],
    scales: &[ScaleSpec],
    hops: &[u8],
    train_pool: &Dataset,
    test: &Dataset,
    mut provide: impl FnMut(&SweepCell) -> Result<ModelCheckpoint<T>, ModelError>,
) -> Result<SweepTable, EvalError> {
    if scales.windows(2).any(|w| w[0].games >= w[1].games) {
        return Err(EvalError::ScaleOrder);
    }
    let mut table = SweepTable::default();
    for (name, config) in configs {
        for scale in scales {
            let outcome = if scale.games > train_pool.len() {
                Err(format!("scale {} needs {} training games, have {}", scale.label, scale.games, train_pool.len()))
            } else {
                let cell = SweepCell { model: name, config, scale, train: train_pool.subset(0..scale.games) };
                provide(&cell).map_err(|e| e.to_string())
            };
            if let Err(e) = &outcome {
                log::warn!("sweep cell {name}/{} failed: {e}", scale.label);
            }
            for &hop in hops {
                let (report, error) = match &outcome {
                    Ok(ckpt) => (Some(eval_hop(&ckpt.model, test, hop, &ckpt.content_hash())), None),
                    Err(e) => (None, Some(e.clone())),
                };
                table.rows.push(TableRow { model: name.clone(), scale: scale.label.clone(), hop, report, error });
            }
        }
    }
    Ok(table)
}
