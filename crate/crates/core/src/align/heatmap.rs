use std::fmt::Write as _;

use rayon::prelude::*;

use super::adversarial::{align_unsupervised, UnsupervisedOptions};
use super::map::AlignMode;
use super::procrustes::{align_supervised, SupervisedOptions};
use super::{split_and_preprocess, AlignData, AlignError};
use crate::model::FeatureMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Default)]
pub struct HeatmapOptions {
    pub supervised: SupervisedOptions,
    pub unsupervised: UnsupervisedOptions,
}

/// Held-out similarity for every (layer of A, layer of B) pair. Failed
/// cells are `None` with the message kept in `errors`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
    pub errors: Vec<(usize, usize, String)>,
}

impl HeatmapGrid {
    pub fn shape(&self) -> (usize, usize) {
        (self.row_labels.len(), self.col_labels.len())
    }

    /// 1-based rank of a cell among all present cells (1 = highest).
    pub fn rank_of(&self, row: usize, col: usize) -> Option<usize> {
        let v = self.values[row][col]?;
        Some(1 + self.values.iter().flatten().flatten().filter(|&&x| x > v).count())
    }

    /// Tab-separated grid with a header row; missing cells are `NA`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("layer");
        for c in &self.col_labels {
            write!(out, "\t{c}").unwrap();
        }
        out.push('\n');
        for (label, row) in self.row_labels.iter().zip(&self.values) {
            out.push_str(label);
            for v in row {
                match v {
                    Some(v) => write!(out, "\t{v:.6}").unwrap(),
                    None => out.push_str("\tNA"),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Grid of cells shaded on a fixed white-to-blue ramp over `[0, 1]`.
    pub fn to_svg(&self) -> String {
        const CELL: usize = 60;
        const MARGIN: usize = 70;
        let (r, c) = self.shape();
        let (w, h) = (MARGIN + c * CELL + 10, MARGIN + r * CELL + 10);
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect id=\"background\" x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>\n"
        );
        for (j, label) in self.col_labels.iter().enumerate() {
            let x = MARGIN + j * CELL + CELL / 2;
            writeln!(s, "<text class=\"col-label\" x=\"{x}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{label}</text>", MARGIN - 10).unwrap();
        }
        for (i, label) in self.row_labels.iter().enumerate() {
            let y = MARGIN + i * CELL + CELL / 2 + 4;
            writeln!(s, "<text class=\"row-label\" x=\"{}\" y=\"{y}\" text-anchor=\"end\" font-size=\"12\">{label}</text>", MARGIN - 8).unwrap();
            for (j, v) in self.values[i].iter().enumerate() {
                let (x, y0) = (MARGIN + j * CELL, MARGIN + i * CELL);
                let (fill, text) = match v {
                    Some(v) => (blue_ramp(*v), format!("{v:.3}")),
                    None => ("#cccccc".to_string(), "NA".to_string()),
                };
                writeln!(
                    s,
                    "<rect id=\"cell-{i}-{j}\" x=\"{x}\" y=\"{y0}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{fill}\" stroke=\"#000000\" stroke-width=\"1\"/>"
                )
                .unwrap();
                writeln!(
                    s,
                    "<text class=\"cell-value\" x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{text}</text>",
                    x + CELL / 2,
                    y0 + CELL / 2 + 4
                )
                .unwrap();
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

/// `#ffffff` at 0 to `#08306b` at 1, linear per channel; inputs are clamped.
pub fn blue_ramp(v: f64) -> String {
    let t = v.clamp(0.0, 1.0);
    let ch = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(255.0, 8.0), ch(255.0, 48.0), ch(255.0, 107.0))
}

/// Aligns every layer of A with every layer of B and records the held-out
/// similarity. Fitting and scoring rows are split by game index.
pub fn layer_similarity_matrix<T: Scalar>(
    layers_a: &[FeatureMatrix<T>],
    layers_b: &[FeatureMatrix<T>],
    is_fit_game: impl Fn(u32) -> bool + Sync,
    mode: AlignMode,
    opts: &HeatmapOptions,
) -> Result<HeatmapGrid, AlignError> {
    if layers_a.len() < 2 || layers_b.len() < 2 {
        return Err(AlignError::Config("heatmaps need at least 2 layers per model".into()));
    }
    let cells: Vec<(usize, usize)> =
        (0..layers_a.len()).flat_map(|i| (0..layers_b.len()).map(move |j| (i, j))).collect();
    let results: Vec<Result<f64, AlignError>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let [fs, ft, es, et] = split_and_preprocess(&layers_a[i], &layers_b[j], &is_fit_game)?;
            let data = AlignData { fit_src: &fs, fit_tgt: &ft, eval_src: &es, eval_tgt: &et };
            let report = match mode {
                AlignMode::Supervised => align_supervised(&data, &opts.supervised)?.1,
                AlignMode::Unsupervised => {
                    let cell_opts = UnsupervisedOptions {
                        seed: opts.unsupervised.seed ^ ((i as u64) << 32 | j as u64),
                        ..opts.unsupervised.clone()
                    };
                    align_unsupervised(&data, &cell_opts)?.1
                }
            };
            Ok(report.mean_cosine)
        })
        .collect();
    let mut grid = HeatmapGrid {
        row_labels: (0..layers_a.len()).map(|i| format!("A.L{i}")).collect(),
        col_labels: (0..layers_b.len()).map(|j| format!("B.L{j}")).collect(),
        values: vec![vec![None; layers_b.len()]; layers_a.len()],
        errors: Vec::new(),
    };
    for (&(i, j), r) in cells.iter().zip(results) {
        match r {
            Ok(v) => grid.values[i][j] = Some(v),
            Err(e) => grid.errors.push((i, j, e.to_string())),
        }
    }
    Ok(grid)
}
