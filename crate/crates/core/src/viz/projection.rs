use std::fmt::Write as _;

use crate::align::{preprocess, procrustes_fit, AlignmentMap, PairDictionary};
use crate::engine::{Board, Dataset, GameRecord, SourceTag, Tile, TILE_COUNT};
use crate::linalg::{cosine, Matrix};
use crate::model::{encode_moves, extract_all_layers, token_of, Transformer};
use crate::scalar::Scalar;

use super::pca::{pca, PcaResult};
use super::VizError;

/// Next-move distribution after one prefix, with the tiles whose input
/// embeddings sit closest to the top candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct BoardProjection {
    pub prefix: GameRecord,
    /// Board after replaying `prefix`.
    pub board: Board,
    /// Indexed by tile id.
    pub probabilities: Vec<f64>,
    pub top5: Vec<(Tile, f64)>,
    pub top_candidate: Tile,
    /// `(tile, cosine)` by descending cosine; never contains `top_candidate`.
    pub nearest3: Vec<(Tile, f64)>,
    pub legality_mask: Vec<bool>,
}

impl BoardProjection {
    pub fn top_is_legal(&self) -> bool {
        self.legality_mask[self.top_candidate.index()]
    }

    /// One `key=value` record per line.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "record=projection prefix={} top_candidate={} top_legal={}\n",
            if self.prefix.is_empty() { "-".to_string() } else { self.prefix.labels().replace(' ', ",") },
            self.top_candidate,
            self.top_is_legal()
        );
        for (rank, (t, p)) in self.top5.iter().enumerate() {
            writeln!(s, "record=top5 rank={} tile={t} probability={p:.6} legal={}", rank + 1, self.legality_mask[t.index()])
                .unwrap();
        }
        for (rank, (t, c)) in self.nearest3.iter().enumerate() {
            writeln!(s, "record=nearest rank={} tile={t} cosine={c:.6}", rank + 1).unwrap();
        }
        s
    }
}

/// Indices of the `k` largest values, ties broken by lower index.
fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub fn latent_move_projection<T: Scalar>(
    model: &Transformer<T>,
    prefix: &GameRecord,
) -> Result<BoardProjection, VizError> {
    let board = prefix.replay().map_err(VizError::IllegalPrefix)?;
    let probabilities: Vec<f64> =
        model.next_move_distribution(&encode_moves(&prefix.moves))?.iter().map(|p| p.as_f64()).collect();
    let tile = |i: usize| Tile::from_index(i).expect("move index");
    let top5: Vec<(Tile, f64)> = top_k(&probabilities, 5).into_iter().map(|i| (tile(i), probabilities[i])).collect();
    let top_candidate = top5[0].0;
    let anchor = model.token_embedding(token_of(top_candidate));
    let mut sims: Vec<f64> = (0..TILE_COUNT)
        .map(|i| cosine(anchor, model.token_embedding(token_of(tile(i)))).as_f64())
        .collect();
    sims[top_candidate.index()] = f64::NEG_INFINITY;
    let nearest3 = top_k(&sims, 3).into_iter().map(|i| (tile(i), sims[i])).collect();
    let legal = board.legal_mask();
    let legality_mask = Tile::all().map(|t| legal & t.bit() != 0).collect();
    Ok(BoardProjection { prefix: prefix.clone(), board, probabilities, top5, top_candidate, nearest3, legality_mask })
}

/// Both models' step features for one game in a shared PCA basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPlot<T> {
    pub labels: [String; 2],
    /// Rows `0..n` are model A steps `1..=n`, rows `n..2n` model B.
    pub pca: PcaResult<T>,
    pub steps: usize,
    /// Mean distance between matching steps after mapping, before PCA.
    pub mean_step_distance: f64,
}

impl<T: Scalar> ProjectionPlot<T> {
    /// `model step x y [z …]`, one point per line after a `#` header.
    pub fn to_text(&self) -> String {
        let d = self.pca.d();
        let axes = ["x", "y", "z"];
        let names: Vec<String> = (0..d).map(|k| axes.get(k).map_or(format!("c{k}"), |a| a.to_string())).collect();
        let mut s = format!("# model step {}\n", names.join(" "));
        for (m, label) in self.labels.iter().enumerate() {
            for step in 0..self.steps {
                let row = self.pca.projected.row(m * self.steps + step);
                write!(s, "{label} {}", step + 1).unwrap();
                for v in row {
                    write!(s, " {:.6}", v.as_f64()).unwrap();
                }
                s.push('\n');
            }
        }
        s
    }
}

fn last_layer_steps<T: Scalar>(model: &Transformer<T>, game: &GameRecord) -> Result<Matrix<T>, VizError> {
    let data = Dataset::new(vec![game.clone()], SourceTag::Other);
    let layers = extract_all_layers(model, &data);
    let last = layers.into_iter().last().expect("at least one layer");
    Ok(preprocess(&last)?.data)
}

/// Maps model B's step features onto model A's with `map` (or, when absent,
/// a Procrustes fit on this game's own steps) and runs PCA on the union.
/// Features are centered and unit-normalized per model first.
pub fn project_game<T: Scalar>(
    a: (&str, &Transformer<T>),
    b: (&str, &Transformer<T>),
    game: &GameRecord,
    d: usize,
    map: Option<&AlignmentMap<T>>,
) -> Result<ProjectionPlot<T>, VizError> {
    if game.len() < 2 {
        return Err(VizError::Dim { d, max: 0 });
    }
    game.replay().map_err(VizError::IllegalPrefix)?;
    let fa = last_layer_steps(a.1, game)?;
    let fb = last_layer_steps(b.1, game)?;
    let mapped = match map {
        Some(m) => {
            if m.h() != fb.cols() || fa.cols() != fb.cols() {
                return Err(VizError::Shape(format!(
                    "map width {} vs feature widths {} and {}",
                    m.h(),
                    fa.cols(),
                    fb.cols()
                )));
            }
            m.apply(&fb)
        }
        None => {
            if fa.cols() != fb.cols() {
                return Err(VizError::Shape(format!("feature widths {} and {} differ", fa.cols(), fb.cols())));
            }
            fb.matmul(&procrustes_fit(&fb, &fa, &PairDictionary::identity(fb.rows()))?)
        }
    };
    let n = fa.rows();
    let mean_step_distance = (0..n)
        .map(|i| fa.row(i).iter().zip(mapped.row(i)).map(|(&x, &y)| (x - y).as_f64().powi(2)).sum::<f64>().sqrt())
        .sum::<f64>()
        / n as f64;
    let mut joint = fa.as_slice().to_vec();
    joint.extend_from_slice(mapped.as_slice());
    let joint = Matrix::from_vec(2 * n, fa.cols(), joint);
    Ok(ProjectionPlot {
        labels: [a.0.to_string(), b.0.to_string()],
        pca: pca(&joint, d)?,
        steps: n,
        mean_step_distance,
    })
}
