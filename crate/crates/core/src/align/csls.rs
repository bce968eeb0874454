use rayon::prelude::*;

use super::{AlignError, DictSource, PairDictionary};
use crate::linalg::{gemm_into, Matrix, MatRef};
use crate::scalar::Scalar;

/// Options for CSLS dictionary construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CslsOptions {
    /// Neighbourhood size for the hubness penalty.
    pub k: usize,
    /// Rows per side considered when building a dictionary; larger inputs
    /// are subsampled with an even stride.
    pub max_rows: usize,
}

impl Default for CslsOptions {
    fn default() -> Self {
        CslsOptions { k: 10, max_rows: 10_000 }
    }
}

const BLOCK: usize = 512;

fn strided(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        (0..n).collect()
    } else {
        (0..max).map(|i| i * n / max).collect()
    }
}

/// Mean of the `k` largest similarities of every row of `a` against `b`.
fn mean_topk<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, k: usize) -> Vec<f64> {
    let (nb, h) = (b.rows(), b.cols());
    let k = k.min(nb).max(1);
    let starts: Vec<usize> = (0..a.rows()).step_by(BLOCK).collect();
    starts
        .par_iter()
        .flat_map_iter(|&start| {
            let rows = BLOCK.min(a.rows() - start);
            let mut sims = vec![T::zero(); rows * nb];
            let av = MatRef::new(a.as_slice(), start * h, rows, h, h, 1);
            gemm_into(T::one(), av, b.t(), T::zero(), &mut sims, nb);
            let mut top = Vec::with_capacity(k + 1);
            (0..rows)
                .map(|r| {
                    top.clear();
                    for &s in &sims[r * nb..(r + 1) * nb] {
                        let s = s.as_f64();
                        if top.len() < k || s > top[k - 1] {
                            let pos = top.partition_point(|&t| t >= s);
                            top.insert(pos, s);
                            top.truncate(k);
                        }
                    }
                    top.iter().sum::<f64>() / top.len() as f64
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn better(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

struct Neighbours {
    si: Vec<usize>,
    ti: Vec<usize>,
    /// CSLS-best target (subsample index) and its cosine, per source row.
    fwd: Vec<(usize, f64)>,
    /// CSLS-best source (subsample index), per target row.
    bwd: Vec<usize>,
}

fn neighbours<T: Scalar>(mapped_src: &Matrix<T>, tgt: &Matrix<T>, opts: &CslsOptions) -> Result<Neighbours, AlignError> {
    if mapped_src.cols() != tgt.cols() {
        return Err(AlignError::Shape("feature widths differ".into()));
    }
    if opts.k == 0 || opts.max_rows == 0 {
        return Err(AlignError::Config("CSLS k and max_rows must be positive".into()));
    }
    let si = strided(mapped_src.rows(), opts.max_rows);
    let ti = strided(tgt.rows(), opts.max_rows);
    if si.is_empty() || ti.is_empty() {
        return Err(AlignError::EmptyDictionary { iteration: 0 });
    }
    let x = mapped_src.select_rows(&si);
    let y = tgt.select_rows(&ti);
    let (nx, ny, h) = (x.rows(), y.rows(), x.cols());
    let rx = mean_topk(&x, &y, opts.k);
    let ry = mean_topk(&y, &x, opts.k);

    let starts: Vec<usize> = (0..nx).step_by(BLOCK).collect();
    let blocks: Vec<(Vec<(usize, f64)>, Vec<(f64, usize)>)> = starts
        .par_iter()
        .map(|&start| {
            let rows = BLOCK.min(nx - start);
            let mut sims = vec![T::zero(); rows * ny];
            let xv = MatRef::new(x.as_slice(), start * h, rows, h, h, 1);
            gemm_into(T::one(), xv, y.t(), T::zero(), &mut sims, ny);
            let mut col_best = vec![(f64::NEG_INFINITY, usize::MAX); ny];
            let row_best = (0..rows)
                .map(|r| {
                    let i = start + r;
                    let mut best = (f64::NEG_INFINITY, usize::MAX);
                    let row = &sims[r * ny..(r + 1) * ny];
                    for (j, &s) in row.iter().enumerate() {
                        let c = 2.0 * s.as_f64() - rx[i] - ry[j];
                        if better((c, j), best) {
                            best = (c, j);
                        }
                        if better((c, i), col_best[j]) {
                            col_best[j] = (c, i);
                        }
                    }
                    (best.1, row[best.1].as_f64())
                })
                .collect();
            (row_best, col_best)
        })
        .collect();
    let mut fwd = Vec::with_capacity(nx);
    let mut bwd = vec![(f64::NEG_INFINITY, usize::MAX); ny];
    for (rows, cols) in blocks {
        fwd.extend(rows);
        for (b, c) in bwd.iter_mut().zip(cols) {
            if better(c, *b) {
                *b = c;
            }
        }
    }
    Ok(Neighbours { si, ti, fwd, bwd: bwd.into_iter().map(|b| b.1).collect() })
}

/// Mutual nearest neighbours under CSLS:
/// `csls(i, j) = 2·cos(x_i, y_j) − r_x(i) − r_y(j)`, where `r` is the mean
/// cosine to the `k` nearest cross-domain rows. Rows are assumed unit-norm.
/// Ties go to the lowest index.
pub fn build_dictionary<T: Scalar>(
    mapped_src: &Matrix<T>,
    tgt: &Matrix<T>,
    opts: &CslsOptions,
) -> Result<PairDictionary, AlignError> {
    let nb = neighbours(mapped_src, tgt, opts)?;
    let pairs: Vec<(usize, usize)> = nb
        .fwd
        .iter()
        .enumerate()
        .filter(|&(i, &(j, _))| nb.bwd[j] == i)
        .map(|(i, &(j, _))| (nb.si[i], nb.ti[j]))
        .collect();
    if pairs.is_empty() {
        return Err(AlignError::EmptyDictionary { iteration: 0 });
    }
    Ok(PairDictionary { pairs, construction: DictSource::CslsMutualNn })
}

/// Mean cosine between each source row and its CSLS-nearest target; a
/// pairing-free model-selection criterion.
pub fn csls_translation_score<T: Scalar>(mapped_src: &Matrix<T>, tgt: &Matrix<T>, opts: &CslsOptions) -> Result<f64, AlignError> {
    let nb = neighbours(mapped_src, tgt, opts)?;
    Ok(nb.fwd.iter().map(|&(_, c)| c).sum::<f64>() / nb.fwd.len() as f64)
}
