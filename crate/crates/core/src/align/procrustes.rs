use super::csls::{build_dictionary, CslsOptions};
use super::map::{AlignMode, AlignmentMap};
use super::{AlignData, AlignError, PairDictionary, SimilarityReport};
use crate::linalg::{gemm_into, svd, Matrix};
use crate::scalar::Scalar;

/// Orthogonal `W` minimizing `Σ ‖src[i]·W − tgt[j]‖²` over the pairs:
/// `W = U·Vᵀ` for `U·Σ·Vᵀ = srcᵀ·tgt`.
pub fn procrustes_fit<T: Scalar>(
    src: &Matrix<T>,
    tgt: &Matrix<T>,
    pairs: &PairDictionary,
) -> Result<Matrix<T>, AlignError> {
    let h = src.cols();
    if tgt.cols() != h {
        return Err(AlignError::Shape(format!("feature widths {h} and {} differ", tgt.cols())));
    }
    if pairs.is_empty() {
        return Err(AlignError::Rank("no pairs".into()));
    }
    if pairs.len() < h {
        log::warn!("Procrustes fit with {} pairs for width {h}", pairs.len());
    }
    let si: Vec<usize> = pairs.pairs.iter().map(|p| p.0).collect();
    let ti: Vec<usize> = pairs.pairs.iter().map(|p| p.1).collect();
    if si.iter().any(|&i| i >= src.rows()) || ti.iter().any(|&j| j >= tgt.rows()) {
        return Err(AlignError::Shape("pair index out of range".into()));
    }
    let a = src.select_rows(&si);
    let b = tgt.select_rows(&ti);
    let mut m = Matrix::zeros(h, h);
    gemm_into(T::one(), a.t(), b.view(), T::zero(), m.as_mut_slice(), h);
    let s = svd(&m);
    let top = s.s.first().map_or(0.0, |v| v.as_f64());
    if !(top > 1e-12) {
        return Err(AlignError::Rank("cross-covariance is zero".into()));
    }
    Ok(s.u.matmul(&s.vt))
}

/// Options for [`align_supervised`].
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedOptions {
    /// Total iterations; the first uses the given pairing.
    pub refinement_iters: usize,
    pub csls: CslsOptions,
}

impl Default for SupervisedOptions {
    fn default() -> Self {
        SupervisedOptions { refinement_iters: 1, csls: CslsOptions::default() }
    }
}

/// Procrustes on the row-aligned fitting sets, then `r − 1` rounds of
/// dictionary rebuilding and refitting. Scores the held-out rows.
pub fn align_supervised<T: Scalar>(
    data: &AlignData<'_, T>,
    opts: &SupervisedOptions,
) -> Result<(AlignmentMap<T>, SimilarityReport), AlignError> {
    let h = data.check()?;
    if opts.refinement_iters == 0 {
        return Err(AlignError::Config("refinement_iters must be at least 1".into()));
    }
    if data.fit_src.rows() != data.fit_tgt.rows() {
        return Err(AlignError::Shape("supervised fitting sets must be row-aligned".into()));
    }
    let mut w = procrustes_fit(data.fit_src, data.fit_tgt, &PairDictionary::identity(data.fit_src.rows()))
        .map_err(|e| e.at(1))?;
    for iteration in 2..=opts.refinement_iters {
        let mapped = data.fit_src.matmul(&w);
        let dict = build_dictionary(&mapped, data.fit_tgt, &opts.csls).map_err(|e| match e {
            AlignError::EmptyDictionary { .. } => AlignError::EmptyDictionary { iteration },
            other => other.at(iteration),
        })?;
        w = procrustes_fit(data.fit_src, data.fit_tgt, &dict).map_err(|e| e.at(iteration))?;
    }
    let report = SimilarityReport::score(data.eval_src, data.eval_tgt, &w);
    let map = AlignmentMap::new(w, AlignMode::Supervised, opts.refinement_iters, 0);
    debug_assert_eq!(map.w.rows(), h);
    Ok((map, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = Matrix::<f64>::random_normal(100, 8, 1.0, &mut rng);
        let r = Matrix::<f64>::random_orthogonal(8, &mut rng);
        let g = f.matmul(&r);
        let w = procrustes_fit(&f, &g, &PairDictionary::identity(100)).unwrap();
        assert!(f.matmul(&w).sub(&g).frobenius_norm() < 1e-9);
        assert!(w.orthogonality_defect() < 1e-9);
    }

    #[test]
    fn zero_pairs_are_rank_errors() {
        let z = Matrix::<f64>::zeros(10, 4);
        assert!(matches!(procrustes_fit(&z, &z, &PairDictionary::identity(10)), Err(AlignError::Rank(_))));
    }
}
