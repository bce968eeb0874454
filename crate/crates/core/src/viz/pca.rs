use crate::linalg::{gemm_into, svd, Matrix};
use crate::scalar::Scalar;

use super::VizError;

/// Principal components of a feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult<T> {
    /// `d × h`, one unit direction per row.
    pub components: Matrix<T>,
    pub explained_variance_ratio: Vec<f64>,
    /// `n × d` coordinates of the centered rows.
    pub projected: Matrix<T>,
    pub mean: Vec<T>,
}

impl<T: Scalar> PcaResult<T> {
    pub fn d(&self) -> usize {
        self.components.rows()
    }

    /// Coordinates of new rows in this basis.
    pub fn transform(&self, x: &Matrix<T>) -> Matrix<T> {
        let centered = Matrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)] - self.mean[j]);
        let mut out = Matrix::zeros(x.rows(), self.d());
        let ld = self.d();
        gemm_into(T::one(), centered.view(), self.components.t(), T::zero(), out.as_mut_slice(), ld);
        out
    }

    /// Rows mapped back to feature space from their `d` coordinates.
    pub fn reconstruct(&self) -> Matrix<T> {
        let mut out = Matrix::from_fn(self.projected.rows(), self.mean.len(), |_, j| self.mean[j]);
        let ld = self.mean.len();
        gemm_into(T::one(), self.projected.view(), self.components.view(), T::one(), out.as_mut_slice(), ld);
        out
    }
}

/// Mean-centered PCA via the SVD of the centered data. Each component is
/// signed so that its largest-magnitude entry is positive.
pub fn pca<T: Scalar>(f: &Matrix<T>, d: usize) -> Result<PcaResult<T>, VizError> {
    let (n, h) = f.shape();
    let max = n.saturating_sub(1).min(h);
    if d == 0 || d > max {
        return Err(VizError::Dim { d, max });
    }
    let mean = f.column_means();
    let centered = Matrix::from_fn(n, h, |i, j| f[(i, j)] - mean[j]);
    let dec = svd(&centered);
    let total: f64 = dec.s.iter().map(|s| s.as_f64() * s.as_f64()).sum();
    let mut components = Matrix::zeros(d, h);
    for k in 0..d {
        let row = dec.vt.row(k);
        let mut peak = 0;
        for (j, v) in row.iter().enumerate() {
            if v.abs() > row[peak].abs() {
                peak = j;
            }
        }
        let sign = if row[peak] < T::zero() { -T::one() } else { T::one() };
        for (dst, &v) in components.row_mut(k).iter_mut().zip(row) {
            *dst = v * sign;
        }
    }
    let explained_variance_ratio = dec.s[..d]
        .iter()
        .map(|s| if total > 0.0 { s.as_f64() * s.as_f64() / total } else { 0.0 })
        .collect();
    let mut projected = Matrix::zeros(n, d);
    gemm_into(T::one(), centered.view(), components.t(), T::zero(), projected.as_mut_slice(), d);
    Ok(PcaResult { components, explained_variance_ratio, projected, mean })
}
