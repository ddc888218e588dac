//! Principal component analysis over the sample covariance.

use crate::error::{invalid, Result};
use crate::linalg::{center_columns, covariance, sym_eigen, Matrix};

/// Cumulative ratios within this slack of the threshold count as reaching it,
/// so `[0.7, 0.2]` reaches 0.9 despite `0.7 + 0.2 < 0.9` in binary.
const CUMULATIVE_SLACK: f64 = 1e-12;

/// A fitted PCA model. Components are unit-norm columns; no whitening.
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `d × m`, column `i` pairs with `eigenvalues[i]`.
    pub components: Matrix,
    pub eigenvalues: Vec<f64>,
    pub explained_ratio: Vec<f64>,
    /// Sum of all `d` eigenvalues, even when fewer components are kept.
    pub total_variance: f64,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Smallest `m` whose cumulative explained ratio reaches
    /// `variance_threshold`. Always at least 1.
    pub fn choose_dim(&self, variance_threshold: f64) -> Result<usize> {
        if !(variance_threshold > 0.0 && variance_threshold <= 1.0) {
            return Err(invalid(format!(
                "variance threshold must lie in (0, 1], got {variance_threshold}"
            )));
        }
        if self.total_variance <= 0.0 {
            return Ok(1);
        }
        let mut cum = 0.0;
        for (i, r) in self.explained_ratio.iter().enumerate() {
            cum += r;
            if cum >= variance_threshold - CUMULATIVE_SLACK {
                return Ok(i + 1);
            }
        }
        Ok(self.n_components().max(1))
    }

    /// `(X - mean) · components[:, :m]`.
    pub fn project(&self, x: &Matrix, m: usize) -> Result<Matrix> {
        if m == 0 || m > self.n_components() {
            return Err(invalid(format!(
                "cannot project onto {m} components; model has {}",
                self.n_components()
            )));
        }
        if x.cols() != self.dim() {
            return Err(invalid(format!(
                "data has {} columns, model was fit on {}",
                x.cols(),
                self.dim()
            )));
        }
        let d = self.dim();
        let mut out = vec![0.0; x.rows() * m];
        for (row, out_row) in x.row_iter().zip(out.chunks_exact_mut(m)) {
            for (k, (v, mu)) in row.iter().zip(&self.mean).enumerate().take(d) {
                let c = v - mu;
                for (o, w) in out_row.iter_mut().zip(&self.components.row(k)[..m]) {
                    *o += c * w;
                }
            }
        }
        Ok(Matrix::from_raw(x.rows(), m, out))
    }
}

/// Fits PCA keeping every component.
pub fn fit_pca(x: &Matrix) -> Result<PcaModel> {
    if x.rows() < 2 || x.cols() < 1 {
        return Err(invalid(format!(
            "PCA needs at least 2 rows and 1 column, got {}x{}",
            x.rows(),
            x.cols()
        )));
    }
    let (centered, mean) = center_columns(x)?;
    let s = covariance(&centered)?;
    let eig = sym_eigen(&s)?;
    let total_variance: f64 = eig.eigenvalues.iter().sum();
    let explained_ratio = eig
        .eigenvalues
        .iter()
        .map(|l| {
            if total_variance > 0.0 {
                (l / total_variance).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    Ok(PcaModel {
        mean,
        components: eig.eigenvectors,
        eigenvalues: eig.eigenvalues,
        explained_ratio,
        total_variance,
    })
}
