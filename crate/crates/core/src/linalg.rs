//! Small dense linear algebra kernel: a row-major [`Matrix`], column
//! centering, sample covariance and a cyclic Jacobi eigensolver for
//! symmetric matrices.

use std::fmt;

use crate::error::{invalid, Error, Result};

/// Dense row-major matrix of finite `f64` values.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    /// Builds a matrix from row-major data. Rejects length mismatches and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite entry at row {}, column {}",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(invalid(format!(
                    "row {} has {} entries, expected {}",
                    i,
                    r.len(),
                    cols
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut data = vec![0.0; n * n];
        for (i, &v) in diag.iter().enumerate() {
            data[i * n + i] = v;
        }
        Self::new(n, n, data)
    }

    /// Internal constructor for results of arithmetic on finite inputs.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub(crate) fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(invalid(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = vec![0.0; self.rows * other.cols];
        for r in 0..self.rows {
            let out_row = &mut out[r * other.cols..(r + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(Matrix::from_raw(self.rows, other.cols, out))
    }

    /// Keeps the first `m` columns.
    pub fn leading_columns(&self, m: usize) -> Matrix {
        let m = m.min(self.cols);
        let mut data = Vec::with_capacity(self.rows * m);
        for r in self.row_iter() {
            data.extend_from_slice(&r[..m]);
        }
        Matrix::from_raw(self.rows, m, data)
    }

    /// Selects rows by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_raw(idx.len(), self.cols, data)
    }

    /// Largest absolute entry (0 for an empty matrix).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest |a_ij - a_ji|; infinite for non-square input.
    pub fn max_asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Subtracts each column's mean. Returns the centered matrix and the means.
pub fn center_columns(x: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(invalid("cannot center an empty matrix"));
    }
    let n = x.rows() as f64;
    let d = x.cols();
    let mut mean = vec![0.0; d];
    for r in x.row_iter() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    // second pass removes the rounding left by the first mean estimate
    let mut correction = vec![0.0; d];
    for r in x.row_iter() {
        for ((c, v), m) in correction.iter_mut().zip(r).zip(&mean) {
            *c += v - m;
        }
    }
    for (m, c) in mean.iter_mut().zip(&correction) {
        *m += c / n;
    }

    let mut data = Vec::with_capacity(x.rows() * d);
    for r in x.row_iter() {
        data.extend(r.iter().zip(&mean).map(|(v, m)| v - m));
    }
    Ok((Matrix::from_raw(x.rows(), d, data), mean))
}

/// Sample covariance `XᵀX / (n - 1)` of already-centered data.
pub fn covariance(centered: &Matrix) -> Result<Matrix> {
    let n = centered.rows();
    if n < 2 {
        return Err(invalid(format!(
            "sample covariance needs at least 2 rows, got {n}"
        )));
    }
    let d = centered.cols();
    let mut acc = vec![0.0; d * d];
    for r in centered.row_iter() {
        for a in 0..d {
            let ra = r[a];
            if ra == 0.0 {
                continue;
            }
            let acc_row = &mut acc[a * d..a * d + d];
            for b in a..d {
                acc_row[b] += ra * r[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    let mut s = Matrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let v = acc[a * d + b] / denom;
            s.set(a, b, v);
            s.set(b, a, v);
        }
    }
    Ok(s)
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Column `i` is the unit eigenvector for `eigenvalues[i]`.
    pub eigenvectors: Matrix,
}

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_REL_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;
const CLAMP_REL: f64 = 1e-10;

/// Cyclic Jacobi eigensolver.
///
/// Eigenvalues come back sorted descending (stable among ties), small
/// negative round-off values are clamped to zero, and every eigenvector is
/// sign-normalized so its largest-magnitude component is positive.
pub fn sym_eigen(s: &Matrix) -> Result<SymEigen> {
    if !s.is_square() {
        return Err(invalid(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    let n = s.rows();
    if n == 0 {
        return Err(invalid("eigendecomposition of an empty matrix"));
    }
    let asym = s.max_asymmetry();
    if asym > SYMMETRY_TOL * s.max_abs().max(1.0) {
        return Err(invalid(format!(
            "matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }

    // work on the exactly symmetrized copy
    let mut a = s.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a.get(i, j) + a.get(j, i));
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    let mut v = Matrix::identity(n);
    let target = JACOBI_REL_TOL * s.frobenius();

    let mut converged = false;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    if !converged && off_diagonal_norm(&a) > target {
        return Err(Error::NumericalFailure(format!(
            "Jacobi eigensolver did not converge within {JACOBI_MAX_SWEEPS} sweeps"
        )));
    }

    let raw = a.diag();
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal eigenvalues keep solver order
    order.sort_by(|&i, &j| raw[j].total_cmp(&raw[i]));

    let trace = s.trace();
    let clamp = CLAMP_REL * trace.abs();
    let eigenvalues: Vec<f64> = order
        .iter()
        .map(|&i| {
            let l = raw[i];
            if l < 0.0 && -l < clamp {
                0.0
            } else {
                l
            }
        })
        .collect();

    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.col(src);
        canonicalize_sign(&mut col);
        for (r, x) in col.into_iter().enumerate() {
            vectors.set(r, dst, x);
        }
    }
    Ok(SymEigen {
        eigenvalues,
        eigenvectors: vectors,
    })
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a.get(i, j) * a.get(i, j);
            }
        }
    }
    sum.sqrt()
}

fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = a.get(p, q);
    if apq == 0.0 {
        return;
    }
    let app = a.get(p, p);
    let aqq = a.get(q, q);
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = a.rows();

    for r in 0..n {
        if r == p || r == q {
            continue;
        }
        let arp = a.get(r, p);
        let arq = a.get(r, q);
        let new_rp = c * arp - s * arq;
        let new_rq = s * arp + c * arq;
        a.set(r, p, new_rp);
        a.set(p, r, new_rp);
        a.set(r, q, new_rq);
        a.set(q, r, new_rq);
    }
    a.set(p, p, app - t * apq);
    a.set(q, q, aqq + t * apq);
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);

    for r in 0..n {
        let vrp = v.get(r, p);
        let vrq = v.get(r, q);
        v.set(r, p, c * vrp - s * vrq);
        v.set(r, q, s * vrp + c * vrq);
    }
}

/// Flips `v` so its largest-magnitude component (lowest index on ties) is
/// positive.
fn canonicalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

impl SymEigen {
    /// `V Λ Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.eigenvalues.len();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for (k, l) in self.eigenvalues.iter().enumerate() {
                    acc += self.eigenvectors.get(i, k) * l * self.eigenvectors.get(j, k);
                }
                out.set(i, j, acc);
                out.set(j, i, acc);
            }
        }
        out
    }

    /// `V Λ⁻¹ Vᵀ`; fails when any eigenvalue is not strictly positive.
    pub fn inverse(&self) -> Result<Matrix> {
        if let Some(l) = self.eigenvalues.iter().find(|&&l| l <= 0.0) {
            return Err(Error::NumericalFailure(format!(
                "cannot invert: eigenvalue {l:e} is not positive"
            )));
        }
        let inv = SymEigen {
            eigenvalues: self.eigenvalues.iter().map(|l| 1.0 / l).collect(),
            eigenvectors: self.eigenvectors.clone(),
        };
        Ok(inv.reconstruct())
    }
}

/// Squared Mahalanobis distance `(x - μ)ᵀ S⁻¹ (x - μ)`.
pub fn mahalanobis_sq(x: &[f64], mu: &[f64], s_inv: &Matrix) -> Result<f64> {
    let d = x.len();
    if mu.len() != d || s_inv.rows() != d || s_inv.cols() != d {
        return Err(invalid(format!(
            "dimension mismatch: x has {}, mu has {}, inverse covariance is {}x{}",
            d,
            mu.len(),
            s_inv.rows(),
            s_inv.cols()
        )));
    }
    Ok(quad_form_unchecked(x, mu, s_inv))
}

/// Squared Euclidean distance. Four independent accumulators let the
/// compiler vectorize the loop; the result differs from a sequential sum
/// only by rounding order.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            let t = x[l] - y[l];
            acc[l] += t * t;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += (x - y) * (x - y);
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

pub(crate) fn quad_form_unchecked(x: &[f64], mu: &[f64], s_inv: &Matrix) -> f64 {
    let diff: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
    let mut acc = 0.0;
    for (i, di) in diff.iter().enumerate() {
        let row = s_inv.row(i);
        let inner: f64 = row.iter().zip(&diff).map(|(s, dj)| s * dj).sum();
        acc += di * inner;
    }
    acc.max(0.0)
}
