//! Multivariate Gaussian kernel density estimation with a full bandwidth
//! matrix, evaluated by direct summation.
//!
//! The estimate at `x` is `(1/n) Σᵢ K_H(x - xᵢ)` with
//! `K_H(y) = (2π)^(-d/2) |H|^(-1/2) exp(-½ yᵀH⁻¹y)`.
//!
//! Internally every sample is mapped through a whitening transform `W` with
//! `H⁻¹ = WᵀW`, so each quadratic form reduces to a squared Euclidean
//! distance. Ranking code should use the log-space entry points.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{squared_distance, sym_eigen, Matrix};

const DIAGONAL_REL_TOL: f64 = 1e-14;
const SINGULAR_REL_TOL: f64 = 1e-12;

/// How the covariance is scaled into a bandwidth matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthRule {
    /// `H = n^(-1/(d+4)) · S`
    #[default]
    Scott,
    /// `H = n^(-2/(d+4)) · S`, the usual covariance-form Scott rule.
    ScottSquared,
}

impl BandwidthRule {
    pub fn factor(self, n: usize, d: usize) -> f64 {
        let base = (n as f64).powf(-1.0 / (d as f64 + 4.0));
        match self {
            BandwidthRule::Scott => base,
            BandwidthRule::ScottSquared => base * base,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BandwidthRule::Scott => "scott",
            BandwidthRule::ScottSquared => "scott-squared",
        }
    }
}

impl fmt::Display for BandwidthRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BandwidthRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scott" => Ok(BandwidthRule::Scott),
            "scott-squared" => Ok(BandwidthRule::ScottSquared),
            other => Err(invalid(format!(
                "unknown bandwidth rule `{other}` (expected scott or scott-squared)"
            ))),
        }
    }
}

/// Symmetric positive-definite bandwidth matrix with cached inverse data.
#[derive(Debug, Clone)]
pub struct Bandwidth {
    pub h: Matrix,
    pub h_inv: Matrix,
    pub log_det_h: f64,
    /// Scalar applied to the covariance; 1 when built directly from `H`.
    pub scott_factor: f64,
    /// Rows of `W` with `H⁻¹ = WᵀW`.
    whitener: Matrix,
}

impl Bandwidth {
    /// Wraps an explicit SPD bandwidth matrix.
    pub fn from_matrix(h: Matrix) -> Result<Self> {
        Self::build(h, 1.0)
    }

    /// Scales the covariance `s` of `n` samples by `rule`'s factor.
    pub fn from_covariance(s: &Matrix, n: usize, rule: BandwidthRule) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("bandwidth needs n >= 2 samples, got {n}")));
        }
        if !s.is_square() || s.rows() == 0 {
            return Err(invalid(format!(
                "covariance must be square and non-empty, got {}x{}",
                s.rows(),
                s.cols()
            )));
        }
        let factor = rule.factor(n, s.rows());
        let scaled = Matrix::from_raw(
            s.rows(),
            s.cols(),
            s.as_slice().iter().map(|v| v * factor).collect(),
        );
        Self::build(scaled, factor)
    }

    fn build(h: Matrix, scott_factor: f64) -> Result<Self> {
        if !h.is_square() || h.rows() == 0 {
            return Err(invalid(format!(
                "bandwidth must be square and non-empty, got {}x{}",
                h.rows(),
                h.cols()
            )));
        }
        let d = h.rows();
        let trace = h.trace();
        let diag = h.diag();
        let max_diag = diag.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let max_off = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .fold(0.0_f64, |m, (i, j)| m.max(h.get(i, j).abs()));

        let singular = |values: &[f64]| {
            values
                .iter()
                .any(|&l| !(l > 0.0) || l < SINGULAR_REL_TOL * trace)
        };

        let (h_inv, log_det_h, whitener) = if max_off <= DIAGONAL_REL_TOL * max_diag {
            if !(trace > 0.0) || singular(&diag) {
                return Err(Error::SingularBandwidth(format!(
                    "bandwidth diagonal {diag:?} has a zero or near-zero entry"
                )));
            }
            let h_inv = Matrix::from_diag(&diag.iter().map(|v| 1.0 / v).collect::<Vec<_>>())?;
            let log_det: f64 = diag.iter().map(|v| v.ln()).sum();
            let w = Matrix::from_diag(&diag.iter().map(|v| 1.0 / v.sqrt()).collect::<Vec<_>>())?;
            (h_inv, log_det, w)
        } else {
            let eig = sym_eigen(&h)?;
            if !(trace > 0.0) || singular(&eig.eigenvalues) {
                return Err(Error::SingularBandwidth(format!(
                    "bandwidth eigenvalues {:?} include a zero or near-zero value",
                    eig.eigenvalues
                )));
            }
            let h_inv = eig.inverse()?;
            let log_det: f64 = eig.eigenvalues.iter().map(|v| v.ln()).sum();
            // W = Λ^(-1/2) Vᵀ
            let mut w = Matrix::zeros(d, d);
            for (k, l) in eig.eigenvalues.iter().enumerate() {
                let s = 1.0 / l.sqrt();
                for j in 0..d {
                    w.set(k, j, s * eig.eigenvectors.get(j, k));
                }
            }
            (h_inv, log_det, w)
        };
        if !log_det_h.is_finite() {
            return Err(Error::SingularBandwidth(format!(
                "log-determinant of bandwidth is {log_det_h}"
            )));
        }
        Ok(Self {
            h,
            h_inv,
            log_det_h,
            scott_factor,
            whitener,
        })
    }

    pub fn dim(&self) -> usize {
        self.h.rows()
    }

    /// `log K_H(0)`.
    pub fn log_norm(&self) -> f64 {
        -0.5 * self.dim() as f64 * (2.0 * PI).ln() - 0.5 * self.log_det_h
    }

    fn whiten_into(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.whitener.row(k).iter().zip(x).map(|(w, v)| w * v).sum();
        }
    }

    fn whiten(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.whiten_into(x, &mut out);
        out
    }

    /// `log K_H(x)`.
    pub fn log_kernel(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(invalid(format!(
                "kernel argument has dimension {}, bandwidth has {}",
                x.len(),
                self.dim()
            )));
        }
        let y = self.whiten(x);
        let q: f64 = y.iter().map(|v| v * v).sum();
        Ok(self.log_norm() - 0.5 * q)
    }
}

/// Scott's-rule bandwidth `H = n^(-1/(d+4)) · S`.
pub fn scott_bandwidth(s: &Matrix, n: usize) -> Result<Bandwidth> {
    Bandwidth::from_covariance(s, n, BandwidthRule::Scott)
}

/// Gaussian kernel `K_H(x)`, evaluated through its logarithm.
pub fn gaussian_kernel(x: &[f64], bw: &Bandwidth) -> Result<f64> {
    bw.log_kernel(x).map(f64::exp)
}

/// A kernel density estimate over a fixed reference sample.
#[derive(Debug, Clone)]
pub struct KdeModel {
    samples: Matrix,
    bandwidth: Bandwidth,
    whitened: Matrix,
}

impl KdeModel {
    pub fn new(samples: Matrix, bandwidth: Bandwidth) -> Result<Self> {
        if samples.rows() < 2 || samples.cols() < 1 {
            return Err(invalid(format!(
                "KDE needs n >= 2 and d >= 1, got {}x{}",
                samples.rows(),
                samples.cols()
            )));
        }
        if bandwidth.dim() != samples.cols() {
            return Err(invalid(format!(
                "bandwidth dimension {} does not match sample dimension {}",
                bandwidth.dim(),
                samples.cols()
            )));
        }
        let d = samples.cols();
        let mut data = vec![0.0; samples.rows() * d];
        for (row, out) in samples.row_iter().zip(data.chunks_exact_mut(d)) {
            bandwidth.whiten_into(row, out);
        }
        let whitened = Matrix::from_raw(samples.rows(), d, data);
        Ok(Self {
            samples,
            bandwidth,
            whitened,
        })
    }

    /// Fits on `samples` with the covariance-scaled bandwidth of `rule`.
    pub fn fit(samples: Matrix, covariance: &Matrix, rule: BandwidthRule) -> Result<Self> {
        let bw = Bandwidth::from_covariance(covariance, samples.rows(), rule)?;
        Self::new(samples, bw)
    }

    pub fn n(&self) -> usize {
        self.samples.rows()
    }

    pub fn d(&self) -> usize {
        self.samples.cols()
    }

    pub fn samples(&self) -> &Matrix {
        &self.samples
    }

    pub fn bandwidth(&self) -> &Bandwidth {
        &self.bandwidth
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.d() {
            return Err(invalid(format!(
                "query has dimension {len}, model has {}",
                self.d()
            )));
        }
        Ok(())
    }

    /// Half squared whitened distances from `yq` to every sample.
    fn half_quad_forms<'a>(&'a self, yq: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        self.whitened
            .row_iter()
            .map(move |ys| 0.5 * squared_distance(ys, yq))
    }

    /// Density at `query`, by linear-space summation.
    pub fn density(&self, query: &[f64]) -> Result<f64> {
        self.check_dim(query.len())?;
        let yq = self.bandwidth.whiten(query);
        let norm = self.bandwidth.log_norm();
        let sum: f64 = self.half_quad_forms(&yq).map(|h| (norm - h).exp()).sum();
        Ok(sum / self.n() as f64)
    }

    fn log_density_row(&self, query: &[f64]) -> f64 {
        let yq = self.bandwidth.whiten(query);
        let terms: Vec<f64> = self.half_quad_forms(&yq).map(|h| -h).collect();
        log_sum_exp(&terms) + self.bandwidth.log_norm() - (self.n() as f64).ln()
    }

    /// `log f̃` at every row of `queries`, in row order.
    pub fn log_density_all(&self, queries: &Matrix) -> Result<Vec<f64>> {
        self.check_dim(queries.cols())?;
        Ok((0..queries.rows())
            .into_par_iter()
            .map(|i| self.log_density_row(queries.row(i)))
            .collect())
    }

    /// Leave-one-out log density of every reference sample:
    /// `log((1/(n-1)) Σ_{j≠i} K_H(xᵢ - xⱼ))`.
    ///
    /// Equal to `log((n·f̃(xᵢ) - K_H(0)) / (n-1))`, a strictly increasing
    /// function of the self-inclusive estimate, so both induce the same
    /// ranking. Unlike the self-inclusive value it stays resolvable in
    /// floating point when the self term dominates every other kernel.
    ///
    /// Each unordered pair is evaluated once. Rows are dealt to a fixed
    /// number of groups independent of the thread count, and group results
    /// merge in a fixed order, so the output is bit-reproducible.
    pub fn log_density_loo(&self) -> Vec<f64> {
        let n = self.n();
        let blocks = n.div_ceil(LOO_BLOCK);
        let partials: Vec<Vec<StreamingLse>> = (0..LOO_GROUPS.min(blocks))
            .into_par_iter()
            .map(|g| {
                let mut acc = vec![StreamingLse::EMPTY; n];
                for b in (g..blocks).step_by(LOO_GROUPS) {
                    for i in b * LOO_BLOCK..((b + 1) * LOO_BLOCK).min(n) {
                        let yi = self.whitened.row(i);
                        for j in i + 1..n {
                            let v = -0.5 * squared_distance(yi, self.whitened.row(j));
                            acc[i].push(v);
                            acc[j].push(v);
                        }
                    }
                }
                acc
            })
            .collect();
        let offset = self.bandwidth.log_norm() - ((n - 1) as f64).ln();
        (0..n)
            .map(|i| {
                let total = partials
                    .iter()
                    .fold(StreamingLse::EMPTY, |a, p| a.merge(p[i]));
                total.value() + offset
            })
            .collect()
    }
}

const LOO_BLOCK: usize = 32;
const LOO_GROUPS: usize = 64;

/// Running `log Σ exp(vᵢ)` kept as `(max, Σ exp(vᵢ - max))`.
#[derive(Debug, Clone, Copy)]
struct StreamingLse {
    max: f64,
    sum: f64,
}

impl StreamingLse {
    const EMPTY: Self = Self {
        max: f64::NEG_INFINITY,
        sum: 0.0,
    };

    fn push(&mut self, v: f64) {
        if v <= self.max {
            self.sum += (v - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    fn merge(self, other: Self) -> Self {
        if other.sum == 0.0 {
            return self;
        }
        if self.sum == 0.0 {
            return other;
        }
        let max = self.max.max(other.max);
        Self {
            max,
            sum: self.sum * (self.max - max).exp() + other.sum * (other.max - max).exp(),
        }
    }

    fn value(self) -> f64 {
        self.max + self.sum.ln()
    }
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + sum.ln()
}
