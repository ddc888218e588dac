//! The PCA + KDE detector, top-K labeling and uniform dispatch over every
//! registered detector.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{
    knn_dist_from_table, knn_table, lof_from_table, MahalanobisModel, DEFAULT_NEIGHBORS,
};
use crate::error::{invalid, Error, Result};
use crate::kde::{BandwidthRule, KdeModel};
use crate::linalg::{center_columns, covariance, Matrix};
use crate::pca::fit_pca;

/// Components whose eigenvalue falls below this fraction of the largest are
/// never handed to the KDE.
const RANK_REL_TOL: f64 = 1e-12;

/// Absorbs representation error in `contamination × n` before rounding up,
/// so 0.07 × 100 gives 7 and not 8.
const CEIL_SLACK: f64 = 1e-9;

pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 0.90;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorId {
    Pkde,
    Mahalanobis,
    KnnDist,
    Lof,
}

impl DetectorId {
    pub const ALL: [DetectorId; 4] = [
        DetectorId::Pkde,
        DetectorId::Mahalanobis,
        DetectorId::KnnDist,
        DetectorId::Lof,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorId::Pkde => "pkde",
            DetectorId::Mahalanobis => "mahalanobis",
            DetectorId::KnnDist => "knn-dist",
            DetectorId::Lof => "lof",
        }
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DetectorId::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::UnknownDetector(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Presumed outlier fraction, in `(0, 0.5]`.
    pub contamination: f64,
    pub variance_threshold: f64,
    /// Overrides `variance_threshold` when set.
    pub fixed_dim: Option<usize>,
    pub bandwidth_rule: BandwidthRule,
    /// Neighbor count for kNN and LOF; defaults to 10 clamped to `n - 1`.
    pub neighbors: Option<usize>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            contamination: 0.05,
            variance_threshold: DEFAULT_VARIANCE_THRESHOLD,
            fixed_dim: None,
            bandwidth_rule: BandwidthRule::Scott,
            neighbors: None,
        }
    }
}

impl DetectorConfig {
    pub fn with_contamination(contamination: f64) -> Self {
        Self {
            contamination,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_contamination(self.contamination)?;
        if !(self.variance_threshold > 0.0 && self.variance_threshold <= 1.0) {
            return Err(invalid(format!(
                "variance threshold must lie in (0, 1], got {}",
                self.variance_threshold
            )));
        }
        if self.fixed_dim == Some(0) {
            return Err(invalid("fixed dimension must be at least 1"));
        }
        if self.neighbors == Some(0) {
            return Err(invalid("neighbor count must be at least 1"));
        }
        Ok(())
    }
}

pub fn validate_contamination(c: f64) -> Result<()> {
    if !(c > 0.0 && c <= 0.5) {
        return Err(invalid(format!(
            "contamination must lie in (0, 0.5], got {c}"
        )));
    }
    Ok(())
}

/// `ceil(contamination × n)`, kept within `[1, n]`.
pub fn k_for(contamination: f64, n: usize) -> usize {
    let raw = (contamination * n as f64 - CEIL_SLACK).ceil();
    (raw.max(1.0) as usize).min(n)
}

/// Scores from one fit, before any threshold is applied.
#[derive(Debug, Clone)]
pub struct ScoredFit {
    pub detector: DetectorId,
    /// Higher means more anomalous.
    pub scores: Vec<f64>,
    pub reduced_dim: usize,
    pub fit_time: f64,
    pub score_time: f64,
}

impl ScoredFit {
    pub fn label(&self, contamination: f64) -> Result<DetectionResult> {
        validate_contamination(contamination)?;
        let k = k_for(contamination, self.scores.len());
        let labels = top_k_select(&self.scores, k)?;
        Ok(DetectionResult {
            detector: self.detector,
            scores: self.scores.clone(),
            labels,
            k_used: k,
            reduced_dim: self.reduced_dim,
            fit_time: self.fit_time,
            score_time: self.score_time,
        })
    }
}

#[derive(Debug, Clone)]
pub struct DetectionResult {
    pub detector: DetectorId,
    pub scores: Vec<f64>,
    /// 1 marks an outlier.
    pub labels: Vec<u8>,
    pub k_used: usize,
    pub reduced_dim: usize,
    pub fit_time: f64,
    pub score_time: f64,
}

impl DetectionResult {
    pub fn outlier_indices(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == 1)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Labels the `k` highest scores; ties at the boundary go to lower indices.
pub fn top_k_select(scores: &[f64], k: usize) -> Result<Vec<u8>> {
    if k < 1 || k > scores.len() {
        return Err(invalid(format!(
            "k = {k} must satisfy 1 <= k <= {}",
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    let cmp = |&a: &usize, &b: &usize| scores[b].total_cmp(&scores[a]).then(a.cmp(&b));
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, cmp);
    }
    let mut labels = vec![0u8; scores.len()];
    for &i in &order[..k] {
        labels[i] = 1;
    }
    Ok(labels)
}

/// The PCA-then-KDE pipeline, without labeling.
///
/// The anomaly score of point `i` is `-log` of its leave-one-out density
/// `(n·f̃(xᵢ) - K_H(0)) / (n - 1)`. The self-inclusive `f̃` is a fixed
/// increasing function of it, so rankings and labels are the same; this form
/// avoids every score collapsing to `-log(K_H(0)/n)` in high dimension,
/// where the self term swamps the rest in double precision.
pub fn pkde_scores(x: &Matrix, config: &DetectorConfig) -> Result<ScoredFit> {
    config.validate()?;
    if x.rows() < 3 {
        return Err(invalid(format!(
            "PKDE needs at least 3 rows, got {}",
            x.rows()
        )));
    }
    let start = Instant::now();
    let model = fit_pca(x)?;
    if !(model.total_variance > 0.0) {
        return Err(Error::DegenerateData(
            "every feature is constant; nothing to estimate".into(),
        ));
    }
    let mut m = match config.fixed_dim {
        Some(m) if m > model.dim() => {
            return Err(invalid(format!(
                "fixed dimension {m} exceeds the data dimension {}",
                model.dim()
            )))
        }
        Some(m) => m,
        None => model.choose_dim(config.variance_threshold)?,
    };
    let floor = RANK_REL_TOL * model.eigenvalues[0];
    let rank = model.eigenvalues.iter().filter(|&&l| l >= floor).count();
    m = m.min(rank).max(1);

    let reduced = model.project(x, m)?;
    let s = covariance(&center_columns(&reduced)?.0)?;
    let kde = KdeModel::fit(reduced, &s, config.bandwidth_rule)?;
    let fit_time = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let scores = kde.log_density_loo().into_iter().map(|l| -l).collect();
    let score_time = start.elapsed().as_secs_f64();
    Ok(ScoredFit {
        detector: DetectorId::Pkde,
        scores,
        reduced_dim: m,
        fit_time,
        score_time,
    })
}

/// Fits PKDE and labels the `ceil(contamination × n)` lowest-density points.
pub fn pkde_fit_score(x: &Matrix, config: &DetectorConfig) -> Result<DetectionResult> {
    pkde_scores(x, config)?.label(config.contamination)
}

fn neighbor_count(config: &DetectorConfig, n: usize) -> usize {
    config
        .neighbors
        .unwrap_or(DEFAULT_NEIGHBORS)
        .min(n.saturating_sub(1))
}

/// Runs `id` on `x` and returns unthresholded scores with timings.
pub fn fit_scores(id: DetectorId, x: &Matrix, config: &DetectorConfig) -> Result<ScoredFit> {
    config.validate()?;
    if id == DetectorId::Pkde {
        return pkde_scores(x, config);
    }
    let n = x.rows();
    let start = Instant::now();
    let (scores, fit_time, score_time) = match id {
        DetectorId::Mahalanobis => {
            let model = MahalanobisModel::fit(x)?;
            let fit = start.elapsed().as_secs_f64();
            let t = Instant::now();
            let s = model.score(x)?;
            (s, fit, t.elapsed().as_secs_f64())
        }
        DetectorId::KnnDist => {
            let table = knn_table(x, neighbor_count(config, n))?;
            let fit = start.elapsed().as_secs_f64();
            let t = Instant::now();
            let s = knn_dist_from_table(&table);
            (s, fit, t.elapsed().as_secs_f64())
        }
        DetectorId::Lof => {
            let k = neighbor_count(config, n);
            if k < 2 {
                return Err(invalid(format!("LOF needs k >= 2, got {k}")));
            }
            let table = knn_table(x, k)?;
            let fit = start.elapsed().as_secs_f64();
            let t = Instant::now();
            let s = lof_from_table(&table)?;
            (s, fit, t.elapsed().as_secs_f64())
        }
        DetectorId::Pkde => unreachable!(),
    };
    Ok(ScoredFit {
        detector: id,
        scores,
        reduced_dim: x.cols(),
        fit_time,
        score_time,
    })
}

/// Dispatches by detector name.
pub fn detect(name: &str, x: &Matrix, config: &DetectorConfig) -> Result<DetectionResult> {
    let id: DetectorId = name.parse()?;
    fit_scores(id, x, config)?.label(config.contamination)
}
