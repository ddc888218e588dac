//! Precision / recall / F1, contamination sweeps and timing summaries.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::detector::{fit_scores, validate_contamination, DetectorConfig, DetectorId};
use crate::error::{invalid, Error, Result};

/// Confusion counts with the derived scores. Precision, recall and F1 are 0
/// whenever their denominator is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Score {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn f1_score(predicted: &[u8], truth: &[u8]) -> Result<F1Score> {
    if predicted.len() != truth.len() {
        return Err(invalid(format!(
            "{} predictions for {} ground-truth labels",
            predicted.len(),
            truth.len()
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            (0, 0) => tn += 1,
            _ => return Err(invalid("labels must be 0 or 1")),
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(F1Score {
        tp,
        fp,
        fn_,
        tn,
        precision,
        recall,
        f1,
    })
}

/// One row of a sweep: a detector at one contamination on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub detector: String,
    pub dataset: String,
    pub contamination: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub fit_time: f64,
    pub score_time: f64,
}

/// `0.01, 0.02, …, 0.30`.
pub fn default_grid() -> Vec<f64> {
    (1..=30).map(|i| f64::from(i) / 100.0).collect()
}

/// Evaluates each detector at every contamination level.
///
/// Each detector is fit `repeats` times and re-thresholded per grid point.
/// Detectors are deterministic, so repeats only refine the timing columns,
/// which hold the mean over repeats. Reports are ordered by detector, then
/// contamination.
pub fn sweep(
    detectors: &[DetectorId],
    dataset: &Dataset,
    grid: &[f64],
    repeats: usize,
    config: &DetectorConfig,
) -> Result<Vec<EvalReport>> {
    let truth = dataset.labels.as_ref().ok_or_else(|| {
        invalid(format!(
            "dataset `{}` has no labels to score against",
            dataset.name
        ))
    })?;
    if repeats == 0 {
        return Err(invalid("repeats must be at least 1"));
    }
    if grid.is_empty() {
        return Err(invalid("contamination grid is empty"));
    }
    for &c in grid {
        validate_contamination(c)?;
    }

    let mut reports = Vec::with_capacity(detectors.len() * grid.len());
    for &id in detectors {
        let fits = (0..repeats)
            .map(|_| fit_scores(id, &dataset.x, config))
            .collect::<Result<Vec<_>>>()?;
        let runs = fits.len() as f64;
        let fit_time = fits.iter().map(|f| f.fit_time).sum::<f64>() / runs;
        let score_time = fits.iter().map(|f| f.score_time).sum::<f64>() / runs;
        for &c in grid {
            let res = fits[0].label(c)?;
            let s = f1_score(&res.labels, truth)?;
            reports.push(EvalReport {
                detector: id.to_string(),
                dataset: dataset.name.clone(),
                contamination: c,
                precision: s.precision,
                recall: s.recall,
                f1: s.f1,
                tp: s.tp,
                fp: s.fp,
                fn_: s.fn_,
                tn: s.tn,
                fit_time,
                score_time,
            });
        }
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub detector: String,
    pub dataset: String,
    pub runs: usize,
    pub mean_fit_time: f64,
    pub mean_score_time: f64,
    pub mean_total_time: f64,
    pub median_total_time: f64,
}

/// Fits and scores each detector `repeats` times and summarizes the
/// wall-clock cost. Labels are not needed.
pub fn time_detectors(
    detectors: &[DetectorId],
    dataset: &Dataset,
    repeats: usize,
    config: &DetectorConfig,
) -> Result<Vec<TimingSummary>> {
    if repeats == 0 {
        return Err(invalid("repeats must be at least 1"));
    }
    detectors
        .iter()
        .map(|&id| {
            let mut fit = Vec::with_capacity(repeats);
            let mut score = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                let f = fit_scores(id, &dataset.x, config)?;
                fit.push(f.fit_time);
                score.push(f.score_time);
            }
            let mut totals: Vec<f64> = fit.iter().zip(&score).map(|(a, b)| a + b).collect();
            totals.sort_by(f64::total_cmp);
            let n = repeats as f64;
            Ok(TimingSummary {
                detector: id.to_string(),
                dataset: dataset.name.clone(),
                runs: repeats,
                mean_fit_time: fit.iter().sum::<f64>() / n,
                mean_score_time: score.iter().sum::<f64>() / n,
                mean_total_time: totals.iter().sum::<f64>() / n,
                median_total_time: median(&totals),
            })
        })
        .collect()
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io {
        path: "<report output>".into(),
        source: std::io::Error::other(e),
    }
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Io {
        path: "<report output>".into(),
        source: std::io::Error::other(e),
    }
}

/// CSV, one row per record, columns in field order.
pub fn write_csv_rows<T: Serialize>(rows: &[T], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

/// JSON array of objects.
pub fn write_json_rows<T: Serialize>(rows: &[T], mut out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, rows).map_err(json_err)?;
    out.write_all(b"\n").map_err(|source| Error::Io {
        path: "<report output>".into(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Point {
    pub contamination: f64,
    pub detector: String,
    pub f1: f64,
}

/// Long-format `(contamination, detector, f1)` rows.
pub fn long_format(reports: &[EvalReport]) -> Vec<F1Point> {
    reports
        .iter()
        .map(|r| F1Point {
            contamination: r.contamination,
            detector: r.detector.clone(),
            f1: r.f1,
        })
        .collect()
}
