//! Outlier detection by principal component reduction followed by Gaussian
//! kernel density estimation, labeling the `K` lowest-density points.
//!
//! The crate also carries three reference detectors (Mahalanobis distance,
//! kNN distance, LOF), seeded synthetic data generators, a CSV loader and an
//! F1 / contamination-sweep harness.
//!
//! ```
//! use pkde::datasets::{gen_synthetic, SynthKind, SynthSpec};
//! use pkde::detector::{pkde_fit_score, DetectorConfig};
//!
//! let ds = gen_synthetic(&SynthSpec::new(SynthKind::GaussianPlanted, 95, 5, 2, 7)).unwrap();
//! let res = pkde_fit_score(&ds.x, &DetectorConfig::with_contamination(0.05)).unwrap();
//! assert_eq!(res.k_used, 5);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cli;
pub mod datasets;
pub mod detector;
pub mod error;
pub mod kde;
pub mod linalg;
pub mod metrics;
pub mod pca;

pub use datasets::Dataset;
pub use detector::{detect, pkde_fit_score, DetectionResult, DetectorConfig, DetectorId};
pub use error::{Error, ErrorClass, Result};
pub use linalg::Matrix;
