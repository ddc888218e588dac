use pkde::baselines::{knn_dist_score, lof_score, mahalanobis_score};
use pkde::datasets::{gen_synthetic, SynthKind, SynthRng, SynthSpec};
use pkde::detector::{detect, fit_scores, k_for, pkde_scores};
use pkde::kde::{Bandwidth, KdeModel};
use pkde::{DetectorConfig, DetectorId, Error, Matrix};

fn planted(n_normal: usize, n_outlier: usize, dim: usize, seed: u64) -> pkde::Dataset {
    gen_synthetic(&SynthSpec::new(
        SynthKind::GaussianPlanted,
        n_normal,
        n_outlier,
        dim,
        seed,
    ))
    .unwrap()
}

fn map_rows(x: &Matrix, f: impl Fn(&[f64]) -> Vec<f64>) -> Matrix {
    let rows: Vec<Vec<f64>> = x.row_iter().map(f).collect();
    Matrix::from_rows(&rows).unwrap()
}

fn rotate(x: &Matrix, q: &Matrix) -> Matrix {
    map_rows(x, |r| {
        (0..q.rows())
            .map(|i| q.row(i).iter().zip(r).map(|(a, b)| a * b).sum())
            .collect()
    })
}

/// Random orthogonal matrix from Gram-Schmidt on Gaussian columns.
fn random_rotation(rng: &mut SynthRng, d: usize) -> Matrix {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while basis.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            v.iter_mut().zip(b).for_each(|(a, c)| *a -= p * c);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    Matrix::from_rows(&basis).unwrap()
}

#[test]
fn pkde_labels_survive_rotation_translation_and_scaling() {
    let mut rng = SynthRng::new(3);
    for seed in 0..5 {
        let ds = planted(120, 6, 4, seed);
        let cfg = DetectorConfig::with_contamination(0.05);
        let base = detect("pkde", &ds.x, &cfg).unwrap();
        let q = random_rotation(&mut rng, 4);
        let moved = map_rows(&rotate(&ds.x, &q), |r| {
            r.iter().map(|v| 3.5 * v - 12.0).collect()
        });
        let other = detect("pkde", &moved, &cfg).unwrap();
        assert_eq!(base.labels, other.labels, "seed {seed}");
        assert_eq!(base.reduced_dim, other.reduced_dim);
    }
}

#[test]
fn label_count_is_ceil_of_contamination_for_every_detector() {
    let ds = planted(97, 6, 3, 21);
    let n = ds.n();
    for id in DetectorId::ALL {
        let fit = fit_scores(id, &ds.x, &DetectorConfig::default()).unwrap();
        let mut previous: Vec<usize> = Vec::new();
        for pct in 1..=50 {
            let c = f64::from(pct) / 100.0;
            let res = fit.label(c).unwrap();
            let want = (pct as usize * n).div_ceil(100);
            assert_eq!(k_for(c, n), want, "{id} c={c}");
            assert_eq!(
                res.labels.iter().filter(|&&l| l == 1).count(),
                want,
                "{id} c={c}"
            );
            // raising contamination only ever adds points
            let flagged = res.outlier_indices();
            assert!(previous.iter().all(|i| flagged.contains(i)), "{id} c={c}");
            previous = flagged;
        }
    }
}

#[test]
fn planted_outliers_are_found_by_global_and_local_detectors() {
    let ds = planted(190, 10, 3, 4);
    for id in DetectorId::ALL {
        let res = detect(
            id.as_str(),
            &ds.x,
            &DetectorConfig::with_contamination(0.05),
        )
        .unwrap();
        assert_eq!(
            res.outlier_indices(),
            (190..200).collect::<Vec<_>>(),
            "{id}"
        );
    }
}

#[test]
fn kde_integrates_to_one_in_one_and_two_dimensions() {
    let mut rng = SynthRng::new(8);
    let pts1: Vec<[f64; 1]> = (0..15).map(|_| [rng.normal()]).collect();
    let m1 = KdeModel::new(
        Matrix::from_rows(&pts1).unwrap(),
        Bandwidth::from_matrix(Matrix::from_rows(&[[0.3]]).unwrap()).unwrap(),
    )
    .unwrap();
    let (lo, hi, steps) = (-12.0, 12.0, 4000);
    let h = (hi - lo) / steps as f64;
    let mass: f64 = (0..=steps)
        .map(|i| {
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            w * m1.density(&[lo + i as f64 * h]).unwrap()
        })
        .sum::<f64>()
        * h;
    assert!((mass - 1.0).abs() < 1e-3, "1d mass {mass}");

    let pts2: Vec<[f64; 2]> = (0..10).map(|_| [rng.normal(), rng.normal()]).collect();
    let m2 = KdeModel::new(
        Matrix::from_rows(&pts2).unwrap(),
        Bandwidth::from_matrix(Matrix::from_rows(&[[0.5, 0.2], [0.2, 0.4]]).unwrap()).unwrap(),
    )
    .unwrap();
    let (lo, hi, steps) = (-9.0, 9.0, 300);
    let h = (hi - lo) / steps as f64;
    let w = |i: usize| if i == 0 || i == steps { 0.5 } else { 1.0 };
    let mut mass = 0.0;
    for i in 0..=steps {
        for j in 0..=steps {
            let p = [lo + i as f64 * h, lo + j as f64 * h];
            mass += w(i) * w(j) * m2.density(&p).unwrap();
        }
    }
    mass *= h * h;
    assert!((mass - 1.0).abs() < 1e-3, "2d mass {mass}");
}

#[test]
fn mahalanobis_is_affine_invariant() {
    let ds = gen_synthetic(&SynthSpec::new(SynthKind::GaussianCov, 80, 4, 4, 12)).unwrap();
    let a = Matrix::from_rows(&[
        [2.0, 0.5, 0.0, 0.0],
        [0.0, 1.0, -0.3, 0.0],
        [0.1, 0.0, 0.7, 0.2],
        [0.0, 0.0, 0.0, 5.0],
    ])
    .unwrap();
    let moved = map_rows(&rotate(&ds.x, &a), |r| {
        r.iter()
            .zip([1.0, -2.0, 3.0, 0.5])
            .map(|(v, b)| v + b)
            .collect()
    });
    let s0 = mahalanobis_score(&ds.x).unwrap();
    let s1 = mahalanobis_score(&moved).unwrap();
    for (i, (a, b)) in s0.iter().zip(&s1).enumerate() {
        assert!((a - b).abs() <= 1e-8 * a.max(1.0), "row {i}: {a} vs {b}");
    }
}

#[test]
fn neighbor_scores_are_rotation_invariant() {
    let ds = planted(60, 3, 3, 30);
    let q = random_rotation(&mut SynthRng::new(9), 3);
    let moved = rotate(&ds.x, &q);
    for (a, b) in knn_dist_score(&ds.x, 5)
        .unwrap()
        .iter()
        .zip(knn_dist_score(&moved, 5).unwrap())
    {
        assert!((a - b).abs() <= 1e-10 * a.max(1.0));
    }
    for (a, b) in lof_score(&ds.x, 5)
        .unwrap()
        .iter()
        .zip(lof_score(&moved, 5).unwrap())
    {
        assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }
}

#[test]
fn pkde_reduces_dimension_on_correlated_data() {
    let mut spec = SynthSpec::new(SynthKind::GaussianCov, 300, 0, 10, 2);
    spec.params.rho = 0.95;
    let ds = gen_synthetic(&spec).unwrap();
    let cfg = DetectorConfig {
        variance_threshold: 0.9,
        ..DetectorConfig::default()
    };
    let fit = pkde_scores(&ds.x, &cfg).unwrap();
    // five strong pair directions carry about 97.5% of the variance
    assert_eq!(fit.reduced_dim, 5);
    let fixed = pkde_scores(
        &ds.x,
        &DetectorConfig {
            fixed_dim: Some(2),
            ..cfg
        },
    )
    .unwrap();
    assert_eq!(fixed.reduced_dim, 2);
}

#[test]
fn error_classes() {
    let x = Matrix::from_rows(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
    let cfg = DetectorConfig::default();
    assert!(matches!(
        detect("pkde", &x, &cfg),
        Err(Error::DegenerateData(_))
    ));
    assert!(matches!(
        detect("mahalanobis", &x, &cfg),
        Err(Error::DegenerateData(_))
    ));
    assert!(matches!(
        detect("lof", &x, &cfg),
        Err(Error::DegenerateDuplicates { .. })
    ));
    assert!(matches!(
        detect("forest", &x, &cfg),
        Err(Error::UnknownDetector(_))
    ));
    assert!(detect("pkde", &x, &DetectorConfig::with_contamination(0.0)).is_err());
}
