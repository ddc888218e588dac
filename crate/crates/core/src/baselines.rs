//! Reference detectors: global Mahalanobis distance, kNN distance and the
//! local outlier factor. All neighbor searches are exact brute force.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linalg::{
    center_columns, covariance, quad_form_unchecked, squared_distance, sym_eigen, Matrix,
};

/// Default neighbor count for the kNN and LOF baselines.
pub const DEFAULT_NEIGHBORS: usize = 10;

const COND_LIMIT: f64 = 1e12;
const RIDGE: f64 = 1e-8;

/// k nearest neighbors of every row, self excluded.
#[derive(Debug, Clone)]
pub struct NeighborTable {
    pub k: usize,
    /// `n × k`, row-major.
    pub indices: Vec<usize>,
    /// `n × k`, row-major, non-decreasing within a row.
    pub distances: Vec<f64>,
}

impl NeighborTable {
    pub fn n(&self) -> usize {
        self.indices.len().checked_div(self.k).unwrap_or(0)
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn neighbor_distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }

    /// Distance to the k-th neighbor.
    pub fn k_distance(&self, i: usize) -> f64 {
        self.distances[(i + 1) * self.k - 1]
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

/// Exact kNN table. Distance ties go to the lower index.
pub fn knn_table(x: &Matrix, k: usize) -> Result<NeighborTable> {
    let n = x.rows();
    if k < 1 || k + 1 > n {
        return Err(invalid(format!(
            "neighbor count k = {k} must satisfy 1 <= k <= n - 1 = {}",
            n.saturating_sub(1)
        )));
    }
    let rows: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = x.row(i);
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (euclidean(p, x.row(j)), j))
                .collect();
            let by_dist =
                |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, by_dist);
                cand.truncate(k);
            }
            cand.sort_unstable_by(by_dist);
            cand
        })
        .collect();

    let mut indices = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    for row in rows {
        for (d, j) in row {
            indices.push(j);
            distances.push(d);
        }
    }
    Ok(NeighborTable {
        k,
        indices,
        distances,
    })
}

/// Distance from each point to its k-th nearest neighbor.
pub fn knn_dist_score(x: &Matrix, k: usize) -> Result<Vec<f64>> {
    Ok(knn_dist_from_table(&knn_table(x, k)?))
}

pub fn knn_dist_from_table(table: &NeighborTable) -> Vec<f64> {
    (0..table.n()).map(|i| table.k_distance(i)).collect()
}

/// Local outlier factor with neighborhoods of exactly `k` points.
pub fn lof_score(x: &Matrix, k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(invalid(format!("LOF needs k >= 2, got {k}")));
    }
    lof_from_table(&knn_table(x, k)?)
}

pub fn lof_from_table(table: &NeighborTable) -> Result<Vec<f64>> {
    let n = table.n();
    let k = table.k as f64;
    let mut lrd = vec![0.0; n];
    let mut degenerate = Vec::new();
    for (p, slot) in lrd.iter_mut().enumerate() {
        let reach_sum: f64 = table
            .neighbors(p)
            .iter()
            .zip(table.neighbor_distances(p))
            .map(|(&o, &d)| table.k_distance(o).max(d))
            .sum();
        if reach_sum == 0.0 {
            degenerate.push(p);
        } else {
            *slot = k / reach_sum;
        }
    }
    if !degenerate.is_empty() {
        return Err(Error::DegenerateDuplicates {
            indices: degenerate,
        });
    }
    Ok((0..n)
        .map(|p| {
            let ratio_sum: f64 = table.neighbors(p).iter().map(|&o| lrd[o]).sum();
            ratio_sum / (k * lrd[p])
        })
        .collect())
}

/// Global Gaussian model: sample mean and (possibly ridge-regularized)
/// inverse covariance.
#[derive(Debug, Clone)]
pub struct MahalanobisModel {
    pub mean: Vec<f64>,
    pub covariance_inv: Matrix,
    pub regularized: bool,
}

impl MahalanobisModel {
    pub fn fit(x: &Matrix) -> Result<Self> {
        let (centered, mean) = center_columns(x)?;
        let mut s = covariance(&centered)?;
        let d = s.rows();
        let mut eig = sym_eigen(&s)?;
        let lmax = eig.eigenvalues[0];
        let lmin = eig.eigenvalues[d - 1];
        let ill = !(lmin > 0.0) || lmax / lmin > COND_LIMIT;
        if ill {
            let ridge = RIDGE * s.trace() / d as f64;
            if !(ridge > 0.0) {
                return Err(Error::DegenerateData(
                    "all features are constant; covariance is zero".into(),
                ));
            }
            for i in 0..d {
                s.set(i, i, s.get(i, i) + ridge);
            }
            eig = sym_eigen(&s)?;
        }
        Ok(Self {
            mean,
            covariance_inv: eig.inverse()?,
            regularized: ill,
        })
    }

    pub fn score(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.mean.len() {
            return Err(invalid(format!(
                "data has {} columns, model was fit on {}",
                x.cols(),
                self.mean.len()
            )));
        }
        Ok(x.row_iter()
            .map(|r| quad_form_unchecked(r, &self.mean, &self.covariance_inv))
            .collect())
    }
}

/// Squared Mahalanobis distance of each row to the sample mean.
pub fn mahalanobis_score(x: &Matrix) -> Result<Vec<f64>> {
    MahalanobisModel::fit(x)?.score(x)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::linalg::test_util::*;

    fn line(points: &[f64]) -> Matrix {
        Matrix::new(points.len(), 1, points.to_vec()).unwrap()
    }

    #[test]
    fn collinear_table() {
        let t = knn_table(&line(&[0.0, 1.0, 3.0]), 1).unwrap();
        assert_eq!(t.indices, vec![1, 0, 1]);
        assert_eq!(t.distances, vec![1.0, 1.0, 2.0]);
        assert_eq!(
            knn_dist_score(&line(&[0.0, 1.0, 3.0]), 1).unwrap(),
            vec![1.0, 1.0, 2.0]
        );
    }

    #[test]
    fn full_table_is_a_permutation() {
        let mut r = rng(31);
        let x = random_matrix(&mut r, 8, 2);
        let t = knn_table(&x, 7).unwrap();
        for i in 0..8 {
            let mut nb = t.neighbors(i).to_vec();
            nb.sort_unstable();
            let want: Vec<usize> = (0..8).filter(|&j| j != i).collect();
            assert_eq!(nb, want);
        }
    }

    #[test]
    fn table_matches_sort_oracle() {
        let mut r = rng(32);
        let x = random_matrix(&mut r, 30, 4);
        let t = knn_table(&x, 5).unwrap();
        for i in 0..30 {
            let mut all: Vec<(f64, usize)> = (0..30)
                .filter(|&j| j != i)
                .map(|j| {
                    let d: f64 = (0..4).map(|c| (x.get(i, c) - x.get(j, c)).powi(2)).sum();
                    (d.sqrt(), j)
                })
                .collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let want: Vec<usize> = all[..5].iter().map(|p| p.1).collect();
            assert_eq!(t.neighbors(i), &want[..]);
            for (d, p) in t.neighbor_distances(i).iter().zip(&all[..5]) {
                assert!((d - p.0).abs() < 1e-12);
            }
        }
        assert_eq!(
            knn_dist_score(&x, 5).unwrap(),
            (0..30)
                .map(|i| t.neighbor_distances(i)[4])
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn duplicates_have_zero_knn_distance() {
        let s = knn_dist_score(&line(&[0.0, 0.0, 5.0, 5.0, 9.0]), 1).unwrap();
        assert_eq!(&s[..4], &[0.0; 4]);
    }

    #[test]
    fn knn_range_checks() {
        let x = line(&[0.0, 1.0, 2.0]);
        assert!(knn_table(&x, 0).is_err());
        assert!(knn_table(&x, 3).is_err());
        assert!(lof_score(&x, 1).is_err());
    }

    #[test]
    fn lof_uniform_grid_interior_near_one() {
        let x = line(&(0..10).map(f64::from).collect::<Vec<_>>());
        let s = lof_score(&x, 2).unwrap();
        // points within k of an end see a one-sided neighborhood (LOF 1.25)
        for (i, v) in s.iter().enumerate().take(8).skip(2) {
            assert!((0.8..=1.2).contains(v), "point {i}: {v}");
        }
        assert_eq!(s[1], 1.25);
        assert!((s[2] - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn lof_matches_formula_oracle() {
        // direct transcription of k-distance, reach-dist, lrd and LOF
        let mut r = rng(33);
        let x = random_matrix(&mut r, 25, 3);
        let k = 4;
        let n = 25;
        let dist = |a: usize, b: usize| euclidean(x.row(a), x.row(b));
        let neigh = |p: usize| {
            let mut v: Vec<usize> = (0..n).filter(|&j| j != p).collect();
            v.sort_by(|&a, &b| dist(p, a).partial_cmp(&dist(p, b)).unwrap().then(a.cmp(&b)));
            v.truncate(k);
            v
        };
        let kdist = |p: usize| dist(p, *neigh(p).last().unwrap());
        let lrd = |p: usize| {
            let m: f64 = neigh(p)
                .iter()
                .map(|&o| kdist(o).max(dist(p, o)))
                .sum::<f64>()
                / k as f64;
            1.0 / m
        };
        let got = lof_score(&x, k).unwrap();
        for p in 0..n {
            let want = neigh(p).iter().map(|&o| lrd(o) / lrd(p)).sum::<f64>() / k as f64;
            assert!((got[p] - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn lof_flags_far_point() {
        let mut pts: Vec<f64> = (0..20).map(|i| f64::from(i) * 0.1).collect();
        pts.push(50.0);
        let s = lof_score(&line(&pts), 3).unwrap();
        let argmax = s
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, 20);
    }

    #[test]
    fn lof_rejects_identical_points() {
        match lof_score(&line(&[1.0; 6]), 2) {
            Err(Error::DegenerateDuplicates { indices }) => {
                assert_eq!(indices, (0..6).collect::<Vec<_>>())
            }
            other => panic!("expected duplicates error, got {other:?}"),
        }
    }

    #[test]
    fn mahalanobis_cases() {
        // standardized cross: covariance is the identity
        let x = Matrix::from_rows(&[
            [2f64.sqrt(), 0.0],
            [-(2f64.sqrt()), 0.0],
            [0.0, 2f64.sqrt()],
            [0.0, -(2f64.sqrt())],
            [0.0, 0.0],
        ])
        .unwrap();
        let m = MahalanobisModel::fit(&x).unwrap();
        let s = m.score(&x).unwrap();
        for (i, v) in s.iter().enumerate() {
            let e: f64 = x.row(i).iter().map(|a| a * a).sum();
            assert!((v - e).abs() < 1e-12);
        }
        assert_eq!(s[4], 0.0);
    }

    #[test]
    fn mahalanobis_quadratic_form_oracle() {
        let mut r = rng(34);
        let x = random_matrix(&mut r, 50, 3);
        let s = mahalanobis_score(&x).unwrap();
        let model = MahalanobisModel::fit(&x).unwrap();
        assert!(!model.regularized);
        for (i, v) in s.iter().enumerate() {
            let diff: Vec<f64> = (0..3).map(|c| x.get(i, c) - model.mean[c]).collect();
            let mut q = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    q += diff[a] * model.covariance_inv.get(a, b) * diff[b];
                }
            }
            assert!((v - q).abs() <= 1e-10 * q.max(1.0));
        }
    }

    #[test]
    fn mahalanobis_regularizes_rank_deficient() {
        // more features than rows
        let mut r = rng(35);
        let x = random_matrix(&mut r, 4, 6);
        let m = MahalanobisModel::fit(&x).unwrap();
        assert!(m.regularized);
        assert!(m.score(&x).unwrap().iter().all(|v| v.is_finite()));

        let c = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(
            MahalanobisModel::fit(&c),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn knn_distance_grows_with_k() {
        let mut r = rng(36);
        let x = random_matrix(&mut r, 20, 3);
        let mut prev = knn_dist_score(&x, 1).unwrap();
        for k in 2..10 {
            let cur = knn_dist_score(&x, k).unwrap();
            assert!(cur.iter().zip(&prev).all(|(c, p)| c >= p));
            prev = cur;
        }
    }

    #[test]
    fn lof_square_grid_interior() {
        let mut pts = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                pts.push([f64::from(i), f64::from(j)]);
            }
        }
        let x = Matrix::from_rows(&pts).unwrap();
        let s = lof_score(&x, 4).unwrap();
        for i in 2..18 {
            for j in 2..18 {
                let v = s[i * 20 + j];
                assert!((0.9..=1.1).contains(&v), "({i},{j}): {v}");
            }
        }
    }
}
