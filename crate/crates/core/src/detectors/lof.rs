//! Local Outlier Factor.
//!
//! With `N_k(a)` the `k` nearest neighbors of `a` (ties broken by row index):
//!
//! - `k_dist(a)` is the distance from `a` to its `k`-th neighbor;
//! - `reach_dist(a, b) = max(k_dist(b), dist(a, b))`;
//! - `lrd(a) = 1 / mean_{b in N_k(a)} reach_dist(a, b)`;
//! - `LOF(a) = mean_{b in N_k(a)} lrd(b) / lrd(a)`.
//!
//! Densities are capped at [`LOF_DENSITY_CAP`], so a point whose mean
//! reachability distance is zero (it has `k` exact duplicates) gets the cap
//! rather than an infinite density. A point and neighbors that all hit the cap
//! have ratio exactly 1.

use ndarray::Array2;

use super::{NeighborIndex, ScoreVector};
use crate::error::{Error, Result};

pub const LOF_DENSITY_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LofParams {
    pub k: usize,
}

impl Default for LofParams {
    fn default() -> Self {
        Self { k: 10 }
    }
}

pub fn lof_scores(points: &Array2<f64>, params: &LofParams) -> Result<ScoreVector> {
    let n = points.nrows();
    let k = params.k;
    if k == 0 {
        return Err(Error::InvalidParameter("LOF needs k >= 1".into()));
    }
    if n <= k {
        return Err(Error::InvalidParameter(format!(
            "LOF with k = {k} needs more than {k} points, got {n}"
        )));
    }
    let index = NeighborIndex::new(points.to_owned())?;
    let neighbors = index.all_member_knn(k)?;
    let k_dist: Vec<f64> = neighbors.iter().map(|nn| nn[k - 1].distance).collect();

    let lrd: Vec<f64> = neighbors
        .iter()
        .map(|nn| {
            let mean_reach =
                nn.iter().map(|b| k_dist[b.index].max(b.distance)).sum::<f64>() / k as f64;
            if mean_reach > 0.0 {
                (1.0 / mean_reach).min(LOF_DENSITY_CAP)
            } else {
                LOF_DENSITY_CAP
            }
        })
        .collect();

    let scores = neighbors
        .iter()
        .zip(&lrd)
        .map(|(nn, &own)| nn.iter().map(|b| lrd[b.index]).sum::<f64>() / k as f64 / own)
        .collect();
    ScoreVector::new(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn grid(side: usize) -> Array2<f64> {
        Array2::from_shape_fn((side * side, 2), |(i, c)| {
            if c == 0 {
                (i / side) as f64
            } else {
                (i % side) as f64
            }
        })
    }

    #[test]
    fn grid_interior_near_one() {
        let s = lof_scores(&grid(10), &LofParams { k: 8 }).unwrap();
        let interior = 4 * 10 + 5;
        let v = s.as_slice()[interior];
        assert!((0.8..=1.2).contains(&v), "{v}");
    }

    #[test]
    fn far_point_scores_highest() {
        let mut pts = grid(10).into_raw_vec_and_offset().0;
        pts.extend([4.5 + 50.0, 4.5]);
        let pts = Array2::from_shape_vec((101, 2), pts).unwrap();
        let s = lof_scores(&pts, &LofParams { k: 8 }).unwrap();
        assert_eq!(s.ranking()[0], 100);
        let top = s.as_slice()[100];
        assert!(s.as_slice()[..100].iter().all(|&v| v < top));
    }

    #[test]
    fn identical_points_all_one() {
        let pts = Array2::from_elem((12, 3), 2.5);
        let s = lof_scores(&pts, &LofParams { k: 4 }).unwrap();
        assert!(s.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn needs_more_points_than_k() {
        let pts = array![[0.0], [1.0], [2.0]];
        assert!(lof_scores(&pts, &LofParams { k: 3 }).is_err());
        assert!(lof_scores(&pts, &LofParams { k: 0 }).is_err());
        assert!(lof_scores(&pts, &LofParams { k: 2 }).is_ok());
    }

    #[test]
    fn binary_duplicates_stay_finite() {
        // Mostly-duplicate binary rows, as in output-space detection.
        let mut rows = vec![[0.0, 1.0]; 30];
        rows.extend([[1.0, 1.0]; 2]);
        rows.push([1.0, 0.0]);
        let pts = Array2::from_shape_fn((rows.len(), 2), |(i, c)| rows[i][c]);
        let s = lof_scores(&pts, &LofParams { k: 5 }).unwrap();
        assert!(s.as_slice().iter().all(|v| v.is_finite()));
        assert!(s.as_slice()[32] > s.as_slice()[0]);
    }
}
