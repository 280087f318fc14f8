use std::cmp::Ordering;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// A neighbor row and its Euclidean distance to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

fn by_distance_then_index(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then_with(|| a.index.cmp(&b.index))
}

pub(crate) fn euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Brute-force Euclidean k-NN over a fixed point set.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    points: Array2<f64>,
}

impl NeighborIndex {
    pub fn new(points: Array2<f64>) -> Result<Self> {
        if points.nrows() < 2 {
            return Err(Error::InvalidParameter(
                "neighbor index needs at least 2 points".into(),
            ));
        }
        if points.ncols() == 0 {
            return Err(Error::InvalidParameter("points have no columns".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("points must be finite".into()));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    fn select(&self, q: ArrayView1<'_, f64>, k: usize, exclude: Option<usize>) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = self
            .points
            .rows()
            .into_iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != exclude)
            .map(|(index, row)| Neighbor {
                index,
                distance: euclidean(q, row),
            })
            .collect();
        if k < all.len() {
            all.select_nth_unstable_by(k, by_distance_then_index);
            all.truncate(k);
        }
        all.sort_by(by_distance_then_index);
        all
    }

    /// The `k` rows nearest to an external query point.
    pub fn query(&self, q: ArrayView1<'_, f64>, k: usize) -> Result<Vec<Neighbor>> {
        if q.len() != self.points.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "query has {} coordinates, index has {}",
                q.len(),
                self.points.ncols()
            )));
        }
        if k == 0 || k > self.len() {
            return Err(Error::InvalidParameter(format!(
                "k = {k} outside 1..={}",
                self.len()
            )));
        }
        Ok(self.select(q, k, None))
    }

    /// The `k` rows nearest to member row `row`, excluding the row itself.
    pub fn query_member(&self, row: usize, k: usize) -> Result<Vec<Neighbor>> {
        if row >= self.len() {
            return Err(Error::InvalidParameter(format!("no row {row}")));
        }
        if k == 0 || k >= self.len() {
            return Err(Error::InvalidParameter(format!(
                "k = {k} outside 1..={}",
                self.len() - 1
            )));
        }
        Ok(self.select(self.points.row(row), k, Some(row)))
    }

    /// Member queries for every row, computed in parallel.
    pub fn all_member_knn(&self, k: usize) -> Result<Vec<Vec<Neighbor>>> {
        (0..self.len())
            .into_par_iter()
            .map(|row| self.query_member(row, k))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use ndarray::array;

    #[test]
    fn line_example() {
        let idx = NeighborIndex::new(array![[0.0], [1.0], [3.0]]).unwrap();
        let nn = idx.query_member(0, 2).unwrap();
        assert_eq!(
            nn,
            vec![
                Neighbor { index: 1, distance: 1.0 },
                Neighbor { index: 2, distance: 3.0 }
            ]
        );
    }

    #[test]
    fn duplicates_come_first_with_zero_distance() {
        let idx = NeighborIndex::new(array![[1.0, 1.0], [5.0, 5.0], [1.0, 1.0], [1.0, 1.0]]).unwrap();
        let nn = idx.query_member(0, 3).unwrap();
        assert_eq!(nn[0], Neighbor { index: 2, distance: 0.0 });
        assert_eq!(nn[1], Neighbor { index: 3, distance: 0.0 });
        assert_eq!(nn[2].index, 1);
    }

    #[test]
    fn k_out_of_range() {
        let idx = NeighborIndex::new(array![[0.0], [1.0], [3.0]]).unwrap();
        assert!(idx.query_member(0, 3).is_err());
        assert!(idx.query_member(0, 0).is_err());
        assert!(idx.query(array![0.5].view(), 4).is_err());
        assert_eq!(idx.query(array![0.5].view(), 3).unwrap().len(), 3);
        assert!(idx.query(array![0.5, 1.0].view(), 1).is_err());
    }

    #[test]
    fn matches_full_sort_oracle() {
        let mut rng = SplitMix64::new(17);
        // Coarse grid values force exact distance ties.
        let pts = Array2::from_shape_fn((200, 3), |_| (rng.below(5) as f64) * 0.5);
        let idx = NeighborIndex::new(pts.clone()).unwrap();
        for row in (0..200).step_by(7) {
            for k in [1, 5, 17, 199] {
                let got = idx.query_member(row, k).unwrap();
                let mut oracle: Vec<(f64, usize)> = (0..200)
                    .filter(|&j| j != row)
                    .map(|j| {
                        let d2: f64 = (0..3).map(|c| (pts[[row, c]] - pts[[j, c]]).powi(2)).sum();
                        (d2.sqrt(), j)
                    })
                    .collect();
                oracle.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                let want: Vec<usize> = oracle[..k].iter().map(|o| o.1).collect();
                let have: Vec<usize> = got.iter().map(|n| n.index).collect();
                assert_eq!(have, want);
            }
        }
    }
}
