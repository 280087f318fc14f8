//! Base multivariate outlier detectors over real-valued point sets.

mod knn;
mod lof;
mod ocs;

pub use knn::{Neighbor, NeighborIndex};
pub use lof::{lof_scores, LofParams, LOF_DENSITY_CAP};
pub use ocs::{ocs_fit, ocs_scores, rbf_kernel, OcsModel, OcsParams};

use crate::error::{Error, Result};

/// One finite outlier score per instance; larger means more anomalous.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "score {i} is not finite ({})",
                scores[i]
            )));
        }
        Ok(Self(scores))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Instance indices from most to least anomalous; ties keep index order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.0.len()).collect();
        idx.sort_by(|&a, &b| self.0[b].total_cmp(&self.0[a]));
        idx
    }

    /// Writes `instance_index,score` rows.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "instance_index,score")?;
        for (i, s) in self.0.iter().enumerate() {
            writeln!(w, "{i},{s}")?;
        }
        Ok(())
    }
}
