//! One-class SVM, nu formulation, RBF kernel.
//!
//! Dual problem solved here:
//!
//! ```text
//! minimize    1/2 a^T K a
//! subject to  0 <= a_i <= 1 / (nu N),   sum_i a_i = 1
//! ```
//!
//! with `K(a, b) = exp(-gamma ||a - b||^2)`. The solver is a two-variable
//! working-set method using second-order pair selection (Fan, Chen & Lin, 2005)
//! on a precomputed kernel matrix. It stops when the maximal KKT violation
//! `max_{a_j > 0} G_j - min_{a_i < C} G_i` (with `G = K a`) drops below
//! `solver_tol`.
//!
//! The offset `rho` is the mean gradient over free coefficients, or the
//! midpoint of the feasible interval when none are free. The decision function
//! is `f(z) = sum_i a_i K(x_i, z) - rho`; negative values lie outside the
//! estimated support.

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use super::ScoreVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcsParams {
    pub nu: f64,
    /// RBF width; `None` means `1 / p` for `p`-dimensional points.
    pub gamma: Option<f64>,
    pub solver_tol: f64,
    pub max_iter: usize,
}

impl Default for OcsParams {
    fn default() -> Self {
        Self {
            nu: 0.1,
            gamma: None,
            solver_tol: 1e-6,
            max_iter: 10_000_000,
        }
    }
}

impl OcsParams {
    pub fn gamma_for(&self, p: usize) -> f64 {
        self.gamma.unwrap_or(1.0 / p as f64)
    }

    fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "nu must be in (0, 1], got {}",
                self.nu
            )));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "gamma must be positive, got {g}"
                )));
            }
        }
        if !(self.solver_tol > 0.0) {
            return Err(Error::InvalidParameter("solver_tol must be positive".into()));
        }
        Ok(())
    }
}

pub fn rbf_kernel(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// A fitted one-class SVM.
#[derive(Debug, Clone)]
pub struct OcsModel {
    support: Array2<f64>,
    support_alpha: Vec<f64>,
    alpha: Vec<f64>,
    offset: f64,
    gamma: f64,
    upper_bound: f64,
    iterations: usize,
    kkt_gap: f64,
}

impl OcsModel {
    /// Dual coefficients for every training row.
    pub fn dual_coefficients(&self) -> &[f64] {
        &self.alpha
    }

    pub fn support_indices(&self) -> Vec<usize> {
        self.alpha
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Box bound `1 / (nu N)`.
    pub fn upper_bound(&self) -> f64 {
        self.upper_bound
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn kkt_gap(&self) -> f64 {
        self.kkt_gap
    }

    pub fn dim(&self) -> usize {
        self.support.ncols()
    }

    pub fn decision(&self, z: ArrayView1<'_, f64>) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "model has {} features, point has {}",
                self.dim(),
                z.len()
            )));
        }
        let sum: f64 = self
            .support
            .rows()
            .into_iter()
            .zip(&self.support_alpha)
            .map(|(sv, a)| a * rbf_kernel(sv, z, self.gamma))
            .sum();
        Ok(sum - self.offset)
    }
}

fn kernel_matrix(points: &Array2<f64>, gamma: f64) -> Vec<f64> {
    let n = points.nrows();
    let mut k = vec![0.0; n * n];
    k.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let xi = points.row(i);
        for (j, kij) in row.iter_mut().enumerate() {
            *kij = rbf_kernel(xi, points.row(j), gamma);
        }
    });
    k
}

pub fn ocs_fit(points: &Array2<f64>, params: &OcsParams) -> Result<OcsModel> {
    params.validate()?;
    let n = points.nrows();
    let p = points.ncols();
    if n < 2 || p == 0 {
        return Err(Error::InvalidParameter(format!(
            "one-class SVM needs at least 2 points with >= 1 feature, got {n}x{p}"
        )));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("points must be finite".into()));
    }
    let gamma = params.gamma_for(p);
    let c = 1.0 / (params.nu * n as f64);
    let kmat = kernel_matrix(points, gamma);
    let kr = |i: usize| &kmat[i * n..(i + 1) * n];

    // Feasible start: the first floor(nu N) coefficients at the bound, the remainder on the next.
    let mut alpha = vec![0.0; n];
    let full = ((params.nu * n as f64).floor() as usize).min(n);
    for a in alpha.iter_mut().take(full) {
        *a = c;
    }
    if full < n {
        alpha[full] = (1.0 - full as f64 * c).max(0.0);
    }

    let mut grad = vec![0.0; n];
    for (t, &a) in alpha.iter().enumerate() {
        if a != 0.0 {
            for (g, kt) in grad.iter_mut().zip(kr(t)) {
                *g += a * kt;
            }
        }
    }

    const TAU: f64 = 1e-12;
    let mut iterations = 0;
    let mut gap;
    loop {
        // i: can increase, smallest gradient.
        let mut i = usize::MAX;
        let mut g_min = f64::INFINITY;
        let mut g_max = f64::NEG_INFINITY;
        for t in 0..n {
            if alpha[t] < c && grad[t] < g_min {
                g_min = grad[t];
                i = t;
            }
            if alpha[t] > 0.0 && grad[t] > g_max {
                g_max = grad[t];
            }
        }
        gap = g_max - g_min;
        if i == usize::MAX || gap <= params.solver_tol {
            break;
        }
        if iterations >= params.max_iter {
            return Err(Error::SolverNotConverged {
                iterations,
                gap,
                tol: params.solver_tol,
            });
        }
        iterations += 1;

        // j: can decrease, maximal second-order decrease.
        let ki = kr(i);
        let kii = ki[i];
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if alpha[t] > 0.0 {
                let b = grad[t] - g_min;
                if b > 0.0 {
                    let a = (kii + kmat[t * n + t] - 2.0 * ki[t]).max(TAU);
                    let obj = -(b * b) / a;
                    if obj < best {
                        best = obj;
                        j = t;
                    }
                }
            }
        }
        if j == usize::MAX {
            break;
        }
        let kj = kr(j);
        let curvature = (kii + kj[j] - 2.0 * ki[j]).max(TAU);
        let mut delta = (grad[j] - grad[i]) / curvature;
        let room_i = c - alpha[i];
        let room_j = alpha[j];
        let (mut clip_i, mut clip_j) = (false, false);
        if delta >= room_i {
            delta = room_i;
            clip_i = true;
        }
        if delta >= room_j {
            delta = room_j;
            clip_j = true;
            clip_i = delta == room_i;
        }
        alpha[i] = if clip_i { c } else { alpha[i] + delta };
        alpha[j] = if clip_j { 0.0 } else { alpha[j] - delta };
        for ((g, a), b) in grad.iter_mut().zip(ki).zip(kj) {
            *g += delta * (a - b);
        }
    }

    let free: Vec<f64> = (0..n)
        .filter(|&t| alpha[t] > 0.0 && alpha[t] < c)
        .map(|t| grad[t])
        .collect();
    let offset = if free.is_empty() {
        let lo = (0..n)
            .filter(|&t| alpha[t] >= c)
            .map(|t| grad[t])
            .fold(f64::NEG_INFINITY, f64::max);
        let hi = (0..n)
            .filter(|&t| alpha[t] <= 0.0)
            .map(|t| grad[t])
            .fold(f64::INFINITY, f64::min);
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo,
            (false, true) => hi,
            (false, false) => 0.0,
        }
    } else {
        free.iter().sum::<f64>() / free.len() as f64
    };

    let support_idx: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    let support = points.select(ndarray::Axis(0), &support_idx);
    let support_alpha = support_idx.iter().map(|&t| alpha[t]).collect();
    Ok(OcsModel {
        support,
        support_alpha,
        alpha,
        offset,
        gamma,
        upper_bound: c,
        iterations,
        kkt_gap: gap.max(0.0),
    })
}

/// Negated decision values, so larger is more anomalous.
pub fn ocs_scores(model: &OcsModel, points: &Array2<f64>) -> Result<ScoreVector> {
    if points.ncols() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} features, points have {}",
            model.dim(),
            points.ncols()
        )));
    }
    let scores: Vec<f64> = (0..points.nrows())
        .into_par_iter()
        .map(|i| model.decision(points.row(i)).map(|f| -f))
        .collect::<Result<_>>()?;
    ScoreVector::new(scores)
}
