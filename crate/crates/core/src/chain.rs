//! Chain-rule decomposition of `P(Y | X)` into per-output logistic factors.
//!
//! Output `i` is modeled as `P(Y_i = 1 | x, y_parents(i)) = sigmoid(w . [x, y_parents, 1])`,
//! where the parents are outputs earlier in the chain order. Each factor is
//! fit independently by minimizing its L2-regularized negative log-likelihood
//! (the bias is not penalized) with observed parent bits as features.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Probabilities entering a logarithm are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-12;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-ln sigmoid(t)` (softplus of `-t`), evaluated without overflow or cancellation.
///
/// Training uses the exact loss so the problem stays convex; probabilities are
/// clamped only when reported.
fn neg_log_sigmoid(t: f64) -> f64 {
    if t > 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

/// Evaluation order of the outputs and the parent set of each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainOrder {
    order: Vec<usize>,
    /// Indexed by output dimension, not by position in `order`.
    parents: Vec<Vec<usize>>,
}

impl ChainOrder {
    /// Validates that `order` is a permutation of `0..d` and each parent
    /// precedes its child in `order`.
    pub fn new(order: Vec<usize>, parents: Vec<Vec<usize>>) -> Result<Self> {
        let d = order.len();
        if d == 0 {
            return Err(Error::InvalidParameter("chain order is empty".into()));
        }
        if parents.len() != d {
            return Err(Error::InvalidParameter(format!(
                "{} parent sets for {d} outputs",
                parents.len()
            )));
        }
        let mut position = vec![usize::MAX; d];
        for (pos, &dim) in order.iter().enumerate() {
            if dim >= d || position[dim] != usize::MAX {
                return Err(Error::InvalidParameter(format!(
                    "chain order {order:?} is not a permutation of 0..{d}"
                )));
            }
            position[dim] = pos;
        }
        for (dim, ps) in parents.iter().enumerate() {
            let mut seen = vec![false; d];
            for &p in ps {
                if p >= d || seen[p] {
                    return Err(Error::InvalidParameter(format!(
                        "invalid or repeated parent {p} of output {dim}"
                    )));
                }
                seen[p] = true;
                if position[p] >= position[dim] {
                    return Err(Error::InvalidParameter(format!(
                        "parent {p} does not precede output {dim} in the chain order"
                    )));
                }
            }
        }
        Ok(Self { order, parents })
    }

    /// Natural order `0..d`, every output conditioned on all earlier ones.
    pub fn full_chain(d: usize) -> Self {
        Self::full_chain_in_order((0..d).collect()).expect("identity is a permutation")
    }

    /// Full chain in the given order; parents are listed in chain order.
    pub fn full_chain_in_order(order: Vec<usize>) -> Result<Self> {
        let mut parents = vec![Vec::new(); order.len()];
        for (pos, &dim) in order.iter().enumerate() {
            if dim < parents.len() {
                parents[dim] = order[..pos].to_vec();
            }
        }
        Self::new(order, parents)
    }

    pub fn d(&self) -> usize {
        self.order.len()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn parents(&self, dim: usize) -> &[usize] {
        &self.parents[dim]
    }
}

/// Logistic factor for one output.
///
/// Weight layout: `m` input weights, one weight per parent (in parent-list
/// order), then the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DimModel {
    dim_index: usize,
    weights: Array1<f64>,
    lambda: f64,
}

impl DimModel {
    pub fn new(dim_index: usize, weights: Array1<f64>, lambda: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("weight vector is empty".into()));
        }
        if !weights.iter().all(|w| w.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite weight in model for output {dim_index}"
            )));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        Ok(Self {
            dim_index,
            weights,
            lambda,
        })
    }

    pub fn zeros(dim_index: usize, len: usize, lambda: f64) -> Result<Self> {
        Self::new(dim_index, Array1::zeros(len), lambda)
    }

    pub fn dim_index(&self) -> usize {
        self.dim_index
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn bias(&self) -> f64 {
        self.weights[self.weights.len() - 1]
    }

    /// Same model with every weight negated.
    pub fn negated(&self) -> Self {
        Self {
            weights: -&self.weights,
            ..self.clone()
        }
    }

    /// `w . [x, y_parents, 1]`.
    pub fn linear(&self, x: ArrayView1<'_, f64>, y_parents: &[u8]) -> Result<f64> {
        let m = x.len();
        if m + y_parents.len() + 1 != self.weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "model for output {} has {} weights, got {} inputs and {} parents",
                self.dim_index,
                self.weights.len(),
                m,
                y_parents.len()
            )));
        }
        let w = self.weights.as_slice().expect("owned 1-d array is contiguous");
        let mut z = w[w.len() - 1];
        for (wj, xj) in w[..m].iter().zip(x.iter()) {
            z += wj * xj;
        }
        for (wk, &yk) in w[m..m + y_parents.len()].iter().zip(y_parents) {
            if yk == 1 {
                z += wk;
            }
        }
        Ok(z)
    }

    /// `P(Y_i = 1 | x, y_parents)`, clamped away from 0 and 1.
    pub fn predict_prob(&self, x: ArrayView1<'_, f64>, y_parents: &[u8]) -> Result<f64> {
        Ok(clamp_prob(sigmoid(self.linear(x, y_parents)?)))
    }

    /// `P(Y_i = bit | x, y_parents)`, clamped away from 0 and 1.
    pub fn prob_of(&self, x: ArrayView1<'_, f64>, y_parents: &[u8], bit: u8) -> Result<f64> {
        let z = self.linear(x, y_parents)?;
        Ok(clamp_prob(sigmoid(if bit == 1 { z } else { -z })))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FitDiagnostics {
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// A fitted (or ground-truth) chain of logistic factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    order: ChainOrder,
    dims: Vec<DimModel>,
    diagnostics: Vec<FitDiagnostics>,
    input_dim: usize,
}

impl ChainModel {
    pub fn new(
        order: ChainOrder,
        dims: Vec<DimModel>,
        diagnostics: Vec<FitDiagnostics>,
        input_dim: usize,
    ) -> Result<Self> {
        let d = order.d();
        if dims.len() != d || diagnostics.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "chain of {d} outputs has {} models and {} diagnostics",
                dims.len(),
                diagnostics.len()
            )));
        }
        for (i, dm) in dims.iter().enumerate() {
            if dm.dim_index != i {
                return Err(Error::InvalidParameter(format!(
                    "model at slot {i} is for output {}",
                    dm.dim_index
                )));
            }
            let expected = input_dim + order.parents(i).len() + 1;
            if dm.weights.len() != expected {
                return Err(Error::DimensionMismatch(format!(
                    "output {i} needs {expected} weights, has {}",
                    dm.weights.len()
                )));
            }
        }
        Ok(Self {
            order,
            dims,
            diagnostics,
            input_dim,
        })
    }

    pub fn order(&self) -> &ChainOrder {
        &self.order
    }

    pub fn dims(&self) -> &[DimModel] {
        &self.dims
    }

    pub fn diagnostics(&self) -> &[FitDiagnostics] {
        &self.diagnostics
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.order.d()
    }

    /// Per-output probabilities of the observed bits of `y` given `x` and the
    /// observed parent bits, indexed by output dimension.
    pub fn observed_probs(&self, x: ArrayView1<'_, f64>, y: ArrayView1<'_, u8>) -> Result<Vec<f64>> {
        if x.len() != self.input_dim || y.len() != self.output_dim() {
            return Err(Error::DimensionMismatch(format!(
                "model expects ({}, {}) got ({}, {})",
                self.input_dim,
                self.output_dim(),
                x.len(),
                y.len()
            )));
        }
        let mut parents = Vec::with_capacity(self.output_dim());
        (0..self.output_dim())
            .map(|i| {
                parents.clear();
                parents.extend(self.order.parents(i).iter().map(|&p| y[p]));
                self.dims[i].prob_of(x, &parents, y[i])
            })
            .collect()
    }

    /// `P(y | x)` as the product of the chain factors.
    pub fn joint_prob(&self, x: ArrayView1<'_, f64>, y: ArrayView1<'_, u8>) -> Result<f64> {
        Ok(self.observed_probs(x, y)?.into_iter().product())
    }
}

/// Optimizer settings for [`fit_chain`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub lambda: f64,
    /// Gradient 2-norm at which a factor counts as converged.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            tol: 1e-6,
            max_iter: 500,
        }
    }
}

/// Design matrix `[x, y_parents, 1]` and target bits for one output.
#[derive(Debug, Clone)]
pub struct DimDesign {
    pub features: Array2<f64>,
    pub targets: Array1<f64>,
}

pub fn dim_design(ds: &Dataset, order: &ChainOrder, dim: usize) -> Result<DimDesign> {
    if order.d() != ds.d() {
        return Err(Error::DimensionMismatch(format!(
            "chain has {} outputs, dataset has {}",
            order.d(),
            ds.d()
        )));
    }
    if dim >= ds.d() {
        return Err(Error::InvalidParameter(format!("no output dimension {dim}")));
    }
    let m = ds.m();
    let parents = order.parents(dim);
    let width = m + parents.len() + 1;
    let mut features = Array2::zeros((ds.n(), width));
    for (n, mut row) in features.rows_mut().into_iter().enumerate() {
        row.slice_mut(ndarray::s![..m]).assign(&ds.input_row(n));
        for (k, &p) in parents.iter().enumerate() {
            row[m + k] = f64::from(ds.outputs()[[n, p]]);
        }
        row[width - 1] = 1.0;
    }
    let targets = ds.outputs().column(dim).mapv(f64::from);
    Ok(DimDesign { features, targets })
}

impl DimDesign {
    fn check_len(&self, w: &Array1<f64>) -> Result<()> {
        if w.len() != self.features.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} features",
                w.len(),
                self.features.ncols()
            )));
        }
        Ok(())
    }

    fn penalty(w: &Array1<f64>, lambda: f64) -> f64 {
        let nb = &w.as_slice().expect("contiguous")[..w.len() - 1];
        0.5 * lambda * nb.iter().map(|v| v * v).sum::<f64>()
    }

    /// Negative log-likelihood plus `(lambda / 2) * ||w_nonbias||^2`.
    pub fn objective(&self, w: &Array1<f64>, lambda: f64) -> Result<f64> {
        self.check_len(w)?;
        let z = self.features.dot(w);
        let nll: f64 = z
            .iter()
            .zip(self.targets.iter())
            .map(|(&zn, &yn)| neg_log_sigmoid(if yn == 1.0 { zn } else { -zn }))
            .sum();
        Ok(nll + Self::penalty(w, lambda))
    }

    /// `sum_n (sigmoid(z_n) - y_n) f_n + lambda * w_nonbias`.
    pub fn gradient(&self, w: &Array1<f64>, lambda: f64) -> Result<Array1<f64>> {
        self.check_len(w)?;
        let residual = self.features.dot(w).mapv(sigmoid) - &self.targets;
        let mut g = self.features.t().dot(&residual);
        let last = w.len() - 1;
        for j in 0..last {
            g[j] += lambda * w[j];
        }
        Ok(g)
    }

    fn hessian(&self, w: &Array1<f64>, lambda: f64) -> DMatrix<f64> {
        let p = w.len();
        let s = self.features.dot(w).mapv(|z| {
            let q = sigmoid(z);
            q * (1.0 - q)
        });
        let mut weighted = self.features.clone();
        for (mut row, &sn) in weighted.rows_mut().into_iter().zip(s.iter()) {
            row *= sn;
        }
        let h = self.features.t().dot(&weighted);
        let mut out = DMatrix::from_fn(p, p, |i, j| h[[i, j]]);
        for j in 0..p - 1 {
            out[(j, j)] += lambda;
        }
        out
    }
}

/// Objective of `model` on its output dimension of `ds`.
pub fn nll_objective(model: &DimModel, ds: &Dataset, order: &ChainOrder) -> Result<f64> {
    dim_design(ds, order, model.dim_index)?.objective(&model.weights, model.lambda)
}

/// Gradient of [`nll_objective`] with respect to the weights.
pub fn nll_gradient(model: &DimModel, ds: &Dataset, order: &ChainOrder) -> Result<Array1<f64>> {
    dim_design(ds, order, model.dim_index)?.gradient(&model.weights, model.lambda)
}

fn norm2(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// Damped Newton iteration from `init` with Armijo backtracking.
fn minimize(
    design: &DimDesign,
    dim: usize,
    init: Array1<f64>,
    opts: &FitOptions,
) -> Result<(Array1<f64>, FitDiagnostics)> {
    design.check_len(&init)?;
    let lambda = opts.lambda;
    let mut w = init;
    let mut f = design.objective(&w, lambda)?;
    let mut g = design.gradient(&w, lambda)?;
    let mut gnorm = norm2(&g);
    let mut iterations = 0;
    if !f.is_finite() || !gnorm.is_finite() {
        return Err(Error::NonFiniteObjective { dim });
    }

    while gnorm > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let step = newton_direction(design, &w, &g, lambda);
        let slope = g.dot(&step);
        // A non-descent direction means the solve was too inaccurate; use steepest descent.
        let (dir, slope) = if slope < 0.0 {
            (step, slope)
        } else {
            (-&g, -gnorm * gnorm)
        };

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &w + &(&dir * alpha);
            let fc = design.objective(&cand, lambda)?;
            if !fc.is_finite() {
                return Err(Error::NonFiniteObjective { dim });
            }
            if fc <= f + 1e-4 * alpha * slope {
                accepted = Some((cand, fc, None));
                break;
            }
            // Near the optimum the decrease drops below rounding noise in the
            // objective; accept a full step that still shrinks the gradient.
            if alpha == 1.0 && fc <= f + 1e-12 * f.abs().max(1.0) {
                let gc = design.gradient(&cand, lambda)?;
                if norm2(&gc) < gnorm {
                    accepted = Some((cand, fc, Some(gc)));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else {
            break;
        };
        w = cand;
        f = fc;
        g = match gc {
            Some(gc) => gc,
            None => design.gradient(&w, lambda)?,
        };
        gnorm = norm2(&g);
        if !gnorm.is_finite() {
            return Err(Error::NonFiniteObjective { dim });
        }
    }

    Ok((
        w,
        FitDiagnostics {
            objective: f,
            grad_norm: gnorm,
            iterations,
            converged: gnorm <= opts.tol,
        },
    ))
}

fn newton_direction(design: &DimDesign, w: &Array1<f64>, g: &Array1<f64>, lambda: f64) -> Array1<f64> {
    let h = design.hessian(w, lambda);
    let rhs = DVector::from_iterator(g.len(), g.iter().map(|v| -v));
    let scale = (0..h.nrows()).map(|i| h[(i, i)]).fold(0.0, f64::max).max(1.0);
    let mut jitter = 0.0;
    for _ in 0..8 {
        let mut hj = h.clone();
        for i in 0..hj.nrows() {
            hj[(i, i)] += jitter;
        }
        if let Some(chol) = hj.cholesky() {
            let sol = chol.solve(&rhs);
            if sol.iter().all(|v| v.is_finite()) {
                return Array1::from_iter(sol.iter().copied());
            }
        }
        jitter = if jitter == 0.0 { 1e-12 * scale } else { jitter * 100.0 };
    }
    -g
}

/// Fits the factor for output `dim`, starting from `init` (zeros when `None`).
pub fn fit_dim(
    ds: &Dataset,
    order: &ChainOrder,
    dim: usize,
    opts: &FitOptions,
    init: Option<&Array1<f64>>,
) -> Result<(DimModel, FitDiagnostics)> {
    validate_options(opts)?;
    let design = dim_design(ds, order, dim)?;
    let start = match init {
        Some(w) => w.clone(),
        None => Array1::zeros(design.features.ncols()),
    };
    let (w, diag) = minimize(&design, dim, start, opts)?;
    Ok((DimModel::new(dim, w, opts.lambda)?, diag))
}

fn validate_options(opts: &FitOptions) -> Result<()> {
    if !(opts.lambda > 0.0 && opts.lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive and finite, got {}",
            opts.lambda
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    Ok(())
}

/// Fits every factor of the chain from zero weights. The per-output problems
/// are independent and run in parallel.
pub fn fit_chain(ds: &Dataset, order: &ChainOrder, opts: &FitOptions) -> Result<ChainModel> {
    validate_options(opts)?;
    if order.d() != ds.d() {
        return Err(Error::DimensionMismatch(format!(
            "chain has {} outputs, dataset has {}",
            order.d(),
            ds.d()
        )));
    }
    let fitted: Vec<(DimModel, FitDiagnostics)> = (0..ds.d())
        .into_par_iter()
        .map(|dim| fit_dim(ds, order, dim, opts, None))
        .collect::<Result<_>>()?;
    let (dims, diagnostics) = fitted.into_iter().unzip();
    ChainModel::new(order.clone(), dims, diagnostics, ds.m())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SyntheticSpec};
    use crate::rng::SplitMix64;
    use ndarray::array;

    fn random_dataset(n: usize, m: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = SplitMix64::new(seed);
        let x = Array2::from_shape_fn((n, m), |_| rng.normal());
        let y = Array2::from_shape_fn((n, d), |_| u8::from(rng.bernoulli(0.5)));
        Dataset::from_arrays(x, y).unwrap()
    }

    #[test]
    fn chain_order_validation() {
        assert!(ChainOrder::new(vec![0, 0], vec![vec![], vec![]]).is_err());
        assert!(ChainOrder::new(vec![0, 1], vec![vec![1], vec![]]).is_err());
        assert!(ChainOrder::new(vec![1, 0], vec![vec![1], vec![]]).is_ok());
        assert!(ChainOrder::new(vec![0, 1], vec![vec![], vec![0, 0]]).is_err());
        let full = ChainOrder::full_chain_in_order(vec![2, 0, 1]).unwrap();
        assert_eq!(full.parents(2), &[] as &[usize]);
        assert_eq!(full.parents(0), &[2]);
        assert_eq!(full.parents(1), &[2, 0]);
    }

    #[test]
    fn predict_zero_weights_is_half() {
        let dm = DimModel::zeros(0, 4, 1.0).unwrap();
        assert_eq!(dm.predict_prob(array![1.0, -3.0].view(), &[1]).unwrap(), 0.5);
    }

    #[test]
    fn predict_bias_ten() {
        let dm = DimModel::new(0, array![0.0, 0.0, 10.0], 1.0).unwrap();
        let p = dm.predict_prob(array![0.3, 0.7].view(), &[]).unwrap();
        assert!((p - 1.0 / (1.0 + (-10.0f64).exp())).abs() < 1e-15);
        assert!((p - 0.9999546).abs() < 1e-7);
    }

    #[test]
    fn negated_weights_complement_probability() {
        let dm = DimModel::new(0, array![0.4, -1.2, 0.8, 0.3], 1.0).unwrap();
        let x = array![0.5, 2.0];
        let p = dm.predict_prob(x.view(), &[1]).unwrap();
        let q = dm.negated().predict_prob(x.view(), &[1]).unwrap();
        assert!((p + q - 1.0).abs() < 1e-15);
    }

    #[test]
    fn predict_rejects_dimension_mismatch() {
        let dm = DimModel::zeros(0, 3, 1.0).unwrap();
        assert!(matches!(
            dm.predict_prob(array![1.0].view(), &[]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn dim_model_rejects_bad_lambda() {
        assert!(DimModel::zeros(0, 3, 0.0).is_err());
        assert!(DimModel::new(0, array![f64::NAN], 1.0).is_err());
    }

    #[test]
    fn objective_at_zero_is_n_ln2() {
        let ds = random_dataset(13, 3, 2, 1);
        let order = ChainOrder::full_chain(2);
        let dm = DimModel::zeros(1, 3 + 1 + 1, 0.7).unwrap();
        let f = nll_objective(&dm, &ds, &order).unwrap();
        assert!((f - 13.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn objective_single_row() {
        let ds = Dataset::from_arrays(array![[1.0]], array![[1u8]]).unwrap();
        let order = ChainOrder::full_chain(1);
        let dm = DimModel::new(0, array![0.5, 0.25], 2.0).unwrap();
        let p = sigmoid(0.75);
        let expected = -p.ln() + 0.5 * 2.0 * 0.25;
        assert!((nll_objective(&dm, &ds, &order).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn huge_lambda_shrinks_weights_and_gradient_at_zero_is_data_term() {
        let ds = random_dataset(40, 3, 1, 2);
        let order = ChainOrder::full_chain(1);
        let opts = FitOptions {
            lambda: 1e8,
            ..FitOptions::default()
        };
        let model = fit_chain(&ds, &order, &opts).unwrap();
        let w = model.dims()[0].weights();
        assert!(w.iter().take(3).all(|v| v.abs() < 1e-6), "{w}");

        let zero = DimModel::zeros(0, 4, 1e8).unwrap();
        let g = nll_gradient(&zero, &ds, &order).unwrap();
        let design = dim_design(&ds, &order, 0).unwrap();
        let data_term = design.features.t().dot(&(0.5 - &design.targets));
        for (a, b) in g.iter().zip(data_term.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_reaches_tolerance() {
        let ds = random_dataset(60, 4, 3, 3);
        let order = ChainOrder::full_chain(3);
        let model = fit_chain(&ds, &order, &FitOptions::default()).unwrap();
        for (i, diag) in model.diagnostics().iter().enumerate() {
            assert!(diag.converged, "{diag:?}");
            let g = nll_gradient(&model.dims()[i], &ds, &order).unwrap();
            assert!(norm2(&g) <= 1e-6);
        }
    }

    #[test]
    fn constant_output_fits_high_probability() {
        let mut rng = SplitMix64::new(4);
        let x = Array2::from_shape_fn((50, 2), |_| rng.normal());
        let y = Array2::from_elem((50, 1), 1u8);
        let ds = Dataset::from_arrays(x, y).unwrap();
        let order = ChainOrder::full_chain(1);
        let opts = FitOptions {
            lambda: 1e-3,
            ..FitOptions::default()
        };
        let model = fit_chain(&ds, &order, &opts).unwrap();
        for n in 0..ds.n() {
            let p = model.dims()[0].predict_prob(ds.input_row(n), &[]).unwrap();
            assert!(p > 0.9, "{p}");
        }

        // Oracle: golden-section search on the bias-only objective over [0, 40].
        let bias_only = |b: f64| 50.0 * neg_log_sigmoid(b);
        let (mut lo, mut hi) = (0.0f64, 40.0f64);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - phi * (hi - lo);
            let b = lo + phi * (hi - lo);
            if bias_only(a) <= bias_only(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        let oracle_min = bias_only(0.5 * (lo + hi));
        assert!(sigmoid(0.5 * (lo + hi)) > 0.9);
        assert!(model.diagnostics()[0].objective <= oracle_min + 1e-6);
    }

    #[test]
    fn row_permutation_leaves_model_unchanged() {
        let ds = random_dataset(80, 3, 2, 5);
        let mut perm: Vec<usize> = (0..80).collect();
        perm.reverse();
        perm.swap(3, 40);
        let pds = ds.permute_rows(&perm).unwrap();
        let order = ChainOrder::full_chain(2);
        let a = fit_chain(&ds, &order, &FitOptions::default()).unwrap();
        let b = fit_chain(&pds, &order, &FitOptions::default()).unwrap();
        for (da, db) in a.dims().iter().zip(b.dims()) {
            for (wa, wb) in da.weights().iter().zip(db.weights().iter()) {
                assert!((wa - wb).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn joint_prob_of_zero_model() {
        let d = 3;
        let order = ChainOrder::full_chain(d);
        let dims = (0..d)
            .map(|i| DimModel::zeros(i, 2 + i + 1, 1.0).unwrap())
            .collect();
        let model =
            ChainModel::new(order, dims, vec![FitDiagnostics::default(); d], 2).unwrap();
        let p = model
            .joint_prob(array![0.3, -1.0].view(), array![1u8, 0, 1].view())
            .unwrap();
        assert!((p - 0.125).abs() < 1e-15);
    }

    #[test]
    fn joint_prob_single_output_matches_factor() {
        let (ds, truth) = synth_generate(&SyntheticSpec {
            n: 20,
            m: 3,
            d: 1,
            chain_coeff_scale: 2.0,
            input_cluster_count: 1,
            seed: 8,
        })
        .unwrap();
        for n in 0..ds.n() {
            let p1 = truth.dims()[0].predict_prob(ds.input_row(n), &[]).unwrap();
            let expected = if ds.outputs()[[n, 0]] == 1 { p1 } else { 1.0 - p1 };
            let joint = truth.joint_prob(ds.input_row(n), ds.output_row(n)).unwrap();
            assert!((joint - expected).abs() < 1e-12);
        }
    }
}
