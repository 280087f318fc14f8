//! The conditional-probability proxy space.
//!
//! Each instance `(x, y)` maps to `rho = (rho_1, ..., rho_d)`, where `rho_i` is
//! the fitted probability of the *observed* bit `y_i` given `x` and the
//! observed parent bits. Low entries mark outputs the model finds surprising
//! in context. Scorers over `rho` live here as well.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::chain::ChainModel;
use crate::data::Dataset;
use crate::detectors::ScoreVector;
use crate::error::{Error, Result};
use crate::rng::mix64;

/// `N x d` matrix of observed-bit probabilities, every entry in
/// `[PROB_CLAMP, 1 - PROB_CLAMP]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoMatrix {
    values: Array2<f64>,
    source_model_id: String,
}

impl RhoMatrix {
    pub fn new(values: Array2<f64>, source_model_id: impl Into<String>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::DimensionMismatch("empty rho matrix".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "rho entries must lie in (0, 1), found {v}"
            )));
        }
        Ok(Self {
            values,
            source_model_id: source_model_id.into(),
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn source_model_id(&self) -> &str {
        &self.source_model_id
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    /// Header `rho_<label>...`, one row per instance, shortest round-trip reals.
    pub fn write_csv<W: Write>(&self, w: &mut W, label_names: &[String]) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.d())
            .map(|i| match label_names.get(i) {
                Some(name) => format!("rho_{name}"),
                None => format!("rho_{}", i + 1),
            })
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for row in self.values.rows() {
            let line: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, label_names: &[String]) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w, label_names)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Stable identifier of a chain model's structure and weights.
pub fn model_id(model: &ChainModel) -> String {
    let mut h = mix64(model.input_dim() as u64 ^ ((model.output_dim() as u64) << 32));
    let mut absorb = |v: u64| h = mix64(h ^ v);
    for &o in model.order().order() {
        absorb(o as u64);
    }
    for dm in model.dims() {
        for &p in model.order().parents(dm.dim_index()) {
            absorb(p as u64 | 1 << 40);
        }
        absorb(dm.lambda().to_bits());
        for w in dm.weights() {
            absorb(w.to_bits());
        }
    }
    format!("{h:016x}")
}

/// Projects every instance of `ds` into the proxy space of `model`.
pub fn transform(model: &ChainModel, ds: &Dataset) -> Result<RhoMatrix> {
    if ds.m() != model.input_dim() || ds.d() != model.output_dim() {
        return Err(Error::DimensionMismatch(format!(
            "model is ({} inputs, {} outputs), dataset is ({}, {})",
            model.input_dim(),
            model.output_dim(),
            ds.m(),
            ds.d()
        )));
    }
    let rows: Vec<Vec<f64>> = (0..ds.n())
        .into_par_iter()
        .map(|n| model.observed_probs(ds.input_row(n), ds.output_row(n)))
        .collect::<Result<_>>()?;
    let d = ds.d();
    let values = Array2::from_shape_vec((ds.n(), d), rows.into_iter().flatten().collect())
        .expect("each row has d entries");
    RhoMatrix::new(values, model_id(model))
}

/// `-sum_i ln rho_i` per instance.
pub fn neg_log_joint_score(rho: &RhoMatrix) -> ScoreVector {
    let scores = rho
        .values
        .rows()
        .into_iter()
        .map(|row| -row.iter().map(|r| r.ln()).sum::<f64>())
        .collect();
    ScoreVector::new(scores).expect("clamped rho gives finite scores")
}

/// Per-output reliability: the inverse of the mean estimated error `1 - rho_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityWeights {
    pub weights: Array1<f64>,
    pub mean_errors: Array1<f64>,
}

impl ReliabilityWeights {
    pub fn uniform(d: usize) -> Self {
        Self {
            weights: Array1::ones(d),
            mean_errors: Array1::zeros(d),
        }
    }
}

/// `w_i = N / sum_n (1 - rho_i^(n))`. Clamping keeps every `w_i <= 1e12`.
pub fn reliability_weights(rho: &RhoMatrix) -> ReliabilityWeights {
    let n = rho.n() as f64;
    let error_sums: Array1<f64> = rho
        .values
        .columns()
        .into_iter()
        .map(|col| col.iter().map(|r| 1.0 - r).sum::<f64>())
        .collect();
    ReliabilityWeights {
        weights: error_sums.mapv(|s| n / s),
        mean_errors: error_sums / n,
    }
}

/// `-sum_i w_i ln rho_i` per instance.
pub fn weighted_score(rho: &RhoMatrix, w: &ReliabilityWeights) -> Result<ScoreVector> {
    if w.weights.len() != rho.d() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} outputs",
            w.weights.len(),
            rho.d()
        )));
    }
    let scores = rho
        .values
        .rows()
        .into_iter()
        .map(|row| {
            -row.iter()
                .zip(w.weights.iter())
                .map(|(r, wi)| wi * r.ln())
                .sum::<f64>()
        })
        .collect();
    ScoreVector::new(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{fit_chain, ChainOrder, DimModel, FitDiagnostics, FitOptions, PROB_CLAMP};
    use crate::data::{synth_generate, SyntheticSpec};
    use ndarray::array;

    fn rho(values: Array2<f64>) -> RhoMatrix {
        RhoMatrix::new(values, "test").unwrap()
    }

    fn zero_model(m: usize, d: usize) -> ChainModel {
        let order = ChainOrder::full_chain(d);
        let dims = (0..d)
            .map(|i| DimModel::zeros(i, m + i + 1, 1.0).unwrap())
            .collect();
        ChainModel::new(order, dims, vec![FitDiagnostics::default(); d], m).unwrap()
    }

    fn synth(d: usize, seed: u64) -> Dataset {
        synth_generate(&SyntheticSpec {
            n: 50,
            m: 3,
            d,
            chain_coeff_scale: 2.0,
            input_cluster_count: 1,
            seed,
        })
        .unwrap()
        .0
    }

    #[test]
    fn zero_model_gives_halves() {
        let ds = synth(3, 1);
        let r = transform(&zero_model(3, 3), &ds).unwrap();
        assert!(r.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn single_output_column_is_conditional() {
        let ds = synth(1, 2);
        let model = fit_chain(&ds, &ChainOrder::full_chain(1), &FitOptions::default()).unwrap();
        let r = transform(&model, &ds).unwrap();
        for n in 0..ds.n() {
            let p1 = model.dims()[0].predict_prob(ds.input_row(n), &[]).unwrap();
            let expected = if ds.outputs()[[n, 0]] == 1 { p1 } else { 1.0 - p1 };
            assert!((r.values()[[n, 0]] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let ds = synth(3, 3);
        assert!(matches!(
            transform(&zero_model(2, 3), &ds),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn neg_log_joint_examples() {
        let s = neg_log_joint_score(&rho(array![
            [1.0 - PROB_CLAMP, 1.0 - PROB_CLAMP],
            [0.5, 0.5],
            [0.4, 0.3]
        ]));
        assert!(s.as_slice()[0] < 1e-11);
        assert!((s.as_slice()[1] - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        assert!(s.as_slice()[2] > s.as_slice()[1]);
    }

    #[test]
    fn reliability_examples() {
        let r = rho(array![[0.8, 0.5, 0.9], [0.8, 0.5, 0.7], [0.8, 0.5, 0.8]]);
        let w = reliability_weights(&r);
        assert!((w.weights[0] - 5.0).abs() < 1e-12);
        assert!((w.mean_errors[0] - 0.2).abs() < 1e-12);
        assert_eq!(w.weights[1], 2.0);
        assert!(w.weights[0] > w.weights[1]);
    }

    #[test]
    fn reliability_weight_is_capped_by_clamping() {
        let r = rho(Array2::from_elem((4, 1), 1.0 - PROB_CLAMP));
        let w = reliability_weights(&r);
        assert!(w.weights[0].is_finite());
        assert!((w.weights[0] / 1e12 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn weighted_score_examples() {
        let r = rho(array![[0.5, 0.1], [0.3, 0.9]]);
        let unit = weighted_score(&r, &ReliabilityWeights::uniform(2)).unwrap();
        assert_eq!(unit, neg_log_joint_score(&r));

        let w = ReliabilityWeights {
            weights: array![2.0, 0.0],
            mean_errors: array![0.0, 0.0],
        };
        let s = weighted_score(&r, &w).unwrap();
        assert!((s.as_slice()[0] - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);

        let w1 = ReliabilityWeights {
            weights: array![1.5, 0.7],
            mean_errors: array![0.0, 0.0],
        };
        let w2 = ReliabilityWeights {
            weights: array![3.0, 1.4],
            mean_errors: array![0.0, 0.0],
        };
        let a = weighted_score(&r, &w1).unwrap();
        let b = weighted_score(&r, &w2).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((2.0 * x - y).abs() < 1e-14);
        }
        assert_eq!(a.ranking(), b.ranking());
        assert!(weighted_score(&r, &ReliabilityWeights::uniform(3)).is_err());
    }

    #[test]
    fn csv_export() {
        let r = rho(array![[0.25, 0.5]]);
        let mut buf = Vec::new();
        r.write_csv(&mut buf, &["a".into(), "b".into()]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "rho_a,rho_b\n0.25,0.5\n");
    }

    #[test]
    fn model_id_tracks_weights() {
        let a = zero_model(2, 2);
        let mut dims = a.dims().to_vec();
        dims[1] = DimModel::new(1, array![0.0, 0.0, 0.0, 1e-300], 1.0).unwrap();
        let b = ChainModel::new(a.order().clone(), dims, a.diagnostics().to_vec(), 2).unwrap();
        assert_eq!(model_id(&a), model_id(&a.clone()));
        assert_ne!(model_id(&a), model_id(&b));
    }
}
