//! Detector-over-representation combinations.
//!
//! - `JOINT`: the detector sees `[x || y]`, standardized column-wise by default.
//! - `OUT`: the detector sees only the 0/1 output vectors.
//! - `OURS`: the detector sees the rho rows produced by a fitted chain model.
//! - `FB`: feature bagging, which reruns the detector on random feature
//!   subsets of the joint space and sums the per-round scores.

use std::fmt;

use ndarray::{Array2, Axis};

use crate::chain::ChainModel;
use crate::data::{Dataset, Standardizer};
use crate::detectors::{lof_scores, ocs_fit, ocs_scores, LofParams, OcsParams, ScoreVector};
use crate::error::{Error, Result};
use crate::rho::transform;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Joint,
    Out,
    Ours,
}

impl Representation {
    pub fn label(self) -> &'static str {
        match self {
            Representation::Joint => "JOINT",
            Representation::Out => "OUT",
            Representation::Ours => "OURS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DetectorSpec {
    Lof(LofParams),
    Ocs(OcsParams),
}

impl DetectorSpec {
    pub fn label(&self) -> &'static str {
        match self {
            DetectorSpec::Lof(_) => "LOF",
            DetectorSpec::Ocs(_) => "OCS",
        }
    }

    /// Runs the detector transductively: fit on `points`, score `points`.
    pub fn run(&self, points: &Array2<f64>) -> Result<ScoreVector> {
        match self {
            DetectorSpec::Lof(p) => lof_scores(points, p),
            DetectorSpec::Ocs(p) => ocs_scores(&ocs_fit(points, p)?, points),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaggingSpec {
    pub rounds: usize,
    pub seed: u64,
}

impl Default for BaggingSpec {
    fn default() -> Self {
        Self { rounds: 10, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategySpec {
    pub representation: Representation,
    pub detector: DetectorSpec,
    pub bagging: Option<BaggingSpec>,
    /// Standardize the joint `[x || y]` matrix before detection.
    pub standardize_joint: bool,
}

impl StrategySpec {
    pub fn new(representation: Representation, detector: DetectorSpec) -> Self {
        Self {
            representation,
            detector,
            bagging: None,
            standardize_joint: true,
        }
    }

    pub fn bagged(detector: DetectorSpec, bagging: BaggingSpec) -> Self {
        Self {
            bagging: Some(bagging),
            ..Self::new(Representation::Joint, detector)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(b) = &self.bagging {
            if self.representation == Representation::Ours {
                return Err(Error::InvalidParameter(
                    "feature bagging runs over the joint or output space, not rho".into(),
                ));
            }
            if b.rounds == 0 {
                return Err(Error::InvalidParameter("feature bagging needs >= 1 round".into()));
            }
        }
        Ok(())
    }

    /// Display name in the `OURS+LOF` / `LOF-JOINT` / `FB+LOF` style.
    pub fn name(&self) -> String {
        let det = self.detector.label();
        match (self.bagging.is_some(), self.representation) {
            (true, Representation::Joint) => format!("FB+{det}"),
            (true, rep) => format!("FB+{det}-{}", rep.label()),
            (false, Representation::Ours) => format!("OURS+{det}"),
            (false, rep) => format!("{det}-{}", rep.label()),
        }
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Shared detector settings applied when parsing method names.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodDefaults {
    pub lof: LofParams,
    pub ocs: OcsParams,
    pub fb_rounds: usize,
    /// Space that `fb+<det>` bags over; `Joint` unless overridden.
    pub fb_space: Representation,
    pub standardize_joint: bool,
}

impl Default for MethodDefaults {
    fn default() -> Self {
        Self {
            lof: LofParams::default(),
            ocs: OcsParams::default(),
            fb_rounds: 10,
            fb_space: Representation::Joint,
            standardize_joint: true,
        }
    }
}

/// Parses one method name, case-insensitively.
///
/// Accepted forms: `<rep>+<det>`, `<det>-<rep>` and `fb+<det>`, where `<rep>`
/// is `joint`, `out` or `ours` and `<det>` is `lof` or `ocs`.
pub fn parse_method(name: &str, defaults: &MethodDefaults) -> Result<StrategySpec> {
    let lower = name.trim().to_ascii_lowercase();
    let (first, second) = lower
        .split_once('+')
        .or_else(|| lower.split_once('-').map(|(a, b)| (b, a)))
        .ok_or_else(|| Error::InvalidParameter(format!("unrecognized method '{name}'")))?;
    let detector = match second {
        "lof" => DetectorSpec::Lof(defaults.lof),
        "ocs" => DetectorSpec::Ocs(defaults.ocs),
        _ => return Err(Error::InvalidParameter(format!("unknown detector in '{name}'"))),
    };
    let mut spec = match first {
        "joint" => StrategySpec::new(Representation::Joint, detector),
        "out" => StrategySpec::new(Representation::Out, detector),
        "ours" => StrategySpec::new(Representation::Ours, detector),
        "fb" => StrategySpec {
            representation: defaults.fb_space,
            ..StrategySpec::bagged(
                detector,
                BaggingSpec {
                    rounds: defaults.fb_rounds,
                    seed: 0,
                },
            )
        },
        _ => return Err(Error::InvalidParameter(format!("unknown representation in '{name}'"))),
    };
    spec.standardize_joint = defaults.standardize_joint;
    spec.validate()?;
    Ok(spec)
}

pub fn parse_methods(list: &str, defaults: &MethodDefaults) -> Result<Vec<StrategySpec>> {
    let methods: Vec<StrategySpec> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_method(s, defaults))
        .collect::<Result<_>>()?;
    if methods.is_empty() {
        return Err(Error::InvalidParameter("method list is empty".into()));
    }
    Ok(methods)
}

/// The point set a detector sees under `representation`.
pub fn representation_matrix(
    representation: Representation,
    ds: &Dataset,
    model: Option<&ChainModel>,
    standardize_joint: bool,
) -> Result<Array2<f64>> {
    match representation {
        Representation::Joint => {
            let joint = ds.joint_matrix();
            if standardize_joint {
                Standardizer::fit(&joint)?.apply(&joint)
            } else {
                Ok(joint)
            }
        }
        Representation::Out => Ok(ds.outputs_f64()),
        Representation::Ours => {
            let model = model.ok_or(Error::MissingModel)?;
            Ok(transform(model, ds)?.values().clone())
        }
    }
}

pub fn detect(spec: &StrategySpec, ds: &Dataset, model: Option<&ChainModel>) -> Result<ScoreVector> {
    spec.validate()?;
    let points = representation_matrix(spec.representation, ds, model, spec.standardize_joint)?;
    match &spec.bagging {
        None => spec.detector.run(&points),
        Some(b) => feature_bagging(&points, &spec.detector, b.rounds, b.seed),
    }
}

/// Random feature subsets for `rounds` rounds over `p` features: each has a
/// size uniform on `[floor(p/2), p-1]` and is drawn without replacement.
/// Indices within a subset are sorted.
pub fn bagging_subsets(p: usize, rounds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if p < 2 {
        return Err(Error::InvalidParameter(format!(
            "feature bagging needs >= 2 features, got {p}"
        )));
    }
    if rounds == 0 {
        return Err(Error::InvalidParameter("feature bagging needs >= 1 round".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let lo = p / 2;
    let hi = p - 1;
    Ok((0..rounds)
        .map(|_| {
            let size = lo + rng.below((hi - lo + 1) as u64) as usize;
            let mut subset = rng.sample_indices(p, size);
            subset.sort_unstable();
            subset
        })
        .collect())
}

/// Sums the detector's scores over the given feature subsets.
pub fn feature_bagging_with_subsets(
    points: &Array2<f64>,
    detector: &DetectorSpec,
    subsets: &[Vec<usize>],
) -> Result<ScoreVector> {
    let p = points.ncols();
    if subsets.is_empty() {
        return Err(Error::InvalidParameter("no feature subsets".into()));
    }
    let mut total = vec![0.0; points.nrows()];
    for subset in subsets {
        if subset.is_empty() || subset.iter().any(|&j| j >= p) {
            return Err(Error::InvalidParameter(format!(
                "feature subset {subset:?} invalid for {p} features"
            )));
        }
        let projected = points.select(Axis(1), subset);
        let round = detector.run(&projected)?;
        for (t, s) in total.iter_mut().zip(round.as_slice()) {
            *t += s;
        }
    }
    ScoreVector::new(total)
}

pub fn feature_bagging(
    points: &Array2<f64>,
    detector: &DetectorSpec,
    rounds: usize,
    seed: u64,
) -> Result<ScoreVector> {
    let subsets = bagging_subsets(points.ncols(), rounds, seed)?;
    feature_bagging_with_subsets(points, detector, &subsets)
}
