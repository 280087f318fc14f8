//! Multivariate conditional outlier detection.
//!
//! Instances are `(x, y)` pairs of a real input vector and a binary output
//! vector. A chain of logistic models estimates `P(Y | X)` one output at a
//! time; each instance is then projected to the vector of fitted
//! probabilities of its observed output bits (the rho space), where standard
//! multivariate detectors look for unusual input-output associations.
//!
//! Modules:
//! - [`data`]: datasets, CSV I/O, standardization, synthetic data, output flips.
//! - [`chain`]: the per-output logistic chain and its fitting.
//! - [`rho`]: projection into the rho space and probability-based scores.
//! - [`detectors`]: k-NN, Local Outlier Factor, one-class SVM.
//! - [`strategies`]: JOINT / OUT / OURS representations and feature bagging.
//! - [`evalbench`]: AUC, the perturbation benchmark and its reports.
//! - [`cli`]: the `condout` command line.

pub mod chain;
pub mod cli;
pub mod data;
pub mod detectors;
pub mod error;
pub mod evalbench;
pub mod model_file;
pub mod rho;
pub mod rng;
pub mod strategies;

pub use chain::{fit_chain, ChainModel, ChainOrder, DimModel, FitOptions};
pub use data::{Dataset, PerturbationRecord, SyntheticSpec};
pub use detectors::ScoreVector;
pub use error::{Error, Result};
pub use evalbench::{BenchConfig, BenchReport};
pub use rho::RhoMatrix;
pub use strategies::StrategySpec;
