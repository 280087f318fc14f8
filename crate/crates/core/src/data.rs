//! Datasets of (input, output) pairs: CSV ingestion and emission, input
//! standardization, synthetic generation from a known logistic chain, and the
//! single-bit output flip used to plant conditional outliers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::chain::{ChainModel, ChainOrder, DimModel, FitDiagnostics};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// `N` instances of an `m`-dimensional real input and a `d`-dimensional binary output.
///
/// Immutable once constructed; every constructor validates the invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Array2<f64>,
    outputs: Array2<u8>,
    feature_names: Vec<String>,
    label_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        inputs: Array2<f64>,
        outputs: Array2<u8>,
        feature_names: Vec<String>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        let (n, m) = inputs.dim();
        let (n_out, d) = outputs.dim();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if n != n_out {
            return Err(Error::DimensionMismatch(format!(
                "inputs have {n} rows, outputs have {n_out}"
            )));
        }
        if m == 0 || d == 0 {
            return Err(Error::DimensionMismatch(format!(
                "need m >= 1 and d >= 1, got m={m}, d={d}"
            )));
        }
        if feature_names.len() != m || label_names.len() != d {
            return Err(Error::DimensionMismatch(
                "column name count does not match matrix width".into(),
            ));
        }
        if let Some(((row, column), _)) = inputs.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteInput { row, column });
        }
        if let Some(((row, col), v)) = outputs.indexed_iter().find(|(_, &v)| v > 1) {
            return Err(Error::NonBinaryOutput {
                row,
                column: label_names[col].clone(),
                value: v.to_string(),
            });
        }
        Ok(Self {
            inputs,
            outputs,
            feature_names,
            label_names,
        })
    }

    /// Builds a dataset with generated column names `x1..xm`, `y1..yd`.
    pub fn from_arrays(inputs: Array2<f64>, outputs: Array2<u8>) -> Result<Self> {
        let m = inputs.ncols();
        let d = outputs.ncols();
        Self::new(
            inputs,
            outputs,
            (1..=m).map(|j| format!("x{j}")).collect(),
            (1..=d).map(|j| format!("y{j}")).collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn m(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn d(&self) -> usize {
        self.outputs.ncols()
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    pub fn outputs(&self) -> &Array2<u8> {
        &self.outputs
    }

    pub fn input_row(&self, n: usize) -> ArrayView1<'_, f64> {
        self.inputs.row(n)
    }

    pub fn output_row(&self, n: usize) -> ArrayView1<'_, u8> {
        self.outputs.row(n)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    /// Outputs as a real-valued `N x d` matrix of 0.0/1.0.
    pub fn outputs_f64(&self) -> Array2<f64> {
        self.outputs.mapv(f64::from)
    }

    /// Concatenated `[x || y]` rows.
    pub fn joint_matrix(&self) -> Array2<f64> {
        ndarray::concatenate(Axis(1), &[self.inputs.view(), self.outputs_f64().view()])
            .expect("row counts agree by construction")
    }

    /// Copy of this dataset with rows reordered so that row `i` is old row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n() {
            return Err(Error::DimensionMismatch("row permutation length".into()));
        }
        Self::new(
            self.inputs.select(Axis(0), perm),
            self.outputs.select(Axis(0), perm),
            self.feature_names.clone(),
            self.label_names.clone(),
        )
    }

    /// Copy with output columns reordered so that column `j` is old column `perm[j]`.
    pub fn permute_outputs(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.d() {
            return Err(Error::DimensionMismatch("output permutation length".into()));
        }
        Self::new(
            self.inputs.clone(),
            self.outputs.select(Axis(1), perm),
            self.feature_names.clone(),
            perm.iter().map(|&j| self.label_names[j].clone()).collect(),
        )
    }

    fn with_inputs(&self, inputs: Array2<f64>) -> Result<Self> {
        Self::new(
            inputs,
            self.outputs.clone(),
            self.feature_names.clone(),
            self.label_names.clone(),
        )
    }

    fn with_outputs(&self, outputs: Array2<u8>) -> Result<Self> {
        Self::new(
            self.inputs.clone(),
            outputs,
            self.feature_names.clone(),
            self.label_names.clone(),
        )
    }
}

/// Reads a headered CSV whose trailing `d` columns are binary outputs.
pub fn load_csv(path: impl AsRef<Path>, d: usize) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, d)
}

pub fn read_csv<R: std::io::Read>(reader: R, d: usize) -> Result<Dataset> {
    if d == 0 {
        return Err(Error::InvalidParameter("output count d must be >= 1".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let width = header.len();
    if width < d + 1 {
        return Err(Error::TooFewColumns {
            expected: d + 1,
            found: width,
        });
    }
    let m = width - d;

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut n = 0;
    for record in rdr.records() {
        let record = record?;
        if record.len() != width {
            return Err(Error::RaggedRow {
                row: n,
                expected: width,
                found: record.len(),
            });
        }
        for (j, field) in record.iter().enumerate() {
            if j < m {
                let v: f64 = field.parse().map_err(|_| Error::NonNumericInput {
                    row: n,
                    column: header[j].clone(),
                    value: field.to_owned(),
                })?;
                if !v.is_finite() {
                    return Err(Error::NonFiniteInput { row: n, column: j });
                }
                xs.push(v);
            } else {
                let bit = match field {
                    "0" | "0.0" => 0u8,
                    "1" | "1.0" => 1u8,
                    _ => {
                        return Err(Error::NonBinaryOutput {
                            row: n,
                            column: header[j].clone(),
                            value: field.to_owned(),
                        })
                    }
                };
                ys.push(bit);
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let inputs = Array2::from_shape_vec((n, m), xs).expect("row-major buffer sized n*m");
    let outputs = Array2::from_shape_vec((n, d), ys).expect("row-major buffer sized n*d");
    Dataset::new(
        inputs,
        outputs,
        header[..m].to_vec(),
        header[m..].to_vec(),
    )
}

/// Writes the dataset in the format [`load_csv`] reads. Inputs are printed in
/// shortest round-trip form, so reloading is exact.
pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_csv(ds, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_csv<W: Write>(ds: &Dataset, w: &mut W) -> std::io::Result<()> {
    let header: Vec<&str> = ds
        .feature_names
        .iter()
        .chain(ds.label_names.iter())
        .map(String::as_str)
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for n in 0..ds.n() {
        let mut line = String::new();
        for (j, v) in ds.inputs.row(n).iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        for v in ds.outputs.row(n) {
            line.push(',');
            line.push(if *v == 1 { '1' } else { '0' });
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Per-column location and scale used to standardize inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    /// Sample (n - 1) standard deviation; zero for constant columns.
    pub sd: Array1<f64>,
}

impl Standardizer {
    /// Column statistics of `x`. Requires at least two rows.
    pub fn fit(x: &Array2<f64>) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::InvalidParameter(
                "standardization needs at least 2 rows".into(),
            ));
        }
        let mean = x.mean_axis(Axis(0)).expect("n >= 2");
        let sd = x.std_axis(Axis(0), 1.0);
        Ok(Self { mean, sd })
    }

    /// Centers every column and scales the non-constant ones to unit sd.
    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "standardizer has {} columns, matrix has {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        let mut out = x - &self.mean;
        for (mut col, &sd) in out.columns_mut().into_iter().zip(self.sd.iter()) {
            if sd > 0.0 {
                col /= sd;
            } else {
                col.fill(0.0);
            }
        }
        Ok(out)
    }
}

/// Standardizes the input block; outputs are untouched.
pub fn standardize_inputs(ds: &Dataset) -> Result<(Dataset, Standardizer)> {
    let scaler = Standardizer::fit(&ds.inputs)?;
    let scaled = scaler.apply(&ds.inputs)?;
    Ok((ds.with_inputs(scaled)?, scaler))
}

/// Rows whose outputs were flipped, and the dimension flipped in each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbationRecord {
    /// Sorted, distinct.
    pub flipped_rows: Vec<usize>,
    /// `flipped_dims[k]` is the output dimension flipped in `flipped_rows[k]`.
    pub flipped_dims: Vec<usize>,
    pub seed: u64,
}

impl PerturbationRecord {
    /// Length-`n` indicator of flipped rows.
    pub fn labels(&self, n: usize) -> Vec<bool> {
        let mut labels = vec![false; n];
        for &r in &self.flipped_rows {
            labels[r] = true;
        }
        labels
    }
}

/// `ceil(rate * n)`, ignoring floating-point residue below one part in 10^9
/// (so that `0.07 * 100` counts as 7, not 8).
pub fn flip_count(rate: f64, n: usize) -> usize {
    let x = rate * n as f64;
    let k = (x - 1e-9 * x.max(1.0)).ceil().max(0.0) as usize;
    k.min(n)
}

/// Flips one uniformly chosen output bit in each of `ceil(rate * N)` rows
/// chosen uniformly without replacement.
pub fn perturb_flip(ds: &Dataset, rate: f64, seed: u64) -> Result<(Dataset, PerturbationRecord)> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "flip rate must be in (0, 1], got {rate}"
        )));
    }
    let n = ds.n();
    let d = ds.d();
    let k = flip_count(rate, n);
    let mut rng = SplitMix64::new(seed);
    let mut chosen: Vec<(usize, usize)> = rng
        .sample_indices(n, k)
        .into_iter()
        .map(|row| (row, rng.below(d as u64) as usize))
        .collect();
    chosen.sort_unstable();

    let mut outputs = ds.outputs.clone();
    for &(row, dim) in &chosen {
        outputs[[row, dim]] ^= 1;
    }
    let record = PerturbationRecord {
        flipped_rows: chosen.iter().map(|c| c.0).collect(),
        flipped_dims: chosen.iter().map(|c| c.1).collect(),
        seed,
    };
    Ok((ds.with_outputs(outputs)?, record))
}

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    /// Chain coefficients are uniform on `[-scale, +scale]`.
    pub chain_coeff_scale: f64,
    pub input_cluster_count: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.d == 0 || self.input_cluster_count == 0 {
            return Err(Error::InvalidParameter(
                "synthetic counts must all be positive".into(),
            ));
        }
        if self.n <= self.d {
            return Err(Error::InvalidParameter(format!(
                "synthetic n ({}) must exceed d ({})",
                self.n, self.d
            )));
        }
        if !(self.chain_coeff_scale >= 0.0 && self.chain_coeff_scale.is_finite()) {
            return Err(Error::InvalidParameter(
                "chain_coeff_scale must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Standard deviation of the cluster-center distribution.
const CLUSTER_CENTER_SD: f64 = 2.0;

/// Samples a dataset from a ground-truth logistic chain.
///
/// Cluster centers are drawn from `N(0, 2^2 I)` and then shifted so their mean
/// is the origin (a single cluster sits at the origin); each instance picks a cluster uniformly
/// and draws its input from `N(center, I)`. Output `i` is then Bernoulli with
/// probability `sigmoid(w_i . [x, y_1..y_{i-1}, 1])`, with every coefficient
/// uniform on `[-scale, scale]`. The returned model is that ground truth, in
/// natural order with the full chain as parents; it carries a nominal
/// `lambda = 1` and no fit diagnostics.
pub fn synth_generate(spec: &SyntheticSpec) -> Result<(Dataset, ChainModel)> {
    spec.validate()?;
    let SyntheticSpec { n, m, d, .. } = *spec;
    let root = SplitMix64::new(spec.seed);
    let mut center_rng = root.split(0);
    let mut coeff_rng = root.split(1);
    let mut sample_rng = root.split(2);

    let mut centers = Array2::from_shape_fn((spec.input_cluster_count, m), |_| {
        CLUSTER_CENTER_SD * center_rng.normal()
    });
    let centroid = centers.mean_axis(Axis(0)).expect("at least one cluster");
    centers -= &centroid;

    let order = ChainOrder::full_chain(d);
    let scale = spec.chain_coeff_scale;
    let dims: Vec<DimModel> = (0..d)
        .map(|i| {
            let len = m + order.parents(i).len() + 1;
            let w = Array1::from_shape_fn(len, |_| coeff_rng.uniform(-scale, scale));
            DimModel::new(i, w, 1.0)
        })
        .collect::<Result<_>>()?;
    let truth = ChainModel::new(order, dims, vec![FitDiagnostics::default(); d], m)?;

    let mut inputs = Array2::zeros((n, m));
    let mut outputs = Array2::zeros((n, d));
    for row in 0..n {
        let c = sample_rng.below(spec.input_cluster_count as u64) as usize;
        for j in 0..m {
            inputs[[row, j]] = centers[[c, j]] + sample_rng.normal();
        }
        let x = inputs.row(row).to_owned();
        let mut y = vec![0u8; d];
        for &i in truth.order().order() {
            let parents: Vec<u8> = truth.order().parents(i).iter().map(|&p| y[p]).collect();
            let p1 = truth.dims()[i].predict_prob(x.view(), &parents)?;
            y[i] = u8::from(sample_rng.bernoulli(p1));
        }
        for (i, bit) in y.into_iter().enumerate() {
            outputs[[row, i]] = bit;
        }
    }
    Ok((Dataset::from_arrays(inputs, outputs)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny() -> Dataset {
        read_csv("x1,x2,y1\n0.5,1.0,1\n-1.0,0.0,0\n2.0,2.0,1\n".as_bytes(), 1).unwrap()
    }

    #[test]
    fn parses_three_row_file() {
        let ds = tiny();
        assert_eq!((ds.n(), ds.m(), ds.d()), (3, 2, 1));
        assert_eq!(ds.inputs(), &array![[0.5, 1.0], [-1.0, 0.0], [2.0, 2.0]]);
        assert_eq!(ds.outputs(), &array![[1u8], [0], [1]]);
        assert_eq!(ds.feature_names(), &["x1", "x2"]);
        assert_eq!(ds.label_names(), &["y1"]);
    }

    #[test]
    fn rejects_non_binary_output() {
        let err = read_csv("x1,y1\n0.5,2\n".as_bytes(), 1).unwrap_err();
        assert!(matches!(err, Error::NonBinaryOutput { .. }), "{err}");
        assert!(err.to_string().contains("non-binary output"));
    }

    #[test]
    fn rejects_non_numeric_input() {
        let err = read_csv("x1,y1\nabc,1\n".as_bytes(), 1).unwrap_err();
        assert!(matches!(err, Error::NonNumericInput { .. }));
        let err = read_csv("x1,y1\nNaN,1\n".as_bytes(), 1).unwrap_err();
        assert!(matches!(err, Error::NonFiniteInput { .. }));
    }

    #[test]
    fn rejects_too_few_columns_and_empty_body() {
        assert!(matches!(
            read_csv("y1\n1\n".as_bytes(), 1).unwrap_err(),
            Error::TooFewColumns { expected: 2, found: 1 }
        ));
        assert!(matches!(
            read_csv("x1,y1\n".as_bytes(), 1).unwrap_err(),
            Error::EmptyDataset
        ));
        assert!(matches!(
            read_csv("x1,y1\n1,1\n2\n".as_bytes(), 1).unwrap_err(),
            Error::RaggedRow { .. }
        ));
    }

    #[test]
    fn standardizes_columns() {
        let ds = Dataset::from_arrays(
            array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]],
            array![[0u8], [1], [0]],
        )
        .unwrap();
        let (z, scaler) = standardize_inputs(&ds).unwrap();
        assert_eq!(z.inputs().column(0).to_vec(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(z.inputs().column(1).to_vec(), vec![0.0, 0.0, 0.0]);
        assert_eq!(scaler.mean.to_vec(), vec![2.0, 5.0]);
        assert_eq!(scaler.sd.to_vec(), vec![1.0, 0.0]);
        assert_eq!(z.outputs(), ds.outputs());

        let (zz, _) = standardize_inputs(&z).unwrap();
        for (a, b) in zz.inputs().iter().zip(z.inputs().iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn standardize_needs_two_rows() {
        let ds = Dataset::from_arrays(array![[1.0]], array![[1u8]]).unwrap();
        assert!(standardize_inputs(&ds).is_err());
    }

    #[test]
    fn flip_count_rounding() {
        assert_eq!(flip_count(0.01, 100), 1);
        assert_eq!(flip_count(0.01, 2407), 25);
        assert_eq!(flip_count(0.01, 2000), 20);
        assert_eq!(flip_count(0.07, 100), 7);
        assert_eq!(flip_count(0.29, 100), 29);
        assert_eq!(flip_count(0.001, 10), 1);
        assert_eq!(flip_count(1.0, 10), 10);
    }

    #[test]
    fn perturb_rejects_bad_rate() {
        let ds = tiny();
        for rate in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(perturb_flip(&ds, rate, 1).is_err());
        }
    }

    #[test]
    fn perturb_single_flip_on_hundred_rows() {
        let spec = SyntheticSpec {
            n: 100,
            m: 2,
            d: 4,
            chain_coeff_scale: 1.0,
            input_cluster_count: 1,
            seed: 5,
        };
        let (ds, _) = synth_generate(&spec).unwrap();
        let (pert, rec) = perturb_flip(&ds, 0.01, 77).unwrap();
        assert_eq!(rec.flipped_rows.len(), 1);
        let differing: Vec<usize> = (0..ds.n())
            .filter(|&r| ds.output_row(r) != pert.output_row(r))
            .collect();
        assert_eq!(differing, rec.flipped_rows);
        let r = differing[0];
        let hamming = ds
            .output_row(r)
            .iter()
            .zip(pert.output_row(r))
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(hamming, 1);
        assert_eq!(pert.inputs(), ds.inputs());

        let (pert2, rec2) = perturb_flip(&ds, 0.01, 77).unwrap();
        assert_eq!(rec, rec2);
        assert_eq!(pert, pert2);
    }

    #[test]
    fn synth_is_deterministic() {
        let spec = SyntheticSpec {
            n: 500,
            m: 5,
            d: 3,
            chain_coeff_scale: 1.0,
            input_cluster_count: 2,
            seed: 7,
        };
        let (a, ta) = synth_generate(&spec).unwrap();
        let (b, tb) = synth_generate(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
    }

    #[test]
    fn synth_zero_scale_gives_fair_coins() {
        // Binomial(1000, 0.5) has sd 15.8; [400, 600] is a 6.3-sigma band.
        let spec = SyntheticSpec {
            n: 1000,
            m: 3,
            d: 4,
            chain_coeff_scale: 0.0,
            input_cluster_count: 3,
            seed: 21,
        };
        let (ds, _) = synth_generate(&spec).unwrap();
        for col in ds.outputs().columns() {
            let mean = col.iter().map(|&v| f64::from(v)).sum::<f64>() / 1000.0;
            assert!((0.4..=0.6).contains(&mean), "{mean}");
        }
    }

    #[test]
    fn synth_single_output_has_no_parents() {
        let spec = SyntheticSpec {
            n: 10,
            m: 2,
            d: 1,
            chain_coeff_scale: 1.0,
            input_cluster_count: 1,
            seed: 0,
        };
        let (_, truth) = synth_generate(&spec).unwrap();
        assert!(truth.order().parents(0).is_empty());
        assert_eq!(truth.dims()[0].weights().len(), 3);
    }

    #[test]
    fn synth_rejects_invalid_spec() {
        let spec = SyntheticSpec {
            n: 3,
            m: 2,
            d: 3,
            chain_coeff_scale: 1.0,
            input_cluster_count: 1,
            seed: 0,
        };
        assert!(synth_generate(&spec).is_err());
    }
}
