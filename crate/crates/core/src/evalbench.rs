//! Perturbation benchmark: plant single-bit output flips, score every method
//! on the same perturbed data, measure ROC AUC against the planted rows, and
//! aggregate mean and standard error over repeats.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::chain::{fit_chain, ChainModel, ChainOrder, FitOptions};
use crate::data::{perturb_flip, standardize_inputs, Dataset};
use crate::detectors::ScoreVector;
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::strategies::{detect, DetectorSpec, Representation, StrategySpec};

/// Area under the ROC curve as the Mann-Whitney statistic with mid-rank ties:
/// `P(s+ > s-) + P(s+ = s-) / 2`.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores, {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite score {s}")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels);
    }

    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of (doubled) mid-ranks of the positives; doubling keeps it integral.
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        // 1-based ranks start+1..=end have mean (start + 1 + end) / 2.
        let doubled_mid = (start + 1 + end) as u128;
        let group_pos = idx[start..end].iter().filter(|&&i| labels[i]).count() as u128;
        doubled_rank_sum += doubled_mid * group_pos;
        start = end;
    }
    let p = pos as u128;
    let doubled_u = doubled_rank_sum - p * (p + 1);
    Ok(doubled_u as f64 / (2.0 * pos as f64 * neg as f64))
}

/// ROC curve points from `(0, 0)` to `(1, 1)`, one per distinct threshold
/// taken in decreasing score order.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
}

impl RocCurve {
    /// Trapezoidal area under the curve.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5)
            .sum()
    }
}

pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch("scores and labels differ in length".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < idx.len() {
        let threshold = scores[idx[k]];
        while k < idx.len() && scores[idx[k]] == threshold {
            if labels[idx[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(RocCurve { points })
}

/// Which data the chain model is trained on in each repeat.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingMode {
    /// Fit on the perturbed data that is being scored.
    Transductive,
    /// Fit on the unperturbed data, score the perturbed data.
    Clean,
}

impl TrainingMode {
    pub fn label(self) -> &'static str {
        match self {
            TrainingMode::Transductive => "transductive",
            TrainingMode::Clean => "clean",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub repeats: usize,
    pub flip_rate: f64,
    pub master_seed: u64,
    pub fit: FitOptions,
    /// Chain order; the natural full chain when `None`.
    pub order: Option<ChainOrder>,
    pub standardize_inputs: bool,
    pub training: TrainingMode,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            repeats: 10,
            flip_rate: 0.01,
            master_seed: 0,
            fit: FitOptions::default(),
            order: None,
            standardize_inputs: true,
            training: TrainingMode::Transductive,
        }
    }
}

impl BenchConfig {
    /// Seed of repeat `r`.
    pub fn repeat_seed(&self, r: usize) -> u64 {
        derive_seed(self.master_seed, r as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRecord {
    pub name: String,
    pub aucs: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(repeats)`; 0 for a single repeat.
    pub stderr: f64,
}

impl MethodRecord {
    pub fn from_aucs(name: impl Into<String>, aucs: Vec<f64>) -> Self {
        let r = aucs.len() as f64;
        let mean = aucs.iter().sum::<f64>() / r;
        let stderr = if aucs.len() > 1 {
            let var = aucs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (r - 1.0);
            var.sqrt() / r.sqrt()
        } else {
            0.0
        };
        Self {
            name: name.into(),
            aucs,
            mean,
            stderr,
        }
    }
}

/// Benchmark results plus the settings needed to reproduce them.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub records: Vec<MethodRecord>,
    pub repeats: usize,
    pub single_repeat: bool,
    /// Ordered `key=value` run metadata.
    pub metadata: Vec<(String, String)>,
}

impl BenchReport {
    pub fn record(&self, name: &str) -> Option<&MethodRecord> {
        self.records.iter().find(|r| r.name == name)
    }
}

fn describe_method(spec: &StrategySpec) -> String {
    let det = match &spec.detector {
        DetectorSpec::Lof(p) => format!("k={}", p.k),
        DetectorSpec::Ocs(p) => format!(
            "nu={} gamma={} solver_tol={} max_iter={}",
            p.nu,
            p.gamma.map_or_else(|| "1/p".to_string(), |g| g.to_string()),
            p.solver_tol,
            p.max_iter
        ),
    };
    let mut s = format!("{} representation={} {det}", spec.detector.label(), spec.representation.label());
    if spec.representation == Representation::Joint {
        write!(s, " standardize_joint={}", spec.standardize_joint).unwrap();
    }
    if let Some(b) = &spec.bagging {
        write!(s, " bagging_rounds={} bagging_combine=sum", b.rounds).unwrap();
    }
    s
}

fn metadata(ds: &Dataset, methods: &[StrategySpec], cfg: &BenchConfig) -> Vec<(String, String)> {
    let mut md: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: String| md.push((k.to_string(), v));
    put("n", ds.n().to_string());
    put("m", ds.m().to_string());
    put("d", ds.d().to_string());
    put("repeats", cfg.repeats.to_string());
    put("single_repeat", (cfg.repeats == 1).to_string());
    put("flip_rate", cfg.flip_rate.to_string());
    put("flips_per_repeat", crate::data::flip_count(cfg.flip_rate, ds.n()).to_string());
    put("master_seed", cfg.master_seed.to_string());
    let seeds: Vec<String> = (0..cfg.repeats).map(|r| cfg.repeat_seed(r).to_string()).collect();
    put("repeat_seeds", seeds.join(" "));
    put("prng", "splitmix64".into());
    put("lambda", cfg.fit.lambda.to_string());
    put("fit_tol", cfg.fit.tol.to_string());
    put("fit_max_iter", cfg.fit.max_iter.to_string());
    let order = cfg
        .order
        .as_ref()
        .map(|o| o.order().iter().map(usize::to_string).collect::<Vec<_>>().join(" "))
        .unwrap_or_else(|| "natural".into());
    put("chain_order", order);
    put("chain_parents", "full".into());
    put("standardize_inputs", cfg.standardize_inputs.to_string());
    put("training", cfg.training.label().into());
    for (j, m) in methods.iter().enumerate() {
        put(&format!("method.{}.{}", j + 1, m.name()), describe_method(m));
    }
    md
}

/// Scores of every method on one perturbed copy of `ds`, and the AUCs.
fn run_repeat(
    base: &Dataset,
    methods: &[StrategySpec],
    cfg: &BenchConfig,
    order: &ChainOrder,
    r: usize,
) -> Result<Vec<f64>> {
    let seed_r = cfg.repeat_seed(r);
    let (perturbed, record) = perturb_flip(base, cfg.flip_rate, derive_seed(seed_r, 0))?;
    let labels = record.labels(base.n());
    let needs_model = methods.iter().any(|m| m.representation == Representation::Ours);
    let model: Option<ChainModel> = if needs_model {
        let train = match cfg.training {
            TrainingMode::Transductive => &perturbed,
            TrainingMode::Clean => base,
        };
        Some(fit_chain(train, order, &cfg.fit)?)
    } else {
        None
    };
    methods
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let mut spec = spec.clone();
            if let Some(b) = spec.bagging.as_mut() {
                b.seed = derive_seed(seed_r, 1 + j as u64);
            }
            let scores: ScoreVector = detect(&spec, &perturbed, model.as_ref())?;
            auc(scores.as_slice(), &labels)
        })
        .collect()
}

/// Runs every method on `repeats` independent perturbations of `ds`.
///
/// Within a repeat all methods see the same perturbed dataset. Repeats run in
/// parallel; results do not depend on the thread count.
pub fn run_benchmark(ds: &Dataset, methods: &[StrategySpec], cfg: &BenchConfig) -> Result<BenchReport> {
    if methods.is_empty() {
        return Err(Error::InvalidParameter("no methods to benchmark".into()));
    }
    if cfg.repeats == 0 {
        return Err(Error::InvalidParameter("repeats must be >= 1".into()));
    }
    for m in methods {
        m.validate()?;
    }
    let base = if cfg.standardize_inputs {
        standardize_inputs(ds)?.0
    } else {
        ds.clone()
    };
    let order = match &cfg.order {
        Some(o) => o.clone(),
        None => ChainOrder::full_chain(ds.d()),
    };

    let per_repeat: Vec<Vec<f64>> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| run_repeat(&base, methods, cfg, &order, r))
        .collect::<Result<_>>()?;

    let records = methods
        .iter()
        .enumerate()
        .map(|(j, m)| MethodRecord::from_aucs(m.name(), per_repeat.iter().map(|row| row[j]).collect()))
        .collect();
    Ok(BenchReport {
        records,
        repeats: cfg.repeats,
        single_repeat: cfg.repeats == 1,
        metadata: metadata(ds, methods, cfg),
    })
}

/// `method,mean_auc,stderr_auc,auc_1..auc_R`, reals in shortest round-trip form.
pub fn report_csv(report: &BenchReport) -> String {
    let mut s = String::from("method,mean_auc,stderr_auc");
    for r in 1..=report.repeats {
        write!(s, ",auc_{r}").unwrap();
    }
    s.push('\n');
    for rec in &report.records {
        write!(s, "{},{},{}", rec.name, rec.mean, rec.stderr).unwrap();
        for a in &rec.aucs {
            write!(s, ",{a}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn parse_report_csv(text: &str) -> Result<Vec<MethodRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    if header.len() < 3 || &header[0] != "method" || &header[1] != "mean_auc" || &header[2] != "stderr_auc" {
        return Err(Error::InvalidParameter("not a benchmark report".into()));
    }
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::InvalidParameter(format!("invalid number '{s}' in report")))
    };
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            Ok(MethodRecord {
                name: rec[0].to_string(),
                mean: num(&rec[1])?,
                stderr: num(&rec[2])?,
                aucs: rec.iter().skip(3).map(num).collect::<Result<_>>()?,
            })
        })
        .collect()
}

pub fn metadata_text(report: &BenchReport) -> String {
    report
        .metadata
        .iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect()
}

/// Sibling path for the metadata file: `report.csv` -> `report.meta.txt`.
pub fn metadata_path(report_path: &Path) -> PathBuf {
    report_path.with_extension("meta.txt")
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub const SVG_PLOT_HEIGHT: f64 = 300.0;
const SVG_TOP: f64 = 30.0;
const SVG_LEFT: f64 = 60.0;
const SVG_BAR_SLOT: f64 = 90.0;
const SVG_BAR_WIDTH: f64 = 56.0;

/// Self-contained bar chart of mean AUC per method on a `[0, 1]` axis with
/// `+/- 1` standard-error whiskers.
pub fn bar_chart_svg(report: &BenchReport) -> String {
    let n = report.records.len();
    let width = SVG_LEFT + SVG_BAR_SLOT * n as f64 + 20.0;
    let height = SVG_TOP + SVG_PLOT_HEIGHT + 70.0;
    let base = SVG_TOP + SVG_PLOT_HEIGHT;
    let y_of = |v: f64| base - v.clamp(0.0, 1.0) * SVG_PLOT_HEIGHT;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">AUC (mean, +/- 1 s.e., {} repeats)</text>"#,
        width / 2.0,
        report.repeats
    )
    .unwrap();
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let y = y_of(v);
        writeln!(
            s,
            r##"<line x1="{SVG_LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="#dddddd"/><text x="{}" y="{}" text-anchor="end">{v:.1}</text>"##,
            width - 20.0,
            SVG_LEFT - 6.0,
            y + 4.0
        )
        .unwrap();
    }
    writeln!(s, r#"<line x1="{SVG_LEFT}" y1="{SVG_TOP}" x2="{SVG_LEFT}" y2="{base}" stroke="black"/>"#).unwrap();
    writeln!(s, r#"<line x1="{SVG_LEFT}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#, width - 20.0).unwrap();

    for (i, rec) in report.records.iter().enumerate() {
        let cx = SVG_LEFT + SVG_BAR_SLOT * (i as f64 + 0.5);
        let top = y_of(rec.mean);
        let bar_h = base - top;
        writeln!(
            s,
            r##"<rect class="bar" data-method="{}" data-mean="{}" x="{}" y="{top}" width="{SVG_BAR_WIDTH}" height="{bar_h}" fill="#4a78b5"/>"##,
            xml_escape(&rec.name),
            rec.mean,
            cx - SVG_BAR_WIDTH / 2.0
        )
        .unwrap();
        let (hi, lo) = (y_of(rec.mean + rec.stderr), y_of(rec.mean - rec.stderr));
        writeln!(
            s,
            r#"<g class="whisker" stroke="red" stroke-width="1.5"><line x1="{cx}" y1="{hi}" x2="{cx}" y2="{lo}"/><line x1="{}" y1="{hi}" x2="{}" y2="{hi}"/><line x1="{}" y1="{lo}" x2="{}" y2="{lo}"/></g>"#,
            cx - 6.0,
            cx + 6.0,
            cx - 6.0,
            cx + 6.0
        )
        .unwrap();
        writeln!(
            s,
            r##"<text x="{cx}" y="{}" text-anchor="middle">{}</text><text x="{cx}" y="{}" text-anchor="middle" fill="#555555">{:.3}</text>"##,
            base + 16.0,
            xml_escape(&rec.name),
            base + 30.0,
            rec.mean
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes the report CSV and its sibling metadata file.
pub fn emit_report_csv(report: &BenchReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_file(path, &report_csv(report))?;
    write_file(&metadata_path(path), &metadata_text(report))
}

pub fn emit_bar_chart_svg(report: &BenchReport, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &bar_chart_svg(report))
}
