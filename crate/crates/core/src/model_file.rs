//! Plain-text chain model files.
//!
//! ```text
//! condout-chain-model 1
//! inputs <m>
//! outputs <d>
//! order <o_1> ... <o_d>
//! dim <i> lambda <lambda> parents <k> [<p_1> ... <p_k>]
//! weights <w_1> ... <w_{m+k+1}>
//! diag <objective> <grad_norm> <iterations> <converged 0|1>
//! ...                                  (one dim/weights/diag triple per output, i = 0..d-1)
//! scaler none
//!   | scaler <m>
//!     mean <mu_1> ... <mu_m>
//!     sd <s_1> ... <s_m>
//! end
//! ```
//!
//! Indices are 0-based. Reals are written with 17 significant digits
//! (`{:.16e}`), which round-trips every finite `f64` exactly. Blank lines and
//! lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array1;

use crate::chain::{ChainModel, ChainOrder, DimModel, FitDiagnostics};
use crate::data::Standardizer;
use crate::error::{Error, Result};

pub const MAGIC: &str = "condout-chain-model";
pub const VERSION: u32 = 1;

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn reals(vs: impl IntoIterator<Item = f64>) -> String {
    vs.into_iter().map(real).collect::<Vec<_>>().join(" ")
}

pub fn model_to_string(model: &ChainModel, scaler: Option<&Standardizer>) -> String {
    let mut s = String::new();
    let order = model.order();
    writeln!(s, "{MAGIC} {VERSION}").unwrap();
    writeln!(s, "inputs {}", model.input_dim()).unwrap();
    writeln!(s, "outputs {}", model.output_dim()).unwrap();
    let ord: Vec<String> = order.order().iter().map(usize::to_string).collect();
    writeln!(s, "order {}", ord.join(" ")).unwrap();
    for (dm, diag) in model.dims().iter().zip(model.diagnostics()) {
        let i = dm.dim_index();
        let parents = order.parents(i);
        write!(s, "dim {i} lambda {} parents {}", real(dm.lambda()), parents.len()).unwrap();
        for p in parents {
            write!(s, " {p}").unwrap();
        }
        s.push('\n');
        writeln!(s, "weights {}", reals(dm.weights().iter().copied())).unwrap();
        writeln!(
            s,
            "diag {} {} {} {}",
            real(diag.objective),
            real(diag.grad_norm),
            diag.iterations,
            u8::from(diag.converged)
        )
        .unwrap();
    }
    match scaler {
        None => writeln!(s, "scaler none").unwrap(),
        Some(sc) => {
            writeln!(s, "scaler {}", sc.mean.len()).unwrap();
            writeln!(s, "mean {}", reals(sc.mean.iter().copied())).unwrap();
            writeln!(s, "sd {}", reals(sc.sd.iter().copied())).unwrap();
        }
    }
    writeln!(s, "end").unwrap();
    s
}

pub fn save_model(
    path: impl AsRef<Path>,
    model: &ChainModel,
    scaler: Option<&Standardizer>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_string(model, scaler)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(ChainModel, Option<Standardizer>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text)
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate().peekable(),
            last: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::ModelFormat {
            line: self.last,
            msg: msg.into(),
        }
    }

    /// Next significant line, split into tokens, with its leading keyword checked.
    fn expect(&mut self, keyword: &str) -> Result<Vec<&'a str>> {
        loop {
            let Some((idx, line)) = self.inner.next() else {
                return Err(self.err(format!("unexpected end of file, expected '{keyword}'")));
            };
            self.last = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let head = tokens.next().unwrap_or_default();
            if head != keyword {
                return Err(self.err(format!("expected '{keyword}', found '{head}'")));
            }
            return Ok(tokens.collect());
        }
    }

    fn usize(&self, tok: Option<&&str>) -> Result<usize> {
        tok.ok_or_else(|| self.err("missing integer"))?
            .parse()
            .map_err(|_| self.err("invalid integer"))
    }

    fn reals(&self, toks: &[&str]) -> Result<Vec<f64>> {
        toks.iter()
            .map(|t| t.parse::<f64>().map_err(|_| self.err(format!("invalid real '{t}'"))))
            .collect()
    }
}

pub fn parse_model(text: &str) -> Result<(ChainModel, Option<Standardizer>)> {
    let mut lines = Lines::new(text);
    let head = lines.expect(MAGIC)?;
    let version = lines.usize(head.first())?;
    if version != VERSION as usize {
        return Err(lines.err(format!("unsupported model version {version}")));
    }
    let m = {
        let t = lines.expect("inputs")?;
        lines.usize(t.first())?
    };
    let d = {
        let t = lines.expect("outputs")?;
        lines.usize(t.first())?
    };
    let order_toks = lines.expect("order")?;
    let order: Vec<usize> = order_toks
        .iter()
        .map(|t| t.parse().map_err(|_| lines.err("invalid order index")))
        .collect::<Result<_>>()?;
    if order.len() != d {
        return Err(lines.err(format!("order lists {} outputs, expected {d}", order.len())));
    }

    let mut parents = Vec::with_capacity(d);
    let mut raw = Vec::with_capacity(d);
    for i in 0..d {
        let t = lines.expect("dim")?;
        if lines.usize(t.first())? != i {
            return Err(lines.err(format!("expected dim {i}")));
        }
        if t.get(1) != Some(&"lambda") || t.get(3) != Some(&"parents") {
            return Err(lines.err("expected 'dim <i> lambda <l> parents <k> ...'"));
        }
        let lambda = lines.reals(&t[2..3])?[0];
        let k = lines.usize(t.get(4))?;
        if t.len() != 5 + k {
            return Err(lines.err(format!("expected {k} parent indices")));
        }
        let ps: Vec<usize> = t[5..]
            .iter()
            .map(|p| p.parse().map_err(|_| lines.err("invalid parent index")))
            .collect::<Result<_>>()?;
        let w = lines.expect("weights")?;
        let w = lines.reals(&w)?;
        let dg = lines.expect("diag")?;
        if dg.len() != 4 {
            return Err(lines.err("expected 'diag <objective> <grad_norm> <iterations> <converged>'"));
        }
        let vals = lines.reals(&dg[..2])?;
        let diag = FitDiagnostics {
            objective: vals[0],
            grad_norm: vals[1],
            iterations: lines.usize(dg.get(2))?,
            converged: match dg[3] {
                "0" => false,
                "1" => true,
                _ => return Err(lines.err("converged flag must be 0 or 1")),
            },
        };
        parents.push(ps);
        raw.push((w, lambda, diag));
    }

    let chain_order = ChainOrder::new(order, parents)?;
    let mut dims = Vec::with_capacity(d);
    let mut diags = Vec::with_capacity(d);
    for (i, (w, lambda, diag)) in raw.into_iter().enumerate() {
        dims.push(DimModel::new(i, Array1::from(w), lambda)?);
        diags.push(diag);
    }
    let model = ChainModel::new(chain_order, dims, diags, m)?;

    let sc = lines.expect("scaler")?;
    let scaler = match sc.first() {
        Some(&"none") => None,
        _ => {
            let k = lines.usize(sc.first())?;
            let mean = lines.expect("mean")?;
            let mean = lines.reals(&mean)?;
            let sd = lines.expect("sd")?;
            let sd = lines.reals(&sd)?;
            if k != m || mean.len() != m || sd.len() != m {
                return Err(lines.err(format!("scaler must have {m} columns")));
            }
            Some(Standardizer {
                mean: Array1::from(mean),
                sd: Array1::from(sd),
            })
        }
    };
    lines.expect("end")?;
    Ok((model, scaler))
}
