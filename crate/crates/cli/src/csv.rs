//! CSV output in the fixed schemas consumed by the plotting pipeline.
//! Plain `Display` formatting of f64 keeps the files byte-identical across
//! runs and locale-independent.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

fn fmt(v: f64) -> String {
    // normalize negative zero so identical runs stay byte-identical
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v}")
}

/// `x,true 0,tsi 0,true 1,tsi 1,...`: one true/tsi column pair per sample
/// parameter.
pub fn solution_csv(xs: &[f64], pairs: &[(Vec<f64>, Vec<f64>)]) -> String {
    let mut out = String::from("x");
    for i in 0..pairs.len() {
        write!(out, ",true {i},tsi {i}").expect("write to string");
    }
    out.push('\n');
    for (row, &x) in xs.iter().enumerate() {
        out.push_str(&fmt(x));
        for (truth, tsi) in pairs {
            out.push(',');
            out.push_str(&fmt(truth[row]));
            out.push(',');
            out.push_str(&fmt(tsi[row]));
        }
        out.push('\n');
    }
    out
}

/// `mu,time,label` with label in {train, nodes, experiment, collision}.
pub fn params_csv(rows: &[(f64, f64, &str)]) -> String {
    let mut out = String::from("mu,time,label\n");
    for (mu, time, label) in rows {
        writeln!(out, "{},{},{}", fmt(*mu), fmt(*time), label).expect("write to string");
    }
    out
}

/// `n_snapshots,error`.
pub fn rate_csv(rows: &[(usize, f64)]) -> String {
    let mut out = String::from("n_snapshots,error\n");
    for (n, e) in rows {
        writeln!(out, "{},{}", n, fmt(*e)).expect("write to string");
    }
    out
}

/// One row of the results table.
#[derive(Debug, Clone)]
pub struct ResultsRow {
    pub experiment: String,
    pub snapshots_tsi: usize,
    pub snapshots_all: usize,
    pub error_train: f64,
    pub error_sample: f64,
}

impl ResultsRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}\n",
            self.experiment,
            self.snapshots_tsi,
            self.snapshots_all,
            fmt(self.error_train),
            fmt(self.error_sample)
        )
    }
}

pub const RESULTS_HEADER: &str = "experiment,snapshots_tsi,snapshots_all,error_train,error_sample\n";

/// Append a row to the results CSV, writing the header on first use.
pub fn append_results(path: &Path, row: &ResultsRow) -> Result<()> {
    let mut content = match std::fs::read_to_string(path) {
        Ok(c) => c,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => RESULTS_HEADER.to_string(),
        Err(e) => return Err(e).with_context(|| format!("reading {}", path.display())),
    };
    content.push_str(&row.to_csv_line());
    std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
