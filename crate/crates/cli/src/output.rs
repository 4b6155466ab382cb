use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use tcequil::{EquilibriumPath, Matrix, MonteCarloSummary};

use crate::CliError;

/// 17 significant digits, enough to round-trip an `f64`.
pub fn num(x: f64) -> String {
    // no negative zero in the files
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.16e}")
}

struct Table<'a> {
    header: Vec<String>,
    columns: Vec<(&'a Matrix, usize)>,
}

impl<'a> Table<'a> {
    fn new() -> Self {
        Table {
            header: vec!["t".into()],
            columns: Vec::new(),
        }
    }

    fn block(&mut self, m: &'a Matrix, name: impl Fn(usize) -> String) {
        for i in 0..m.nrows() {
            self.header.push(name(i + 1));
            self.columns.push((m, i));
        }
    }

    fn write(&self, path: &Path, times: impl Iterator<Item = f64>) -> Result<(), CliError> {
        let wrap = |source| CliError::Write {
            path: path.to_path_buf(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(wrap)?);
        writeln!(out, "{}", self.header.join(",")).map_err(wrap)?;
        let mut line = String::new();
        for (k, t) in times.enumerate() {
            line.clear();
            line.push_str(&num(t));
            for (m, i) in &self.columns {
                line.push(',');
                line.push_str(&num(m[(*i, k)]));
            }
            writeln!(out, "{line}").map_err(wrap)?;
        }
        out.flush().map_err(wrap)
    }
}

pub fn write_equilibrium(path: &Path, eq: &EquilibriumPath) -> Result<(), CliError> {
    let mut t = Table::new();
    t.block(&eq.mu_frictionless, |i| format!("mu_frictionless_{i}"));
    t.block(&eq.mu_lambda, |i| format!("mu_lambda_{i}"));
    t.block(&eq.liqprem, |i| format!("liqprem_{i}"));
    for (n, p) in eq.phi.iter().enumerate() {
        t.block(p, |i| format!("phi_{}_{i}", n + 1));
    }
    for (n, p) in eq.phi_dot.iter().enumerate() {
        t.block(p, |i| format!("phidot_{}_{i}", n + 1));
    }
    t.block(&eq.psi, |i| format!("psi_{i}"));
    t.write(path, eq.grid.times())
}

pub fn write_summary(path: &Path, s: &MonteCarloSummary) -> Result<(), CliError> {
    let mut t = Table::new();
    t.block(&s.mu_lambda_mean, |i| format!("mu_lambda_mean_{i}"));
    t.block(&s.mu_lambda_std, |i| format!("mu_lambda_std_{i}"));
    t.block(&s.liqprem_mean, |i| format!("liqprem_mean_{i}"));
    t.block(&s.liqprem_std, |i| format!("liqprem_std_{i}"));
    t.write(path, s.grid.times())
}
