//! Experiment reports: one row per checked inequality, with a fixed CSV
//! column order and a JSON form carrying the slack ledger.
//!
//! Report files are deterministic byte-for-byte given (config, seed); wall
//! times go to a separate sidecar, never into these rows.

use crate::refine::SlackLedger;
use crate::Result;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Info,
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Assert,
    Search,
    Measure,
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub name: String,
    pub n: u8,
    pub k: u32,
    pub lambda: Option<f64>,
    pub m: Option<u64>,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub verdict: Verdict,
    pub seed: u64,
    pub slack_exponent: f64,
    pub ledger: SlackLedger,
    /// Free-form measured extras (kept sorted for determinism).
    pub extra: std::collections::BTreeMap<String, f64>,
}

impl InequalityReport {
    pub fn new(name: impl Into<String>, n: u8, k: u32, lhs: f64, rhs: f64, seed: u64) -> Self {
        InequalityReport {
            name: name.into(),
            n,
            k,
            lambda: None,
            m: None,
            eps1: None,
            eps2: None,
            lhs,
            rhs,
            ratio: if rhs != 0.0 { lhs / rhs } else { f64::INFINITY },
            verdict: Verdict::Info,
            seed,
            slack_exponent: 0.0,
            ledger: SlackLedger::default(),
            extra: Default::default(),
        }
    }

    /// Verdict `lhs >= rhs` (the rhs is expected to already carry the slack).
    pub fn assert_lower_bound(mut self) -> Self {
        self.verdict = if self.lhs >= self.rhs { Verdict::Pass } else { Verdict::Fail };
        self
    }

    /// Verdict `lhs <= rhs`.
    pub fn assert_upper_bound(mut self) -> Self {
        self.verdict = if self.lhs <= self.rhs { Verdict::Pass } else { Verdict::Fail };
        self
    }

    pub fn passed(&self) -> bool {
        matches!(self.verdict, Verdict::Pass | Verdict::Info | Verdict::Skipped)
    }
}

pub const CSV_COLUMNS: [&str; 12] = [
    "name", "n", "k", "lambda", "m", "eps1", "eps2", "lhs", "rhs", "ratio", "verdict", "seed",
];

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

fn fmt_opt_u64(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Append rows to a CSV file (writing the header when the file is new).
pub fn append_csv(path: &Path, rows: &[InequalityReport]) -> Result<()> {
    let new = !path.exists();
    let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::Writer::from_writer(file);
    if new {
        w.write_record(CSV_COLUMNS)?;
    }
    for r in rows {
        w.write_record([
            r.name.clone(),
            r.n.to_string(),
            r.k.to_string(),
            fmt_opt_f64(r.lambda),
            fmt_opt_u64(r.m),
            fmt_opt_f64(r.eps1),
            fmt_opt_f64(r.eps2),
            format!("{:.12e}", r.lhs),
            format!("{:.12e}", r.rhs),
            format!("{:.12e}", r.ratio),
            format!("{:?}", r.verdict).to_lowercase(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

impl From<csv::Error> for crate::Error {
    fn from(e: csv::Error) -> Self {
        crate::Error::Io(std::io::Error::other(e))
    }
}

/// Write the JSON log (rows with ledgers) deterministically.
pub fn write_json(path: &Path, rows: &[InequalityReport]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    let body = serde_json::to_string_pretty(rows)?;
    file.write_all(body.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

/// Least-squares fit of `log y = a * log x1 + b * log x2` (two-exponent fit
/// used by the incidence sweeps). Returns (a, b, residual).
pub fn fit_two_exponents(samples: &[(f64, f64, f64)]) -> Option<(f64, f64, f64)> {
    if samples.len() < 2 {
        return None;
    }
    let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x1, x2, y) in samples {
        let (l1, l2, ly) = (x1.ln(), x2.ln(), y.ln());
        s11 += l1 * l1;
        s12 += l1 * l2;
        s22 += l2 * l2;
        r1 += l1 * ly;
        r2 += l2 * ly;
    }
    let det = s11 * s22 - s12 * s12;
    if det.abs() < 1e-12 {
        return None;
    }
    let a = (r1 * s22 - r2 * s12) / det;
    let b = (s11 * r2 - s12 * r1) / det;
    let mut residual = 0.0;
    for &(x1, x2, y) in samples {
        let pred = a * x1.ln() + b * x2.ln();
        residual += (pred - y.ln()).powi(2);
    }
    Some((a, b, (residual / samples.len() as f64).sqrt()))
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_slope(samples: &[(f64, f64)]) -> Option<f64> {
    if samples.len() < 2 {
        return None;
    }
    let n = samples.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in samples {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-12 {
        return None;
    }
    Some((n * sxy - sx * sy) / det)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts() {
        let r = InequalityReport::new("x", 2, 6, 2.0, 1.0, 0).assert_lower_bound();
        assert_eq!(r.verdict, Verdict::Pass);
        let r = InequalityReport::new("x", 2, 6, 0.5, 1.0, 0).assert_lower_bound();
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn exponent_fit_recovers_planted_exponents() {
        let samples: Vec<(f64, f64, f64)> = (1..6)
            .flat_map(|i| {
                (1..4).map(move |j| {
                    let x1 = (i as f64).exp();
                    let x2 = (j as f64 * 1.7).exp();
                    (x1, x2, x1.powf(0.5) * x2.powf(0.75))
                })
            })
            .collect();
        let (a, b, res) = fit_two_exponents(&samples).unwrap();
        assert!((a - 0.5).abs() < 1e-9 && (b - 0.75).abs() < 1e-9 && res < 1e-9);
    }

    #[test]
    fn csv_roundtrip_has_fixed_columns() {
        let dir = std::env::temp_dir().join(format!("flab-report-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rows.csv");
        let _ = std::fs::remove_file(&path);
        let r = InequalityReport::new("demo", 2, 6, 1.0, 0.5, 7).assert_lower_bound();
        append_csv(&path, &[r]).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        assert!(body.starts_with("name,n,k,lambda,m,eps1,eps2,lhs,rhs,ratio,verdict,seed"));
        assert!(body.contains("demo"));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
