use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::stats::{linear_fit, median, strictly_decreasing, strictly_increasing, LinearFit};

use super::config::Config;
use super::{judge, ExperimentKind};

pub(crate) const REPORT_FILE: &str = "report.csv";
pub(crate) const VERDICT_FILE: &str = "verdict.txt";
pub(crate) const MANIFEST_FILE: &str = "manifest.txt";
const HEADER: [&str; 4] = ["quantity", "sample", "x", "value"];

/// One measurement: `quantity` of `sample` at scale point `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub quantity: String,
    pub sample: u64,
    pub x: f64,
    pub value: f64,
}

impl Row {
    pub fn new(quantity: impl Into<String>, sample: u64, x: f64, value: f64) -> Self {
        Row { quantity: quantity.into(), sample, x, value }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), pass, detail: detail.into() }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Verdict {
    pub checks: Vec<Check>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub(crate) fn push(&mut self, c: Check) {
        self.checks.push(c);
    }
}

fn word(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", word(c.pass), c.name, c.detail)?;
        }
        writeln!(f, "overall: {}", word(self.passed()))
    }
}

/// A finished run: resolved parameters, measurements and verdict.
#[derive(Clone, Debug)]
pub struct Report {
    pub kind: ExperimentKind,
    /// Fully resolved parameters; feeding them back reproduces the run.
    pub params: Config,
    /// Provenance entries (grid, partition hash, ...), written as `meta.*`.
    pub meta: Vec<(String, String)>,
    pub rows: Vec<Row>,
    pub verdict: Verdict,
}

impl Report {
    pub(crate) fn build(kind: ExperimentKind, params: Config, meta: Vec<(String, String)>, rows: Vec<Row>) -> Result<Self> {
        let verdict = judge(kind, &params, &rows)?;
        Ok(Report { kind, params, meta, rows, verdict })
    }

    pub fn manifest_text(&self) -> String {
        let mut s = format!("experiment = {}\nversion = {}\n", self.kind, env!("CARGO_PKG_VERSION"));
        for (k, v) in self.params.entries() {
            s += &format!("{k} = {v}\n");
        }
        for (k, v) in &self.meta {
            s += &format!("meta.{k} = {v}\n");
        }
        s
    }

    /// Writes `report.csv`, `verdict.txt`, `manifest.txt` and one
    /// `plots/<quantity>.csv` of per-`x` medians for each quantity.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir.join("plots"))?;
        write_rows(&dir.join(REPORT_FILE), &self.rows)?;
        fs::write(dir.join(VERDICT_FILE), self.verdict.to_string())?;
        fs::write(dir.join(MANIFEST_FILE), self.manifest_text())?;
        for q in quantities(&self.rows) {
            let mut w = csv::Writer::from_path(dir.join("plots").join(format!("{q}.csv")))?;
            w.write_record(["x", "median"])?;
            for (x, m) in medians(&self.rows, &q) {
                w.write_record([format!("{x:?}"), format!("{m:?}")])?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

fn write_rows(path: &Path, rows: &[Row]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([r.quantity.clone(), r.sample.to_string(), format!("{:?}", r.x), format!("{:?}", r.value)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`Report::write`].
pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<Row>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(HEADER) {
        return Err(Error::Parse(format!("report header must be {}", HEADER.join(","))));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number '{s}' in report")));
    r.records()
        .map(|rec| {
            let rec = rec?;
            if rec.len() != 4 {
                return Err(Error::Parse(format!("report row has {} fields", rec.len())));
            }
            Ok(Row {
                quantity: rec[0].to_string(),
                sample: rec[1].parse().map_err(|_| Error::Parse(format!("bad sample '{}'", &rec[1])))?,
                x: num(&rec[2])?,
                value: num(&rec[3])?,
            })
        })
        .collect()
}

/// Distinct quantities in first-seen order.
pub(crate) fn quantities(rows: &[Row]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in rows {
        if !out.contains(&r.quantity) {
            out.push(r.quantity.clone());
        }
    }
    out
}

pub(crate) fn values(rows: &[Row], quantity: &str) -> Vec<f64> {
    rows.iter().filter(|r| r.quantity == quantity).map(|r| r.value).collect()
}

/// `(x, values at x)` for `quantity`, sorted by `x`.
pub(crate) fn by_x(rows: &[Row], quantity: &str) -> Vec<(f64, Vec<f64>)> {
    let mut xs: Vec<f64> = rows.iter().filter(|r| r.quantity == quantity).map(|r| r.x).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs.into_iter()
        .map(|x| (x, rows.iter().filter(|r| r.quantity == quantity && r.x == x).map(|r| r.value).collect()))
        .collect()
}

/// Per-`x` medians of `quantity`, sorted by `x`.
pub fn medians(rows: &[Row], quantity: &str) -> Vec<(f64, f64)> {
    by_x(rows, quantity).into_iter().map(|(x, v)| (x, median(&v))).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Trend {
    Decreasing,
    Increasing,
}

pub(crate) const MIN_TREND_POINTS: usize = 4;

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(" ")
}

/// Strict monotonicity of the per-`x` medians over at least four points.
pub(crate) fn trend_check(rows: &[Row], quantity: &str, trend: Trend) -> Check {
    let med: Vec<f64> = medians(rows, quantity).into_iter().map(|(_, m)| m).collect();
    let (ok, word) = match trend {
        Trend::Decreasing => (strictly_decreasing(&med), "decreasing"),
        Trend::Increasing => (strictly_increasing(&med), "increasing"),
    };
    let enough = med.len() >= MIN_TREND_POINTS;
    let finite = med.iter().all(|m| m.is_finite());
    let detail = if enough {
        format!("medians [{}], required strictly {word}", fmt_list(&med))
    } else {
        format!("{} points, need {MIN_TREND_POINTS} for a {word} trend", med.len())
    };
    Check::new(format!("{quantity}_{word}"), ok && enough && finite, detail)
}

/// Every value of `quantity` lies within the given bounds.
pub(crate) fn bound_check(rows: &[Row], name: &str, quantity: &str, le: Option<f64>, ge: Option<f64>) -> Check {
    let v = values(rows, quantity);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let mut ok = !v.is_empty() && v.iter().all(|x| !x.is_nan());
    let mut parts = vec![format!("{} values", v.len())];
    if let Some(b) = le {
        ok &= max <= b;
        parts.push(format!("max {max:.3e} <= {b:.1e}"));
    }
    if let Some(b) = ge {
        ok &= min >= b;
        parts.push(format!("min {min:.3e} >= {b:.1e}"));
    }
    Check::new(name, ok, parts.join(", "))
}

/// Least-squares fit of `log₂(median)` against `x`.
pub(crate) fn log2_fit(rows: &[Row], quantity: &str) -> Option<LinearFit> {
    let med = medians(rows, quantity);
    if med.len() < 2 || med.iter().any(|(_, m)| !(*m > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = med.iter().map(|(x, _)| *x).collect();
    let ys: Vec<f64> = med.iter().map(|(_, m)| m.log2()).collect();
    Some(linear_fit(&xs, &ys))
}

/// Outcome of re-judging a stored run.
#[derive(Clone, Debug)]
pub struct VerifyOutcome {
    pub kind: ExperimentKind,
    pub verdict: Verdict,
    /// Whether the recomputed verdict equals the stored `verdict.txt`.
    pub matches_stored: bool,
}

impl VerifyOutcome {
    pub fn ok(&self) -> bool {
        self.matches_stored && self.verdict.passed()
    }
}

pub(crate) fn verify_dir(dir: &Path) -> Result<VerifyOutcome> {
    let cfg = Config::parse(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let kind: ExperimentKind =
        cfg.get("experiment").ok_or_else(|| Error::Config("manifest has no 'experiment' entry".into()))?.parse()?;
    let rows = read_rows(dir.join(REPORT_FILE))?;
    let verdict = judge(kind, &cfg, &rows)?;
    let stored = fs::read_to_string(dir.join(VERDICT_FILE))?;
    Ok(VerifyOutcome { kind, matches_stored: stored == verdict.to_string(), verdict })
}
