//! File containers for orbits, solution fields and reports.
//!
//! Every CSV file starts with `# key=value` header lines, the first being
//! `# format_version=1`. Orbit files carry `system`, `kind`, `gamma`, `N`,
//! `dt`, `seed` and `spinup`, then a column line `n,x0,..,x{M-1}` and one row
//! per state. Solution files add `quantity` and use the columns named in
//! their column line. Floats are written in shortest round-trip form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::response::{ResponseReport, RuelleCurve};
use crate::systems::{Orbit, SystemKind};

pub const FORMAT_VERSION: u32 = 1;

fn header(out: &mut String, pairs: &[(&str, String)]) {
    let _ = writeln!(out, "# format_version={FORMAT_VERSION}");
    for (k, v) in pairs {
        let _ = writeln!(out, "# {k}={v}");
    }
}

fn orbit_header(orbit: &Orbit) -> Vec<(&'static str, String)> {
    vec![
        ("system", orbit.system.clone()),
        ("kind", orbit.kind.to_string()),
        ("gamma", orbit.gamma.to_string()),
        ("N", orbit.steps().to_string()),
        ("dt", orbit.time_step.to_string()),
        ("seed", orbit.seed.to_string()),
        ("spinup", orbit.spinup.to_string()),
    ]
}

fn push_row(out: &mut String, n: usize, values: impl IntoIterator<Item = f64>) {
    let _ = write!(out, "{n}");
    for v in values {
        let _ = write!(out, ",{v}");
    }
    out.push('\n');
}

pub fn orbit_csv(orbit: &Orbit) -> String {
    let mut out = String::new();
    header(&mut out, &orbit_header(orbit));
    let names: Vec<String> = (0..orbit.dim()).map(|i| format!("x{i}")).collect();
    let _ = writeln!(out, "n,{}", names.join(","));
    for (n, x) in orbit.states.iter().enumerate() {
        push_row(&mut out, n, x.iter().copied());
    }
    out
}

pub fn write_orbit_csv(path: &Path, orbit: &Orbit) -> Result<()> {
    fs::write(path, orbit_csv(orbit))?;
    Ok(())
}

/// A vector field along an orbit, with an optional scalar per step
/// (`eta`, the drift pairing of a covector, ...).
pub struct FieldSeries<'a> {
    pub quantity: &'a str,
    pub prefix: &'a str,
    pub values: &'a [DVector<f64>],
    pub scalar: Option<(&'a str, &'a [f64])>,
}

pub fn field_csv(orbit: &Orbit, series: &FieldSeries<'_>) -> String {
    let mut out = String::new();
    let mut pairs = orbit_header(orbit);
    pairs.push(("quantity", series.quantity.to_string()));
    header(&mut out, &pairs);
    let m = series.values.first().map_or(0, |v| v.len());
    let mut cols: Vec<String> = (0..m).map(|i| format!("{}{i}", series.prefix)).collect();
    if let Some((name, _)) = series.scalar {
        cols.push(name.to_string());
    }
    let _ = writeln!(out, "n,{}", cols.join(","));
    for (n, v) in series.values.iter().enumerate() {
        let extra = series.scalar.and_then(|(_, s)| s.get(n).copied()).unwrap_or(f64::NAN);
        let tail = series.scalar.map(|_| extra);
        push_row(&mut out, n, v.iter().copied().chain(tail));
    }
    out
}

pub fn write_field_csv(path: &Path, orbit: &Orbit, series: &FieldSeries<'_>) -> Result<()> {
    fs::write(path, field_csv(orbit, series))?;
    Ok(())
}

/// CLV frames on the converged range `first..=last`: column `e{i}_{j}` is
/// component `j` of CLV `i`.
pub fn frames_csv(orbit: &Orbit, first: usize, last: usize, exponents: &[f64], frames: &[DMatrix<f64>]) -> String {
    let mut out = String::new();
    let mut pairs = orbit_header(orbit);
    let exps: Vec<String> = exponents.iter().map(|e| e.to_string()).collect();
    pairs.push(("quantity", "clv".into()));
    pairs.push(("first", first.to_string()));
    pairs.push(("last", last.to_string()));
    pairs.push(("clv_exponents", exps.join(";")));
    header(&mut out, &pairs);
    let m = frames.first().map_or(0, |f| f.nrows());
    let cols: Vec<String> = (0..m).flat_map(|i| (0..m).map(move |j| format!("e{i}_{j}"))).collect();
    let _ = writeln!(out, "n,{}", cols.join(","));
    for (k, f) in frames.iter().enumerate() {
        push_row(&mut out, first + k, (0..m).flat_map(|i| (0..m).map(move |j| f[(j, i)])));
    }
    out
}

/// Parsed header and rows of a container file.
#[derive(Debug, Clone)]
pub struct Container {
    pub header: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Container {
    pub fn get(&self, key: &str) -> Result<&str> {
        self.header.get(key).map(String::as_str).ok_or_else(|| Error::Format(format!("missing header key `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse().map_err(|_| Error::Format(format!("bad value `{raw}` for header key `{key}`")))
    }
}

pub fn parse_container(text: &str) -> Result<Container> {
    let mut header = BTreeMap::new();
    let mut columns = None;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let (k, v) = rest
                .trim()
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("line {}: header is not `key=value`", i + 1)))?;
            header.insert(k.trim().to_string(), v.trim().to_string());
        } else if columns.is_none() {
            columns = Some(line.split(',').map(str::to_string).collect::<Vec<_>>());
        } else {
            let row = line
                .split(',')
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
            rows.push(row);
        }
    }
    let columns = columns.ok_or_else(|| Error::Format("no column line".into()))?;
    if let Some(r) = rows.iter().position(|r| r.len() != columns.len()) {
        return Err(Error::Format(format!("row {r} has {} fields, expected {}", rows[r].len(), columns.len())));
    }
    let version: u32 = header
        .get("format_version")
        .ok_or_else(|| Error::Format("missing format_version".into()))?
        .parse()
        .map_err(|_| Error::Format("bad format_version".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format_version {version}")));
    }
    Ok(Container { header, columns, rows })
}

pub fn parse_orbit_csv(text: &str) -> Result<Orbit> {
    let c = parse_container(text)?;
    let kind = match c.get("kind")? {
        "map" => SystemKind::Map,
        "flow" => SystemKind::Flow,
        other => return Err(Error::Format(format!("unknown kind `{other}`"))),
    };
    let n: usize = c.parse("N")?;
    if c.rows.len() != n + 1 {
        return Err(Error::LengthMismatch { expected: n + 1, found: c.rows.len() });
    }
    let states = c.rows.iter().map(|r| DVector::from_column_slice(&r[1..])).collect();
    Ok(Orbit {
        system: c.get("system")?.to_string(),
        kind,
        gamma: c.parse("gamma")?,
        states,
        time_step: c.parse("dt")?,
        spinup: c.parse("spinup")?,
        seed: c.parse("seed")?,
        preimage: None,
    })
}

pub fn read_orbit_csv(path: &Path) -> Result<Orbit> {
    parse_orbit_csv(&fs::read_to_string(path)?)
}

pub fn report_json(report: &ResponseReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// One row per scalar quantity: `quantity,value,stderr`.
pub fn report_csv(report: &ResponseReport) -> String {
    let mut out = String::new();
    header(
        &mut out,
        &[("system", report.system.clone()), ("gamma", report.gamma.to_string()), ("seed", report.seed.to_string())],
    );
    out.push_str("quantity,value,stderr\n");
    let mut row = |name: &str, value: f64, stderr: f64| {
        let _ = writeln!(out, "{name},{value},{stderr}");
    };
    if let Some(e) = report.sc_tangent {
        row("sc_tangent", e.value, e.stderr);
    }
    if let Some(e) = report.sc_adjoint {
        row("sc_adjoint", e.value, e.stderr);
    }
    if let Some(fd) = &report.fd {
        row("fd", fd.value, fd.stderr);
    }
    if let Some(e) = report.uc_residual {
        row("uc_residual", e.value, e.stderr);
    }
    if let Some(b) = report.boundary_term {
        row("boundary_term", b, 0.0);
    }
    if let Some(g) = report.summation_gap {
        row("summation_gap", g, 0.0);
    }
    out
}

/// `W,mean,stderr` for each computed partial sum.
pub fn ruelle_csv(curve: &RuelleCurve) -> String {
    let mut out = String::new();
    header(
        &mut out,
        &[
            ("w_max", curve.settings.w_max.to_string()),
            ("ensemble", curve.settings.ensemble.to_string()),
            ("truncated", curve.truncated.to_string()),
        ],
    );
    out.push_str("W,mean,stderr\n");
    for (w, e) in curve.partial_sums.iter().enumerate() {
        let _ = writeln!(out, "{w},{},{}", e.value, e.stderr);
    }
    out
}
