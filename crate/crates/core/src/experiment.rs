//! Config-driven runs that persist every artifact into one directory.
//!
//! Files written by [`run`]:
//!
//! | file | content |
//! |---|---|
//! | `config.toml` | effective config, defaults applied |
//! | `orbit.csv` | orbit container |
//! | `shadowing_vector.csv` | `v` and, for flows, `eta` |
//! | `shadowing_covector.csv` | `nu` and, for flows, `nu(F)` |
//! | `diagnostics.json` | solver diagnostics, or the error of a failed run |
//! | `splitting.csv` | CLV frames, when `solver.splitting` is set |
//! | `report.json`, `report.csv` | the response report |
//! | `ruelle.csv` | Ruelle partial sums, when `[ruelle]` is given |

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::config::{ExperimentConfig, Resolved};
use crate::error::{Error, Result};
use crate::io::{self, FieldSeries, FORMAT_VERSION};
use crate::response::{build_report, ResponseReport};
use crate::splitting::{clv, default_buffer};
use crate::systems::LinearizedOrbit;

#[derive(Debug)]
pub struct RunOutput {
    pub report: ResponseReport,
    pub files: Vec<PathBuf>,
}

/// Overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
}

pub fn resolve(config: &ExperimentConfig, source: &str, origin: &str, overrides: &Overrides) -> Result<Resolved> {
    let mut config = config.clone();
    if overrides.seed.is_some() {
        config.seed = overrides.seed;
    }
    config.resolve(source, origin)
}

fn write(files: &mut Vec<PathBuf>, dir: &Path, name: &str, content: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, content)?;
    files.push(path);
    Ok(())
}

/// Runs a resolved experiment, writing into `out`. On a solver failure the
/// error is also written to `diagnostics.json` before it is returned.
pub fn run(resolved: &Resolved, out: &Path) -> Result<RunOutput> {
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    write(&mut files, out, "config.toml", &resolved.config.to_toml())?;
    let (report, lo, sc) = match build_report(&resolved.spec, &resolved.plan) {
        Ok(r) => r,
        Err(e) => {
            let body = json!({ "format_version": FORMAT_VERSION, "error": e.to_string() });
            fs::write(out.join("diagnostics.json"), serde_json::to_string_pretty(&body)? + "\n")?;
            return Err(e);
        }
    };
    write(&mut files, out, "orbit.csv", &io::orbit_csv(&lo.orbit))?;
    let mut diagnostics = serde_json::Map::new();
    diagnostics.insert("format_version".into(), json!(FORMAT_VERSION));
    if let Some(sc) = &sc {
        if resolved.plan.tangent {
            let series = FieldSeries {
                quantity: "shadowing_vector",
                prefix: "v",
                values: &sc.pair.v,
                scalar: sc.pair.eta.as_deref().map(|e| ("eta", e)),
            };
            write(&mut files, out, "shadowing_vector.csv", &io::field_csv(&lo.orbit, &series))?;
            diagnostics.insert("tangent".into(), serde_json::to_value(&sc.pair.diagnostics)?);
        }
        if resolved.plan.adjoint {
            let series = FieldSeries {
                quantity: "shadowing_covector",
                prefix: "nu",
                values: &sc.covector.nu,
                scalar: sc.covector.drift_pairing.as_deref().map(|p| ("nu_of_F", p)),
            };
            write(&mut files, out, "shadowing_covector.csv", &io::field_csv(&lo.orbit, &series))?;
            diagnostics.insert("adjoint".into(), serde_json::to_value(&sc.covector.diagnostics)?);
        }
    }
    if resolved.splitting {
        let csv = splitting_csv(&lo)?;
        write(&mut files, out, "splitting.csv", &csv)?;
    }
    write(
        &mut files,
        out,
        "diagnostics.json",
        &(serde_json::to_string_pretty(&serde_json::Value::Object(diagnostics))? + "\n"),
    )?;
    write(&mut files, out, "report.json", &io::report_json(&report)?)?;
    write(&mut files, out, "report.csv", &io::report_csv(&report))?;
    if let Some(curve) = &report.ruelle {
        write(&mut files, out, "ruelle.csv", &io::ruelle_csv(curve))?;
    }
    Ok(RunOutput { report, files })
}

fn splitting_csv(lo: &LinearizedOrbit) -> Result<String> {
    let buffer = default_buffer(lo);
    if lo.steps() <= 2 * buffer {
        return Err(Error::InsufficientLength { needed: 2 * buffer + 1, available: lo.steps() });
    }
    let split = clv(lo, buffer)?;
    Ok(io::frames_csv(&lo.orbit, split.first, split.last, &split.clv_exponents, &split.frames))
}
