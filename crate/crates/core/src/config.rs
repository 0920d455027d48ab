//! Experiment configuration in TOML.
//!
//! ```toml
//! seed = 7
//! output = "runs/lorenz"
//!
//! [system]
//! name = "lorenz63"        # doubling | cat | contracting | lorenz63
//! observable = "z"         # x | y | z | sin-sum | coord:<i>
//! gamma = 0.0
//! dt = 0.005               # flows only
//! rho = 28.0               # lorenz63 only, also sigma and beta
//!
//! [orbit]
//! steps = 40000
//! spinup = 10000
//!
//! [solver]
//! paths = "both"           # tangent | adjoint | both | none
//! unstable_dim = 1
//! segment_length = 1000
//! method = "terminal-constraint"   # or least-squares
//! splitting = false
//!
//! [fd]
//! h = 1.0
//! steps = 400000
//! spinup = 10000
//! ensemble = 16
//!
//! [ruelle]
//! w_max = 40
//! ensemble = 16
//! starts = 200
//!
//! [tolerances]
//! duality_sigmas = 3.0
//! uc_relative = 0.1
//! ```
//!
//! Only `[system] name` is required. Omitted `[fd]` and `[ruelle]` tables
//! skip those baselines. Unknown keys are rejected, and errors carry the
//! line of the offending entry.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::response::{FdSettings, ReportPlan, RuelleSettings, Tolerances};
use crate::systems::{by_name, Lorenz63, Observable, SystemKind, SystemSpec, CATALOG};
use crate::tangent::{ShadowingMethod, ShadowingOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Output directory of `run`, relative to the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub system: SystemSection,
    #[serde(default)]
    pub orbit: OrbitSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd: Option<FdSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ruelle: Option<RuelleSection>,
    #[serde(default)]
    pub tolerances: ToleranceSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<Observable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spinup: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paths {
    Tangent,
    Adjoint,
    #[default]
    Both,
    None,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<Paths>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unstable_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<ShadowingMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splitting: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdSection {
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spinup: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuelleSection {
    pub w_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spinup: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duality_sigmas: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uc_relative: Option<f64>,
}

pub const DEFAULT_SEED: u64 = 1;
const DEFAULT_ENSEMBLE: usize = 16;

/// A validated configuration with every default filled in, plus the
/// system it describes.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub spec: SystemSpec,
    pub plan: ReportPlan,
    pub splitting: bool,
}

/// 1-based line of byte offset `pos`.
fn line_of(text: &str, pos: usize) -> usize {
    text[..pos.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line of `key = ...` inside `[section]` (or the top level when `section`
/// is empty), if present.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

/// Error helper for semantic checks on a parsed config.
struct Checker<'a> {
    source: &'a str,
    origin: &'a str,
}

impl Checker<'_> {
    fn fail(&self, section: &str, key: &str, message: String) -> Error {
        let field = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
        let at = match locate(self.source, section, key) {
            Some(line) => format!("{}:{line}", self.origin),
            None => self.origin.to_string(),
        };
        Error::Configuration(format!("{at}: {field}: {message}"))
    }
}

/// Parses TOML text. `origin` names the source in error messages.
pub fn parse(text: &str, origin: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| {
        let at = match e.span() {
            Some(span) => format!("{origin}:{}", line_of(text, span.start)),
            None => origin.to_string(),
        };
        Error::Configuration(format!("{at}: {}", e.message()))
    })
}

pub fn load(path: &std::path::Path) -> Result<(ExperimentConfig, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Configuration(format!("{}: cannot read: {e}", path.display())))?;
    Ok((parse(&text, &path.display().to_string())?, text))
}

impl ExperimentConfig {
    /// A config naming only the system.
    pub fn minimal(name: &str) -> Self {
        Self {
            seed: None,
            output: None,
            system: SystemSection {
                name: name.to_string(),
                observable: None,
                gamma: None,
                dt: None,
                sigma: None,
                beta: None,
                rho: None,
            },
            orbit: OrbitSection::default(),
            solver: SolverSection::default(),
            fd: None,
            ruelle: None,
            tolerances: ToleranceSection::default(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks ranges and fills defaults. `source` is the original text, used
    /// only to anchor error messages.
    pub fn resolve(&self, source: &str, origin: &str) -> Result<Resolved> {
        let ck = Checker { source, origin };
        let s = &self.system;
        let mut spec = match s.name.as_str() {
            "lorenz63" => {
                let mut model = Lorenz63::default();
                for (key, value, slot) in [
                    ("sigma", s.sigma, &mut model.sigma),
                    ("beta", s.beta, &mut model.beta),
                    ("rho", s.rho, &mut model.rho),
                ] {
                    if let Some(v) = value {
                        if !v.is_finite() {
                            return Err(ck.fail("system", key, format!("must be finite, got {v}")));
                        }
                        *slot = v;
                    }
                }
                SystemSpec::new(Arc::new(model))
            }
            name => {
                let spec = by_name(name).ok_or_else(|| {
                    ck.fail("system", "name", format!("unknown system `{name}`; expected one of {}", CATALOG.join(", ")))
                })?;
                for (key, value) in [("sigma", s.sigma), ("beta", s.beta), ("rho", s.rho)] {
                    if value.is_some() {
                        return Err(ck.fail("system", key, format!("only applies to lorenz63, not {name}")));
                    }
                }
                spec
            }
        };
        if let Some(dt) = s.dt {
            if spec.kind() == SystemKind::Map {
                return Err(ck.fail("system", "dt", format!("{} is a map and has no time step", s.name)));
            }
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(ck.fail("system", "dt", format!("must be positive, got {dt}")));
            }
            spec = spec.with_time_step(dt);
        }
        if let Some(obs) = s.observable {
            if !obs.fits(spec.dim()) {
                return Err(ck.fail("system", "observable", format!("`{obs}` needs more than {} coordinates", spec.dim())));
            }
            spec = spec.with_observable(obs);
        }
        let gamma = s.gamma.unwrap_or(0.0);
        if !gamma.is_finite() {
            return Err(ck.fail("system", "gamma", "must be finite".into()));
        }

        let default_steps = match spec.kind() {
            SystemKind::Map => 10_000,
            SystemKind::Flow => (200.0 / spec.time_step()).round() as usize,
        };
        let steps = self.orbit.steps.unwrap_or(default_steps);
        let min_steps = 2 * spec.interior_buffer() + 40;
        if steps < min_steps {
            return Err(ck.fail("orbit", "steps", format!("must be at least {min_steps} for {}, got {steps}", s.name)));
        }
        let spinup = self.orbit.spinup.unwrap_or(spec.default_spinup_steps());

        let m = spec.dim();
        let free = match spec.kind() {
            SystemKind::Map => m,
            SystemKind::Flow => m - 1,
        };
        let unstable_dim = self.solver.unstable_dim.unwrap_or(spec.unstable_dim());
        if unstable_dim > free {
            let what = match spec.kind() {
                SystemKind::Map => format!("the state dimension M = {m}"),
                SystemKind::Flow => format!("M - 1 = {free} (the flow direction is excluded)"),
            };
            return Err(ck.fail("solver", "unstable_dim", format!("{unstable_dim} exceeds {what}")));
        }
        let segment_length = self.solver.segment_length.unwrap_or(spec.default_segment_length());
        if segment_length == 0 || segment_length > steps {
            return Err(ck.fail("solver", "segment_length", format!("must lie in 1..={steps}, got {segment_length}")));
        }
        let method = self.solver.method.unwrap_or_default();
        let paths = self.solver.paths.unwrap_or_default();
        let splitting = self.solver.splitting.unwrap_or(false);

        let fd = match &self.fd {
            None => None,
            Some(f) => {
                if !(f.h > 0.0 && f.h.is_finite()) {
                    return Err(ck.fail("fd", "h", format!("must be positive, got {}", f.h)));
                }
                let ensemble = f.ensemble.unwrap_or(DEFAULT_ENSEMBLE);
                if ensemble < 2 {
                    return Err(ck.fail("fd", "ensemble", format!("must be at least 2, got {ensemble}")));
                }
                let fs = f.steps.unwrap_or(steps);
                if fs == 0 {
                    return Err(ck.fail("fd", "steps", "must be positive".into()));
                }
                Some(FdSection { h: f.h, steps: Some(fs), spinup: Some(f.spinup.unwrap_or(spinup)), ensemble: Some(ensemble) })
            }
        };
        let ruelle = match &self.ruelle {
            None => None,
            Some(r) => {
                let ensemble = r.ensemble.unwrap_or(DEFAULT_ENSEMBLE);
                if ensemble < 2 {
                    return Err(ck.fail("ruelle", "ensemble", format!("must be at least 2, got {ensemble}")));
                }
                let starts = r.starts.unwrap_or(200);
                if starts == 0 {
                    return Err(ck.fail("ruelle", "starts", "must be positive".into()));
                }
                Some(RuelleSection {
                    w_max: r.w_max,
                    ensemble: Some(ensemble),
                    starts: Some(starts),
                    spinup: Some(r.spinup.unwrap_or(spinup)),
                })
            }
        };
        let defaults = Tolerances::default();
        let tolerances = Tolerances {
            duality_sigmas: self.tolerances.duality_sigmas.unwrap_or(defaults.duality_sigmas),
            uc_relative: self.tolerances.uc_relative.unwrap_or(defaults.uc_relative),
        };
        for (key, v) in [("duality_sigmas", tolerances.duality_sigmas), ("uc_relative", tolerances.uc_relative)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ck.fail("tolerances", key, format!("must be positive, got {v}")));
            }
        }
        let seed = self.seed.unwrap_or(DEFAULT_SEED);

        let lorenz = spec.name() == "lorenz63";
        let model_params = |v: Option<f64>, d: f64| if lorenz { Some(v.unwrap_or(d)) } else { None };
        let lorenz_default = Lorenz63::default();
        let config = ExperimentConfig {
            seed: Some(seed),
            output: self.output.clone(),
            system: SystemSection {
                name: s.name.clone(),
                observable: Some(spec.observable()),
                gamma: Some(gamma),
                dt: (spec.kind() == SystemKind::Flow).then_some(spec.time_step()),
                sigma: model_params(s.sigma, lorenz_default.sigma),
                beta: model_params(s.beta, lorenz_default.beta),
                rho: model_params(s.rho, lorenz_default.rho),
            },
            orbit: OrbitSection { steps: Some(steps), spinup: Some(spinup) },
            solver: SolverSection {
                paths: Some(paths),
                unstable_dim: Some(unstable_dim),
                segment_length: Some(segment_length),
                method: Some(method),
                splitting: Some(splitting),
            },
            fd: fd.clone(),
            ruelle: ruelle.clone(),
            tolerances: ToleranceSection {
                duality_sigmas: Some(tolerances.duality_sigmas),
                uc_relative: Some(tolerances.uc_relative),
            },
        };
        let plan = ReportPlan {
            gamma,
            steps,
            spinup,
            seed,
            tangent: matches!(paths, Paths::Tangent | Paths::Both),
            adjoint: matches!(paths, Paths::Adjoint | Paths::Both),
            options: Some(ShadowingOptions { unstable_dim, segment_length, method, seed: 0x5eed }),
            fd: fd.map(|f| FdSettings {
                h: f.h,
                steps: f.steps.unwrap_or(steps),
                spinup: f.spinup.unwrap_or(spinup),
                ensemble: f.ensemble.unwrap_or(DEFAULT_ENSEMBLE),
            }),
            ruelle: ruelle.map(|r| RuelleSettings {
                w_max: r.w_max,
                ensemble: r.ensemble.unwrap_or(DEFAULT_ENSEMBLE),
                starts: r.starts.unwrap_or(200),
                spinup: r.spinup.unwrap_or(spinup),
            }),
            tolerances,
        };
        Ok(Resolved { config, spec, plan, splitting })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(text: &str) -> Result<Resolved> {
        parse(text, "cfg.toml")?.resolve(text, "cfg.toml")
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let r = resolve("[system]\nname = \"doubling\"\n").unwrap();
        assert_eq!(r.plan.steps, 10_000);
        assert_eq!(r.config.solver.unstable_dim, Some(1));
        assert!(r.plan.fd.is_none());
    }

    #[test]
    fn unknown_key_is_line_anchored() {
        let e = resolve("[system]\nname = \"cat\"\ncolour = 3\n").unwrap_err().to_string();
        assert!(e.contains("cfg.toml:3"), "{e}");
        assert!(e.contains("colour"), "{e}");
    }

    #[test]
    fn excess_unstable_dim_names_the_field() {
        let text = "[system]\nname = \"lorenz63\"\n\n[solver]\nunstable_dim = 4\n";
        let e = resolve(text).unwrap_err().to_string();
        assert!(e.contains("solver.unstable_dim"), "{e}");
        assert!(e.contains("cfg.toml:5"), "{e}");
    }

    #[test]
    fn map_rejects_time_step_and_model_overrides() {
        assert!(resolve("[system]\nname = \"cat\"\ndt = 0.1\n").is_err());
        assert!(resolve("[system]\nname = \"cat\"\nrho = 1.0\n").is_err());
        assert!(resolve("[system]\nname = \"nope\"\n").unwrap_err().to_string().contains("lorenz63"));
    }

    #[test]
    fn effective_config_round_trips() {
        let text = "seed = 4\n[system]\nname = \"lorenz63\"\nrho = 30.0\n[orbit]\nsteps = 4000\n[fd]\nh = 0.5\n";
        let r = resolve(text).unwrap();
        let echoed = r.config.to_toml();
        let again = resolve(&echoed).unwrap();
        assert_eq!(again.config, r.config);
        assert_eq!(again.config.to_toml(), echoed);
        assert_eq!(again.plan.fd, r.plan.fd);
    }
}
