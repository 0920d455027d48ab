use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{SystemKind, SystemSpec};
use crate::error::{Error, Result};

/// A finite trajectory `x_0..x_N` recorded after spin-up.
#[derive(Debug, Clone, PartialEq)]
pub struct Orbit {
    pub system: String,
    pub kind: SystemKind,
    pub gamma: f64,
    pub states: Vec<DVector<f64>>,
    /// Step size: 1 for maps, `dt` for flows.
    pub time_step: f64,
    /// Number of steps discarded before `x_0`.
    pub spinup: usize,
    pub seed: u64,
    /// The state preceding `x_0`, when spin-up produced one.
    pub preimage: Option<DVector<f64>>,
}

impl Orbit {
    /// Step count `N`; there are `N + 1` states.
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |x| x.len())
    }

    /// `T = N dt` (equal to `N` for maps).
    pub fn total_time(&self) -> f64 {
        self.steps() as f64 * self.time_step
    }
}

fn check(spec: &SystemSpec, x: &DVector<f64>, step: usize) -> Result<()> {
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Divergence { step, detail: "non-finite state".into() });
    }
    if !spec.model().in_region(x) {
        return Err(Error::Divergence {
            step,
            detail: format!("state {:?} left the bounded region", x.as_slice()),
        });
    }
    Ok(())
}

pub(super) fn generate(
    spec: &SystemSpec,
    x0: Option<&DVector<f64>>,
    gamma: f64,
    n_steps: usize,
    spinup: usize,
    seed: u64,
) -> Result<Orbit> {
    if n_steps == 0 {
        return Err(Error::Configuration("orbit length N must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = spec.model();
    let mut preimage = None;
    let states = match (x0, model.exact_orbit(gamma, spinup + n_steps + 2, &mut rng)) {
        (None, Some(mut all)) => {
            let states = all.split_off(spinup + 1);
            preimage = all.pop();
            states
        }
        _ => {
            let mut x = match x0 {
                Some(x) => x.clone(),
                None => model.initial_state(&mut rng),
            };
            if x.len() != spec.dim() {
                return Err(Error::LengthMismatch { expected: spec.dim(), found: x.len() });
            }
            model.normalize_state(&mut x);
            for k in 0..spinup {
                let next = spec.step(&x, gamma).map_err(|e| relabel(e, k))?;
                check(spec, &next, k + 1)?;
                preimage = Some(std::mem::replace(&mut x, next));
            }
            check(spec, &x, spinup)?;
            let mut states = Vec::with_capacity(n_steps + 1);
            states.push(x);
            for k in 0..n_steps {
                let next = spec.step(&states[k], gamma).map_err(|e| relabel(e, spinup + k))?;
                check(spec, &next, spinup + k + 1)?;
                states.push(next);
            }
            states
        }
    };
    Ok(Orbit {
        system: spec.name().to_string(),
        kind: spec.kind(),
        gamma,
        states,
        time_step: spec.time_step(),
        spinup,
        seed,
        preimage,
    })
}

fn relabel(e: Error, step: usize) -> Error {
    match e {
        Error::Divergence { detail, .. } => Error::Divergence { step, detail },
        other => other,
    }
}
