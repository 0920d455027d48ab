//! Linear-response quantities: the pair product, the shadowing contribution
//! along the tangent and adjoint paths, finite-difference and Ruelle-series
//! baselines, and the report that compares them.
//!
//! Orbit averages are taken over the interior steps `n` in `[a, b)`. For a
//! step forcing `b_n` and adjoint sources `s_n` (both carrying a factor `dt`
//! for flows) the two estimates are the averages of
//!
//! ```text
//! tangent:  (s_n . v_n - dt eta_n psi_{n+1}) / dt
//! adjoint:  nu_{n+1} . b_n / dt
//! ```
//!
//! so that summation by parts ties them together exactly up to the boundary
//! term `(nu_a . v_a - nu_b . v_b) / (b - a)` and, for flows, the defect of
//! `nu(F) = -psi`.

use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjoint::{nilsas_flow_solve, nilsas_solve_sources, ShadowingCovector};
use crate::error::{Error, Result};
use crate::par;
use crate::stats::{batch_means, mean, mean_stderr, Estimate, DEFAULT_BATCHES};
use crate::systems::{LinearizedOrbit, Observable, SystemKind, SystemSpec};
use crate::tangent::{shadowing_pair, ShadowingOptions, ShadowingPair};

pub type CovectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

/// A covector field `omega` and, for flows, a scalar `psi` with
/// `F(psi) = omega(F)`.
#[derive(Clone)]
pub struct AdmissiblePair {
    pub omega: CovectorFn,
    pub psi: Option<ScalarFn>,
}

impl std::fmt::Debug for AdmissiblePair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdmissiblePair").field("psi", &self.psi.is_some()).finish()
    }
}

impl AdmissiblePair {
    pub fn new(omega: CovectorFn, psi: Option<ScalarFn>) -> Self {
        Self { omega, psi }
    }

    /// `(dPhi, Phi - mean(Phi))` with the mean over the orbit interior; maps
    /// get no `psi`.
    pub fn canonical(lo: &LinearizedOrbit, phi: Observable) -> Self {
        let omega: CovectorFn = Arc::new(move |x| phi.differential(x));
        let psi: Option<ScalarFn> = match lo.spec.kind() {
            SystemKind::Map => None,
            SystemKind::Flow => {
                let values: Vec<f64> = lo.orbit.states.iter().map(|x| phi.value(x)).collect();
                let center = trapezoid_mean(&values, lo.interior());
                Some(Arc::new(move |x| phi.value(x) - center))
            }
        };
        Self { omega, psi }
    }

    /// Adds `c` to `psi`, keeping the pair admissible.
    pub fn shifted(&self, c: f64) -> Self {
        let psi = self.psi.clone().map(|p| Arc::new(move |x: &DVector<f64>| p(x) + c) as ScalarFn);
        Self { omega: self.omega.clone(), psi }
    }

    pub fn scaled(&self, k: f64) -> Self {
        let omega = self.omega.clone();
        let psi = self.psi.clone().map(|p| Arc::new(move |x: &DVector<f64>| k * p(x)) as ScalarFn);
        Self { omega: Arc::new(move |x| omega(x) * k), psi }
    }
}

/// Trapezoid average of grid values over an inclusive index range.
pub fn trapezoid_mean(values: &[f64], range: std::ops::RangeInclusive<usize>) -> f64 {
    let (a, b) = (*range.start(), *range.end());
    if b <= a {
        return values[a];
    }
    let inner: f64 = values[a + 1..b].iter().sum();
    (inner + 0.5 * (values[a] + values[b])) / (b - a) as f64
}

fn interior_steps(lo: &LinearizedOrbit) -> std::ops::Range<usize> {
    let r = lo.interior();
    *r.start()..*r.end()
}

fn psi_values(lo: &LinearizedOrbit, adm: &AdmissiblePair) -> Option<Vec<f64>> {
    adm.psi.as_ref().map(|p| lo.orbit.states.iter().map(|x| p(x)).collect())
}

/// Per-step terms of the pair product `<<v, eta; omega, psi>>`.
fn product_terms(
    lo: &LinearizedOrbit,
    pair: &ShadowingPair,
    sources: &[DVector<f64>],
    psi: Option<&[f64]>,
    range: std::ops::Range<usize>,
) -> Result<Vec<f64>> {
    if pair.v.len() != lo.steps() + 1 {
        return Err(Error::LengthMismatch { expected: lo.steps() + 1, found: pair.v.len() });
    }
    let dt = lo.time_step();
    Ok(range
        .map(|n| {
            let mut q = sources[n].dot(&pair.v[n]);
            if let (Some(eta), Some(psi)) = (&pair.eta, psi) {
                q -= dt * eta[n] * psi[n + 1];
            }
            q / dt
        })
        .collect())
}

/// Orbit-average estimate of the pair product over the interior, with a
/// batch-means standard error.
pub fn pair_product(lo: &LinearizedOrbit, pair: &ShadowingPair, adm: &AdmissiblePair) -> Result<Estimate> {
    let omega = adm.omega.clone();
    let sources = lo.adjoint_sources(&move |x: &DVector<f64>| omega(x));
    let psi = psi_values(lo, adm);
    let terms = product_terms(lo, pair, &sources, psi.as_deref(), interior_steps(lo))?;
    Ok(batch_means(&terms, DEFAULT_BATCHES))
}

/// The gauge-shifted pair `(v - h F, eta + F(h))`, with `F(h)` the forward
/// difference of `h` along the orbit; it solves the same discrete equation up
/// to the integrator's local error.
pub fn gauge_shift(lo: &LinearizedOrbit, pair: &ShadowingPair, h: &dyn Fn(&DVector<f64>) -> f64) -> Result<ShadowingPair> {
    let eta = pair.eta.as_ref().ok_or_else(|| Error::KindMismatch {
        system: lo.spec.name().to_string(),
        expected: "flow",
        found: "map",
    })?;
    let dt = lo.time_step();
    let drift = lo.drift();
    let hv: Vec<f64> = lo.orbit.states.iter().map(h).collect();
    let v = pair.v.iter().zip(&drift).zip(&hv).map(|((v, f), h)| v - f * *h).collect();
    let eta = eta.iter().enumerate().map(|(n, e)| e + (hv[n + 1] - hv[n]) / dt).collect();
    Ok(ShadowingPair { v, eta: Some(eta), diagnostics: pair.diagnostics.clone() })
}

/// Both shadowing-contribution estimates and the solutions behind them.
#[derive(Debug, Clone)]
pub struct ShadowingContribution {
    pub tangent: Estimate,
    pub adjoint: Estimate,
    /// `(nu_a . v_a - nu_b . v_b) / (b - a)` on the interior `[a, b]`.
    pub boundary_term: f64,
    /// Residual of the exact discrete summation-by-parts identity over the
    /// whole orbit (flows include the `nu(F)` terms), relative to the
    /// largest summand.
    pub summation_gap: f64,
    pub pair: ShadowingPair,
    pub covector: ShadowingCovector,
}

impl ShadowingContribution {
    /// `|tangent - adjoint|` minus the boundary term, in units of the
    /// combined standard error.
    pub fn duality_z(&self) -> f64 {
        let gap = (self.tangent.value - self.adjoint.value).abs() - self.boundary_term.abs();
        gap.max(0.0) / self.tangent.combined_stderr(&self.adjoint)
    }
}

/// Shadowing contribution of the step forcing `forcing` to the average
/// paired by `adm`, along both paths.
pub fn shadowing_contribution(
    lo: &LinearizedOrbit,
    forcing: &[DVector<f64>],
    adm: &AdmissiblePair,
    opts: &ShadowingOptions,
) -> Result<ShadowingContribution> {
    let omega = adm.omega.clone();
    let omega_ref = move |x: &DVector<f64>| omega(x);
    let sources = lo.adjoint_sources(&omega_ref);
    let pair = shadowing_pair(lo, forcing, opts)?;
    let covector = match lo.spec.kind() {
        SystemKind::Map => nilsas_solve_sources(lo, &sources, opts)?,
        SystemKind::Flow => {
            let psi = adm.psi.clone().ok_or_else(|| Error::Configuration("flows need psi in the admissible pair".into()))?;
            nilsas_flow_solve(lo, &omega_ref, &move |x: &DVector<f64>| psi(x), opts)?
        }
    };
    let psi = psi_values(lo, adm);
    let range = interior_steps(lo);
    let dt = lo.time_step();
    let t_terms = product_terms(lo, &pair, &sources, psi.as_deref(), range.clone())?;
    let a_terms: Vec<f64> = range.clone().map(|n| covector.nu[n + 1].dot(&forcing[n]) / dt).collect();
    let (a, b) = (range.start, range.end);
    let count = (b - a).max(1) as f64;
    let boundary_term = (covector.nu[a].dot(&pair.v[a]) - covector.nu[b].dot(&pair.v[b])) / count / dt;
    let summation_gap = summation_gap(lo, &pair, &covector, &sources, forcing);
    Ok(ShadowingContribution {
        tangent: batch_means(&t_terms, DEFAULT_BATCHES),
        adjoint: batch_means(&a_terms, DEFAULT_BATCHES),
        boundary_term,
        summation_gap,
        pair,
        covector,
    })
}

/// Relative residual of
/// `sum s_n.v_n - sum nu_{n+1}.b_n + dt sum eta_n nu_{n+1}(F_{n+1}) = nu_0.v_0 - nu_N.v_N`.
pub fn summation_gap(
    lo: &LinearizedOrbit,
    pair: &ShadowingPair,
    covector: &ShadowingCovector,
    sources: &[DVector<f64>],
    forcing: &[DVector<f64>],
) -> f64 {
    let n = lo.steps();
    let dt = lo.time_step();
    let drift = pair.eta.as_ref().map(|_| lo.drift());
    let mut total = covector.nu[n].dot(&pair.v[n]) - covector.nu[0].dot(&pair.v[0]);
    let mut scale = total.abs();
    for k in 0..n {
        let mut t = sources[k].dot(&pair.v[k]) - covector.nu[k + 1].dot(&forcing[k]);
        if let (Some(eta), Some(drift)) = (&pair.eta, &drift) {
            t += dt * eta[k] * covector.nu[k + 1].dot(&drift[k + 1]);
        }
        scale = scale.max(t.abs());
        total += t;
    }
    total.abs() / scale.max(f64::MIN_POSITIVE)
}

/// `SC` of the system's own perturbation on a map orbit with `omega = dPhi`.
pub fn sc_discrete(lo: &LinearizedOrbit, opts: &ShadowingOptions) -> Result<ShadowingContribution> {
    if lo.spec.kind() != SystemKind::Map {
        return Err(Error::KindMismatch { system: lo.spec.name().to_string(), expected: "map", found: "flow" });
    }
    let adm = AdmissiblePair::canonical(lo, lo.spec.observable());
    shadowing_contribution(lo, &lo.perturbation_forcing(), &adm, opts)
}

/// `SC` of the system's own perturbation on a flow orbit with the canonical
/// pair `(dPhi, Phi - mean(Phi))`.
pub fn sc_continuous(lo: &LinearizedOrbit, opts: &ShadowingOptions) -> Result<ShadowingContribution> {
    if lo.spec.kind() != SystemKind::Flow {
        return Err(Error::KindMismatch { system: lo.spec.name().to_string(), expected: "flow", found: "map" });
    }
    let adm = AdmissiblePair::canonical(lo, lo.spec.observable());
    shadowing_contribution(lo, &lo.perturbation_forcing(), &adm, opts)
}

/// Orbit average of `Phi`: plain mean for maps, trapezoid for flows.
pub fn orbit_average(spec: &SystemSpec, states: &[DVector<f64>]) -> f64 {
    let phi = spec.observable();
    let values: Vec<f64> = states.iter().map(|x| phi.value(x)).collect();
    match spec.kind() {
        SystemKind::Map => mean(&values),
        SystemKind::Flow => trapezoid_mean(&values, 0..=values.len() - 1),
    }
}

/// Seed of ensemble member `m`.
pub fn member_seed(seed: u64, m: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(m as u64 + 1);
    rng.gen()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdSettings {
    pub h: f64,
    /// Steps per averaged orbit.
    pub steps: usize,
    pub spinup: usize,
    pub ensemble: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FdEstimate {
    pub value: f64,
    pub stderr: f64,
    pub settings: FdSettings,
    pub members: Vec<f64>,
}

/// Central difference of the orbit average of `Phi` at `gamma0 +- h`, one
/// independent initial condition per ensemble member (shared by its two
/// parameter values).
pub fn fd_response(spec: &SystemSpec, gamma0: f64, settings: FdSettings, seed: u64) -> Result<FdEstimate> {
    if !(settings.h > 0.0) {
        return Err(Error::Configuration(format!("finite-difference step h must be positive, got {}", settings.h)));
    }
    if settings.ensemble < 2 {
        return Err(Error::Configuration(format!("ensemble must be at least 2, got {}", settings.ensemble)));
    }
    let members = par::try_map_indexed(settings.ensemble, |m| -> Result<f64> {
        let s = member_seed(seed, m);
        let avg = |g: f64| -> Result<f64> {
            let o = spec.generate_orbit(None, g, settings.steps, settings.spinup, s)?;
            Ok(orbit_average(spec, &o.states))
        };
        Ok((avg(gamma0 + settings.h)? - avg(gamma0 - settings.h)?) / (2.0 * settings.h))
    })?;
    let e = mean_stderr(&members);
    Ok(FdEstimate { value: e.value, stderr: e.stderr, settings, members })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuelleSettings {
    /// Largest lag, in steps.
    pub w_max: usize,
    pub ensemble: usize,
    /// Start points per member.
    pub starts: usize,
    pub spinup: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuelleCurve {
    /// `partial_sums[W]` for `W = 0..=w_used`.
    pub partial_sums: Vec<Estimate>,
    pub settings: RuelleSettings,
    /// Set when the curve stops before `w_max` because the propagated
    /// perturbation would exceed the precision guard or overflowed.
    pub truncated: bool,
}

/// Partial sums `S_W = <sum_{n=0}^{W} dPhi_{m+1+n} (A_{m+n} ... A_{m+1} b_m)>`
/// averaged over start points `m` of each member orbit, then over members.
/// Lags whose growth `exp(lambda_max W dt)` times machine epsilon reaches 1
/// are not computed.
pub fn ruelle_series(spec: &SystemSpec, gamma0: f64, settings: RuelleSettings, seed: u64) -> Result<RuelleCurve> {
    if settings.ensemble < 2 || settings.starts == 0 {
        return Err(Error::Configuration("Ruelle series needs ensemble >= 2 and starts >= 1".into()));
    }
    let lambda = spec.model().nominal_max_exponent().max(0.0) * spec.time_step();
    let guard = if lambda > 0.0 { ((1.0 / f64::EPSILON).ln() / lambda).floor() as usize } else { usize::MAX };
    let mut w_used = settings.w_max;
    let mut truncated = false;
    if guard <= w_used {
        w_used = guard.saturating_sub(1);
        truncated = true;
    }
    let phi = spec.observable();
    let runs = par::try_map_indexed(settings.ensemble, |m| -> Result<Vec<f64>> {
        let len = settings.starts + w_used + 1;
        let o = spec.generate_orbit(None, gamma0, len, settings.spinup, member_seed(seed, m))?;
        let lo = LinearizedOrbit::new(spec.clone(), o)?;
        let b = lo.perturbation_forcing();
        let mut sums = vec![0.0; w_used + 1];
        for start in 0..settings.starts {
            let mut w = b[start].clone();
            let mut acc = 0.0;
            for (lag, sum) in sums.iter_mut().enumerate() {
                let k = start + 1 + lag;
                acc += phi.differential(lo.state(k)).dot(&w);
                *sum += acc;
                if lag < w_used {
                    w = lo.lin.push(k, &w);
                }
            }
        }
        Ok(sums.into_iter().map(|s| s / settings.starts as f64).collect())
    })?;
    let mut partial_sums = Vec::with_capacity(w_used + 1);
    for lag in 0..=w_used {
        let xs: Vec<f64> = runs.iter().map(|r| r[lag]).collect();
        let e = mean_stderr(&xs);
        if !(e.value.is_finite() && e.stderr.is_finite()) {
            truncated = true;
            break;
        }
        partial_sums.push(e);
    }
    Ok(RuelleCurve { partial_sums, settings, truncated })
}

/// Format version of serialized reports.
pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Allowed `|SC_tangent - SC_adjoint|` beyond the boundary term, in
    /// combined standard errors.
    pub duality_sigmas: f64,
    /// Informational bound on `|UC| / |FD|`.
    pub uc_relative: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { duality_sigmas: 3.0, uc_relative: 0.1 }
    }
}

/// Everything measured for one system and parameter value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseReport {
    pub format_version: u32,
    pub system: String,
    pub kind: SystemKind,
    pub observable: Observable,
    pub gamma: f64,
    pub steps: usize,
    pub time_step: f64,
    pub seed: u64,
    pub sc_tangent: Option<Estimate>,
    pub sc_adjoint: Option<Estimate>,
    pub boundary_term: Option<f64>,
    pub summation_gap: Option<f64>,
    pub fd: Option<FdEstimate>,
    pub ruelle: Option<RuelleCurve>,
    /// `FD - SC_adjoint`.
    pub uc_residual: Option<Estimate>,
    pub flags: ReportFlags,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReportFlags {
    /// Tangent and adjoint estimates agree within tolerance.
    pub duality: Option<bool>,
    /// `|UC| / |FD|` within the informational bound.
    pub uc_small: Option<bool>,
}

/// Which estimates [`build_report`] assembles.
#[derive(Debug, Clone)]
pub struct ReportPlan {
    pub gamma: f64,
    pub steps: usize,
    pub spinup: usize,
    pub seed: u64,
    pub tangent: bool,
    pub adjoint: bool,
    pub options: Option<ShadowingOptions>,
    pub fd: Option<FdSettings>,
    pub ruelle: Option<RuelleSettings>,
    pub tolerances: Tolerances,
}

/// Runs the planned solves and baselines. Returns the report together with
/// the orbit and the shadowing contribution (when solved) for persistence.
pub fn build_report(spec: &SystemSpec, plan: &ReportPlan) -> Result<(ResponseReport, LinearizedOrbit, Option<ShadowingContribution>)> {
    let orbit = spec.generate_orbit(None, plan.gamma, plan.steps, plan.spinup, plan.seed)?;
    let lo = LinearizedOrbit::new(spec.clone(), orbit)?;
    let sc = if plan.tangent || plan.adjoint {
        let opts = plan.options.clone().unwrap_or_else(|| ShadowingOptions::for_orbit(&lo));
        let sc = match spec.kind() {
            SystemKind::Map => sc_discrete(&lo, &opts)?,
            SystemKind::Flow => sc_continuous(&lo, &opts)?,
        };
        Some(sc)
    } else {
        None
    };
    let fd = plan.fd.map(|s| fd_response(spec, plan.gamma, s, plan.seed ^ 0xfd)).transpose()?;
    let ruelle = plan.ruelle.map(|s| ruelle_series(spec, plan.gamma, s, plan.seed ^ 0x2e)).transpose()?;

    let sc_tangent = sc.as_ref().filter(|_| plan.tangent).map(|s| s.tangent);
    let sc_adjoint = sc.as_ref().filter(|_| plan.adjoint).map(|s| s.adjoint);
    let uc_residual = match (&fd, sc_adjoint) {
        (Some(fd), Some(a)) => Some(Estimate { value: fd.value - a.value, stderr: fd.stderr.hypot(a.stderr) }),
        _ => None,
    };
    let duality = match (&sc, plan.tangent && plan.adjoint) {
        (Some(s), true) => Some(s.duality_z() <= plan.tolerances.duality_sigmas),
        _ => None,
    };
    let uc_small = match (&uc_residual, &fd) {
        (Some(uc), Some(fd)) => Some(uc.value.abs() <= plan.tolerances.uc_relative * fd.value.abs().max(f64::MIN_POSITIVE)),
        _ => None,
    };
    let report = ResponseReport {
        format_version: REPORT_FORMAT_VERSION,
        system: spec.name().to_string(),
        kind: spec.kind(),
        observable: spec.observable(),
        gamma: plan.gamma,
        steps: plan.steps,
        time_step: spec.time_step(),
        seed: plan.seed,
        sc_tangent,
        sc_adjoint,
        boundary_term: sc.as_ref().map(|s| s.boundary_term),
        summation_gap: sc.as_ref().map(|s| s.summation_gap),
        fd,
        ruelle,
        uc_residual,
        flags: ReportFlags { duality, uc_small },
        tolerances: plan.tolerances,
    };
    Ok((report, lo, sc))
}
