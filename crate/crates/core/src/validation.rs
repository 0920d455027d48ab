//! Built-in validation suite run by `shadowing validate`.
//!
//! Each check runs on the benchmark systems and compares against a closed
//! form or an independent baseline. Checks are addressed by number (1..=10)
//! or by name; the extra `adjoint-pairing` check has no number.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adjoint::{adjoint_residual, homogeneous_adjoint, inhomogeneous_adjoint, nilsas_flow_solve, nilsas_solve, nilsas_solve_sources};
use crate::error::Result;
use crate::response::{
    fd_response, gauge_shift, pair_product, ruelle_series, sc_continuous, sc_discrete, shadowing_contribution,
    AdmissiblePair, FdSettings, RuelleSettings,
};
use crate::splitting::{clv, expand_shadowing_covector, lyapunov_exponents};
use crate::systems::{by_name, FlippedPullback, LinearizedOrbit, Observable, SystemSpec, CATALOG};
use crate::tangent::{nilss_solve, ShadowingOptions};

/// A deliberate defect for checking that the suite notices broken code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negate every model pullback.
    FlippedPullback,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub number: Option<u8>,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub limit: Duration,
}

impl Outcome {
    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        let num = self.number.map_or("-".to_string(), |n| n.to_string());
        format!(
            "{tag} {num:>2} {:<20} {} [{:.2} s, limit {} s]",
            self.name,
            self.detail,
            self.elapsed.as_secs_f64(),
            self.limit.as_secs()
        )
    }
}

struct Ctx {
    fault: Option<Fault>,
}

impl Ctx {
    fn spec(&self, name: &str) -> SystemSpec {
        let spec = by_name(name).expect("catalog system");
        match self.fault {
            None => spec,
            Some(Fault::FlippedPullback) => SystemSpec::new(Arc::new(FlippedPullback(spec.model().clone())))
                .with_observable(spec.observable())
                .with_time_step(spec.time_step()),
        }
    }

    fn orbit(&self, spec: &SystemSpec, gamma: f64, n: usize, seed: u64) -> Result<LinearizedOrbit> {
        let o = spec.generate_orbit(None, gamma, n, spec.default_spinup_steps(), seed)?;
        LinearizedOrbit::new(spec.clone(), o)
    }
}

type Verdict = Result<(bool, String)>;

struct Check {
    number: Option<u8>,
    name: &'static str,
    limit_secs: u64,
    run: fn(&Ctx) -> Verdict,
}

const CHECKS: [Check; 11] = [
    Check { number: Some(1), name: "closed-form", limit_secs: 1, run: closed_form },
    Check { number: Some(2), name: "adjoint-residual", limit_secs: 1, run: adjoint_residual_check },
    Check { number: Some(3), name: "oracle", limit_secs: 10, run: oracle },
    Check { number: Some(4), name: "duality", limit_secs: 30, run: duality },
    Check { number: Some(5), name: "gradient-explosion", limit_secs: 1, run: explosion },
    Check { number: Some(6), name: "flow-constraint", limit_secs: 60, run: flow_constraint },
    Check { number: Some(7), name: "gauge", limit_secs: 120, run: gauge },
    Check { number: Some(8), name: "exponents", limit_secs: 60, run: exponents },
    Check { number: Some(9), name: "response", limit_secs: 600, run: response },
    Check { number: Some(10), name: "stable", limit_secs: 1, run: stable },
    Check { number: None, name: "adjoint-pairing", limit_secs: 5, run: pairing },
];

/// `(number, name)` of every check in suite order.
pub fn names() -> Vec<(Option<u8>, &'static str)> {
    CHECKS.iter().map(|c| (c.number, c.name)).collect()
}

fn selected(check: &Check, only: &[String]) -> bool {
    only.is_empty()
        || only.iter().any(|s| {
            let s = s.trim();
            s == check.name || check.number.is_some_and(|n| s == n.to_string())
        })
}

/// Returns the filters in `only` that match no check.
pub fn unknown_filters(only: &[String]) -> Vec<String> {
    only.iter().filter(|s| !CHECKS.iter().any(|c| selected(c, std::slice::from_ref(*s)))).cloned().collect()
}

/// Runs the selected checks in order, calling `report` after each.
pub fn run(only: &[String], fault: Option<Fault>, mut report: impl FnMut(&Outcome)) -> Vec<Outcome> {
    let ctx = Ctx { fault };
    let mut out = Vec::new();
    for check in CHECKS.iter().filter(|c| selected(c, only)) {
        let t = Instant::now();
        let verdict = (check.run)(&ctx);
        let elapsed = t.elapsed();
        let limit = Duration::from_secs(check.limit_secs);
        let (mut passed, mut detail) = match verdict {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if elapsed > limit {
            passed = false;
            detail.push_str("; over time limit");
        }
        let o = Outcome { number: check.number, name: check.name, passed, detail, elapsed, limit };
        report(&o);
        out.push(o);
    }
    out
}

fn constant_sources(lo: &LinearizedOrbit, c: f64) -> Vec<DVector<f64>> {
    vec![DVector::from_element(lo.dim(), c); lo.steps()]
}

fn closed_form(ctx: &Ctx) -> Verdict {
    let spec = ctx.spec("doubling");
    let lo = ctx.orbit(&spec, 0.0, 100, 11)?;
    let opts = ShadowingOptions::for_orbit(&lo);
    let pair = nilss_solve(&lo, &lo.perturbation_forcing(), &opts)?;
    let dv = lo.interior().map(|n| (pair.v[n][0] + 1.0).abs()).fold(0.0, f64::max);
    let cov = nilsas_solve_sources(&lo, &constant_sources(&lo, 1.0), &opts)?;
    let dnu = (0..=100).map(|n| (cov.nu[n][0] - (-1.0 + 2f64.powi(-(n as i32)))).abs()).fold(0.0, f64::max);
    Ok((dv <= 1e-6 && dnu <= 1e-9, format!("max|v+1| {dv:.1e} (<=1e-6), max|nu-(-1+2^-n)| {dnu:.1e} (<=1e-9)")))
}

fn sin_sum_omega() -> impl Fn(&DVector<f64>) -> DVector<f64> + Sync {
    move |x: &DVector<f64>| Observable::SinSum.differential(x)
}

fn adjoint_residual_check(ctx: &Ctx) -> Verdict {
    let spec = ctx.spec("cat");
    let lo = ctx.orbit(&spec, 0.0, 2000, 12)?;
    let omega = sin_sum_omega();
    let cov = nilsas_solve(&lo, &omega, &ShadowingOptions::for_orbit(&lo))?;
    let r = adjoint_residual(&lo, &lo.adjoint_sources(&omega), &cov.nu, 0..lo.steps());
    Ok((r <= 1e-10, format!("max residual {r:.1e} (<=1e-10)")))
}

fn sup_relative(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max);
    let den = b.iter().map(|y| y.amax()).fold(0.0, f64::max);
    num / den
}

fn oracle(ctx: &Ctx) -> Verdict {
    let spec = ctx.spec("cat");
    let lo = ctx.orbit(&spec, 0.05, 2000, 13)?;
    let split = clv(&lo, 50)?;
    let omega = sin_sum_omega();
    let cov = nilsas_solve(&lo, &omega, &ShadowingOptions::for_orbit(&lo))?;
    let points = split.expansion_points(40, 1);
    let e = expand_shadowing_covector(&lo, &split, &lo.adjoint_sources(&omega), None, 40, &points)?;
    let solved: Vec<DVector<f64>> = points.iter().map(|&k| cov.nu[k].clone()).collect();
    let d = sup_relative(&solved, &e.nu);
    Ok((d <= 1e-3, format!("sup-relative difference {d:.1e} over {} points (<=1e-3)", points.len())))
}

fn duality(ctx: &Ctx) -> Verdict {
    let spec = ctx.spec("cat");
    let lo = ctx.orbit(&spec, 0.0, 100_000, 14)?;
    let sc = sc_discrete(&lo, &ShadowingOptions::for_orbit(&lo))?;
    let identity = ((sc.tangent.value - sc.adjoint.value) - sc.boundary_term).abs();
    let gap = (sc.tangent.value - sc.adjoint.value).abs();
    let sigma = sc.tangent.combined_stderr(&sc.adjoint);
    Ok((
        identity <= 1e-8 && gap <= 3.0 * sigma,
        format!("identity defect {identity:.1e} (<=1e-8), |SC_t-SC_a| {gap:.1e} vs 3 sigma {:.1e}", 3.0 * sigma),
    ))
}

fn explosion(ctx: &Ctx) -> Verdict {
    let spec = ctx.spec("doubling");
    let lo = ctx.orbit(&spec, 0.0, 60, 15)?;
    let sources = constant_sources(&lo, 1.0);
    let conventional = inhomogeneous_adjoint(&lo, &sources, &DVector::zeros(1))?;
    let bounded = nilsas_solve_sources(&lo, &sources, &ShadowingOptions::for_orbit(&lo))?;
    let big = conventional.columns.iter().map(|c| c.amax()).fold(0.0, f64::max);
    let small = bounded.nu.iter().map(|c| c.amax()).fold(0.0, f64::max);
    let ratio = big / small;
    Ok((ratio >= 1e15, format!("sup|nu'|/sup|nu| {ratio:.2e} (>=1e15)")))
}

/// Scale-free drift of `eps(F)` for `k` homogeneous adjoint solutions
/// carried backward without renormalization.
fn homogeneous_pairing_drift(lo: &LinearizedOrbit, seed: u64) -> Result<f64> {
    let m = lo.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terminal = DMatrix::from_fn(m, 2, |_, _| rng.gen_range(-1.0..1.0));
    let bundle = homogeneous_adjoint(lo, &terminal, lo.steps())?;
    let drift = lo.drift();
    let paired = bundle.drift_pairing(&drift);
    let n = lo.steps();
    let mut worst: f64 = 0.0;
    for k in 0..=n {
        for j in 0..terminal.ncols() {
            let col = bundle.columns[k].column(j).norm() * drift[k].norm();
            worst = worst.max((paired[k][j] - paired[n][j]).abs() / col);
        }
    }
    Ok(worst)
}

fn flow_constraint(ctx: &Ctx) -> Verdict {
    let spec = ctx.spec("lorenz63");
    let lo = ctx.orbit(&spec, 0.0, 40_000, 16)?;
    let adm = AdmissiblePair::canonical(&lo, Observable::Coordinate(2));
    let (omega, psi) = (adm.omega.clone(), adm.psi.clone().expect("flow pair"));
    let cov = nilsas_flow_solve(&lo, &move |x: &DVector<f64>| omega(x), &move |x: &DVector<f64>| psi(x), &ShadowingOptions::for_orbit(&lo))?;
    let int = lo.interior();
    let literal = cov.pairing_defect(int.clone()).unwrap_or(f64::NAN);
    let reflected = cov.pairing_defect_reflected(int).unwrap_or(f64::NAN);
    let short = ctx.orbit(&spec, 0.0, 4000, 17)?;
    let drift = homogeneous_pairing_drift(&short, 18)?;
    Ok((
        literal <= 1e-3 && drift <= 1e-6,
        format!(
            "sup|nu(F)-psi| {literal:.2e} (<=1e-3); companion sup|nu(F)+psi| {reflected:.1e}; homogeneous eps(F) drift {drift:.1e} (<=1e-6)"
        ),
    ))
}

fn gauge(ctx: &Ctx) -> Verdict {
    let spec = ctx.spec("lorenz63");
    let lo = ctx.orbit(&spec, 0.0, 40_000, 19)?;
    let opts = ShadowingOptions::for_orbit(&lo);
    let sc = sc_continuous(&lo, &opts)?;
    let adm = AdmissiblePair::canonical(&lo, Observable::Coordinate(2));
    let base = pair_product(&lo, &sc.pair, &adm)?;
    let shifts: [(&str, fn(&DVector<f64>) -> f64); 3] =
        [("sin(x)", |x| x[0].sin()), ("0.1y", |x| 0.1 * x[1]), ("cos(z/5)", |x| (x[2] / 5.0).cos())];
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for (_, h) in shifts {
        let shifted = pair_product(&lo, &gauge_shift(&lo, &sc.pair, &h)?, &adm)?;
        let z = (shifted.value - base.value).abs() / shifted.combined_stderr(&base);
        worst = worst.max(z);
        ok &= z <= 3.0;
    }
    let field = |y: &DVector<f64>| lo.spec.vector_field(y, lo.orbit.gamma);
    let forcing = lo.forcing_from_field(&field);
    let along = shadowing_contribution(&lo, &forcing, &adm, &opts)?;
    let zt = along.tangent.value.abs() / along.tangent.stderr;
    let za = along.adjoint.value.abs() / along.adjoint.stderr;
    ok &= zt <= 3.0 && za <= 3.0;
    Ok((ok, format!("gauge shifts within {worst:.2} sigma; X=F gives SC {:.2e} ({zt:.2} sigma) / {:.2e} ({za:.2} sigma)", along.tangent.value, along.adjoint.value)))
}

fn exponents(ctx: &Ctx) -> Verdict {
    let d = lyapunov_exponents(&ctx.orbit(&ctx.spec("doubling"), 0.0, 20_000, 20)?, 1)?.values()[0];
    let cat = lyapunov_exponents(&ctx.orbit(&ctx.spec("cat"), 0.0, 20_000, 21)?, 2)?.values();
    let lorenz = lyapunov_exponents(&ctx.orbit(&ctx.spec("lorenz63"), 0.0, 40_000, 22)?, 3)?.sum();
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let ok = (d - 2f64.ln()).abs() <= 1e-3
        && (cat[0] - 2.0 * phi.ln()).abs() <= 1e-3
        && (cat[1] + 2.0 * phi.ln()).abs() <= 1e-3
        && (lorenz + 41.0 / 3.0).abs() <= 0.05;
    Ok((ok, format!("doubling {d:.5}, cat {:.5}/{:.5}, Lorenz sum {lorenz:.4}", cat[0], cat[1])))
}

fn response(ctx: &Ctx) -> Verdict {
    let spec = ctx.spec("lorenz63");
    let lo = ctx.orbit(&spec, 0.0, 40_000, 23)?;
    let sc = sc_continuous(&lo, &ShadowingOptions::for_orbit(&lo))?;
    let steps = (2000.0 / spec.time_step()).round() as usize;
    let fd = fd_response(&spec, 0.0, FdSettings { h: 1.0, steps, spinup: spec.default_spinup_steps(), ensemble: 16 }, 24)?;
    let diff = (sc.adjoint.value - fd.value).abs();
    let tol = (0.1 * fd.value.abs()).max(3.0 * fd.stderr.hypot(sc.adjoint.stderr));
    Ok((
        diff <= tol,
        format!(
            "SC_adjoint {:.4}+-{:.4}, FD {:.4}+-{:.4}, UC residual {:.4} (|diff| <= {tol:.3})",
            sc.adjoint.value, sc.adjoint.stderr, fd.value, fd.stderr, fd.value - sc.adjoint.value
        ),
    ))
}

fn stable(ctx: &Ctx) -> Verdict {
    let spec = ctx.spec("contracting");
    let lo = ctx.orbit(&spec, 0.0, 500, 25)?;
    let sc = sc_discrete(&lo, &ShadowingOptions::for_orbit(&lo))?;
    let fd = fd_response(&spec, 0.0, FdSettings { h: 0.1, steps: 500, spinup: 1000, ensemble: 4 }, 26)?;
    let curve = ruelle_series(&spec, 0.0, RuelleSettings { w_max: 30, ensemble: 4, starts: 50, spinup: 1000 }, 27)?;
    let errs: Vec<f64> = curve.partial_sums.iter().map(|e| (e.value - 2.0).abs()).collect();
    let geometric = errs.windows(2).take(25).all(|w| (w[1] / w[0] - 0.5).abs() <= 1e-6);
    let worst = [sc.tangent.value, sc.adjoint.value, fd.value].iter().map(|v| (v - 2.0).abs()).fold(0.0, f64::max);
    Ok((
        worst <= 1e-8 && geometric && *errs.last().unwrap_or(&1.0) <= 1e-8,
        format!("max|SC,FD - 2| {worst:.1e} (<=1e-8), Ruelle error ratio 1/2: {geometric}, last error {:.1e}", errs.last().unwrap_or(&f64::NAN)),
    ))
}

fn pairing(ctx: &Ctx) -> Verdict {
    let mut worst: f64 = 0.0;
    let mut worst_name = "";
    for name in CATALOG {
        let spec = ctx.spec(name);
        let lo = ctx.orbit(&spec, 0.0, 100, 28)?;
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for n in 0..100 {
            let x = lo.state(n);
            let m = spec.dim();
            let w = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
            let eta = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
            let fw = spec.pushforward(x, 0.0, &w);
            let pe = spec.pullback(x, 0.0, &eta);
            let rel = (eta.dot(&fw) - pe.dot(&w)).abs() / (eta.norm() * fw.norm()).max(pe.norm() * w.norm());
            if rel > worst {
                worst = rel;
                worst_name = name;
            }
        }
    }
    Ok((worst <= 1e-12, format!("max relative pairing defect {worst:.1e} ({worst_name}) (<=1e-12)")))
}
