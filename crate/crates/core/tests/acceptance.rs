//! Acceptance criteria. Each criterion prints one PASS/FAIL line; reference
//! values are recomputed here from closed forms or direct recursions rather
//! than taken from the library.

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shadowing::adjoint::{nilsas_flow_solve, nilsas_solve, nilsas_solve_sources};
use shadowing::response::{fd_response, ruelle_series, sc_continuous, sc_discrete, shadowing_contribution, AdmissiblePair, FdSettings, RuelleSettings};
use shadowing::splitting::{clv, expand_shadowing_covector, lyapunov_exponents};
use shadowing::stats::{batch_means, DEFAULT_BATCHES};
use shadowing::systems::by_name;
use shadowing::tangent::{nilss_solve, ShadowingOptions};
use shadowing::{LinearizedOrbit, Observable, SystemSpec};

/// Criteria that cannot hold as written; the printed line carries the reason
/// and the companion line checks the consistent form.
const UNATTAINABLE: [u8; 1] = [6];

struct Line {
    number: u8,
    passed: bool,
    detail: String,
}

fn orbit(spec: &SystemSpec, gamma: f64, n: usize, seed: u64) -> LinearizedOrbit {
    let o = spec.generate_orbit(None, gamma, n, spec.default_spinup_steps(), seed).unwrap();
    LinearizedOrbit::new(spec.clone(), o).unwrap()
}

fn sin_sum_differential(x: &DVector<f64>) -> DVector<f64> {
    let tau = 2.0 * std::f64::consts::PI;
    DVector::from_element(x.len(), tau * (tau * x.sum()).cos())
}

fn criterion_1() -> (bool, String) {
    let spec = by_name("doubling").unwrap();
    let lo = orbit(&spec, 0.0, 100, 101);
    let opts = ShadowingOptions::for_orbit(&lo);
    let pair = nilss_solve(&lo, &lo.perturbation_forcing(), &opts).unwrap();
    let dv = (30..=70).map(|n| (pair.v[n][0] + 1.0).abs()).fold(0.0, f64::max);
    let ones = vec![DVector::from_element(1, 1.0); 100];
    let cov = nilsas_solve_sources(&lo, &ones, &opts).unwrap();
    let mut dnu: f64 = 0.0;
    for n in 0..=100 {
        dnu = dnu.max((cov.nu[n][0] - (-1.0 + 0.5f64.powi(n as i32))).abs());
    }
    (dv <= 1e-6 && dnu <= 1e-9, format!("interior max|v+1| = {dv:.1e}, max|nu_n + 1 - 2^-n| = {dnu:.1e}"))
}

fn criterion_2() -> (bool, String) {
    let spec = by_name("cat").unwrap();
    let lo = orbit(&spec, 0.0, 2000, 102);
    let cov = nilsas_solve(&lo, &sin_sum_differential, &ShadowingOptions::for_orbit(&lo)).unwrap();
    let mut r: f64 = 0.0;
    for n in 0..2000 {
        let x = lo.state(n);
        let pulled = spec.pullback(x, 0.0, &cov.nu[n + 1]);
        r = r.max((&cov.nu[n] - pulled - sin_sum_differential(x)).amax());
    }
    (r <= 1e-10, format!("max_n |nu_n - f^* nu_(n+1) - omega_n| = {r:.1e}"))
}

fn criterion_3() -> (bool, String) {
    let spec = by_name("cat").unwrap();
    let lo = orbit(&spec, 0.05, 2000, 103);
    let split = clv(&lo, 50).unwrap();
    let cov = nilsas_solve(&lo, &sin_sum_differential, &ShadowingOptions::for_orbit(&lo)).unwrap();
    let points = split.expansion_points(40, 1);
    let e = expand_shadowing_covector(&lo, &split, &lo.adjoint_sources(&sin_sum_differential), None, 40, &points).unwrap();
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for (i, &k) in points.iter().enumerate() {
        num = num.max((&cov.nu[k] - &e.nu[i]).amax());
        den = den.max(e.nu[i].amax());
    }
    let d = num / den;
    (d <= 1e-3, format!("sup-relative |nu - split-propagate| = {d:.1e} at {} interior points", points.len()))
}

fn criterion_4() -> (bool, String) {
    let spec = by_name("cat").unwrap();
    let n = 100_000;
    let lo = orbit(&spec, 0.0, n, 104);
    let sc = sc_discrete(&lo, &ShadowingOptions::for_orbit(&lo)).unwrap();
    let (v, nu) = (&sc.pair.v, &sc.covector.nu);
    let forcing = lo.perturbation_forcing();
    let mut lhs = 0.0;
    for k in 0..n {
        lhs += sin_sum_differential(lo.state(k)).dot(&v[k]) - nu[k + 1].dot(&forcing[k]);
    }
    let identity = (lhs - (nu[0].dot(&v[0]) - nu[n].dot(&v[n]))).abs();
    let gap = (sc.tangent.value - sc.adjoint.value).abs();
    let sigma = sc.tangent.stderr.hypot(sc.adjoint.stderr);
    (
        identity <= 1e-8 && gap <= 3.0 * sigma,
        format!("summation-by-parts defect {identity:.1e}; |SC_t - SC_a| = {gap:.1e} <= 3 x {sigma:.1e}"),
    )
}

fn criterion_5() -> (bool, String) {
    let spec = by_name("doubling").unwrap();
    let lo = orbit(&spec, 0.0, 60, 105);
    let mut conventional = vec![DVector::zeros(1); 61];
    for k in (0..60).rev() {
        conventional[k] = spec.pullback(lo.state(k), 0.0, &conventional[k + 1]) + DVector::from_element(1, 1.0);
    }
    let ones = vec![DVector::from_element(1, 1.0); 60];
    let cov = nilsas_solve_sources(&lo, &ones, &ShadowingOptions::for_orbit(&lo)).unwrap();
    let big = conventional.iter().map(|c| c.amax()).fold(0.0, f64::max);
    let small = cov.nu.iter().map(|c| c.amax()).fold(0.0, f64::max);
    (big / small >= 1e15, format!("sup|nu'| / sup|nu| = {:.2e}", big / small))
}

fn criterion_6() -> (bool, String) {
    let spec = by_name("lorenz63").unwrap();
    let lo = orbit(&spec, 0.0, 40_000, 106);
    let (a, b) = (1000, 39_000);
    let zs: Vec<f64> = lo.orbit.states.iter().map(|x| x[2]).collect();
    let mean = (zs[a + 1..b].iter().sum::<f64>() + 0.5 * (zs[a] + zs[b])) / (b - a) as f64;
    let omega = |_: &DVector<f64>| DVector::from_column_slice(&[0.0, 0.0, 1.0]);
    let psi = move |x: &DVector<f64>| x[2] - mean;
    let cov = nilsas_flow_solve(&lo, &omega, &psi, &ShadowingOptions::for_orbit(&lo)).unwrap();
    let mut literal: f64 = 0.0;
    let mut reflected: f64 = 0.0;
    for n in a..=b {
        let x = lo.state(n);
        let pairing = cov.nu[n].dot(&spec.vector_field(x, 0.0));
        literal = literal.max((pairing - psi(x)).abs());
        reflected = reflected.max((pairing + psi(x)).abs());
    }

    // Homogeneous adjoint over time 20, no renormalization.
    let short = orbit(&spec, 0.0, 4000, 107);
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut eps = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
    let f_end = spec.vector_field(short.state(4000), 0.0);
    let end = eps.dot(&f_end);
    let mut drift: f64 = 0.0;
    for k in (0..4000).rev() {
        eps = spec.pullback(short.state(k), 0.0, &eps);
        let f = spec.vector_field(short.state(k), 0.0);
        drift = drift.max((eps.dot(&f) - end).abs() / (eps.norm() * f.norm()));
    }
    (
        literal <= 1e-3 && drift <= 1e-6,
        format!(
            "sup|nu(F) - psi| = {literal:.2e}; homogeneous eps(F) drift {drift:.1e}; \
             note: the adjoint equation forces nu(F) = -psi, measured sup|nu(F) + psi| = {reflected:.1e}"
        ),
    )
}

fn criterion_7() -> (bool, String) {
    let spec = by_name("lorenz63").unwrap();
    let lo = orbit(&spec, 0.0, 40_000, 109);
    let opts = ShadowingOptions::for_orbit(&lo);
    let sc = sc_continuous(&lo, &opts).unwrap();
    let dt = lo.time_step();
    let (a, b) = (1000, 39_000);
    let zs: Vec<f64> = lo.orbit.states.iter().map(|x| x[2]).collect();
    let mean = zs[a..b].iter().sum::<f64>() / (b - a) as f64;
    let eta = sc.pair.eta.as_ref().unwrap();
    let fields: Vec<DVector<f64>> = lo.orbit.states.iter().map(|x| spec.vector_field(x, 0.0)).collect();
    // <<v, eta; dz, z - mean>> with trapezoid weights on each step, so that a
    // gauge shift changes each term by a difference quotient of h psi.
    let product = |h: &dyn Fn(&DVector<f64>) -> f64| {
        let hs: Vec<f64> = lo.orbit.states.iter().map(h).collect();
        let vz = |n: usize| sc.pair.v[n][2] - fields[n][2] * hs[n];
        let terms: Vec<f64> = (a..b)
            .map(|n| {
                let e = eta[n] + (hs[n + 1] - hs[n]) / dt;
                0.5 * (vz(n) + vz(n + 1)) - e * 0.5 * (zs[n] + zs[n + 1] - 2.0 * mean)
            })
            .collect();
        batch_means(&terms, DEFAULT_BATCHES)
    };
    let base = product(&|_| 0.0);
    let shifts: [&dyn Fn(&DVector<f64>) -> f64; 3] = [&|x| x[0].sin(), &|x| 0.1 * x[1], &|x| (x[2] / 5.0).cos()];
    let mut worst: f64 = 0.0;
    for h in shifts {
        let p = product(h);
        worst = worst.max((p.value - base.value).abs() / p.stderr.hypot(base.stderr));
    }
    let adm = AdmissiblePair::canonical(&lo, Observable::Coordinate(2));
    let field = |x: &DVector<f64>| spec.vector_field(x, 0.0);
    let along = shadowing_contribution(&lo, &lo.forcing_from_field(&field), &adm, &opts).unwrap();
    let zt = along.tangent.value.abs() / along.tangent.stderr;
    let za = along.adjoint.value.abs() / along.adjoint.stderr;
    (
        worst <= 3.0 && zt <= 3.0 && za <= 3.0,
        format!("gauge-shifted products within {worst:.2} sigma; X=F: SC_t {zt:.2} sigma, SC_a {za:.2} sigma from 0"),
    )
}

fn criterion_8() -> (bool, String) {
    let d = lyapunov_exponents(&orbit(&by_name("doubling").unwrap(), 0.0, 20_000, 110), 1).unwrap().values()[0];
    let cat = lyapunov_exponents(&orbit(&by_name("cat").unwrap(), 0.0, 20_000, 111), 2).unwrap().values();
    let lorenz = lyapunov_exponents(&orbit(&by_name("lorenz63").unwrap(), 0.0, 40_000, 112), 3).unwrap().sum();
    // Cat map eigenvalues (3 +- sqrt 5)/2; Lorenz trace -(sigma + 1 + beta).
    let cat_rate = ((3.0 + 5f64.sqrt()) / 2.0).ln();
    let trace = -(10.0 + 1.0 + 8.0 / 3.0);
    let ok = (d - 2f64.ln()).abs() <= 1e-3
        && (cat[0] - cat_rate).abs() <= 1e-3
        && (cat[1] + cat_rate).abs() <= 1e-3
        && (lorenz - trace).abs() <= 0.05;
    (ok, format!("doubling {d:.5}; cat {:.5}, {:.5}; Lorenz sum {lorenz:.4}", cat[0], cat[1]))
}

fn criterion_9() -> (bool, String) {
    let spec = by_name("lorenz63").unwrap();
    let lo = orbit(&spec, 0.0, 40_000, 113);
    let sc = sc_continuous(&lo, &ShadowingOptions::for_orbit(&lo)).unwrap();
    let fd = fd_response(&spec, 0.0, FdSettings { h: 1.0, steps: 400_000, spinup: spec.default_spinup_steps(), ensemble: 16 }, 114).unwrap();
    let diff = (sc.adjoint.value - fd.value).abs();
    let tol = (0.1 * fd.value.abs()).max(3.0 * sc.adjoint.stderr.hypot(fd.stderr));
    (
        diff <= tol,
        format!(
            "SC_adjoint {:.4} +- {:.4}, FD {:.4} +- {:.4}, |diff| {diff:.4} <= {tol:.4}; UC residual {:.4}",
            sc.adjoint.value, sc.adjoint.stderr, fd.value, fd.stderr, fd.value - sc.adjoint.value
        ),
    )
}

fn criterion_10() -> (bool, String) {
    let spec = by_name("contracting").unwrap();
    let lo = orbit(&spec, 0.0, 500, 115);
    let sc = sc_discrete(&lo, &ShadowingOptions::for_orbit(&lo)).unwrap();
    let fd = fd_response(&spec, 0.0, FdSettings { h: 0.1, steps: 500, spinup: 1000, ensemble: 4 }, 116).unwrap();
    let curve = ruelle_series(&spec, 0.0, RuelleSettings { w_max: 40, ensemble: 4, starts: 50, spinup: 1000 }, 117).unwrap();
    let worst = [sc.tangent.value, sc.adjoint.value, fd.value].iter().map(|v| (v - 2.0).abs()).fold(0.0, f64::max);
    // Partial sums of sum_n 2^-n.
    let series = curve.partial_sums.iter().enumerate().map(|(w, e)| (e.value - (2.0 - 0.5f64.powi(w as i32))).abs()).fold(0.0, f64::max);
    let last = (curve.partial_sums.last().unwrap().value - 2.0).abs();
    (
        worst <= 1e-8 && series <= 1e-12 && last <= 1e-8,
        format!("max |SC, FD - 2| = {worst:.1e}; Ruelle vs 2 - 2^-W: {series:.1e}; |S_40 - 2| = {last:.1e}"),
    )
}

fn main() {
    let criteria: [(u8, u64, fn() -> (bool, String)); 10] = [
        (1, 1, criterion_1),
        (2, 1, criterion_2),
        (3, 10, criterion_3),
        (4, 30, criterion_4),
        (5, 1, criterion_5),
        (6, 60, criterion_6),
        (7, 120, criterion_7),
        (8, 60, criterion_8),
        (9, 600, criterion_9),
        (10, 1, criterion_10),
    ];
    let mut lines = Vec::new();
    for (number, limit, run) in criteria {
        let t = Instant::now();
        let (ok, detail) = run();
        let elapsed = t.elapsed();
        let passed = ok && elapsed <= Duration::from_secs(limit);
        println!(
            "{} criterion {number:>2}: {detail} [{:.2} s / {limit} s]",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        lines.push(Line { number, passed, detail });
    }
    let reflected = flow_constraint_companion();
    let companion = reflected <= 1e-3;
    println!("{} criterion  6 companion: sup |nu(F) + psi| = {reflected:.1e} <= 1e-3", if companion { "PASS" } else { "FAIL" });
    let unexpected: Vec<&Line> = lines.iter().filter(|l| !l.passed && !UNATTAINABLE.contains(&l.number)).collect();
    for l in &unexpected {
        eprintln!("unexpected failure of criterion {}: {}", l.number, l.detail);
    }
    if !unexpected.is_empty() || !companion {
        std::process::exit(1);
    }
}

fn flow_constraint_companion() -> f64 {
    let spec = by_name("lorenz63").unwrap();
    let lo = orbit(&spec, 0.0, 40_000, 106);
    let adm = AdmissiblePair::canonical(&lo, Observable::Coordinate(2));
    let (omega, psi) = (adm.omega.clone(), adm.psi.clone().unwrap());
    let cov = nilsas_flow_solve(&lo, &move |x: &DVector<f64>| omega(x), &move |x: &DVector<f64>| psi(x), &ShadowingOptions::for_orbit(&lo)).unwrap();
    cov.pairing_defect_reflected(lo.interior()).unwrap()
}
