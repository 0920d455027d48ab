use std::sync::Arc;

use nalgebra::DVector;

use shadowing::adjoint::inhomogeneous_adjoint;
use shadowing::response::{
    build_report, fd_response, ruelle_series, sc_continuous, sc_discrete, shadowing_contribution, AdmissiblePair, FdSettings,
    ReportPlan, RuelleSettings, Tolerances,
};
use shadowing::systems::by_name;
use shadowing::tangent::ShadowingOptions;
use shadowing::{LinearizedOrbit, Observable};

fn orbit(name: &str, gamma: f64, n: usize, seed: u64) -> LinearizedOrbit {
    let spec = by_name(name).unwrap();
    let o = spec.generate_orbit(None, gamma, n, spec.default_spinup_steps(), seed).unwrap();
    LinearizedOrbit::new(spec, o).unwrap()
}

fn plan(steps: usize, fd: Option<FdSettings>) -> ReportPlan {
    ReportPlan {
        gamma: 0.0,
        steps,
        spinup: 100,
        seed: 7,
        tangent: true,
        adjoint: true,
        options: None,
        fd,
        ruelle: None,
        tolerances: Tolerances::default(),
    }
}

#[test]
fn sc_is_linear_in_the_forcing() {
    let lo = orbit("cat", 0.0, 4000, 1);
    let opts = ShadowingOptions::for_orbit(&lo);
    let adm = AdmissiblePair::canonical(&lo, Observable::SinSum);
    let b1 = lo.perturbation_forcing();
    let b2: Vec<DVector<f64>> = (0..4000).map(|n| DVector::from_column_slice(&[0.0, (0.3 * n as f64).sin()])).collect();
    let b: Vec<DVector<f64>> = b1.iter().zip(&b2).map(|(x, y)| x * 2.0 - y).collect();
    let s1 = shadowing_contribution(&lo, &b1, &adm, &opts).unwrap();
    let s2 = shadowing_contribution(&lo, &b2, &adm, &opts).unwrap();
    let s = shadowing_contribution(&lo, &b, &adm, &opts).unwrap();
    assert!((s.tangent.value - (2.0 * s1.tangent.value - s2.tangent.value)).abs() <= 1e-8);
    assert!((s.adjoint.value - (2.0 * s1.adjoint.value - s2.adjoint.value)).abs() <= 1e-8);
}

#[test]
fn sc_is_linear_in_the_covector_field() {
    let lo = orbit("cat", 0.05, 4000, 2);
    let opts = ShadowingOptions::for_orbit(&lo);
    let adm = AdmissiblePair::new(Arc::new(|x: &DVector<f64>| DVector::from_column_slice(&[x[1].cos(), 1.0])), None);
    let forcing = lo.perturbation_forcing();
    let s = shadowing_contribution(&lo, &forcing, &adm, &opts).unwrap();
    let s3 = shadowing_contribution(&lo, &forcing, &adm.scaled(-3.0), &opts).unwrap();
    assert!((s3.adjoint.value + 3.0 * s.adjoint.value).abs() <= 1e-8 * (1.0 + s.adjoint.value.abs()));
    assert!((s3.tangent.value + 3.0 * s.tangent.value).abs() <= 1e-8 * (1.0 + s.tangent.value.abs()));
}

#[test]
fn cat_paths_agree() {
    let lo = orbit("cat", 0.0, 10_000, 3);
    let sc = sc_discrete(&lo, &ShadowingOptions::for_orbit(&lo)).unwrap();
    assert!(sc.summation_gap <= 1e-8, "{}", sc.summation_gap);
    assert!(sc.duality_z() <= 3.0, "{:?} {:?}", sc.tangent, sc.adjoint);
}

#[test]
fn lorenz_paths_agree() {
    let lo = orbit("lorenz63", 0.0, 20_000, 4);
    let sc = sc_continuous(&lo, &ShadowingOptions::for_orbit(&lo)).unwrap();
    assert!(sc.summation_gap <= 1e-6, "{}", sc.summation_gap);
    assert!(sc.duality_z() <= 3.0, "{:?} {:?}", sc.tangent, sc.adjoint);
    assert!(sc.adjoint.value > 0.8 && sc.adjoint.value < 1.2, "{:?}", sc.adjoint);
    assert!(sc_discrete(&lo, &ShadowingOptions::for_orbit(&lo)).is_err());
}

#[test]
fn doubling_fd_is_statistically_zero() {
    let spec = by_name("doubling").unwrap();
    let settings = FdSettings { h: 0.01, steps: 4000, spinup: 10, ensemble: 12 };
    let fd = fd_response(&spec, 0.0, settings, 5).unwrap();
    assert_eq!(fd.members.len(), 12);
    assert!(fd.value.abs() <= 4.0 * fd.stderr, "{} +- {}", fd.value, fd.stderr);
    let again = fd_response(&spec, 0.0, settings, 5).unwrap();
    assert_eq!(fd.members, again.members);
    assert!(fd_response(&spec, 0.0, FdSettings { h: 0.0, ..settings }, 5).is_err());
}

#[test]
fn doubling_ruelle_variance_grows_geometrically() {
    let spec = by_name("doubling").unwrap();
    let settings = RuelleSettings { w_max: 12, ensemble: 16, starts: 400, spinup: 10 };
    let curve = ruelle_series(&spec, 0.0, settings, 6).unwrap();
    assert!(!curve.truncated);
    assert_eq!(curve.partial_sums.len(), 13);
    let s = &curve.partial_sums;
    let ratio = s[12].stderr / s[6].stderr;
    // Standard error doubles per lag, the variance grows like 4^W.
    assert!(ratio > 64.0 / 4.0 && ratio < 64.0 * 4.0, "{ratio}");

    // The first partial sum is the plain average of dPhi(X) = 2 pi cos(2 pi x).
    let tau = 2.0 * std::f64::consts::PI;
    assert!(s[0].value.abs() <= 4.0 * s[0].stderr);
    let per_member = tau / 2f64.sqrt() / (settings.starts as f64).sqrt();
    let expected = per_member / (settings.ensemble as f64).sqrt();
    assert!(s[0].stderr > expected / 3.0 && s[0].stderr < 3.0 * expected, "{} vs {expected}", s[0].stderr);
}

#[test]
fn contracting_report_is_exact() {
    let spec = by_name("contracting").unwrap();
    let fd = FdSettings { h: 0.1, steps: 500, spinup: 200, ensemble: 4 };
    let (report, _, _) = build_report(&spec, &plan(1000, Some(fd))).unwrap();
    let (t, a) = (report.sc_tangent.unwrap(), report.sc_adjoint.unwrap());
    assert!((t.value - 2.0).abs() <= 1e-8 && (a.value - 2.0).abs() <= 1e-8);
    assert!((report.fd.as_ref().unwrap().value - 2.0).abs() <= 1e-8);
    assert!(report.uc_residual.unwrap().value.abs() <= 1e-8);
    assert_eq!(report.flags.duality, Some(true));
    assert_eq!(report.flags.uc_small, Some(true));
}

#[test]
fn contracting_sc_equals_conventional_adjoint() {
    let lo = orbit("contracting", 0.0, 800, 8);
    let sc = sc_discrete(&lo, &ShadowingOptions::for_orbit(&lo)).unwrap();
    let sources = lo.adjoint_sources(&|x: &DVector<f64>| Observable::Coordinate(0).differential(x));
    let conventional = inhomogeneous_adjoint(&lo, &sources, &DVector::zeros(1)).unwrap();
    let forcing = lo.perturbation_forcing();
    let interior = lo.interior();
    let (a, b) = (*interior.start(), *interior.end());
    let mean = (a..b).map(|n| conventional.columns[n + 1][(0, 0)] * forcing[n][0]).sum::<f64>() / (b - a) as f64;
    assert!((mean - sc.adjoint.value).abs() <= 1e-10, "{mean} vs {:?}", sc.adjoint);
}

#[test]
fn doubling_report_has_zero_response() {
    let spec = by_name("doubling").unwrap();
    let fd = FdSettings { h: 0.01, steps: 2000, spinup: 10, ensemble: 8 };
    let (report, lo, sc) = build_report(&spec, &plan(20_000, Some(fd))).unwrap();
    assert_eq!(lo.steps(), 20_000);
    let a = report.sc_adjoint.unwrap();
    assert!(a.value.abs() <= 3.0 * a.stderr);
    let uc = report.uc_residual.unwrap();
    assert_eq!(uc.value, report.fd.as_ref().unwrap().value - a.value);
    assert!(sc.unwrap().summation_gap <= 1e-12);
}

#[test]
fn adjoint_only_plan_skips_tangent() {
    let spec = by_name("cat").unwrap();
    let mut p = plan(2000, None);
    p.tangent = false;
    let (report, _, _) = build_report(&spec, &p).unwrap();
    assert!(report.sc_tangent.is_none());
    assert!(report.sc_adjoint.is_some());
    assert!(report.flags.duality.is_none());
    assert!(report.uc_residual.is_none());
}
