use nalgebra::{DMatrix, DVector};

use shadowing::adjoint::{
    adjoint_residual, homogeneous_adjoint, inhomogeneous_adjoint, nilsas_flow_solve, nilsas_solve, nilsas_solve_sources,
};
use shadowing::splitting::{clv, Subspace};
use shadowing::systems::by_name;
use shadowing::tangent::ShadowingOptions;
use shadowing::LinearizedOrbit;

fn orbit(name: &str, gamma: f64, n: usize, seed: u64) -> LinearizedOrbit {
    let spec = by_name(name).unwrap();
    let o = spec.generate_orbit(None, gamma, n, spec.default_spinup_steps(), seed).unwrap();
    LinearizedOrbit::new(spec, o).unwrap()
}

fn sup_diff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

fn sin_sum(x: &DVector<f64>) -> DVector<f64> {
    let tau = 2.0 * std::f64::consts::PI;
    DVector::from_element(x.len(), tau * (tau * x.sum()).cos())
}

fn zero(x: &DVector<f64>) -> DVector<f64> {
    DVector::zeros(x.len())
}

fn dz(_: &DVector<f64>) -> DVector<f64> {
    DVector::from_column_slice(&[0.0, 0.0, 1.0])
}

#[test]
fn map_covector_satisfies_recursion() {
    let lo = orbit("cat", 0.05, 2000, 1);
    let cov = nilsas_solve(&lo, &sin_sum, &ShadowingOptions::for_orbit(&lo)).unwrap();
    assert!(adjoint_residual(&lo, &lo.adjoint_sources(&sin_sum), &cov.nu, 0..2000) <= 1e-12);
    assert!(cov.sup_norm(0..=2000) < 10.0);
    assert!(cov.drift_pairing.is_none());
}

#[test]
fn constant_profile_gives_center_covector() {
    let lo = orbit("lorenz63", 0.0, 20_000, 2);
    let c = 0.7;
    let psi = move |_: &DVector<f64>| c;
    let cov = nilsas_flow_solve(&lo, &zero, &psi, &ShadowingOptions::for_orbit(&lo)).unwrap();
    let split = clv(&lo, 2000).unwrap();
    let pairing = cov.drift_pairing.as_ref().unwrap();
    let mut worst: f64 = 0.0;
    let mut annihilation: f64 = 0.0;
    for n in (split.first..=split.last).step_by(13) {
        worst = worst.max((pairing[n] + c).abs());
        let frame = split.frame(n).unwrap();
        for i in split.unstable.iter().chain(&split.stable) {
            let e = frame.column(*i);
            annihilation = annihilation.max(cov.nu[n].dot(&e).abs() / (cov.nu[n].norm() * e.norm()));
        }
        let projected = split.project_covector(n, &cov.nu[n], Subspace::Center).unwrap();
        assert!((projected - &cov.nu[n]).norm() <= 1e-3 * cov.nu[n].norm());
    }
    assert!(worst <= 1e-3 * c, "{worst}");
    assert!(annihilation <= 1e-3, "{annihilation}");
}

#[test]
fn lorenz_pairing_follows_profile() {
    let lo = orbit("lorenz63", 0.0, 20_000, 3);
    let interior = lo.interior();
    let zbar = interior.clone().map(|n| lo.state(n)[2]).sum::<f64>() / interior.clone().count() as f64;
    let psi = move |x: &DVector<f64>| x[2] - zbar;
    let cov = nilsas_flow_solve(&lo, &dz, &psi, &ShadowingOptions::for_orbit(&lo)).unwrap();
    let d = cov.pairing_defect_reflected(interior.clone()).unwrap();
    assert!(d <= 1e-3, "sup |nu(F) + psi| = {d}");
    assert!(adjoint_residual(&lo, &lo.adjoint_sources(&dz), &cov.nu, 0..20_000) <= 1e-8);
}

#[test]
fn inadmissible_pair_is_rejected() {
    let lo = orbit("lorenz63", 0.0, 2000, 4);
    let psi = |x: &DVector<f64>| x[0];
    assert!(nilsas_flow_solve(&lo, &dz, &psi, &ShadowingOptions::for_orbit(&lo)).is_err());
}

#[test]
fn covector_is_linear_in_the_sources() {
    let lo = orbit("cat", 0.0, 3000, 5);
    let opts = ShadowingOptions::for_orbit(&lo);
    let s1 = lo.adjoint_sources(&sin_sum);
    let s2: Vec<DVector<f64>> = (0..3000).map(|n| DVector::from_column_slice(&[1.0, (n as f64).cos()])).collect();
    let s: Vec<DVector<f64>> = s1.iter().zip(&s2).map(|(a, b)| a * 0.5 + b * 4.0).collect();
    let n1 = nilsas_solve_sources(&lo, &s1, &opts).unwrap();
    let n2 = nilsas_solve_sources(&lo, &s2, &opts).unwrap();
    let n = nilsas_solve_sources(&lo, &s, &opts).unwrap();
    let expected: Vec<DVector<f64>> = n1.nu.iter().zip(&n2.nu).map(|(a, b)| a * 0.5 + b * 4.0).collect();
    assert!(sup_diff(&n.nu, &expected) <= 1e-8 * n.sup_norm(0..=3000));
}

#[test]
fn covector_does_not_depend_on_the_basis_seed() {
    let lo = orbit("cat", 0.0, 3000, 6);
    let opts = ShadowingOptions::for_orbit(&lo);
    let a = nilsas_solve(&lo, &sin_sum, &opts.clone().with_seed(1)).unwrap();
    let b = nilsas_solve(&lo, &sin_sum, &opts.with_seed(99)).unwrap();
    assert!(sup_diff(&a.nu[500..2500], &b.nu[500..2500]) <= 1e-6);
}

#[test]
fn homogeneous_drift_pairing_is_conserved() {
    let lo = orbit("lorenz63", 0.0, 1000, 7);
    let terminal = DMatrix::from_column_slice(3, 1, &[0.2, -0.5, 1.0]);
    let b = homogeneous_adjoint(&lo, &terminal, 1000).unwrap();
    let drift = lo.drift();
    let p = b.drift_pairing(&drift);
    let reference = p[1000][0];
    // Index 0 holds the renormalized columns.
    let worst = p[1..].iter().map(|x| (x[0] - reference).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-5 * reference.abs(), "{worst} vs {reference}");
}

#[test]
fn doubling_conventional_explodes_while_shadowing_stays_bounded() {
    let lo = orbit("doubling", 0.0, 60, 8);
    let ones = vec![DVector::from_element(1, 1.0); 60];
    let conventional = inhomogeneous_adjoint(&lo, &ones, &DVector::zeros(1)).unwrap();
    let big = conventional.columns.iter().map(|c| c.amax()).fold(0.0, f64::max);
    assert!(big >= 2f64.powi(59));
    let cov = nilsas_solve_sources(&lo, &ones, &ShadowingOptions::for_orbit(&lo)).unwrap();
    assert!(cov.sup_norm(0..=60) <= 1.01);
}

#[test]
fn rejects_wrong_kind() {
    let lo = orbit("cat", 0.0, 100, 9);
    let psi = |_: &DVector<f64>| 0.0;
    assert!(nilsas_flow_solve(&lo, &sin_sum, &psi, &ShadowingOptions::for_orbit(&lo)).is_err());
    let flow = orbit("lorenz63", 0.0, 100, 9);
    assert!(nilsas_solve(&flow, &dz, &ShadowingOptions::for_orbit(&flow)).is_err());
}
