use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use shadowing::systems::{by_name, LinearFlow};
use shadowing::{LinearizedOrbit, SystemSpec};

fn vec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[test]
fn map_steps_match_formulas() {
    let doubling = by_name("doubling").unwrap();
    assert!((doubling.map_step(&vec(&[0.3]), 0.0).unwrap()[0] - 0.6).abs() < 1e-15);
    assert!((doubling.map_step(&vec(&[0.75]), 0.1).unwrap()[0] - 0.6).abs() < 1e-14);
    let cat = by_name("cat").unwrap();
    assert_eq!(cat.map_step(&vec(&[0.0, 0.0]), 0.0).unwrap(), vec(&[0.0, 0.0]));
    let y = cat.map_step(&vec(&[0.25, 0.5]), 0.1).unwrap();
    assert!((y[0] - ((1.0 + 0.1) % 1.0)).abs() < 1e-14);
    assert!((y[1] - 0.75).abs() < 1e-15);
    let c = by_name("contracting").unwrap();
    assert_eq!(c.map_step(&vec(&[1.0]), 0.5).unwrap()[0], 1.0);
}

#[test]
fn lorenz_equilibria_are_fixed() {
    let spec = by_name("lorenz63").unwrap();
    let r = 72f64.sqrt();
    for x in [vec(&[0.0, 0.0, 0.0]), vec(&[r, r, 27.0]), vec(&[-r, -r, 27.0])] {
        assert!(spec.vector_field(&x, 0.0).amax() < 1e-10);
        assert!((spec.flow_step(&x, 0.0, 0.01).unwrap() - &x).amax() < 1e-10);
    }
}

#[test]
fn rk4_error_is_fourth_order() {
    let a = DMatrix::from_row_slice(2, 2, &[-0.1, 1.0, -1.0, -0.1]);
    let spec = SystemSpec::new(Arc::new(LinearFlow { matrix: a }));
    let x0 = vec(&[1.0, 0.0]);
    let t: f64 = 1.0;
    let exact = vec(&[t.cos(), -t.sin()]) * (-0.1 * t).exp();
    let error = |steps: usize| {
        let dt = t / steps as f64;
        let mut x = x0.clone();
        for _ in 0..steps {
            x = spec.flow_step(&x, 0.0, dt).unwrap();
        }
        (x - &exact).norm()
    };
    let ratio = error(10) / error(20);
    assert!((ratio - 16.0).abs() <= 0.2 * 16.0, "ratio {ratio}");
}

#[test]
fn pushforward_and_pullback() {
    let doubling = by_name("doubling").unwrap();
    assert_eq!(doubling.pushforward(&vec(&[0.3]), 0.0, &vec(&[1.0]))[0], 2.0);
    let cat = by_name("cat").unwrap();
    let x = vec(&[0.1, 0.7]);
    assert_eq!(cat.pushforward(&x, 0.0, &vec(&[1.0, 0.0])), vec(&[2.0, 1.0]));
    assert_eq!(cat.pullback(&x, 0.0, &vec(&[1.0, 0.0])), vec(&[2.0, 1.0]));

    // Pairing identity <eta, f_* w> = <f^* eta, w>.
    let lorenz = by_name("lorenz63").unwrap();
    let x = vec(&[1.0, 2.0, 20.0]);
    let (w, eta) = (vec(&[0.3, -1.0, 0.5]), vec(&[1.2, 0.4, -0.7]));
    for (spec, x, w, eta) in [
        (&cat, vec(&[0.1, 0.7]), vec(&[0.3, -1.0]), vec(&[1.2, 0.4])),
        (&lorenz, x, w, eta),
    ] {
        let lhs = eta.dot(&spec.pushforward(&x, 0.2, &w));
        let rhs = spec.pullback(&x, 0.2, &eta).dot(&w);
        assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }
}

#[test]
fn pushforward_matches_finite_difference() {
    let lorenz = by_name("lorenz63").unwrap();
    let x = vec(&[1.0, 2.0, 20.0]);
    let w = vec(&[0.3, -1.0, 0.5]);
    let base = lorenz.step(&x, 0.0).unwrap();
    let tangent = lorenz.pushforward(&x, 0.0, &w);
    let err = |eps: f64| ((lorenz.step(&(&x + &w * eps), 0.0).unwrap() - &base) / eps - &tangent).norm();
    let (e1, e2) = (err(1e-4), err(5e-5));
    assert!(e1 < 1e-3);
    assert!(e2 < 0.7 * e1, "{e1} {e2}");

    let cat = by_name("cat").unwrap();
    let x = vec(&[0.1, 0.2]);
    let w = vec(&[0.3, -0.4]);
    let fd = (cat.map_step(&(&x + &w * 1e-7), 0.1).unwrap() - cat.map_step(&x, 0.1).unwrap()) / 1e-7;
    assert!((fd - cat.pushforward(&x, 0.1, &w)).amax() < 1e-5);
}

#[test]
fn perturbations() {
    let doubling = by_name("doubling").unwrap();
    let o = doubling.generate_orbit(None, 0.0, 5, 10, 1).unwrap();
    for n in 0..=5 {
        assert_eq!(doubling.perturbation_at(&o, n).unwrap()[0], 1.0);
    }
    assert!(doubling.perturbation_at(&o, 6).is_err());

    let cat = by_name("cat").unwrap();
    let o = cat.generate_orbit(None, 0.0, 5, 10, 2).unwrap();
    for n in 1..=5 {
        let p = o.states[n - 1][0];
        assert_eq!(cat.perturbation_at(&o, n).unwrap(), vec(&[(2.0 * PI * p).sin(), 0.0]));
    }

    let lorenz = by_name("lorenz63").unwrap();
    let o = lorenz.generate_orbit(None, 0.0, 5, 100, 3).unwrap();
    let x = &o.states[3];
    assert_eq!(lorenz.perturbation_at(&o, 3).unwrap(), vec(&[0.0, x[0], 0.0]));
}

#[test]
fn orbits_are_deterministic_and_bounded() {
    let lorenz = by_name("lorenz63").unwrap();
    let a = lorenz.generate_orbit(None, 0.0, 20_000, lorenz.default_spinup_steps(), 5).unwrap();
    let b = lorenz.generate_orbit(None, 0.0, 20_000, lorenz.default_spinup_steps(), 5).unwrap();
    assert_eq!(a.states, b.states);
    assert_eq!(a.states.len(), 20_001);
    let c = lorenz.generate_orbit(None, 0.0, 20_000, lorenz.default_spinup_steps(), 6).unwrap();
    assert_ne!(a.states, c.states);
    let mut min_speed = f64::INFINITY;
    for x in &a.states {
        assert!(x[0].abs() < 25.0 && x[1].abs() < 35.0 && x[2] > 0.0 && x[2] < 55.0, "{x}");
        min_speed = min_speed.min(lorenz.vector_field(x, 0.0).norm());
    }
    assert!(min_speed > 1e-3, "min |F| {min_speed}");

    let cat = by_name("cat").unwrap();
    let o = cat.generate_orbit(None, 0.0, 1000, 10, 1).unwrap();
    assert!(o.states.iter().all(|x| x.iter().all(|v| (0.0..1.0).contains(v))));
}

#[test]
fn explicit_initial_state_is_used() {
    let c = by_name("contracting").unwrap();
    let o = c.generate_orbit(Some(&vec(&[4.0])), 1.0, 3, 0, 0).unwrap();
    let xs: Vec<f64> = o.states.iter().map(|x| x[0]).collect();
    assert_eq!(xs, [4.0, 3.0, 2.5, 2.25]);
}

#[test]
fn averages_converge() {
    let lorenz = by_name("lorenz63").unwrap();
    let avg = |n: usize| {
        let o = lorenz.generate_orbit(None, 0.0, n, lorenz.default_spinup_steps(), 11).unwrap();
        let z = lorenz.objective_series(&o);
        z.iter().sum::<f64>() / z.len() as f64
    };
    let (a, b) = (avg(100_000), avg(200_000));
    assert!((a - b).abs() < 0.5, "{a} {b}");
    assert!((b - 23.5).abs() < 1.0, "mean z {b}");
}

#[test]
fn linearized_orbit_matches_model() {
    let cat = by_name("cat").unwrap();
    let o = cat.generate_orbit(None, 0.05, 50, 10, 4).unwrap();
    let lo = LinearizedOrbit::new(cat.clone(), o).unwrap();
    assert_eq!(lo.steps(), 50);
    let w = vec(&[0.5, -1.5]);
    for n in [0, 17, 49] {
        let x = lo.state(n);
        assert!((lo.lin.push(n, &w) - cat.pushforward(x, 0.05, &w)).amax() < 1e-14);
        assert!((lo.lin.pull(n, &w) - cat.pullback(x, 0.05, &w)).amax() < 1e-14);
    }
}
