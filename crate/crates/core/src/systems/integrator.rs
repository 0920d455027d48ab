//! Classical fourth-order Runge-Kutta step for flows, together with its exact
//! linearizations: the tangent step, its discrete adjoint, the parameter
//! derivative of the step, and the discrete adjoint of a covector source
//! integrated over the step.
//!
//! All four share the same stage points, so the tangent/adjoint pairing
//! `eta . (A w) = (A^T eta) . w` holds to rounding rather than to integrator
//! order.

use nalgebra::{DMatrix, DVector};

use super::DynamicalSystem;

/// Stage points `y1..y4` of one RK4 step from `x`.
pub(crate) struct Stages {
    pub y: [DVector<f64>; 4],
    pub k: [DVector<f64>; 4],
}

pub(crate) fn stages(model: &dyn DynamicalSystem, x: &DVector<f64>, gamma: f64, h: f64) -> Stages {
    let y1 = x.clone();
    let k1 = model.evaluate(&y1, gamma);
    let y2 = x + &k1 * (0.5 * h);
    let k2 = model.evaluate(&y2, gamma);
    let y3 = x + &k2 * (0.5 * h);
    let k3 = model.evaluate(&y3, gamma);
    let y4 = x + &k3 * h;
    let k4 = model.evaluate(&y4, gamma);
    Stages { y: [y1, y2, y3, y4], k: [k1, k2, k3, k4] }
}

pub(crate) fn step(model: &dyn DynamicalSystem, x: &DVector<f64>, gamma: f64, h: f64) -> DVector<f64> {
    let s = stages(model, x, gamma, h);
    let [k1, k2, k3, k4] = &s.k;
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Tangent RK4 step: `w -> A w` with `A` the derivative of the step map.
pub(crate) fn tangent(
    model: &dyn DynamicalSystem,
    s: &Stages,
    gamma: f64,
    h: f64,
    w: &DVector<f64>,
) -> DVector<f64> {
    let jv = |i: usize, v: &DVector<f64>| model.pushforward(&s.y[i], gamma, v);
    let k1 = jv(0, w);
    let k2 = jv(1, &(w + &k1 * (0.5 * h)));
    let k3 = jv(2, &(w + &k2 * (0.5 * h)));
    let k4 = jv(3, &(w + &k3 * h));
    w + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Discrete adjoint of [`tangent`]: `eta -> A^T eta`.
pub(crate) fn adjoint(
    model: &dyn DynamicalSystem,
    s: &Stages,
    gamma: f64,
    h: f64,
    eta: &DVector<f64>,
) -> DVector<f64> {
    let vj = |i: usize, v: &DVector<f64>| model.pullback(&s.y[i], gamma, v);
    let g4 = eta * (h / 6.0);
    let mut g3 = eta * (h / 3.0);
    let mut g2 = eta * (h / 3.0);
    let mut g1 = eta * (h / 6.0);
    let mut out = eta.clone();
    let z4 = vj(3, &g4);
    out += &z4;
    g3 += &z4 * h;
    let z3 = vj(2, &g3);
    out += &z3;
    g2 += &z3 * (0.5 * h);
    let z2 = vj(1, &g2);
    out += &z2;
    g1 += &z2 * (0.5 * h);
    out += vj(0, &g1);
    out
}

/// Derivative of the step map with respect to the parameter, when the
/// perturbation direction of the vector field is `field`.
pub(crate) fn parameter_derivative(
    model: &dyn DynamicalSystem,
    s: &Stages,
    gamma: f64,
    h: f64,
    field: &dyn Fn(&DVector<f64>) -> DVector<f64>,
) -> DVector<f64> {
    let jv = |i: usize, v: &DVector<f64>| model.pushforward(&s.y[i], gamma, v);
    let d1 = field(&s.y[0]);
    let d2 = jv(1, &(&d1 * (0.5 * h))) + field(&s.y[1]);
    let d3 = jv(2, &(&d2 * (0.5 * h))) + field(&s.y[2]);
    let d4 = jv(3, &(&d3 * h)) + field(&s.y[3]);
    (d1 + d2 * 2.0 + d3 * 2.0 + d4) * (h / 6.0)
}

/// Discrete adjoint source of a covector field over one step: the gradient
/// with respect to the step's initial state of the RK4 quadrature of `omega`
/// along the stage points. Approximates `int_0^h (phi_s)^* omega(x_s) ds`.
pub(crate) fn adjoint_source(
    model: &dyn DynamicalSystem,
    s: &Stages,
    gamma: f64,
    h: f64,
    omega: &dyn Fn(&DVector<f64>) -> DVector<f64>,
) -> DVector<f64> {
    let vj = |i: usize, v: &DVector<f64>| model.pullback(&s.y[i], gamma, v);
    let a4 = omega(&s.y[3]) * (h / 6.0);
    let a3 = omega(&s.y[2]) * (h / 3.0) + vj(2, &a4) * h;
    let a2 = omega(&s.y[1]) * (h / 3.0) + vj(1, &a3) * (0.5 * h);
    let a1 = omega(&s.y[0]) * (h / 6.0) + vj(0, &a2) * (0.5 * h);
    a1 + a2 + a3 + a4
}

/// Full step matrix `A` (columns are tangent images of the unit vectors).
pub(crate) fn tangent_matrix(
    model: &dyn DynamicalSystem,
    s: &Stages,
    gamma: f64,
    h: f64,
) -> DMatrix<f64> {
    let m = s.y[0].len();
    let mut a = DMatrix::zeros(m, m);
    for j in 0..m {
        let mut e = DVector::zeros(m);
        e[j] = 1.0;
        a.set_column(j, &tangent(model, s, gamma, h, &e));
    }
    a
}

/// Matrix of the adjoint step (columns are adjoint images of the unit covectors).
pub(crate) fn adjoint_matrix(
    model: &dyn DynamicalSystem,
    s: &Stages,
    gamma: f64,
    h: f64,
) -> DMatrix<f64> {
    let m = s.y[0].len();
    let mut a = DMatrix::zeros(m, m);
    for j in 0..m {
        let mut e = DVector::zeros(m);
        e[j] = 1.0;
        a.set_column(j, &adjoint(model, s, gamma, h, &e));
    }
    a
}
