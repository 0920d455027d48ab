//! The benchmark catalog: doubling map, perturbed cat map, contracting map and
//! the Lorenz-63 flow.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use super::{DynamicalSystem, Observable, SystemKind, SystemSpec};

fn wrap_unit(x: &mut DVector<f64>) {
    for v in x.iter_mut() {
        *v = v.rem_euclid(1.0);
        // rem_euclid can round up to exactly 1.0 for tiny negative inputs
        if *v >= 1.0 {
            *v = 0.0;
        }
    }
}

fn in_unit_cube(x: &DVector<f64>) -> bool {
    x.iter().all(|v| (0.0..1.0).contains(v))
}

/// `x -> 2x + gamma (mod 1)` on the circle.
#[derive(Debug, Clone, Copy, Default)]
pub struct Doubling;

impl DynamicalSystem for Doubling {
    fn name(&self) -> &str {
        "doubling"
    }
    fn kind(&self) -> SystemKind {
        SystemKind::Map
    }
    fn dim(&self) -> usize {
        1
    }
    fn unstable_dim(&self) -> usize {
        1
    }
    fn nominal_max_exponent(&self) -> f64 {
        2f64.ln()
    }
    fn evaluate(&self, x: &DVector<f64>, gamma: f64) -> DVector<f64> {
        let mut y = DVector::from_element(1, 2.0 * x[0] + gamma);
        wrap_unit(&mut y);
        y
    }
    fn jacobian(&self, _x: &DVector<f64>, _gamma: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 2.0)
    }
    fn parameter_derivative(&self, _x: &DVector<f64>, _gamma: f64) -> DVector<f64> {
        DVector::from_element(1, 1.0)
    }
    fn normalize_state(&self, x: &mut DVector<f64>) {
        wrap_unit(x)
    }
    fn in_region(&self, x: &DVector<f64>) -> bool {
        in_unit_cube(x)
    }
    fn initial_state(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        DVector::from_element(1, rng.gen_range(0.0..1.0))
    }
    fn default_observable(&self) -> Observable {
        Observable::SinSum
    }
    fn parameters(&self) -> String {
        "gamma=0".into()
    }

    /// Floating-point iteration of `2x mod 1` shifts out one mantissa bit per
    /// step and collapses onto 0 after ~53 steps. Orbits are instead built
    /// from a random binary expansion: with `y = x + gamma` the map is the
    /// plain shift `y -> 2y`, so `y_n` is read off a sliding window of bits.
    fn exact_orbit(&self, gamma: f64, len: usize, rng: &mut dyn RngCore) -> Option<Vec<DVector<f64>>> {
        const MANTISSA: usize = 53;
        let bits: Vec<bool> = (0..len + MANTISSA).map(|_| rng.next_u32() & 1 == 1).collect();
        let scale: Vec<f64> = (0..MANTISSA).map(|k| 0.5f64.powi(k as i32 + 1)).collect();
        let states = (0..len)
            .map(|n| {
                let y: f64 = (0..MANTISSA)
                    .filter(|&k| bits[n + k])
                    .map(|k| scale[k])
                    .sum();
                let mut x = DVector::from_element(1, y - gamma);
                wrap_unit(&mut x);
                x
            })
            .collect();
        Some(states)
    }
}

/// `(x, y) -> (2x + y + gamma sin(2 pi x), x + y) (mod 1)` on the torus.
#[derive(Debug, Clone, Copy, Default)]
pub struct CatMap;

impl DynamicalSystem for CatMap {
    fn name(&self) -> &str {
        "cat"
    }
    fn kind(&self) -> SystemKind {
        SystemKind::Map
    }
    fn dim(&self) -> usize {
        2
    }
    fn unstable_dim(&self) -> usize {
        1
    }
    fn nominal_max_exponent(&self) -> f64 {
        ((3.0 + 5f64.sqrt()) / 2.0).ln()
    }
    fn evaluate(&self, x: &DVector<f64>, gamma: f64) -> DVector<f64> {
        let (a, b) = (x[0], x[1]);
        let mut y = DVector::from_vec(vec![2.0 * a + b + gamma * (2.0 * PI * a).sin(), a + b]);
        wrap_unit(&mut y);
        y
    }
    fn jacobian(&self, x: &DVector<f64>, gamma: f64) -> DMatrix<f64> {
        let c = 2.0 * PI * gamma * (2.0 * PI * x[0]).cos();
        DMatrix::from_row_slice(2, 2, &[2.0 + c, 1.0, 1.0, 1.0])
    }
    fn parameter_derivative(&self, x: &DVector<f64>, _gamma: f64) -> DVector<f64> {
        DVector::from_vec(vec![(2.0 * PI * x[0]).sin(), 0.0])
    }
    fn normalize_state(&self, x: &mut DVector<f64>) {
        wrap_unit(x)
    }
    fn in_region(&self, x: &DVector<f64>) -> bool {
        in_unit_cube(x)
    }
    fn initial_state(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        DVector::from_vec(vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
    }
    fn default_observable(&self) -> Observable {
        Observable::SinSum
    }
    fn parameters(&self) -> String {
        "gamma=0".into()
    }
}

/// `x -> x/2 + gamma`, a stable sanity system with fixed point `2 gamma`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Contracting;

impl DynamicalSystem for Contracting {
    fn name(&self) -> &str {
        "contracting"
    }
    fn kind(&self) -> SystemKind {
        SystemKind::Map
    }
    fn dim(&self) -> usize {
        1
    }
    fn unstable_dim(&self) -> usize {
        0
    }
    fn nominal_max_exponent(&self) -> f64 {
        -(2f64.ln())
    }
    fn evaluate(&self, x: &DVector<f64>, gamma: f64) -> DVector<f64> {
        DVector::from_element(1, 0.5 * x[0] + gamma)
    }
    fn jacobian(&self, _x: &DVector<f64>, _gamma: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 0.5)
    }
    fn parameter_derivative(&self, _x: &DVector<f64>, _gamma: f64) -> DVector<f64> {
        DVector::from_element(1, 1.0)
    }
    fn in_region(&self, x: &DVector<f64>) -> bool {
        x[0].abs() < 1e6
    }
    fn initial_state(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        DVector::from_element(1, rng.gen_range(-1.0..1.0))
    }
    fn default_observable(&self) -> Observable {
        Observable::Coordinate(0)
    }
    fn parameters(&self) -> String {
        "gamma=0".into()
    }
}

/// Lorenz-63 with the parameter `gamma` added to `rho`:
/// `F + gamma X` with `X = (0, x, 0)`.
#[derive(Debug, Clone, Copy)]
pub struct Lorenz63 {
    pub sigma: f64,
    pub beta: f64,
    pub rho: f64,
}

impl Default for Lorenz63 {
    fn default() -> Self {
        Self { sigma: 10.0, beta: 8.0 / 3.0, rho: 28.0 }
    }
}

impl DynamicalSystem for Lorenz63 {
    fn name(&self) -> &str {
        "lorenz63"
    }
    fn kind(&self) -> SystemKind {
        SystemKind::Flow
    }
    fn dim(&self) -> usize {
        3
    }
    fn unstable_dim(&self) -> usize {
        1
    }
    fn nominal_max_exponent(&self) -> f64 {
        0.906
    }
    fn evaluate(&self, x: &DVector<f64>, gamma: f64) -> DVector<f64> {
        let rho = self.rho + gamma;
        DVector::from_vec(vec![
            self.sigma * (x[1] - x[0]),
            x[0] * (rho - x[2]) - x[1],
            x[0] * x[1] - self.beta * x[2],
        ])
    }
    fn jacobian(&self, x: &DVector<f64>, gamma: f64) -> DMatrix<f64> {
        let rho = self.rho + gamma;
        DMatrix::from_row_slice(
            3,
            3,
            &[
                -self.sigma, self.sigma, 0.0,
                rho - x[2], -1.0, -x[0],
                x[1], x[0], -self.beta,
            ],
        )
    }
    fn parameter_derivative(&self, x: &DVector<f64>, _gamma: f64) -> DVector<f64> {
        DVector::from_vec(vec![0.0, x[0], 0.0])
    }
    fn in_region(&self, x: &DVector<f64>) -> bool {
        x[0].abs() < 100.0 && x[1].abs() < 100.0 && x[2] > -50.0 && x[2] < 150.0
    }
    fn initial_state(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        DVector::from_vec(vec![
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
            rng.gen_range(15.0..35.0),
        ])
    }
    fn default_observable(&self) -> Observable {
        Observable::Coordinate(2)
    }
    fn default_time_step(&self) -> f64 {
        0.005
    }
    fn default_spinup_time(&self) -> f64 {
        50.0
    }
    fn parameters(&self) -> String {
        format!("sigma={} beta=8/3 rho={}", self.sigma, self.rho)
    }
}

/// Linear flow `x' = a x` used for integrator convergence checks. Not part of
/// the catalog.
#[derive(Debug, Clone)]
pub struct LinearFlow {
    pub matrix: DMatrix<f64>,
}

impl DynamicalSystem for LinearFlow {
    fn name(&self) -> &str {
        "linear-flow"
    }
    fn kind(&self) -> SystemKind {
        SystemKind::Flow
    }
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn unstable_dim(&self) -> usize {
        0
    }
    fn nominal_max_exponent(&self) -> f64 {
        0.0
    }
    fn evaluate(&self, x: &DVector<f64>, _gamma: f64) -> DVector<f64> {
        &self.matrix * x
    }
    fn jacobian(&self, _x: &DVector<f64>, _gamma: f64) -> DMatrix<f64> {
        self.matrix.clone()
    }
    fn parameter_derivative(&self, x: &DVector<f64>, _gamma: f64) -> DVector<f64> {
        DVector::zeros(x.len())
    }
    fn in_region(&self, x: &DVector<f64>) -> bool {
        x.iter().all(|v| v.is_finite())
    }
    fn initial_state(&self, _rng: &mut dyn RngCore) -> DVector<f64> {
        DVector::from_element(self.dim(), 1.0)
    }
    fn default_observable(&self) -> Observable {
        Observable::Coordinate(0)
    }
    fn parameters(&self) -> String {
        String::new()
    }
}

/// Names accepted by [`by_name`], in catalog order.
pub const CATALOG: [&str; 4] = ["doubling", "cat", "contracting", "lorenz63"];

/// All benchmark systems with their default observables.
pub fn catalog() -> Vec<SystemSpec> {
    CATALOG.iter().filter_map(|n| by_name(n)).collect()
}

pub fn by_name(name: &str) -> Option<SystemSpec> {
    let model: Arc<dyn DynamicalSystem> = match name {
        "doubling" => Arc::new(Doubling),
        "cat" => Arc::new(CatMap),
        "contracting" => Arc::new(Contracting),
        "lorenz63" => Arc::new(Lorenz63::default()),
        _ => return None,
    };
    Some(SystemSpec::new(model))
}
