//! Parameterized maps and flows, their linearizations, and orbit generation.
//!
//! A [`DynamicalSystem`] describes the model at the level of the map `f` (for
//! discrete time) or the vector field `F + gamma X` (for flows). A
//! [`SystemSpec`] wraps a model with an objective and, for flows, the time
//! step, and exposes everything at the level of one orbit step: for a flow,
//! "the map" is one RK4 step and its pushforward/pullback are the exact
//! tangent and discrete-adjoint RK4 steps.

mod benchmarks;
mod integrator;
mod linearization;
mod observable;
mod orbit;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use benchmarks::{by_name, catalog, CatMap, Contracting, Doubling, LinearFlow, Lorenz63, CATALOG};
pub use linearization::{LinearizedOrbit, Linearization};
pub use observable::Observable;
pub use orbit::Orbit;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Map,
    Flow,
}

impl SystemKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SystemKind::Map => "map",
            SystemKind::Flow => "flow",
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A model with analytic linearizations.
///
/// For maps, `evaluate` is `f(x; gamma)`, `jacobian` is `df/dx` and
/// `parameter_derivative` is `df/dgamma` evaluated at the preimage, so that
/// `X_{n+1} = parameter_derivative(x_n)`. For flows, `evaluate` is the vector
/// field `F + gamma X`, `jacobian` its state derivative, and
/// `parameter_derivative` is `X`.
pub trait DynamicalSystem: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn kind(&self) -> SystemKind;
    fn dim(&self) -> usize;
    /// Number of positive Lyapunov exponents (the center direction of a flow
    /// is not counted).
    fn unstable_dim(&self) -> usize;
    /// Largest Lyapunov exponent per step (maps) or per unit time (flows).
    fn nominal_max_exponent(&self) -> f64;
    fn evaluate(&self, x: &DVector<f64>, gamma: f64) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>, gamma: f64) -> DMatrix<f64>;
    fn parameter_derivative(&self, x: &DVector<f64>, gamma: f64) -> DVector<f64>;
    fn in_region(&self, x: &DVector<f64>) -> bool;
    fn initial_state(&self, rng: &mut dyn RngCore) -> DVector<f64>;
    fn default_observable(&self) -> Observable;
    /// Human-readable default parameter string for listings.
    fn parameters(&self) -> String;

    /// Jacobian-vector action `f_* w` (maps) or `(grad F + gamma grad X) w`.
    fn pushforward(&self, x: &DVector<f64>, gamma: f64, w: &DVector<f64>) -> DVector<f64> {
        self.jacobian(x, gamma) * w
    }

    /// Vector-Jacobian action `f^* eta`, the transpose of [`pushforward`](Self::pushforward).
    fn pullback(&self, x: &DVector<f64>, gamma: f64, eta: &DVector<f64>) -> DVector<f64> {
        self.jacobian(x, gamma).tr_mul(eta)
    }

    /// Brings a state back to its fundamental domain (circle/torus systems).
    fn normalize_state(&self, _x: &mut DVector<f64>) {}

    fn default_time_step(&self) -> f64 {
        1.0
    }

    fn default_spinup_time(&self) -> f64 {
        1000.0
    }

    /// Systems whose floating-point iteration degenerates can construct
    /// `len` consecutive orbit states directly.
    fn exact_orbit(&self, _gamma: f64, _len: usize, _rng: &mut dyn RngCore) -> Option<Vec<DVector<f64>>> {
        None
    }
}

/// Wraps a model and negates its pullback. Used to check that the validation
/// suite notices a broken adjoint.
#[derive(Debug)]
pub struct FlippedPullback(pub Arc<dyn DynamicalSystem>);

impl DynamicalSystem for FlippedPullback {
    fn name(&self) -> &str {
        self.0.name()
    }
    fn kind(&self) -> SystemKind {
        self.0.kind()
    }
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn unstable_dim(&self) -> usize {
        self.0.unstable_dim()
    }
    fn nominal_max_exponent(&self) -> f64 {
        self.0.nominal_max_exponent()
    }
    fn evaluate(&self, x: &DVector<f64>, gamma: f64) -> DVector<f64> {
        self.0.evaluate(x, gamma)
    }
    fn jacobian(&self, x: &DVector<f64>, gamma: f64) -> DMatrix<f64> {
        self.0.jacobian(x, gamma)
    }
    fn parameter_derivative(&self, x: &DVector<f64>, gamma: f64) -> DVector<f64> {
        self.0.parameter_derivative(x, gamma)
    }
    fn in_region(&self, x: &DVector<f64>) -> bool {
        self.0.in_region(x)
    }
    fn initial_state(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        self.0.initial_state(rng)
    }
    fn default_observable(&self) -> Observable {
        self.0.default_observable()
    }
    fn parameters(&self) -> String {
        self.0.parameters()
    }
    fn pushforward(&self, x: &DVector<f64>, gamma: f64, w: &DVector<f64>) -> DVector<f64> {
        self.0.pushforward(x, gamma, w)
    }
    fn pullback(&self, x: &DVector<f64>, gamma: f64, eta: &DVector<f64>) -> DVector<f64> {
        -self.0.pullback(x, gamma, eta)
    }
    fn normalize_state(&self, x: &mut DVector<f64>) {
        self.0.normalize_state(x)
    }
    fn default_time_step(&self) -> f64 {
        self.0.default_time_step()
    }
    fn default_spinup_time(&self) -> f64 {
        self.0.default_spinup_time()
    }
    fn exact_orbit(&self, gamma: f64, len: usize, rng: &mut dyn RngCore) -> Option<Vec<DVector<f64>>> {
        self.0.exact_orbit(gamma, len, rng)
    }
}

/// A model together with its objective and step size.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    model: Arc<dyn DynamicalSystem>,
    observable: Observable,
    time_step: f64,
}

/// Covector or vector field given in closed form.
pub type Field<'a> = &'a (dyn Fn(&DVector<f64>) -> DVector<f64> + Sync);

impl SystemSpec {
    pub fn new(model: Arc<dyn DynamicalSystem>) -> Self {
        let observable = model.default_observable();
        let time_step = model.default_time_step();
        Self { model, observable, time_step }
    }

    pub fn with_observable(mut self, observable: Observable) -> Self {
        self.observable = observable;
        self
    }

    pub fn with_time_step(mut self, dt: f64) -> Self {
        if self.kind() == SystemKind::Flow {
            self.time_step = dt;
        }
        self
    }

    pub fn model(&self) -> &Arc<dyn DynamicalSystem> {
        &self.model
    }
    pub fn name(&self) -> &str {
        self.model.name()
    }
    pub fn kind(&self) -> SystemKind {
        self.model.kind()
    }
    pub fn dim(&self) -> usize {
        self.model.dim()
    }
    pub fn unstable_dim(&self) -> usize {
        self.model.unstable_dim()
    }
    pub fn observable(&self) -> Observable {
        self.observable
    }
    /// Step size: 1 for maps, `dt` for flows.
    pub fn time_step(&self) -> f64 {
        self.time_step
    }
    pub fn is_flow(&self) -> bool {
        self.kind() == SystemKind::Flow
    }

    /// Default spin-up length in steps.
    pub fn default_spinup_steps(&self) -> usize {
        (self.model.default_spinup_time() / self.time_step).round() as usize
    }

    /// Segment length keeping the largest exponent times the segment duration
    /// at or below 5.
    pub fn default_segment_length(&self) -> usize {
        let lambda = self.model.nominal_max_exponent();
        if lambda <= 0.0 {
            return 100;
        }
        ((5.0 / (lambda * self.time_step)).floor() as usize).max(1)
    }

    /// Number of steps excluded at each orbit end when sampling "interior"
    /// quantities: 30 steps for maps, time 5 for flows.
    pub fn interior_buffer(&self) -> usize {
        match self.kind() {
            SystemKind::Map => 30,
            SystemKind::Flow => (5.0 / self.time_step).round() as usize,
        }
    }

    fn require(&self, kind: SystemKind) -> Result<()> {
        if self.kind() == kind {
            Ok(())
        } else {
            Err(Error::KindMismatch {
                system: self.name().to_string(),
                expected: kind.as_str(),
                found: self.kind().as_str(),
            })
        }
    }

    /// One application of the map `f(x; gamma)`.
    pub fn map_step(&self, x: &DVector<f64>, gamma: f64) -> Result<DVector<f64>> {
        self.require(SystemKind::Map)?;
        Ok(self.model.evaluate(x, gamma))
    }

    /// Advances a flow by `dt` with one RK4 step.
    pub fn flow_step(&self, x: &DVector<f64>, gamma: f64, dt: f64) -> Result<DVector<f64>> {
        self.require(SystemKind::Flow)?;
        if !(dt > 0.0) {
            return Err(Error::Configuration(format!("time step must be positive, got {dt}")));
        }
        let y = integrator::step(self.model.as_ref(), x, gamma, dt);
        if y.iter().all(|v| v.is_finite()) {
            Ok(y)
        } else {
            Err(Error::Divergence { step: 0, detail: "non-finite state".into() })
        }
    }

    /// RK4 step of length `dt` backward in time.
    pub(crate) fn reverse_flow_step(&self, x: &DVector<f64>, gamma: f64, dt: f64) -> DVector<f64> {
        integrator::step(self.model.as_ref(), x, gamma, -dt)
    }

    /// One orbit step: the map, or an RK4 step of length `time_step`.
    pub fn step(&self, x: &DVector<f64>, gamma: f64) -> Result<DVector<f64>> {
        match self.kind() {
            SystemKind::Map => self.map_step(x, gamma),
            SystemKind::Flow => self.flow_step(x, gamma, self.time_step),
        }
    }

    /// Drift `F(x)` of a flow at the base parameter plus `gamma X`.
    pub fn vector_field(&self, x: &DVector<f64>, gamma: f64) -> DVector<f64> {
        self.model.evaluate(x, gamma)
    }

    /// Step-level pushforward: `f_* w` for maps, the tangent RK4 step for flows.
    pub fn pushforward(&self, x: &DVector<f64>, gamma: f64, w: &DVector<f64>) -> DVector<f64> {
        match self.kind() {
            SystemKind::Map => self.model.pushforward(x, gamma, w),
            SystemKind::Flow => {
                let s = integrator::stages(self.model.as_ref(), x, gamma, self.time_step);
                integrator::tangent(self.model.as_ref(), &s, gamma, self.time_step, w)
            }
        }
    }

    /// Step-level pullback, the exact adjoint of [`pushforward`](Self::pushforward).
    pub fn pullback(&self, x: &DVector<f64>, gamma: f64, eta: &DVector<f64>) -> DVector<f64> {
        match self.kind() {
            SystemKind::Map => self.model.pullback(x, gamma, eta),
            SystemKind::Flow => {
                let s = integrator::stages(self.model.as_ref(), x, gamma, self.time_step);
                integrator::adjoint(self.model.as_ref(), &s, gamma, self.time_step, eta)
            }
        }
    }

    /// Step matrices `(A, A^T)` at `x`, the second assembled from the pullback.
    pub fn step_matrices(&self, x: &DVector<f64>, gamma: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let m = self.dim();
        match self.kind() {
            SystemKind::Map => {
                let mut fwd = DMatrix::zeros(m, m);
                let mut bwd = DMatrix::zeros(m, m);
                for j in 0..m {
                    let mut e = DVector::zeros(m);
                    e[j] = 1.0;
                    fwd.set_column(j, &self.model.pushforward(x, gamma, &e));
                    bwd.set_column(j, &self.model.pullback(x, gamma, &e));
                }
                (fwd, bwd)
            }
            SystemKind::Flow => {
                let h = self.time_step;
                let s = integrator::stages(self.model.as_ref(), x, gamma, h);
                (
                    integrator::tangent_matrix(self.model.as_ref(), &s, gamma, h),
                    integrator::adjoint_matrix(self.model.as_ref(), &s, gamma, h),
                )
            }
        }
    }

    /// Inhomogeneous forcing entering `v_{n+1}` when stepping from `x_n`: for
    /// maps `df/dgamma(x_n)`, i.e. `X_{n+1}`; for flows the parameter
    /// derivative of the RK4 step, approximately `dt X`.
    pub fn step_forcing(&self, x: &DVector<f64>, gamma: f64) -> DVector<f64> {
        match self.kind() {
            SystemKind::Map => self.model.parameter_derivative(x, gamma),
            SystemKind::Flow => {
                let field = |y: &DVector<f64>| self.model.parameter_derivative(y, gamma);
                self.step_forcing_for(x, gamma, &field)
            }
        }
    }

    /// As [`step_forcing`](Self::step_forcing) for a user-supplied
    /// perturbation. For maps `field` is evaluated at the image point.
    pub fn step_forcing_for(&self, x: &DVector<f64>, gamma: f64, field: Field<'_>) -> DVector<f64> {
        match self.kind() {
            SystemKind::Map => field(&self.model.evaluate(x, gamma)),
            SystemKind::Flow => {
                let h = self.time_step;
                let s = integrator::stages(self.model.as_ref(), x, gamma, h);
                integrator::parameter_derivative(self.model.as_ref(), &s, gamma, h, field)
            }
        }
    }

    /// Adjoint source for the step from `x_n`: `omega(x_n)` for maps; for
    /// flows the discrete adjoint of the RK4 quadrature of `omega` over the
    /// step, approximately `dt omega`.
    pub fn adjoint_source(&self, x: &DVector<f64>, gamma: f64, omega: Field<'_>) -> DVector<f64> {
        match self.kind() {
            SystemKind::Map => omega(x),
            SystemKind::Flow => {
                let h = self.time_step;
                let s = integrator::stages(self.model.as_ref(), x, gamma, h);
                integrator::adjoint_source(self.model.as_ref(), &s, gamma, h, omega)
            }
        }
    }

    /// Inhomogeneous forcing at orbit index `n`: `X_n = df/dgamma(x_{n-1})`
    /// for maps (index 0 uses the stored spin-up preimage), `X(x_n)` for flows.
    pub fn perturbation_at(&self, orbit: &Orbit, n: usize) -> Result<DVector<f64>> {
        let len = orbit.states.len();
        if n >= len {
            return Err(Error::IndexOutOfRange { index: n, len });
        }
        match self.kind() {
            SystemKind::Flow => Ok(self.model.parameter_derivative(&orbit.states[n], orbit.gamma)),
            SystemKind::Map => {
                let pre = if n == 0 {
                    orbit.preimage.as_ref().ok_or(Error::IndexOutOfRange { index: 0, len })?
                } else {
                    &orbit.states[n - 1]
                };
                Ok(self.model.parameter_derivative(pre, orbit.gamma))
            }
        }
    }

    /// Generates an orbit of `n_steps` steps (`n_steps + 1` states) after
    /// discarding `spinup` steps. The initial state is `x0` if given,
    /// otherwise drawn from `seed`.
    pub fn generate_orbit(
        &self,
        x0: Option<&DVector<f64>>,
        gamma: f64,
        n_steps: usize,
        spinup: usize,
        seed: u64,
    ) -> Result<Orbit> {
        orbit::generate(self, x0, gamma, n_steps, spinup, seed)
    }

    /// Objective values along an orbit.
    pub fn objective_series(&self, orbit: &Orbit) -> Vec<f64> {
        orbit.states.iter().map(|x| self.observable.value(x)).collect()
    }
}
