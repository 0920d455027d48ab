use nalgebra::{DMatrix, DVector};

use super::{Field, Orbit, SystemSpec};
use crate::error::{Error, Result};
use crate::par;

/// Per-step linearization of an orbit: `A_n` maps tangent vectors at `x_n`
/// to `x_{n+1}`, `A_n^T` (assembled from the model's pullback) maps
/// covectors at `x_{n+1}` back to `x_n`.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub forward: Vec<DMatrix<f64>>,
    pub backward: Vec<DMatrix<f64>>,
}

impl Linearization {
    pub fn steps(&self) -> usize {
        self.forward.len()
    }

    /// `A_n w`.
    pub fn push(&self, n: usize, w: &DVector<f64>) -> DVector<f64> {
        &self.forward[n] * w
    }

    /// `A_n^T eta`.
    pub fn pull(&self, n: usize, eta: &DVector<f64>) -> DVector<f64> {
        &self.backward[n] * eta
    }
}

/// An orbit bundled with its system and linearization; the input of every
/// solver.
#[derive(Debug, Clone)]
pub struct LinearizedOrbit {
    pub spec: SystemSpec,
    pub orbit: Orbit,
    pub lin: Linearization,
}

impl LinearizedOrbit {
    pub fn new(spec: SystemSpec, orbit: Orbit) -> Result<Self> {
        if orbit.dim() != spec.dim() {
            return Err(Error::LengthMismatch { expected: spec.dim(), found: orbit.dim() });
        }
        let n = orbit.steps();
        let gamma = orbit.gamma;
        let (forward, backward): (Vec<_>, Vec<_>) =
            par::map_indexed(n, |i| spec.step_matrices(&orbit.states[i], gamma))
                .into_iter()
                .unzip();
        Ok(Self { spec, orbit, lin: Linearization { forward, backward } })
    }

    pub fn steps(&self) -> usize {
        self.orbit.steps()
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn time_step(&self) -> f64 {
        self.orbit.time_step
    }

    pub fn state(&self, n: usize) -> &DVector<f64> {
        &self.orbit.states[n]
    }

    /// Forcing `b_n`, `n = 0..N-1`, of the system's own perturbation.
    pub fn perturbation_forcing(&self) -> Vec<DVector<f64>> {
        let g = self.orbit.gamma;
        par::map_indexed(self.steps(), |n| self.spec.step_forcing(self.state(n), g))
    }

    /// Forcing `b_n` of an arbitrary perturbation field.
    pub fn forcing_from_field(&self, field: Field<'_>) -> Vec<DVector<f64>> {
        let g = self.orbit.gamma;
        par::map_indexed(self.steps(), |n| self.spec.step_forcing_for(self.state(n), g, field))
    }

    /// Adjoint sources `s_n`, `n = 0..N-1`, of a covector field.
    pub fn adjoint_sources(&self, omega: Field<'_>) -> Vec<DVector<f64>> {
        let g = self.orbit.gamma;
        par::map_indexed(self.steps(), |n| self.spec.adjoint_source(self.state(n), g, omega))
    }

    /// Adjoint sources of the objective differential `dPhi`.
    pub fn objective_sources(&self) -> Vec<DVector<f64>> {
        let phi = self.spec.observable();
        let omega = move |x: &DVector<f64>| phi.differential(x);
        self.adjoint_sources(&omega)
    }

    /// Flow drift `F(x_n)` (at the orbit parameter) for `n = 0..N`.
    pub fn drift(&self) -> Vec<DVector<f64>> {
        let g = self.orbit.gamma;
        self.orbit.states.iter().map(|x| self.spec.vector_field(x, g)).collect()
    }

    /// Interior index range `[buffer, N - buffer]`.
    pub fn interior(&self) -> std::ops::RangeInclusive<usize> {
        let b = self.spec.interior_buffer();
        let n = self.steps();
        b.min(n)..=n.saturating_sub(b)
    }
}
