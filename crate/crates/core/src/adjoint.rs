//! Adjoint solvers: backward propagation of covectors and the nonintrusive
//! adjoint shadowing solve for the bounded covector `nu`.
//!
//! The adjoint recursion is `nu_n = A_n^T nu_{n+1} + s_n` with `s_n = omega(x_n)`
//! for maps and, for flows, the discrete adjoint of the RK4 quadrature of
//! `omega` over the step. It runs backward, so the homogeneous constraint is
//! imposed at `n = 0`.
//!
//! For flows `nu(F)` is carried along the orbit: stepping back changes it by
//! `dt omega(F)` up to the integrator's local error. With an admissible pair,
//! `F(psi) = omega(F)`, it therefore tracks `-psi`, and the terminal value is
//! `nu'_T = -psi_T F_T / |F_T|^2`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::par;
use crate::segments::{log_growth, Recursion, Segmented};
use crate::systems::{Field, LinearizedOrbit, SystemKind};
use crate::tangent::{basis_orthogonal_to, checked_drift, initial_basis, shadow, ShadowingOptions, SolveDiagnostics};

/// Scalar field on the state space.
pub type ScalarField<'a> = &'a (dyn Fn(&DVector<f64>) -> f64 + Sync);

/// Tolerance of the admissibility check `|F(psi) - omega(F)|`, relative to
/// `1 + |omega(F)|`.
pub const ADMISSIBILITY_TOL: f64 = 1e-6;

/// Covector columns along an orbit, indexed forward in time (`columns[n]`
/// lives at `x_n`) although they were computed backward. Boundaries are
/// time indices; `r_factors[j]` is the factor taken when passing the `j`-th
/// boundary going backward, the last one being that of the unrescaled
/// columns at `n = 0`.
#[derive(Debug, Clone)]
pub struct AdjointBundle {
    pub columns: Vec<DMatrix<f64>>,
    pub boundaries: Vec<usize>,
    pub r_factors: Vec<DMatrix<f64>>,
    pub homogeneous: bool,
    /// Flows: `psi` at every orbit point when it entered the terminal value.
    pub psi: Option<Vec<f64>>,
}

impl AdjointBundle {
    pub fn steps(&self) -> usize {
        self.columns.len() - 1
    }

    pub fn growth_rates(&self, dt: f64) -> Vec<f64> {
        let t = self.steps() as f64 * dt;
        log_growth(&self.r_factors).into_iter().map(|g| g / t).collect()
    }

    /// Column values paired with the flow drift, `eps_n(F_n)`.
    pub fn drift_pairing(&self, drift: &[DVector<f64>]) -> Vec<DVector<f64>> {
        self.columns.iter().zip(drift).map(|(c, f)| c.tr_mul(f)).collect()
    }
}

fn pullback(lo: &LinearizedOrbit) -> impl Fn(usize, &DVector<f64>) -> DVector<f64> + Sync + '_ {
    let n = lo.steps();
    move |k, eta| lo.lin.pull(n - 1 - k, eta)
}

fn reversed_sources(sources: &[DVector<f64>]) -> Vec<DVector<f64>> {
    sources.iter().rev().cloned().collect()
}

fn to_time_order(s: Segmented, len: usize) -> (Vec<DMatrix<f64>>, Vec<usize>, Vec<DMatrix<f64>>) {
    let mut columns = s.homogeneous;
    columns.reverse();
    let boundaries = s.boundaries.iter().rev().map(|k| len - k).collect();
    (columns, boundaries, s.r)
}

/// Pulls the columns of `terminal` (covectors at `x_N`) back to `x_0` with
/// QR renormalization every `segment_length` steps.
pub fn homogeneous_adjoint(lo: &LinearizedOrbit, terminal: &DMatrix<f64>, segment_length: usize) -> Result<AdjointBundle> {
    let k = terminal.ncols();
    if k == 0 || k > lo.dim() || terminal.nrows() != lo.dim() {
        return Err(Error::Configuration(format!(
            "need 1 <= k <= {} covectors of length {}, got {}x{}",
            lo.dim(),
            lo.dim(),
            terminal.nrows(),
            k
        )));
    }
    if segment_length == 0 {
        return Err(Error::Configuration("segment length must be at least 1".into()));
    }
    let step = pullback(lo);
    let s = Recursion {
        len: lo.steps(),
        step: &step,
        forcing: None,
        project: None,
        start: DVector::zeros(lo.dim()),
        basis: terminal.clone(),
        segment_length,
    }
    .run()?;
    let (columns, boundaries, r_factors) = to_time_order(s, lo.steps());
    Ok(AdjointBundle { columns, boundaries, r_factors, homogeneous: true, psi: None })
}

fn check_sources(lo: &LinearizedOrbit, sources: &[DVector<f64>]) -> Result<()> {
    if sources.len() != lo.steps() {
        return Err(Error::LengthMismatch { expected: lo.steps(), found: sources.len() });
    }
    Ok(())
}

/// Conventional backward solution `nu'_n = A_n^T nu'_{n+1} + s_n` from the
/// given terminal covector, no renormalization.
pub fn inhomogeneous_adjoint(lo: &LinearizedOrbit, sources: &[DVector<f64>], terminal: &DVector<f64>) -> Result<AdjointBundle> {
    check_sources(lo, sources)?;
    let step = pullback(lo);
    let rev = reversed_sources(sources);
    let s = Recursion {
        len: lo.steps(),
        step: &step,
        forcing: Some(&rev),
        project: None,
        start: terminal.clone(),
        basis: DMatrix::zeros(lo.dim(), 0),
        segment_length: lo.steps(),
    }
    .run()?;
    let mut columns: Vec<DMatrix<f64>> = s
        .particular
        .into_iter()
        .map(|v| DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
        .collect();
    columns.reverse();
    Ok(AdjointBundle { columns, boundaries: vec![0, lo.steps()], r_factors: Vec::new(), homogeneous: false, psi: None })
}

/// Flow version of [`inhomogeneous_adjoint`] started from
/// `nu'_T = -psi_T F_T / |F_T|^2`.
pub fn inhomogeneous_flow_adjoint(lo: &LinearizedOrbit, omega: Field<'_>, psi: ScalarField<'_>) -> Result<AdjointBundle> {
    require(lo, SystemKind::Flow)?;
    let drift = checked_drift(lo)?;
    let sources = lo.adjoint_sources(omega);
    let terminal = terminal_covector(&drift[lo.steps()], psi(lo.state(lo.steps())));
    let mut bundle = inhomogeneous_adjoint(lo, &sources, &terminal)?;
    bundle.psi = Some(lo.orbit.states.iter().map(|x| psi(x)).collect());
    Ok(bundle)
}

fn terminal_covector(f: &DVector<f64>, psi: f64) -> DVector<f64> {
    f * (-psi / f.norm_squared())
}

fn require(lo: &LinearizedOrbit, kind: SystemKind) -> Result<()> {
    if lo.spec.kind() == kind {
        Ok(())
    } else {
        Err(Error::KindMismatch {
            system: lo.spec.name().to_string(),
            expected: kind.as_str(),
            found: lo.spec.kind().as_str(),
        })
    }
}

/// The bounded adjoint solution.
#[derive(Debug, Clone)]
pub struct ShadowingCovector {
    pub nu: Vec<DVector<f64>>,
    /// Flows: `nu_n(F_n)` along the orbit.
    pub drift_pairing: Option<Vec<f64>>,
    /// Flows: `psi(x_n)` along the orbit.
    pub psi: Option<Vec<f64>>,
    pub diagnostics: SolveDiagnostics,
}

impl ShadowingCovector {
    pub fn sup_norm(&self, range: std::ops::RangeInclusive<usize>) -> f64 {
        self.nu[range].iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Flows: `sup |nu(F) - psi|` over `range`.
    pub fn pairing_defect(&self, range: std::ops::RangeInclusive<usize>) -> Option<f64> {
        self.profile_sup(range, 1.0)
    }

    /// Flows: `sup |nu(F) + psi|` over `range`.
    pub fn pairing_defect_reflected(&self, range: std::ops::RangeInclusive<usize>) -> Option<f64> {
        self.profile_sup(range, -1.0)
    }

    fn profile_sup(&self, range: std::ops::RangeInclusive<usize>, sign: f64) -> Option<f64> {
        let (p, psi) = (self.drift_pairing.as_ref()?, self.psi.as_ref()?);
        Some(range.map(|n| (p[n] - sign * psi[n]).abs()).fold(0.0, f64::max))
    }
}

fn solve_covector(
    lo: &LinearizedOrbit,
    sources: &[DVector<f64>],
    drift: Option<&[DVector<f64>]>,
    start: DVector<f64>,
    basis: DMatrix<f64>,
    opts: &ShadowingOptions,
    free_dim: usize,
) -> Result<(Vec<DVector<f64>>, SolveDiagnostics)> {
    check_sources(lo, sources)?;
    let step = pullback(lo);
    let rev = reversed_sources(sources);
    let n = lo.steps();
    // Keeps the sign-check columns in the annihilator of F.
    let annihilate = |k: usize, eta: &mut DVector<f64>| {
        let f = &drift.expect("flow drift")[n - k];
        let c = f.dot(eta) / f.norm_squared();
        eta.axpy(-c, f, 1.0);
        c
    };
    let check = drift.map(|_| &annihilate as crate::segments::Projector<'_>);
    let solved = shadow(lo, &step, &rev, None, check, start, basis, opts, free_dim)?;
    let mut nu = solved.values;
    nu.reverse();
    Ok((nu, solved.diagnostics))
}

/// Nonintrusive adjoint shadowing on a map orbit for per-step sources
/// `s_n = omega(x_n)`, `n = 0..N-1`.
pub fn nilsas_solve_sources(lo: &LinearizedOrbit, sources: &[DVector<f64>], opts: &ShadowingOptions) -> Result<ShadowingCovector> {
    require(lo, SystemKind::Map)?;
    let m = lo.dim();
    let basis = initial_basis(m, (opts.unstable_dim + 1).min(m), opts.seed);
    let (nu, diagnostics) = solve_covector(lo, sources, None, DVector::zeros(m), basis, opts, m)?;
    Ok(ShadowingCovector { nu, drift_pairing: None, psi: None, diagnostics })
}

/// Nonintrusive adjoint shadowing on a map orbit: `nu = nu' + eps a` with
/// `nu'_N = 0` and `<nu_0, eps_0> = 0`.
pub fn nilsas_solve(lo: &LinearizedOrbit, omega: Field<'_>, opts: &ShadowingOptions) -> Result<ShadowingCovector> {
    require(lo, SystemKind::Map)?;
    nilsas_solve_sources(lo, &lo.adjoint_sources(omega), opts)
}

/// Largest admissibility defect `|F(psi) - omega(F)| / (1 + |omega(F)|)` at
/// about `samples` evenly spaced orbit points, with `F(psi)` from a
/// fourth-order central difference of `psi` along short RK4 trajectories.
pub fn admissibility_defect(lo: &LinearizedOrbit, omega: Field<'_>, psi: ScalarField<'_>, samples: usize) -> Result<(usize, f64)> {
    require(lo, SystemKind::Flow)?;
    const H: f64 = 2e-4;
    let spec = &lo.spec;
    let gamma = lo.orbit.gamma;
    let stride = (lo.steps() / samples.max(1)).max(1);
    let points: Vec<usize> = (0..=lo.steps()).step_by(stride).collect();
    let defects = par::try_map_indexed(points.len(), |i| -> Result<(usize, f64)> {
        let n = points[i];
        let x = lo.state(n);
        let fwd1 = spec.flow_step(x, gamma, H)?;
        let fwd2 = spec.flow_step(&fwd1, gamma, H)?;
        let back = spec.reverse_flow_step(x, gamma, H);
        let back2 = spec.reverse_flow_step(&back, gamma, H);
        let dpsi = (-psi(&fwd2) + 8.0 * psi(&fwd1) - 8.0 * psi(&back) + psi(&back2)) / (12.0 * H);
        let wf = omega(x).dot(&spec.vector_field(x, gamma));
        Ok((n, (dpsi - wf).abs() / (1.0 + wf.abs())))
    })?;
    Ok(defects.into_iter().fold((0, 0.0), |acc, d| if d.1 > acc.1 { d } else { acc }))
}

/// Nonintrusive adjoint shadowing on a flow orbit for an admissible pair
/// `(omega, psi)`. Homogeneous columns start in the annihilator of `F_T`.
pub fn nilsas_flow_solve(
    lo: &LinearizedOrbit,
    omega: Field<'_>,
    psi: ScalarField<'_>,
    opts: &ShadowingOptions,
) -> Result<ShadowingCovector> {
    require(lo, SystemKind::Flow)?;
    let drift = checked_drift(lo)?;
    let (at, defect) = admissibility_defect(lo, omega, psi, 200)?;
    if !(defect <= ADMISSIBILITY_TOL) {
        return Err(Error::InvalidPair { step: at, defect });
    }
    let m = lo.dim();
    let n = lo.steps();
    let sources = lo.adjoint_sources(omega);
    let start = terminal_covector(&drift[n], psi(lo.state(n)));
    let basis = basis_orthogonal_to(&drift[n], (opts.unstable_dim + 1).min(m - 1), opts.seed);
    let (nu, diagnostics) = solve_covector(lo, &sources, Some(&drift), start, basis, opts, m - 1)?;
    let pairing = nu.iter().zip(&drift).map(|(v, f)| v.dot(f)).collect();
    let psi_values = lo.orbit.states.iter().map(|x| psi(x)).collect();
    Ok(ShadowingCovector { nu, drift_pairing: Some(pairing), psi: Some(psi_values), diagnostics })
}

/// `max_n |nu_n - A_n^T nu_{n+1} - s_n|` over steps `n` in `range`; for flows
/// divided by `dt`, the discretized adjoint equation.
pub fn adjoint_residual(lo: &LinearizedOrbit, sources: &[DVector<f64>], nu: &[DVector<f64>], range: std::ops::Range<usize>) -> f64 {
    let dt = lo.time_step();
    range
        .map(|n| (&nu[n] - lo.lin.pull(n, &nu[n + 1]) - &sources[n]).amax() / dt)
        .fold(0.0, f64::max)
}
