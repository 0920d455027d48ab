//! Tangent solvers: homogeneous and conventional inhomogeneous propagation,
//! and the nonintrusive shadowing solve for the bounded solution `v`.
//!
//! On an orbit with step matrices `A_n` and forcing `b_n` the tangent
//! recursion is `v_{n+1} = A_n v_n + b_n`. For maps `b_n = X_{n+1}`. For flows
//! `A_n` is the exact tangent of the RK4 step, `b_n` its parameter derivative,
//! and each step removes the component along `F_{n+1}`, which defines the
//! time dilation:
//!
//! ```text
//! z       = A_n v_n + b_n
//! eta_n   = <F_{n+1}, z> / (dt |F_{n+1}|^2)
//! v_{n+1} = z - dt eta_n F_{n+1}
//! ```

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{qr_positive, random_orthonormal};
use crate::segments::{log_growth, Projector, Recursion, Segmented};
use crate::systems::{LinearizedOrbit, SystemKind};

/// `|F|` below this on an orbit point makes the flow direction unusable.
pub const DRIFT_FLOOR: f64 = 1e-8;

/// Solution columns along an orbit with their renormalization history.
///
/// `columns[n]` is `W_n`. Inside a segment the columns satisfy the
/// recursion; at each interior boundary they are replaced by the `Q` factor
/// of their QR decomposition and the `R` factor is kept in `r_factors`. The
/// last entry of `r_factors` is the factor of the final, unrescaled columns.
#[derive(Debug, Clone)]
pub struct TangentBundle {
    pub columns: Vec<DMatrix<f64>>,
    pub boundaries: Vec<usize>,
    pub r_factors: Vec<DMatrix<f64>>,
    pub homogeneous: bool,
}

impl TangentBundle {
    fn from_segmented(s: Segmented, homogeneous: bool) -> Self {
        let Segmented { boundaries, homogeneous: columns, r, .. } = s;
        Self { columns, boundaries, r_factors: r, homogeneous }
    }

    pub fn steps(&self) -> usize {
        self.columns.len() - 1
    }

    /// Average growth rate of each column from the `R` diagonals, per unit
    /// step (`dt = 1`) or per unit time.
    pub fn growth_rates(&self, dt: f64) -> Vec<f64> {
        let t = self.steps() as f64 * dt;
        log_growth(&self.r_factors).into_iter().map(|g| g / t).collect()
    }

    /// Columns at step `n` with the renormalizations of all earlier
    /// boundaries undone.
    pub fn unscaled(&self, n: usize) -> DMatrix<f64> {
        let mut w = self.columns[n].clone();
        let passed = self.boundaries[1..].iter().filter(|&&t| t <= n && t < self.steps()).count();
        for r in self.r_factors[..passed].iter().rev() {
            w *= r;
        }
        w
    }
}

fn propagate(lo: &LinearizedOrbit) -> impl Fn(usize, &DVector<f64>) -> DVector<f64> + Sync + '_ {
    move |k, w| lo.lin.push(k, w)
}

/// Propagates the columns of `w0` forward with QR renormalization every
/// `segment_length` steps.
pub fn homogeneous_tangent(lo: &LinearizedOrbit, w0: &DMatrix<f64>, segment_length: usize) -> Result<TangentBundle> {
    let k = w0.ncols();
    if k == 0 || k > lo.dim() || w0.nrows() != lo.dim() {
        return Err(Error::Configuration(format!(
            "need 1 <= k <= {} columns of length {}, got {}x{}",
            lo.dim(),
            lo.dim(),
            w0.nrows(),
            k
        )));
    }
    if segment_length == 0 {
        return Err(Error::Configuration("segment length must be at least 1".into()));
    }
    let step = propagate(lo);
    let s = Recursion {
        len: lo.steps(),
        step: &step,
        forcing: None,
        project: None,
        start: DVector::zeros(lo.dim()),
        basis: w0.clone(),
        segment_length,
    }
    .run()?;
    Ok(TangentBundle::from_segmented(s, true))
}

/// Conventional solution `v'_{n+1} = A_n v'_n + b_n` with `v'_0 = 0`, no
/// renormalization.
pub fn inhomogeneous_tangent(lo: &LinearizedOrbit, forcing: &[DVector<f64>]) -> Result<TangentBundle> {
    check_forcing(lo, forcing)?;
    let step = propagate(lo);
    let s = Recursion {
        len: lo.steps(),
        step: &step,
        forcing: Some(forcing),
        project: None,
        start: DVector::zeros(lo.dim()),
        basis: DMatrix::zeros(lo.dim(), 0),
        segment_length: lo.steps(),
    }
    .run()?;
    let columns = s
        .particular
        .into_iter()
        .map(|v| DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
        .collect();
    Ok(TangentBundle { columns, boundaries: s.boundaries, r_factors: Vec::new(), homogeneous: false })
}

fn check_forcing(lo: &LinearizedOrbit, forcing: &[DVector<f64>]) -> Result<()> {
    if forcing.len() != lo.steps() {
        return Err(Error::LengthMismatch { expected: lo.steps(), found: forcing.len() });
    }
    Ok(())
}

/// How the homogeneous coefficients are fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShadowingMethod {
    /// Orthogonality to the propagated homogeneous span at the constrained end.
    #[default]
    TerminalConstraint,
    /// Minimal summed squared norm per segment with continuity at boundaries.
    LeastSquares,
}

impl ShadowingMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            ShadowingMethod::TerminalConstraint => "terminal-constraint",
            ShadowingMethod::LeastSquares => "least-squares",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowingOptions {
    /// Number of homogeneous solutions (positive exponents, center excluded).
    pub unstable_dim: usize,
    pub segment_length: usize,
    pub method: ShadowingMethod,
    /// Seed of the random initial homogeneous basis.
    pub seed: u64,
}

impl ShadowingOptions {
    /// Defaults of the orbit's system.
    pub fn for_orbit(lo: &LinearizedOrbit) -> Self {
        Self {
            unstable_dim: lo.spec.unstable_dim(),
            segment_length: lo.spec.default_segment_length(),
            method: ShadowingMethod::default(),
            seed: 0x5eed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_method(mut self, method: ShadowingMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_segment_length(mut self, segment_length: usize) -> Self {
        self.segment_length = segment_length;
        self
    }

    pub fn with_unstable_dim(mut self, u: usize) -> Self {
        self.unstable_dim = u;
        self
    }
}

/// Solve diagnostics written to reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub method: ShadowingMethod,
    pub unstable_dim: usize,
    pub segment_length: usize,
    pub segments: usize,
    /// Largest component of the constrained end value along the homogeneous span.
    pub constraint_residual: f64,
    /// Smallest reciprocal condition estimate met in the coefficient solve.
    pub min_rcond: f64,
    /// Growth rates of the homogeneous columns plus one extra column, used
    /// to check `unstable_dim` against the exponent signs (empty when the
    /// orbit is too short for the check).
    pub growth_rates: Vec<f64>,
    /// `log R_ii` of every segment, one row per boundary.
    pub log_r_diagonal: Vec<Vec<f64>>,
}

/// The bounded tangent solution: `v` for maps, `(v, eta)` for flows.
#[derive(Debug, Clone)]
pub struct ShadowingPair {
    pub v: Vec<DVector<f64>>,
    /// Time dilation per step (`n = 0..N-1`); `None` for maps.
    pub eta: Option<Vec<f64>>,
    pub diagnostics: SolveDiagnostics,
}

impl ShadowingPair {
    pub fn sup_norm(&self, range: std::ops::RangeInclusive<usize>) -> f64 {
        self.v[range].iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Minimum propagated time, in units of `1 / lambda_max`, before the
/// computed growth rates are trusted for the sign check.
const SIGN_CHECK_HORIZON: f64 = 20.0;

pub(crate) struct Solved {
    pub values: Vec<DVector<f64>>,
    pub removed: Vec<f64>,
    pub diagnostics: SolveDiagnostics,
}

/// Shared driver for tangent and adjoint shadowing solves on an index that
/// runs forward in `step` order. `free_dim` is the dimension of the space in
/// which the homogeneous columns live (one less than `M` for flows), and
/// `check_project` keeps the columns of the exponent-sign check in it.
#[allow(clippy::too_many_arguments)]
pub(crate) fn shadow(
    lo: &LinearizedOrbit,
    step: crate::segments::Step<'_>,
    forcing: &[DVector<f64>],
    project: Option<Projector<'_>>,
    check_project: Option<Projector<'_>>,
    start: DVector<f64>,
    mut basis: DMatrix<f64>,
    opts: &ShadowingOptions,
    free_dim: usize,
) -> Result<Solved> {
    let u = opts.unstable_dim;
    if u > free_dim {
        return Err(Error::Configuration(format!(
            "unstable dimension u = {u} exceeds the available dimension {free_dim}"
        )));
    }
    if opts.segment_length == 0 {
        return Err(Error::Configuration("segment length must be at least 1".into()));
    }
    let extra = (u + 1).min(free_dim).min(basis.ncols());
    let dt = lo.time_step();
    let total = lo.steps() as f64 * dt;
    let horizon = SIGN_CHECK_HORIZON / lo.spec.model().nominal_max_exponent().abs().max(0.1);
    let mut growth_rates = Vec::new();
    if total >= horizon && extra > 0 {
        // Renormalizing every step keeps columns with a wide exponent gap
        // apart.
        let check = Recursion {
            len: lo.steps(),
            step,
            forcing: None,
            project: check_project,
            start: DVector::zeros(start.len()),
            basis: basis.columns(0, extra).into_owned(),
            segment_length: 1,
        }
        .run()?;
        growth_rates = check.log_growth().into_iter().map(|g| g / total).collect();
        if u >= 1 && growth_rates[u - 1] <= 0.0 {
            return Err(Error::Configuration(format!(
                "u = {u} but homogeneous solution {u} grows at rate {:.4} <= 0",
                growth_rates[u - 1]
            )));
        }
        if extra > u && growth_rates[u] >= 0.0 {
            return Err(Error::Configuration(format!(
                "u = {u} but homogeneous solution {} grows at rate {:.4} >= 0",
                u + 1,
                growth_rates[u]
            )));
        }
    }
    basis = basis.columns(0, u).into_owned();
    let s = Recursion {
        len: lo.steps(),
        step,
        forcing: Some(forcing),
        project,
        start,
        basis,
        segment_length: opts.segment_length,
    }
    .run()?;
    let log_r_diagonal = s.r.iter().map(|r| r.diagonal().iter().map(|d| d.ln()).collect()).collect();

    let (alpha, min_rcond) = match opts.method {
        ShadowingMethod::TerminalConstraint => s.terminal_coefficients()?,
        ShadowingMethod::LeastSquares => s.least_squares_coefficients()?,
    };
    let (values, removed) = s.assemble(&alpha);
    let constraint_residual = s.constraint_residual(&values);
    Ok(Solved {
        values,
        removed,
        diagnostics: SolveDiagnostics {
            method: opts.method,
            unstable_dim: u,
            segment_length: opts.segment_length,
            segments: s.segments(),
            constraint_residual,
            min_rcond,
            growth_rates,
            log_r_diagonal,
        },
    })
}

pub(crate) fn initial_basis(m: usize, k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_orthonormal(&mut rng, m, k)
}

/// Orthonormal basis of the complement of `d` from random columns.
pub(crate) fn basis_orthogonal_to(d: &DVector<f64>, k: usize, seed: u64) -> DMatrix<f64> {
    if k == 0 {
        return DMatrix::zeros(d.len(), 0);
    }
    let mut w = initial_basis(d.len(), k, seed);
    let dh = d.normalize();
    for mut c in w.column_iter_mut() {
        let p = c.dot(&dh);
        c.axpy(-p, &dh, 1.0);
    }
    qr_positive(&w).0
}

/// Nonintrusive shadowing solve on a map orbit: `v = v' + W a` with the
/// terminal orthogonality constraint or its segmented least-squares form.
pub fn nilss_solve(lo: &LinearizedOrbit, forcing: &[DVector<f64>], opts: &ShadowingOptions) -> Result<ShadowingPair> {
    if lo.spec.kind() != SystemKind::Map {
        return Err(Error::KindMismatch {
            system: lo.spec.name().to_string(),
            expected: "map",
            found: "flow",
        });
    }
    check_forcing(lo, forcing)?;
    let m = lo.dim();
    let step = propagate(lo);
    let basis = initial_basis(m, (opts.unstable_dim + 1).min(m), opts.seed);
    let solved = shadow(lo, &step, forcing, None, None, DVector::zeros(m), basis, opts, m)?;
    Ok(ShadowingPair { v: solved.values, eta: None, diagnostics: solved.diagnostics })
}

/// Checks `|F|` along the orbit and returns the drift.
pub(crate) fn checked_drift(lo: &LinearizedOrbit) -> Result<Vec<DVector<f64>>> {
    let drift = lo.drift();
    for (n, f) in drift.iter().enumerate() {
        let norm = f.norm();
        if !(norm >= DRIFT_FLOOR) {
            return Err(Error::CenterDegeneracy { step: n, norm });
        }
    }
    Ok(drift)
}

/// Nonintrusive shadowing solve on a flow orbit. Every step projects out
/// the flow direction; `u` counts positive exponents only.
pub fn nilss_flow_solve(lo: &LinearizedOrbit, forcing: &[DVector<f64>], opts: &ShadowingOptions) -> Result<ShadowingPair> {
    if lo.spec.kind() != SystemKind::Flow {
        return Err(Error::KindMismatch {
            system: lo.spec.name().to_string(),
            expected: "flow",
            found: "map",
        });
    }
    check_forcing(lo, forcing)?;
    let drift = checked_drift(lo)?;
    let m = lo.dim();
    let dt = lo.time_step();
    let step = propagate(lo);
    let project = |k: usize, z: &mut DVector<f64>| {
        let f = &drift[k];
        let c = f.dot(z) / f.norm_squared();
        z.axpy(-c, f, 1.0);
        c
    };
    let basis = basis_orthogonal_to(&drift[0], (opts.unstable_dim + 1).min(m - 1), opts.seed);
    let solved = shadow(lo, &step, forcing, Some(&project), Some(&project), DVector::zeros(m), basis, opts, m - 1)?;
    let eta = solved.removed.into_iter().map(|c| c / dt).collect();
    Ok(ShadowingPair { v: solved.values, eta: Some(eta), diagnostics: solved.diagnostics })
}

/// Dispatches to [`nilss_solve`] or [`nilss_flow_solve`].
pub fn shadowing_pair(lo: &LinearizedOrbit, forcing: &[DVector<f64>], opts: &ShadowingOptions) -> Result<ShadowingPair> {
    match lo.spec.kind() {
        SystemKind::Map => nilss_solve(lo, forcing, opts),
        SystemKind::Flow => nilss_flow_solve(lo, forcing, opts),
    }
}

/// `max_n |v_{n+1} - A_n v_n - b_n|` for maps; for flows the discretized
/// flow equation `max_n |(v_{n+1} - A_n v_n - b_n) / dt + eta_n F_{n+1}|`.
/// Restricted to steps `n` in `range`.
pub fn tangent_residual(
    lo: &LinearizedOrbit,
    forcing: &[DVector<f64>],
    pair: &ShadowingPair,
    range: std::ops::Range<usize>,
) -> f64 {
    let dt = lo.time_step();
    let drift = pair.eta.as_ref().map(|_| lo.drift());
    range
        .map(|n| {
            let mut r = &pair.v[n + 1] - lo.lin.push(n, &pair.v[n]) - &forcing[n];
            if let (Some(eta), Some(drift)) = (&pair.eta, &drift) {
                r /= dt;
                r.axpy(eta[n], &drift[n + 1], 1.0);
            }
            r.amax()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::by_name;

    fn orbit(name: &str, n: usize, seed: u64) -> LinearizedOrbit {
        let spec = by_name(name).unwrap();
        let spin = spec.default_spinup_steps();
        let o = spec.generate_orbit(None, 0.0, n, spin, seed).unwrap();
        LinearizedOrbit::new(spec, o).unwrap()
    }

    #[test]
    fn doubling_homogeneous_without_rescale_doubles() {
        let lo = orbit("doubling", 10, 1);
        let b = homogeneous_tangent(&lo, &DMatrix::from_element(1, 1, 1.0), 10).unwrap();
        assert_eq!(b.columns[10][(0, 0)], 1024.0);
        assert_eq!(b.unscaled(10)[(0, 0)], 1024.0);
    }

    #[test]
    fn unscaled_undoes_renormalization() {
        let lo = orbit("doubling", 10, 1);
        let b = homogeneous_tangent(&lo, &DMatrix::from_element(1, 1, 1.0), 3).unwrap();
        for n in 0..=10 {
            assert_eq!(b.unscaled(n)[(0, 0)], 2f64.powi(n as i32));
        }
    }

    #[test]
    fn cat_map_growth_rates() {
        let lo = orbit("cat", 2000, 3);
        let b = homogeneous_tangent(&lo, &initial_basis(2, 2, 9), 5).unwrap();
        let g = b.growth_rates(1.0);
        let golden = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        assert!((g[0] - golden).abs() < 1e-3, "{g:?}");
        assert!((g[1] + golden).abs() < 1e-3, "{g:?}");
        for &t in &b.boundaries[1..b.boundaries.len() - 1] {
            let w = &b.columns[t];
            assert!((w.tr_mul(w) - DMatrix::identity(2, 2)).amax() < 1e-12);
        }
    }

    #[test]
    fn conventional_solutions() {
        let lo = orbit("doubling", 40, 2);
        let f = lo.perturbation_forcing();
        let b = inhomogeneous_tangent(&lo, &f).unwrap();
        for n in 0..=40 {
            assert_eq!(b.columns[n][(0, 0)], 2f64.powi(n as i32) - 1.0);
        }
        let lo = orbit("contracting", 60, 2);
        let b = inhomogeneous_tangent(&lo, &lo.perturbation_forcing()).unwrap();
        let v: Vec<f64> = b.columns.iter().map(|c| c[(0, 0)]).collect();
        assert!(v.windows(2).all(|w| w[1] >= w[0]));
        assert!((v[60] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_shadowing_vector_is_minus_one() {
        let lo = orbit("doubling", 100, 4);
        let f = lo.perturbation_forcing();
        let pair = nilss_solve(&lo, &f, &ShadowingOptions::for_orbit(&lo)).unwrap();
        for n in 30..=70 {
            assert!((pair.v[n][0] + 1.0).abs() < 1e-6);
        }
        assert!(pair.v[100][0].abs() < 1e-12);
        assert!(pair.diagnostics.constraint_residual < 1e-10);
        assert!(tangent_residual(&lo, &f, &pair, 0..100) < 1e-12);
    }

    #[test]
    fn contracting_map_needs_no_correction() {
        let lo = orbit("contracting", 100, 4);
        let f = lo.perturbation_forcing();
        let pair = nilss_solve(&lo, &f, &ShadowingOptions::for_orbit(&lo)).unwrap();
        let conventional = inhomogeneous_tangent(&lo, &f).unwrap();
        for n in 0..=100 {
            assert_eq!(pair.v[n][0], conventional.columns[n][(0, 0)]);
        }
        assert!((pair.v[50][0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn wrong_unstable_dimension_is_rejected() {
        let lo = orbit("cat", 400, 4);
        let f = lo.perturbation_forcing();
        for u in [0, 2] {
            let opts = ShadowingOptions::for_orbit(&lo).with_unstable_dim(u);
            assert!(matches!(nilss_solve(&lo, &f, &opts), Err(Error::Configuration(_))), "u={u}");
        }
        let opts = ShadowingOptions::for_orbit(&lo).with_unstable_dim(3);
        assert!(matches!(nilss_solve(&lo, &f, &opts), Err(Error::Configuration(_))));
    }

    #[test]
    fn kind_mismatch() {
        let lo = orbit("cat", 50, 4);
        let f = lo.perturbation_forcing();
        let opts = ShadowingOptions::for_orbit(&lo);
        assert!(matches!(nilss_flow_solve(&lo, &f, &opts), Err(Error::KindMismatch { .. })));
    }

    #[test]
    fn flow_zero_forcing_gives_zero_pair() {
        let lo = orbit("lorenz63", 2000, 5);
        let zero = vec![DVector::zeros(3); lo.steps()];
        let pair = nilss_flow_solve(&lo, &zero, &ShadowingOptions::for_orbit(&lo)).unwrap();
        assert!(pair.v.iter().all(|v| v.amax() == 0.0));
        assert!(pair.eta.unwrap().iter().all(|e| *e == 0.0));
    }
}
