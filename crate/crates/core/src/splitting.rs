//! Lyapunov exponents, covariant Lyapunov vectors and their duals, oblique
//! projections, and the split-propagate expansions of the shadowing vector
//! and covector.
//!
//! CLVs come from a forward QR pass followed by a backward pass on the upper
//! triangular factors. The frame `V_n` (unit columns, descending exponents)
//! is valid between the two convergence buffers; the dual frame is
//! `D_n = V_n^{-1}`, whose rows are the adjoint CLVs `eps^i`.
//!
//! The expansions sum stable parts propagated forward and unstable parts
//! propagated backward:
//!
//! ```text
//! v_n  = sum_{m>=0} A^m P^s X_{n-m} - sum_{m>=1} A^{-m} P^u X_{n+m}
//! nu_n = sum_{m>=0} (A^T)^m P*^s s_{n+m} - sum_{m>=1} (A^{-T})^m P*^u s_{n-m}   [- psi_n eps^c_n]
//! ```
//!
//! with `X_{k+1} = b_k` the step forcing and `s_k` the adjoint sources. Each
//! propagated partial sum is projected again after every step so rounding
//! never seeds the growing directions.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{qr_positive, random_orthonormal};
use crate::par;
use crate::stats::{batch_means, mean, Estimate, DEFAULT_BATCHES};
use crate::systems::{LinearizedOrbit, SystemKind};

/// Exponents below this magnitude may be the flow direction.
pub const CENTER_EXPONENT: f64 = 0.05;

/// Minimum subspace angle (radians) below which a near tangency is flagged.
pub const TANGENCY_ANGLE: f64 = 1e-3;

/// Orbits shorter than this many steps give unreliable exponents.
pub const SHORT_ORBIT: usize = 1000;

/// QR exponents with batch-means standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrum {
    pub exponents: Vec<Estimate>,
    /// Set when the orbit is shorter than [`SHORT_ORBIT`] steps.
    pub short_orbit: bool,
}

impl Spectrum {
    pub fn values(&self) -> Vec<f64> {
        self.exponents.iter().map(|e| e.value).collect()
    }

    pub fn sum(&self) -> f64 {
        self.exponents.iter().map(|e| e.value).sum()
    }
}

struct ForwardPass {
    q: Vec<DMatrix<f64>>,
    r: Vec<DMatrix<f64>>,
    log_r: Vec<Vec<f64>>,
}

fn forward_qr(lo: &LinearizedOrbit, k: usize, seed: u64) -> Result<ForwardPass> {
    let m = lo.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = random_orthonormal(&mut rng, m, k);
    let n = lo.steps();
    let mut qs = Vec::with_capacity(n + 1);
    let mut rs = Vec::with_capacity(n);
    let mut log_r = vec![Vec::with_capacity(n); k];
    for step in 0..n {
        let w = &lo.lin.forward[step] * &q;
        let (q_next, r) = qr_positive(&w);
        for (i, series) in log_r.iter_mut().enumerate() {
            let d = r[(i, i)];
            if !(d >= crate::segments::COLLAPSE) {
                return Err(Error::DegenerateBasis { step: step + 1, value: d });
            }
            series.push(d.ln());
        }
        qs.push(std::mem::replace(&mut q, q_next));
        rs.push(r);
    }
    qs.push(q);
    Ok(ForwardPass { q: qs, r: rs, log_r })
}

fn spectrum_from(log_r: &[Vec<f64>], dt: f64, steps: usize) -> Spectrum {
    let exponents = log_r
        .iter()
        .map(|s| {
            let e = batch_means(s, DEFAULT_BATCHES);
            Estimate { value: e.value / dt, stderr: e.stderr / dt }
        })
        .collect();
    Spectrum { exponents, short_orbit: steps < SHORT_ORBIT }
}

/// The `k` leading Lyapunov exponents by QR renormalization every step.
pub fn lyapunov_exponents(lo: &LinearizedOrbit, k: usize) -> Result<Spectrum> {
    if k == 0 || k > lo.dim() {
        return Err(Error::Configuration(format!("need 1 <= k <= {}, got {k}", lo.dim())));
    }
    let fwd = forward_qr(lo, k, 17)?;
    Ok(spectrum_from(&fwd.log_r, lo.time_step(), lo.steps()))
}

/// Exponents of covector columns pulled back from `x_N` to `x_0`, QR every
/// step; they equal the tangent exponents.
pub fn adjoint_exponents(lo: &LinearizedOrbit, k: usize) -> Result<Spectrum> {
    if k == 0 || k > lo.dim() {
        return Err(Error::Configuration(format!("need 1 <= k <= {}, got {k}", lo.dim())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut q = random_orthonormal(&mut rng, lo.dim(), k);
    let mut log_r = vec![Vec::with_capacity(lo.steps()); k];
    for step in (0..lo.steps()).rev() {
        let (q_next, r) = qr_positive(&(&lo.lin.backward[step] * &q));
        for (i, series) in log_r.iter_mut().enumerate() {
            let d = r[(i, i)];
            if !(d >= crate::segments::COLLAPSE) {
                return Err(Error::DegenerateBasis { step, value: d });
            }
            series.push(d.ln());
        }
        q = q_next;
    }
    Ok(spectrum_from(&log_r, lo.time_step(), lo.steps()))
}

/// Which part of the splitting a projection selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subspace {
    Unstable,
    Center,
    Stable,
}

/// Empirical constants with `|A^{-k}|_{V^u}|, |A^k|_{V^s}| <= C lambda^k`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HyperbolicityConstants {
    pub c: f64,
    /// Per-step contraction factor, `0 < lambda < 1`.
    pub lambda: f64,
}

/// CLVs, their duals and the subspace assignment on the valid part of an
/// orbit.
#[derive(Debug, Clone)]
pub struct SplittingData {
    pub kind: SystemKind,
    pub time_step: f64,
    pub spectrum: Spectrum,
    /// Growth rate of each CLV measured from its own stretching.
    pub clv_exponents: Vec<f64>,
    /// First and last orbit index with a converged frame.
    pub first: usize,
    pub last: usize,
    /// `frames[n - first]`: unit CLVs as columns.
    pub frames: Vec<DMatrix<f64>>,
    /// `duals[n - first]`: adjoint CLVs as rows, `duals * frames = I`.
    pub duals: Vec<DMatrix<f64>>,
    pub unstable: Vec<usize>,
    pub center: Vec<usize>,
    pub stable: Vec<usize>,
    /// Smallest angle between the unstable and the remaining subspaces, and
    /// where it occurs.
    pub min_angle: (usize, f64),
    /// Flows: `F_n` on the valid range.
    pub drift: Option<Vec<DVector<f64>>>,
    /// Flows: largest relative component of the center CLV off the
    /// direction of `F`.
    pub center_misalignment: f64,
    pub constants: HyperbolicityConstants,
}

/// Default convergence buffer in steps: 50 for maps, time 20 for flows.
pub fn default_buffer(lo: &LinearizedOrbit) -> usize {
    match lo.spec.kind() {
        SystemKind::Map => 50,
        SystemKind::Flow => (20.0 / lo.time_step()).round() as usize,
    }
}

/// Computes the full CLV frame with convergence buffers of `buffer` steps
/// at both ends.
pub fn clv(lo: &LinearizedOrbit, buffer: usize) -> Result<SplittingData> {
    let m = lo.dim();
    let n = lo.steps();
    if n < 2 * buffer + 1 {
        return Err(Error::InsufficientLength { needed: 2 * buffer + 1, available: n });
    }
    let dt = lo.time_step();
    let fwd = forward_qr(lo, m, 17)?;
    let spectrum = spectrum_from(&fwd.log_r, dt, n);

    // Backward pass on the triangular factors, starting from the identity.
    let first = buffer;
    let last = n - buffer;
    let mut c = DMatrix::<f64>::identity(m, m);
    let mut coefficients = vec![DMatrix::zeros(m, m); last - first + 1];
    if last == n {
        coefficients[n - first] = c.clone();
    }
    for step in (first..n).rev() {
        let r = &fwd.r[step];
        c = r.clone().solve_upper_triangular(&c).ok_or(Error::DegenerateBasis { step, value: 0.0 })?;
        for mut col in c.column_iter_mut() {
            let norm = col.norm();
            col /= norm;
        }
        if step <= last {
            coefficients[step - first] = c.clone();
        }
    }
    let frames: Vec<DMatrix<f64>> = par::map_indexed(coefficients.len(), |i| {
        let mut v = &fwd.q[first + i] * &coefficients[i];
        for mut col in v.column_iter_mut() {
            let norm = col.norm();
            col /= norm;
        }
        v
    });

    let clv_exponents: Vec<f64> = (0..m)
        .map(|i| {
            let stretch: Vec<f64> = (0..frames.len() - 1)
                .map(|k| (&lo.lin.forward[first + k] * frames[k].column(i)).norm().ln())
                .collect();
            mean(&stretch) / dt
        })
        .collect();

    let mut center_misalignment = 0.0;
    let (unstable, center, stable, drift) = match lo.spec.kind() {
        SystemKind::Map => {
            let unstable: Vec<usize> = (0..m).filter(|&i| clv_exponents[i] > 0.0).collect();
            let stable: Vec<usize> = (0..m).filter(|&i| clv_exponents[i] <= 0.0).collect();
            (unstable, Vec::new(), stable, None)
        }
        SystemKind::Flow => {
            let drift = lo.drift();
            let c = center_index(&frames, &drift[first..=last], &clv_exponents)?;
            // The flow direction is covariant exactly in continuous time,
            // the discrete center CLV only to integrator order.
            center_misalignment = frames
                .iter()
                .zip(&drift[first..=last])
                .map(|(v, f)| crate::linalg::parallel_residual(&v.column(c).into_owned(), f))
                .fold(0.0, f64::max);
            let unstable = (0..m).filter(|&i| i != c && clv_exponents[i] > 0.0).collect();
            let stable = (0..m).filter(|&i| i != c && clv_exponents[i] <= 0.0).collect();
            (unstable, vec![c], stable, Some(drift[first..=last].to_vec()))
        }
    };

    let duals = par::try_map_indexed(frames.len(), |k| {
        frames[k].clone().try_inverse().ok_or(Error::NearTangency { step: first + k, angle: 0.0 })
    })?;
    let angles = par::map_indexed(frames.len(), |k| subspace_angle(&frames[k], &unstable));
    let min_angle = angles
        .iter()
        .enumerate()
        .fold((first, f64::INFINITY), |acc, (k, &a)| if a < acc.1 { (first + k, a) } else { acc });

    let mut data = SplittingData {
        kind: lo.spec.kind(),
        time_step: dt,
        spectrum,
        clv_exponents,
        first,
        last,
        frames,
        duals,
        unstable,
        center,
        stable,
        min_angle,
        drift,
        center_misalignment,
        constants: HyperbolicityConstants { c: 1.0, lambda: 0.0 },
    };
    data.constants = hyperbolicity_constants(lo, &data);
    Ok(data)
}

fn center_index(frames: &[DMatrix<f64>], drift: &[DVector<f64>], exponents: &[f64]) -> Result<usize> {
    let m = exponents.len();
    let alignment: Vec<f64> = (0..m)
        .map(|i| {
            let a: Vec<f64> = frames
                .iter()
                .zip(drift)
                .map(|(v, f)| v.column(i).dot(f).abs() / f.norm())
                .collect();
            mean(&a)
        })
        .collect();
    (0..m)
        .filter(|&i| exponents[i].abs() < CENTER_EXPONENT)
        .max_by(|&a, &b| alignment[a].total_cmp(&alignment[b]))
        .ok_or_else(|| {
            Error::Configuration(format!(
                "no CLV with |exponent| < {CENTER_EXPONENT} to serve as the flow direction: {exponents:?}"
            ))
        })
}

/// Angle between the span of the `unstable` columns and the span of the rest.
fn subspace_angle(frame: &DMatrix<f64>, unstable: &[usize]) -> f64 {
    let m = frame.ncols();
    let rest: Vec<usize> = (0..m).filter(|i| !unstable.contains(i)).collect();
    if unstable.is_empty() || rest.is_empty() {
        return std::f64::consts::FRAC_PI_2;
    }
    let qa = qr_positive(&frame.select_columns(unstable)).0;
    let qb = qr_positive(&frame.select_columns(&rest)).0;
    let s = (qa.transpose() * qb).singular_values();
    let cos = s.iter().cloned().fold(0.0, f64::max).min(1.0);
    cos.acos()
}

/// Largest deviation of the cumulative log stretch of each non-center CLV
/// from a rate at 90% of its exponent, over all windows, gives `C`; the
/// weakest such rate gives `lambda`.
fn hyperbolicity_constants(lo: &LinearizedOrbit, s: &SplittingData) -> HyperbolicityConstants {
    let dt = s.time_step;
    let mut log_c = 0.0f64;
    let mut rate = f64::INFINITY;
    for &i in s.unstable.iter().chain(&s.stable) {
        let lam = 0.9 * s.clv_exponents[i] * dt;
        let sign = if s.unstable.contains(&i) { 1.0 } else { -1.0 };
        rate = rate.min(lam.abs());
        // Unstable: backward contraction over [a, b] is -(cum(b) - cum(a)),
        // bounded by C e^{-lam (b - a)}. Stable: forward, bounded likewise.
        let mut g_min = 0.0f64;
        let mut g = 0.0f64;
        for k in 0..s.frames.len() - 1 {
            let stretch = (&lo.lin.forward[s.first + k] * s.frames[k].column(i)).norm().ln();
            g += sign * (lam - stretch);
            log_c = log_c.max(g - g_min);
            g_min = g_min.min(g);
        }
    }
    HyperbolicityConstants {
        c: log_c.exp(),
        lambda: if rate.is_finite() { (-rate).exp() } else { 0.0 },
    }
}

impl SplittingData {
    pub fn dim(&self) -> usize {
        self.frames[0].nrows()
    }

    fn offset(&self, n: usize) -> Result<usize> {
        if n < self.first || n > self.last {
            return Err(Error::BufferAccess { step: n, lo: self.first, hi: self.last });
        }
        Ok(n - self.first)
    }

    pub fn indices(&self, subspace: Subspace) -> &[usize] {
        match subspace {
            Subspace::Unstable => &self.unstable,
            Subspace::Center => &self.center,
            Subspace::Stable => &self.stable,
        }
    }

    /// Unit CLV frame at step `n`.
    pub fn frame(&self, n: usize) -> Result<&DMatrix<f64>> {
        Ok(&self.frames[self.offset(n)?])
    }

    /// Dual frame at step `n`; row `i` is `eps^i`.
    pub fn dual(&self, n: usize) -> Result<&DMatrix<f64>> {
        Ok(&self.duals[self.offset(n)?])
    }

    /// Flows: the center dual normalized by `eps^c(F) = 1`.
    pub fn center_covector(&self, n: usize) -> Result<DVector<f64>> {
        let k = self.offset(n)?;
        let (c, drift) = match (self.center.first(), &self.drift) {
            (Some(&c), Some(drift)) => (c, drift),
            _ => return Err(Error::KindMismatch { system: "splitting".into(), expected: "flow", found: "map" }),
        };
        let eps = self.duals[k].row(c).transpose();
        let scale = eps.dot(&drift[k]);
        Ok(eps / scale)
    }

    /// Oblique projection `P w` onto a subspace along the others.
    pub fn project(&self, n: usize, w: &DVector<f64>, subspace: Subspace) -> Result<DVector<f64>> {
        let k = self.offset(n)?;
        Ok(self.project_at(k, w, self.indices(subspace)))
    }

    /// Adjoint projection `P* eta`, with `(P* eta)(w) = eta(P w)`.
    pub fn project_covector(&self, n: usize, eta: &DVector<f64>, subspace: Subspace) -> Result<DVector<f64>> {
        let k = self.offset(n)?;
        Ok(self.project_covector_at(k, eta, self.indices(subspace)))
    }

    fn project_at(&self, k: usize, w: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
        let (v, d) = (&self.frames[k], &self.duals[k]);
        let mut out = DVector::zeros(w.len());
        for &i in idx {
            out.axpy(d.row(i).dot(&w.transpose()), &v.column(i), 1.0);
        }
        out
    }

    fn project_covector_at(&self, k: usize, eta: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
        let (v, d) = (&self.frames[k], &self.duals[k]);
        let mut out = DVector::zeros(eta.len());
        for &i in idx {
            out.axpy(v.column(i).dot(eta), &d.row(i).transpose(), 1.0);
        }
        out
    }

    /// `max_n` relative residual of `A_n e^i_n` against the direction of
    /// `e^i_{n+1}` over the valid range.
    pub fn covariance_residual(&self, lo: &LinearizedOrbit) -> f64 {
        let r = par::map_indexed(self.frames.len() - 1, |k| {
            let (a, b) = (&self.frames[k], &self.frames[k + 1]);
            (0..a.ncols())
                .map(|i| crate::linalg::parallel_residual(&(&lo.lin.forward[self.first + k] * a.column(i)), &b.column(i).into_owned()))
                .fold(0.0, f64::max)
        });
        r.into_iter().fold(0.0, f64::max)
    }

    /// `max_n` relative residual of `A_n^T eps^i_{n+1}` against the direction
    /// of `eps^i_n`.
    pub fn adjoint_covariance_residual(&self, lo: &LinearizedOrbit) -> f64 {
        let r = par::map_indexed(self.duals.len() - 1, |k| {
            let (a, b) = (&self.duals[k], &self.duals[k + 1]);
            (0..a.nrows())
                .map(|i| {
                    let pulled = &lo.lin.backward[self.first + k] * b.row(i).transpose();
                    crate::linalg::parallel_residual(&pulled, &a.row(i).transpose())
                })
                .fold(0.0, f64::max)
        });
        r.into_iter().fold(0.0, f64::max)
    }

    /// `max_n |D_n V_n - I|`.
    pub fn biorthogonality_defect(&self) -> f64 {
        let m = self.dim();
        self.frames
            .iter()
            .zip(&self.duals)
            .map(|(v, d)| (d * v - DMatrix::identity(m, m)).amax())
            .fold(0.0, f64::max)
    }

    /// Evaluation points whose expansion windows of `n_max` steps fit in the
    /// valid range, every `stride` steps.
    pub fn expansion_points(&self, n_max: usize, stride: usize) -> Vec<usize> {
        let lo = self.first + n_max;
        let hi = self.last.saturating_sub(n_max);
        if lo > hi {
            return Vec::new();
        }
        (lo..=hi).step_by(stride.max(1)).collect()
    }

    fn check_window(&self, points: &[usize], n_max: usize) -> Result<()> {
        for &n in points {
            if n < self.first + n_max || n + n_max > self.last {
                return Err(Error::InsufficientLength {
                    needed: n_max,
                    available: (n - self.first.min(n)).min(self.last.saturating_sub(n)),
                });
            }
        }
        Ok(())
    }

    /// Tail bound `C lambda^{n_max + 1} / (1 - lambda)` of either expansion,
    /// per unit size of the forcing.
    pub fn truncation_bound(&self, n_max: usize) -> f64 {
        let HyperbolicityConstants { c, lambda } = self.constants;
        if lambda >= 1.0 {
            return f64::INFINITY;
        }
        c * lambda.powi(n_max as i32 + 1) / (1.0 - lambda)
    }
}

/// Truncated expansion of the shadowing vector at selected orbit points.
#[derive(Debug, Clone)]
pub struct ExpandedVector {
    pub points: Vec<usize>,
    pub v: Vec<DVector<f64>>,
    /// Flows: time dilation `eta_n` of the step `n -> n + 1`, from `P^c X_{n+1}`.
    pub eta: Option<Vec<f64>>,
    /// Tail bound times `max |X|`.
    pub truncation_bound: f64,
}

/// Truncated expansion of the shadowing covector at selected orbit points.
#[derive(Debug, Clone)]
pub struct ExpandedCovector {
    pub points: Vec<usize>,
    pub nu: Vec<DVector<f64>>,
    pub truncation_bound: f64,
}

/// Split-propagate expansion of the bounded tangent solution with forcing
/// `b_n` (so `X_{n+1} = b_n`) at `points`, summing `n_max` terms each way.
pub fn expand_shadowing_vector(
    lo: &LinearizedOrbit,
    split: &SplittingData,
    forcing: &[DVector<f64>],
    n_max: usize,
    points: &[usize],
) -> Result<ExpandedVector> {
    split.check_window(points, n_max)?;
    if forcing.len() != lo.steps() {
        return Err(Error::LengthMismatch { expected: lo.steps(), found: forcing.len() });
    }
    let (us, ss) = (&split.unstable, &split.stable);
    let x = |k: usize| &forcing[k - 1];
    let f = split.first;
    let v = par::try_map_indexed(points.len(), |i| -> Result<DVector<f64>> {
        let n = points[i];
        let mut stable = split.project_at(n - n_max - f, x(n - n_max), ss);
        for k in n - n_max + 1..=n {
            let pushed = lo.lin.push(k - 1, &stable) + x(k);
            stable = split.project_at(k - f, &pushed, ss);
        }
        let mut unstable = split.project_at(n + n_max - f, x(n + n_max), us);
        for k in (n..n + n_max).rev() {
            let a = &lo.lin.forward[k];
            let pulled = a.clone().lu().solve(&unstable).ok_or(Error::DegenerateBasis { step: k, value: 0.0 })?;
            let pulled = if k > n { pulled + x(k) } else { pulled };
            unstable = split.project_at(k - f, &pulled, us);
        }
        Ok(stable - unstable)
    })?;
    let eta = match (split.kind, split.center.first()) {
        (SystemKind::Flow, Some(_)) => {
            let dt = lo.time_step();
            Some(
                points
                    .iter()
                    .map(|&n| Ok(split.center_covector(n + 1)?.dot(&forcing[n]) / dt))
                    .collect::<Result<Vec<f64>>>()?,
            )
        }
        _ => None,
    };
    let size = forcing.iter().map(|b| b.norm()).fold(0.0, f64::max);
    Ok(ExpandedVector {
        points: points.to_vec(),
        v,
        eta,
        truncation_bound: size * split.truncation_bound(n_max),
    })
}

/// Split-propagate expansion of the bounded adjoint solution with sources
/// `s_n` at `points`. For flows `psi` supplies the center term `-psi eps^c`.
pub fn expand_shadowing_covector(
    lo: &LinearizedOrbit,
    split: &SplittingData,
    sources: &[DVector<f64>],
    psi: Option<&[f64]>,
    n_max: usize,
    points: &[usize],
) -> Result<ExpandedCovector> {
    split.check_window(points, n_max)?;
    if sources.len() != lo.steps() {
        return Err(Error::LengthMismatch { expected: lo.steps(), found: sources.len() });
    }
    let (us, ss) = (&split.unstable, &split.stable);
    let f = split.first;
    let nu = par::try_map_indexed(points.len(), |i| -> Result<DVector<f64>> {
        let n = points[i];
        let mut stable = split.project_covector_at(n + n_max - f, &sources[n + n_max], ss);
        for k in (n..n + n_max).rev() {
            let pulled = lo.lin.pull(k, &stable) + &sources[k];
            stable = split.project_covector_at(k - f, &pulled, ss);
        }
        let mut unstable = split.project_covector_at(n - n_max - f, &sources[n - n_max], us);
        for k in n - n_max..n {
            let at = &lo.lin.backward[k];
            let pushed = at.clone().lu().solve(&unstable).ok_or(Error::DegenerateBasis { step: k, value: 0.0 })?;
            let pushed = if k + 1 < n { pushed + &sources[k + 1] } else { pushed };
            unstable = split.project_covector_at(k + 1 - f, &pushed, us);
        }
        let mut nu = stable - unstable;
        if let (Some(psi), SystemKind::Flow) = (psi, split.kind) {
            nu.axpy(-psi[n], &split.center_covector(n)?, 1.0);
        }
        Ok(nu)
    })?;
    let size = sources.iter().map(|s| s.norm()).fold(0.0, f64::max);
    Ok(ExpandedCovector { points: points.to_vec(), nu, truncation_bound: size * split.truncation_bound(n_max) })
}

/// Sine of the angle between a covector pulled back `steps` times from a
/// random start at `x_end` and the span of the unstable duals at the end
/// point.
pub fn pullback_alignment(lo: &LinearizedOrbit, split: &SplittingData, end: usize, steps: usize, seed: u64) -> Result<f64> {
    let n = end.checked_sub(steps).ok_or(Error::InsufficientLength { needed: steps, available: end })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eta = crate::linalg::random_vector(&mut rng, lo.dim());
    for k in (n..end).rev() {
        eta = lo.lin.pull(k, &eta);
        eta /= eta.norm();
    }
    let d = split.dual(n)?;
    let rows: Vec<usize> = split.unstable.clone();
    let basis = d.select_rows(&rows).transpose();
    Ok(crate::linalg::sin_angle_to_span(&eta, &basis))
}
