//! Segmented propagation of one particular and `u` homogeneous solutions of
//! a linear recursion `y_{k+1} = A_k y_k + g_k`, with QR renormalization at
//! segment boundaries, and the two ways of fixing the homogeneous
//! coefficients: a terminal orthogonality constraint or a per-segment
//! least-squares fit with continuity across boundaries.
//!
//! The tangent solver runs this forward in time; the adjoint solver runs it
//! on the reversed index.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{min_abs_diagonal, qr_positive, rcond_estimate, solve_pivoted, solve_pivoted_matrix};

/// One step of the homogeneous recursion, `k -> k + 1`.
pub(crate) type Step<'a> = &'a (dyn Fn(usize, &DVector<f64>) -> DVector<f64> + Sync);

/// Removes a component from a value at index `k` in place and returns the
/// removed coefficient.
pub(crate) type Projector<'a> = &'a (dyn Fn(usize, &mut DVector<f64>) -> f64 + Sync);

/// Magnitude above which an unsegmented propagation is reported as overflow.
pub(crate) const MAGNITUDE_CAP: f64 = 1e150;

/// Diagonal entries of `R` below this count as rank collapse.
pub(crate) const COLLAPSE: f64 = 1e-300;

/// Reciprocal condition numbers below this reject a constraint solve.
pub(crate) const MIN_RCOND: f64 = 1e-14;

pub(crate) struct Recursion<'a> {
    pub len: usize,
    pub step: Step<'a>,
    pub forcing: Option<&'a [DVector<f64>]>,
    pub project: Option<Projector<'a>>,
    pub start: DVector<f64>,
    pub basis: DMatrix<f64>,
    pub segment_length: usize,
}

/// Output of [`Recursion::run`]. Index `k` runs over `0..=len`; boundary
/// quantities are stored for `t_1, ..., t_S = len`.
#[derive(Debug, Clone)]
pub(crate) struct Segmented {
    pub boundaries: Vec<usize>,
    pub particular: Vec<DVector<f64>>,
    pub homogeneous: Vec<DMatrix<f64>>,
    pub particular_removed: Vec<f64>,
    pub homogeneous_removed: Vec<DVector<f64>>,
    pub r: Vec<DMatrix<f64>>,
    pub b: Vec<DVector<f64>>,
    pub q_end: DMatrix<f64>,
}

impl Recursion<'_> {
    pub fn run(&self) -> Result<Segmented> {
        let k_cols = self.basis.ncols();
        let dim = self.basis.nrows();
        let seg = self.segment_length.max(1);
        let mut boundaries = vec![0];
        let mut t = 0;
        while t < self.len {
            t = (t + seg).min(self.len);
            boundaries.push(t);
        }

        let mut particular = Vec::with_capacity(self.len + 1);
        let mut homogeneous = Vec::with_capacity(self.len + 1);
        let mut particular_removed = Vec::with_capacity(self.len);
        let mut homogeneous_removed = Vec::with_capacity(self.len);
        let mut r = Vec::with_capacity(boundaries.len() - 1);
        let mut b = Vec::with_capacity(boundaries.len() - 1);

        let mut y = self.start.clone();
        let mut w = self.basis.clone();
        let mut q_end = DMatrix::zeros(dim, k_cols);
        for j in 0..boundaries.len() - 1 {
            let (lo, hi) = (boundaries[j], boundaries[j + 1]);
            for k in lo..hi {
                particular.push(y.clone());
                homogeneous.push(w.clone());
                let mut next = (self.step)(k, &y);
                if let Some(g) = self.forcing {
                    next += &g[k];
                }
                let mut w_next = DMatrix::zeros(dim, k_cols);
                let mut removed = DVector::zeros(k_cols);
                for c in 0..k_cols {
                    let mut col = (self.step)(k, &w.column(c).into_owned());
                    if let Some(p) = self.project {
                        removed[c] = p(k + 1, &mut col);
                    }
                    w_next.set_column(c, &col);
                }
                let coef = match self.project {
                    Some(p) => p(k + 1, &mut next),
                    None => 0.0,
                };
                let size = next.amax();
                if !(size < MAGNITUDE_CAP) {
                    return Err(Error::Overflow { step: k + 1, cap: MAGNITUDE_CAP });
                }
                particular_removed.push(coef);
                homogeneous_removed.push(removed);
                y = next;
                w = w_next;
            }
            let (q, rj) = if k_cols == 0 {
                (DMatrix::zeros(dim, 0), DMatrix::zeros(0, 0))
            } else {
                let (q, rj) = qr_positive(&w);
                let d = min_abs_diagonal(&rj);
                if !(d >= COLLAPSE) {
                    return Err(Error::DegenerateBasis { step: hi, value: d });
                }
                (q, rj)
            };
            let bj = q.tr_mul(&y);
            if hi == self.len {
                particular.push(y.clone());
                homogeneous.push(w.clone());
                q_end = q.clone();
            } else {
                y -= &q * &bj;
                w = q.clone();
            }
            r.push(rj);
            b.push(bj);
        }
        Ok(Segmented {
            boundaries,
            particular,
            homogeneous,
            particular_removed,
            homogeneous_removed,
            r,
            b,
            q_end,
        })
    }
}

impl Segmented {
    pub fn segments(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.q_end.ncols()
    }

    /// Segment containing index `k` (the final index belongs to the last one).
    pub fn segment_of(&self, k: usize) -> usize {
        let s = self.segments();
        match self.boundaries.binary_search(&k) {
            Ok(j) => j.min(s - 1),
            Err(j) => j - 1,
        }
    }

    fn conditioning(&self) -> Result<f64> {
        let mut worst = 1.0f64;
        for (j, rj) in self.r.iter().enumerate() {
            let rc = rcond_estimate(rj);
            if !(rc >= MIN_RCOND) {
                return Err(Error::Conditioning(format!(
                    "renormalization factor at step {} has reciprocal condition {rc:e}",
                    self.boundaries[j + 1]
                )));
            }
            worst = worst.min(rc);
        }
        Ok(worst)
    }

    /// Coefficients with `Q_end^T y_end = 0` at the last index.
    pub fn terminal_coefficients(&self) -> Result<(Vec<DVector<f64>>, f64)> {
        let rcond = self.conditioning()?;
        let s = self.segments();
        let u = self.cols();
        let mut alpha = vec![DVector::zeros(u); s];
        let solve = |m: &DMatrix<f64>, rhs: &DVector<f64>, at: usize| {
            solve_pivoted(m, rhs).ok_or_else(|| {
                Error::Conditioning(format!("singular renormalization factor at step {at}"))
            })
        };
        alpha[s - 1] = solve(&self.r[s - 1], &(-&self.b[s - 1]), self.boundaries[s])?;
        for j in (0..s - 1).rev() {
            alpha[j] = solve(&self.r[j], &(&alpha[j + 1] - &self.b[j]), self.boundaries[j + 1])?;
        }
        Ok((alpha, rcond))
    }

    /// Coefficients minimizing the summed squared norm of the solution subject
    /// to continuity at every interior boundary.
    pub fn least_squares_coefficients(&self) -> Result<(Vec<DVector<f64>>, f64)> {
        let mut rcond = self.conditioning()?;
        let s = self.segments();
        let u = self.cols();
        let mut gram = Vec::with_capacity(s);
        let mut cross = Vec::with_capacity(s);
        for j in 0..s {
            let hi = if j + 1 == s { self.boundaries[s] + 1 } else { self.boundaries[j + 1] };
            let mut c = DMatrix::zeros(u, u);
            let mut d = DVector::zeros(u);
            for k in self.boundaries[j]..hi {
                let w = &self.homogeneous[k];
                c += w.tr_mul(w);
                d += w.tr_mul(&self.particular[k]);
            }
            gram.push(c);
            cross.push(d);
        }
        let singular = |what: &str| Error::Conditioning(format!("singular {what} in least-squares solve"));
        let mut c_inv = Vec::with_capacity(s);
        for c in &gram {
            rcond = rcond.min(rcond_estimate(c));
            c_inv.push(solve_pivoted_matrix(c, &DMatrix::identity(u, u)).ok_or_else(|| singular("Gram matrix"))?);
        }
        let mut alpha = Vec::with_capacity(s);
        if s == 1 {
            alpha.push(-(&c_inv[0] * &cross[0]));
            return Ok((alpha, rcond));
        }

        // Multipliers for the s - 1 continuity conditions form a symmetric
        // block-tridiagonal system; r[j] and b[j] live at boundary j + 1.
        let n = s - 1;
        let mut diag = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        let mut lower = Vec::with_capacity(n);
        let mut rhs = Vec::with_capacity(n);
        for j in 0..n {
            let rc = &self.r[j] * &c_inv[j];
            diag.push(&c_inv[j + 1] + &rc * self.r[j].transpose());
            lower.push(-&rc);
            upper.push(if j + 1 < n {
                -(&c_inv[j + 1] * self.r[j + 1].transpose())
            } else {
                DMatrix::zeros(u, u)
            });
            rhs.push(-(&self.b[j] + &c_inv[j + 1] * &cross[j + 1] - &rc * &cross[j]));
        }
        for j in 1..n {
            let m = solve_pivoted_matrix(&diag[j - 1].transpose(), &lower[j].transpose())
                .ok_or_else(|| singular("Schur block"))?
                .transpose();
            diag[j] = &diag[j] - &m * &upper[j - 1];
            rhs[j] = &rhs[j] - &m * &rhs[j - 1];
        }
        let mut lambda = vec![DVector::zeros(u); n];
        for j in (0..n).rev() {
            rcond = rcond.min(rcond_estimate(&diag[j]));
            let mut g = rhs[j].clone();
            if j + 1 < n {
                g -= &upper[j] * &lambda[j + 1];
            }
            lambda[j] = solve_pivoted(&diag[j], &g).ok_or_else(|| singular("Schur block"))?;
        }
        for j in 0..s {
            let mut g = cross[j].clone();
            if j > 0 {
                g += &lambda[j - 1];
            }
            if j < n {
                g -= self.r[j].tr_mul(&lambda[j]);
            }
            alpha.push(-(&c_inv[j] * g));
        }
        Ok((alpha, rcond))
    }

    /// Solution values and removed coefficients for given segment coefficients.
    pub fn assemble(&self, alpha: &[DVector<f64>]) -> (Vec<DVector<f64>>, Vec<f64>) {
        let len = self.particular.len() - 1;
        let mut values = Vec::with_capacity(len + 1);
        let mut removed = Vec::with_capacity(len);
        for k in 0..=len {
            let a = &alpha[self.segment_of(k)];
            values.push(&self.particular[k] + &self.homogeneous[k] * a);
            if k < len {
                removed.push(self.particular_removed[k] + self.homogeneous_removed[k].dot(a));
            }
        }
        (values, removed)
    }

    /// `max |Q_end^T y_end|` of an assembled solution.
    pub fn constraint_residual(&self, values: &[DVector<f64>]) -> f64 {
        let last = values.last().expect("non-empty solution");
        self.q_end.tr_mul(last).amax()
    }

    /// Per-column `sum_j log R_j,ii`.
    pub fn log_growth(&self) -> Vec<f64> {
        log_growth(&self.r)
    }
}

pub(crate) fn log_growth(r: &[DMatrix<f64>]) -> Vec<f64> {
    let k = r.first().map_or(0, |m| m.nrows());
    (0..k).map(|i| r.iter().map(|m| m[(i, i)].ln()).sum()).collect()
}
