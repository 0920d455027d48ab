//! Small dense linear algebra used by the solvers (dimensions are tiny, M <= 3
//! for the benchmarks).

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Thin QR factorization with a non-negative diagonal in `R`.
///
/// `m` is `M x k` with `k <= M`; returns `Q` (`M x k`, orthonormal columns) and
/// `R` (`k x k`, upper triangular).
pub fn qr_positive(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for i in 0..r.nrows() {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
            q.column_mut(i).neg_mut();
        }
    }
    (q, r)
}

/// Smallest absolute diagonal entry of a square matrix.
pub fn min_abs_diagonal(r: &DMatrix<f64>) -> f64 {
    r.diagonal().iter().fold(f64::INFINITY, |acc, d| acc.min(d.abs()))
}

/// Solves `a x = b` for a small square system with column-pivoted QR.
pub fn solve_pivoted(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if a.nrows() == 0 {
        return Some(DVector::zeros(0));
    }
    let x = a.clone().col_piv_qr().solve(b)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Solves `a X = b` column by column with column-pivoted QR.
pub fn solve_pivoted_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Some(DMatrix::zeros(0, b.ncols()));
    }
    let x = a.clone().col_piv_qr().solve(b)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Reciprocal condition estimate from the pivoted R diagonal (1 = perfect).
pub fn rcond_estimate(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 1.0;
    }
    let r = a.clone().col_piv_qr().r();
    let d: Vec<f64> = r.diagonal().iter().map(|x| x.abs()).collect();
    let max = d.iter().cloned().fold(0.0, f64::max);
    let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        0.0
    } else {
        min / max
    }
}

/// `M x k` matrix with orthonormal columns drawn from uniform entries.
pub fn random_orthonormal<R: Rng + ?Sized>(rng: &mut R, m: usize, k: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, k, |_, _| rng.gen_range(-1.0..1.0));
    qr_positive(&a).0
}

/// Random vector with entries uniform in `[-1, 1)`.
pub fn random_vector<R: Rng + ?Sized>(rng: &mut R, m: usize) -> DVector<f64> {
    DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0))
}

/// Sine of the angle between `x` and the column span of `basis`.
pub fn sin_angle_to_span(x: &DVector<f64>, basis: &DMatrix<f64>) -> f64 {
    let norm = x.norm();
    if norm == 0.0 {
        return 0.0;
    }
    if basis.ncols() == 0 {
        return 1.0;
    }
    let (q, _) = qr_positive(basis);
    let residual = x - &q * (q.transpose() * x);
    residual.norm() / norm
}

/// Relative component of `x` orthogonal to the unit direction of `d`.
pub fn parallel_residual(x: &DVector<f64>, d: &DVector<f64>) -> f64 {
    let (nx, nd) = (x.norm(), d.norm());
    if nx == 0.0 || nd == 0.0 {
        return 0.0;
    }
    let u = d / nd;
    let r = x - &u * u.dot(x);
    r.norm() / nx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn qr_has_positive_diagonal_and_reconstructs() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 3.0, -4.0, 1.0]);
        let (q, r) = qr_positive(&a);
        assert!(r.diagonal().iter().all(|&d| d >= 0.0));
        assert!((&q * &r - &a).norm() < 1e-14);
        assert!((q.transpose() * &q - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn pivoted_solve_matches_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![3.0, 2.0]);
        let x = solve_pivoted(&a, &b).unwrap();
        assert!((x - DVector::from_vec(vec![1.0, 1.0])).norm() < 1e-14);
    }

    #[test]
    fn random_orthonormal_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_orthonormal(&mut rng, 3, 2);
        assert!((q.transpose() * &q - DMatrix::identity(2, 2)).norm() < 1e-14);
    }
}
