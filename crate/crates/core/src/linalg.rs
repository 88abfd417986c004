//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn is_diagonal(a: &Mat) -> bool {
    a.is_square()
        && (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| i == j || a[(i, j)] == 0.0))
}

/// Matrix exponential. Diagonal inputs are exponentiated entrywise; everything
/// else goes through `nalgebra`'s scaling-and-squaring Padé routine.
pub fn expm(a: &Mat) -> Mat {
    assert!(a.is_square(), "expm of a non-square matrix");
    if is_diagonal(a) {
        let mut out = Mat::zeros(a.nrows(), a.ncols());
        for i in 0..a.nrows() {
            out[(i, i)] = a[(i, i)].exp();
        }
        return out;
    }
    a.clone().exp()
}

/// `exp(tau * a)`.
pub fn expm_scaled(a: &Mat, tau: f64) -> Mat {
    expm(&(a * tau))
}

/// `∫_0^tau exp(r a) dr`, read off the upper-right block of `exp([[a, I], [0, 0]] tau)`.
pub fn integrated_expm(a: &Mat, tau: f64) -> Mat {
    let n = a.nrows();
    if is_diagonal(a) {
        let mut out = Mat::zeros(n, n);
        for i in 0..n {
            let l = a[(i, i)];
            out[(i, i)] = phi1(l * tau) * tau;
        }
        return out;
    }
    let mut aug = Mat::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * tau));
    aug.view_mut((0, n), (n, n)).copy_from(&(Mat::identity(n, n) * tau));
    let e = expm(&aug);
    e.view((0, n), (n, n)).into_owned()
}

/// `(e^x - 1) / x` without cancellation near zero.
pub fn phi1(x: f64) -> f64 {
    if x.abs() < 1e-5 {
        1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0
    } else {
        x.exp_m1() / x
    }
}

/// `∫_0^tau exp(r a) q exp(r a^T) dr` by the augmented-exponential construction:
/// the upper-right block `G` of `exp([[a, q], [0, -a^T]] tau)` satisfies
/// `G exp(a^T tau) = ∫_0^tau exp(u a) q exp(u a^T) du`.
pub fn van_loan_covariance(a: &Mat, q: &Mat, tau: f64) -> Mat {
    let n = a.nrows();
    let mut aug = Mat::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * tau));
    aug.view_mut((0, n), (n, n)).copy_from(&(q * tau));
    aug.view_mut((n, n), (n, n)).copy_from(&(-a.transpose() * tau));
    let e = expm(&aug);
    let g = e.view((0, n), (n, n)).into_owned();
    let f = e.view((0, 0), (n, n)).into_owned();
    symmetrize(&(g * f.transpose()))
}

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// Largest singular value.
pub fn op_norm(a: &Mat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

pub fn min_singular_value(a: &Mat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.min()
}

/// 2-norm condition number; infinite for singular input.
pub fn condition_number(a: &Mat) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let (lo, hi) = (sv.min(), sv.max());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &Mat) -> Vec<f64> {
    let mut ev: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// A factor `L` with `L L^T = cov` for a symmetric positive semidefinite `cov`.
/// Eigenvalues below `rel_tol * max_eigenvalue` are treated as zero.
pub fn psd_factor(cov: &Mat, rel_tol: f64) -> Mat {
    let n = cov.nrows();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let eig = symmetrize(cov).symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(*v));
    let cut = rel_tol * top;
    let mut l = eig.eigenvectors.clone();
    for j in 0..n {
        let lam = eig.eigenvalues[j];
        let s = if lam > cut && lam > 0.0 { lam.sqrt() } else { 0.0 };
        for i in 0..n {
            l[(i, j)] *= s;
        }
    }
    l
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Orthogonal projector onto the column span of `a` (rank-revealing via SVD).
pub fn column_span_projector(a: &Mat) -> Mat {
    let n = a.nrows();
    if a.ncols() == 0 {
        return Mat::zeros(n, n);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("svd u");
    let top = svd.singular_values.max();
    let mut p = Mat::zeros(n, n);
    for (j, s) in svd.singular_values.iter().enumerate() {
        if *s > 1e-12 * top.max(1e-300) {
            let c = u.column(j);
            p += c * c.transpose();
        }
    }
    p
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn diagonal_expm_is_entrywise() {
        let a = Mat::from_diagonal(&Vector::from_vec(vec![-1.0, 0.5]));
        let e = expm(&a);
        assert_relative_eq!(e[(0, 0)], (-1.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(e[(1, 1)], 0.5f64.exp(), epsilon = 1e-15);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn nilpotent_expm() {
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = expm_scaled(&a, 0.7);
        assert_relative_eq!(e[(0, 1)], 0.7, epsilon = 1e-14);
        assert_relative_eq!(e[(0, 0)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn van_loan_matches_kinetic_closed_form() {
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let q = Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let t: f64 = 0.8;
        let c = van_loan_covariance(&a, &q, t);
        assert_relative_eq!(c[(0, 0)], t.powi(3) / 3.0, epsilon = 1e-13);
        assert_relative_eq!(c[(0, 1)], t * t / 2.0, epsilon = 1e-13);
        assert_relative_eq!(c[(1, 1)], t, epsilon = 1e-13);
    }

    #[test]
    fn integrated_expm_nilpotent() {
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let g = integrated_expm(&a, 0.5);
        assert_relative_eq!(g[(0, 0)], 0.5, epsilon = 1e-14);
        assert_relative_eq!(g[(0, 1)], 0.125, epsilon = 1e-14);
        let d = Mat::from_diagonal(&Vector::from_vec(vec![-2.0]));
        let gd = integrated_expm(&d, 0.5);
        assert_relative_eq!(gd[(0, 0)], (1.0 - (-1.0f64).exp()) / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn psd_factor_reproduces_singular_covariance() {
        let c = Mat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let l = psd_factor(&c, 1e-12);
        assert!(max_abs_diff(&(&l * l.transpose()), &c) < 1e-14);
    }
}
