//! Dense linear-algebra kernels: thin SVD and minimum-norm least squares,
//! including the real-constrained variant used for the spatial factor.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};
use crate::tensor::{CMatrix, RMatrix, C64};

/// Relative singular-value cutoff for pseudo-inverses.
pub const RCOND: f64 = 1e-12;

/// Thin SVD `M = U · diag(s) · Vᴴ`, singular values sorted nonincreasing.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: CMatrix,
    pub s: DVector<f64>,
    pub v: CMatrix,
}

impl ThinSvd {
    pub fn reconstruct(&self) -> CMatrix {
        let us = CMatrix::from_fn(self.u.nrows(), self.s.len(), |i, j| self.u[(i, j)] * self.s[j]);
        us * self.v.adjoint()
    }
}

fn check_finite_c(m: &CMatrix, what: &str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} has non-finite entries")))
    }
}

fn check_finite_r(m: &RMatrix, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} has non-finite entries")))
    }
}

pub fn thin_svd(m: &CMatrix) -> Result<ThinSvd> {
    check_finite_c(m, "SVD input")?;
    let svd = SVD::new(m.clone(), true, true);
    let u = svd.u.expect("U requested");
    let v_t = svd.v_t.expect("Vᴴ requested");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    Ok(ThinSvd {
        u: CMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]),
        s: DVector::from_iterator(order.len(), order.iter().map(|&j| s[j])),
        v: CMatrix::from_fn(v_t.ncols(), order.len(), |i, j| v_t[(order[j], i)].conj()),
    })
}

fn real_svd_solve(a: &RMatrix, b: &RMatrix) -> RMatrix {
    let svd = SVD::new(a.clone(), true, true);
    let u = svd.u.expect("U requested");
    let v_t = svd.v_t.expect("Vᵀ requested");
    let s = &svd.singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let cutoff = RCOND * smax;
    let mut utb = u.transpose() * b;
    for (i, mut row) in utb.row_iter_mut().enumerate() {
        let si = s[i];
        let inv = if si > cutoff && si > 0.0 { 1.0 / si } else { 0.0 };
        row *= inv;
    }
    v_t.transpose() * utb
}

fn complex_svd_solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let svd = thin_svd(a)?;
    let smax = svd.s.iter().cloned().fold(0.0, f64::max);
    let cutoff = RCOND * smax;
    let mut uhb = svd.u.adjoint() * b;
    for (i, mut row) in uhb.row_iter_mut().enumerate() {
        let si = svd.s[i];
        let inv = if si > cutoff && si > 0.0 { 1.0 / si } else { 0.0 };
        row *= C64::new(inv, 0.0);
    }
    Ok(&svd.v * uhb)
}

/// Minimum-norm solution of `min ‖A·X − B‖_F`.
///
/// With `real_constrained`, X is the exact real minimizer, found by solving
/// the stacked real system `[Re A; Im A]·X = [Re B; Im B]`. The result is then
/// returned with identically zero imaginary parts.
pub fn lstsq(a: &CMatrix, b: &CMatrix, real_constrained: bool) -> Result<CMatrix> {
    if a.nrows() != b.nrows() {
        return Err(Error::invalid(format!(
            "lstsq shape mismatch: A is {:?}, B is {:?}",
            a.shape(),
            b.shape()
        )));
    }
    check_finite_c(a, "lstsq A")?;
    check_finite_c(b, "lstsq B")?;
    if real_constrained {
        let x = lstsq_real(&stack_re_im(a), &stack_re_im(b))?;
        Ok(x.map(|v| C64::new(v, 0.0)))
    } else {
        complex_svd_solve(a, b)
    }
}

/// Minimum-norm solution of a real least-squares problem.
pub fn lstsq_real(a: &RMatrix, b: &RMatrix) -> Result<RMatrix> {
    if a.nrows() != b.nrows() {
        return Err(Error::invalid(format!(
            "lstsq shape mismatch: A is {:?}, B is {:?}",
            a.shape(),
            b.shape()
        )));
    }
    check_finite_r(a, "lstsq A")?;
    check_finite_r(b, "lstsq B")?;
    Ok(real_svd_solve(a, b))
}

/// `[Re M; Im M]` as a real `2r × c` matrix.
pub fn stack_re_im(m: &CMatrix) -> RMatrix {
    let r = m.nrows();
    DMatrix::from_fn(2 * r, m.ncols(), |i, j| if i < r { m[(i, j)].re } else { m[(i - r, j)].im })
}

/// Solves `G·X = B` for a Hermitian positive semidefinite Gram matrix `G`
/// through its pseudo-inverse, so that rank deficiency yields the
/// minimum-norm solution instead of an error.
pub(crate) fn solve_gram(g: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    complex_svd_solve(g, b)
}

/// Real counterpart of [`solve_gram`].
pub(crate) fn solve_gram_real(g: &RMatrix, b: &RMatrix) -> RMatrix {
    real_svd_solve(g, b)
}

/// Orthonormal Procrustes factor `U·Vᴴ` from the thin SVD of `m`: the
/// column-orthonormal matrix maximizing `Re tr(Qᴴ m)`.
pub fn procrustes(m: &CMatrix) -> Result<CMatrix> {
    if m.nrows() > m.ncols() {
        // M = Q·R, and the polar factor of M is Q times that of R.
        check_finite_c(m, "Procrustes input")?;
        let qr = m.clone().qr();
        return Ok(qr.q() * procrustes(&qr.r())?);
    }
    let svd = thin_svd(m)?;
    Ok(&svd.u * svd.v.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_c(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut rng = seeded(seed);
        CMatrix::from_fn(rows, cols, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
    }

    fn max_dev_from_identity(m: &CMatrix) -> f64 {
        let n = m.nrows();
        (m - CMatrix::identity(n, n)).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn svd_of_identity() {
        let svd = thin_svd(&CMatrix::identity(3, 3)).unwrap();
        assert!(svd.s.iter().all(|&s| (s - 1.0).abs() < 1e-14));
        assert!((svd.reconstruct() - CMatrix::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn svd_of_rank_one() {
        let u = random_c(5, 1, 1).normalize();
        let v = random_c(4, 1, 2).normalize();
        let svd = thin_svd(&(&u * v.adjoint())).unwrap();
        assert!((svd.s[0] - 1.0).abs() < 1e-12);
        assert!(svd.s.iter().skip(1).all(|&s| s < 1e-12));
    }

    #[test]
    fn svd_reconstructs_random_matrix() {
        for seed in 0..10 {
            let m = random_c(6, 4, seed);
            let svd = thin_svd(&m).unwrap();
            assert!((svd.reconstruct() - &m).norm() / m.norm() < 1e-12);
            assert!(svd.s.as_slice().windows(2).all(|w| w[0] >= w[1]));
            assert!(max_dev_from_identity(&(svd.u.adjoint() * &svd.u)) < 1e-10);
            assert!(max_dev_from_identity(&(svd.v.adjoint() * &svd.v)) < 1e-10);
        }
    }

    #[test]
    fn svd_wide_matrix_is_thin() {
        let m = random_c(3, 7, 11);
        let svd = thin_svd(&m).unwrap();
        assert_eq!(svd.u.shape(), (3, 3));
        assert_eq!(svd.v.shape(), (7, 3));
        assert!((svd.reconstruct() - &m).norm() / m.norm() < 1e-12);
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut m = random_c(3, 3, 3);
        m[(1, 1)] = C64::new(f64::NAN, 0.0);
        assert!(matches!(thin_svd(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn lstsq_identity_returns_rhs() {
        let b = random_c(4, 3, 5);
        let x = lstsq(&CMatrix::identity(4, 4), &b, false).unwrap();
        assert!((x - b).norm() < 1e-13);
    }

    #[test]
    fn lstsq_real_constrained_drops_imaginary_target() {
        let b = CMatrix::from_element(3, 1, C64::new(0.0, 1.0));
        let x = lstsq(&CMatrix::identity(3, 3), &b, true).unwrap();
        assert!(x.iter().all(|z| *z == C64::new(0.0, 0.0)));
    }

    #[test]
    fn lstsq_matches_normal_equations() {
        let a = random_c(20, 3, 7);
        let b = random_c(20, 2, 8);
        let x = lstsq(&a, &b, false).unwrap();
        // Oracle: (AᴴA) X = Aᴴ B solved by LU.
        let ne = (a.adjoint() * &a).lu().solve(&(a.adjoint() * &b)).unwrap();
        let r_ls = (&a * &x - &b).norm();
        let r_ne = (&a * &ne - &b).norm();
        assert!((r_ls - r_ne).abs() < 1e-10);
        assert!((x - ne).norm() < 1e-10);
    }

    #[test]
    fn lstsq_real_matches_real_normal_equations() {
        let a = random_c(15, 3, 9);
        let b = random_c(15, 2, 10);
        let x = lstsq(&a, &b, true).unwrap();
        assert!(x.iter().all(|z| z.im == 0.0));
        let (ar, br) = (stack_re_im(&a), stack_re_im(&b));
        let ne = (ar.transpose() * &ar).lu().solve(&(ar.transpose() * &br)).unwrap();
        assert!((x.map(|z| z.re) - ne).norm() < 1e-10);
    }

    #[test]
    fn lstsq_rank_deficient_gives_minimum_norm() {
        // Two identical columns: minimum-norm solution splits the weight evenly.
        let col = random_c(6, 1, 12);
        let a = CMatrix::from_fn(6, 2, |i, _| col[(i, 0)]);
        let b = &col * C64::new(2.0, 0.0);
        let x = lstsq(&a, &b, false).unwrap();
        assert!((x[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-10);
        assert!((x[(1, 0)] - C64::new(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn lstsq_shape_mismatch_errors() {
        assert!(lstsq(&random_c(4, 2, 1), &random_c(3, 1, 2), false).is_err());
    }

    #[test]
    fn lstsq_is_locally_optimal() {
        let a = random_c(12, 4, 21);
        let b = random_c(12, 2, 22);
        for real in [false, true] {
            let x = lstsq(&a, &b, real).unwrap();
            let base = (&a * &x - &b).norm_squared();
            let mut rng = seeded(23);
            for _ in 0..100 {
                let dir = CMatrix::from_fn(4, 2, |_, _| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = if real { 0.0 } else { rng.sample(StandardNormal) };
                    C64::new(re, im) * 1e-4
                });
                let perturbed = (&a * (&x + dir) - &b).norm_squared();
                assert!(perturbed >= base - 1e-12);
            }
        }
    }

    #[test]
    fn procrustes_is_orthonormal() {
        let q = procrustes(&random_c(9, 3, 4)).unwrap();
        assert!(max_dev_from_identity(&(q.adjoint() * &q)) < 1e-12);
    }

    #[test]
    fn real_lstsq_overdetermined() {
        let mut rng = seeded(99);
        let a = RMatrix::from_fn(10, 2, |_, _| rng.sample(StandardNormal));
        let truth = RMatrix::from_row_slice(2, 1, &[1.5, -0.5]);
        let x = lstsq_real(&a, &(&a * &truth)).unwrap();
        assert!((x - truth).norm() < 1e-12);
    }
}
