//! Dense real-matrix primitives used by every other module: pseudoinverses,
//! complement projectors, definiteness tests, matrix square roots, inertia
//! and singular-value extremes.
//!
//! Conventions:
//! * Full rank is declared when `σ_min > 1e-9 · max(1, σ_max)`.
//! * Symmetric inputs are symmetrized as `(M + Mᵀ)/2` before use; asymmetry
//!   beyond `1e-8 · ‖M‖_max` is an error.
//!
//! All functions are pure; concurrent use is unrestricted.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{cast, fabs, fmax, fsqrt, Scalar};

/// Relative singular-value threshold below which a matrix is declared rank
/// deficient.
pub const RANK_REL_TOL: f64 = 1e-9;

/// Relative asymmetry (against `‖M‖_max`) tolerated in symmetric inputs.
pub const SYM_REL_TOL: f64 = 1e-8;

/// Largest entry in absolute value, `‖M‖_max`.
pub fn max_abs<S: Scalar>(m: &DMatrix<S>) -> S {
    m.iter().fold(S::zero(), |acc, &v| fmax(acc, fabs(v)))
}

/// `(M + Mᵀ)/2` without any asymmetry check.
pub fn symmetrize<S: Scalar>(m: &DMatrix<S>) -> DMatrix<S> {
    let half = cast::<S>(0.5);
    (m + m.transpose()) * half
}

/// Validates that `m` is square and symmetric up to [`SYM_REL_TOL`], then
/// returns the exactly symmetrized copy.
pub fn require_symmetric<S: Scalar>(m: &DMatrix<S>) -> Result<DMatrix<S>> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSymmetric(format!(
            "matrix is {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = max_abs(&(m - m.transpose()));
    let scale = max_abs(m);
    if asym > cast::<S>(SYM_REL_TOL) * scale {
        return Err(Error::NotSymmetric(format!(
            "asymmetry {:.3e} exceeds tolerance for scale {:.3e}",
            crate::scalar::to_f64(asym),
            crate::scalar::to_f64(scale)
        )));
    }
    Ok(symmetrize(m))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues<S: Scalar>(m: &DMatrix<S>) -> Result<DVector<S>> {
    let sym = require_symmetric(m)?;
    let mut ev: Vec<S> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(DVector::from_vec(ev))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eig_sym<S: Scalar>(m: &DMatrix<S>) -> Result<S> {
    let ev = sym_eigenvalues(m)?;
    Ok(ev[0])
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eig_sym<S: Scalar>(m: &DMatrix<S>) -> Result<S> {
    let ev = sym_eigenvalues(m)?;
    Ok(ev[ev.len() - 1])
}

/// Left Moore-Penrose inverse `G = X†` of a matrix with full column rank,
/// computed from a rank-revealing singular value decomposition so that
/// `GX = I`.
pub fn left_pinv<S: Scalar>(x: &DMatrix<S>) -> Result<DMatrix<S>> {
    let (n, m) = (x.nrows(), x.ncols());
    if m > n {
        return Err(Error::RankDeficient(format!(
            "{}x{} matrix cannot have full column rank",
            n, m
        )));
    }
    if m == 0 {
        return Ok(DMatrix::zeros(0, n));
    }
    let svd = x.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.iter().fold(S::zero(), |a, &b| fmax(a, b));
    let tol = cast::<S>(RANK_REL_TOL) * fmax(S::one(), smax);
    let smin = sv.iter().fold(smax, |a, &b| crate::scalar::fmin(a, b));
    if smin <= tol {
        return Err(Error::RankDeficient(format!(
            "sigma_min {:.3e} below threshold {:.3e}",
            crate::scalar::to_f64(smin),
            crate::scalar::to_f64(tol)
        )));
    }
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    // G = V Σ⁻¹ Uᵀ
    let mut sinv_ut = u.transpose();
    for i in 0..m {
        let inv = S::one() / sv[i];
        for j in 0..n {
            sinv_ut[(i, j)] *= inv;
        }
    }
    Ok(v_t.transpose() * sinv_ut)
}

/// Right Moore-Penrose inverse of a matrix with full row rank (`EE† = I`).
pub fn right_pinv<S: Scalar>(x: &DMatrix<S>) -> Result<DMatrix<S>> {
    Ok(left_pinv(&x.transpose())?.transpose())
}

/// Projector `G₀ = I − XG` onto the complement of the column space of `X`,
/// given a left inverse `G` with `GX = I`.
pub fn complement_projector<S: Scalar>(x: &DMatrix<S>, g: &DMatrix<S>) -> Result<DMatrix<S>> {
    let (n, m) = (x.nrows(), x.ncols());
    if g.nrows() != m || g.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "left inverse must be {}x{}, got {}x{}",
            m,
            n,
            g.nrows(),
            g.ncols()
        )));
    }
    let resid = max_abs(&(g * x - DMatrix::<S>::identity(m, m)));
    if resid > cast::<S>(1e-8) {
        return Err(Error::InconsistentInverse(format!(
            "max |GX - I| = {:.3e}",
            crate::scalar::to_f64(resid)
        )));
    }
    Ok(DMatrix::identity(n, n) - x * g)
}

/// Symmetric positive semidefinite square root. Eigenvalues in `[-tol, 0)`
/// are clipped to zero; an eigenvalue below `-tol` is an error.
pub fn psd_sqrt<S: Scalar>(m: &DMatrix<S>, tol: S) -> Result<DMatrix<S>> {
    let sym = require_symmetric(m)?;
    let eig = sym.symmetric_eigen();
    let mut lambda = eig.eigenvalues;
    for v in lambda.iter_mut() {
        if *v < -tol {
            return Err(Error::NotPsd(format!(
                "eigenvalue {:.3e} below -{:.3e}",
                crate::scalar::to_f64(*v),
                crate::scalar::to_f64(tol)
            )));
        }
        *v = fsqrt(fmax(*v, S::zero()));
    }
    let d = lambda.len();
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..d {
        for i in 0..d {
            scaled[(i, j)] *= lambda[j];
        }
    }
    Ok(symmetrize(&(scaled * eig.eigenvectors.transpose())))
}

/// Counts of eigenvalues below `-tol`, within `±tol` and above `tol`.
pub fn inertia<S: Scalar>(m: &DMatrix<S>, tol: S) -> Result<(usize, usize, usize)> {
    let ev = sym_eigenvalues(m)?;
    let mut counts = (0usize, 0usize, 0usize);
    for &v in ev.iter() {
        if v < -tol {
            counts.0 += 1;
        } else if v > tol {
            counts.2 += 1;
        } else {
            counts.1 += 1;
        }
    }
    Ok(counts)
}

/// `(σ_min, σ_max)` over the `min(rows, cols)` singular values.
pub fn extremal_singular_values<S: Scalar>(m: &DMatrix<S>) -> (S, S) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (S::zero(), S::zero());
    }
    let sv = m.clone().singular_values();
    let mut lo = sv[0];
    let mut hi = sv[0];
    for &v in sv.iter() {
        lo = crate::scalar::fmin(lo, v);
        hi = fmax(hi, v);
    }
    (lo, hi)
}

/// Largest singular value.
pub fn sigma_max<S: Scalar>(m: &DMatrix<S>) -> S {
    extremal_singular_values(m).1
}

/// Whether the symmetric matrix is positive definite (Cholesky succeeds).
pub fn is_pd<S: Scalar>(m: &DMatrix<S>) -> bool {
    m.nrows() == m.ncols() && m.clone().cholesky().is_some()
}
