//! Data-driven prior construction.
//!
//! Stacks per-sample disturbance bounds into one combined bound (with the
//! conservative per-block weight `N·R`), writes the stacked consistency set
//! in the dual orientation, and dualizes it into a bounded primal prior that
//! contains every parameter consistent with all samples simultaneously.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matops;
use crate::qmi::{Orientation, Qmi};
use crate::reparam::RegressionSample;
use crate::scalar::{cast, fmax, Scalar};

/// Horizontally stacked samples sharing dimensions and disturbance bounds.
/// The combined disturbance bound uses `diag(−Q, NR, …, NR)`; it holds
/// whenever every per-sample bound holds, at the cost of some conservatism.
#[derive(Debug, Clone)]
pub struct StackedSample<S: Scalar> {
    x_st: DMatrix<S>,
    y_st: DMatrix<S>,
    q: DMatrix<S>,
    r: DMatrix<S>,
    n_samples: usize,
    m: usize,
}

impl<S: Scalar> StackedSample<S> {
    pub fn x_st(&self) -> &DMatrix<S> {
        &self.x_st
    }

    pub fn y_st(&self) -> &DMatrix<S> {
        &self.y_st
    }

    pub fn q(&self) -> &DMatrix<S> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<S> {
        &self.r
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Block-diagonal combined weight `diag(NR, …, NR)`.
    pub fn combined_weight(&self) -> DMatrix<S> {
        let n = self.n_samples;
        let m = self.m;
        let scaled = &self.r * cast::<S>(n as f64);
        let mut big = DMatrix::zeros(n * m, n * m);
        for k in 0..n {
            big.view_mut((k * m, k * m), (m, m)).copy_from(&scaled);
        }
        big
    }

    /// The combined disturbance bound as a primal description over the
    /// stacked disturbance `[W₁ … W_N]`.
    pub fn disturbance_qmi(&self) -> Result<Qmi<S>> {
        let p = self.q.nrows();
        let cols = self.n_samples * self.m;
        let mut pi = DMatrix::zeros(p + cols, p + cols);
        pi.view_mut((0, 0), (p, p)).copy_from(&(-&self.q));
        pi.view_mut((p, p), (cols, cols))
            .copy_from(&self.combined_weight());
        Qmi::primal(p, cols, pi)
    }
}

/// Horizontally concatenates samples that share `(n, m, p, Q, R)`.
pub fn stack_samples<S: Scalar>(samples: &[RegressionSample<S>]) -> Result<StackedSample<S>> {
    let first = samples
        .first()
        .ok_or(Error::HeterogeneousSamples)?;
    let (p, n, m) = (first.p(), first.n(), first.m());
    for s in samples {
        if s.p() != p
            || s.n() != n
            || s.m() != m
            || matops::max_abs(&(s.q() - first.q())) > S::zero()
            || matops::max_abs(&(s.r() - first.r())) > S::zero()
        {
            return Err(Error::HeterogeneousSamples);
        }
    }
    let count = samples.len();
    let mut x_st = DMatrix::zeros(n, count * m);
    let mut y_st = DMatrix::zeros(p, count * m);
    for (k, s) in samples.iter().enumerate() {
        x_st.view_mut((0, k * m), (n, m)).copy_from(s.x());
        y_st.view_mut((0, k * m), (p, m)).copy_from(s.y());
    }
    Ok(StackedSample {
        x_st,
        y_st,
        q: first.q().clone(),
        r: first.r().clone(),
        n_samples: count,
        m,
    })
}

/// The stacked consistency set in dual orientation: members are `θᵀ` for
/// every θ compatible with the combined bound. Written with the identity
/// block leading this is
/// `[I; θᵀ]ᵀ [[−Q⁻¹ + Y R_c⁻¹ Yᵀ, −Y R_c⁻¹ Xᵀ], [−X R_c⁻¹ Yᵀ, X R_c⁻¹ Xᵀ]] [I; θᵀ] ≺ 0`
/// with `R_c = diag(NR, …, NR)`; the stored matrix is the member-leading
/// equivalent. Weights on the boundary of definiteness are regularized by a
/// relative `1e-9` shift.
pub fn consistency_set_dual<S: Scalar>(st: &StackedSample<S>) -> Result<Qmi<S>> {
    let p = st.q.nrows();
    let n = st.x_st.nrows();
    let q_reg = regularize_pd(&st.q, "disturbance weight Q")?;
    let r_reg = regularize_pd(&st.r, "disturbance weight R")?;
    let q_inv = q_reg
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularWeight("Q".into()))?
        .inverse();
    let r_inv = r_reg
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularWeight("R".into()))?
        .inverse();

    // Accumulate Y R_c⁻¹ Yᵀ etc. per block: R_c⁻¹ = diag((NR)⁻¹, …).
    let m = st.m;
    let count = st.n_samples;
    let inv_n = S::one() / cast::<S>(count as f64);
    let mut m_yy = DMatrix::zeros(p, p);
    let mut m_xy = DMatrix::zeros(n, p);
    let mut m_xx = DMatrix::zeros(n, n);
    for k in 0..count {
        let xk = st.x_st.view((0, k * m), (n, m));
        let yk = st.y_st.view((0, k * m), (p, m));
        let xr = xk * &r_inv;
        m_yy += yk * &r_inv * yk.transpose() * inv_n;
        m_xy += &xr * yk.transpose() * inv_n;
        m_xx += xr * xk.transpose() * inv_n;
    }

    let mut pi = DMatrix::zeros(n + p, n + p);
    pi.view_mut((0, 0), (n, n)).copy_from(&(-&m_xx));
    pi.view_mut((0, n), (n, p)).copy_from(&m_xy);
    pi.view_mut((n, 0), (p, n)).copy_from(&m_xy.transpose());
    pi.view_mut((n, n), (p, p)).copy_from(&(q_inv - m_yy));
    Qmi::dual(n, p, pi)
}

fn regularize_pd<S: Scalar>(m: &DMatrix<S>, what: &str) -> Result<DMatrix<S>> {
    if matops::is_pd(m) {
        return Ok(m.clone());
    }
    let shift = cast::<S>(1e-9) * fmax(S::one(), matops::max_abs(m));
    let shifted = m + DMatrix::identity(m.nrows(), m.ncols()) * shift;
    if matops::is_pd(&shifted) {
        Ok(shifted)
    } else {
        Err(Error::SingularWeight(what.into()))
    }
}

/// Bounded primal prior containing every parameter consistent with all
/// samples simultaneously: the dualization of the stacked consistency set.
/// Requires the stacked regressor to have full row rank.
pub fn prior_from_data<S: Scalar>(samples: &[RegressionSample<S>]) -> Result<Qmi<S>> {
    let st = stack_samples(samples)?;
    let n = st.x_st.nrows();
    let (lo, hi) = matops::extremal_singular_values(&st.x_st);
    if lo <= cast::<S>(1e-9) * fmax(S::one(), hi) {
        return Err(Error::RankDeficient(format!(
            "stacked regressor must have full row rank {n}"
        )));
    }
    let dual = consistency_set_dual(&st)?;
    let primal = dual.dualize()?;
    debug_assert_eq!(primal.orientation(), Orientation::Primal);
    Ok(primal)
}
