//! Discrete-time state-space analysis: stability, H∞ norms, error-system
//! interconnection and sampling of ellipsoidal matrix sets.
//!
//! The H∞ norm is computed twice: a bisection on the discrete bounded-real
//! LMI (certified upper estimate) cross-checked against a 512-point frequency
//! grid with local refinement (lower estimate); the larger of the two is
//! returned. The initial bracket is `[max(σ_max(D), DC gain), 1.5 × grid]`,
//! expanded until feasible, and the bisection terminates at relative width
//! `1e-6`.

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matops;
use crate::qmi::Qmi;
use crate::scalar::{cast, fmax, fmin, to_f64, Scalar};
use crate::sdp::{self, LmiExpr, LmiProblem, SolveStatus, SolverSettings};

/// Discrete-time LTI system `x⁺ = Ax + Bu`, `y = Cx + Du` (unit sample time).
#[derive(Debug, Clone)]
pub struct StateSpace<S: Scalar> {
    pub a: DMatrix<S>,
    pub b: DMatrix<S>,
    pub c: DMatrix<S>,
    pub d: DMatrix<S>,
}

impl<S: Scalar> StateSpace<S> {
    pub fn new(a: DMatrix<S>, b: DMatrix<S>, c: DMatrix<S>, d: DMatrix<S>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch("state matrix must be square".into()));
        }
        if b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "inconsistent state-space dimensions: A {}x{}, B {}x{}, C {}x{}, D {}x{}",
                n,
                n,
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn num_outputs(&self) -> usize {
        self.c.nrows()
    }
}

/// LTI estimator `x̂⁺ = A_E x̂ + B_E y`, `ẑ = C_E x̂ + D_E y`.
#[derive(Debug, Clone)]
pub struct Estimator<S: Scalar> {
    pub a_e: DMatrix<S>,
    pub b_e: DMatrix<S>,
    pub c_e: DMatrix<S>,
    pub d_e: DMatrix<S>,
}

impl<S: Scalar> Estimator<S> {
    pub fn new(
        a_e: DMatrix<S>,
        b_e: DMatrix<S>,
        c_e: DMatrix<S>,
        d_e: DMatrix<S>,
    ) -> Result<Self> {
        let n = a_e.nrows();
        if a_e.ncols() != n
            || b_e.nrows() != n
            || c_e.ncols() != n
            || d_e.nrows() != c_e.nrows()
            || d_e.ncols() != b_e.ncols()
        {
            return Err(Error::DimensionMismatch(
                "inconsistent estimator dimensions".into(),
            ));
        }
        Ok(Self { a_e, b_e, c_e, d_e })
    }

    pub fn order(&self) -> usize {
        self.a_e.nrows()
    }
}

/// The unknown row blocks of a plant realization: `x⁺ = Ax + B_p w_p`,
/// `y = C_y x + D_yp w_p`.
#[derive(Debug, Clone)]
pub struct PlantMatrices<S: Scalar> {
    pub a: DMatrix<S>,
    pub bp: DMatrix<S>,
    pub cy: DMatrix<S>,
    pub dyp: DMatrix<S>,
}

/// Largest eigenvalue magnitude.
pub fn spectral_radius<S: Scalar>(a: &DMatrix<S>) -> Result<S> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch("matrix must be square".into()));
    }
    if a.nrows() == 0 {
        return Ok(S::zero());
    }
    let eig = a.complex_eigenvalues();
    Ok(eig
        .iter()
        .map(|z| z.norm())
        .fold(S::zero(), fmax))
}

/// Gain `σ_max(C (e^{jω}I − A)⁻¹ B + D)` at one frequency.
pub fn frequency_gain<S: Scalar>(sys: &StateSpace<S>, omega: S) -> S {
    let n = sys.order();
    if n == 0 {
        return matops::sigma_max(&sys.d);
    }
    let z = Complex::new(num_traits::Float::cos(omega), num_traits::Float::sin(omega));
    let mut zi_a = DMatrix::<Complex<S>>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            zi_a[(i, j)] = Complex::new(-sys.a[(i, j)], S::zero());
        }
        zi_a[(i, i)] += z;
    }
    let b_c = sys.b.map(|v| Complex::new(v, S::zero()));
    let sol = match zi_a.lu().solve(&b_c) {
        Some(x) => x,
        None => return cast::<S>(f64::INFINITY),
    };
    let mut h = sys.c.map(|v| Complex::new(v, S::zero())) * sol;
    for i in 0..h.nrows() {
        for j in 0..h.ncols() {
            h[(i, j)] += Complex::new(sys.d[(i, j)], S::zero());
        }
    }
    let sv = h.singular_values();
    sv.iter().fold(S::zero(), |acc, &v| fmax(acc, v))
}

/// Frequency-grid estimate: 512 points on `[0, π]` plus golden-section
/// refinement around the best local maxima.
fn grid_estimate<S: Scalar>(sys: &StateSpace<S>) -> S {
    const POINTS: usize = 512;
    let pi = cast::<S>(std::f64::consts::PI);
    let step = pi / cast::<S>((POINTS - 1) as f64);
    let gains: Vec<S> = (0..POINTS)
        .map(|k| frequency_gain(sys, step * cast::<S>(k as f64)))
        .collect();
    let mut best = S::zero();
    // Indices of the three largest samples.
    let mut order: Vec<usize> = (0..POINTS).collect();
    order.sort_by(|&i, &j| gains[j].partial_cmp(&gains[i]).unwrap());
    for &idx in order.iter().take(3) {
        let lo = if idx == 0 { S::zero() } else { step * cast::<S>((idx - 1) as f64) };
        let hi = if idx == POINTS - 1 {
            pi
        } else {
            step * cast::<S>((idx + 1) as f64)
        };
        best = fmax(best, golden_max(sys, lo, hi));
    }
    best
}

fn golden_max<S: Scalar>(sys: &StateSpace<S>, mut lo: S, mut hi: S) -> S {
    let inv_phi = cast::<S>(0.618_033_988_749_894_8);
    let mut x1 = hi - (hi - lo) * inv_phi;
    let mut x2 = lo + (hi - lo) * inv_phi;
    let mut f1 = frequency_gain(sys, x1);
    let mut f2 = frequency_gain(sys, x2);
    for _ in 0..60 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + (hi - lo) * inv_phi;
            f2 = frequency_gain(sys, x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - (hi - lo) * inv_phi;
            f1 = frequency_gain(sys, x1);
        }
    }
    fmax(f1, f2)
}

/// Value of the bounded-real map
/// `[[AᵀPA − P + CᵀC, AᵀPB + CᵀD], [∗, BᵀPB + DᵀD − γ²I]]`.
fn brl_value<S: Scalar>(sys: &StateSpace<S>, p: &DMatrix<S>, gamma: S) -> DMatrix<S> {
    let n = sys.order();
    let m = sys.num_inputs();
    let at_p = sys.a.transpose() * p;
    let mut v = DMatrix::zeros(n + m, n + m);
    v.view_mut((0, 0), (n, n))
        .copy_from(&(&at_p * &sys.a - p + sys.c.transpose() * &sys.c));
    let cross = &at_p * &sys.b + sys.c.transpose() * &sys.d;
    v.view_mut((0, n), (n, m)).copy_from(&cross);
    v.view_mut((n, 0), (m, n)).copy_from(&cross.transpose());
    v.view_mut((n, n), (m, m)).copy_from(
        &(sys.b.transpose() * p * &sys.b + sys.d.transpose() * &sys.d
            - DMatrix::identity(m, m) * (gamma * gamma)),
    );
    matops::symmetrize(&v)
}

/// Whether the bounded-real LMI is feasible at level `γ`: exists `P ⪰ δI`
/// with `BRL(P, γ) ⪯ 0`.
///
/// Posed in phase-1 form (minimize a slack `s ≥ −1` with the LMI relaxed by
/// `s·I`), which interior-point solvers handle much more reliably than a
/// pure feasibility problem. Acceptance does not trust the solver status:
/// the returned `P` is plugged back into the LMI and certifies feasibility
/// on its own.
fn brl_feasible<S: Scalar>(sys: &StateSpace<S>, gamma: S, settings: &SolverSettings) -> bool {
    let n = sys.order();
    let m = sys.num_inputs();
    let mut problem = LmiProblem::<S>::new();
    let p = problem.sym_var("p", n, false);
    let slack = problem.scalar_var("slack", Some(-S::one()));

    let mut pd = LmiExpr::zeros(n);
    pd.add_var_block(p, n, n, 0, 0, None, None, false);
    pd.add_constant(&(DMatrix::identity(n, n) * -cast::<S>(1e-10)));
    problem.add_psd_constraint(pd);

    let mut e = LmiExpr::zeros(n + m);
    let neg_at = (-sys.a.transpose()).clone();
    e.add_var_block(p, n, n, 0, 0, Some(&neg_at), Some(&sys.a), false);
    e.add_var_block(p, n, n, 0, 0, None, None, false);
    e.add_var_block(p, n, n, 0, n, Some(&neg_at), Some(&sys.b), true);
    let neg_bt = (-sys.b.transpose()).clone();
    e.add_var_block(p, n, n, n, n, Some(&neg_bt), Some(&sys.b), false);
    e.add_const_block(0, 0, &(-(sys.c.transpose() * &sys.c)));
    e.add_const_block(0, n, &(-(sys.c.transpose() * &sys.d)));
    e.add_const_block(
        n,
        n,
        &(DMatrix::identity(m, m) * (gamma * gamma) - sys.d.transpose() * &sys.d),
    );
    e.add_scalar_term(slack, DMatrix::identity(n + m, n + m));
    problem.add_psd_constraint(e);
    problem.add_objective(crate::sdp::ObjectiveTerm::Scalar(slack, S::one()));

    let sol = match sdp::solve(&problem, settings) {
        Ok(sol) => sol,
        Err(_) => return false,
    };
    if sol.status == SolveStatus::Infeasible {
        return false;
    }
    let p_val = matops::symmetrize(sol.matrix(p));
    if matops::min_eig_sym(&p_val).unwrap_or(-S::one()) < S::zero() {
        return false;
    }
    let value = brl_value(sys, &p_val, gamma);
    let scale = fmax(S::one(), matops::max_abs(&value));
    match matops::max_eig_sym(&value) {
        Ok(top) => top <= cast::<S>(1e-7) * scale,
        Err(_) => false,
    }
}

/// H∞ norm of a Schur-stable system with accuracy `tol·max(1, γ)`.
pub fn hinf_norm<S: Scalar>(sys: &StateSpace<S>, tol: S) -> Result<S> {
    let rho = spectral_radius(&sys.a)?;
    if rho >= S::one() - cast::<S>(1e-10) {
        return Err(Error::Unstable(to_f64(rho)));
    }
    if sys.num_inputs() == 0 || sys.num_outputs() == 0 {
        return Ok(S::zero());
    }
    let grid = grid_estimate(sys);
    let dc = frequency_gain(sys, S::zero());
    let mut lo = fmax(matops::sigma_max(&sys.d), dc);
    let mut hi = fmax(grid * cast::<S>(1.5), lo + cast::<S>(1e-12));
    let settings = SolverSettings::default();

    let mut expansions = 0;
    while !brl_feasible(sys, hi, &settings) {
        hi *= cast::<S>(2.0);
        expansions += 1;
        if expansions > 60 {
            return Err(Error::SolverFailure(
                "bounded-real bisection could not bracket the norm".into(),
            ));
        }
    }
    let width_target = fmin(tol, cast::<S>(1e-6));
    while hi - lo > width_target * fmax(S::one(), hi) {
        let mid = (hi + lo) * cast::<S>(0.5);
        if brl_feasible(sys, mid, &settings) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(fmax(hi, grid))
}

/// Series interconnection `u → g1 → g2 → y`.
pub fn series<S: Scalar>(g1: &StateSpace<S>, g2: &StateSpace<S>) -> Result<StateSpace<S>> {
    if g2.num_inputs() != g1.num_outputs() {
        return Err(Error::DimensionMismatch("series port mismatch".into()));
    }
    let (n1, n2) = (g1.order(), g2.order());
    let mut a = DMatrix::zeros(n1 + n2, n1 + n2);
    a.view_mut((0, 0), (n1, n1)).copy_from(&g1.a);
    a.view_mut((n1, 0), (n2, n1)).copy_from(&(&g2.b * &g1.c));
    a.view_mut((n1, n1), (n2, n2)).copy_from(&g2.a);
    let mut b = DMatrix::zeros(n1 + n2, g1.num_inputs());
    b.view_mut((0, 0), (n1, g1.num_inputs())).copy_from(&g1.b);
    b.view_mut((n1, 0), (n2, g1.num_inputs()))
        .copy_from(&(&g2.b * &g1.d));
    let mut c = DMatrix::zeros(g2.num_outputs(), n1 + n2);
    c.view_mut((0, 0), (g2.num_outputs(), n1))
        .copy_from(&(&g2.d * &g1.c));
    c.view_mut((0, n1), (g2.num_outputs(), n2)).copy_from(&g2.c);
    let d = &g2.d * &g1.d;
    StateSpace::new(a, b, c, d)
}

/// Closed-loop error system from `w_p` to `z_p − ẑ_p`: state `[x; x̂]` with
/// dynamics `[[A, 0], [B_E C_y, A_E]]`, input `[B_p; B_E D_yp]`, output
/// `[C_p − D_E C_y, −C_E]` and feedthrough `D_p − D_E D_yp`.
pub fn closed_loop_error_system<S: Scalar>(
    plant: &PlantMatrices<S>,
    cp: &DMatrix<S>,
    dp: &DMatrix<S>,
    est: &Estimator<S>,
) -> Result<StateSpace<S>> {
    let nx = plant.a.nrows();
    let ne = est.order();
    let mp = plant.bp.ncols();
    let py = plant.cy.nrows();
    let pp = cp.nrows();
    if plant.a.ncols() != nx
        || plant.bp.nrows() != nx
        || plant.cy.ncols() != nx
        || plant.dyp.nrows() != py
        || plant.dyp.ncols() != mp
        || cp.ncols() != nx
        || dp.nrows() != pp
        || dp.ncols() != mp
        || est.b_e.ncols() != py
        || est.d_e.ncols() != py
        || est.c_e.nrows() != pp
    {
        return Err(Error::DimensionMismatch(
            "plant/estimator interconnection dimensions".into(),
        ));
    }
    let mut a = DMatrix::zeros(nx + ne, nx + ne);
    a.view_mut((0, 0), (nx, nx)).copy_from(&plant.a);
    a.view_mut((nx, 0), (ne, nx))
        .copy_from(&(&est.b_e * &plant.cy));
    a.view_mut((nx, nx), (ne, ne)).copy_from(&est.a_e);
    let mut b = DMatrix::zeros(nx + ne, mp);
    b.view_mut((0, 0), (nx, mp)).copy_from(&plant.bp);
    b.view_mut((nx, 0), (ne, mp))
        .copy_from(&(&est.b_e * &plant.dyp));
    let mut c = DMatrix::zeros(pp, nx + ne);
    c.view_mut((0, 0), (pp, nx))
        .copy_from(&(cp - &est.d_e * &plant.cy));
    c.view_mut((0, nx), (pp, ne)).copy_from(&(-&est.c_e));
    let d = dp - &est.d_e * &plant.dyp;
    StateSpace::new(a, b, c, d)
}

/// Draws `count` members of a bounded primal description: the center, then
/// direction matrices scaled to a radius fraction of the boundary (at least
/// one in ten on the boundary itself). Coverage is heuristic, not uniform.
pub fn sample_members<S: Scalar>(q: &Qmi<S>, count: usize, seed: u64) -> Result<Vec<DMatrix<S>>> {
    let (center, neg11, t) = q
        .bounded_geometry()
        .ok_or_else(|| Error::Unbounded("leading block is not negative definite".into()))?;
    let chol = neg11
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Unbounded("leading block is not negative definite".into()))?;
    let t_scale = fmax(S::one(), matops::max_abs(&t));
    let t_half = matops::psd_sqrt(&t, cast::<S>(1e-9) * t_scale)
        .map_err(|_| Error::Unbounded("set is empty (negative shape)".into()))?;
    // (θ−c) = L⁻ᵀ Ξ T^{1/2} with σ_max(Ξ) ≤ 1 spans the whole set.
    let l_inv_t = chol
        .l()
        .transpose()
        .lu()
        .solve(&DMatrix::identity(q.p(), q.p()))
        .ok_or_else(|| Error::Unbounded("degenerate leading block".into()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let fraction: S = if i == 0 {
            S::zero()
        } else if i % 10 == 1 {
            S::one() - cast::<S>(1e-7)
        } else {
            cast::<S>(rng.random::<f64>())
        };
        let dir = random_direction::<S>(&mut rng, q.p(), q.n());
        let smax = matops::sigma_max(&dir);
        let xi = if smax > S::zero() {
            &dir * (fraction / smax)
        } else {
            dir
        };
        out.push(&center + &l_inv_t * xi * &t_half);
    }
    Ok(out)
}

fn random_direction<S: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<S> {
    DMatrix::from_fn(rows, cols, |_, _| {
        // Box-Muller from two uniform draws.
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        cast::<S>((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dm(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    fn siso(a: f64, b: f64, c: f64, d: f64) -> StateSpace<f64> {
        StateSpace::new(dm(1, 1, &[a]), dm(1, 1, &[b]), dm(1, 1, &[c]), dm(1, 1, &[d])).unwrap()
    }

    #[test]
    fn spectral_radius_examples() {
        assert_relative_eq!(
            spectral_radius(&(DMatrix::<f64>::identity(3, 3) * 0.7)).unwrap(),
            0.7,
            max_relative = 1e-12
        );
        let a = dm(2, 2, &[0.7, 0.0, 0.3, 0.7]);
        assert_relative_eq!(spectral_radius(&a).unwrap(), 0.7, max_relative = 1e-10);
        let a = dm(2, 2, &[0.0, 1.0, -0.25, 0.0]);
        assert_relative_eq!(spectral_radius(&a).unwrap(), 0.5, max_relative = 1e-10);
    }

    #[test]
    fn hinf_analytic_first_order() {
        let sys = siso(0.5, 1.0, 1.0, 0.0);
        let gamma = hinf_norm(&sys, 1e-6).unwrap();
        assert_relative_eq!(gamma, 2.0, epsilon = 1e-4);
    }

    #[test]
    fn hinf_pure_delay_and_static() {
        let sys = siso(0.0, 1.0, 1.0, 0.0);
        assert_relative_eq!(hinf_norm(&sys, 1e-6).unwrap(), 1.0, epsilon = 1e-4);
        let sys = siso(0.0, 0.0, 0.0, 0.3);
        assert_relative_eq!(hinf_norm(&sys, 1e-6).unwrap(), 0.3, epsilon = 1e-6);
    }

    #[test]
    fn hinf_rejects_unstable() {
        let sys = siso(1.01, 1.0, 1.0, 0.0);
        assert!(matches!(hinf_norm(&sys, 1e-6), Err(Error::Unstable(_))));
    }

    #[test]
    fn hinf_lower_bounds() {
        let sys = StateSpace::new(
            dm(2, 2, &[0.4, 0.1, 0.0, -0.3]),
            dm(2, 1, &[1.0, 0.5]),
            dm(1, 2, &[1.0, -1.0]),
            dm(1, 1, &[0.2]),
        )
        .unwrap();
        let gamma = hinf_norm(&sys, 1e-6).unwrap();
        assert!(gamma >= matops::sigma_max(&sys.d) - 1e-9);
        assert!(gamma >= frequency_gain(&sys, 0.0) - 1e-9);
    }

    #[test]
    fn submultiplicative_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let g1 = siso(
                rng.random::<f64>() * 1.6 - 0.8,
                rng.random::<f64>(),
                rng.random::<f64>(),
                rng.random::<f64>() * 0.5,
            );
            let g2 = siso(
                rng.random::<f64>() * 1.6 - 0.8,
                rng.random::<f64>(),
                rng.random::<f64>(),
                rng.random::<f64>() * 0.5,
            );
            let cascade = series(&g1, &g2).unwrap();
            let lhs = hinf_norm(&cascade, 1e-6).unwrap();
            let rhs = hinf_norm(&g1, 1e-6).unwrap() * hinf_norm(&g2, 1e-6).unwrap();
            assert!(lhs <= rhs + 1e-6, "{lhs} > {rhs}");
        }
    }

    #[test]
    fn pass_through_estimator_cancels_measured_output() {
        // z_p = y exactly: the unit feedthrough estimator has zero error.
        let plant = PlantMatrices {
            a: dm(1, 1, &[0.8]),
            bp: dm(1, 1, &[1.0]),
            cy: dm(1, 1, &[1.0]),
            dyp: dm(1, 1, &[0.1]),
        };
        let est = Estimator::new(
            dm(1, 1, &[0.0]),
            dm(1, 1, &[0.0]),
            dm(1, 1, &[0.0]),
            dm(1, 1, &[1.0]),
        )
        .unwrap();
        let err = closed_loop_error_system(&plant, &plant.cy.clone(), &plant.dyp.clone(), &est)
            .unwrap();
        assert!(hinf_norm(&err, 1e-6).unwrap() < 1e-9);
    }

    #[test]
    fn zero_estimator_recovers_open_loop_channel() {
        let plant = PlantMatrices {
            a: dm(1, 1, &[0.8]),
            bp: dm(1, 1, &[1.0]),
            cy: dm(1, 1, &[1.0]),
            dyp: dm(1, 1, &[0.1]),
        };
        let est = Estimator::new(
            dm(1, 1, &[0.0]),
            dm(1, 1, &[0.0]),
            dm(1, 1, &[0.0]),
            dm(1, 1, &[0.0]),
        )
        .unwrap();
        let cp = dm(1, 1, &[1.0]);
        let dp = dm(1, 1, &[0.0]);
        let err = closed_loop_error_system(&plant, &cp, &dp, &est).unwrap();
        let open = siso(0.8, 1.0, 1.0, 0.0);
        let g_err = hinf_norm(&err, 1e-6).unwrap();
        let g_open = hinf_norm(&open, 1e-6).unwrap();
        assert_relative_eq!(g_err, g_open, max_relative = 1e-6);
    }

    #[test]
    fn sample_members_unit_ball() {
        let q = Qmi::ball_prior(&dm(1, 1, &[0.0]), 1.0).unwrap();
        let samples = sample_members(&q, 100, 42).unwrap();
        assert_eq!(samples.len(), 100);
        assert!(samples.iter().all(|s| s[(0, 0)].abs() <= 1.0 + 1e-9));
        assert!(samples.iter().any(|s| s[(0, 0)].abs() >= 0.99));
        assert_eq!(samples[0][(0, 0)], 0.0);
    }

    #[test]
    fn sample_members_degenerate_radius() {
        let center = dm(1, 2, &[0.4, -0.2]);
        let q = Qmi::from_center_shape(
            &DMatrix::identity(1, 1),
            &DMatrix::zeros(2, 2),
            &center,
        )
        .unwrap();
        let samples = sample_members(&q, 10, 1).unwrap();
        for s in samples {
            assert!(matops::max_abs(&(s - &center)) < 1e-12);
        }
    }

    #[test]
    fn sample_members_self_check_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for trial in 0..20 {
            let p = rng.random_range(1..=2usize);
            let n = rng.random_range(1..=3usize);
            let center = DMatrix::from_fn(p, n, |_, _| rng.random::<f64>() - 0.5);
            let q = Qmi::ball_prior(&center, 0.1 + rng.random::<f64>()).unwrap();
            for (i, s) in sample_members(&q, 50, trial).unwrap().iter().enumerate() {
                assert!(
                    q.contains(s, 1e-9).unwrap(),
                    "trial {trial} sample {i} escaped"
                );
            }
        }
    }

    #[test]
    fn sample_members_requires_bounded() {
        let q = Qmi::primal(1, 1, dm(2, 2, &[0.0, 0.0, 0.0, 1.0])).unwrap();
        assert!(matches!(
            sample_members(&q, 3, 0),
            Err(Error::Unbounded(_))
        ));
    }

    #[test]
    fn lmi_vs_grid_agreement_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..25 {
            let n = rng.random_range(1..=6usize);
            let m = rng.random_range(1..=2usize);
            let p = rng.random_range(1..=2usize);
            let mut a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let rho = spectral_radius(&a).unwrap();
            if rho > 0.0 {
                a *= (0.3 + 0.6 * rng.random::<f64>()) / rho;
            }
            let sys = StateSpace::new(
                a,
                DMatrix::from_fn(n, m, |_, _| rng.random::<f64>() * 2.0 - 1.0),
                DMatrix::from_fn(p, n, |_, _| rng.random::<f64>() * 2.0 - 1.0),
                DMatrix::from_fn(p, m, |_, _| rng.random::<f64>() * 0.4 - 0.2),
            )
            .unwrap();
            let grid = grid_estimate(&sys);
            let norm = hinf_norm(&sys, 1e-6).unwrap();
            assert!(
                (norm - grid).abs() <= 1e-3 * norm.max(1e-12),
                "grid {grid} vs lmi {norm}"
            );
        }
    }
}


