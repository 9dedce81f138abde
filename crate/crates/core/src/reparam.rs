//! Reparameterization of a noisy regression sample into a bounded primal QMI.
//!
//! A sample `Y = θX + W` with `[W; I]ᵀ diag(−Q, R) [W; I] ⪰ 0` describes an
//! unbounded set of consistent parameters (anything in the kernel of `Xᵀ`
//! acting on rows is free). Given prior descriptions that bound the
//! parameters, this module picks compensation weights `R̂ ≻ 0`, `Q̂ ⪰ 0` and
//! a free center `θ̄` so that the bounded description
//!
//! ```text
//! Σ̂ = {θ : [θ−θ̂; I]ᵀ diag(−Q, Gᵀ(R+R̂)G + G₀ᵀ Q̂ G₀) [θ−θ̂; I] ⪰ 0}
//! ```
//!
//! with `G = X†`, `G₀ = I − XG` and `θ̂ = YG + θ̄G₀` contains every prior-
//! consistent parameter and excludes everything outside the `(1+ε)`-inflated
//! data set. `Q̂` is found by a small SDP; one solve is cached and reused for
//! every sample that shares the same disturbance weight.

use std::collections::HashMap;
use std::sync::RwLock;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matops;
use crate::qmi::{Orientation, Qmi};
use crate::scalar::{cast, fmax, to_f64, Scalar};
use crate::sdp::{self, LmiExpr, LmiProblem, ObjectiveTerm, SolveStatus, SolverSettings};

/// One regression sample `Y = θX + W` with disturbance bound
/// `[W; I]ᵀ diag(−Q, R) [W; I] ⪰ 0`.
#[derive(Debug, Clone)]
pub struct RegressionSample<S: Scalar> {
    x: DMatrix<S>,
    y: DMatrix<S>,
    q: DMatrix<S>,
    r: DMatrix<S>,
}

impl<S: Scalar> RegressionSample<S> {
    pub fn new(x: DMatrix<S>, y: DMatrix<S>, q: DMatrix<S>, r: DMatrix<S>) -> Result<Self> {
        let m = x.ncols();
        let p = y.nrows();
        if y.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "regressand has {} columns, regressor {}",
                y.ncols(),
                m
            )));
        }
        let q = require_psd(&q, p, "disturbance weight Q")?;
        let r = require_psd(&r, m, "disturbance weight R")?;
        Ok(Self { x, y, q, r })
    }

    pub fn x(&self) -> &DMatrix<S> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<S> {
        &self.y
    }

    pub fn q(&self) -> &DMatrix<S> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<S> {
        &self.r
    }

    /// Rows of θ.
    pub fn p(&self) -> usize {
        self.y.nrows()
    }

    /// Columns of θ.
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Columns of the regressor block.
    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    /// Value of `(R + extra) − (θX − Y)ᵀ Q (θX − Y)`; the sample's exact
    /// consistency form for `extra = 0`.
    pub fn residual_form(
        &self,
        theta: &DMatrix<S>,
        extra: Option<&DMatrix<S>>,
    ) -> Result<DMatrix<S>> {
        if theta.nrows() != self.p() || theta.ncols() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "parameter must be {}x{}, got {}x{}",
                self.p(),
                self.n(),
                theta.nrows(),
                theta.ncols()
            )));
        }
        let resid = theta * &self.x - &self.y;
        let mut value = &self.r - resid.transpose() * &self.q * resid;
        if let Some(e) = extra {
            value += e;
        }
        Ok(matops::symmetrize(&value))
    }

    /// Exact membership in the sample's consistency set.
    pub fn sigma_contains(&self, theta: &DMatrix<S>, tol: S) -> Result<bool> {
        Ok(matops::min_eig_sym(&self.residual_form(theta, None)?)? >= -tol)
    }
}

fn require_psd<S: Scalar>(m: &DMatrix<S>, dim: usize, what: &str) -> Result<DMatrix<S>> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::DimensionMismatch(format!(
            "{what} must be {dim}x{dim}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let sym = matops::require_symmetric(m)?;
    let scale = fmax(S::one(), matops::max_abs(&sym));
    if matops::min_eig_sym(&sym)? < -cast::<S>(1e-9) * scale {
        return Err(Error::NotPsd(what.into()));
    }
    Ok(sym)
}

/// Objective used when solving for the kernel compensation weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QhatObjective {
    /// Minimize `trace(Q̂)`.
    #[default]
    Trace,
    /// Reweighted-trace surrogate for `log det(Q̂)` (three trace solves with
    /// `W ← (Q̂ + δI)⁻¹`).
    LogDet,
}

/// Configuration of the reparameterization: relative inflation `ε > 0`, free
/// center `θ̄` and the shape objective.
#[derive(Debug, Clone)]
pub struct ReparamConfig<S: Scalar> {
    pub epsilon: S,
    pub theta_bar: DMatrix<S>,
    pub objective: QhatObjective,
}

impl<S: Scalar> ReparamConfig<S> {
    /// Default center: the center of the first bounded prior, otherwise zero.
    pub fn default_for(priors: &[Qmi<S>], epsilon: S, p: usize, n: usize) -> Self {
        let theta_bar = priors
            .iter()
            .find_map(|q| q.bounded_center())
            .unwrap_or_else(|| DMatrix::zeros(p, n));
        Self {
            epsilon,
            theta_bar,
            objective: QhatObjective::Trace,
        }
    }
}

/// Everything produced for one sample: the compensation weights, the scaling
/// constant `γ² = ((1+ε)²−1)⁻¹`, the prior multipliers and the bounded set.
#[derive(Debug, Clone)]
pub struct ReparamResult<S: Scalar> {
    pub qhat: DMatrix<S>,
    pub rhat: DMatrix<S>,
    pub gamma_sq: S,
    pub lambdas: Vec<S>,
    pub sigma_hat: Qmi<S>,
}

/// Inflation weights `R̂ = ((1+ε)²−1) R` and `γ² = ((1+ε)²−1)⁻¹`, so that
/// `R + R̂ = (1+ε)² R` exactly and `R ⪯ γ²R̂` holds with equality: `ε` is the
/// maximum allowed relative deviation from the exact consistency set.
pub fn rhat_gamma_from_eps<S: Scalar>(r: &DMatrix<S>, epsilon: S) -> Result<(DMatrix<S>, S)> {
    if epsilon <= S::zero() {
        return Err(Error::NonPositiveEpsilon);
    }
    let r = matops::require_symmetric(r)?;
    if !matops::is_pd(&r) {
        return Err(Error::NotPsd(
            "disturbance weight R must be positive definite for inflation".into(),
        ));
    }
    let one = S::one();
    let spread = (one + epsilon) * (one + epsilon) - one;
    Ok((&r * spread, one / spread))
}

/// Solves the convex program for the kernel compensation weight `Q̂ ⪰ 0`:
///
/// ```text
/// [[−(1+γ²)Q, (1+γ²)Qθ̄], [(1+γ²)θ̄ᵀQ, Q̂ − (1+γ²)θ̄ᵀQθ̄]] − Σ λ_i Π_{0,i} ⪰ 0
/// ```
///
/// with `λ_i ≥ 0`, minimizing the configured objective. Returns `(Q̂, λ)`.
pub fn solve_qhat<S: Scalar>(
    priors: &[Qmi<S>],
    q: &DMatrix<S>,
    gamma_sq: S,
    theta_bar: &DMatrix<S>,
    objective: QhatObjective,
    settings: &SolverSettings,
) -> Result<(DMatrix<S>, Vec<S>)> {
    let (p, n) = (theta_bar.nrows(), theta_bar.ncols());
    if priors.is_empty() {
        return Err(Error::InvalidConfig(
            "at least one prior description is required".into(),
        ));
    }
    for prior in priors {
        if prior.orientation() != Orientation::Primal {
            return Err(Error::WrongOrientation("primal"));
        }
        if prior.p() != p || prior.n() != n {
            return Err(Error::DimensionMismatch(format!(
                "prior is {}x{}, expected {}x{}",
                prior.p(),
                prior.n(),
                p,
                n
            )));
        }
    }
    let q = require_psd(q, p, "parameter weight Q")?;

    // Internal scaling keeps the solver numerics well conditioned; the
    // reported multipliers refer to the original matrices.
    let scales: Vec<S> = priors
        .iter()
        .map(|pr| fmax(S::one(), matops::max_abs(pr.pi())))
        .collect();

    let one = S::one();
    let w = &q * (one + gamma_sq);
    let w_tb = &w * theta_bar;
    let mut c0 = DMatrix::zeros(p + n, p + n);
    c0.view_mut((0, 0), (p, p)).copy_from(&(-&w));
    c0.view_mut((0, p), (p, n)).copy_from(&w_tb);
    c0.view_mut((p, 0), (n, p)).copy_from(&w_tb.transpose());
    c0.view_mut((p, p), (n, n))
        .copy_from(&(-(theta_bar.transpose() * &w_tb)));
    let c0 = matops::symmetrize(&c0);

    let mut embed = DMatrix::<S>::zeros(p + n, n);
    embed.view_mut((p, 0), (n, n)).fill_diagonal(S::one());

    let solve_once = |weight: &DMatrix<S>| -> Result<(DMatrix<S>, Vec<S>)> {
        let mut problem = LmiProblem::<S>::new();
        let qhat = problem.sym_var("qhat", n, true);
        let lambdas: Vec<_> = (0..priors.len())
            .map(|i| problem.scalar_var(&format!("lambda{i}"), Some(S::zero())))
            .collect();
        let mut expr = LmiExpr::zeros(p + n);
        expr.add_constant(&c0);
        expr.add_matrix_term(qhat, embed.clone(), embed.transpose(), false);
        for ((lam, prior), scale) in lambdas.iter().zip(priors).zip(&scales) {
            expr.add_scalar_term(*lam, prior.pi() * (-S::one() / *scale));
        }
        problem.add_psd_constraint(expr);
        problem.add_objective(ObjectiveTerm::Trace(qhat, weight.clone()));
        let sol = sdp::solve(&problem, settings)?;
        match sol.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => {
                return Err(Error::Infeasible(
                    "no bounded compensation weight exists for these priors".into(),
                ))
            }
            SolveStatus::NumericalTrouble => {
                return Err(Error::SolverFailure(format!(
                    "compensation-weight program: {} (violation {:.3e})",
                    sol.solver_status,
                    to_f64(sol.max_constraint_violation)
                )))
            }
        }
        let qhat_val = matops::symmetrize(sol.matrix(qhat));
        let lam_val: Vec<S> = lambdas
            .iter()
            .zip(&scales)
            .map(|(l, s)| sol.scalar(*l) / *s)
            .collect();
        // Polish away the solver's residual slack: with the multipliers
        // nudged up by a relative 1e-8 (which strictly lifts the leading
        // block through Q), the minimal feasible Q̂ follows in closed form
        // from the Schur complement; the completion is feasible to floating
        // point accuracy. Falls back to the raw solution if the leading
        // block is not definite enough to complete.
        match polish_qhat(&c0, priors, &qhat_val, &lam_val) {
            Some(polished) => Ok(polished),
            None => Ok((qhat_val, lam_val)),
        }
    };

    match objective {
        QhatObjective::Trace => solve_once(&DMatrix::identity(n, n)),
        QhatObjective::LogDet => {
            let mut best = solve_once(&DMatrix::identity(n, n))?;
            for _ in 0..2 {
                let delta = fmax(cast::<S>(1e-6), best.0.trace() * cast::<S>(1e-6));
                let shifted = &best.0 + DMatrix::identity(n, n) * delta;
                let weight = shifted
                    .cholesky()
                    .ok_or_else(|| Error::SolverFailure("reweighting shift not PD".into()))?
                    .inverse();
                best = solve_once(&matops::symmetrize(&weight))?;
            }
            Ok(best)
        }
    }
}

/// [`solve_qhat`] with a regularized retry ladder for badly conditioned
/// priors: on numerical failure the priors' trailing blocks are inflated by
/// a relative `δ` and the program re-solved. Any certificate obtained for
/// the inflated priors is also one for the originals (the inflation enters
/// the constraint as `−Σλ_i δ_i diag(0, I) ⪯ 0`), so correctness is
/// unaffected; only a slightly larger set results.
pub fn solve_qhat_regularized<S: Scalar>(
    priors: &[Qmi<S>],
    q: &DMatrix<S>,
    gamma_sq: S,
    theta_bar: &DMatrix<S>,
    objective: QhatObjective,
    settings: &SolverSettings,
) -> Result<(DMatrix<S>, Vec<S>)> {
    let mut last = None;
    for delta_rel in [0.0f64, 1e-8, 1e-6, 1e-4] {
        let inflated: Vec<Qmi<S>> = priors
            .iter()
            .map(|p| p.inflated(cast::<S>(delta_rel) * fmax(S::one(), matops::max_abs(p.pi()))))
            .collect();
        match solve_qhat(&inflated, q, gamma_sq, theta_bar, objective, settings) {
            Ok(out) => return Ok(out),
            Err(e @ Error::SolverFailure(_)) => last = Some(e),
            Err(other) => return Err(other),
        }
    }
    Err(last.unwrap_or_else(|| Error::SolverFailure("regularized retries exhausted".into())))
}

fn polish_qhat<S: Scalar>(
    c0: &DMatrix<S>,
    priors: &[Qmi<S>],
    qhat: &DMatrix<S>,
    lambdas: &[S],
) -> Option<(DMatrix<S>, Vec<S>)> {
    let n = qhat.nrows();
    let p = c0.nrows() - n;
    let bump = S::one() + cast::<S>(1e-8);
    let lam: Vec<S> = lambdas.iter().map(|&l| l * bump).collect();
    let mut l_mat = c0.clone();
    for (prior, &w) in priors.iter().zip(&lam) {
        l_mat -= prior.pi() * w;
    }
    let l11 = l_mat.view((0, 0), (p, p)).into_owned();
    let l12 = l_mat.view((0, p), (p, n)).into_owned();
    let l22 = l_mat.view((p, p), (n, n)).into_owned();
    let chol = l11.cholesky()?;
    let required = matops::symmetrize(&(l12.transpose() * chol.solve(&l12) - l22));
    // Feasibility needs Q̂ ⪰ required; clip to the PSD cone from above.
    let eig = required.clone().symmetric_eigen();
    let mut vals = eig.eigenvalues;
    for v in vals.iter_mut() {
        *v = crate::scalar::fmax(*v, S::zero());
    }
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..n {
        for i in 0..n {
            scaled[(i, j)] *= vals[j];
        }
    }
    let shift = cast::<S>(1e-12) * fmax(S::one(), matops::max_abs(&required));
    let polished = matops::symmetrize(&(scaled * eig.eigenvectors.transpose()))
        + DMatrix::identity(n, n) * shift;
    // Only keep the polished pair if it did not noticeably grow the
    // objective (it cannot shrink the feasible set).
    let budget = qhat.trace() * cast::<S>(1e-6) + cast::<S>(1e-9);
    if polished.trace() <= qhat.trace() + fmax(budget, qhat.trace() * cast::<S>(1e-6)) {
        Some((polished, lam))
    } else {
        None
    }
}

/// Builds the bounded description `Σ̂` for one sample from already chosen
/// weights: `G = X†`, `G₀ = I − XG`, `θ̂ = YG + θ̄G₀` and shape
/// `Gᵀ(R+R̂)G + G₀ᵀ Q̂ G₀`.
pub fn reparameterize_sample<S: Scalar>(
    sample: &RegressionSample<S>,
    qhat: &DMatrix<S>,
    rhat: &DMatrix<S>,
    theta_bar: &DMatrix<S>,
) -> Result<Qmi<S>> {
    let n = sample.n();
    if theta_bar.nrows() != sample.p() || theta_bar.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "center must be {}x{}",
            sample.p(),
            n
        )));
    }
    let rhat = matops::require_symmetric(rhat)?;
    if !matops::is_pd(&rhat) {
        return Err(Error::NotPsd(
            "inflation weight must be positive definite".into(),
        ));
    }
    let qhat = require_psd(qhat, n, "kernel compensation weight")?;

    let g = matops::left_pinv(&sample.x)?;
    let g0 = matops::complement_projector(&sample.x, &g)?;
    let theta_hat = &sample.y * &g + theta_bar * &g0;
    let shape = matops::symmetrize(
        &(g.transpose() * (&sample.r + rhat) * &g + g0.transpose() * qhat * &g0),
    );
    Qmi::from_center_shape(&sample.q, &shape, &theta_hat)
}

/// Encodes the structural constraint `σ_max(EθF + G)² ≤ ε_s²` as a bounded
/// primal QMI by mapping it onto a synthetic regression sample
/// (`X' = F`, `Y' = −E†G`, `Q' = EᵀE`, `R' = ε_s² I`) and reparameterizing.
///
/// Unit selectors for `E` and `F` extract any individual entry of θ, so this
/// covers entry bounds, zero-entry enforcement and row/column sums.
pub fn structural_constraint_qmi<S: Scalar>(
    e: &DMatrix<S>,
    f: &DMatrix<S>,
    g: &DMatrix<S>,
    eps_s: S,
    priors: &[Qmi<S>],
    config: &ReparamConfig<S>,
    settings: &SolverSettings,
) -> Result<Qmi<S>> {
    if eps_s <= S::zero() {
        return Err(Error::NonPositiveEpsilon);
    }
    let fcols = f.ncols();
    if g.nrows() != e.nrows() || g.ncols() != fcols {
        return Err(Error::DimensionMismatch(format!(
            "offset must be {}x{}, got {}x{}",
            e.nrows(),
            fcols,
            g.nrows(),
            g.ncols()
        )));
    }
    let e_pinv = matops::right_pinv(e)?; // requires full row rank
    let x_syn = f.clone();
    let y_syn = -(&e_pinv * g);
    let q_syn = e.transpose() * e;
    let r_syn = DMatrix::identity(fcols, fcols) * (eps_s * eps_s);
    let sample = RegressionSample::new(x_syn, y_syn, q_syn, r_syn)?;

    let (rhat, gamma_sq) = rhat_gamma_from_eps(sample.r(), config.epsilon)?;
    let (qhat, _) = solve_qhat_regularized(
        priors,
        sample.q(),
        gamma_sq,
        &config.theta_bar,
        config.objective,
        settings,
    )?;
    reparameterize_sample(&sample, &qhat, &rhat, &config.theta_bar)
}

/// Reparameterizes a stream of samples against a fixed prior set, caching the
/// compensation-weight solve per disturbance weight. Reads are concurrent;
/// insertion takes the single write lock.
pub struct QmiSampleBuilder<S: Scalar> {
    priors: Vec<Qmi<S>>,
    config: ReparamConfig<S>,
    settings: SolverSettings,
    cache: RwLock<HashMap<Vec<u64>, (DMatrix<S>, Vec<S>)>>,
}

impl<S: Scalar> QmiSampleBuilder<S> {
    pub fn new(
        priors: Vec<Qmi<S>>,
        config: ReparamConfig<S>,
        settings: SolverSettings,
    ) -> Result<Self> {
        if priors.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one prior description is required".into(),
            ));
        }
        if config.epsilon <= S::zero() {
            return Err(Error::NonPositiveEpsilon);
        }
        Ok(Self {
            priors,
            config,
            settings,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn priors(&self) -> &[Qmi<S>] {
        &self.priors
    }

    pub fn config(&self) -> &ReparamConfig<S> {
        &self.config
    }

    /// Number of distinct compensation-weight solves performed so far.
    pub fn cache_size(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }

    /// Bounded description for one sample, reusing the cached `Q̂` when the
    /// disturbance weight was seen before.
    pub fn qmi_for(&self, sample: &RegressionSample<S>) -> Result<ReparamResult<S>> {
        let (rhat, gamma_sq) = rhat_gamma_from_eps(sample.r(), self.config.epsilon)?;
        let key = matrix_key(sample.q());
        let cached = {
            let guard = self.cache.read().expect("cache lock");
            guard.get(&key).cloned()
        };
        let (qhat, lambdas) = match cached {
            Some(hit) => hit,
            None => {
                let solved = solve_qhat_regularized(
                    &self.priors,
                    sample.q(),
                    gamma_sq,
                    &self.config.theta_bar,
                    self.config.objective,
                    &self.settings,
                )?;
                let mut guard = self.cache.write().expect("cache lock");
                guard.entry(key).or_insert_with(|| solved.clone());
                solved
            }
        };
        let sigma_hat = reparameterize_sample(sample, &qhat, &rhat, &self.config.theta_bar)?;
        Ok(ReparamResult {
            qhat,
            rhat,
            gamma_sq,
            lambdas,
            sigma_hat,
        })
    }
}

fn matrix_key<S: Scalar>(m: &DMatrix<S>) -> Vec<u64> {
    let mut key = Vec::with_capacity(m.len() + 2);
    key.push(m.nrows() as u64);
    key.push(m.ncols() as u64);
    key.extend(m.iter().map(|v| to_f64(*v).to_bits()));
    key
}
