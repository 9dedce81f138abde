//! Robust H∞ estimator synthesis for a plant whose matrices are known only
//! through primal QMI descriptions.
//!
//! The unknown rows `Δ = [[A, B_p], [C_y, D_yp]]` close a fixed
//! interconnection through the uncertainty channel `w = Δz`. Nonnegative
//! multipliers turn the row-block QMIs into one static multiplier `P` with
//! `[Δ; I]ᵀ P [Δ; I] ⪰ 0` for every consistent Δ, and a single semidefinite
//! program over a structured Lyapunov variable, linearized estimator blocks,
//! the multipliers and `γ²` yields a full-order estimator whose closed-loop
//! error system is certified stable with H∞ norm at most γ for every
//! consistent plant.
//!
//! The linearizing substitution is the standard one for full-order
//! filtering: the Lyapunov variable is restricted to `X = [[X₁, X̂], [X̂, X̂]]`
//! (lossless up to a similarity transform of the filter state) and the
//! products `K = X̂A_E`, `L = X̂B_E` become decision variables, making every
//! block affine. `verify_robust_bound` re-checks any candidate bound with
//! the estimator fixed and an unstructured Lyapunov variable, and
//! `validate_by_sampling` drives sampled consistent plants through the true
//! closed loop.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::analysis::{self, Estimator, PlantMatrices};
use crate::error::{Error, Result};
use crate::matops;
use crate::qmi::{MultiplierVector, Orientation, Qmi};
use crate::scalar::{cast, fmax, fsqrt, to_f64, Scalar};
use crate::sdp::{self, LmiExpr, LmiProblem, ObjectiveTerm, SolveStatus, SolverSettings, VarId};

/// Which row block of `Δ = [[A, B_p], [C_y, D_yp]]` a description constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowBlock {
    /// `[A, B_p]`
    Ab,
    /// `[C_y, D_yp]`
    Cd,
}

/// Uncertain plant: known performance maps `C_p`, `D_p` plus QMI
/// descriptions of the unknown row blocks. `C_p` and `D_p` are treated as
/// exactly known; handling uncertainty in them as well would be a future
/// extension of the same machinery.
#[derive(Debug, Clone)]
pub struct UncertainPlant<S: Scalar> {
    cp: DMatrix<S>,
    dp: DMatrix<S>,
    qmi_ab: Qmi<S>,
    qmi_cd: Qmi<S>,
    extra_qmis: Vec<(RowBlock, Qmi<S>)>,
}

impl<S: Scalar> UncertainPlant<S> {
    pub fn new(
        cp: DMatrix<S>,
        dp: DMatrix<S>,
        qmi_ab: Qmi<S>,
        qmi_cd: Qmi<S>,
        extra_qmis: Vec<(RowBlock, Qmi<S>)>,
    ) -> Result<Self> {
        let nx = cp.ncols();
        let pp = cp.nrows();
        let mp = dp.ncols();
        if dp.nrows() != pp {
            return Err(Error::DimensionMismatch(
                "performance maps must share row count".into(),
            ));
        }
        let plant = Self {
            cp,
            dp,
            qmi_ab,
            qmi_cd,
            extra_qmis,
        };
        if plant.qmi_ab.p() != nx || plant.qmi_ab.n() != nx + mp {
            return Err(Error::DimensionMismatch(format!(
                "state-update description must be {}x{}",
                nx,
                nx + mp
            )));
        }
        if plant.qmi_cd.n() != nx + mp {
            return Err(Error::DimensionMismatch(format!(
                "measurement description must have {} columns",
                nx + mp
            )));
        }
        for (block, q) in &plant.extra_qmis {
            let rows = match block {
                RowBlock::Ab => nx,
                RowBlock::Cd => plant.qmi_cd.p(),
            };
            if q.p() != rows || q.n() != nx + mp {
                return Err(Error::DimensionMismatch(
                    "extra description does not match its row block".into(),
                ));
            }
        }
        for (_, q) in plant.qmis() {
            if q.orientation() != Orientation::Primal {
                return Err(Error::WrongOrientation("primal"));
            }
        }
        Ok(plant)
    }

    pub fn nx(&self) -> usize {
        self.cp.ncols()
    }

    pub fn mp(&self) -> usize {
        self.dp.ncols()
    }

    pub fn py(&self) -> usize {
        self.qmi_cd.p()
    }

    pub fn pp(&self) -> usize {
        self.cp.nrows()
    }

    pub fn cp(&self) -> &DMatrix<S> {
        &self.cp
    }

    pub fn dp(&self) -> &DMatrix<S> {
        &self.dp
    }

    pub fn qmi_ab(&self) -> &Qmi<S> {
        &self.qmi_ab
    }

    pub fn qmi_cd(&self) -> &Qmi<S> {
        &self.qmi_cd
    }

    pub fn extra_qmis(&self) -> &[(RowBlock, Qmi<S>)] {
        &self.extra_qmis
    }

    /// All descriptions in multiplier order: the two base blocks first.
    pub fn qmis(&self) -> impl Iterator<Item = (RowBlock, &Qmi<S>)> {
        [(RowBlock::Ab, &self.qmi_ab), (RowBlock::Cd, &self.qmi_cd)]
            .into_iter()
            .chain(self.extra_qmis.iter().map(|(b, q)| (*b, q)))
    }

    pub fn num_qmis(&self) -> usize {
        2 + self.extra_qmis.len()
    }

    /// Splits row blocks out of a sampled `Δ`.
    pub fn delta_to_plant(&self, delta: &DMatrix<S>) -> Result<PlantMatrices<S>> {
        let (nx, mp, py) = (self.nx(), self.mp(), self.py());
        if delta.nrows() != nx + py || delta.ncols() != nx + mp {
            return Err(Error::DimensionMismatch("sampled plant size".into()));
        }
        Ok(PlantMatrices {
            a: delta.view((0, 0), (nx, nx)).into_owned(),
            bp: delta.view((0, nx), (nx, mp)).into_owned(),
            cy: delta.view((nx, 0), (py, nx)).into_owned(),
            dyp: delta.view((nx, nx), (py, mp)).into_owned(),
        })
    }
}

/// Fixed interconnection closed by `w = Δz`: outputs `(x⁺, z, z_p, y)` from
/// `(x, w, w_p)`, with `x⁺` reading `w` through `[I_n 0]`, `z = [x; w_p]`,
/// `z_p = C_p x + D_p w_p` and `y` reading `w` through `[0 I_py]`.
#[derive(Debug, Clone)]
pub struct LftInterconnection<S: Scalar> {
    pub full: DMatrix<S>,
    nx: usize,
    mp: usize,
    py: usize,
    pp: usize,
}

pub fn assemble_lft<S: Scalar>(
    cp: &DMatrix<S>,
    dp: &DMatrix<S>,
    py: usize,
) -> Result<LftInterconnection<S>> {
    let nx = cp.ncols();
    let pp = cp.nrows();
    let mp = dp.ncols();
    if dp.nrows() != pp {
        return Err(Error::DimensionMismatch(
            "performance maps must share row count".into(),
        ));
    }
    let rows = nx + (nx + mp) + pp + py;
    let cols = nx + (nx + py) + mp;
    let mut full = DMatrix::zeros(rows, cols);
    // x⁺ rows: w through [I_n 0].
    for i in 0..nx {
        full[(i, nx + i)] = S::one();
    }
    // z rows: [x; w_p].
    for i in 0..nx {
        full[(nx + i, i)] = S::one();
    }
    for i in 0..mp {
        full[(2 * nx + i, nx + nx + py + i)] = S::one();
    }
    // z_p rows: C_p x + D_p w_p.
    full.view_mut((2 * nx + mp, 0), (pp, nx)).copy_from(cp);
    full.view_mut((2 * nx + mp, nx + nx + py), (pp, mp))
        .copy_from(dp);
    // y rows: w through [0 I_py].
    for i in 0..py {
        full[(2 * nx + mp + pp + i, nx + nx + i)] = S::one();
    }
    Ok(LftInterconnection {
        full,
        nx,
        mp,
        py,
        pp,
    })
}

impl<S: Scalar> LftInterconnection<S> {
    /// Closes `w = Δz` for a concrete Δ and evaluates one step:
    /// returns `(x⁺, z_p, y)`.
    pub fn close_with(
        &self,
        delta: &DMatrix<S>,
        x: &DMatrix<S>,
        wp: &DMatrix<S>,
    ) -> Result<(DMatrix<S>, DMatrix<S>, DMatrix<S>)> {
        let (nx, mp, py, pp) = (self.nx, self.mp, self.py, self.pp);
        if delta.nrows() != nx + py || delta.ncols() != nx + mp {
            return Err(Error::DimensionMismatch("uncertainty block size".into()));
        }
        let mut z = DMatrix::zeros(nx + mp, 1);
        z.view_mut((0, 0), (nx, 1)).copy_from(x);
        z.view_mut((nx, 0), (mp, 1)).copy_from(wp);
        let w = delta * z;
        let mut input = DMatrix::zeros(nx + (nx + py) + mp, 1);
        input.view_mut((0, 0), (nx, 1)).copy_from(x);
        input.view_mut((nx, 0), (nx + py, 1)).copy_from(&w);
        input.view_mut((2 * nx + py, 0), (mp, 1)).copy_from(wp);
        let out = &self.full * input;
        let x_next = out.view((0, 0), (nx, 1)).into_owned();
        let zp = out.view((2 * nx + mp, 0), (pp, 1)).into_owned();
        let y = out.view((2 * nx + mp + pp, 0), (py, 1)).into_owned();
        Ok((x_next, zp, y))
    }
}

/// Static multiplier `P = Σ m_i Ψ_iᵀ Π_i Ψ_i` on the `[w; z]` space, with the
/// row-block embeddings `Ψ_ab = [I_n 0 0; 0 0 I_{n+mp}]` and
/// `Ψ_cd = [0 I_py 0; 0 0 I_{n+mp}]`. For nonnegative multipliers,
/// `[Δ; I]ᵀ P [Δ; I] ⪰ 0` whenever each row block of Δ satisfies its
/// descriptions.
pub fn multiplier_p<S: Scalar>(
    mult: &MultiplierVector<S>,
    plant: &UncertainPlant<S>,
) -> Result<DMatrix<S>> {
    let weights: Vec<S> = mult
        .taus()
        .iter()
        .chain(mult.lambdas().iter())
        .copied()
        .collect();
    if weights.len() != plant.num_qmis() {
        return Err(Error::DimensionMismatch(format!(
            "{} multipliers for {} descriptions",
            weights.len(),
            plant.num_qmis()
        )));
    }
    let q_dim = plant.nx() + plant.py() + plant.nx() + plant.mp();
    let mut p = DMatrix::zeros(q_dim, q_dim);
    for ((block, qmi), &w) in plant.qmis().zip(&weights) {
        let psi = row_block_embedding(plant, block);
        p += psi.transpose() * qmi.pi() * psi * w;
    }
    Ok(matops::symmetrize(&p))
}

fn row_block_embedding<S: Scalar>(plant: &UncertainPlant<S>, block: RowBlock) -> DMatrix<S> {
    let (nx, mp, py) = (plant.nx(), plant.mp(), plant.py());
    let q_dim = nx + py + nx + mp;
    match block {
        RowBlock::Ab => {
            let mut psi = DMatrix::zeros(nx + nx + mp, q_dim);
            for i in 0..nx {
                psi[(i, i)] = S::one();
            }
            for i in 0..nx + mp {
                psi[(nx + i, nx + py + i)] = S::one();
            }
            psi
        }
        RowBlock::Cd => {
            let mut psi = DMatrix::zeros(py + nx + mp, q_dim);
            for i in 0..py {
                psi[(i, nx + i)] = S::one();
            }
            for i in 0..nx + mp {
                psi[(py + i, nx + py + i)] = S::one();
            }
            psi
        }
    }
}

/// Synthesis options: solver settings plus the small regularizations that
/// keep the certificates strict.
#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    pub settings: SolverSettings,
    /// `X ⪰ x_floor·I`.
    pub x_floor: f64,
    /// The main LMI is enforced as `M ⪯ −stability_margin·I`.
    pub stability_margin: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            settings: SolverSettings::default(),
            x_floor: 1e-7,
            stability_margin: 1e-9,
        }
    }
}

/// Synthesized estimator with its certificate.
#[derive(Debug, Clone)]
pub struct SynthesisResult<S: Scalar> {
    pub estimator: Estimator<S>,
    pub gamma: S,
    pub multipliers: MultiplierVector<S>,
    pub lyapunov: DMatrix<S>,
    pub solver_status: String,
    pub solver_violation: S,
}

/// Outcome of the analysis-side re-check of a candidate bound.
#[derive(Debug, Clone)]
pub enum BoundCheck<S: Scalar> {
    Certified {
        lyapunov: DMatrix<S>,
        multipliers: MultiplierVector<S>,
        margin: S,
    },
    Refuted {
        report: String,
    },
}

/// Report of [`validate_by_sampling`].
#[derive(Debug, Clone)]
pub struct ValidationReport<S: Scalar> {
    pub pass: bool,
    pub samples: usize,
    pub max_ratio: S,
    pub worst_norm: S,
    pub unstable_samples: usize,
}

// Column layout of the quadratic-form variable v = [x, x̂, w_A, w_y, w_p]
// used by the synthesis LMI, followed by the Schur rows for X·(next state)
// and for the error output.
struct Layout {
    nx: usize,
    py: usize,
    mp: usize,
    pp: usize,
}

impl Layout {
    fn ox(&self) -> usize {
        0
    }
    fn oxh(&self) -> usize {
        self.nx
    }
    fn owa(&self) -> usize {
        2 * self.nx
    }
    fn owy(&self) -> usize {
        3 * self.nx
    }
    fn owp(&self) -> usize {
        3 * self.nx + self.py
    }
    fn dv(&self) -> usize {
        3 * self.nx + self.py + self.mp
    }
    fn oe1(&self) -> usize {
        self.dv()
    }
    fn oe2(&self) -> usize {
        self.dv() + self.nx
    }
    fn oer(&self) -> usize {
        self.dv() + 2 * self.nx
    }
    fn dm(&self) -> usize {
        self.dv() + 2 * self.nx + self.pp
    }
}

/// Constant map `[W; Z]` from v to the multiplier space `[w; z]`.
fn wz_map<S: Scalar>(layout: &Layout) -> DMatrix<S> {
    let (nx, py, mp) = (layout.nx, layout.py, layout.mp);
    let q_dim = nx + py + nx + mp;
    let mut wz = DMatrix::zeros(q_dim, layout.dv());
    for i in 0..nx + py {
        wz[(i, layout.owa() + i)] = S::one();
    }
    for i in 0..nx {
        wz[(nx + py + i, layout.ox() + i)] = S::one();
    }
    for i in 0..mp {
        wz[(nx + py + nx + i, layout.owp() + i)] = S::one();
    }
    wz
}

fn identity<S: Scalar>(d: usize) -> DMatrix<S> {
    DMatrix::identity(d, d)
}

/// Adds the blocks of the structured Lyapunov variable
/// `sign·[[X₁, X̂], [X̂, X̂]]` at diagonal offset `(o, o)`.
fn add_structured_x<S: Scalar>(
    expr: &mut LmiExpr<S>,
    x1: VarId,
    xhat: VarId,
    nx: usize,
    o: usize,
    sign: S,
) {
    let signed = identity::<S>(nx) * sign;
    expr.add_var_block(x1, nx, nx, o, o, Some(&signed), None, false);
    expr.add_var_block(xhat, nx, nx, o, o + nx, Some(&signed), None, true);
    expr.add_var_block(xhat, nx, nx, o + nx, o + nx, Some(&signed), None, false);
}

/// Synthesizes a full-order estimator minimizing the certified H∞ bound γ
/// over every plant consistent with the descriptions.
///
/// Badly conditioned descriptions (e.g. near-degenerate data priors) can
/// stall the interior-point method; on a numerical failure the solve is
/// retried with the descriptions inflated by a small relative margin.
/// Inflation only enlarges the uncertainty set, so any bound obtained that
/// way is still valid for the original plant.
pub fn synthesize<S: Scalar>(
    plant: &UncertainPlant<S>,
    opts: &SynthesisOptions,
) -> Result<SynthesisResult<S>> {
    let mut last = None;
    // Two regularization axes: inflate ill-conditioned descriptions, and
    // raise the Lyapunov floor so the filter recovery X̂⁻¹K stays well
    // conditioned. Every accepted solution re-checks its own certificate at
    // the recovered estimator, so a successful early rung is always valid.
    for delta_rel in [0.0f64, 1e-8, 1e-6, 1e-4] {
        for x_floor in [opts.x_floor, 1e-3] {
            let relaxed = inflate_plant(plant, delta_rel);
            match synthesize_once(plant, &relaxed, opts, x_floor) {
                Ok(result) => return Ok(result),
                Err(e @ Error::SolverFailure(_)) => last = Some(e),
                Err(other) => return Err(other),
            }
        }
    }
    Err(last.unwrap_or_else(|| Error::SolverFailure("regularized retries exhausted".into())))
}

fn inflate_plant<S: Scalar>(plant: &UncertainPlant<S>, delta_rel: f64) -> UncertainPlant<S> {
    if delta_rel == 0.0 {
        return plant.clone();
    }
    let inflate = |q: &Qmi<S>| q.inflated(cast::<S>(delta_rel) * fmax(S::one(), matops::max_abs(q.pi())));
    UncertainPlant {
        cp: plant.cp.clone(),
        dp: plant.dp.clone(),
        qmi_ab: inflate(&plant.qmi_ab),
        qmi_cd: inflate(&plant.qmi_cd),
        extra_qmis: plant
            .extra_qmis
            .iter()
            .map(|(b, q)| (*b, inflate(q)))
            .collect(),
    }
}

fn synthesize_once<S: Scalar>(
    original: &UncertainPlant<S>,
    plant: &UncertainPlant<S>,
    opts: &SynthesisOptions,
    x_floor: f64,
) -> Result<SynthesisResult<S>> {
    let layout = Layout {
        nx: plant.nx(),
        py: plant.py(),
        mp: plant.mp(),
        pp: plant.pp(),
    };
    let (nx, py, mp, pp) = (layout.nx, layout.py, layout.mp, layout.pp);

    let mut problem = LmiProblem::<S>::new();
    let x1 = problem.sym_var("x1", nx, false);
    let xhat = problem.sym_var("xhat", nx, false);
    let k = problem.rect_var("k", nx, nx);
    let l = problem.rect_var("l", nx, py);
    let ce = problem.rect_var("ce", pp, nx);
    let de = problem.rect_var("de", pp, py);
    let g2 = problem.scalar_var("gamma_sq", Some(S::zero()));
    let scales: Vec<S> = plant
        .qmis()
        .map(|(_, q)| fmax(S::one(), matops::max_abs(q.pi())))
        .collect();
    let lambdas: Vec<VarId> = (0..plant.num_qmis())
        .map(|i| problem.scalar_var(&format!("lambda{i}"), Some(S::zero())))
        .collect();

    // Main condition: −M − margin·I ⪰ 0.
    let dm = layout.dm();
    let mut e = LmiExpr::zeros(dm);
    e.add_constant(&(identity::<S>(dm) * -cast::<S>(opts.stability_margin)));

    // (ξ, ξ): +X.
    add_structured_x(&mut e, x1, xhat, nx, layout.ox(), S::one());
    // Multiplier terms: −Γᵀ Π Γ per description (internally rescaled).
    let wz = wz_map::<S>(&layout);
    for (((block, qmi), lam), scale) in plant.qmis().zip(&lambdas).zip(&scales) {
        let gamma_map = row_block_embedding(plant, block) * &wz;
        let coeff_small = gamma_map.transpose() * (qmi.pi() / *scale) * gamma_map;
        let mut coeff = DMatrix::zeros(dm, dm);
        coeff
            .view_mut((0, 0), (layout.dv(), layout.dv()))
            .copy_from(&(-coeff_small));
        e.add_scalar_term(*lam, matops::symmetrize(&coeff));
    }
    // +g2 on the performance-input block.
    e.add_scalar_block(g2, layout.owp(), layout.owp(), &identity::<S>(mp));
    // Schur rows for X·(next state): −K, −X₁/−X̂, −L placements.
    let neg_i = identity::<S>(nx) * -S::one();
    e.add_var_block(k, nx, nx, layout.oe1(), layout.oxh(), Some(&neg_i), None, true);
    e.add_var_block(k, nx, nx, layout.oe2(), layout.oxh(), Some(&neg_i), None, true);
    e.add_var_block(x1, nx, nx, layout.oe1(), layout.owa(), Some(&neg_i), None, true);
    e.add_var_block(xhat, nx, nx, layout.oe2(), layout.owa(), Some(&neg_i), None, true);
    e.add_var_block(l, nx, py, layout.oe1(), layout.owy(), Some(&neg_i), None, true);
    e.add_var_block(l, nx, py, layout.oe2(), layout.owy(), Some(&neg_i), None, true);
    // (η, η): +X.
    add_structured_x(&mut e, x1, xhat, nx, layout.oe1(), S::one());
    // Error rows: −𝐄 and +I on the diagonal.
    e.add_const_block(layout.oer(), layout.ox(), &(-plant.cp()));
    e.add_const_block(layout.oer(), layout.owp(), &(-plant.dp()));
    e.add_var_block(ce, pp, nx, layout.oer(), layout.oxh(), None, None, true);
    e.add_var_block(de, pp, py, layout.oer(), layout.owy(), None, None, true);
    e.add_const_block(layout.oer(), layout.oer(), &identity::<S>(pp));
    problem.add_psd_constraint(e);

    // X ⪰ x_floor·I.
    let mut xc = LmiExpr::zeros(2 * nx);
    add_structured_x(&mut xc, x1, xhat, nx, 0, S::one());
    xc.add_constant(&(identity::<S>(2 * nx) * -cast::<S>(x_floor)));
    problem.add_psd_constraint(xc);

    problem.add_objective(ObjectiveTerm::Scalar(g2, S::one()));

    let sol = sdp::solve(&problem, &opts.settings)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::Infeasible(
                "no finite bound certifiable for this uncertainty set".into(),
            ))
        }
        SolveStatus::NumericalTrouble => {
            return Err(Error::SolverFailure(format!(
                "synthesis program: {} (violation {:.3e})",
                sol.solver_status,
                to_f64(sol.max_constraint_violation)
            )))
        }
    }

    let xhat_val = matops::symmetrize(sol.matrix(xhat));
    let chol = xhat_val
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SolverFailure("filter transformation is singular".into()))?;
    let a_e = chol.solve(sol.matrix(k));
    let b_e = chol.solve(sol.matrix(l));
    let estimator = Estimator::new(a_e, b_e, sol.matrix(ce).clone(), sol.matrix(de).clone())?;

    let x1_val = matops::symmetrize(sol.matrix(x1));
    let mut lyap = DMatrix::zeros(2 * nx, 2 * nx);
    lyap.view_mut((0, 0), (nx, nx)).copy_from(&x1_val);
    lyap.view_mut((0, nx), (nx, nx)).copy_from(&xhat_val);
    lyap.view_mut((nx, 0), (nx, nx)).copy_from(&xhat_val);
    lyap.view_mut((nx, nx), (nx, nx)).copy_from(&xhat_val);

    let g2_val = fmax(sol.scalar(g2), S::zero());
    let raw: Vec<S> = lambdas
        .iter()
        .zip(&scales)
        .map(|(lam, s)| fmax(sol.scalar(*lam), S::zero()) / *s)
        .collect();
    let multipliers = MultiplierVector::new(raw[..2].to_vec(), raw[2..].to_vec())?;

    // The filter recovery X̂⁻¹K can amplify solver slack when X̂ is nearly
    // singular; accept only if the certificate still holds at the recovered
    // estimator, against the original descriptions, and the filter itself is
    // Schur stable (its modes are part of every closed loop).
    let m_val = robust_lmi_value(original, &estimator, &lyap, &multipliers, g2_val)?;
    let residual = matops::max_eig_sym(&m_val)?;
    let scale = fmax(S::one(), matops::max_abs(&m_val));
    if residual > cast::<S>(1e-6) * scale {
        return Err(Error::SolverFailure(format!(
            "recovered estimator fails the certificate re-check (residual {:.3e})",
            to_f64(residual)
        )));
    }
    let rho = analysis::spectral_radius(&estimator.a_e)?;
    if rho >= S::one() - cast::<S>(1e-9) {
        return Err(Error::SolverFailure(format!(
            "recovered estimator is not Schur stable (spectral radius {})",
            to_f64(rho)
        )));
    }

    Ok(SynthesisResult {
        estimator,
        gamma: fsqrt(g2_val),
        multipliers,
        lyapunov: lyap,
        solver_status: sol.solver_status,
        solver_violation: sol.max_constraint_violation,
    })
}

/// Numeric value of the robust-performance matrix `M(X, λ, γ²)` for a fixed
/// estimator; `M ⪯ 0` certifies the bound.
fn robust_lmi_value<S: Scalar>(
    plant: &UncertainPlant<S>,
    est: &Estimator<S>,
    x: &DMatrix<S>,
    mult: &MultiplierVector<S>,
    gamma_sq: S,
) -> Result<DMatrix<S>> {
    let layout = Layout {
        nx: plant.nx(),
        py: plant.py(),
        mp: plant.mp(),
        pp: plant.pp(),
    };
    let (nx, py, mp, pp) = (layout.nx, layout.py, layout.mp, layout.pp);
    let dv = layout.dv();
    let dm = layout.dm();

    // 𝐀 = [𝒜, ℬ_w, ℬ_p] on v.
    let mut a_map = DMatrix::zeros(2 * nx, dv);
    a_map
        .view_mut((nx, layout.oxh()), (nx, nx))
        .copy_from(&est.a_e);
    a_map
        .view_mut((0, layout.owa()), (nx, nx))
        .fill_diagonal(S::one());
    a_map
        .view_mut((nx, layout.owy()), (nx, py))
        .copy_from(&est.b_e);
    // 𝐄 on v.
    let mut e_map = DMatrix::zeros(pp, dv);
    e_map
        .view_mut((0, layout.ox()), (pp, nx))
        .copy_from(plant.cp());
    e_map
        .view_mut((0, layout.oxh()), (pp, nx))
        .copy_from(&(-&est.c_e));
    e_map
        .view_mut((0, layout.owy()), (pp, py))
        .copy_from(&(-&est.d_e));
    e_map
        .view_mut((0, layout.owp()), (pp, mp))
        .copy_from(plant.dp());

    let p_mult = multiplier_p(mult, plant)?;
    let wz = wz_map::<S>(&layout);

    let mut m = DMatrix::zeros(dm, dm);
    let mut phi = wz.transpose() * p_mult * &wz;
    let mut exi = DMatrix::<S>::zeros(2 * nx, dv);
    exi.view_mut((0, 0), (2 * nx, 2 * nx))
        .fill_diagonal(S::one());
    phi -= exi.transpose() * x * &exi;
    for i in 0..mp {
        phi[(layout.owp() + i, layout.owp() + i)] -= gamma_sq;
    }
    m.view_mut((0, 0), (dv, dv)).copy_from(&phi);
    let xa = x * &a_map;
    m.view_mut((dv, 0), (2 * nx, dv)).copy_from(&xa);
    m.view_mut((0, dv), (dv, 2 * nx)).copy_from(&xa.transpose());
    m.view_mut((dv, dv), (2 * nx, 2 * nx)).copy_from(&(-x));
    m.view_mut((layout.oer(), 0), (pp, dv)).copy_from(&e_map);
    m.view_mut((0, layout.oer()), (dv, pp))
        .copy_from(&e_map.transpose());
    m.view_mut((layout.oer(), layout.oer()), (pp, pp))
        .copy_from(&(-identity::<S>(pp)));
    Ok(matops::symmetrize(&m))
}

/// With the estimator fixed, searches for an unstructured Lyapunov variable
/// and multipliers certifying the closed-loop bound at level `γ·(1+1e-6)`.
/// Certificates are re-checked outside the solver against the original
/// descriptions; a solver infeasibility claim on the original problem
/// refutes the bound.
pub fn verify_robust_bound<S: Scalar>(
    plant: &UncertainPlant<S>,
    est: &Estimator<S>,
    gamma: S,
    opts: &SynthesisOptions,
) -> Result<BoundCheck<S>> {
    let mut last = None;
    for delta_rel in [0.0f64, 1e-8, 1e-6] {
        // The candidate certificate is searched on the (possibly inflated)
        // descriptions but always validated against the originals, so an
        // inflated run can only strengthen the claim.
        match verify_once(plant, &inflate_plant(plant, delta_rel), est, gamma, opts) {
            Ok(BoundCheck::Refuted { report }) => {
                if delta_rel == 0.0 {
                    return Ok(BoundCheck::Refuted { report });
                }
            }
            Ok(ok) => return Ok(ok),
            Err(e @ Error::SolverFailure(_)) => last = Some(e),
            Err(other) => return Err(other),
        }
    }
    Err(last.unwrap_or_else(|| Error::SolverFailure("regularized retries exhausted".into())))
}

fn verify_once<S: Scalar>(
    plant: &UncertainPlant<S>,
    relaxed: &UncertainPlant<S>,
    est: &Estimator<S>,
    gamma: S,
    opts: &SynthesisOptions,
) -> Result<BoundCheck<S>> {
    let layout = Layout {
        nx: plant.nx(),
        py: plant.py(),
        mp: plant.mp(),
        pp: plant.pp(),
    };
    let (nx, py, mp, pp) = (layout.nx, layout.py, layout.mp, layout.pp);
    if est.order() != nx || est.b_e.ncols() != py || est.c_e.nrows() != pp {
        return Err(Error::DimensionMismatch(
            "estimator does not match plant dimensions".into(),
        ));
    }
    // The filter's own modes appear in every closed loop; an unstable filter
    // cannot carry any finite bound.
    let rho = analysis::spectral_radius(&est.a_e)?;
    if rho >= S::one() {
        return Ok(BoundCheck::Refuted {
            report: format!("estimator is not Schur stable (spectral radius {})", to_f64(rho)),
        });
    }
    let level = gamma * (S::one() + cast::<S>(1e-6));
    let g2 = level * level;

    let mut problem = LmiProblem::<S>::new();
    let x = problem.sym_var("x", 2 * nx, false);
    let slack = problem.scalar_var("slack", Some(-S::one()));
    let scales: Vec<S> = relaxed
        .qmis()
        .map(|(_, q)| fmax(S::one(), matops::max_abs(q.pi())))
        .collect();
    let lambdas: Vec<VarId> = (0..relaxed.num_qmis())
        .map(|i| problem.scalar_var(&format!("lambda{i}"), Some(S::zero())))
        .collect();

    let dv = layout.dv();
    let dm = layout.dm();
    let mut e = LmiExpr::zeros(dm);
    // −Φ part: +EξᵀXEξ − multiplier terms + g2 block.
    let mut exi_full = DMatrix::<S>::zeros(2 * nx, dm);
    exi_full
        .view_mut((0, 0), (2 * nx, 2 * nx))
        .fill_diagonal(S::one());
    e.add_matrix_term(x, exi_full.transpose(), exi_full, false);
    let wz = wz_map::<S>(&layout);
    for (((block, qmi), lam), scale) in relaxed.qmis().zip(&lambdas).zip(&scales) {
        let gamma_map = row_block_embedding(relaxed, block) * &wz;
        let coeff_small = gamma_map.transpose() * (qmi.pi() / *scale) * gamma_map;
        let mut coeff = DMatrix::zeros(dm, dm);
        coeff.view_mut((0, 0), (dv, dv)).copy_from(&(-coeff_small));
        e.add_scalar_term(*lam, matops::symmetrize(&coeff));
    }
    let mut g2_block = DMatrix::zeros(dm, dm);
    for i in 0..mp {
        g2_block[(layout.owp() + i, layout.owp() + i)] = g2;
    }
    e.add_constant(&g2_block);
    // −(X𝐀) rows and +X at (η, η); 𝐀 is constant here.
    let mut a_map = DMatrix::zeros(2 * nx, dv);
    a_map
        .view_mut((nx, layout.oxh()), (nx, nx))
        .copy_from(&est.a_e);
    a_map
        .view_mut((0, layout.owa()), (nx, nx))
        .fill_diagonal(S::one());
    a_map
        .view_mut((nx, layout.owy()), (nx, py))
        .copy_from(&est.b_e);
    e.add_var_block(
        x,
        2 * nx,
        2 * nx,
        layout.oe1(),
        0,
        Some(&(identity::<S>(2 * nx) * -S::one())),
        Some(&a_map),
        true,
    );
    e.add_var_block(
        x,
        2 * nx,
        2 * nx,
        layout.oe1(),
        layout.oe1(),
        None,
        None,
        false,
    );
    // Error rows (constant) and the slack relaxation.
    let mut e_map = DMatrix::zeros(pp, dv);
    e_map
        .view_mut((0, layout.ox()), (pp, nx))
        .copy_from(plant.cp());
    e_map
        .view_mut((0, layout.oxh()), (pp, nx))
        .copy_from(&(-&est.c_e));
    e_map
        .view_mut((0, layout.owy()), (pp, py))
        .copy_from(&(-&est.d_e));
    e_map
        .view_mut((0, layout.owp()), (pp, mp))
        .copy_from(plant.dp());
    let mut e_rows = DMatrix::zeros(dm, dm);
    e_rows
        .view_mut((layout.oer(), 0), (pp, dv))
        .copy_from(&(-&e_map));
    e_rows
        .view_mut((0, layout.oer()), (dv, pp))
        .copy_from(&(-e_map.transpose()));
    for i in 0..pp {
        e_rows[(layout.oer() + i, layout.oer() + i)] = S::one();
    }
    e.add_constant(&e_rows);
    e.add_scalar_term(slack, identity::<S>(dm));
    problem.add_psd_constraint(e);

    // X ⪰ x_floor·I stays hard.
    let mut xc = LmiExpr::zeros(2 * nx);
    let eye_full = identity::<S>(2 * nx);
    xc.add_matrix_term(x, eye_full.clone(), eye_full, false);
    xc.add_constant(&(identity::<S>(2 * nx) * -cast::<S>(opts.x_floor)));
    problem.add_psd_constraint(xc);

    problem.add_objective(ObjectiveTerm::Scalar(slack, S::one()));
    let sol = sdp::solve(&problem, &opts.settings)?;

    if sol.status == SolveStatus::Infeasible {
        return Ok(BoundCheck::Refuted {
            report: format!(
                "no Lyapunov/multiplier certificate exists at level {:.6e}",
                to_f64(level)
            ),
        });
    }
    // Certificate check independent of the solver status.
    let x_val = matops::symmetrize(sol.matrix(x));
    let raw: Vec<S> = lambdas
        .iter()
        .zip(&scales)
        .map(|(lam, s)| fmax(sol.scalar(*lam), S::zero()) / *s)
        .collect();
    let mult = MultiplierVector::new(raw[..2].to_vec(), raw[2..].to_vec())?;
    let m_val = robust_lmi_value(plant, est, &x_val, &mult, g2)?;
    let scale = fmax(S::one(), matops::max_abs(&m_val));
    let top = matops::max_eig_sym(&m_val)?;
    let x_min = matops::min_eig_sym(&x_val)?;
    if top <= cast::<S>(1e-6) * scale && x_min > S::zero() {
        Ok(BoundCheck::Certified {
            lyapunov: x_val,
            multipliers: mult,
            margin: -top,
        })
    } else if sol.scalar(slack) > S::zero() {
        Ok(BoundCheck::Refuted {
            report: format!(
                "best certificate slack {:.3e} remains positive at level {:.6e}",
                to_f64(sol.scalar(slack)),
                to_f64(level)
            ),
        })
    } else {
        Err(Error::SolverFailure(format!(
            "certificate could not be confirmed (status {}, residual {:.3e})",
            sol.solver_status,
            to_f64(top)
        )))
    }
}

/// Draws consistent plants, closes each loop and compares the true H∞ norm
/// against the certified γ. Passes when every sampled loop is stable with
/// norm at most `γ·(1+1e-3)`.
///
/// Sampling uses the multiplier-weighted combination of each row block's
/// descriptions — exactly the set the synthesis certificate covers, and a
/// superset of the description intersection — falling back to rejection
/// sampling from the raw descriptions when a combination is degenerate.
pub fn validate_by_sampling<S: Scalar>(
    plant: &UncertainPlant<S>,
    result: &SynthesisResult<S>,
    count: usize,
    seed: u64,
) -> Result<ValidationReport<S>> {
    let deltas = match sample_certified_deltas(plant, &result.multipliers, count, seed) {
        Ok(d) => d,
        Err(_) => sample_consistent_deltas(plant, count, seed)?,
    };
    let outcomes: Vec<Option<S>> = deltas
        .par_iter()
        .map(|delta| {
            let mats = plant.delta_to_plant(delta).ok()?;
            let loop_sys = analysis::closed_loop_error_system(
                &mats,
                plant.cp(),
                plant.dp(),
                &result.estimator,
            )
            .ok()?;
            analysis::hinf_norm(&loop_sys, cast::<S>(1e-6)).ok()
        })
        .collect();

    let mut worst = S::zero();
    let mut unstable = 0usize;
    for o in &outcomes {
        match o {
            Some(norm) => worst = fmax(worst, *norm),
            None => unstable += 1,
        }
    }
    let denom = fmax(result.gamma, cast::<S>(1e-300));
    let pass = unstable == 0 && worst <= result.gamma * (S::one() + cast::<S>(1e-3));
    Ok(ValidationReport {
        pass,
        samples: deltas.len(),
        max_ratio: worst / denom,
        worst_norm: worst,
        unstable_samples: unstable,
    })
}

/// The multiplier-weighted combination of one row block's descriptions: the
/// set of row blocks actually covered by a certificate with these
/// multipliers.
pub fn certified_block_combination<S: Scalar>(
    plant: &UncertainPlant<S>,
    mult: &MultiplierVector<S>,
    block: RowBlock,
) -> Result<Qmi<S>> {
    let weights: Vec<S> = mult
        .taus()
        .iter()
        .chain(mult.lambdas().iter())
        .copied()
        .collect();
    if weights.len() != plant.num_qmis() {
        return Err(Error::DimensionMismatch(format!(
            "{} multipliers for {} descriptions",
            weights.len(),
            plant.num_qmis()
        )));
    }
    let mut qmis = Vec::new();
    let mut w = Vec::new();
    for ((b, q), weight) in plant.qmis().zip(&weights) {
        if b == block {
            qmis.push(q.clone());
            w.push(*weight);
        }
    }
    Qmi::nonneg_combination(&qmis, &[], &MultiplierVector::new(w, vec![])?)
}

/// Samples Δ matrices from the certificate's per-block combinations. Every
/// returned Δ is covered by any certificate carrying these multipliers.
pub fn sample_certified_deltas<S: Scalar>(
    plant: &UncertainPlant<S>,
    mult: &MultiplierVector<S>,
    count: usize,
    seed: u64,
) -> Result<Vec<DMatrix<S>>> {
    let comb_ab = certified_block_combination(plant, mult, RowBlock::Ab)?;
    let comb_cd = certified_block_combination(plant, mult, RowBlock::Cd)?;
    let theta_ab = analysis::sample_members(&comb_ab, count, seed)?;
    let theta_cd = analysis::sample_members(&comb_cd, count, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let (nx, mp, py) = (plant.nx(), plant.mp(), plant.py());
    Ok(theta_ab
        .into_iter()
        .zip(theta_cd)
        .map(|(tab, tcd)| {
            let mut delta = DMatrix::zeros(nx + py, nx + mp);
            delta.view_mut((0, 0), (nx, nx + mp)).copy_from(&tab);
            delta.view_mut((nx, 0), (py, nx + mp)).copy_from(&tcd);
            delta
        })
        .collect())
}

/// Rejection-samples `count` full Δ matrices whose row blocks satisfy every
/// description of the plant. The proposal sets are the bounded constituents
/// and the equal-weight combination, tightest first.
pub fn sample_consistent_deltas<S: Scalar>(
    plant: &UncertainPlant<S>,
    count: usize,
    seed: u64,
) -> Result<Vec<DMatrix<S>>> {
    let ab: Vec<Qmi<S>> = plant
        .qmis()
        .filter(|(b, _)| *b == RowBlock::Ab)
        .map(|(_, q)| q.clone())
        .collect();
    let cd: Vec<Qmi<S>> = plant
        .qmis()
        .filter(|(b, _)| *b == RowBlock::Cd)
        .map(|(_, q)| q.clone())
        .collect();
    let theta_ab = sample_block(&ab, count, seed)?;
    let theta_cd = sample_block(&cd, count, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let (nx, mp, py) = (plant.nx(), plant.mp(), plant.py());
    Ok(theta_ab
        .into_iter()
        .zip(theta_cd)
        .map(|(tab, tcd)| {
            let mut delta = DMatrix::zeros(nx + py, nx + mp);
            delta.view_mut((0, 0), (nx, nx + mp)).copy_from(&tab);
            delta.view_mut((nx, 0), (py, nx + mp)).copy_from(&tcd);
            delta
        })
        .collect())
}

fn sample_block<S: Scalar>(qmis: &[Qmi<S>], count: usize, seed: u64) -> Result<Vec<DMatrix<S>>> {
    // Proposal sets: every bounded constituent plus the equal-weight
    // combination, tightest first (by the trace of the centered shape), so
    // rejection against the full list stays cheap even when the
    // intersection is much smaller than the combination.
    let mut proposals: Vec<(S, Qmi<S>)> = Vec::new();
    for q in qmis {
        if let Some((_, _, t)) = q.bounded_geometry() {
            proposals.push((t.trace(), q.clone()));
        }
    }
    let ones = MultiplierVector::new(vec![S::one(); qmis.len()], vec![])?;
    let envelope = Qmi::nonneg_combination(qmis, &[], &ones)?;
    if let Some((_, _, t)) = envelope.bounded_geometry() {
        proposals.push((t.trace(), envelope));
    }
    if proposals.is_empty() {
        return Err(Error::Unbounded(
            "no bounded proposal set for plant sampling".into(),
        ));
    }
    proposals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let tol = cast::<S>(1e-9);
    let batch_size = count.max(64);
    let mut accepted = Vec::with_capacity(count);
    for (round, (_, proposal)) in proposals.iter().enumerate() {
        for attempt in 0..60u64 {
            let batch = analysis::sample_members(
                proposal,
                batch_size,
                seed.wrapping_add(attempt).wrapping_add((round as u64) << 16),
            )?;
            for theta in batch {
                if accepted.len() >= count {
                    break;
                }
                let mut ok = true;
                for q in qmis {
                    if !q.contains(&theta, tol)? {
                        ok = false;
                        break;
                    }
                }
                if ok {
                    accepted.push(theta);
                }
            }
            if accepted.len() >= count {
                return Ok(accepted);
            }
        }
    }
    Err(Error::SolverFailure(
        "rejection sampling of consistent plants stalled".into(),
    ))
}

/// Optimal nominal filtering bound for one exactly known plant, via the same
/// linearizing substitution without any uncertainty channel. Serves as an
/// independent reference for the point-uncertainty limit.
pub fn nominal_filter_bound<S: Scalar>(
    mats: &PlantMatrices<S>,
    cp: &DMatrix<S>,
    dp: &DMatrix<S>,
    opts: &SynthesisOptions,
) -> Result<(Estimator<S>, S)> {
    let nx = mats.a.nrows();
    let py = mats.cy.nrows();
    let mp = mats.bp.ncols();
    let pp = cp.nrows();
    let dv = 2 * nx + mp;
    let dm = dv + 2 * nx + pp;
    let (ox, oxh, owp) = (0usize, nx, 2 * nx);
    let (oe1, oe2, oer) = (dv, dv + nx, dv + 2 * nx);

    let mut problem = LmiProblem::<S>::new();
    let x1 = problem.sym_var("x1", nx, false);
    let xhat = problem.sym_var("xhat", nx, false);
    let k = problem.rect_var("k", nx, nx);
    let l = problem.rect_var("l", nx, py);
    let ce = problem.rect_var("ce", pp, nx);
    let de = problem.rect_var("de", pp, py);
    let g2 = problem.scalar_var("gamma_sq", Some(S::zero()));

    let mut e = LmiExpr::zeros(dm);
    e.add_constant(&(identity::<S>(dm) * -cast::<S>(opts.stability_margin)));
    add_structured_x(&mut e, x1, xhat, nx, ox, S::one());
    e.add_scalar_block(g2, owp, owp, &identity::<S>(mp));
    // −X·A_cl rows: A_cl = [[A, 0], [B_E C_y, A_E]], B_cl = [B_p; B_E D_yp].
    let neg_a = -&mats.a;
    let neg_cy = -&mats.cy;
    let neg_bp = -&mats.bp;
    let neg_dyp = -&mats.dyp;
    e.add_var_block(x1, nx, nx, oe1, ox, None, Some(&neg_a), true);
    e.add_var_block(l, nx, py, oe1, ox, None, Some(&neg_cy), true);
    e.add_var_block(xhat, nx, nx, oe2, ox, None, Some(&neg_a), true);
    e.add_var_block(l, nx, py, oe2, ox, None, Some(&neg_cy), true);
    let neg_i = identity::<S>(nx) * -S::one();
    e.add_var_block(k, nx, nx, oe1, oxh, Some(&neg_i), None, true);
    e.add_var_block(k, nx, nx, oe2, oxh, Some(&neg_i), None, true);
    e.add_var_block(x1, nx, nx, oe1, owp, None, Some(&neg_bp), true);
    e.add_var_block(l, nx, py, oe1, owp, None, Some(&neg_dyp), true);
    e.add_var_block(xhat, nx, nx, oe2, owp, None, Some(&neg_bp), true);
    e.add_var_block(l, nx, py, oe2, owp, None, Some(&neg_dyp), true);
    add_structured_x(&mut e, x1, xhat, nx, oe1, S::one());
    // Error rows: −C_cl, −D_cl, +I.
    e.add_const_block(oer, ox, &(-cp));
    e.add_var_block(de, pp, py, oer, ox, None, Some(&mats.cy), true);
    e.add_var_block(ce, pp, nx, oer, oxh, None, None, true);
    e.add_const_block(oer, owp, &(-dp));
    e.add_var_block(de, pp, py, oer, owp, None, Some(&mats.dyp), true);
    e.add_const_block(oer, oer, &identity::<S>(pp));
    problem.add_psd_constraint(e);

    let mut xc = LmiExpr::zeros(2 * nx);
    add_structured_x(&mut xc, x1, xhat, nx, 0, S::one());
    xc.add_constant(&(identity::<S>(2 * nx) * -cast::<S>(opts.x_floor)));
    problem.add_psd_constraint(xc);
    problem.add_objective(ObjectiveTerm::Scalar(g2, S::one()));

    let sol = sdp::solve(&problem, &opts.settings)?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::SolverFailure(format!(
            "nominal filtering program: {}",
            sol.solver_status
        )));
    }
    let xhat_val = matops::symmetrize(sol.matrix(xhat));
    let chol = xhat_val
        .cholesky()
        .ok_or_else(|| Error::SolverFailure("filter transformation is singular".into()))?;
    let est = Estimator::new(
        chol.solve(sol.matrix(k)),
        chol.solve(sol.matrix(l)),
        sol.matrix(ce).clone(),
        sol.matrix(de).clone(),
    )?;
    Ok((est, fsqrt(fmax(sol.scalar(g2), S::zero()))))
}
