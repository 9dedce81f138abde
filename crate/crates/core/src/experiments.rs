//! Seeded benchmark scenarios: two-stage data generation, prior and
//! per-sample set construction, the priors × constraint-sets synthesis grid
//! and its table outputs.
//!
//! Everything is deterministic in the configured seed: the same
//! configuration produces byte-identical datasets and tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analysis;
use crate::error::{Error, Result};
use crate::fileio::{self, KvMap};
use crate::prior as data_prior;
use crate::qmi::{MultiplierVector, Qmi};
use crate::reparam::{
    self, QhatObjective, QmiSampleBuilder, RegressionSample, ReparamConfig,
};
use crate::sdp::SolverSettings;
use crate::synth::{self, RowBlock, SynthesisOptions, UncertainPlant};

/// Prior families, keyed by how they are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PriorKind {
    /// Stacked-data bound dualized into one bounded description.
    Stacked,
    /// Operator-norm ball around a (scaled) reference model.
    Ball,
    /// Fixed-multiplier intersection of per-sample dual sets, dualized.
    Informativity,
    /// All of the above together.
    Combined,
}

impl PriorKind {
    pub const ALL: [PriorKind; 4] = [
        PriorKind::Stacked,
        PriorKind::Ball,
        PriorKind::Informativity,
        PriorKind::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PriorKind::Stacked => "stacked",
            PriorKind::Ball => "ball",
            PriorKind::Informativity => "informativity",
            PriorKind::Combined => "combined",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "stacked" => Ok(PriorKind::Stacked),
            "ball" => Ok(PriorKind::Ball),
            "informativity" => Ok(PriorKind::Informativity),
            "combined" => Ok(PriorKind::Combined),
            other => Err(Error::InvalidConfig(format!("unknown prior '{other}'"))),
        }
    }
}

/// Additional constraint sets added on top of a prior column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ConstraintKind {
    /// Prior only.
    None,
    /// Per-sample reparameterized descriptions.
    Data,
    /// Structural-knowledge descriptions.
    Prior,
    /// Both.
    Combined,
}

impl ConstraintKind {
    pub const ALL: [ConstraintKind; 4] = [
        ConstraintKind::None,
        ConstraintKind::Data,
        ConstraintKind::Prior,
        ConstraintKind::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConstraintKind::None => "none",
            ConstraintKind::Data => "data",
            ConstraintKind::Prior => "structural",
            ConstraintKind::Combined => "combined",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "none" => Ok(ConstraintKind::None),
            "data" => Ok(ConstraintKind::Data),
            "structural" => Ok(ConstraintKind::Prior),
            "combined" => Ok(ConstraintKind::Combined),
            other => Err(Error::InvalidConfig(format!(
                "unknown constraint set '{other}'"
            ))),
        }
    }

    fn uses_data(self) -> bool {
        matches!(self, ConstraintKind::Data | ConstraintKind::Combined)
    }

    fn uses_structural(self) -> bool {
        matches!(self, ConstraintKind::Prior | ConstraintKind::Combined)
    }
}

/// True system matrices of a scenario.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    pub a: DMatrix<f64>,
    pub bp: DMatrix<f64>,
    pub cy: DMatrix<f64>,
    pub dyp: DMatrix<f64>,
    pub cp: DMatrix<f64>,
    pub dp: DMatrix<f64>,
}

impl SystemMatrices {
    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn mp(&self) -> usize {
        self.bp.ncols()
    }

    pub fn py(&self) -> usize {
        self.cy.nrows()
    }

    pub fn theta_ab(&self) -> DMatrix<f64> {
        hstack(&self.a, &self.bp)
    }

    pub fn theta_cd(&self) -> DMatrix<f64> {
        hstack(&self.cy, &self.dyp)
    }
}

fn hstack(left: &DMatrix<f64>, right: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(left.nrows(), left.ncols() + right.ncols());
    out.view_mut((0, 0), (left.nrows(), left.ncols())).copy_from(left);
    out.view_mut((0, left.ncols()), (right.nrows(), right.ncols()))
        .copy_from(right);
    out
}

/// One structural constraint `σ_max(EθF + G)² ≤ ε²` on a row block.
#[derive(Debug, Clone)]
pub struct StructuralConstraint {
    pub block: RowBlock,
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub eps: f64,
}

/// Full scenario description. `Q = I` and `R = α²` throughout.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub system: SystemMatrices,
    pub n_samples: usize,
    pub alpha_w: f64,
    pub alpha_v: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub x0_range: (f64, f64),
    pub wp_range: (f64, f64),
    /// Scale applied to the true `[A B_p]` when centering the ball prior.
    pub ball_scale: f64,
    /// Read the ball bound as `σ_max ≤ β²` instead of the default `≤ β`.
    pub ball_radius_squared: bool,
    /// Tolerance for the row/column sum constraints.
    pub sum_constraint_eps: f64,
    /// Column-sum constraint targets the first column of `B_p` instead of
    /// the first column of `A`.
    pub sum_column_of_bp: bool,
    /// Center the informativity prior's reparameterizations at the true
    /// parameters instead of the prior center.
    pub informativity_true_center: bool,
    pub priors: Vec<PriorKind>,
    pub constraint_sets: Vec<ConstraintKind>,
    pub structural: Vec<StructuralConstraint>,
    pub validation_samples: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig("need at least one sample".into()));
        }
        if self.alpha_w <= 0.0 || self.alpha_v <= 0.0 {
            return Err(Error::InvalidConfig("noise radius must be positive".into()));
        }
        if self.x0_range.0 >= self.x0_range.1 || self.wp_range.0 >= self.wp_range.1 {
            return Err(Error::InvalidConfig("ranges must be nonempty".into()));
        }
        if self.priors.is_empty() || self.constraint_sets.is_empty() {
            return Err(Error::InvalidConfig("empty prior or constraint grid".into()));
        }
        Ok(())
    }
}

/// Two-state benchmark: full-state estimation from one noisy measurement.
pub fn system1_config(seed: u64) -> ScenarioConfig {
    let system = SystemMatrices {
        a: DMatrix::from_row_slice(2, 2, &[0.7, 0.0, 0.3, 0.7]),
        bp: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
        cy: DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
        dyp: DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
        cp: DMatrix::identity(2, 2),
        dp: DMatrix::zeros(2, 2),
    };
    let structural = system1_structural(&system, 0.01, false);
    ScenarioConfig {
        system,
        n_samples: 50,
        alpha_w: 0.0005,
        alpha_v: 0.0005,
        beta: 0.15,
        epsilon: 0.1,
        x0_range: (-2.0, 2.0),
        wp_range: (-2.0, 2.0),
        ball_scale: 1.04,
        ball_radius_squared: false,
        sum_constraint_eps: 0.01,
        sum_column_of_bp: false,
        informativity_true_center: true,
        priors: PriorKind::ALL.to_vec(),
        constraint_sets: ConstraintKind::ALL.to_vec(),
        structural,
        validation_samples: 20,
        seed,
    }
}

/// Structural knowledge for the two-state benchmark: every zero entry stays
/// within `zero_eps` in absolute value (except the first column of `B_p`),
/// the last row of `A` and the first column of `A` (or `B_p`) sum to one,
/// and `A₍₂,₁₎` is within 1% of its true value.
fn system1_structural(
    system: &SystemMatrices,
    zero_eps: f64,
    sum_column_of_bp: bool,
) -> Vec<StructuralConstraint> {
    let mut out = Vec::new();
    let theta_ab = system.theta_ab();
    let theta_cd = system.theta_cd();
    // Zero entries; B_p's first column (θ column nx) is exempt.
    for (block, theta, exempt_col) in [
        (RowBlock::Ab, &theta_ab, Some(system.nx())),
        (RowBlock::Cd, &theta_cd, None),
    ] {
        for i in 0..theta.nrows() {
            for j in 0..theta.ncols() {
                if theta[(i, j)] == 0.0 && exempt_col != Some(j) {
                    out.push(StructuralConstraint {
                        block,
                        e: unit_row(theta.nrows(), i),
                        f: unit_col(theta.ncols(), j),
                        g: DMatrix::zeros(1, 1),
                        eps: zero_eps,
                    });
                }
            }
        }
    }
    // Last row of A sums to one.
    let mut f_row_sum = DMatrix::zeros(theta_ab.ncols(), 1);
    for j in 0..system.nx() {
        f_row_sum[(j, 0)] = 1.0;
    }
    out.push(StructuralConstraint {
        block: RowBlock::Ab,
        e: unit_row(theta_ab.nrows(), theta_ab.nrows() - 1),
        f: f_row_sum,
        g: DMatrix::from_element(1, 1, -1.0),
        eps: zero_eps,
    });
    // First column (of A by default, of B_p behind the switch) sums to one.
    let col = if sum_column_of_bp { system.nx() } else { 0 };
    out.push(StructuralConstraint {
        block: RowBlock::Ab,
        e: DMatrix::from_element(1, theta_ab.nrows(), 1.0),
        f: unit_col(theta_ab.ncols(), col),
        g: DMatrix::from_element(1, 1, -1.0),
        eps: zero_eps,
    });
    // A₍₂,₁₎ within 1% of its true value.
    let target = system.a[(1, 0)];
    out.push(StructuralConstraint {
        block: RowBlock::Ab,
        e: unit_row(theta_ab.nrows(), 1),
        f: unit_col(theta_ab.ncols(), 0),
        g: DMatrix::from_element(1, 1, -target),
        eps: 0.01 * target.abs(),
    });
    out
}

/// Scalar benchmark: noisy data, large disturbances.
pub fn system2_config(seed: u64) -> ScenarioConfig {
    let system = SystemMatrices {
        a: DMatrix::from_element(1, 1, 0.8),
        bp: DMatrix::from_element(1, 1, 1.0),
        cy: DMatrix::from_element(1, 1, 1.0),
        dyp: DMatrix::from_element(1, 1, 0.1),
        cp: DMatrix::from_element(1, 1, 1.0),
        dp: DMatrix::from_element(1, 1, 0.0),
    };
    // B_p within 1% of its true value.
    let structural = vec![StructuralConstraint {
        block: RowBlock::Ab,
        e: DMatrix::from_element(1, 1, 1.0),
        f: unit_col(2, 1),
        g: DMatrix::from_element(1, 1, -system.bp[(0, 0)]),
        eps: 0.01 * system.bp[(0, 0)].abs(),
    }];
    ScenarioConfig {
        system,
        n_samples: 10,
        alpha_w: 0.6,
        alpha_v: 0.6,
        beta: 0.1,
        epsilon: 0.1,
        x0_range: (-10.0, 10.0),
        wp_range: (-4.0, 6.0),
        ball_scale: 1.04,
        ball_radius_squared: false,
        sum_constraint_eps: 0.01,
        sum_column_of_bp: false,
        informativity_true_center: true,
        priors: PriorKind::ALL.to_vec(),
        constraint_sets: ConstraintKind::ALL.to_vec(),
        structural,
        validation_samples: 20,
        seed,
    }
}

pub fn preset_config(example: u8, seed: u64) -> Result<ScenarioConfig> {
    match example {
        1 => Ok(system1_config(seed)),
        2 => Ok(system2_config(seed)),
        other => Err(Error::InvalidConfig(format!(
            "unknown example {other} (use 1 or 2)"
        ))),
    }
}

fn unit_row(dim: usize, idx: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(1, dim);
    m[(0, idx)] = 1.0;
    m
}

fn unit_col(dim: usize, idx: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, 1);
    m[(idx, 0)] = 1.0;
    m
}

/// One simulated first-stage record: states as columns of `x` (length
/// `N+1`), measurements and performance inputs as columns of `y`, `wp`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub wp: DMatrix<f64>,
}

/// Simulates the two-stage data collection: full-state measurements plus
/// measured outputs, with uniformly drawn initial state and performance
/// input and disturbances drawn uniformly on the ball of radius α
/// (radius `α·u^{1/dim}`). Deterministic in the seed.
pub fn generate_data(cfg: &ScenarioConfig) -> Result<Dataset> {
    cfg.validate()?;
    let sys = &cfg.system;
    let (nx, mp, py) = (sys.nx(), sys.mp(), sys.py());
    let n = cfg.n_samples;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut x = DMatrix::zeros(nx, n + 1);
    let mut y = DMatrix::zeros(py, n);
    let mut wp = DMatrix::zeros(mp, n);

    let mut state = DVector::from_fn(nx, |_, _| uniform(&mut rng, cfg.x0_range));
    x.column_mut(0).copy_from(&state);
    for k in 0..n {
        let wpk = DVector::from_fn(mp, |_, _| uniform(&mut rng, cfg.wp_range));
        let wk = ball_draw(&mut rng, nx, cfg.alpha_w);
        let vk = ball_draw(&mut rng, py, cfg.alpha_v);
        let yk = &sys.cy * &state + &sys.dyp * &wpk + vk;
        state = &sys.a * &state + &sys.bp * &wpk + wk;
        x.column_mut(k + 1).copy_from(&state);
        y.column_mut(k).copy_from(&yk);
        wp.column_mut(k).copy_from(&wpk);
    }
    Ok(Dataset { x, y, wp })
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    range.0 + (range.1 - range.0) * rng.random::<f64>()
}

fn ball_draw(rng: &mut ChaCha8Rng, dim: usize, alpha: f64) -> DVector<f64> {
    let mut dir = DVector::from_fn(dim, |_, _| {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    });
    let norm = dir.norm();
    if norm > 0.0 {
        dir /= norm;
    }
    let radius = alpha * rng.random::<f64>().powf(1.0 / dim as f64);
    dir * radius
}

/// Per-sample regressions for both row blocks: `X_k = [x_k; w_p,k]`,
/// `Y_k = x_{k+1}` (state update) or `y_k` (measurement), `Q = I`,
/// `R = α²`.
pub fn regression_samples(
    cfg: &ScenarioConfig,
    ds: &Dataset,
) -> Result<(Vec<RegressionSample<f64>>, Vec<RegressionSample<f64>>)> {
    let sys = &cfg.system;
    let (nx, mp, py) = (sys.nx(), sys.mp(), sys.py());
    let n = cfg.n_samples;
    let q_ab = DMatrix::<f64>::identity(nx, nx);
    let q_cd = DMatrix::<f64>::identity(py, py);
    let r_ab = DMatrix::from_element(1, 1, cfg.alpha_w * cfg.alpha_w);
    let r_cd = DMatrix::from_element(1, 1, cfg.alpha_v * cfg.alpha_v);
    let mut ab = Vec::with_capacity(n);
    let mut cd = Vec::with_capacity(n);
    for k in 0..n {
        let mut xk = DMatrix::zeros(nx + mp, 1);
        xk.view_mut((0, 0), (nx, 1)).copy_from(&ds.x.column(k));
        xk.view_mut((nx, 0), (mp, 1)).copy_from(&ds.wp.column(k));
        let y_ab = ds.x.column(k + 1).into_owned();
        let y_cd = ds.y.column(k).into_owned();
        ab.push(RegressionSample::new(
            xk.clone(),
            DMatrix::from_column_slice(nx, 1, y_ab.as_slice()),
            q_ab.clone(),
            r_ab.clone(),
        )?);
        cd.push(RegressionSample::new(
            xk,
            DMatrix::from_column_slice(py, 1, y_cd.as_slice()),
            q_cd.clone(),
            r_cd.clone(),
        )?);
    }
    Ok((ab, cd))
}

/// Descriptions for one row block.
#[derive(Debug, Clone, Default)]
pub struct BlockQmis {
    pub ab: Vec<Qmi<f64>>,
    pub cd: Vec<Qmi<f64>>,
}

/// Everything `run_scenario` needs per prior column.
#[derive(Debug, Clone)]
pub struct ScenarioSets {
    pub priors: BTreeMap<PriorKind, BlockQmis>,
    pub data_qmis: BTreeMap<PriorKind, BlockQmis>,
    pub structural_qmis: BTreeMap<PriorKind, BlockQmis>,
}

/// Builds every prior family, the per-sample descriptions (one per sample
/// and row block, reparameterized against each prior) and the structural
/// descriptions.
pub fn build_sets(cfg: &ScenarioConfig, ds: &Dataset) -> Result<ScenarioSets> {
    let sys = &cfg.system;
    let (ab_samples, cd_samples) = regression_samples(cfg, ds)?;
    let theta_ab_true = sys.theta_ab();
    let theta_cd_true = sys.theta_cd();
    let radius = if cfg.ball_radius_squared {
        cfg.beta * cfg.beta
    } else {
        cfg.beta
    };

    // The data-driven priors can be extreme needles (radius ~ noise level,
    // center O(1)); a small relative inflation keeps every downstream
    // program well conditioned and identical across grid cells, at the cost
    // of a slightly enlarged (still sound) set.
    let regularize = |q: Qmi<f64>| {
        let delta = 1e-6 * crate::matops::max_abs(q.pi()).max(1.0);
        q.inflated(delta)
    };
    let stacked = BlockQmis {
        ab: vec![regularize(data_prior::prior_from_data(&ab_samples)?)],
        cd: vec![regularize(data_prior::prior_from_data(&cd_samples)?)],
    };
    let ball = BlockQmis {
        ab: vec![Qmi::ball_prior(&(&theta_ab_true * cfg.ball_scale), radius)?],
        cd: vec![Qmi::ball_prior(&theta_cd_true, radius)?],
    };
    let informativity = BlockQmis {
        ab: vec![regularize(informativity_prior(&ab_samples)?)],
        cd: vec![regularize(informativity_prior(&cd_samples)?)],
    };
    let combined = BlockQmis {
        ab: [&stacked.ab[..], &ball.ab[..], &informativity.ab[..]].concat(),
        cd: [&stacked.cd[..], &ball.cd[..], &informativity.cd[..]].concat(),
    };

    let mut priors = BTreeMap::new();
    priors.insert(PriorKind::Stacked, stacked);
    priors.insert(PriorKind::Ball, ball);
    priors.insert(PriorKind::Informativity, informativity);
    priors.insert(PriorKind::Combined, combined);

    let settings = SolverSettings::default();
    let mut data_qmis = BTreeMap::new();
    let mut structural_qmis = BTreeMap::new();
    for kind in PriorKind::ALL {
        if !cfg.priors.contains(&kind)
            && !(cfg.priors.contains(&PriorKind::Combined) && kind == PriorKind::Combined)
        {
            // Sets are cheap relative to synthesis; building all keeps the
            // bookkeeping simple even when a column is deselected.
        }
        let block = &priors[&kind];
        let center_ab = block_center(cfg, &block.ab, &theta_ab_true, kind);
        let center_cd = block_center(cfg, &block.cd, &theta_cd_true, kind);

        let mut data_block = BlockQmis::default();
        let builder_ab = QmiSampleBuilder::new(
            block.ab.clone(),
            ReparamConfig {
                epsilon: cfg.epsilon,
                theta_bar: center_ab.clone(),
                objective: QhatObjective::Trace,
            },
            settings.clone(),
        )?;
        for s in &ab_samples {
            data_block.ab.push(builder_ab.qmi_for(s)?.sigma_hat);
        }
        let builder_cd = QmiSampleBuilder::new(
            block.cd.clone(),
            ReparamConfig {
                epsilon: cfg.epsilon,
                theta_bar: center_cd.clone(),
                objective: QhatObjective::Trace,
            },
            settings.clone(),
        )?;
        for s in &cd_samples {
            data_block.cd.push(builder_cd.qmi_for(s)?.sigma_hat);
        }
        data_qmis.insert(kind, data_block);

        let mut structural_block = BlockQmis::default();
        for sc in &cfg.structural {
            let (priors_ref, center) = match sc.block {
                RowBlock::Ab => (&block.ab, &center_ab),
                RowBlock::Cd => (&block.cd, &center_cd),
            };
            let config = ReparamConfig {
                epsilon: cfg.epsilon,
                theta_bar: center.clone(),
                objective: QhatObjective::Trace,
            };
            let qmi = reparam::structural_constraint_qmi(
                &sc.e, &sc.f, &sc.g, sc.eps, priors_ref, &config, &settings,
            )?;
            match sc.block {
                RowBlock::Ab => structural_block.ab.push(qmi),
                RowBlock::Cd => structural_block.cd.push(qmi),
            }
        }
        structural_qmis.insert(kind, structural_block);
    }

    Ok(ScenarioSets {
        priors,
        data_qmis,
        structural_qmis,
    })
}

fn block_center(
    cfg: &ScenarioConfig,
    priors: &[Qmi<f64>],
    theta_true: &DMatrix<f64>,
    kind: PriorKind,
) -> DMatrix<f64> {
    if kind == PriorKind::Informativity && cfg.informativity_true_center {
        return theta_true.clone();
    }
    priors
        .iter()
        .find_map(|q| q.bounded_center())
        .unwrap_or_else(|| DMatrix::zeros(theta_true.nrows(), theta_true.ncols()))
}

/// Fixed-multiplier combination of the per-sample dual sets, dualized into a
/// bounded primal description. The multipliers are fixed before dualization
/// (free multipliers do not survive the matrix inverse); normalizing each
/// sample's dual by its magnitude makes the choice scale invariant and keeps
/// this prior genuinely different from the stacked-bound route, which
/// corresponds to uniform weights.
fn informativity_prior(samples: &[RegressionSample<f64>]) -> Result<Qmi<f64>> {
    let n = samples.len();
    let duals: Vec<Qmi<f64>> = samples
        .iter()
        .map(|s| {
            let st = data_prior::stack_samples(std::slice::from_ref(s))?;
            data_prior::consistency_set_dual(&st)
        })
        .collect::<Result<_>>()?;
    let weights: Vec<f64> = duals
        .iter()
        .map(|d| 1.0 / (n as f64 * crate::matops::max_abs(d.pi()).max(1e-300)))
        .collect();
    let combined = Qmi::nonneg_combination(&duals, &[], &MultiplierVector::new(weights, vec![])?)?;
    combined.dualize()
}

/// Assembles the uncertain plant for one table cell.
pub fn assemble_plant(
    cfg: &ScenarioConfig,
    sets: &ScenarioSets,
    prior: PriorKind,
    cset: ConstraintKind,
) -> Result<UncertainPlant<f64>> {
    let base = &sets.priors[&prior];
    let mut ab = base.ab.clone();
    let mut cd = base.cd.clone();
    if cset.uses_data() {
        ab.extend(sets.data_qmis[&prior].ab.iter().cloned());
        cd.extend(sets.data_qmis[&prior].cd.iter().cloned());
    }
    if cset.uses_structural() {
        ab.extend(sets.structural_qmis[&prior].ab.iter().cloned());
        cd.extend(sets.structural_qmis[&prior].cd.iter().cloned());
    }
    let qmi_ab = ab.remove(0);
    let qmi_cd = cd.remove(0);
    let mut extras: Vec<(RowBlock, Qmi<f64>)> =
        ab.into_iter().map(|q| (RowBlock::Ab, q)).collect();
    extras.extend(cd.into_iter().map(|q| (RowBlock::Cd, q)));
    UncertainPlant::new(
        cfg.system.cp.clone(),
        cfg.system.dp.clone(),
        qmi_ab,
        qmi_cd,
        extras,
    )
}

/// Outcome of one synthesis cell.
#[derive(Debug, Clone)]
pub enum CellOutcome {
    Feasible {
        gamma: f64,
        certified: bool,
        validated: bool,
        max_ratio: f64,
    },
    Infeasible {
        reason: String,
    },
}

/// Certified-bound grid: rows are constraint sets, columns are priors.
#[derive(Debug, Clone)]
pub struct ResultTable {
    pub priors: Vec<PriorKind>,
    pub rows: Vec<ConstraintKind>,
    pub cells: BTreeMap<(ConstraintKind, PriorKind), CellOutcome>,
}

impl ResultTable {
    pub fn cell(&self, row: ConstraintKind, col: PriorKind) -> Option<&CellOutcome> {
        self.cells.get(&(row, col))
    }

    pub fn gamma(&self, row: ConstraintKind, col: PriorKind) -> Option<f64> {
        match self.cell(row, col)? {
            CellOutcome::Feasible { gamma, .. } => Some(*gamma),
            CellOutcome::Infeasible { .. } => None,
        }
    }

    fn entry_text(&self, row: ConstraintKind, col: PriorKind) -> String {
        match self.cell(row, col) {
            Some(CellOutcome::Feasible { gamma, .. }) => format!("{gamma:.6}"),
            Some(CellOutcome::Infeasible { .. }) => "infeasible".to_string(),
            None => "-".to_string(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<&str> = std::iter::once("constraints")
            .chain(self.priors.iter().map(|p| p.name()))
            .collect();
        let _ = writeln!(out, "{}", header.join(","));
        for row in &self.rows {
            let mut cells = vec![row.name().to_string()];
            for col in &self.priors {
                cells.push(self.entry_text(*row, *col));
            }
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut grid: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["constraints".to_string()];
        header.extend(self.priors.iter().map(|p| p.name().to_string()));
        grid.push(header);
        for row in &self.rows {
            let mut cells = vec![row.name().to_string()];
            for col in &self.priors {
                cells.push(self.entry_text(*row, *col));
            }
            grid.push(cells);
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|j| grid.iter().map(|r| r[j].len()).max().unwrap_or(1))
            .collect();
        let mut out = String::new();
        for (i, row) in grid.iter().enumerate() {
            let padded: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(out, "| {} |", padded.join(" | "));
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                let _ = writeln!(out, "| {} |", rule.join(" | "));
            }
        }
        out
    }
}

/// Synthesizes one cell: assemble, synthesize, re-verify the bound and
/// validate it on sampled plants.
pub fn run_cell(
    cfg: &ScenarioConfig,
    sets: &ScenarioSets,
    prior: PriorKind,
    cset: ConstraintKind,
    seed: u64,
) -> CellOutcome {
    let plant = match assemble_plant(cfg, sets, prior, cset) {
        Ok(p) => p,
        Err(e) => {
            return CellOutcome::Infeasible {
                reason: e.to_string(),
            }
        }
    };
    let opts = SynthesisOptions::default();
    let result = match synth::synthesize(&plant, &opts) {
        Ok(r) => r,
        Err(e) => {
            return CellOutcome::Infeasible {
                reason: e.to_string(),
            }
        }
    };
    let certified = matches!(
        synth::verify_robust_bound(&plant, &result.estimator, result.gamma, &opts),
        Ok(synth::BoundCheck::Certified { .. })
    );
    let (validated, max_ratio) =
        match synth::validate_by_sampling(&plant, &result, cfg.validation_samples, seed) {
            Ok(report) => (report.pass, report.max_ratio),
            Err(_) => (false, f64::NAN),
        };
    CellOutcome::Feasible {
        gamma: result.gamma,
        certified,
        validated,
        max_ratio,
    }
}

/// Runs the whole priors × constraint-sets grid. Cells are independent and
/// run on the global worker pool; failures stay local to their cell.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let ds = generate_data(cfg)?;
    let sets = build_sets(cfg, &ds)?;
    let grid: Vec<(ConstraintKind, PriorKind)> = cfg
        .constraint_sets
        .iter()
        .flat_map(|row| cfg.priors.iter().map(move |col| (*row, *col)))
        .collect();
    let cells: Vec<((ConstraintKind, PriorKind), CellOutcome)> = grid
        .par_iter()
        .enumerate()
        .map(|(idx, (row, col))| {
            let outcome = run_cell(cfg, &sets, *col, *row, cfg.seed ^ ((idx as u64) << 32));
            ((*row, *col), outcome)
        })
        .collect();
    Ok(ResultTable {
        priors: cfg.priors.clone(),
        rows: cfg.constraint_sets.clone(),
        cells: cells.into_iter().collect(),
    })
}

/// Full benchmark reproduction: generates the dataset, runs the grid and
/// writes `dataset/`, `table.csv` and `table.md` under `out_dir`.
pub fn reproduce(example: u8, seed: u64, out_dir: &Path) -> Result<ResultTable> {
    let cfg = preset_config(example, seed)?;
    let ds = generate_data(&cfg)?;
    write_dataset(&cfg, &ds, &out_dir.join("dataset"))?;
    let table = run_scenario(&cfg)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("table.csv"), table.to_csv())?;
    std::fs::write(out_dir.join("table.md"), table.to_markdown())?;
    Ok(table)
}

/// Writes `x.csv`, `y.csv`, `wp.csv` and a `meta.txt` echo of the resolved
/// configuration.
pub fn write_dataset(cfg: &ScenarioConfig, ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    fileio::write_matrix(&dir.join("x.csv"), &ds.x)?;
    fileio::write_matrix(&dir.join("y.csv"), &ds.y)?;
    fileio::write_matrix(&dir.join("wp.csv"), &ds.wp)?;
    config_to_map(cfg).write(&dir.join("meta.txt"))?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<(ScenarioConfig, Dataset)> {
    let cfg = config_from_map(&KvMap::read(&dir.join("meta.txt"))?)?;
    let ds = Dataset {
        x: fileio::read_matrix(&dir.join("x.csv"))?,
        y: fileio::read_matrix(&dir.join("y.csv"))?,
        wp: fileio::read_matrix(&dir.join("wp.csv"))?,
    };
    Ok((cfg, ds))
}

/// Serializes a scenario configuration into the flat key-value form.
pub fn config_to_map(cfg: &ScenarioConfig) -> KvMap {
    let mut kv = KvMap::new();
    kv.set_matrix("system.a", &cfg.system.a);
    kv.set_matrix("system.bp", &cfg.system.bp);
    kv.set_matrix("system.cy", &cfg.system.cy);
    kv.set_matrix("system.dyp", &cfg.system.dyp);
    kv.set_matrix("system.cp", &cfg.system.cp);
    kv.set_matrix("system.dp", &cfg.system.dp);
    kv.set("data.samples", cfg.n_samples);
    kv.set("data.alpha_w", cfg.alpha_w);
    kv.set("data.alpha_v", cfg.alpha_v);
    kv.set("data.x0_min", cfg.x0_range.0);
    kv.set("data.x0_max", cfg.x0_range.1);
    kv.set("data.wp_min", cfg.wp_range.0);
    kv.set("data.wp_max", cfg.wp_range.1);
    kv.set("data.seed", cfg.seed);
    kv.set("sets.beta", cfg.beta);
    kv.set("sets.epsilon", cfg.epsilon);
    kv.set("sets.ball_scale", cfg.ball_scale);
    kv.set("sets.ball_radius_squared", cfg.ball_radius_squared);
    kv.set("sets.sum_constraint_eps", cfg.sum_constraint_eps);
    kv.set("sets.sum_column_of_bp", cfg.sum_column_of_bp);
    kv.set(
        "sets.informativity_true_center",
        cfg.informativity_true_center,
    );
    kv.set(
        "grid.priors",
        cfg.priors
            .iter()
            .map(|p| p.name())
            .collect::<Vec<_>>()
            .join(", "),
    );
    kv.set(
        "grid.constraints",
        cfg.constraint_sets
            .iter()
            .map(|c| c.name())
            .collect::<Vec<_>>()
            .join(", "),
    );
    kv.set("grid.validation_samples", cfg.validation_samples);
    for (i, sc) in cfg.structural.iter().enumerate() {
        let base = format!("structural.{i}");
        kv.set(
            &format!("{base}.block"),
            match sc.block {
                RowBlock::Ab => "ab",
                RowBlock::Cd => "cd",
            },
        );
        kv.set_matrix(&format!("{base}.e"), &sc.e);
        kv.set_matrix(&format!("{base}.f"), &sc.f);
        kv.set_matrix(&format!("{base}.g"), &sc.g);
        kv.set(&format!("{base}.eps"), sc.eps);
    }
    kv
}

/// Parses a configuration. A `preset` key (1 or 2) seeds the defaults;
/// individual keys override.
pub fn config_from_map(kv: &KvMap) -> Result<ScenarioConfig> {
    let mut cfg = if kv.contains("preset") {
        preset_config(kv.get_usize("preset")? as u8, 0)?
    } else {
        ScenarioConfig {
            system: SystemMatrices {
                a: kv.get_matrix("system.a")?,
                bp: kv.get_matrix("system.bp")?,
                cy: kv.get_matrix("system.cy")?,
                dyp: kv.get_matrix("system.dyp")?,
                cp: kv.get_matrix("system.cp")?,
                dp: kv.get_matrix("system.dp")?,
            },
            n_samples: 1,
            alpha_w: 0.1,
            alpha_v: 0.1,
            beta: 0.1,
            epsilon: 0.1,
            x0_range: (-1.0, 1.0),
            wp_range: (-1.0, 1.0),
            ball_scale: 1.04,
            ball_radius_squared: false,
            sum_constraint_eps: 0.01,
            sum_column_of_bp: false,
            informativity_true_center: true,
            priors: PriorKind::ALL.to_vec(),
            constraint_sets: ConstraintKind::ALL.to_vec(),
            structural: Vec::new(),
            validation_samples: 20,
            seed: 0,
        }
    };
    if kv.contains("system.a") {
        cfg.system = SystemMatrices {
            a: kv.get_matrix("system.a")?,
            bp: kv.get_matrix("system.bp")?,
            cy: kv.get_matrix("system.cy")?,
            dyp: kv.get_matrix("system.dyp")?,
            cp: kv.get_matrix("system.cp")?,
            dp: kv.get_matrix("system.dp")?,
        };
    }
    if kv.contains("data.samples") {
        cfg.n_samples = kv.get_usize("data.samples")?;
    }
    if kv.contains("data.alpha_w") {
        cfg.alpha_w = kv.get_f64("data.alpha_w")?;
    }
    if kv.contains("data.alpha_v") {
        cfg.alpha_v = kv.get_f64("data.alpha_v")?;
    }
    if kv.contains("data.x0_min") {
        cfg.x0_range = (kv.get_f64("data.x0_min")?, kv.get_f64("data.x0_max")?);
    }
    if kv.contains("data.wp_min") {
        cfg.wp_range = (kv.get_f64("data.wp_min")?, kv.get_f64("data.wp_max")?);
    }
    if kv.contains("data.seed") {
        cfg.seed = kv.get_u64("data.seed")?;
    }
    if kv.contains("sets.beta") {
        cfg.beta = kv.get_f64("sets.beta")?;
    }
    if kv.contains("sets.epsilon") {
        cfg.epsilon = kv.get_f64("sets.epsilon")?;
    }
    if kv.contains("sets.ball_scale") {
        cfg.ball_scale = kv.get_f64("sets.ball_scale")?;
    }
    if kv.contains("sets.ball_radius_squared") {
        cfg.ball_radius_squared = kv.get_bool("sets.ball_radius_squared")?;
    }
    if kv.contains("sets.sum_constraint_eps") {
        cfg.sum_constraint_eps = kv.get_f64("sets.sum_constraint_eps")?;
    }
    if kv.contains("sets.sum_column_of_bp") {
        cfg.sum_column_of_bp = kv.get_bool("sets.sum_column_of_bp")?;
    }
    if kv.contains("sets.informativity_true_center") {
        cfg.informativity_true_center = kv.get_bool("sets.informativity_true_center")?;
    }
    if kv.contains("grid.priors") {
        cfg.priors = kv
            .get_list("grid.priors")?
            .iter()
            .map(|t| PriorKind::parse(t))
            .collect::<Result<_>>()?;
    }
    if kv.contains("grid.constraints") {
        cfg.constraint_sets = kv
            .get_list("grid.constraints")?
            .iter()
            .map(|t| ConstraintKind::parse(t))
            .collect::<Result<_>>()?;
    }
    if kv.contains("grid.validation_samples") {
        cfg.validation_samples = kv.get_usize("grid.validation_samples")?;
    }
    // Structural constraints: explicit entries replace preset defaults.
    let has_structural = kv.keys_with_prefix("structural.").next().is_some();
    if has_structural {
        let mut entries = Vec::new();
        for i in 0.. {
            let base = format!("structural.{i}");
            if !kv.contains(&format!("{base}.block")) {
                break;
            }
            let block = match kv.get_str(&format!("{base}.block"))? {
                "ab" => RowBlock::Ab,
                "cd" => RowBlock::Cd,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown row block '{other}'"
                    )))
                }
            };
            entries.push(StructuralConstraint {
                block,
                e: kv.get_matrix(&format!("{base}.e"))?,
                f: kv.get_matrix(&format!("{base}.f"))?,
                g: kv.get_matrix(&format!("{base}.g"))?,
                eps: kv.get_f64(&format!("{base}.eps"))?,
            });
        }
        cfg.structural = entries;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Quick self-check suite used by the command-line `selftest` subcommand.
/// Returns `(name, pass, detail)` per check.
pub fn selftest(seed: u64) -> Vec<(String, bool, String)> {
    let mut out = Vec::new();
    let mut push = |name: &str, result: std::result::Result<String, String>| match result {
        Ok(detail) => out.push((name.to_string(), true, detail)),
        Err(detail) => out.push((name.to_string(), false, detail)),
    };

    push("left-inverse residual", {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let n = rng.random_range(1..=6usize);
            let m = rng.random_range(1..=n);
            let x = DMatrix::from_fn(n, m, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            if let Ok(g) = crate::matops::left_pinv(&x) {
                worst = worst
                    .max(crate::matops::max_abs(&(&g * &x - DMatrix::identity(m, m))));
            }
        }
        if worst <= 1e-10 {
            Ok(format!("worst residual {worst:.2e}"))
        } else {
            Err(format!("worst residual {worst:.2e}"))
        }
    });

    push("dualization involution", {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let mut worst = 0.0f64;
        for _ in 0..200 {
            let p = rng.random_range(1..=3usize);
            let n = rng.random_range(1..=3usize);
            let d = p + n;
            let t = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let mut j0 = DMatrix::<f64>::zeros(d, d);
            for i in 0..p {
                j0[(i, i)] = -1.0;
            }
            for i in p..d {
                j0[(i, i)] = 1.0;
            }
            let pi = crate::matops::symmetrize(&(t.transpose() * j0 * &t));
            // Keep the instances strictly definite: reject near-singular
            // draws whose inversion error would dominate.
            let scale = crate::matops::max_abs(&pi).max(1.0);
            let ev = crate::matops::sym_eigenvalues(&pi).unwrap();
            if ev.iter().any(|v| v.abs() < 1e-4 * scale) {
                continue;
            }
            let Ok(q) = Qmi::primal(p, n, pi) else { continue };
            let Ok(d1) = q.dualize() else { continue };
            let Ok(d2) = d1.dualize() else { continue };
            let scale = crate::matops::max_abs(q.pi()).max(1.0);
            worst = worst.max(crate::matops::max_abs(&(d2.pi() - q.pi())) / scale);
        }
        if worst <= 1e-10 {
            Ok(format!("worst involution error {worst:.2e}"))
        } else {
            Err(format!("worst involution error {worst:.2e}"))
        }
    });

    push("stacked disturbance bound", {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let alpha = 0.4f64;
        let mut ok = true;
        for _ in 0..1000 {
            let count = rng.random_range(1..=5usize);
            let samples: Vec<_> = (0..count)
                .map(|_| {
                    RegressionSample::new(
                        DMatrix::from_element(1, 1, 1.0 + rng.random::<f64>()),
                        DMatrix::from_element(1, 1, rng.random::<f64>()),
                        DMatrix::from_element(1, 1, 1.0),
                        DMatrix::from_element(1, 1, alpha * alpha),
                    )
                    .unwrap()
                })
                .collect();
            let st = data_prior::stack_samples(&samples).unwrap();
            let qmi = st.disturbance_qmi().unwrap();
            let d =
                DMatrix::from_fn(1, count, |_, _| (rng.random::<f64>() * 2.0 - 1.0) * alpha);
            if !qmi.contains(&d, 1e-9).unwrap() {
                ok = false;
            }
        }
        if ok {
            Ok("no violations in 1000 draws".into())
        } else {
            Err("combined bound violated".into())
        }
    });

    push("peak gain analytic value", {
        let sys = analysis::StateSpace::new(
            DMatrix::<f64>::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 0.0),
        )
        .unwrap();
        match analysis::hinf_norm(&sys, 1e-6) {
            Ok(g) if (g - 2.0).abs() <= 1e-4 => Ok(format!("norm {g:.6}")),
            Ok(g) => Err(format!("norm {g:.6} != 2.0")),
            Err(e) => Err(e.to_string()),
        }
    });

    push("compensation-weight analytic optimum", {
        let prior = Qmi::ball_prior(&DMatrix::<f64>::from_element(1, 1, 0.0), 2.0).unwrap();
        match reparam::solve_qhat(
            &[prior],
            &DMatrix::from_element(1, 1, 1.0),
            3.0,
            &DMatrix::zeros(1, 1),
            QhatObjective::Trace,
            &SolverSettings::default(),
        ) {
            Ok((qhat, lam)) => {
                if (qhat[(0, 0)] - 16.0).abs() <= 1e-4 && (lam[0] - 4.0).abs() <= 1e-4 {
                    Ok(format!("qhat {:.5}, lambda {:.5}", qhat[(0, 0)], lam[0]))
                } else {
                    Err(format!("qhat {:.5}, lambda {:.5}", qhat[(0, 0)], lam[0]))
                }
            }
            Err(e) => Err(e.to_string()),
        }
    });

    push("end-to-end scalar synthesis", {
        let mut cfg = system2_config(seed);
        cfg.priors = vec![PriorKind::Combined];
        cfg.constraint_sets = vec![ConstraintKind::Combined];
        cfg.validation_samples = 20;
        match run_scenario(&cfg) {
            Ok(table) => match table.cell(ConstraintKind::Combined, PriorKind::Combined) {
                Some(CellOutcome::Feasible {
                    gamma,
                    certified,
                    validated,
                    ..
                }) if *certified && *validated => Ok(format!("gamma {gamma:.4}")),
                Some(CellOutcome::Feasible { gamma, .. }) => {
                    Err(format!("gamma {gamma:.4} failed re-verification"))
                }
                other => Err(format!("unexpected outcome {other:?}")),
            },
            Err(e) => Err(e.to_string()),
        }
    });

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_generation_is_deterministic_and_bounded() {
        let cfg = system2_config(7);
        let a = generate_data(&cfg).unwrap();
        let b = generate_data(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.x.ncols(), cfg.n_samples + 1);
        assert!(a.x.column(0).iter().all(|v| v.abs() <= 10.0));
        assert!(a.wp.iter().all(|v| (-4.0..=6.0).contains(v)));
    }

    #[test]
    fn noise_respects_instantaneous_bounds() {
        let cfg = system2_config(3);
        let ds = generate_data(&cfg).unwrap();
        let (ab, cd) = regression_samples(&cfg, &ds).unwrap();
        let theta_ab = cfg.system.theta_ab();
        let theta_cd = cfg.system.theta_cd();
        for s in &ab {
            assert!(s.sigma_contains(&theta_ab, 1e-12).unwrap());
        }
        for s in &cd {
            assert!(s.sigma_contains(&theta_cd, 1e-12).unwrap());
        }
    }

    #[test]
    fn zero_noise_limit_concentrates() {
        let mut cfg = system2_config(5);
        cfg.alpha_w = 1e-4;
        cfg.alpha_v = 1e-4;
        let ds = generate_data(&cfg).unwrap();
        let (ab, _) = regression_samples(&cfg, &ds).unwrap();
        let prior = data_prior::prior_from_data(&ab).unwrap();
        let center = prior.bounded_center().unwrap();
        assert!(
            crate::matops::max_abs(&(center - cfg.system.theta_ab())) < 1e-3,
            "prior center far from truth"
        );
    }

    #[test]
    fn built_sets_contain_truth() {
        for seed in [1u64, 2, 3] {
            let cfg = system2_config(seed);
            let ds = generate_data(&cfg).unwrap();
            let sets = build_sets(&cfg, &ds).unwrap();
            let theta_ab = cfg.system.theta_ab();
            let theta_cd = cfg.system.theta_cd();
            for kind in PriorKind::ALL {
                for q in &sets.priors[&kind].ab {
                    assert!(q.contains(&theta_ab, 1e-7).unwrap(), "{kind:?} ab prior");
                }
                for q in &sets.priors[&kind].cd {
                    assert!(q.contains(&theta_cd, 1e-7).unwrap(), "{kind:?} cd prior");
                }
                for q in &sets.data_qmis[&kind].ab {
                    assert!(q.contains(&theta_ab, 1e-7).unwrap(), "{kind:?} ab sample");
                }
                for q in &sets.data_qmis[&kind].cd {
                    assert!(q.contains(&theta_cd, 1e-7).unwrap(), "{kind:?} cd sample");
                }
                for q in &sets.structural_qmis[&kind].ab {
                    assert!(q.contains(&theta_ab, 1e-7).unwrap(), "{kind:?} structural");
                }
            }
        }
    }

    #[test]
    fn combined_prior_is_subset_of_constituents() {
        let cfg = system2_config(11);
        let ds = generate_data(&cfg).unwrap();
        let sets = build_sets(&cfg, &ds).unwrap();
        let combined = &sets.priors[&PriorKind::Combined];
        // Membership in every combined-list description implies membership
        // in each individual prior (they are literally the same matrices).
        assert_eq!(combined.ab.len(), 3);
        let sample = analysis::sample_members(&combined.ab[0], 50, 9).unwrap();
        for theta in sample {
            let in_all = combined
                .ab
                .iter()
                .all(|q| q.contains(&theta, 1e-9).unwrap());
            if in_all {
                for kind in [PriorKind::Stacked, PriorKind::Ball, PriorKind::Informativity] {
                    assert!(sets.priors[&kind].ab[0].contains(&theta, 1e-9).unwrap());
                }
            }
        }
    }

    #[test]
    fn config_round_trip() {
        let cfg = system1_config(42);
        let map = config_to_map(&cfg);
        let back = config_from_map(&map).unwrap();
        assert_eq!(back.n_samples, cfg.n_samples);
        assert_eq!(back.seed, cfg.seed);
        assert_eq!(back.priors, cfg.priors);
        assert_eq!(back.structural.len(), cfg.structural.len());
        assert_eq!(
            crate::matops::max_abs(&(back.system.a - cfg.system.a)),
            0.0
        );
        let text = map.to_text();
        let reparsed = config_from_map(&KvMap::from_text(&text).unwrap()).unwrap();
        assert_eq!(reparsed.alpha_w, cfg.alpha_w);
    }

    #[test]
    fn preset_shortcut_in_config() {
        let mut kv = KvMap::new();
        kv.set("preset", 2usize);
        kv.set("data.seed", 9usize);
        kv.set("data.samples", 4usize);
        let cfg = config_from_map(&kv).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.n_samples, 4);
        assert_eq!(cfg.system.a[(0, 0)], 0.8);
    }

    #[test]
    fn scenario_grid_small() {
        let mut cfg = system2_config(13);
        cfg.priors = vec![PriorKind::Ball, PriorKind::Combined];
        cfg.constraint_sets = vec![ConstraintKind::None, ConstraintKind::Data];
        cfg.validation_samples = 5;
        let table = run_scenario(&cfg).unwrap();
        for row in &cfg.constraint_sets {
            for col in &cfg.priors {
                match table.cell(*row, *col).unwrap() {
                    CellOutcome::Feasible {
                        certified,
                        validated,
                        ..
                    } => {
                        assert!(certified, "{row:?}/{col:?} not certified");
                        assert!(validated, "{row:?}/{col:?} failed validation");
                    }
                    CellOutcome::Infeasible { reason } => {
                        panic!("{row:?}/{col:?} infeasible: {reason}")
                    }
                }
            }
        }
        // Adding data descriptions never hurts a column.
        for col in &cfg.priors {
            let base = table.gamma(ConstraintKind::None, *col).unwrap();
            let refined = table.gamma(ConstraintKind::Data, *col).unwrap();
            assert!(refined <= base + 1e-6);
        }
        let csv = table.to_csv();
        assert!(csv.starts_with("constraints,ball,combined"));
        let md = table.to_markdown();
        assert!(md.contains("| constraints"));
    }
}
