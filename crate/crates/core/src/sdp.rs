//! Solver-agnostic LMI/SDP problem representation and the contract to a
//! conic solver with PSD-cone support.
//!
//! A problem holds scalar variables (optionally bounded below), symmetric
//! matrix variables (optionally constrained PSD), general rectangular matrix
//! variables, a list of affine symmetric-matrix expressions required `⪰ 0`,
//! and a linear objective to minimize.
//!
//! # Vectorization layout
//!
//! Decision variables are stacked into one vector in declaration order:
//! * scalar variables take one entry;
//! * a symmetric `d×d` variable takes `d(d+1)/2` entries: the upper triangle
//!   in column order (`(0,0), (0,1), (1,1), (0,2), ...`) with off-diagonal
//!   entries scaled by `√2`, so the Euclidean inner product of two vectorized
//!   matrices equals the trace inner product;
//! * a rectangular `r×c` variable takes `r·c` entries in column-major order.
//!
//! PSD constraints hand the solver the same scaled upper-triangle
//! vectorization of the constraint expression.
//!
//! Every solution reported `Optimal` is re-verified outside the solver; a
//! worst-case constraint violation above `1e-6` downgrades the status to
//! `NumericalTrouble`. The backend (Clarabel, an interior-point method) is
//! deterministic: the same problem and settings reproduce the same status
//! and objective. Set `SETMEM_SOLVER=clarabel` (the default and only value)
//! to pin the backend explicitly.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matops;
use crate::scalar::{cast, fmax, fsqrt, Scalar};

/// Handle to a declared variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

#[derive(Debug, Clone)]
enum VarKind<S: Scalar> {
    Scalar { lower: Option<S> },
    Sym { dim: usize, psd: bool },
    Rect { rows: usize, cols: usize },
}

#[derive(Debug, Clone)]
struct VarDecl<S: Scalar> {
    name: String,
    kind: VarKind<S>,
    offset: usize,
    len: usize,
}

/// One affine matrix-variable term `L · V · R`, optionally paired with its
/// transpose `Rᵀ Vᵀ Lᵀ` so block placements stay symmetric.
#[derive(Debug, Clone)]
pub struct MatTerm<S: Scalar> {
    pub var: VarId,
    pub left: DMatrix<S>,
    pub right: DMatrix<S>,
    pub pair_transpose: bool,
}

/// Affine symmetric-matrix expression
/// `C₀ + Σ x_j C_j + Σ L_k V_k R_k (+ transposes)`.
#[derive(Debug, Clone)]
pub struct LmiExpr<S: Scalar> {
    dim: usize,
    constant: DMatrix<S>,
    scalar_terms: Vec<(VarId, DMatrix<S>)>,
    matrix_terms: Vec<MatTerm<S>>,
}

impl<S: Scalar> LmiExpr<S> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            constant: DMatrix::zeros(dim, dim),
            scalar_terms: Vec::new(),
            matrix_terms: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Adds a constant matrix to the expression.
    pub fn add_constant(&mut self, m: &DMatrix<S>) {
        self.constant += m;
    }

    /// Adds the block `m` at offsets `(r, c)`; when the block is off the
    /// diagonal its transpose is mirrored at `(c, r)`.
    pub fn add_const_block(&mut self, r: usize, c: usize, m: &DMatrix<S>) {
        add_block(&mut self.constant, r, c, m);
        if r != c {
            add_block(&mut self.constant, c, r, &m.transpose());
        }
    }

    /// Adds `x · coeff` for a scalar variable.
    pub fn add_scalar_term(&mut self, var: VarId, coeff: DMatrix<S>) {
        self.scalar_terms.push((var, coeff));
    }

    /// Adds `x · m` at block offsets `(r, c)` (mirrored off the diagonal) for
    /// a scalar variable.
    pub fn add_scalar_block(&mut self, var: VarId, r: usize, c: usize, m: &DMatrix<S>) {
        let mut coeff = DMatrix::zeros(self.dim, self.dim);
        add_block(&mut coeff, r, c, m);
        if r != c {
            add_block(&mut coeff, c, r, &m.transpose());
        }
        self.scalar_terms.push((var, coeff));
    }

    /// Adds `L · V · R`, paired with its transpose when `pair_transpose`.
    pub fn add_matrix_term(
        &mut self,
        var: VarId,
        left: DMatrix<S>,
        right: DMatrix<S>,
        pair_transpose: bool,
    ) {
        self.matrix_terms.push(MatTerm {
            var,
            left,
            right,
            pair_transpose,
        });
    }

    /// Places `pre · V · post` as a block whose top-left corner is `(r, c)`.
    /// With `mirror` the transposed block is added at `(c, r)`; a diagonal
    /// placement of a symmetric product should pass `mirror = false`.
    pub fn add_var_block(
        &mut self,
        var: VarId,
        var_rows: usize,
        var_cols: usize,
        r: usize,
        c: usize,
        pre: Option<&DMatrix<S>>,
        post: Option<&DMatrix<S>>,
        mirror: bool,
    ) {
        let pre_cols = pre.map_or(var_rows, |m| m.ncols());
        let pre_rows = pre.map_or(var_rows, |m| m.nrows());
        let post_rows = post.map_or(var_cols, |m| m.nrows());
        let post_cols = post.map_or(var_cols, |m| m.ncols());
        assert_eq!(pre_cols, var_rows, "pre-multiplier width");
        assert_eq!(post_rows, var_cols, "post-multiplier height");
        let mut left = DMatrix::zeros(self.dim, pre_cols);
        match pre {
            Some(m) => left.view_mut((r, 0), (pre_rows, pre_cols)).copy_from(m),
            None => left.view_mut((r, 0), (var_rows, var_rows)).fill_diagonal(S::one()),
        }
        let mut right = DMatrix::zeros(post_rows, self.dim);
        match post {
            Some(m) => right.view_mut((0, c), (post_rows, post_cols)).copy_from(m),
            None => right.view_mut((0, c), (var_cols, var_cols)).fill_diagonal(S::one()),
        }
        self.matrix_terms.push(MatTerm {
            var,
            left,
            right,
            pair_transpose: mirror,
        });
    }

    /// Evaluates the expression at a full variable assignment.
    fn evaluate(&self, problem: &LmiProblem<S>, a: &Assignment<S>) -> Result<DMatrix<S>> {
        let mut value = self.constant.clone();
        for (var, coeff) in &self.scalar_terms {
            value += coeff * a.scalar_value(problem, *var);
        }
        for term in &self.matrix_terms {
            let v = a.matrix_value(problem, term.var);
            let block = &term.left * &v * &term.right;
            if term.pair_transpose {
                value += block.transpose();
            }
            value += block;
        }
        Ok(matops::symmetrize(&value))
    }
}

fn add_block<S: Scalar>(target: &mut DMatrix<S>, r: usize, c: usize, m: &DMatrix<S>) {
    let mut view = target.view_mut((r, c), (m.nrows(), m.ncols()));
    view += m;
}

/// Linear objective term.
#[derive(Debug, Clone)]
pub enum ObjectiveTerm<S: Scalar> {
    /// `c · x` for a scalar variable.
    Scalar(VarId, S),
    /// `trace(W · M)` for a matrix variable.
    Trace(VarId, DMatrix<S>),
}

/// An LMI problem: affine symmetric expressions constrained `⪰ 0` plus a
/// linear objective.
#[derive(Debug, Clone, Default)]
pub struct LmiProblem<S: Scalar> {
    vars: Vec<VarDecl<S>>,
    constraints: Vec<LmiExpr<S>>,
    objective: Vec<ObjectiveTerm<S>>,
    total_len: usize,
}

impl<S: Scalar> LmiProblem<S> {
    pub fn new() -> Self {
        Self {
            vars: Vec::new(),
            constraints: Vec::new(),
            objective: Vec::new(),
            total_len: 0,
        }
    }

    pub fn scalar_var(&mut self, name: &str, lower: Option<S>) -> VarId {
        self.push_var(name, VarKind::Scalar { lower }, 1)
    }

    /// Declares a symmetric `dim×dim` variable; with `psd` the variable is
    /// constrained to the PSD cone.
    pub fn sym_var(&mut self, name: &str, dim: usize, psd: bool) -> VarId {
        self.push_var(name, VarKind::Sym { dim, psd }, dim * (dim + 1) / 2)
    }

    pub fn rect_var(&mut self, name: &str, rows: usize, cols: usize) -> VarId {
        self.push_var(name, VarKind::Rect { rows, cols }, rows * cols)
    }

    fn push_var(&mut self, name: &str, kind: VarKind<S>, len: usize) -> VarId {
        let id = VarId(self.vars.len());
        self.vars.push(VarDecl {
            name: name.to_string(),
            kind,
            offset: self.total_len,
            len,
        });
        self.total_len += len;
        id
    }

    pub fn var_dims(&self, var: VarId) -> (usize, usize) {
        match self.vars[var.0].kind {
            VarKind::Scalar { .. } => (1, 1),
            VarKind::Sym { dim, .. } => (dim, dim),
            VarKind::Rect { rows, cols } => (rows, cols),
        }
    }

    /// Requires `expr ⪰ 0`.
    pub fn add_psd_constraint(&mut self, expr: LmiExpr<S>) {
        self.constraints.push(expr);
    }

    pub fn add_objective(&mut self, term: ObjectiveTerm<S>) {
        self.objective.push(term);
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// All constraint expressions, including the implicit `M ⪰ 0` of PSD-
    /// flagged symmetric variables.
    fn compiled_constraints(&self) -> Vec<LmiExpr<S>> {
        let mut all = self.constraints.clone();
        for (idx, decl) in self.vars.iter().enumerate() {
            if let VarKind::Sym { dim, psd: true } = decl.kind {
                let mut expr = LmiExpr::zeros(dim);
                expr.add_matrix_term(
                    VarId(idx),
                    DMatrix::identity(dim, dim),
                    DMatrix::identity(dim, dim),
                    false,
                );
                all.push(expr);
            }
        }
        all
    }

    fn validate(&self) -> Result<()> {
        for expr in &self.constraints {
            if expr.constant.nrows() != expr.dim || expr.constant.ncols() != expr.dim {
                return Err(Error::MalformedProblem("constant block size".into()));
            }
            for (var, coeff) in &expr.scalar_terms {
                if !matches!(self.vars[var.0].kind, VarKind::Scalar { .. }) {
                    return Err(Error::MalformedProblem(format!(
                        "scalar term on non-scalar variable '{}'",
                        self.vars[var.0].name
                    )));
                }
                if coeff.nrows() != expr.dim || coeff.ncols() != expr.dim {
                    return Err(Error::MalformedProblem("scalar coefficient size".into()));
                }
            }
            for term in &expr.matrix_terms {
                let (r, c) = self.var_dims(term.var);
                if term.left.ncols() != r || term.right.nrows() != c {
                    return Err(Error::MalformedProblem(format!(
                        "matrix term dims for variable '{}'",
                        self.vars[term.var.0].name
                    )));
                }
                if term.left.nrows() != expr.dim || term.right.ncols() != expr.dim {
                    return Err(Error::MalformedProblem("matrix term embedding size".into()));
                }
            }
        }
        Ok(())
    }
}

/// Solver outcome classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalTrouble,
}

/// A full variable assignment, aligned with the problem's declarations.
#[derive(Debug, Clone)]
pub struct Assignment<S: Scalar> {
    x: Vec<S>,
}

impl<S: Scalar> Assignment<S> {
    /// Builds an assignment by providing a value per variable, in
    /// declaration order.
    pub fn from_values(problem: &LmiProblem<S>, values: &[AssignedValue<S>]) -> Result<Self> {
        if values.len() != problem.vars.len() {
            return Err(Error::MalformedProblem(format!(
                "assignment covers {} of {} variables",
                values.len(),
                problem.vars.len()
            )));
        }
        let mut x = vec![S::zero(); problem.total_len];
        for (decl, value) in problem.vars.iter().zip(values) {
            match (&decl.kind, value) {
                (VarKind::Scalar { .. }, AssignedValue::Scalar(v)) => x[decl.offset] = *v,
                (VarKind::Sym { dim, .. }, AssignedValue::Matrix(m)) => {
                    if m.nrows() != *dim || m.ncols() != *dim {
                        return Err(Error::MalformedProblem(format!(
                            "assignment for '{}' has wrong size",
                            decl.name
                        )));
                    }
                    svec_into(&matops::require_symmetric(m)?, &mut x[decl.offset..decl.offset + decl.len]);
                }
                (VarKind::Rect { rows, cols }, AssignedValue::Matrix(m)) => {
                    if m.nrows() != *rows || m.ncols() != *cols {
                        return Err(Error::MalformedProblem(format!(
                            "assignment for '{}' has wrong size",
                            decl.name
                        )));
                    }
                    for (k, v) in m.iter().enumerate() {
                        x[decl.offset + k] = *v;
                    }
                }
                _ => {
                    return Err(Error::MalformedProblem(format!(
                        "assignment kind mismatch for '{}'",
                        decl.name
                    )))
                }
            }
        }
        Ok(Self { x })
    }

    fn scalar_value(&self, problem: &LmiProblem<S>, var: VarId) -> S {
        self.x[problem.vars[var.0].offset]
    }

    fn matrix_value(&self, problem: &LmiProblem<S>, var: VarId) -> DMatrix<S> {
        let decl = &problem.vars[var.0];
        let slice = &self.x[decl.offset..decl.offset + decl.len];
        match decl.kind {
            VarKind::Scalar { .. } => DMatrix::from_element(1, 1, slice[0]),
            VarKind::Sym { dim, .. } => unsvec(dim, slice),
            VarKind::Rect { rows, cols } => DMatrix::from_column_slice(rows, cols, slice),
        }
    }
}

/// Value for one variable when constructing an [`Assignment`].
#[derive(Debug, Clone)]
pub enum AssignedValue<S: Scalar> {
    Scalar(S),
    Matrix(DMatrix<S>),
}

/// Solver report plus the recovered variable values.
#[derive(Debug, Clone)]
pub struct SdpSolution<S: Scalar> {
    pub status: SolveStatus,
    pub objective_value: S,
    pub max_constraint_violation: S,
    pub solver_status: String,
    pub iterations: u32,
    assignment: Assignment<S>,
    scalars: Vec<Option<S>>,
    matrices: Vec<Option<DMatrix<S>>>,
}

impl<S: Scalar> SdpSolution<S> {
    pub fn scalar(&self, var: VarId) -> S {
        self.scalars[var.0].expect("scalar variable")
    }

    pub fn matrix(&self, var: VarId) -> &DMatrix<S> {
        self.matrices[var.0].as_ref().expect("matrix variable")
    }

    pub fn assignment(&self) -> &Assignment<S> {
        &self.assignment
    }
}

/// Solver settings; defaults follow the documented tolerances
/// (feasibility `1e-8`, relative/absolute gap `1e-8`).
#[derive(Debug, Clone)]
pub struct SolverSettings {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            max_iter: 200,
            verbose: false,
        }
    }
}

/// Violation level above which an `Optimal` claim is rejected.
pub const VERIFY_TOL: f64 = 1e-6;

/// Solves the problem with the conic backend, then independently re-checks
/// every constraint at the returned point.
pub fn solve<S: Scalar>(problem: &LmiProblem<S>, settings: &SolverSettings) -> Result<SdpSolution<S>> {
    if let Ok(choice) = std::env::var("SETMEM_SOLVER") {
        if !choice.is_empty() && choice != "clarabel" {
            return Err(Error::SolverUnavailable(format!(
                "unknown solver '{choice}' (supported: clarabel)"
            )));
        }
    }
    problem.validate()?;

    let nvars = problem.total_len;
    let mut cones: Vec<SupportedConeT<S>> = Vec::new();
    // Rows of A and b, built dense per block then converted to CSC.
    let mut rows: Vec<Vec<(usize, S)>> = Vec::new();
    let mut b: Vec<S> = Vec::new();

    // Scalar lower bounds first (nonnegative cone entries).
    let mut lb_count = 0usize;
    for decl in &problem.vars {
        if let VarKind::Scalar { lower: Some(lb) } = decl.kind {
            rows.push(vec![(decl.offset, -S::one())]);
            b.push(-lb);
            lb_count += 1;
        }
    }
    if lb_count > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(lb_count));
    }

    // PSD blocks: s = svec(C0) + F x must lie in the PSD triangle cone,
    // encoded as A = -F, b = svec(C0).
    let compiled = problem.compiled_constraints();
    for expr in &compiled {
        let d = expr.dim;
        let block_len = d * (d + 1) / 2;
        let base = rows.len();
        rows.resize_with(base + block_len, Vec::new);
        b.extend(svec(&matops::symmetrize(&expr.constant)).into_iter());

        let mut add_derivative = |col: usize, dmat: &DMatrix<S>| -> Result<()> {
            let asym = matops::max_abs(&(dmat - dmat.transpose()));
            let scale = fmax(S::one(), matops::max_abs(dmat));
            if asym > cast::<S>(1e-9) * scale {
                return Err(Error::MalformedProblem(
                    "constraint expression is not symmetric in a variable direction".into(),
                ));
            }
            let v = svec(&matops::symmetrize(dmat));
            for (k, &val) in v.iter().enumerate() {
                if val != S::zero() {
                    rows[base + k].push((col, -val));
                }
            }
            Ok(())
        };

        for (var, coeff) in &expr.scalar_terms {
            let decl = &problem.vars[var.0];
            add_derivative(decl.offset, coeff)?;
        }
        for term in &expr.matrix_terms {
            let decl = &problem.vars[term.var.0];
            match decl.kind {
                VarKind::Scalar { .. } => {
                    let dmat = &term.left * term.right.clone();
                    let dmat = if term.pair_transpose {
                        &dmat + dmat.transpose()
                    } else {
                        dmat
                    };
                    add_derivative(decl.offset, &dmat)?;
                }
                VarKind::Sym { dim, .. } => {
                    let inv_sqrt2 = S::one() / fsqrt(cast::<S>(2.0));
                    let mut k = 0usize;
                    for j in 0..dim {
                        for i in 0..=j {
                            // Basis matrix direction for this svec entry.
                            let mut dmat = if i == j {
                                term.left.column(i) * term.right.row(j)
                            } else {
                                (term.left.column(i) * term.right.row(j)
                                    + term.left.column(j) * term.right.row(i))
                                    * inv_sqrt2
                            };
                            if term.pair_transpose {
                                dmat = &dmat + dmat.transpose();
                            }
                            add_derivative(decl.offset + k, &dmat)?;
                            k += 1;
                        }
                    }
                }
                VarKind::Rect { rows: vr, cols: vc } => {
                    for j in 0..vc {
                        for i in 0..vr {
                            let mut dmat = term.left.column(i) * term.right.row(j);
                            if term.pair_transpose {
                                dmat = &dmat + dmat.transpose();
                            }
                            add_derivative(decl.offset + j * vr + i, &dmat)?;
                        }
                    }
                }
            }
        }
        cones.push(SupportedConeT::PSDTriangleConeT(d));
    }

    // Objective vector.
    let mut q = vec![S::zero(); nvars];
    for term in &problem.objective {
        match term {
            ObjectiveTerm::Scalar(var, c) => {
                let decl = &problem.vars[var.0];
                if !matches!(decl.kind, VarKind::Scalar { .. }) {
                    return Err(Error::MalformedProblem(format!(
                        "scalar objective on matrix variable '{}'",
                        decl.name
                    )));
                }
                q[decl.offset] += *c;
            }
            ObjectiveTerm::Trace(var, w) => {
                let decl = &problem.vars[var.0];
                match decl.kind {
                    VarKind::Sym { dim, .. } => {
                        if w.nrows() != dim || w.ncols() != dim {
                            return Err(Error::MalformedProblem("trace weight size".into()));
                        }
                        let sqrt2 = fsqrt(cast::<S>(2.0));
                        let mut k = 0usize;
                        for j in 0..dim {
                            for i in 0..=j {
                                q[decl.offset + k] += if i == j {
                                    w[(i, i)]
                                } else {
                                    (w[(j, i)] + w[(i, j)]) / sqrt2
                                };
                                k += 1;
                            }
                        }
                    }
                    VarKind::Rect { rows: vr, cols: vc } => {
                        if w.nrows() != vc || w.ncols() != vr {
                            return Err(Error::MalformedProblem("trace weight size".into()));
                        }
                        for j in 0..vc {
                            for i in 0..vr {
                                q[decl.offset + j * vr + i] += w[(j, i)];
                            }
                        }
                    }
                    VarKind::Scalar { .. } => {
                        return Err(Error::MalformedProblem(
                            "trace objective on scalar variable".into(),
                        ))
                    }
                }
            }
        }
    }

    // Assemble CSC matrix of A (rows were collected row-wise).
    let nrows = rows.len();
    let mut col_entries: Vec<Vec<(usize, S)>> = vec![Vec::new(); nvars];
    for (r, row) in rows.iter().enumerate() {
        for &(c, v) in row {
            col_entries[c].push((r, v));
        }
    }
    let mut colptr = Vec::with_capacity(nvars + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0usize);
    for entries in &mut col_entries {
        entries.sort_by_key(|&(r, _)| r);
        // Merge duplicate coordinates (several terms may touch the same
        // variable entry); CSC requires unique sorted rows per column.
        for &(r, v) in entries.iter() {
            if rowval.last() == Some(&r) && *colptr.last().unwrap() < rowval.len() {
                *nzval.last_mut().unwrap() += v;
            } else {
                rowval.push(r);
                nzval.push(v);
            }
        }
        colptr.push(rowval.len());
    }
    let a = CscMatrix::new(nrows, nvars, colptr, rowval, nzval);
    let p = CscMatrix::new(nvars, nvars, vec![0; nvars + 1], vec![], vec![]);

    let mut clarabel_settings = DefaultSettings::<S>::default();
    clarabel_settings.verbose = settings.verbose;
    clarabel_settings.max_iter = settings.max_iter;
    clarabel_settings.tol_feas = cast::<S>(settings.feas_tol);
    clarabel_settings.tol_gap_abs = cast::<S>(settings.gap_tol);
    clarabel_settings.tol_gap_rel = cast::<S>(settings.gap_tol);

    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, clarabel_settings)
        .map_err(|e| Error::MalformedProblem(format!("solver rejected problem: {e:?}")))?;
    solver.solve();
    let raw_status = solver.solution.status;
    let iterations = solver.info.iterations;

    let assignment = Assignment {
        x: solver.solution.x.clone(),
    };
    let status = match raw_status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        _ => SolveStatus::NumericalTrouble,
    };

    // Independent re-check of every constraint at the returned point.
    let mut violation = S::zero();
    if status == SolveStatus::Optimal {
        violation = worst_violation(problem, &compiled, &assignment)?;
    }
    let status = if status == SolveStatus::Optimal && violation > cast::<S>(VERIFY_TOL) {
        SolveStatus::NumericalTrouble
    } else {
        status
    };

    let mut scalars = vec![None; problem.vars.len()];
    let mut matrices = vec![None; problem.vars.len()];
    for (idx, decl) in problem.vars.iter().enumerate() {
        match decl.kind {
            VarKind::Scalar { .. } => scalars[idx] = Some(assignment.x[decl.offset]),
            _ => matrices[idx] = Some(assignment.matrix_value(problem, VarId(idx))),
        }
    }

    Ok(SdpSolution {
        status,
        objective_value: solver.solution.obj_val,
        max_constraint_violation: violation,
        solver_status: format!("{raw_status:?}"),
        iterations,
        assignment,
        scalars,
        matrices,
    })
}

fn worst_violation<S: Scalar>(
    problem: &LmiProblem<S>,
    compiled: &[LmiExpr<S>],
    a: &Assignment<S>,
) -> Result<S> {
    let mut worst = S::zero();
    for expr in compiled {
        let value = expr.evaluate(problem, a)?;
        let min_eig = matops::min_eig_sym(&value)?;
        worst = fmax(worst, -min_eig);
    }
    for decl in &problem.vars {
        if let VarKind::Scalar { lower: Some(lb) } = decl.kind {
            worst = fmax(worst, lb - a.x[decl.offset]);
        }
    }
    Ok(worst)
}

/// Minimum over all constraints (including scalar bounds and implicit PSD
/// variable constraints) of the smallest eigenvalue of the evaluated
/// expression.
pub fn feasibility_margin<S: Scalar>(
    problem: &LmiProblem<S>,
    assignment: &Assignment<S>,
) -> Result<S> {
    if assignment.x.len() != problem.total_len {
        return Err(Error::MalformedProblem(format!(
            "assignment length {} does not cover {} entries",
            assignment.x.len(),
            problem.total_len
        )));
    }
    let mut margin = None;
    for expr in &problem.compiled_constraints() {
        let value = expr.evaluate(problem, assignment)?;
        let min_eig = matops::min_eig_sym(&value)?;
        margin = Some(match margin {
            None => min_eig,
            Some(m) => crate::scalar::fmin(m, min_eig),
        });
    }
    for decl in &problem.vars {
        if let VarKind::Scalar { lower: Some(lb) } = decl.kind {
            let m = assignment.x[decl.offset] - lb;
            margin = Some(match margin {
                None => m,
                Some(curr) => crate::scalar::fmin(curr, m),
            });
        }
    }
    margin.ok_or_else(|| Error::MalformedProblem("problem has no constraints".into()))
}

/// Scaled upper-triangle vectorization (column order, off-diagonals × √2).
pub fn svec<S: Scalar>(m: &DMatrix<S>) -> Vec<S> {
    let d = m.nrows();
    let mut v = Vec::with_capacity(d * (d + 1) / 2);
    let sqrt2 = fsqrt(cast::<S>(2.0));
    for j in 0..d {
        for i in 0..=j {
            v.push(if i == j { m[(i, j)] } else { m[(i, j)] * sqrt2 });
        }
    }
    v
}

fn svec_into<S: Scalar>(m: &DMatrix<S>, out: &mut [S]) {
    for (k, v) in svec(m).into_iter().enumerate() {
        out[k] = v;
    }
}

/// Inverse of [`svec`].
pub fn unsvec<S: Scalar>(dim: usize, v: &[S]) -> DMatrix<S> {
    let mut m = DMatrix::zeros(dim, dim);
    let inv_sqrt2 = S::one() / fsqrt(cast::<S>(2.0));
    let mut k = 0usize;
    for j in 0..dim {
        for i in 0..=j {
            if i == j {
                m[(i, j)] = v[k];
            } else {
                m[(i, j)] = v[k] * inv_sqrt2;
                m[(j, i)] = m[(i, j)];
            }
            k += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn minimize_max_eigenvalue() {
        // minimize t s.t. t·I − diag(1,3) ⪰ 0  →  t = 3
        let mut p = LmiProblem::<f64>::new();
        let t = p.scalar_var("t", None);
        let mut e = LmiExpr::zeros(2);
        e.add_constant(&DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -3.0]));
        e.add_scalar_term(t, DMatrix::identity(2, 2));
        p.add_psd_constraint(e);
        p.add_objective(ObjectiveTerm::Scalar(t, 1.0));
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.scalar(t), 3.0, max_relative = 1e-6);

        // Boundary margin is zero.
        let a = Assignment::from_values(&p, &[AssignedValue::Scalar(3.0)]).unwrap();
        let m = feasibility_margin(&p, &a).unwrap();
        assert!(m.abs() <= 1e-8, "margin {m}");
    }

    #[test]
    fn infeasible_instance() {
        // -I - s·0 ⪰ 0 is infeasible (constant negative definite), with a
        // dummy variable so the problem is well-posed.
        let mut p = LmiProblem::<f64>::new();
        let t = p.scalar_var("t", Some(0.0));
        let mut e = LmiExpr::zeros(2);
        e.add_constant(&(-DMatrix::<f64>::identity(2, 2)));
        e.add_scalar_term(t, DMatrix::zeros(2, 2));
        p.add_psd_constraint(e);
        p.add_objective(ObjectiveTerm::Scalar(t, 1.0));
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn feasibility_margin_signs() {
        let mut p = LmiProblem::<f64>::new();
        let t = p.scalar_var("t", None);
        let mut e = LmiExpr::zeros(2);
        e.add_constant(&DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -3.0]));
        e.add_scalar_term(t, DMatrix::identity(2, 2));
        p.add_psd_constraint(e);

        let strict = Assignment::from_values(&p, &[AssignedValue::Scalar(5.0)]).unwrap();
        assert!(feasibility_margin(&p, &strict).unwrap() > 0.0);

        let violated = Assignment::from_values(&p, &[AssignedValue::Scalar(1.0)]).unwrap();
        assert_relative_eq!(
            feasibility_margin(&p, &violated).unwrap(),
            -2.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn sym_matrix_variable_trace_objective() {
        // minimize trace(M) s.t. M ⪰ diag(1, 2): optimum trace 3.
        let mut p = LmiProblem::<f64>::new();
        let m = p.sym_var("m", 2, false);
        let mut e = LmiExpr::zeros(2);
        e.add_constant(&DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]));
        e.add_matrix_term(m, DMatrix::identity(2, 2), DMatrix::identity(2, 2), false);
        p.add_psd_constraint(e);
        p.add_objective(ObjectiveTerm::Trace(m, DMatrix::identity(2, 2)));
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.objective_value, 3.0, epsilon = 1e-6);
        let got = sol.matrix(m);
        assert!(matops::max_abs(&(got - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]))) < 1e-5);
    }

    #[test]
    fn rect_variable_block_placement() {
        // Find K (1x1 rect) with [[1, k],[k, 1]] ⪰ 0 minimizing k: k = -1.
        let mut p = LmiProblem::<f64>::new();
        let k = p.rect_var("k", 1, 1);
        let mut e = LmiExpr::zeros(2);
        e.add_constant(&DMatrix::identity(2, 2));
        e.add_var_block(k, 1, 1, 0, 1, None, None, true);
        p.add_psd_constraint(e);
        p.add_objective(ObjectiveTerm::Trace(k, DMatrix::identity(1, 1)));
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.matrix(k)[(0, 0)], -1.0, max_relative = 1e-5);
    }

    #[test]
    fn svec_round_trip_and_inner_product() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 5.0, -1.0, 3.0, -1.0, 0.5]);
        let v = svec(&m);
        assert_eq!(v.len(), 6);
        let back = unsvec(3, &v);
        assert!(matops::max_abs(&(back - &m)) < 1e-14);
        // <svec(m), svec(m)> = trace(m m)
        let dot: f64 = v.iter().map(|x| x * x).sum();
        assert_relative_eq!(dot, (&m * &m).trace(), max_relative = 1e-12);
    }

    #[test]
    fn env_var_selects_backend() {
        // Guard: unknown solver names are rejected.
        std::env::set_var("SETMEM_SOLVER", "mystery");
        let mut p = LmiProblem::<f64>::new();
        let t = p.scalar_var("t", Some(0.0));
        let mut e = LmiExpr::zeros(1);
        e.add_scalar_term(t, DMatrix::identity(1, 1));
        p.add_psd_constraint(e);
        let err = solve(&p, &SolverSettings::default());
        std::env::remove_var("SETMEM_SOLVER");
        assert!(matches!(err, Err(Error::SolverUnavailable(_))));
    }

    #[test]
    fn determinism() {
        let build = || {
            let mut p = LmiProblem::<f64>::new();
            let t = p.scalar_var("t", None);
            let m = p.sym_var("m", 3, true);
            let mut e = LmiExpr::zeros(3);
            e.add_constant(&DMatrix::from_row_slice(
                3,
                3,
                &[-1.0, 0.2, 0.0, 0.2, -2.0, 0.3, 0.0, 0.3, -0.5],
            ));
            e.add_scalar_term(t, DMatrix::identity(3, 3));
            e.add_matrix_term(m, DMatrix::identity(3, 3), DMatrix::identity(3, 3), false);
            p.add_psd_constraint(e);
            p.add_objective(ObjectiveTerm::Scalar(t, 1.0));
            p.add_objective(ObjectiveTerm::Trace(m, DMatrix::identity(3, 3)));
            p
        };
        let s1 = solve(&build(), &SolverSettings::default()).unwrap();
        let s2 = solve(&build(), &SolverSettings::default()).unwrap();
        assert_eq!(s1.status, s2.status);
        assert!((s1.objective_value - s2.objective_value).abs() <= 1e-9);
    }
}
