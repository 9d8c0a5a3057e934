//! Small conic modeling layer: affine expressions over scalar and
//! symmetric-matrix variables, linear / convex quadratic / semidefinite
//! constraints, and an adapter that lowers problems to Clarabel.
//!
//! Strict PSD constraints (`X ≻ 0`) are written as `X ⪰ ε_strict·I`. In
//! margin mode (feasibility problems) they become `X ⪰ t·I` and the solver
//! maximizes `t ≤ 1`; the problem counts as feasible when `t ≥ ε_strict`.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::config::{Backend, Config, Tolerances};
use crate::error::{RdoError, Result};
use crate::numlin;

pub type VarId = usize;

/// `Σ coef·x[var] + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        LinExpr::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr { terms: Vec::new(), constant: c }
    }

    pub fn var(v: VarId) -> Self {
        LinExpr { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn add_term(&mut self, v: VarId, coef: f64) {
        if coef != 0.0 {
            self.terms.push((v, coef));
        }
    }

    pub fn add_scaled(&mut self, other: &LinExpr, k: f64) {
        if k == 0.0 {
            return;
        }
        for &(v, c) in &other.terms {
            self.terms.push((v, c * k));
        }
        self.constant += other.constant * k;
    }

    pub fn plus(&self, other: &LinExpr) -> LinExpr {
        let mut out = self.clone();
        out.add_scaled(other, 1.0);
        out.compact()
    }

    pub fn minus(&self, other: &LinExpr) -> LinExpr {
        let mut out = self.clone();
        out.add_scaled(other, -1.0);
        out.compact()
    }

    pub fn scaled(&self, k: f64) -> LinExpr {
        let mut out = LinExpr::zero();
        out.add_scaled(self, k);
        out
    }

    pub fn plus_constant(mut self, c: f64) -> LinExpr {
        self.constant += c;
        self
    }

    /// Merges repeated variables and drops zero coefficients.
    pub fn compact(mut self) -> LinExpr {
        self.terms.sort_by_key(|t| t.0);
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(self.terms.len());
        for (v, c) in self.terms {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => merged.push((v, c)),
            }
        }
        merged.retain(|t| t.1 != 0.0);
        LinExpr { terms: merged, constant: self.constant }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>() + self.constant
    }

    /// Magnitude used to scale feasibility checks.
    fn scale_at(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| (c * x[v]).abs()).fold(self.constant.abs(), f64::max)
    }
}

/// A block of scalar variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VecVar {
    pub offset: usize,
    pub len: usize,
}

impl VecVar {
    pub fn at(&self, i: usize) -> VarId {
        assert!(i < self.len);
        self.offset + i
    }

    pub fn exprs(&self) -> Vec<LinExpr> {
        (0..self.len).map(|i| LinExpr::var(self.at(i))).collect()
    }

    /// The affine vector `M x`.
    pub fn mapped(&self, m: &DMatrix<f64>) -> Vec<LinExpr> {
        assert_eq!(m.ncols(), self.len);
        (0..m.nrows())
            .map(|r| {
                let mut e = LinExpr::zero();
                for i in 0..self.len {
                    e.add_term(self.at(i), m[(r, i)]);
                }
                e
            })
            .collect()
    }

    pub fn value(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(&x[self.offset..self.offset + self.len])
    }
}

fn packed(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    j * (j + 1) / 2 + i
}

/// A symmetric matrix variable, stored as its upper triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymVar {
    pub offset: usize,
    pub dim: usize,
}

impl SymVar {
    pub fn at(&self, i: usize, j: usize) -> VarId {
        assert!(i < self.dim && j < self.dim);
        self.offset + packed(i, j)
    }

    pub fn expr(&self) -> SymExpr {
        let mut e = SymExpr::zeros(self.dim);
        for j in 0..self.dim {
            for i in 0..=j {
                e.entries[packed(i, j)] = LinExpr::var(self.at(i, j));
            }
        }
        e
    }

    pub fn value(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| x[self.at(i, j)])
    }
}

/// A symmetric matrix of affine expressions (upper triangle, column-major).
#[derive(Debug, Clone, PartialEq)]
pub struct SymExpr {
    pub dim: usize,
    entries: Vec<LinExpr>,
}

impl SymExpr {
    pub fn zeros(dim: usize) -> Self {
        SymExpr { dim, entries: vec![LinExpr::zero(); dim * (dim + 1) / 2] }
    }

    pub fn constant(m: &DMatrix<f64>) -> Self {
        let mut e = SymExpr::zeros(m.nrows());
        for j in 0..m.nrows() {
            for i in 0..=j {
                e.entries[packed(i, j)] = LinExpr::constant(0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
        e
    }

    pub fn get(&self, i: usize, j: usize) -> &LinExpr {
        &self.entries[packed(i, j)]
    }

    pub fn plus(&self, other: &SymExpr) -> SymExpr {
        assert_eq!(self.dim, other.dim);
        SymExpr { dim: self.dim, entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a.plus(b)).collect() }
    }

    pub fn minus(&self, other: &SymExpr) -> SymExpr {
        assert_eq!(self.dim, other.dim);
        SymExpr { dim: self.dim, entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a.minus(b)).collect() }
    }

    pub fn scaled(&self, k: f64) -> SymExpr {
        SymExpr { dim: self.dim, entries: self.entries.iter().map(|e| e.scaled(k)).collect() }
    }

    /// `B^T X B` for this expression `X` (dim `d`) and a `d × p` matrix `B`.
    pub fn congruence(&self, b: &DMatrix<f64>) -> SymExpr {
        assert_eq!(b.nrows(), self.dim);
        let p = b.ncols();
        let mut out = SymExpr::zeros(p);
        for j in 0..self.dim {
            for i in 0..=j {
                let x = &self.entries[packed(i, j)];
                if x.terms.is_empty() && x.constant == 0.0 {
                    continue;
                }
                for q in 0..p {
                    for r in 0..=q {
                        let mut k = b[(i, r)] * b[(j, q)];
                        if i != j {
                            k += b[(j, r)] * b[(i, q)];
                        }
                        out.entries[packed(r, q)].add_scaled(x, k);
                    }
                }
            }
        }
        out.entries = out.entries.into_iter().map(LinExpr::compact).collect();
        out
    }

    /// `a^T X a`.
    pub fn quad_form(&self, a: &DVector<f64>) -> LinExpr {
        let col = DMatrix::from_column_slice(a.len(), 1, a.as_slice());
        self.congruence(&col).entries[0].clone()
    }

    pub fn trace(&self) -> LinExpr {
        let mut t = LinExpr::zero();
        for i in 0..self.dim {
            t.add_scaled(&self.entries[packed(i, i)], 1.0);
        }
        t.compact()
    }

    /// `[[X, v], [v^T, corner]]`.
    pub fn bordered(&self, v: &[LinExpr], corner: LinExpr) -> SymExpr {
        assert_eq!(v.len(), self.dim);
        let d = self.dim + 1;
        let mut out = SymExpr::zeros(d);
        for j in 0..self.dim {
            for i in 0..=j {
                out.entries[packed(i, j)] = self.entries[packed(i, j)].clone();
            }
        }
        for (i, vi) in v.iter().enumerate() {
            out.entries[packed(i, self.dim)] = vi.clone();
        }
        out.entries[packed(self.dim, self.dim)] = corner;
        out
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.entries[packed(i, j)].eval(x))
    }

    fn minus_identity_times(&self, v: Option<VarId>, c: f64) -> SymExpr {
        let mut out = self.clone();
        for i in 0..self.dim {
            let e = &mut out.entries[packed(i, i)];
            if let Some(v) = v {
                e.add_term(v, -1.0);
            }
            e.constant -= c;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `expr <= 0`.
    Le(LinExpr),
    /// `expr = 0`.
    Eq(LinExpr),
    /// `z^T P z <= rhs` with `P` positive semidefinite.
    Quad { p: DMatrix<f64>, z: Vec<LinExpr>, rhs: LinExpr },
    /// `expr ⪰ 0`, or `≻ 0` when `strict`.
    Psd { expr: SymExpr, strict: bool },
}

impl Constraint {
    fn vars(&self) -> Vec<VarId> {
        match self {
            Constraint::Le(e) | Constraint::Eq(e) => e.terms.iter().map(|t| t.0).collect(),
            Constraint::Quad { z, rhs, .. } => z.iter().chain(std::iter::once(rhs)).flat_map(|e| e.terms.iter().map(|t| t.0)).collect(),
            Constraint::Psd { expr, .. } => expr.entries.iter().flat_map(|e| e.terms.iter().map(|t| t.0)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Minimize(LinExpr),
    /// Feasibility problem: maximize the common slack of strict blocks.
    MaximizeMargin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemClass {
    Lp,
    Qcqp,
    Sdp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    nvars: usize,
    vectors: Vec<VecVar>,
    syms: Vec<SymVar>,
    pub constraints: Vec<Constraint>,
    pub objective: Objective,
}

impl Default for ConicProblem {
    fn default() -> Self {
        ConicProblem::new()
    }
}

impl ConicProblem {
    pub fn new() -> Self {
        ConicProblem {
            nvars: 0,
            vectors: Vec::new(),
            syms: Vec::new(),
            constraints: Vec::new(),
            objective: Objective::Minimize(LinExpr::zero()),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.nvars
    }

    pub fn add_vector(&mut self, len: usize) -> VecVar {
        let v = VecVar { offset: self.nvars, len };
        self.nvars += len;
        self.vectors.push(v);
        v
    }

    pub fn add_sym(&mut self, dim: usize) -> SymVar {
        let v = SymVar { offset: self.nvars, dim };
        self.nvars += dim * (dim + 1) / 2;
        self.syms.push(v);
        v
    }

    pub fn le(&mut self, e: LinExpr) {
        self.constraints.push(Constraint::Le(e.compact()));
    }

    pub fn equal(&mut self, e: LinExpr) {
        self.constraints.push(Constraint::Eq(e.compact()));
    }

    pub fn quad(&mut self, p: DMatrix<f64>, z: Vec<LinExpr>, rhs: LinExpr) {
        self.constraints.push(Constraint::Quad { p, z, rhs });
    }

    pub fn psd(&mut self, expr: SymExpr) {
        self.constraints.push(Constraint::Psd { expr, strict: false });
    }

    pub fn strict_psd(&mut self, expr: SymExpr) {
        self.constraints.push(Constraint::Psd { expr, strict: true });
    }

    pub fn minimize(&mut self, e: LinExpr) {
        self.objective = Objective::Minimize(e.compact());
    }

    pub fn maximize_margin(&mut self) {
        self.objective = Objective::MaximizeMargin;
    }

    pub fn class(&self) -> ProblemClass {
        if !self.syms.is_empty() || self.constraints.iter().any(|c| matches!(c, Constraint::Psd { .. })) {
            ProblemClass::Sdp
        } else if self.constraints.iter().any(|c| matches!(c, Constraint::Quad { .. })) {
            ProblemClass::Qcqp
        } else {
            ProblemClass::Lp
        }
    }

    fn check_references(&self) -> Result<()> {
        let obj_vars = match &self.objective {
            Objective::Minimize(e) => e.terms.iter().map(|t| t.0).collect(),
            Objective::MaximizeMargin => Vec::new(),
        };
        let bad = self.constraints.iter().flat_map(|c| c.vars()).chain(obj_vars).find(|&v| v >= self.nvars);
        match bad {
            Some(v) => Err(RdoError::InvalidArgument(format!("constraint references undeclared variable {v}"))),
            None => Ok(()),
        }
    }

    /// Largest scaled violation of any constraint at `x`, with strict
    /// blocks required to clear `strict_floor`.
    pub fn max_violation(&self, x: &[f64], tol: &Tolerances, strict_floor: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let v = match c {
                Constraint::Le(e) => e.eval(x) / (1.0 + e.scale_at(x)) / tol.feas,
                Constraint::Eq(e) => e.eval(x).abs() / (1.0 + e.scale_at(x)) / tol.feas,
                Constraint::Quad { p, z, rhs } => {
                    let zv = DVector::from_iterator(z.len(), z.iter().map(|e| e.eval(x)));
                    let q = (zv.transpose() * p * &zv)[(0, 0)];
                    let r = rhs.eval(x);
                    (q - r) / (1.0 + q.abs() + r.abs()) / tol.feas
                }
                Constraint::Psd { expr, strict } => {
                    let m = expr.eval(x);
                    let floor = if *strict { strict_floor } else { 0.0 };
                    let scale = m.norm().max(1.0);
                    (floor - numlin::sym_min_eigenvalue(&m)) / scale / tol.psd
                }
            };
            worst = worst.max(v);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub value: Option<f64>,
    pub assignment: Option<Vec<f64>>,
    /// Smallest eigenvalue over strict blocks (the maximized slack in
    /// margin mode).
    pub margin: Option<f64>,
}

impl SolveResult {
    fn status_only(status: SolveStatus) -> Self {
        SolveResult { status, value: None, assignment: None, margin: None }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn vector(&self, v: &VecVar) -> Option<DVector<f64>> {
        self.assignment.as_ref().map(|x| v.value(x))
    }

    pub fn matrix(&self, v: &SymVar) -> Option<DMatrix<f64>> {
        self.assignment.as_ref().map(|x| v.value(x))
    }
}

/// A conic backend. Instances are cheap and meant to be created per solve.
pub trait ConicBackend {
    fn name(&self) -> &'static str;
    fn solve(&self, p: &ConicProblem, tol: &Tolerances) -> Result<SolveResult>;
}

pub fn backend(kind: Backend) -> Box<dyn ConicBackend> {
    match kind {
        Backend::Clarabel => Box::new(ClarabelBackend::default()),
    }
}

pub fn solve_lp(p: &ConicProblem, cfg: &Config) -> Result<SolveResult> {
    if p.class() != ProblemClass::Lp {
        return Err(RdoError::InvalidArgument("solve_lp needs a linear problem without matrix variables".into()));
    }
    backend(cfg.backend).solve(p, &cfg.tol)
}

pub fn solve_qcqp(p: &ConicProblem, cfg: &Config) -> Result<SolveResult> {
    if p.class() == ProblemClass::Sdp {
        return Err(RdoError::InvalidArgument("solve_qcqp cannot take semidefinite constraints".into()));
    }
    for (index, c) in p.constraints.iter().enumerate() {
        if let Constraint::Quad { p: hess, .. } = c {
            let min_eig = numlin::sym_min_eigenvalue(hess);
            if min_eig < -cfg.tol.psd * hess.norm().max(1.0) {
                return Err(RdoError::NonConvexQuadratic { index, min_eig });
            }
        }
    }
    backend(cfg.backend).solve(p, &cfg.tol)
}

pub fn solve_sdp(p: &ConicProblem, cfg: &Config) -> Result<SolveResult> {
    for (index, c) in p.constraints.iter().enumerate() {
        if let Constraint::Quad { p: hess, .. } = c {
            let min_eig = numlin::sym_min_eigenvalue(hess);
            if min_eig < -cfg.tol.psd * hess.norm().max(1.0) {
                return Err(RdoError::NonConvexQuadratic { index, min_eig });
            }
        }
    }
    backend(cfg.backend).solve(p, &cfg.tol)
}

#[derive(Debug, Clone)]
pub struct ClarabelBackend {
    pub max_iter: u32,
    pub accuracy: f64,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        ClarabelBackend { max_iter: 400, accuracy: 1e-10 }
    }
}

/// Rows of `s = b - A x` grouped by cone.
#[derive(Default)]
struct ConeRows {
    zero: Vec<LinExpr>,
    nonneg: Vec<LinExpr>,
    soc: Vec<Vec<LinExpr>>,
    psd: Vec<SymExpr>,
}

fn factor_psd(p: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(numlin::symmetrize(p));
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..p.nrows()).filter(|&k| eig.eigenvalues[k] > 1e-14 * lmax.max(1e-300)).collect();
    DMatrix::from_fn(keep.len(), p.ncols(), |r, c| eig.eigenvalues[keep[r]].sqrt() * eig.eigenvectors[(c, keep[r])])
}

fn lower(p: &ConicProblem, margin_var: Option<VarId>, tol: &Tolerances) -> ConeRows {
    let mut rows = ConeRows::default();
    for c in &p.constraints {
        match c {
            Constraint::Le(e) => rows.nonneg.push(e.scaled(-1.0)),
            Constraint::Eq(e) => rows.zero.push(e.clone()),
            Constraint::Quad { p: hess, z, rhs } => {
                let l = factor_psd(hess);
                let mut cone = vec![rhs.plus(&LinExpr::constant(1.0)).scaled(0.5)];
                for r in 0..l.nrows() {
                    let mut u = LinExpr::zero();
                    for (k, zk) in z.iter().enumerate() {
                        u.add_scaled(zk, l[(r, k)]);
                    }
                    cone.push(u.compact());
                }
                cone.push(rhs.minus(&LinExpr::constant(1.0)).scaled(0.5));
                rows.soc.push(cone);
            }
            Constraint::Psd { expr, strict } => {
                let e = match (strict, margin_var) {
                    (true, Some(t)) => expr.minus_identity_times(Some(t), 0.0),
                    (true, None) => expr.minus_identity_times(None, tol.strict),
                    (false, _) => expr.clone(),
                };
                if e.dim == 1 {
                    rows.nonneg.push(e.entries[0].clone());
                } else {
                    rows.psd.push(e);
                }
            }
        }
    }
    if let Some(t) = margin_var {
        // t <= 1 keeps homogeneous feasibility problems bounded.
        rows.nonneg.push(LinExpr::constant(1.0).minus(&LinExpr::var(t)));
    }
    rows
}

impl ClarabelBackend {
    fn run(&self, p: &ConicProblem, tol: &Tolerances) -> Result<(SolveStatus, Vec<f64>, Option<VarId>)> {
        let margin_var = matches!(p.objective, Objective::MaximizeMargin).then_some(p.nvars);
        let nx = p.nvars + usize::from(margin_var.is_some());
        let rows = lower(p, margin_var, tol);

        let mut q = vec![0.0; nx];
        match &p.objective {
            Objective::Minimize(e) => {
                for &(v, c) in &e.terms {
                    q[v] += c;
                }
            }
            Objective::MaximizeMargin => q[nx - 1] = -1.0,
        }

        let (mut ii, mut jj, mut vv, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut push_row = |e: &LinExpr, scale: f64, b: &mut Vec<f64>| {
            let r = b.len();
            for &(v, c) in &e.terms {
                ii.push(r);
                jj.push(v);
                vv.push(-c * scale);
            }
            b.push(e.constant * scale);
        };
        let mut cones = Vec::new();
        if !rows.zero.is_empty() {
            rows.zero.iter().for_each(|e| push_row(e, 1.0, &mut b));
            cones.push(SupportedConeT::ZeroConeT(rows.zero.len()));
        }
        if !rows.nonneg.is_empty() {
            rows.nonneg.iter().for_each(|e| push_row(e, 1.0, &mut b));
            cones.push(SupportedConeT::NonnegativeConeT(rows.nonneg.len()));
        }
        for cone in &rows.soc {
            cone.iter().for_each(|e| push_row(e, 1.0, &mut b));
            cones.push(SupportedConeT::SecondOrderConeT(cone.len()));
        }
        let sqrt2 = std::f64::consts::SQRT_2;
        for block in &rows.psd {
            for j in 0..block.dim {
                for i in 0..=j {
                    push_row(block.get(i, j), if i == j { 1.0 } else { sqrt2 }, &mut b);
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(block.dim));
        }
        let m = b.len();
        let a = CscMatrix::new_from_triplets(m, nx, ii, jj, vv);
        let pmat = CscMatrix::zeros((nx, nx));
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(self.max_iter)
            .tol_gap_abs(self.accuracy)
            .tol_gap_rel(self.accuracy)
            .tol_feas(self.accuracy)
            .build()
            .map_err(|e| RdoError::Numerical(format!("settings: {e}")))?;
        let mut solver = DefaultSolver::new(&pmat, &q, &a, &b, &cones, settings)
            .map_err(|e| RdoError::Numerical(format!("setup: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
            // Early stops often carry a usable point; the caller verifies it.
            SolverStatus::MaxIterations | SolverStatus::InsufficientProgress => SolveStatus::Optimal,
            _ => SolveStatus::NumericalError,
        };
        let trusted = matches!(sol.status, SolverStatus::Solved | SolverStatus::AlmostSolved);
        let status = if status == SolveStatus::Optimal && !trusted && !gap_ok(sol.obj_val, sol.obj_val_dual) {
            SolveStatus::NumericalError
        } else {
            status
        };
        Ok((status, sol.x.clone(), margin_var))
    }
}

fn gap_ok(primal: f64, dual: f64) -> bool {
    (primal - dual).abs() <= 1e-6 * (1.0 + primal.abs().max(dual.abs()))
}

impl ConicBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, p: &ConicProblem, tol: &Tolerances) -> Result<SolveResult> {
        p.check_references()?;
        let (status, x, margin_var) = self.run(p, tol)?;
        if status != SolveStatus::Optimal {
            return Ok(SolveResult::status_only(status));
        }
        let strict_eigs = |x: &[f64]| {
            p.constraints
                .iter()
                .filter_map(|c| match c {
                    Constraint::Psd { expr, strict: true } => Some(numlin::sym_min_eigenvalue(&expr.eval(x))),
                    _ => None,
                })
                .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
        };
        match (margin_var, &p.objective) {
            (Some(t), _) => {
                let margin = x[t];
                let assignment = x[..p.nvars].to_vec();
                let floor = margin.min(tol.strict);
                if margin < tol.strict {
                    return Ok(SolveResult { status: SolveStatus::Infeasible, value: Some(margin), assignment: None, margin: Some(margin) });
                }
                if p.max_violation(&assignment, tol, floor) > 1.0 {
                    return Ok(SolveResult::status_only(SolveStatus::NumericalError));
                }
                Ok(SolveResult { status: SolveStatus::Optimal, value: Some(margin), margin: Some(margin), assignment: Some(assignment) })
            }
            (None, Objective::Minimize(obj)) => {
                if p.max_violation(&x, tol, tol.strict) > 1.0 {
                    return Ok(SolveResult::status_only(SolveStatus::NumericalError));
                }
                Ok(SolveResult { status: SolveStatus::Optimal, value: Some(obj.eval(&x)), margin: strict_eigs(&x), assignment: Some(x) })
            }
            (None, Objective::MaximizeMargin) => unreachable!("margin mode always has a margin variable"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn cfg() -> Config {
        Config::default()
    }

    #[test]
    fn lp_statuses() {
        let mut p = ConicProblem::new();
        let x = p.add_vector(1);
        p.le(LinExpr::var(x.at(0)).scaled(-1.0));
        p.minimize(LinExpr::var(x.at(0)));
        let r = solve_lp(&p, &cfg()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!(r.value.unwrap().abs() < 1e-8);

        let mut p = ConicProblem::new();
        let x = p.add_vector(1);
        p.le(LinExpr::var(x.at(0)).plus_constant(1.0));
        p.le(LinExpr::var(x.at(0)).scaled(-1.0).plus_constant(1.0));
        p.minimize(LinExpr::var(x.at(0)));
        assert_eq!(solve_lp(&p, &cfg()).unwrap().status, SolveStatus::Infeasible);

        let mut p = ConicProblem::new();
        let x = p.add_vector(1);
        p.le(LinExpr::var(x.at(0)));
        p.minimize(LinExpr::var(x.at(0)));
        assert_eq!(solve_lp(&p, &cfg()).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn lp_rejects_matrix_variables() {
        let mut p = ConicProblem::new();
        p.add_sym(2);
        assert!(solve_lp(&p, &cfg()).is_err());
    }

    #[test]
    fn qcqp_disk_and_infeasible() {
        let mut p = ConicProblem::new();
        let x = p.add_vector(2);
        p.quad(DMatrix::identity(2, 2), x.exprs(), LinExpr::constant(1.0));
        p.minimize(LinExpr::var(x.at(0)));
        let r = solve_qcqp(&p, &cfg()).unwrap();
        assert!((r.value.unwrap() + 1.0).abs() < 1e-7);

        let mut p = ConicProblem::new();
        let x = p.add_vector(1);
        p.quad(DMatrix::identity(1, 1), x.exprs(), LinExpr::constant(-1.0));
        assert_eq!(solve_qcqp(&p, &cfg()).unwrap().status, SolveStatus::Infeasible);

        let mut p = ConicProblem::new();
        let x = p.add_vector(2);
        p.quad(dmatrix![1.0, 0.0; 0.0, -1.0], x.exprs(), LinExpr::constant(1.0));
        assert!(matches!(solve_qcqp(&p, &cfg()), Err(RdoError::NonConvexQuadratic { index: 0, .. })));
    }

    #[test]
    fn sdp_strict_and_margin() {
        let mut p = ConicProblem::new();
        let q = p.add_sym(2);
        p.strict_psd(q.expr());
        p.psd(SymExpr::constant(&DMatrix::identity(2, 2)).minus(&q.expr()));
        p.maximize_margin();
        let r = solve_sdp(&p, &cfg()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!(r.margin.unwrap() > 0.5);

        let g = DMatrix::identity(2, 2) * 2.0;
        let mut p = ConicProblem::new();
        let h = p.add_sym(2);
        p.strict_psd(h.expr());
        p.psd(h.expr().minus(&h.expr().congruence(&g)));
        p.maximize_margin();
        assert_eq!(solve_sdp(&p, &cfg()).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn congruence_matches_dense() {
        let b = dmatrix![1.0, 2.0, 0.5; -1.0, 0.3, 2.0];
        let mut p = ConicProblem::new();
        let x = p.add_sym(2);
        let vals = [1.5, -0.7, 2.0];
        let e = x.expr().congruence(&b);
        let xm = x.value(&vals);
        let dense = b.transpose() * &xm * &b;
        assert!((e.eval(&vals) - dense).norm() < 1e-12);
        let a = DVector::from_vec(vec![0.3, -2.0]);
        let qf = x.expr().quad_form(&a).eval(&vals);
        assert!((qf - (a.transpose() * &xm * &a)[(0, 0)]).abs() < 1e-12);
        assert!((x.expr().trace().eval(&vals) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn bordered_block_is_schur() {
        // [[Q, v], [v^T, 1]] ⪰ 0 with Q = I, minimize v_1: optimum -1.
        let mut p = ConicProblem::new();
        let v = p.add_vector(2);
        let block = SymExpr::constant(&DMatrix::identity(2, 2)).bordered(&v.exprs(), LinExpr::constant(1.0));
        p.psd(block);
        p.minimize(LinExpr::var(v.at(0)));
        let r = solve_sdp(&p, &cfg()).unwrap();
        assert!((r.value.unwrap() + 1.0).abs() < 1e-7);
    }

    #[test]
    fn undeclared_variables_rejected() {
        let mut p = ConicProblem::new();
        p.add_vector(1);
        p.le(LinExpr::var(5));
        assert!(solve_lp(&p, &cfg()).is_err());
    }
}
