//! Polyhedral outer approximations `S_r`, the fixed-point test, lower
//! bounds, and the a-priori step bound for single-matrix dynamics.

use nalgebra::{DMatrix, DVector};

use crate::config::Config;
use crate::error::{RdoError, Result};
use crate::model::{BoundLedger, LedgerRow, LedgerStatus, Polytope, RdoInstance};
use crate::numlin::{self, product_levels, ProductWord};
use crate::par;
use crate::solver::{solve_lp, ConicProblem, LinExpr, SolveStatus};

/// Outcome of minimizing a linear function over a polytope.
#[derive(Debug, Clone, PartialEq)]
pub enum LpValue {
    Optimal { value: f64, argmin: DVector<f64> },
    Unbounded,
    Infeasible,
}

impl LpValue {
    /// The value, with `-inf` for unbounded and `+inf` for infeasible.
    pub fn as_f64(&self) -> f64 {
        match self {
            LpValue::Optimal { value, .. } => *value,
            LpValue::Unbounded => f64::NEG_INFINITY,
            LpValue::Infeasible => f64::INFINITY,
        }
    }

    pub fn argmin(&self) -> Option<&DVector<f64>> {
        match self {
            LpValue::Optimal { argmin, .. } => Some(argmin),
            _ => None,
        }
    }
}

/// `min c^T x` over `{x | Ax <= b}`.
pub fn minimize_over(p: &Polytope, c: &DVector<f64>, cfg: &Config) -> Result<LpValue> {
    let mut prob = ConicProblem::new();
    let x = prob.add_vector(p.dim());
    for (i, row) in x.mapped(p.a()).into_iter().enumerate() {
        prob.le(row.plus_constant(-p.b()[i]));
    }
    let mut obj = LinExpr::zero();
    for j in 0..p.dim() {
        obj.add_term(x.at(j), c[j]);
    }
    prob.minimize(obj);
    let res = solve_lp(&prob, cfg)?;
    match res.status {
        SolveStatus::Optimal => Ok(LpValue::Optimal {
            value: res.value.expect("optimal value"),
            argmin: res.vector(&x).expect("optimal point"),
        }),
        SolveStatus::Unbounded => Ok(LpValue::Unbounded),
        SolveStatus::Infeasible => Ok(LpValue::Infeasible),
        SolveStatus::NumericalError => Err(RdoError::Numerical("linear program".into())),
    }
}

/// Coordinate bounds `l <= x <= u` from `2n` LPs; `None` if unbounded.
pub fn coordinate_box(p: &Polytope, cfg: &Config) -> Result<Option<(DVector<f64>, DVector<f64>)>> {
    let n = p.dim();
    let vals = par::map_range(cfg.execution, 2 * n, |k| {
        let mut c = DVector::zeros(n);
        c[k % n] = if k < n { 1.0 } else { -1.0 };
        minimize_over(p, &c, &Config { execution: crate::config::Execution::Sequential, ..cfg.clone() })
    });
    let mut lo = DVector::zeros(n);
    let mut hi = DVector::zeros(n);
    let mut bounded = true;
    for (k, v) in vals.into_iter().enumerate() {
        match v? {
            LpValue::Infeasible => return Err(RdoError::EmptyPolytope),
            LpValue::Unbounded => bounded = false,
            LpValue::Optimal { value, .. } => {
                if k < n {
                    lo[k] = value;
                } else {
                    hi[k - n] = -value;
                }
            }
        }
    }
    Ok(bounded.then_some((lo, hi)))
}

pub fn check_bounded(p: &Polytope, cfg: &Config) -> Result<bool> {
    Ok(coordinate_box(p, cfg)?.is_some())
}

pub fn check_origin_interior(p: &Polytope) -> bool {
    p.b().iter().all(|&v| v > 0.0)
}

/// Rows `a_i^T G_w` for every word, stacked level by level.
pub fn stack_rows(p: &Polytope, words: &[&ProductWord]) -> Polytope {
    let m = p.rows();
    let n = p.dim();
    let mut a = DMatrix::zeros(m * words.len(), n);
    let mut b = DVector::zeros(m * words.len());
    for (k, w) in words.iter().enumerate() {
        let aw = p.a() * &w.matrix;
        a.view_mut((k * m, 0), (m, n)).copy_from(&aw);
        b.rows_mut(k * m, m).copy_from(p.b());
    }
    Polytope::new(a, b).expect("stacked rows inherit validity")
}

/// The polyhedron `S_r`.
pub fn outer_set(inst: &RdoInstance, r: usize, cfg: &Config) -> Result<Polytope> {
    let levels = product_levels(&inst.dynamics, r, cfg)?;
    let words: Vec<&ProductWord> = levels.iter().flatten().collect();
    Ok(stack_rows(&inst.polytope, &words))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterLevel {
    pub r: usize,
    /// `m · Σ_{k<=r} s^k` rows.
    pub constraints: Polytope,
    pub lower: LpValue,
}

pub fn lower_bound(inst: &RdoInstance, r: usize, cfg: &Config) -> Result<OuterLevel> {
    let constraints = outer_set(inst, r, cfg)?;
    let lower = minimize_over(&constraints, &inst.c, cfg)?;
    Ok(OuterLevel { r, constraints, lower })
}

fn max_row_over(set: &Polytope, row: DVector<f64>, cfg: &Config) -> Result<f64> {
    Ok(-minimize_over(set, &(-row), cfg)?.as_f64())
}

/// Whether `S_r = S_{r+1}`: every row of every length-`(r+1)` word is
/// implied by `S_r` up to `ε_fp (1 + |b_i|)`.
pub fn fixed_point_reached(inst: &RdoInstance, r: usize, cfg: &Config) -> Result<bool> {
    numlin::check_level_cap(inst.s(), r + 1, cfg)?;
    let levels = product_levels(&inst.dynamics, r + 1, cfg)?;
    let inner: Vec<&ProductWord> = levels[..=r].iter().flatten().collect();
    let set = stack_rows(&inst.polytope, &inner);
    let p = &inst.polytope;
    let next = &levels[r + 1];
    let m = p.rows();
    let seq = Config { execution: crate::config::Execution::Sequential, ..cfg.clone() };

    let check = |w: &ProductWord| -> Result<Option<bool>> {
        let aw = p.a() * &w.matrix;
        for i in 0..m {
            let bi = p.b()[i];
            match max_row_over(&set, aw.row(i).transpose(), &seq) {
                Ok(v) if v == f64::NEG_INFINITY => return Ok(None),
                Ok(v) => {
                    if v > bi + cfg.tol.fp * (1.0 + bi.abs()) {
                        return Ok(Some(false));
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Ok(Some(true))
    };
    let outcomes = par::map(cfg.execution, next, check);
    let mut all = true;
    for o in outcomes {
        match o? {
            None => return Err(RdoError::EmptyOuterSet { r }),
            Some(ok) => all &= ok,
        }
    }
    Ok(all)
}

/// Iterates `r = 0..=r_max`, stopping at the first fixed point.
pub fn solve_outer(inst: &RdoInstance, r_max: usize, cfg: &Config) -> Result<BoundLedger> {
    let mut ledger = BoundLedger::new();
    for r in 0..=r_max {
        let level = lower_bound(inst, r, cfg)?;
        if level.lower == LpValue::Infeasible {
            ledger.push(LedgerRow { r, lower: Some(f64::INFINITY), upper: None, witness: None, status: LedgerStatus::Infeasible }, cfg.tol.gap)?;
            return Ok(ledger);
        }
        let status = if fixed_point_reached(inst, r, cfg)? {
            LedgerStatus::FixedPoint
        } else if r == r_max {
            LedgerStatus::LevelCapReached
        } else {
            LedgerStatus::Open
        };
        let row = LedgerRow { r, lower: Some(level.lower.as_f64()), upper: None, witness: level.lower.argmin().cloned(), status };
        ledger.push(row, cfg.tol.gap)?;
        if status != LedgerStatus::Open {
            break;
        }
    }
    Ok(ledger)
}

/// Step-bound certificate: `S_{r_bar}` equals the feasible set.
#[derive(Debug, Clone, PartialEq)]
pub struct StepBound {
    pub m: DMatrix<f64>,
    pub alpha1: f64,
    pub alpha2: f64,
    pub gamma: f64,
    pub r_bar: usize,
}

/// `min_i b_i^2 / (a_i^T M^{-1} a_i)`: the largest level with `E(α) ⊆ P`.
pub fn inscribed_level(p: &Polytope, m: &DMatrix<f64>) -> Result<f64> {
    let minv = m.clone().try_inverse().ok_or(RdoError::SingularSystem)?;
    let mut best = f64::INFINITY;
    for i in 0..p.rows() {
        let a = p.a().row(i).transpose();
        let s = (a.transpose() * &minv * &a)[(0, 0)];
        if s > 0.0 {
            best = best.min(p.b()[i] * p.b()[i] / s);
        }
    }
    Ok(best)
}

/// Term-wise bound on `max x^T M x` over the box `[l, u]`.
pub fn box_level(m: &DMatrix<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> f64 {
    let n = m.nrows();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mij = m[(i, j)];
            let cands = [mij * hi[i] * hi[j], mij * lo[i] * lo[j], mij * hi[i] * lo[j], mij * lo[i] * hi[j]];
            total += cands.iter().map(|v| v.abs()).fold(0.0, f64::max);
        }
    }
    total
}

fn step_preconditions(inst: &RdoInstance, cfg: &Config) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
    let g = inst.single_matrix()?.clone();
    let rho = numlin::spectral_radius(&g)?;
    if rho >= 1.0 - numlin::INSTABILITY_MARGIN {
        return Err(RdoError::UnstableDynamics { rho });
    }
    if let Some((row, &value)) = inst.polytope.b().iter().enumerate().find(|(_, &v)| v <= 0.0) {
        return Err(RdoError::OriginNotInterior { row, value });
    }
    let (lo, hi) = coordinate_box(&inst.polytope, cfg)?.ok_or(RdoError::UnboundedPolytope)?;
    Ok((g, lo, hi))
}

fn ceil_nonneg(v: f64) -> usize {
    if v.is_nan() || v <= 0.0 {
        0
    } else {
        v.ceil() as usize
    }
}

pub fn convergence_bound(inst: &RdoInstance, cfg: &Config) -> Result<StepBound> {
    let (g, lo, hi) = step_preconditions(inst, cfg)?;
    let m = numlin::solve_discrete_lyapunov(&g)?;
    let alpha1 = inscribed_level(&inst.polytope, &m)?;
    let alpha2 = box_level(&m, &lo, &hi);
    let gamma = 1.0 - 1.0 / numlin::gershgorin_lambda_max(&m);
    let r_bar = ceil_nonneg((alpha2 / alpha1 - 1.0) / (1.0 - gamma));
    Ok(StepBound { m, alpha1, alpha2, gamma, r_bar })
}

/// Variant with a known bound `ρ(G) <= rho_star < 1`: rescales `G` by
/// `ρ̂ = (1 + ρ*)/2` and uses the shrinkage `ρ̂²`.
pub fn convergence_bound_fixed_rho(inst: &RdoInstance, rho_star: f64, cfg: &Config) -> Result<StepBound> {
    if !(rho_star < 1.0 && rho_star >= 0.0) {
        return Err(RdoError::InvalidArgument(format!("rho_star must lie in [0, 1), got {rho_star}")));
    }
    let rho = numlin::spectral_radius(inst.single_matrix()?)?;
    if rho > rho_star {
        return Err(RdoError::RhoStarViolated { rho, rho_star });
    }
    let (g, lo, hi) = step_preconditions(inst, cfg)?;
    let rho_hat = 0.5 * (1.0 + rho_star);
    let m = numlin::solve_discrete_lyapunov(&(g / rho_hat))?;
    let alpha1 = inscribed_level(&inst.polytope, &m)?;
    let alpha2 = box_level(&m, &lo, &hi);
    let gamma = rho_hat * rho_hat;
    let r_bar = ceil_nonneg((alpha2 / alpha1).ln() / (1.0 / gamma).ln());
    Ok(StepBound { m, alpha1, alpha2, gamma, r_bar })
}
