//! Inner approximations `I_r(E)` for a single dynamics matrix: the default
//! Lyapunov ellipsoid, the fixed-ellipsoid QP hierarchy and the
//! objective-aware SDP hierarchy over `(x, Q)` with `Q = H^{-1}`.

use nalgebra::{DMatrix, DVector};

use crate::config::Config;
use crate::error::{RdoError, Result};
use crate::model::{normalize_rhs, Ellipsoid, Polytope, RdoInstance};
use crate::numlin;
use crate::outer::inscribed_level;
use crate::solver::{solve_qcqp, solve_sdp, ConicProblem, LinExpr, SolveResult, SolveStatus, VecVar};

#[derive(Debug, Clone, PartialEq)]
pub struct InnerLevel {
    pub r: usize,
    /// `E` for the QP hierarchy, `E_r = {z | z^T H_r z <= 1}` for the SDP.
    pub ellipsoid: Ellipsoid,
    pub value: f64,
    pub witness: DVector<f64>,
    /// `Q_r` when produced by the SDP hierarchy.
    pub q: Option<DMatrix<f64>>,
}

/// Lyapunov matrix `M` with the largest level `α₁` such that `E(α₁) ⊆ P`.
pub fn default_invariant_ellipsoid(inst: &RdoInstance, cfg: &Config) -> Result<Ellipsoid> {
    let g = inst.single_matrix()?;
    let m = numlin::solve_discrete_lyapunov(g)?;
    if let Some((row, &value)) = inst.polytope.b().iter().enumerate().find(|(_, &v)| v <= 0.0) {
        return Err(RdoError::OriginNotInterior { row, value });
    }
    let alpha = inscribed_level(&inst.polytope, &m)?;
    if !alpha.is_finite() {
        return Err(RdoError::UnboundedPolytope);
    }
    Ellipsoid::new(m, alpha, cfg.tol.psd)
}

/// `max_{x in E} a^T x = sqrt(α a^T M^{-1} a)` for each row of P.
pub fn support_values(p: &Polytope, e: &Ellipsoid) -> Result<Vec<f64>> {
    let chol = e.m.clone().cholesky().ok_or_else(|| RdoError::InvalidInvariantSet("form matrix is not positive definite".into()))?;
    Ok((0..p.rows())
        .map(|i| {
            let a = p.a().row(i).transpose();
            (e.alpha * a.dot(&chol.solve(&a))).sqrt()
        })
        .collect())
}

/// Checks `G^T M G ⪯ M` for every generator and `E ⊆ P`.
pub fn validate_invariant_ellipsoid(p: &Polytope, mats: &[DMatrix<f64>], e: &Ellipsoid, cfg: &Config) -> Result<()> {
    let floor = -cfg.tol.psd * e.m.trace();
    for (k, g) in mats.iter().enumerate() {
        let lmin = numlin::sym_min_eigenvalue(&(&e.m - g.transpose() * &e.m * g));
        if lmin < floor {
            return Err(RdoError::InvalidInvariantSet(format!("not invariant under G{} (eigenvalue {lmin:e})", k + 1)));
        }
    }
    for (i, h) in support_values(p, e)?.into_iter().enumerate() {
        let bi = p.b()[i];
        if h > bi + cfg.tol.feas * (1.0 + bi.abs()) {
            return Err(RdoError::InvalidInvariantSet(format!("not contained in P: row {i} support {h} > {bi}")));
        }
    }
    Ok(())
}

fn objective(x: &VecVar, c: &DVector<f64>) -> LinExpr {
    let mut e = LinExpr::zero();
    for j in 0..c.len() {
        e.add_term(x.at(j), c[j]);
    }
    e
}

/// Rows `A G^k x <= b` for `k = 0..r-1`.
fn prefix_constraints(prob: &mut ConicProblem, x: &VecVar, p: &Polytope, g: &DMatrix<f64>, r: usize) {
    let mut gk = DMatrix::identity(g.nrows(), g.ncols());
    for _ in 0..r {
        for (i, row) in x.mapped(&(p.a() * &gk)).into_iter().enumerate() {
            prob.le(row.plus_constant(-p.b()[i]));
        }
        gk = g * gk;
    }
}

fn require_optimal(res: &SolveResult, what: &str) -> Result<()> {
    match res.status {
        SolveStatus::Optimal => Ok(()),
        SolveStatus::Unbounded => Err(RdoError::UnboundedPolytope),
        SolveStatus::Infeasible => Err(RdoError::Numerical(format!("{what} reported infeasible although the origin is feasible"))),
        SolveStatus::NumericalError => Err(RdoError::Numerical(what.into())),
    }
}

/// `min c^T x` over `I_r(E)`: `(G^r x)^T M (G^r x) <= α` and
/// `A G^k x <= b` for `k < r`.
pub fn inner_bound_qp(inst: &RdoInstance, e: &Ellipsoid, r: usize, cfg: &Config) -> Result<InnerLevel> {
    let g = inst.single_matrix()?;
    validate_invariant_ellipsoid(&inst.polytope, std::slice::from_ref(g), e, cfg)?;
    let n = inst.n();
    let mut prob = ConicProblem::new();
    let x = prob.add_vector(n);
    prefix_constraints(&mut prob, &x, &inst.polytope, g, r);
    let gr = g.pow(r as u32);
    prob.quad(e.m.clone(), x.mapped(&gr), LinExpr::constant(e.alpha));
    prob.minimize(objective(&x, &inst.c));
    let res = solve_qcqp(&prob, cfg)?;
    require_optimal(&res, "inner QP")?;
    Ok(InnerLevel { r, ellipsoid: e.clone(), value: res.value.expect("value"), witness: res.vector(&x).expect("point"), q: None })
}

/// The SDP over `(x, Q)` whose optimum matches the best ellipsoid-based
/// inner bound at level `r`. Works on the normalized polytope (`b = 1`).
pub fn inner_sdp(inst: &RdoInstance, r: usize, cfg: &Config) -> Result<InnerLevel> {
    let g = inst.single_matrix()?;
    let p = normalize_rhs(&inst.polytope)?;
    let n = inst.n();
    let mut prob = ConicProblem::new();
    let x = prob.add_vector(n);
    let q = prob.add_sym(n);
    let qe = q.expr();
    prob.strict_psd(qe.clone());
    prob.psd(qe.minus(&qe.congruence(&g.transpose())));
    for i in 0..p.rows() {
        prob.le(qe.quad_form(&p.a().row(i).transpose()).plus_constant(-1.0));
    }
    let gr = g.pow(r as u32);
    prob.psd(qe.bordered(&x.mapped(&gr), LinExpr::constant(1.0)));
    prefix_constraints(&mut prob, &x, &p, g, r);
    prob.minimize(objective(&x, &inst.c));
    let res = solve_sdp(&prob, cfg)?;
    require_optimal(&res, "inner SDP")?;
    let qv = numlin::symmetrize(&res.matrix(&q).expect("Q"));
    let h = numlin::floored_inverse(&qv, cfg.tol.psd);
    Ok(InnerLevel {
        r,
        ellipsoid: Ellipsoid { m: h, alpha: 1.0 },
        value: res.value.expect("value"),
        witness: res.vector(&x).expect("point"),
        q: Some(qv),
    })
}

/// Whether `(x, H)` satisfies the ellipsoid-form constraints exactly when
/// `(x, H^{-1})` satisfies the SDP-form constraints, on the normalized P.
pub fn schur_polar_equivalence_check(x: &DVector<f64>, h: &DMatrix<f64>, inst: &RdoInstance, r: usize, cfg: &Config) -> bool {
    let (Ok(g), Ok(p)) = (inst.single_matrix(), normalize_rhs(&inst.polytope)) else {
        return false;
    };
    let eps = cfg.tol.feas;
    let h = numlin::symmetrize(h);
    let Some(chol) = h.clone().cholesky() else {
        return false;
    };
    let q = numlin::symmetrize(&chol.inverse());
    let gr = g.pow(r as u32);
    let y = &gr * x;

    let mut prefix_ok = true;
    let mut gk = DMatrix::identity(g.nrows(), g.ncols());
    for _ in 0..r {
        prefix_ok &= p.max_violation(&(&gk * x)) <= eps;
        gk = g * gk;
    }

    // ellipsoid form
    let scale_h = h.norm().max(1.0);
    let h_pd = numlin::sym_min_eigenvalue(&h) > 0.0;
    let h_inv = numlin::sym_max_eigenvalue(&(g.transpose() * &h * g - &h)) <= eps * scale_h;
    let h_contained = (0..p.rows()).all(|i| {
        // support of {z | z^T H z <= 1} in direction a_i
        let a = p.a().row(i).transpose();
        a.dot(&chol.solve(&a)).sqrt() <= 1.0 + eps
    });
    let h_reach = y.dot(&(&h * &y)) <= 1.0 + eps;
    let form_h = h_pd && h_inv && h_contained && h_reach && prefix_ok;

    // SDP form
    let scale_q = q.norm().max(1.0);
    let q_pd = numlin::sym_min_eigenvalue(&q) > 0.0;
    let q_inv = numlin::sym_min_eigenvalue(&(&q - g * &q * g.transpose())) >= -eps * scale_q;
    let q_contained = (0..p.rows()).all(|i| {
        let a = p.a().row(i).transpose();
        a.dot(&(&q * &a)) <= 1.0 + 2.0 * eps
    });
    let n = x.len();
    let mut block = DMatrix::zeros(n + 1, n + 1);
    block.view_mut((0, 0), (n, n)).copy_from(&q);
    block.view_mut((0, n), (n, 1)).copy_from(&y);
    block.view_mut((n, 0), (1, n)).copy_from(&y.transpose());
    block[(n, n)] = 1.0;
    let q_reach = numlin::sym_min_eigenvalue(&block) >= -eps * scale_q;
    let form_q = q_pd && q_inv && q_contained && q_reach && prefix_ok;

    form_h == form_q
}
