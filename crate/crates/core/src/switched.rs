//! Switched dynamics: JSR bounds, path-complete Lyapunov certificates,
//! multi-ellipsoid invariant sets and the switched inner hierarchies.

use nalgebra::{DMatrix, DVector};

use crate::config::Config;
use crate::error::{RdoError, Result};
use crate::model::{normalize_rhs, Dynamics, MultiEllipsoid, Polytope, RdoInstance};
use crate::numlin::{self, product_levels, ProductWord};
use crate::outer::{self, inscribed_level, OuterLevel};
use crate::par;
use crate::solver::{solve_qcqp, solve_sdp, ConicProblem, LinExpr, SolveStatus, SymExpr, SymVar, VecVar};

#[derive(Debug, Clone, PartialEq)]
pub struct JsrBounds {
    /// Lower end of the bisection bracket (largest scale left uncertified).
    pub lower: f64,
    /// Certified upper bound.
    pub upper: f64,
    pub l_used: usize,
    pub k_used: usize,
    /// `max ρ(G_w)^{1/|w|}` over words up to `k_used`; a true lower bound.
    pub product_lower: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathCompleteCertificate {
    pub l: usize,
    pub s: usize,
    /// `H_π` for `π in [s]^{l-1}`, lexicographic.
    pub forms: Vec<DMatrix<f64>>,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathComplete {
    Feasible(PathCompleteCertificate),
    /// Best margin found (below `ε_strict`), when the solver reported one.
    Infeasible { margin: Option<f64> },
}

impl PathComplete {
    pub fn is_feasible(&self) -> bool {
        matches!(self, PathComplete::Feasible(_))
    }
}

/// All words of length `len` over `s` letters, lexicographic.
pub fn multi_indices(s: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|w| {
                (0..s).map(move |j| {
                    let mut v = w.clone();
                    v.push(j);
                    v
                })
            })
            .collect();
    }
    out
}

fn index_of(s: usize, pi: &[usize]) -> usize {
    pi.iter().fold(0, |acc, &p| acc * s + p)
}

/// Index triples `(from, to, j)` of the path-complete inequalities
/// `G_j^T H_from G_j ⪯ H_to`: `from = iσ`, `to = σj`. For `l = 1` the single
/// form maps to itself.
pub fn path_complete_edges(s: usize, l: usize) -> Vec<(usize, usize, usize)> {
    if l == 1 {
        return (0..s).map(|j| (0, 0, j)).collect();
    }
    let mut edges = Vec::new();
    for sigma in multi_indices(s, l - 2) {
        for i in 0..s {
            for j in 0..s {
                let mut from = vec![i];
                from.extend(&sigma);
                let mut to = sigma.clone();
                to.push(j);
                edges.push((index_of(s, &from), index_of(s, &to), j));
            }
        }
    }
    edges
}

fn form_count(s: usize, l: usize, cfg: &Config) -> Result<usize> {
    if l == 0 {
        return Err(RdoError::InvalidArgument("level l must be at least 1".into()));
    }
    numlin::check_level_cap(s, l - 1, cfg)?;
    Ok(s.pow((l - 1) as u32))
}

/// `max ρ(G_w)^{1/|w|}` over nonempty words of length `<= k_max`.
pub fn jsr_lower_bound(dyn_: &Dynamics, k_max: usize, cfg: &Config) -> Result<f64> {
    let levels = product_levels(dyn_, k_max, cfg)?;
    let words: Vec<&ProductWord> = levels.iter().skip(1).flatten().collect();
    let vals = par::map(cfg.execution, &words, |w| numlin::spectral_radius(&w.matrix).map(|r| r.powf(1.0 / w.len() as f64)));
    vals.into_iter().try_fold(0.0, |acc, v| v.map(|v| f64::max(acc, v)))
}

/// Smallest eigenvalue over `H_π` and `H_to - G_j^T H_from G_j`.
pub fn path_complete_slack(dyn_: &Dynamics, l: usize, forms: &[DMatrix<f64>]) -> f64 {
    let mut worst = forms.iter().map(numlin::sym_min_eigenvalue).fold(f64::INFINITY, f64::min);
    for (from, to, j) in path_complete_edges(dyn_.s(), l) {
        let g = &dyn_.matrices()[j];
        let d = &forms[to] - g.transpose() * &forms[from] * g;
        worst = worst.min(numlin::sym_min_eigenvalue(&d));
    }
    worst
}

/// Re-checks every LMI of a certificate by eigenvalues.
pub fn verify_certificate(dyn_: &Dynamics, cert: &PathCompleteCertificate, cfg: &Config) -> bool {
    let scale = cert.forms.iter().map(|h| h.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let strict_ok = cert.forms.iter().all(|h| numlin::sym_min_eigenvalue(h) >= cfg.tol.strict - cfg.tol.psd * scale);
    strict_ok && path_complete_slack(dyn_, cert.l, &cert.forms) >= -cfg.tol.psd * scale
}

/// Strict feasibility of the path-complete LMIs at level `l`, found by
/// maximizing the common slack under `Σ trace(H_π) = 1`.
pub fn path_complete_feasible(dyn_: &Dynamics, l: usize, cfg: &Config) -> Result<PathComplete> {
    let s = dyn_.s();
    let n = dyn_.n();
    let count = form_count(s, l, cfg)?;
    let mut prob = ConicProblem::new();
    let hs: Vec<SymVar> = (0..count).map(|_| prob.add_sym(n)).collect();
    let mut trace = LinExpr::zero();
    for h in &hs {
        prob.strict_psd(h.expr());
        trace.add_scaled(&h.expr().trace(), 1.0);
    }
    prob.equal(trace.plus_constant(-1.0));
    for (from, to, j) in path_complete_edges(s, l) {
        let g = &dyn_.matrices()[j];
        prob.strict_psd(hs[to].expr().minus(&hs[from].expr().congruence(g)));
    }
    prob.maximize_margin();
    let res = solve_sdp(&prob, cfg)?;
    match res.status {
        SolveStatus::Optimal => {
            let forms = hs.iter().map(|h| numlin::symmetrize(&res.matrix(h).expect("forms"))).collect();
            let cert = PathCompleteCertificate { l, s, forms, margin: res.margin.expect("margin") };
            if verify_certificate(dyn_, &cert, cfg) {
                Ok(PathComplete::Feasible(cert))
            } else {
                Err(RdoError::Numerical("path-complete certificate failed independent verification".into()))
            }
        }
        SolveStatus::Infeasible => Ok(PathComplete::Infeasible { margin: res.margin }),
        SolveStatus::Unbounded => Err(RdoError::Numerical("path-complete SDP reported unbounded".into())),
        SolveStatus::NumericalError => Err(RdoError::Numerical("path-complete SDP".into())),
    }
}

fn certified_at(dyn_: &Dynamics, l: usize, beta: f64, cfg: &Config) -> Result<bool> {
    match path_complete_feasible(&dyn_.scaled(1.0 / beta), l, cfg) {
        Ok(pc) => Ok(pc.is_feasible()),
        Err(RdoError::Numerical(_)) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Bisection on `β`: feasibility for `𝒢/β` certifies `ρ(𝒢) <= β`.
pub fn jsr_upper_bound(dyn_: &Dynamics, l: usize, tol: f64, cfg: &Config) -> Result<JsrBounds> {
    if !(tol > 0.0) {
        return Err(RdoError::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    form_count(dyn_.s(), l, cfg)?;
    let k_used = 2;
    let norm_bound = dyn_.matrices().iter().map(numlin::spectral_norm).fold(0.0, f64::max);
    if norm_bound == 0.0 {
        return Ok(JsrBounds { lower: 0.0, upper: 0.0, l_used: l, k_used, product_lower: 0.0 });
    }
    let product_lower = jsr_lower_bound(dyn_, k_used, cfg)?;
    let mut lo = product_lower;
    let mut hi = norm_bound * (1.0 + tol);
    if !certified_at(dyn_, l, hi, cfg)? {
        return Err(RdoError::BracketFailure { norm_bound });
    }
    for _ in 0..40 {
        if hi - lo <= tol * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= 0.0 {
            break;
        }
        if certified_at(dyn_, l, mid, cfg)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(JsrBounds { lower: lo.min(hi), upper: hi, l_used: l, k_used, product_lower })
}

/// Path-complete forms with the level `ᾱ` that puts `{x^T H_{1…1} x <= ᾱ}`
/// inside P; the resulting `F_ᾱ` is invariant under every generator.
pub fn multi_ellipsoid_invariant_set(dyn_: &Dynamics, l: usize, p: &Polytope, cfg: &Config) -> Result<MultiEllipsoid> {
    if let Some((row, &value)) = p.b().iter().enumerate().find(|(_, &v)| v <= 0.0) {
        return Err(RdoError::OriginNotInterior { row, value });
    }
    let cert = match path_complete_feasible(dyn_, l, cfg)? {
        PathComplete::Feasible(c) => c,
        PathComplete::Infeasible { .. } => return Err(RdoError::InfeasibleLevel { l }),
    };
    let alpha = inscribed_level(p, &cert.forms[0])?;
    if !alpha.is_finite() {
        return Err(RdoError::UnboundedPolytope);
    }
    MultiEllipsoid::new(l, dyn_.s(), cert.forms, alpha, cfg.tol.psd)
}

/// Inner bound for switched dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedInnerLevel {
    pub r: usize,
    /// `F` for the QP hierarchy; `{x | x^T H_{π,r} x <= 1 ∀π}` for the SDP.
    pub set: MultiEllipsoid,
    pub value: f64,
    pub witness: DVector<f64>,
    /// `Q_{π,r}` when produced by the SDP hierarchy.
    pub q_forms: Option<Vec<DMatrix<f64>>>,
}

fn objective(x: &VecVar, c: &DVector<f64>) -> LinExpr {
    let mut e = LinExpr::zero();
    for j in 0..c.len() {
        e.add_term(x.at(j), c[j]);
    }
    e
}

fn prefix_rows(prob: &mut ConicProblem, x: &VecVar, p: &Polytope, levels: &[Vec<ProductWord>], r: usize) {
    for w in levels[..r].iter().flatten() {
        for (i, row) in x.mapped(&(p.a() * &w.matrix)).into_iter().enumerate() {
            prob.le(row.plus_constant(-p.b()[i]));
        }
    }
}

/// Checks `F ⊆ P` through `H_{1…1}` and the path-complete inequalities.
pub fn validate_multi_ellipsoid(dyn_: &Dynamics, f: &MultiEllipsoid, p: &Polytope, cfg: &Config) -> Result<()> {
    if f.s != dyn_.s() || f.dim() != dyn_.n() {
        return Err(RdoError::InvalidInvariantSet("shape does not match the dynamics".into()));
    }
    let scale = f.forms.iter().map(|h| h.norm()).fold(0.0, f64::max);
    let slack = path_complete_slack(dyn_, f.l, &f.forms);
    if slack < -cfg.tol.psd * scale {
        return Err(RdoError::InvalidInvariantSet(format!("path-complete inequalities fail (slack {slack:e})")));
    }
    let alpha = inscribed_level(p, &f.forms[0])?;
    if f.alpha > alpha * (1.0 + cfg.tol.feas) {
        return Err(RdoError::InvalidInvariantSet(format!("level {} exceeds the inscribed level {alpha}", f.alpha)));
    }
    Ok(())
}

/// `min c^T x` with `(G x)^T H_π (G x) <= ᾱ` for all words of length `r`
/// and all `π`, plus `A G x <= b` for all shorter words.
pub fn switched_inner_qp(inst: &RdoInstance, f: &MultiEllipsoid, r: usize, cfg: &Config) -> Result<SwitchedInnerLevel> {
    validate_multi_ellipsoid(&inst.dynamics, f, &inst.polytope, cfg)?;
    let levels = product_levels(&inst.dynamics, r, cfg)?;
    let mut prob = ConicProblem::new();
    let x = prob.add_vector(inst.n());
    prefix_rows(&mut prob, &x, &inst.polytope, &levels, r);
    for w in &levels[r] {
        let z = x.mapped(&w.matrix);
        for h in &f.forms {
            prob.quad(h.clone(), z.clone(), LinExpr::constant(f.alpha));
        }
    }
    prob.minimize(objective(&x, &inst.c));
    let res = solve_qcqp(&prob, cfg)?;
    match res.status {
        SolveStatus::Optimal => Ok(SwitchedInnerLevel {
            r,
            set: f.clone(),
            value: res.value.expect("value"),
            witness: res.vector(&x).expect("point"),
            q_forms: None,
        }),
        SolveStatus::Unbounded => Err(RdoError::UnboundedPolytope),
        _ => Err(RdoError::Numerical("switched inner QP".into())),
    }
}

/// The lifted SDP over `(x, Q_π)`: the switched analogue of the
/// single-matrix inner SDP, on the normalized polytope.
pub fn switched_inner_sdp(inst: &RdoInstance, l: usize, r: usize, cfg: &Config) -> Result<SwitchedInnerLevel> {
    let p = normalize_rhs(&inst.polytope)?;
    let dyn_ = &inst.dynamics;
    let (s, n) = (dyn_.s(), dyn_.n());
    let count = form_count(s, l, cfg)?;
    let levels = product_levels(dyn_, r, cfg)?;
    let mut prob = ConicProblem::new();
    let x = prob.add_vector(n);
    let qs: Vec<SymVar> = (0..count).map(|_| prob.add_sym(n)).collect();
    let qe: Vec<SymExpr> = qs.iter().map(|q| q.expr()).collect();
    for q in &qe {
        prob.strict_psd(q.clone());
    }
    // G_j^T H_from G_j ⪯ H_to  ⇔  G_j Q_to G_j^T ⪯ Q_from
    for (from, to, j) in path_complete_edges(s, l) {
        let g = &dyn_.matrices()[j];
        prob.psd(qe[from].minus(&qe[to].congruence(&g.transpose())));
    }
    for i in 0..p.rows() {
        prob.le(qe[0].quad_form(&p.a().row(i).transpose()).plus_constant(-1.0));
    }
    for w in &levels[r] {
        let z = x.mapped(&w.matrix);
        for q in &qe {
            prob.psd(q.bordered(&z, LinExpr::constant(1.0)));
        }
    }
    prefix_rows(&mut prob, &x, &p, &levels, r);
    prob.minimize(objective(&x, &inst.c));
    let res = solve_sdp(&prob, cfg)?;
    match res.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(RdoError::InfeasibleLevel { l }),
        SolveStatus::Unbounded => return Err(RdoError::UnboundedPolytope),
        SolveStatus::NumericalError => return Err(RdoError::Numerical("switched inner SDP".into())),
    }
    let q_forms: Vec<DMatrix<f64>> = qs.iter().map(|q| numlin::symmetrize(&res.matrix(q).expect("Q"))).collect();
    let h_forms = q_forms.iter().map(|q| numlin::floored_inverse(q, cfg.tol.psd)).collect();
    Ok(SwitchedInnerLevel {
        r,
        set: MultiEllipsoid { l, s, forms: h_forms, alpha: 1.0 },
        value: res.value.expect("value"),
        witness: res.vector(&x).expect("point"),
        q_forms: Some(q_forms),
    })
}

/// Lower bound over `S_r` built from all words of length `<= r`.
pub fn switched_lower_bound(inst: &RdoInstance, r: usize, cfg: &Config) -> Result<OuterLevel> {
    outer::lower_bound(inst, r, cfg)
}

/// Fixed-point test over all `m · s^{r+1}` row/word pairs.
pub fn switched_fixed_point(inst: &RdoInstance, r: usize, cfg: &Config) -> Result<bool> {
    outer::fixed_point_reached(inst, r, cfg)
}

/// Tries `l = 1, 2, …, l_max` and returns the first feasible certificate.
pub fn first_feasible_level(dyn_: &Dynamics, l_max: usize, cfg: &Config) -> Result<(Vec<(usize, bool)>, Option<PathCompleteCertificate>)> {
    let mut tried = Vec::new();
    for l in 1..=l_max {
        match path_complete_feasible(dyn_, l, cfg)? {
            PathComplete::Feasible(c) => {
                tried.push((l, true));
                return Ok((tried, Some(c)));
            }
            PathComplete::Infeasible { .. } => tried.push((l, false)),
        }
    }
    Ok((tried, None))
}
