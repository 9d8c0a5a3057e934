//! Domain types: polytopes, dynamics, instances, ellipsoidal sets and the
//! bound ledger, plus instance validation and trajectory simulation.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::config::Config;
use crate::error::{RdoError, Result, ValidationIssue};

/// The polyhedron `{x | Ax <= b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

fn polytope_issues(a: &DMatrix<f64>, b: &DVector<f64>) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    if a.nrows() == 0 {
        issues.push(ValidationIssue::DimensionMismatch { what: "A rows (need >= 1)".into(), expected: 1, found: 0 });
    }
    if a.ncols() == 0 {
        issues.push(ValidationIssue::DimensionMismatch { what: "A columns (need >= 1)".into(), expected: 1, found: 0 });
    }
    if b.len() != a.nrows() {
        issues.push(ValidationIssue::DimensionMismatch { what: "b length vs A rows".into(), expected: a.nrows(), found: b.len() });
    }
    if a.iter().any(|v| !v.is_finite()) {
        issues.push(ValidationIssue::NonFiniteEntry { what: "A".into() });
    }
    if b.iter().any(|v| !v.is_finite()) {
        issues.push(ValidationIssue::NonFiniteEntry { what: "b".into() });
    }
    if b.len() == a.nrows() {
        for i in 0..a.nrows() {
            if a.row(i).iter().all(|&v| v == 0.0) && b[i] < 0.0 {
                issues.push(ValidationIssue::EmptyPolytopeRow { row: i });
            }
        }
    }
    issues
}

impl Polytope {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let issues = polytope_issues(&a, &b);
        if !issues.is_empty() {
            return Err(RdoError::Validation(issues));
        }
        Ok(Polytope { a, b })
    }

    /// Builds from row slices; rows must share one length.
    pub fn from_rows(rows: &[&[f64]], b: &[f64]) -> Result<Self> {
        let n = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(RdoError::Validation(vec![ValidationIssue::DimensionMismatch {
                what: "A row length".into(),
                expected: n,
                found: bad.len(),
            }]));
        }
        let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        Polytope::new(a, DVector::from_column_slice(b))
    }

    /// The box `lo <= x_i <= hi` in dimension `n`.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self> {
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for i in 0..n {
            a[(i, i)] = 1.0;
            b[i] = hi;
            a[(n + i, i)] = -1.0;
            b[n + i] = -lo;
        }
        Polytope::new(a, b)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    /// Largest `a_i^T x - b_i`; nonpositive iff `x` is in P.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let ax = &self.a * x;
        (0..self.rows()).map(|i| ax[i] - self.b[i]).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, x: &DVector<f64>, eps: f64) -> bool {
        self.max_violation(x) <= eps
    }
}

/// Generators `G_1, ..., G_s` of the (possibly switched) dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct Dynamics {
    mats: Vec<DMatrix<f64>>,
}

fn dynamics_issues(mats: &[DMatrix<f64>], n: Option<usize>) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    if mats.is_empty() {
        issues.push(ValidationIssue::DimensionMismatch { what: "number of dynamics matrices".into(), expected: 1, found: 0 });
        return issues;
    }
    let n = n.unwrap_or(mats[0].nrows());
    for (k, g) in mats.iter().enumerate() {
        if g.nrows() != n {
            issues.push(ValidationIssue::DimensionMismatch { what: format!("G{} rows", k + 1), expected: n, found: g.nrows() });
        }
        if g.ncols() != n {
            issues.push(ValidationIssue::DimensionMismatch { what: format!("G{} columns", k + 1), expected: n, found: g.ncols() });
        }
        if g.iter().any(|v| !v.is_finite()) {
            issues.push(ValidationIssue::NonFiniteEntry { what: format!("G{}", k + 1) });
        }
    }
    issues
}

impl Dynamics {
    pub fn new(mats: Vec<DMatrix<f64>>) -> Result<Self> {
        let issues = dynamics_issues(&mats, None);
        if !issues.is_empty() {
            return Err(RdoError::Validation(issues));
        }
        Ok(Dynamics { mats })
    }

    pub fn single(g: DMatrix<f64>) -> Result<Self> {
        Dynamics::new(vec![g])
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.mats
    }

    pub fn s(&self) -> usize {
        self.mats.len()
    }

    pub fn n(&self) -> usize {
        self.mats[0].nrows()
    }

    pub fn is_single(&self) -> bool {
        self.mats.len() == 1
    }

    /// Every generator multiplied by `beta`.
    pub fn scaled(&self, beta: f64) -> Dynamics {
        Dynamics { mats: self.mats.iter().map(|g| g * beta).collect() }
    }
}

/// `min c^T x` over initial states whose trajectories stay in P.
#[derive(Debug, Clone, PartialEq)]
pub struct RdoInstance {
    pub c: DVector<f64>,
    pub polytope: Polytope,
    pub dynamics: Dynamics,
}

impl RdoInstance {
    pub fn new(c: DVector<f64>, polytope: Polytope, dynamics: Dynamics) -> Result<Self> {
        let n = polytope.dim();
        let mut issues = Vec::new();
        if c.len() != n {
            issues.push(ValidationIssue::DimensionMismatch { what: "c length vs A columns".into(), expected: n, found: c.len() });
        }
        if c.iter().any(|v| !v.is_finite()) {
            issues.push(ValidationIssue::NonFiniteEntry { what: "c".into() });
        }
        issues.extend(dynamics_issues(dynamics.matrices(), Some(n)));
        if !issues.is_empty() {
            return Err(RdoError::Validation(issues));
        }
        Ok(RdoInstance { c, polytope, dynamics })
    }

    pub fn n(&self) -> usize {
        self.polytope.dim()
    }

    pub fn s(&self) -> usize {
        self.dynamics.s()
    }

    /// The single generator, or an error for switched dynamics.
    pub fn single_matrix(&self) -> Result<&DMatrix<f64>> {
        if self.dynamics.is_single() {
            Ok(&self.dynamics.matrices()[0])
        } else {
            Err(RdoError::RequiresSingleMatrix { s: self.s() })
        }
    }

    pub fn with_polytope(&self, polytope: Polytope) -> RdoInstance {
        RdoInstance { c: self.c.clone(), polytope, dynamics: self.dynamics.clone() }
    }
}

/// Unchecked instance data as read from a file, row-major.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawInstance {
    pub c: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub gs: Vec<Vec<Vec<f64>>>,
}

fn rect_matrix(rows: &[Vec<f64>], what: &str, issues: &mut Vec<ValidationIssue>) -> Option<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, |r| r.len());
    let mut ok = true;
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            issues.push(ValidationIssue::DimensionMismatch { what: format!("{what} row {i} length"), expected: ncols, found: r.len() });
            ok = false;
        }
    }
    ok.then(|| DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Checks raw data and builds an instance, reporting every violated rule.
pub fn validate_instance(raw: &RawInstance) -> Result<RdoInstance> {
    let mut issues = Vec::new();
    let a = rect_matrix(&raw.a, "A", &mut issues);
    let gs: Vec<Option<DMatrix<f64>>> =
        raw.gs.iter().enumerate().map(|(k, g)| rect_matrix(g, &format!("G{}", k + 1), &mut issues)).collect();
    let b = DVector::from_column_slice(&raw.b);
    let c = DVector::from_column_slice(&raw.c);

    if let Some(a) = &a {
        issues.extend(polytope_issues(a, &b));
        let n = a.ncols();
        if c.len() != n {
            issues.push(ValidationIssue::DimensionMismatch { what: "c length vs A columns".into(), expected: n, found: c.len() });
        }
        let mats: Vec<DMatrix<f64>> = gs.iter().flatten().cloned().collect();
        if mats.len() == gs.len() {
            issues.extend(dynamics_issues(&mats, Some(n)));
        }
    }
    if c.iter().any(|v| !v.is_finite()) {
        issues.push(ValidationIssue::NonFiniteEntry { what: "c".into() });
    }
    if !issues.is_empty() {
        return Err(RdoError::Validation(issues));
    }
    let polytope = Polytope { a: a.expect("checked above"), b };
    let dynamics = Dynamics { mats: gs.into_iter().flatten().collect() };
    Ok(RdoInstance { c, polytope, dynamics })
}

/// Rescales each row so that `b = 1`; the represented set is unchanged.
pub fn normalize_rhs(p: &Polytope) -> Result<Polytope> {
    if let Some((row, &value)) = p.b.iter().enumerate().find(|(_, &v)| v <= 0.0) {
        return Err(RdoError::OriginNotInterior { row, value });
    }
    let mut a = p.a.clone();
    for i in 0..a.nrows() {
        let bi = p.b[i];
        a.row_mut(i).iter_mut().for_each(|v| *v /= bi);
    }
    Ok(Polytope { a, b: DVector::from_element(p.rows(), 1.0) })
}

/// The ellipsoid `{x | x^T M x <= alpha}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub m: DMatrix<f64>,
    pub alpha: f64,
}

fn check_pd(m: &DMatrix<f64>, eps_psd: f64) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(RdoError::InvalidArgument("form matrix must be square and nonempty".into()));
    }
    let n = m.nrows() as f64;
    let lmin = crate::numlin::sym_min_eigenvalue(m);
    if !(lmin > 0.0 && lmin >= eps_psd * m.trace() / n) {
        return Err(RdoError::InvalidArgument(format!("form matrix is not positive definite (min eigenvalue {lmin:e})")));
    }
    Ok(())
}

impl Ellipsoid {
    pub fn new(m: DMatrix<f64>, alpha: f64, eps_psd: f64) -> Result<Self> {
        let m = crate::numlin::symmetrize(&m);
        check_pd(&m, eps_psd)?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(RdoError::InvalidArgument(format!("ellipsoid level must be positive, got {alpha}")));
        }
        Ok(Ellipsoid { m, alpha })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.m * x)[(0, 0)]
    }

    pub fn contains(&self, x: &DVector<f64>, eps: f64) -> bool {
        self.value(x) <= self.alpha * (1.0 + eps)
    }
}

/// `F_alpha = {x | x^T H_pi x <= alpha for all pi}` with forms in
/// lexicographic order of the multi-index `pi in [s]^(l-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiEllipsoid {
    pub l: usize,
    pub s: usize,
    pub forms: Vec<DMatrix<f64>>,
    pub alpha: f64,
}

impl MultiEllipsoid {
    pub fn new(l: usize, s: usize, forms: Vec<DMatrix<f64>>, alpha: f64, eps_psd: f64) -> Result<Self> {
        if l == 0 || s == 0 {
            return Err(RdoError::InvalidArgument("l and s must be at least 1".into()));
        }
        let expected = s.pow((l - 1) as u32);
        if forms.len() != expected {
            return Err(RdoError::InvalidArgument(format!("expected {expected} forms, got {}", forms.len())));
        }
        let forms: Vec<DMatrix<f64>> = forms.iter().map(crate::numlin::symmetrize).collect();
        for h in &forms {
            check_pd(h, eps_psd)?;
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(RdoError::InvalidArgument(format!("level must be positive, got {alpha}")));
        }
        Ok(MultiEllipsoid { l, s, forms, alpha })
    }

    pub fn dim(&self) -> usize {
        self.forms[0].nrows()
    }

    /// Position of the 0-based multi-index `pi` in `forms`.
    pub fn index_of(&self, pi: &[usize]) -> usize {
        pi.iter().fold(0, |acc, &p| acc * self.s + p)
    }

    pub fn form(&self, pi: &[usize]) -> &DMatrix<f64> {
        &self.forms[self.index_of(pi)]
    }

    /// `W(x) = max_pi x^T H_pi x`.
    pub fn w(&self, x: &DVector<f64>) -> f64 {
        self.forms.iter().map(|h| (x.transpose() * h * x)[(0, 0)]).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, x: &DVector<f64>, eps: f64) -> bool {
        self.w(x) <= self.alpha * (1.0 + eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LedgerStatus {
    Open,
    FixedPoint,
    Converged,
    Infeasible,
    LevelCapReached,
}

impl fmt::Display for LedgerStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LedgerStatus::Open => "Open",
            LedgerStatus::FixedPoint => "FixedPoint",
            LedgerStatus::Converged => "Converged",
            LedgerStatus::Infeasible => "Infeasible",
            LedgerStatus::LevelCapReached => "LevelCapReached",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub r: usize,
    /// `-inf` marks an unbounded level.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub witness: Option<DVector<f64>>,
    pub status: LedgerStatus,
}

/// Per-level bound records. Appends are checked against the running
/// bounds: lower bounds may not drop and upper bounds may not rise by more
/// than `gap`, and tiny solver noise within `gap` is absorbed so the stored
/// sequences are exactly monotone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundLedger {
    pub rows: Vec<LedgerRow>,
}

impl BoundLedger {
    pub fn new() -> Self {
        BoundLedger { rows: Vec::new() }
    }

    pub fn best_lower(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.lower).fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }

    pub fn best_upper(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.upper).fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.min(v))))
    }

    pub fn last(&self) -> Option<&LedgerRow> {
        self.rows.last()
    }

    pub fn status(&self) -> LedgerStatus {
        self.rows.last().map_or(LedgerStatus::Open, |r| r.status)
    }

    pub fn push(&mut self, mut row: LedgerRow, gap: f64) -> Result<()> {
        if let (Some(prev), Some(lo)) = (self.best_lower(), row.lower) {
            if lo < prev - gap * (1.0 + prev.abs()) {
                return Err(RdoError::LedgerViolation(format!("lower bound {lo} at r = {} below earlier {prev}", row.r)));
            }
            row.lower = Some(lo.max(prev));
        }
        if let (Some(prev), Some(up)) = (self.best_upper(), row.upper) {
            if up > prev + gap * (1.0 + prev.abs()) {
                return Err(RdoError::LedgerViolation(format!("upper bound {up} at r = {} above earlier {prev}", row.r)));
            }
            row.upper = Some(up.min(prev));
        }
        if let (Some(lo), Some(up)) = (row.lower, row.upper) {
            if lo > up + gap * (1.0 + up.abs()) {
                return Err(RdoError::LedgerViolation(format!("lower {lo} exceeds upper {up} at r = {}", row.r)));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Checks the stored sequences are monotone and sandwiched.
    pub fn is_consistent(&self, gap: f64) -> bool {
        let lows: Vec<f64> = self.rows.iter().filter_map(|r| r.lower).collect();
        let ups: Vec<f64> = self.rows.iter().filter_map(|r| r.upper).collect();
        lows.windows(2).all(|w| w[0] <= w[1])
            && ups.windows(2).all(|w| w[0] >= w[1])
            && self.rows.iter().all(|r| match (r.lower, r.upper) {
                (Some(lo), Some(up)) => lo <= up + gap * (1.0 + up.abs()),
                _ => true,
            })
    }
}

/// Result of simulating all trajectories from a point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Membership {
    /// The product for `word` (0-based generator indices, length `k`) maps
    /// the point outside P, and no shorter word does.
    ExcludedAt { k: usize, word: Vec<usize> },
    InsideUpTo(usize),
}

impl Membership {
    pub fn is_inside(&self) -> bool {
        matches!(self, Membership::InsideUpTo(_))
    }
}

impl fmt::Display for Membership {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Membership::InsideUpTo(k) => write!(f, "InsideUpTo({k})"),
            Membership::ExcludedAt { k, word } => {
                let w: Vec<String> = word.iter().map(|i| (i + 1).to_string()).collect();
                write!(f, "ExcludedAt({k}, [{}])", w.join(","))
            }
        }
    }
}

/// Total number of words of length `0..=k_max` over `s` letters, saturating.
pub(crate) fn word_count_up_to(s: usize, k_max: usize) -> u128 {
    let mut total: u128 = 0;
    let mut level: u128 = 1;
    for _ in 0..=k_max {
        total = total.saturating_add(level);
        level = level.saturating_mul(s as u128);
    }
    total
}

/// Simulates every trajectory `G_w x` for words up to length `k_max`
/// against raw constraint data `a x <= b`.
pub fn simulate(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    mats: &[DMatrix<f64>],
    x: &DVector<f64>,
    k_max: usize,
    cfg: &Config,
) -> Result<Membership> {
    let s = mats.len();
    if s > 1 {
        let total = word_count_up_to(s, k_max);
        if total > cfg.product_cap as u128 {
            return Err(RdoError::ProductCapExceeded { requested: total, cap: cfg.product_cap });
        }
    }
    let violated = |y: &DVector<f64>| {
        let ay = a * y;
        (0..b.len()).any(|i| ay[i] - b[i] > cfg.tol.feas)
    };
    let mut level: Vec<(Vec<usize>, DVector<f64>)> = vec![(Vec::new(), x.clone())];
    for k in 0..=k_max {
        if let Some((word, _)) = level.iter().find(|(_, y)| violated(y)) {
            return Ok(Membership::ExcludedAt { k, word: word.clone() });
        }
        if k == k_max {
            break;
        }
        level = level
            .iter()
            .flat_map(|(w, y)| {
                mats.iter().enumerate().map(move |(j, g)| {
                    let mut wj = w.clone();
                    wj.push(j);
                    (wj, g * y)
                })
            })
            .collect();
    }
    Ok(Membership::InsideUpTo(k_max))
}

/// Brute-force membership oracle for the feasible set: simulates all
/// products up to length `k_max` (the power sequence when `s = 1`).
pub fn membership_by_simulation(x: &DVector<f64>, inst: &RdoInstance, k_max: usize, cfg: &Config) -> Result<Membership> {
    if x.len() != inst.n() {
        return Err(RdoError::Validation(vec![ValidationIssue::DimensionMismatch {
            what: "point length".into(),
            expected: inst.n(),
            found: x.len(),
        }]));
    }
    simulate(inst.polytope.a(), inst.polytope.b(), inst.dynamics.matrices(), x, k_max, cfg)
}
