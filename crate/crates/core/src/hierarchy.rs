//! Runs the outer and inner hierarchies level by level into one ledger.

use crate::config::Config;
use crate::error::{RdoError, Result};
use crate::inner::inner_sdp;
use crate::model::{BoundLedger, LedgerRow, LedgerStatus, RdoInstance};
use crate::numlin;
use crate::outer::{check_bounded, fixed_point_reached, lower_bound, LpValue};
use crate::switched::{first_feasible_level, path_complete_feasible, switched_inner_sdp};

/// What to do about upper bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpperPolicy {
    /// Lower bounds only.
    Skip,
    /// Upper bounds when their preconditions hold; otherwise a note.
    IfAvailable,
    /// Upper bounds or an error.
    Require,
}

#[derive(Debug, Clone)]
pub struct BoundsOptions {
    pub r_max: usize,
    /// Path-complete level for switched dynamics; `None` tries 1, 2, 3.
    pub l: Option<usize>,
    /// Declare convergence once `upper - lower <= tol`.
    pub tol: f64,
    pub upper: UpperPolicy,
}

#[derive(Debug, Clone)]
pub struct BoundsReport {
    pub ledger: BoundLedger,
    /// Level used by the switched inner hierarchy.
    pub l_used: Option<usize>,
    /// Path-complete feasibility per level tried.
    pub feasibility: Vec<(usize, bool)>,
    /// Why upper bounds were not computed, if they were not.
    pub upper_note: Option<String>,
}

/// Checks what the upper hierarchy needs and picks the path-complete level
/// for switched dynamics.
pub fn upper_preconditions(inst: &RdoInstance, opts: &BoundsOptions, cfg: &Config) -> Result<(Option<usize>, Vec<(usize, bool)>)> {
    if let Some((row, &value)) = inst.polytope.b().iter().enumerate().find(|(_, &v)| v <= 0.0) {
        return Err(RdoError::OriginNotInterior { row, value });
    }
    if !check_bounded(&inst.polytope, cfg)? {
        return Err(RdoError::UnboundedPolytope);
    }
    if inst.dynamics.is_single() {
        let rho = numlin::spectral_radius(&inst.dynamics.matrices()[0])?;
        if rho >= 1.0 - numlin::INSTABILITY_MARGIN {
            return Err(RdoError::UnstableDynamics { rho });
        }
        return Ok((None, Vec::new()));
    }
    match opts.l {
        Some(l) => {
            let ok = path_complete_feasible(&inst.dynamics, l, cfg)?.is_feasible();
            if ok {
                Ok((Some(l), vec![(l, true)]))
            } else {
                Err(RdoError::InfeasibleLevel { l })
            }
        }
        None => {
            let (tried, cert) = first_feasible_level(&inst.dynamics, 3, cfg)?;
            match cert {
                Some(c) => Ok((Some(c.l), tried)),
                None => Err(RdoError::InfeasibleLevel { l: 3 }),
            }
        }
    }
}

/// Lower bounds from `S_r`, upper bounds from the inner SDPs, until a fixed
/// point, convergence of the two, or `r_max`.
pub fn solve_bounds(inst: &RdoInstance, opts: &BoundsOptions, cfg: &Config) -> Result<BoundsReport> {
    let mut report = BoundsReport { ledger: BoundLedger::new(), l_used: None, feasibility: Vec::new(), upper_note: None };
    let mut upper_on = false;
    match opts.upper {
        UpperPolicy::Skip => {}
        UpperPolicy::Require => {
            let (l, tried) = upper_preconditions(inst, opts, cfg)?;
            report.l_used = l;
            report.feasibility = tried;
            upper_on = true;
        }
        UpperPolicy::IfAvailable => match upper_preconditions(inst, opts, cfg) {
            Ok((l, tried)) => {
                report.l_used = l;
                report.feasibility = tried;
                upper_on = true;
            }
            Err(e @ RdoError::Numerical(_)) => return Err(e),
            Err(e) => report.upper_note = Some(e.to_string()),
        },
    }

    for r in 0..=opts.r_max {
        let level = lower_bound(inst, r, cfg)?;
        if level.lower == LpValue::Infeasible {
            let row = LedgerRow { r, lower: Some(f64::INFINITY), upper: None, witness: None, status: LedgerStatus::Infeasible };
            report.ledger.push(row, cfg.tol.gap)?;
            break;
        }
        let lower = level.lower.as_f64();
        let fixed = fixed_point_reached(inst, r, cfg)?;
        let upper = if upper_on {
            let (value, witness) = match report.l_used {
                None => {
                    let lvl = inner_sdp(inst, r, cfg)?;
                    (lvl.value, lvl.witness)
                }
                Some(l) => {
                    let lvl = switched_inner_sdp(inst, l, r, cfg)?;
                    (lvl.value, lvl.witness)
                }
            };
            Some((value, witness))
        } else {
            None
        };
        let converged = upper.as_ref().is_some_and(|(u, _)| u - lower <= opts.tol);
        let status = if fixed {
            LedgerStatus::FixedPoint
        } else if converged {
            LedgerStatus::Converged
        } else if r == opts.r_max {
            LedgerStatus::LevelCapReached
        } else {
            LedgerStatus::Open
        };
        let witness = match (&upper, fixed) {
            (_, true) => level.lower.argmin().cloned(),
            (Some((_, w)), false) => Some(w.clone()),
            (None, false) => None,
        };
        let row = LedgerRow { r, lower: Some(lower), upper: upper.map(|u| u.0), witness, status };
        report.ledger.push(row, cfg.tol.gap)?;
        if status != LedgerStatus::Open {
            break;
        }
    }
    Ok(report)
}

/// Exit status for a finished ledger: 0 on a fixed point or convergence,
/// 2 when the level cap was hit, 1 otherwise.
pub fn exit_code(status: LedgerStatus) -> i32 {
    match status {
        LedgerStatus::FixedPoint | LedgerStatus::Converged => 0,
        LedgerStatus::LevelCapReached => 2,
        LedgerStatus::Open | LedgerStatus::Infeasible => 1,
    }
}
