//! Robust-to-dynamics linear programs: minimize `c^T x` over initial
//! states whose trajectories under `x_{k+1} = G x_k` (or any switching
//! sequence drawn from `{G_1, …, G_s}`) stay inside `{x | Ax <= b}`.
//!
//! Lower bounds come from polyhedral outer sets ([`outer`]), upper bounds
//! with feasible witnesses from ellipsoidal inner sets ([`inner`],
//! [`switched`]), and [`hierarchy`] runs both side by side.

pub mod config;
pub mod error;
pub mod hierarchy;
pub mod inner;
pub mod model;
pub mod numlin;
pub mod outer;
pub mod par;
pub mod solver;
pub mod switched;

pub use config::{Backend, Config, Execution, Tolerances};
pub use error::{RdoError, Result, ValidationIssue};
pub use model::{
    membership_by_simulation, normalize_rhs, simulate, validate_instance, BoundLedger, Dynamics, Ellipsoid, LedgerRow, LedgerStatus,
    Membership, MultiEllipsoid, Polytope, RawInstance, RdoInstance,
};
