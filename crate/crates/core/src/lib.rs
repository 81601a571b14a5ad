//! Optimized certainty equivalent (OCE) risk measures of Markovian claims.
//!
//! The value function `V(s, y, z) = inf_r E[l(X^{s,y} − r)] + r z` is computed
//! three ways: by an explicit monotone scheme for its HJB equation on the
//! enlarged `(t, y, z)` state space ([`hjb`]), by Monte-Carlo minimisation over
//! the cash allocation `r` ([`oce`]), and through closed-form reductions for the
//! entropic, monotone mean-variance and CVaR losses ([`closed_forms`]).

// `!(a < b)` is how NaN inputs are rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod bass;
pub mod closed_forms;
pub mod gauss;
pub mod hjb;
pub mod loss;
pub mod oce;
pub mod par;
pub mod rng;
pub mod sde;
pub mod search;

pub use loss::{ExtReal, LossError, LossKind, LossSpec};
pub use sde::{ControlSpec, DiffusionModel, PathBatch, Payoff, SimError, SimOptions};
pub use oce::{OceError, OceResult};
pub use hjb::{BoundaryPolicy, Grid3, HjbError, SolveConfig, ValueField};
