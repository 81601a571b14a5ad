//! Independent oracles for the value function: separated solutions for the
//! entropic and monotone mean-variance losses, the CVaR representation, the
//! degenerate constant-model formula and a simulation-based check of the
//! dynamic programming principle.

use thiserror::Error;

use crate::hjb::HjbError;
use crate::loss::LossSpec;
use crate::oce::OceError;
use crate::sde::{DiffusionModel, SimError};

pub mod cvar;
pub mod dpp;
pub mod entropic;
pub mod linear_pde;
pub mod mmv;

pub use cvar::{cvar_field, cvar_field_from_samples, CvarField};
pub use dpp::{dpp_check, ControlEstimate, DppOptions, DppReport, InnerValue};
pub use entropic::{entropic_value, EntropicMethod, EntropicOracle, EntropicValue};
pub use linear_pde::{Field2, FieldRole, PdeGrid};
pub use mmv::{mmv_value, MmvOptions, MmvOracle};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid (t, y) grid")]
    BadGrid,
    #[error("oracle produced a non-finite value at t = {t}, y = {y}")]
    NonFinite { t: f64, y: f64 },
    #[error("(t, y) = ({t}, {y}) lies outside the oracle grid")]
    OutOfRange { t: f64, y: f64 },
    #[error("z must be positive, got {0}")]
    NonPositiveZ(f64),
    #[error("parabolicity fails at t = {t}, y = {y}: σ = {sigma}")]
    Degenerate { t: f64, y: f64, sigma: f64 },
    #[error("CVaR level αz must lie in (0, 1); α = {alpha}, z = {z}")]
    LevelOutOfRange { alpha: f64, z: f64 },
    #[error("scaled CVaR value {scaled} differs from z·CVaR_(αz) = {homogeneous} at z = {z}")]
    Homogeneity { z: f64, scaled: f64, homogeneous: f64 },
    #[error("need s < θ < T, got s = {s}, θ = {theta}, T = {horizon}")]
    BadTheta { s: f64, theta: f64, horizon: f64 },
    #[error("no controls to check")]
    NoControls,
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Oce(#[from] OceError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Hjb(#[from] HjbError),
}

/// `V(s, y, z) = (f(y) + ∫_s^T g(t, y) dt) z − l*(z)` for a model with `b = σ = 0`.
///
/// The time integral uses `quad_steps` midpoint panels.
pub fn degenerate_value(model: &DiffusionModel, loss: &LossSpec, s: f64, y: f64, z: f64, quad_steps: usize) -> Result<f64, OracleError> {
    model.require_scalar()?;
    let lstar = loss
        .conjugate(z)
        .finite()
        .ok_or_else(|| OracleError::Unsupported(format!("z = {z} lies outside dom(l*)")))?;
    let horizon = model.horizon();
    let mut run = 0.0;
    if model.has_running() && s < horizon {
        let n = quad_steps.max(1);
        let h = (horizon - s) / n as f64;
        run = (0..n).map(|k| model.g(s + (k as f64 + 0.5) * h, y)).sum::<f64>() * h;
    }
    Ok((model.f(y) + run) * z - lstar)
}
