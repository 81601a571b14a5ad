//! CVaR loss: `V(s, y, z) = z · CVaR_{αz}(X^{s,y})` for `0 < αz < 1`, with
//! `∂_z V = VaR_{αz}`.

use super::OracleError;
use crate::loss::LossSpec;
use crate::oce::{cvar_var, oce_scaled, quantile_average_sorted, var_sorted, OceResult};
use crate::oce::claim_samples_from;
use crate::sde::DiffusionModel;

#[derive(Debug, Clone, PartialEq)]
pub struct CvarField {
    /// `V(s, y, z)` from the scaled OCE minimisation.
    pub value: f64,
    /// Empirical `VaR_{αz}` of the claim.
    pub var_z: f64,
    /// `z · CVaR_{αz}` computed on the unscaled level.
    pub homogeneous: f64,
    /// `z · (1/(αz)) ∫₀^{αz} VaR_u du` by exact quadrature of the empirical quantiles.
    pub quadrature: f64,
    pub result: OceResult,
}

/// Agreement required between the scaled and the homogeneous evaluation.
pub const HOMOGENEITY_TOL: f64 = 1e-6;

#[allow(clippy::too_many_arguments)]
pub fn cvar_field(
    model: &DiffusionModel,
    alpha: f64,
    s: f64,
    y: f64,
    z: f64,
    steps: usize,
    paths: usize,
    seed: u64,
) -> Result<CvarField, OracleError> {
    let samples = claim_samples_from(model, s, y, steps, paths, seed)?;
    cvar_field_from_samples(&samples, alpha, z)
}

/// [`cvar_field`] on a given claim sample.
pub fn cvar_field_from_samples(samples: &[f64], alpha: f64, z: f64) -> Result<CvarField, OracleError> {
    let level = alpha * z;
    if !(level > 0.0 && level < 1.0) {
        return Err(OracleError::LevelOutOfRange { alpha, z });
    }
    let loss = LossSpec::cvar(alpha).map_err(|_| OracleError::LevelOutOfRange { alpha, z })?;
    let result = oce_scaled(samples, &loss, z)?;
    let scaled = cvar_var(samples, level)?;
    let homogeneous = z * scaled.cvar;
    let tol = HOMOGENEITY_TOL * (1.0 + result.value.abs());
    if (result.value - homogeneous).abs() > tol {
        return Err(OracleError::Homogeneity { z, scaled: result.value, homogeneous });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(CvarField {
        value: result.value,
        var_z: var_sorted(&sorted, level),
        homogeneous,
        quadrature: z * quantile_average_sorted(&sorted, level),
        result,
    })
}
