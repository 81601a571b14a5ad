//! Simulation check of the dynamic programming principle
//! `V(s, y, z) = sup_β E[∫_s^θ g Z dt + V(θ, Y_θ, Z_θ)]`.
//!
//! Each control gives a lower estimate of `V(s, y, z)`; the report checks
//! that none exceeds `V` beyond statistical noise and, when a near-optimal
//! control is included, that the best one comes close.

use std::sync::Arc;

use super::OracleError;
use crate::loss::LossSpec;
use crate::oce::value_fn_mc;
use crate::par;
use crate::rng::{derive_indexed, derive_seed};
use crate::sde::{simulate_yz, ControlSpec, DiffusionModel, SimOptions};

/// `(t, y, z) ↦ V(t, y, z)`.
pub type ValueFn = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;

/// How `V(θ, ·, ·)` is evaluated at the end of the outer paths.
#[derive(Clone)]
pub enum InnerValue {
    /// A pre-solved field or closed form.
    Callback(Arc<ValueFn>),
    /// Monte-Carlo OCE per outer path, all sharing one inner sample seed.
    McShared { paths: usize, steps: usize, seed: u64 },
}

impl std::fmt::Debug for InnerValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InnerValue::Callback(_) => f.write_str("Callback"),
            InnerValue::McShared { paths, steps, seed } => f
                .debug_struct("McShared")
                .field("paths", paths)
                .field("steps", steps)
                .field("seed", seed)
                .finish(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DppOptions {
    pub theta: f64,
    pub outer_paths: usize,
    pub steps: usize,
    pub seed: u64,
    /// Statistical confidence multiplier for the upper inequality.
    pub sigmas: f64,
    pub gap_tol: f64,
    /// Inner Monte-Carlo budget below which the tolerance is widened.
    pub min_inner_paths: usize,
}

impl Default for DppOptions {
    fn default() -> Self {
        DppOptions {
            theta: 0.5,
            outer_paths: 10_000,
            steps: 50,
            seed: 0,
            sigmas: 3.0,
            gap_tol: 5e-2,
            min_inner_paths: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// `estimate ≤ V + sigmas · stderr + inner_bias`.
    pub below: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DppReport {
    pub reference: f64,
    pub controls: Vec<ControlEstimate>,
    pub best: f64,
    /// `V − best`.
    pub gap: f64,
    /// Allowance for the inner estimator's error, zero for a callback.
    pub inner_bias: f64,
    /// The inner budget was below `min_inner_paths` and the tolerance was widened.
    pub widened: bool,
}

impl DppReport {
    pub fn inequality_holds(&self) -> bool {
        self.controls.iter().all(|c| c.below)
    }

    pub fn gap_within(&self, tol: f64) -> bool {
        self.gap < tol
    }
}

#[allow(clippy::too_many_arguments)]
pub fn dpp_check(
    model: &DiffusionModel,
    loss: &LossSpec,
    s: f64,
    y: f64,
    z: f64,
    controls: &[ControlSpec],
    inner: &InnerValue,
    opts: &DppOptions,
) -> Result<DppReport, OracleError> {
    model.require_scalar()?;
    let horizon = model.horizon();
    if !(s < opts.theta && opts.theta < horizon) {
        return Err(OracleError::BadTheta { s, theta: opts.theta, horizon });
    }
    if controls.is_empty() {
        return Err(OracleError::NoControls);
    }
    let eval = |t: f64, yy: f64, zz: f64| -> Result<(f64, f64), OracleError> {
        match inner {
            InnerValue::Callback(v) => Ok((v(t, yy, zz), 0.0)),
            InnerValue::McShared { paths, steps, seed } => {
                let r = value_fn_mc(model, loss, t, yy, zz, *steps, *paths, *seed)?;
                Ok((r.value, r.mc_stderr))
            }
        }
    };
    let (reference, _) = eval(s, y, z)?;
    let base = derive_seed(opts.seed, "dpp");
    let mut inner_se = 0.0f64;
    let mut estimates = Vec::with_capacity(controls.len());
    for (c, control) in controls.iter().enumerate() {
        let sim = SimOptions::new(opts.steps, opts.outer_paths, derive_indexed(base, c as u64)).stop_at(opts.theta);
        let batch = simulate_yz(model, control, s, &[y], z, &sim)?;
        let z_end = batch.z_end.as_ref().expect("controlled batch");
        let run_z = batch.run_int_z.as_ref().expect("controlled batch");
        let n = batch.paths;
        let vals: Vec<Result<(f64, f64), OracleError>> = match inner {
            InnerValue::Callback(_) => (0..n).map(|p| eval(opts.theta, batch.y_end[p], z_end[p])).collect(),
            InnerValue::McShared { .. } => par::map_indexed(n, |p| eval(opts.theta, batch.y_end[p], z_end[p])),
        };
        let mut sum = 0.0;
        let mut sq = 0.0;
        for (p, v) in vals.into_iter().enumerate() {
            let (v, se) = v?;
            inner_se = inner_se.max(se);
            let x = run_z[p] + v;
            sum += x;
            sq += x * x;
        }
        let mean = sum / n as f64;
        let var = ((sq - n as f64 * mean * mean) / (n as f64 - 1.0).max(1.0)).max(0.0);
        estimates.push((mean, (var / n as f64).sqrt()));
    }
    let widened = matches!(inner, InnerValue::McShared { paths, .. } if *paths < opts.min_inner_paths);
    let inner_bias = if matches!(inner, InnerValue::McShared { .. }) { opts.sigmas * inner_se } else { 0.0 };
    let controls: Vec<ControlEstimate> = estimates
        .into_iter()
        .map(|(estimate, stderr)| ControlEstimate {
            estimate,
            stderr,
            below: estimate <= reference + opts.sigmas * stderr + inner_bias,
        })
        .collect();
    let best = controls.iter().map(|c| c.estimate).fold(f64::NEG_INFINITY, f64::max);
    Ok(DppReport {
        reference,
        gap: reference - best,
        best,
        controls,
        inner_bias,
        widened,
    })
}
