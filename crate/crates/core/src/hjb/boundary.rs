//! Dirichlet data on the `z`-faces of the grid.

use std::fmt;
use std::sync::Arc;

use super::{Grid3, HjbError};
use crate::loss::{ExtReal, LossSpec};
use crate::oce::{claim_samples_from, oce_scaled};
use crate::par;
use crate::rng::{derive_indexed, derive_seed};
use crate::sde::DiffusionModel;

/// `(t, y, z) ↦ V(t, y, z)` from an independent oracle.
pub type ClosedFormFn = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;

/// How the values on `z = z_lo` and `z = z_hi` are produced.
#[derive(Clone)]
pub enum BoundaryPolicy {
    /// Monte-Carlo OCE at every `y` node on a subset of time nodes (every
    /// `time_stride`-th one plus a geometric cluster before the horizon),
    /// linearly interpolated in between.
    MonteCarlo {
        paths: usize,
        time_stride: usize,
        /// Euler steps per unit of remaining time (at least one step is taken).
        steps_per_unit: f64,
        seed: u64,
    },
    /// An exact or independently computed value function.
    ClosedForm(Arc<ClosedFormFn>),
    /// `(f(y) + ∫_t^T g(u, y) du) z − l*(z)`, exact when `b = σ = 0`. The
    /// integral uses the solver's own time quadrature.
    Degenerate,
}

impl fmt::Debug for BoundaryPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryPolicy::MonteCarlo { paths, time_stride, steps_per_unit, seed } => f
                .debug_struct("MonteCarlo")
                .field("paths", paths)
                .field("time_stride", time_stride)
                .field("steps_per_unit", steps_per_unit)
                .field("seed", seed)
                .finish(),
            BoundaryPolicy::ClosedForm(_) => f.write_str("ClosedForm"),
            BoundaryPolicy::Degenerate => f.write_str("Degenerate"),
        }
    }
}

impl BoundaryPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            BoundaryPolicy::MonteCarlo { .. } => "mc",
            BoundaryPolicy::ClosedForm(_) => "closed_form",
            BoundaryPolicy::Degenerate => "degenerate",
        }
    }
}

/// Face values indexed `[k · I + i]` for time node `k` and `y` node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Monte-Carlo standard errors (zero for exact data).
    pub lower_stderr: Vec<f64>,
    pub upper_stderr: Vec<f64>,
    y_nodes: usize,
}

impl BoundaryData {
    pub fn lower_at(&self, k: usize, i: usize) -> f64 {
        self.lower[k * self.y_nodes + i]
    }

    pub fn upper_at(&self, k: usize, i: usize) -> f64 {
        self.upper[k * self.y_nodes + i]
    }

    pub fn build(model: &DiffusionModel, loss: &LossSpec, grid: &Grid3, policy: &BoundaryPolicy) -> Result<Self, HjbError> {
        let (ny, nk) = (grid.y_nodes, grid.steps + 1);
        let mut data = BoundaryData {
            lower: vec![0.0; nk * ny],
            upper: vec![0.0; nk * ny],
            lower_stderr: vec![0.0; nk * ny],
            upper_stderr: vec![0.0; nk * ny],
            y_nodes: ny,
        };
        for (face, z) in [(0usize, grid.z_lo), (1, grid.z_hi)] {
            let (vals, errs) = face_values(model, loss, grid, policy, face, z)?;
            if face == 0 {
                data.lower = vals;
                data.lower_stderr = errs;
            } else {
                data.upper = vals;
                data.upper_stderr = errs;
            }
        }
        Ok(data)
    }
}

fn conj(loss: &LossSpec, z: f64) -> Result<f64, HjbError> {
    loss.conjugate(z).finite().ok_or(HjbError::DomainMismatch { z })
}

/// Time nodes at which Monte-Carlo values are computed.
pub fn mc_time_nodes(steps: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    let mut ks: Vec<usize> = (0..steps).step_by(stride).collect();
    let mut gap = 1;
    while gap < steps {
        ks.push(steps - gap);
        gap *= 2;
    }
    ks.push(steps);
    ks.sort_unstable();
    ks.dedup();
    ks
}

fn face_values(
    model: &DiffusionModel,
    loss: &LossSpec,
    grid: &Grid3,
    policy: &BoundaryPolicy,
    face: usize,
    z: f64,
) -> Result<(Vec<f64>, Vec<f64>), HjbError> {
    let (ny, nk) = (grid.y_nodes, grid.steps + 1);
    let ys = grid.ys();
    let mut vals = vec![0.0; nk * ny];
    let mut errs = vec![0.0; nk * ny];
    let lstar = conj(loss, z)?;

    // At the lower end of dom(l*) the infimum over r is reached as r → ∞.
    if z == loss.dom_lo() {
        vals.iter_mut().for_each(|v| *v = -lstar);
        return Ok((vals, errs));
    }
    let at_upper_end = matches!(loss.dom_hi(), ExtReal::Finite(h) if z == h);

    for (i, &y) in ys.iter().enumerate() {
        vals[grid.steps * ny + i] = model.f(y) * z - lstar;
    }

    match policy {
        BoundaryPolicy::Degenerate => {
            let dt = grid.dt();
            for (i, &y) in ys.iter().enumerate() {
                let mut acc = 0.0;
                for k in (0..grid.steps).rev() {
                    acc += dt * model.g(grid.t(k + 1), y);
                    vals[k * ny + i] = (model.f(y) + acc) * z - lstar;
                }
            }
        }
        BoundaryPolicy::ClosedForm(cf) => {
            for k in 0..grid.steps {
                for (i, &y) in ys.iter().enumerate() {
                    vals[k * ny + i] = cf(grid.t(k), y, z);
                }
            }
        }
        BoundaryPolicy::MonteCarlo { paths, time_stride, steps_per_unit, seed } => {
            let ks: Vec<usize> = mc_time_nodes(grid.steps, *time_stride);
            let base = derive_seed(*seed, "boundary");
            let jobs: Vec<(usize, usize)> = ks
                .iter()
                .filter(|&&k| k < grid.steps)
                .flat_map(|&k| (0..ny).map(move |i| (k, i)))
                .collect();
            let results = par::map_indexed(jobs.len(), |jdx| -> Result<(f64, f64), HjbError> {
                let (k, i) = jobs[jdx];
                let s = grid.t(k);
                let steps = (((grid.horizon - s) * steps_per_unit).ceil() as usize).max(1);
                // Common random numbers across y at a given time keep the face smooth in y.
                let node_seed = derive_indexed(base, (k * 2 + face) as u64);
                let x = claim_samples_from(model, s, ys[i], steps, *paths, node_seed)?;
                if at_upper_end {
                    let n = x.len() as f64;
                    let mean = x.iter().sum::<f64>() / n;
                    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
                    Ok((z * mean - lstar, z * (var / n).sqrt()))
                } else {
                    let r = oce_scaled(&x, loss, z)?;
                    Ok((r.value, r.mc_stderr))
                }
            });
            for (jdx, r) in results.into_iter().enumerate() {
                let (k, i) = jobs[jdx];
                let (v, e) = r?;
                vals[k * ny + i] = v;
                errs[k * ny + i] = e;
            }
            // Linear interpolation in t between computed nodes.
            for w in ks.windows(2) {
                let (k0, k1) = (w[0], w[1]);
                for k in k0 + 1..k1 {
                    let a = (k - k0) as f64 / (k1 - k0) as f64;
                    for i in 0..ny {
                        vals[k * ny + i] = (1.0 - a) * vals[k0 * ny + i] + a * vals[k1 * ny + i];
                        errs[k * ny + i] = (1.0 - a) * errs[k0 * ny + i] + a * errs[k1 * ny + i];
                    }
                }
            }
        }
    }
    Ok((vals, errs))
}
