//! Monotone mean-variance loss through the quadratic ansatz
//! `V = φ + z Ṽ − (z − 1)²/2`, where
//! `Ṽ_t + b Ṽ_y + ½σ² Ṽ_yy + g = 0`, `Ṽ(T) = f`, and
//! `φ_t + b φ_y + ½σ² φ_yy + ½σ² Ṽ_y² = 0`, `φ(T) = 0`.
//!
//! The ansatz reproduces the OCE as long as `z + X − E[X] ≥ 0`, i.e. while
//! the quadratic branch of the loss is the active one.

use super::linear_pde::{solve_backward, Field2, FieldRole, PdeGrid};
use super::OracleError;
use crate::sde::DiffusionModel;

#[derive(Debug, Clone)]
pub struct MmvOracle {
    pub vtilde: Field2,
    pub phi: Field2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmvOptions {
    pub steps: usize,
    pub nodes: usize,
    pub half_width: f64,
    /// Smallest admissible `σ²` on the grid.
    pub parabolicity_eps: f64,
}

impl Default for MmvOptions {
    fn default() -> Self {
        MmvOptions {
            steps: 2000,
            nodes: 1601,
            half_width: 10.0,
            parabolicity_eps: 1e-8,
        }
    }
}

impl MmvOracle {
    pub fn solve(model: &DiffusionModel, y0: f64, opts: &MmvOptions) -> Result<Self, OracleError> {
        model.require_scalar()?;
        let grid = PdeGrid::around(model, y0, opts.steps, opts.nodes, opts.half_width);
        let vtilde = solve_backward(
            model,
            &grid,
            FieldRole::Vtilde,
            &|y| model.f(y),
            &|_, _| 0.0,
            &|_, t, i| model.g(t, grid_y(&grid, i)),
        )?;
        let slopes: Vec<Vec<f64>> = (0..vtilde.times.len()).map(|k| vtilde.dy_slice(k)).collect();
        for &t in vtilde.times.iter().take(opts.steps) {
            for &y in &vtilde.ys {
                let s = model.sigma(t, y);
                if !(s * s >= opts.parabolicity_eps) {
                    return Err(OracleError::Degenerate { t, y, sigma: s });
                }
            }
        }
        let phi = solve_backward(
            model,
            &grid,
            FieldRole::Phi,
            &|_| 0.0,
            &|_, _| 0.0,
            &|k, t, i| {
                let y = grid_y(&grid, i);
                let s = model.sigma(t, y);
                0.5 * s * s * slopes[k][i] * slopes[k][i]
            },
        )?;
        Ok(MmvOracle { vtilde, phi })
    }

    pub fn value(&self, t: f64, y: f64, z: f64) -> Option<f64> {
        let v = self.vtilde.value(t, y)?;
        let p = self.phi.value(t, y)?;
        Some(p + z * v - 0.5 * (z - 1.0) * (z - 1.0))
    }
}

fn grid_y(grid: &PdeGrid, i: usize) -> f64 {
    grid.y_lo + (grid.y_hi - grid.y_lo) * i as f64 / (grid.nodes - 1) as f64
}

/// `φ + z Ṽ − (z − 1)²/2` at one point.
pub fn mmv_value(model: &DiffusionModel, s: f64, y: f64, z: f64, opts: &MmvOptions) -> Result<f64, OracleError> {
    let oracle = MmvOracle::solve(model, y, opts)?;
    oracle.value(s, y, z).ok_or(OracleError::OutOfRange { t: s, y })
}
