//! Explicit monotone finite-difference solver for the enlarged-state HJB
//! equation
//!
//! `∂_t V + b V_y + ½σ² V_yy + sup_β [½ z² β² V_zz + z σ β V_yz] + z g = 0`,
//! `V(T, y, z) = f(y) z − l*(z)`,
//!
//! with the control truncated to `|β| ≤ n`. Sweeping `n` upwards gives the
//! increasing sequence `V^n` whose limit is the value function.

mod boundary;
mod grid;
mod hamiltonian;
mod scheme;

use std::time::Instant;

use thiserror::Error;

pub use boundary::{mc_time_nodes, BoundaryData, BoundaryPolicy, ClosedFormFn};
pub use grid::Grid3;
pub use hamiltonian::{control_max, hamiltonian_n, HamiltonianValue};

use crate::loss::{ExtReal, LossSpec};
use crate::oce::OceError;
use crate::par;
use crate::sde::{DiffusionModel, SimError};
use scheme::{check_cfl, step_row, Directions, SliceCoefficients, StepInput};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HjbError {
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("z = {z} lies outside dom(l*)")]
    DomainMismatch { z: f64 },
    #[error("time step {dt:.3e} violates the CFL bound; need dt <= {required:.3e}")]
    Cfl { dt: f64, required: f64 },
    #[error("non-finite value at t = {t}, y = {y}, z = {z}")]
    NonFinite { t: f64, y: f64, z: f64 },
    #[error("V^{n} fell below V^{prev} by {excess:.3e} at t = {t}, y = {y}, z = {z}")]
    NonMonotone { prev: f64, n: f64, excess: f64, t: f64, y: f64, z: f64 },
    #[error("query (t = {t}, y = {y}, z = {z}) lies outside the grid")]
    OutOfHull { t: f64, y: f64, z: f64 },
    #[error("the truncation schedule must be a nonempty, strictly increasing list of positive levels")]
    BadSchedule,
    #[error("cfl_safety must lie in (0, 1], got {0}")]
    BadCflSafety(f64),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Oce(#[from] OceError),
}

/// Grid resolution, truncation schedule and boundary treatment.
#[derive(Debug, Clone)]
pub struct SolveConfig {
    /// Time steps `K`.
    pub steps: usize,
    pub y_nodes: usize,
    pub z_nodes: usize,
    /// Defaults to `y0 ± 6 σ(0, y0) √T`.
    pub y_range: Option<(f64, f64)>,
    /// Defaults to `dom(l*)` when bounded, otherwise `[10⁻³, 8]`.
    pub z_range: Option<(f64, f64)>,
    pub n_schedule: Vec<f64>,
    pub cfl_safety: f64,
    /// The `n`-sweep stops once consecutive levels differ by less than this.
    pub tol_n: f64,
    /// Largest `y`-reach `M` of the directional stencils.
    pub stencil_reach: usize,
    pub boundary: BoundaryPolicy,
    pub store_argmax: bool,
    /// Slack allowed in the discrete `z`-concavity diagnostic.
    pub tol_conc: f64,
    /// Slack allowed in the `V^{n+1} ≥ V^n` assertion.
    pub monotone_tol: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            steps: 400,
            y_nodes: 121,
            z_nodes: 81,
            y_range: None,
            z_range: None,
            n_schedule: vec![1.0, 2.0, 4.0, 8.0],
            cfl_safety: 1.0,
            tol_n: 1e-4,
            stencil_reach: 3,
            boundary: BoundaryPolicy::MonteCarlo {
                paths: 4000,
                time_stride: 20,
                steps_per_unit: 50.0,
                seed: 0,
            },
            store_argmax: false,
            tol_conc: 1e-8,
            monotone_tol: 1e-12,
        }
    }
}

impl SolveConfig {
    pub fn grid(&self, model: &DiffusionModel, loss: &LossSpec) -> Result<Grid3, HjbError> {
        let horizon = model.horizon();
        let y_range = self.y_range.unwrap_or_else(|| {
            let y0 = model.y0.first().copied().unwrap_or(0.0);
            let half = (6.0 * model.sigma(0.0, y0).abs() * horizon.sqrt()).max(1.0);
            (y0 - half, y0 + half)
        });
        let z_range = match self.z_range {
            Some(r) => r,
            None => match loss.dom_hi() {
                ExtReal::Finite(h) => (loss.dom_lo(), h),
                ExtReal::PosInf => (1e-3, 8.0),
            },
        };
        if z_range.0 < loss.dom_lo() {
            return Err(HjbError::DomainMismatch { z: z_range.0 });
        }
        if let ExtReal::Finite(h) = loss.dom_hi() {
            if z_range.1 > h {
                return Err(HjbError::DomainMismatch { z: z_range.1 });
            }
        }
        Grid3::new(horizon, self.steps, y_range, self.y_nodes, z_range, self.z_nodes)
    }

    fn validate(&self) -> Result<(), HjbError> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(HjbError::BadCflSafety(self.cfl_safety));
        }
        let s = &self.n_schedule;
        if s.is_empty() || s[0] <= 0.0 || s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HjbError::BadSchedule);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldDiagnostics {
    /// Interior nodes whose second `z`-difference exceeds `tol_conc`.
    pub concavity_violations: usize,
    pub max_concavity_excess: f64,
}

/// The discrete value function on a [`Grid3`], stored `[k][i][j]`.
#[derive(Debug, Clone)]
pub struct ValueField {
    pub grid: Grid3,
    pub n: f64,
    pub values: Vec<f64>,
    /// Maximising `β` per node, when requested.
    pub argmax_beta: Option<Vec<f64>>,
    pub diagnostics: FieldDiagnostics,
}

impl ValueField {
    pub fn slice(&self, k: usize) -> &[f64] {
        let len = self.grid.slice_len();
        &self.values[k * len..(k + 1) * len]
    }

    pub fn at(&self, k: usize, i: usize, j: usize) -> f64 {
        self.values[k * self.grid.slice_len() + self.grid.idx(i, j)]
    }

    /// Trilinear interpolation of the field.
    pub fn read(&self, s: f64, y: f64, z: f64) -> Result<f64, HjbError> {
        self.interpolate(&self.values, s, y, z)
    }

    /// Trilinear interpolation of the maximising control.
    pub fn beta(&self, s: f64, y: f64, z: f64) -> Option<f64> {
        let b = self.argmax_beta.as_ref()?;
        self.interpolate(b, s, y, z).ok()
    }

    fn interpolate(&self, data: &[f64], s: f64, y: f64, z: f64) -> Result<f64, HjbError> {
        let g = &self.grid;
        if !g.contains(s, y, z) {
            return Err(HjbError::OutOfHull { t: s, y, z });
        }
        let (k, a) = g.locate_t(s);
        let (i, b) = g.locate_y(y);
        let (j, c) = g.locate_z(z);
        let len = g.slice_len();
        let v = |kk: usize, ii: usize, jj: usize| data[kk * len + g.idx(ii, jj)];
        let bilinear = |kk: usize| {
            let lo = (1.0 - c) * v(kk, i, j) + c * v(kk, i, j + 1);
            let hi = (1.0 - c) * v(kk, i + 1, j) + c * v(kk, i + 1, j + 1);
            (1.0 - b) * lo + b * hi
        };
        let v0 = bilinear(k);
        if a == 0.0 {
            return Ok(v0);
        }
        Ok((1.0 - a) * v0 + a * bilinear(k + 1))
    }

    /// Second `z`-differences exceeding `tol` on interior nodes of every slice.
    pub fn concavity(&self, tol: f64) -> FieldDiagnostics {
        let g = &self.grid;
        let mut d = FieldDiagnostics::default();
        for k in 0..=g.steps {
            let s = self.slice(k);
            for i in 0..g.y_nodes {
                for j in 1..g.z_nodes - 1 {
                    let second = s[g.idx(i, j + 1)] - 2.0 * s[g.idx(i, j)] + s[g.idx(i, j - 1)];
                    if second > tol {
                        d.concavity_violations += 1;
                        d.max_concavity_excess = d.max_concavity_excess.max(second);
                    }
                }
            }
        }
        d
    }
}

/// `read_value` on a solved field.
pub fn read_value(field: &ValueField, s: f64, y: f64, z: f64) -> Result<f64, HjbError> {
    field.read(s, y, z)
}

/// `ψ(y, z) = f(y) z − l*(z)` at every node.
pub fn terminal_slice(model: &DiffusionModel, loss: &LossSpec, grid: &Grid3) -> Result<Vec<f64>, HjbError> {
    let zs = grid.zs();
    let lstar = zs
        .iter()
        .map(|&z| loss.conjugate(z).finite().ok_or(HjbError::DomainMismatch { z }))
        .collect::<Result<Vec<f64>, _>>()?;
    let mut out = Vec::with_capacity(grid.slice_len());
    for i in 0..grid.y_nodes {
        let f = model.f(grid.y(i));
        for (j, &z) in zs.iter().enumerate() {
            out.push(f * z - lstar[j]);
        }
    }
    Ok(out)
}

/// `V^n` on the grid, by the backward explicit sweep.
pub fn solve_vn(
    model: &DiffusionModel,
    loss: &LossSpec,
    config: &SolveConfig,
    n: f64,
    boundary: &BoundaryData,
) -> Result<ValueField, HjbError> {
    config.validate()?;
    model.require_scalar()?;
    let grid = config.grid(model, loss)?;
    let len = grid.slice_len();
    let (ni, nj) = (grid.y_nodes, grid.z_nodes);
    let ys = grid.ys();
    let zs = grid.zs();
    let dirs = Directions::new(config.stencil_reach, nj);

    let mut values = vec![0.0; (grid.steps + 1) * len];
    let mut betas = config.store_argmax.then(|| vec![0.0; (grid.steps + 1) * len]);
    values[grid.steps * len..].copy_from_slice(&terminal_slice(model, loss, &grid)?);

    for k in (0..grid.steps).rev() {
        let t_next = grid.t(k + 1);
        let coef = SliceCoefficients {
            b: ys.iter().map(|&y| model.b(t_next, y)).collect(),
            sigma: ys.iter().map(|&y| model.sigma(t_next, y)).collect(),
            g: ys.iter().map(|&y| model.g(t_next, y)).collect(),
        };
        check_cfl(&grid, &coef, config.cfl_safety)?;
        let lower: Vec<f64> = (0..ni).map(|i| boundary.lower_at(k, i)).collect();
        let upper: Vec<f64> = (0..ni).map(|i| boundary.upper_at(k, i)).collect();
        let (head, tail) = values.split_at_mut((k + 1) * len);
        let next = &tail[..len];
        let out = &mut head[k * len..];
        let inp = StepInput {
            grid: &grid,
            coef: &coef,
            dirs: &dirs,
            n,
            next,
            lower: &lower,
            upper: &upper,
            zs: &zs,
        };
        let rows = par::map_indexed(ni, |i| {
            let mut v = vec![0.0; nj];
            let mut b = vec![0.0; nj];
            step_row(&inp, i, &mut v, &mut b);
            (v, b)
        });
        for (i, (v, b)) in rows.into_iter().enumerate() {
            if let Some(j) = v.iter().position(|x| !x.is_finite()) {
                return Err(HjbError::NonFinite { t: grid.t(k), y: ys[i], z: zs[j] });
            }
            out[i * nj..(i + 1) * nj].copy_from_slice(&v);
            if let Some(bs) = betas.as_mut() {
                bs[k * len + i * nj..k * len + (i + 1) * nj].copy_from_slice(&b);
            }
        }
    }

    let mut field = ValueField {
        grid,
        n,
        values,
        argmax_beta: betas,
        diagnostics: FieldDiagnostics::default(),
    };
    field.diagnostics = field.concavity(config.tol_conc);
    Ok(field)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport {
    pub n: f64,
    /// `max (V^n − V^{n_prev})` over interior nodes (`NaN` for the first level).
    pub increment: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub field: ValueField,
    pub levels: Vec<LevelReport>,
    /// The sweep stopped on the `tol_n` criterion rather than by exhausting the schedule.
    pub converged: bool,
    pub boundary: BoundaryData,
    pub boundary_seconds: f64,
}

/// Sweeps the truncation schedule, checking `V^{n+1} ≥ V^n`, until the increment drops below `tol_n`.
pub fn solve_v(model: &DiffusionModel, loss: &LossSpec, config: &SolveConfig) -> Result<SolveOutcome, HjbError> {
    config.validate()?;
    let grid = config.grid(model, loss)?;
    let started = Instant::now();
    let boundary = BoundaryData::build(model, loss, &grid, &config.boundary)?;
    let boundary_seconds = started.elapsed().as_secs_f64();
    solve_v_with_boundary(model, loss, config, boundary, boundary_seconds)
}

/// [`solve_v`] with precomputed face data.
pub fn solve_v_with_boundary(
    model: &DiffusionModel,
    loss: &LossSpec,
    config: &SolveConfig,
    boundary: BoundaryData,
    boundary_seconds: f64,
) -> Result<SolveOutcome, HjbError> {
    config.validate()?;
    let mut levels = Vec::new();
    let mut prev: Option<ValueField> = None;
    let mut converged = false;
    for &n in &config.n_schedule {
        let started = Instant::now();
        let field = solve_vn(model, loss, config, n, &boundary)?;
        let mut increment = f64::NAN;
        if let Some(p) = &prev {
            let g = &field.grid;
            let mut worst = f64::NEG_INFINITY;
            for k in 0..=g.steps {
                for i in 1..g.y_nodes - 1 {
                    for j in 1..g.z_nodes - 1 {
                        let d = field.at(k, i, j) - p.at(k, i, j);
                        let scale = 1.0 + field.at(k, i, j).abs();
                        if d < -config.monotone_tol * scale {
                            return Err(HjbError::NonMonotone {
                                prev: p.n,
                                n,
                                excess: -d,
                                t: g.t(k),
                                y: g.y(i),
                                z: g.z(j),
                            });
                        }
                        worst = worst.max(d.abs());
                    }
                }
            }
            increment = worst;
        }
        levels.push(LevelReport {
            n,
            increment,
            seconds: started.elapsed().as_secs_f64(),
        });
        prev = Some(field);
        if increment < config.tol_n {
            converged = true;
            break;
        }
    }
    Ok(SolveOutcome {
        field: prev.expect("schedule is nonempty"),
        levels,
        converged,
        boundary,
        boundary_seconds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityReport {
    pub trials: usize,
    /// Output nodes that decreased after an input node was raised.
    pub violations: usize,
    pub worst_decrease: f64,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Randomised check that raising one node of slice `k + 1` never lowers any
/// node of slice `k`: a random input slice is stepped once, then each trial
/// bumps a random input node by `bump` and steps again.
pub fn monotonicity_probe(
    model: &DiffusionModel,
    grid: &Grid3,
    n: f64,
    stencil_reach: usize,
    trials: usize,
    bump: f64,
    seed: u64,
) -> Result<MonotonicityReport, HjbError> {
    use rand::Rng;
    model.require_scalar()?;
    let mut rng = crate::rng::path_stream(crate::rng::derive_seed(seed, "monotonicity"), 0);
    let (ni, nj) = (grid.y_nodes, grid.z_nodes);
    let ys = grid.ys();
    let zs = grid.zs();
    let t_next = grid.t(1);
    let coef = SliceCoefficients {
        b: ys.iter().map(|&y| model.b(t_next, y)).collect(),
        sigma: ys.iter().map(|&y| model.sigma(t_next, y)).collect(),
        g: ys.iter().map(|&y| model.g(t_next, y)).collect(),
    };
    check_cfl(grid, &coef, 1.0)?;
    let dirs = Directions::new(stencil_reach, nj);
    let lower: Vec<f64> = (0..ni).map(|_| rng.random_range(-1.0..1.0)).collect();
    let upper: Vec<f64> = (0..ni).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut next: Vec<f64> = (0..grid.slice_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let step = |next: &[f64]| -> Vec<f64> {
        let inp = StepInput {
            grid,
            coef: &coef,
            dirs: &dirs,
            n,
            next,
            lower: &lower,
            upper: &upper,
            zs: &zs,
        };
        let mut out = vec![0.0; ni * nj];
        let mut beta = vec![0.0; nj];
        for (i, row) in out.chunks_mut(nj).enumerate() {
            step_row(&inp, i, row, &mut beta);
        }
        out
    };
    let base = step(&next);
    let mut report = MonotonicityReport { trials, violations: 0, worst_decrease: 0.0 };
    for _ in 0..trials {
        let node = rng.random_range(0..next.len());
        let saved = next[node];
        next[node] = saved + bump;
        let bumped = step(&next);
        next[node] = saved;
        for (a, b) in bumped.iter().zip(&base) {
            // Allow for rounding in the re-association of the update.
            if *a < b - 1e-13 * (1.0 + b.abs()) {
                report.violations += 1;
                report.worst_decrease = report.worst_decrease.max(b - a);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::Payoff;
    use approx::assert_abs_diff_eq;

    fn small_config(boundary: BoundaryPolicy) -> SolveConfig {
        SolveConfig {
            steps: 40,
            y_nodes: 21,
            z_nodes: 17,
            n_schedule: vec![1.0, 2.0, 4.0],
            boundary,
            ..Default::default()
        }
    }

    #[test]
    fn degenerate_model_is_exact() {
        let model = DiffusionModel::constant(1.0, Payoff::Tanh, 0.25);
        let loss = LossSpec::mmv();
        let cfg = SolveConfig { y_range: Some((-2.0, 2.0)), z_range: Some((0.5, 2.5)), ..small_config(BoundaryPolicy::Degenerate) };
        let out = solve_v(&model, &loss, &cfg).unwrap();
        let g = &out.field.grid;
        for k in 0..=g.steps {
            let rest = 0.25 * (g.horizon - g.t(k));
            for i in 0..g.y_nodes {
                for j in 0..g.z_nodes {
                    let z = g.z(j);
                    let want = (g.y(i).tanh() + rest) * z - 0.5 * (z - 1.0) * (z - 1.0);
                    assert_abs_diff_eq!(out.field.at(k, i, j), want, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn levels_increase_with_n() {
        let model = DiffusionModel::brownian(1.0, 0.0, 1.0, Payoff::Tanh, 0.0);
        let loss = LossSpec::entropic();
        let cfg = SolveConfig {
            z_range: Some((0.1, 4.0)),
            tol_n: 0.0,
            ..small_config(BoundaryPolicy::MonteCarlo { paths: 200, time_stride: 10, steps_per_unit: 1.0, seed: 3 })
        };
        let out = solve_v(&model, &loss, &cfg).unwrap();
        assert_eq!(out.levels.len(), 3);
        assert!(out.levels[1..].iter().all(|l| l.increment >= 0.0));
        let g = &out.field.grid;
        for j in 0..g.z_nodes {
            assert_eq!(out.field.at(g.steps, 10, j), g.y(10).tanh() * g.z(j) - loss.conjugate_finite(g.z(j)).unwrap());
        }
    }

    #[test]
    fn scheme_is_monotone() {
        let model = DiffusionModel::ou(1.0, 1.0, 0.0, 0.8, Payoff::Sin, 0.3);
        let grid = Grid3::new(1.0, 8, (-2.0, 2.0), 8, (0.1, 3.0), 8).unwrap();
        let r = monotonicity_probe(&model, &grid, 4.0, 3, 200, 1e-3, 1).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn cfl_violation_is_reported() {
        let model = DiffusionModel::brownian(1.0, 0.0, 1.0, Payoff::Tanh, 0.0);
        let cfg = SolveConfig { steps: 2, ..small_config(BoundaryPolicy::Degenerate) };
        assert!(matches!(solve_v(&model, &LossSpec::entropic(), &cfg), Err(HjbError::Cfl { .. })));
    }

    #[test]
    fn reads_interpolate_and_reject_outside() {
        let model = DiffusionModel::constant(1.0, Payoff::Identity, 0.0);
        let cfg = SolveConfig { y_range: Some((-1.0, 1.0)), z_range: Some((0.5, 2.0)), ..small_config(BoundaryPolicy::Degenerate) };
        let out = solve_v(&model, &LossSpec::cvar(0.25).unwrap(), &cfg).unwrap();
        // V = y z on this grid, which trilinear interpolation reproduces.
        assert_abs_diff_eq!(out.field.read(0.33, 0.27, 1.3).unwrap(), 0.27 * 1.3, epsilon = 1e-12);
        assert!(matches!(out.field.read(0.0, 2.0, 1.0), Err(HjbError::OutOfHull { .. })));
    }
}
