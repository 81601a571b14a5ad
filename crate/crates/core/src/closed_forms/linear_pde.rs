//! Backward linear parabolic PDEs on a `(t, y)` grid.
//!
//! `u_t + b u_y + ½σ² u_yy + c u + h = 0` on `[s, T] × [y_lo, y_hi]`,
//! `u(T, ·)` given. Central differences in space; in time, a few backward
//! Euler steps at the start (they damp the high-frequency error of a rough
//! terminal datum) followed by Crank–Nicolson. At the two faces the
//! diffusion is dropped and the drift is upwinded from the interior.

use super::OracleError;
use crate::sde::DiffusionModel;

/// Role of a [`Field2`] in the separated representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    /// `Ṽ`, the certainty-equivalent part.
    Vtilde,
    /// `φ`, the variance correction of the monotone mean-variance ansatz.
    Phi,
    /// `exp(Ṽ)` for the entropic loss.
    ExpVtilde,
}

/// A function on a uniform `(t, y)` grid, stored `[k][i]`.
#[derive(Debug, Clone)]
pub struct Field2 {
    pub role: FieldRole,
    pub times: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
}

impl Field2 {
    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.ys.len();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn dy(&self) -> f64 {
        self.ys[1] - self.ys[0]
    }

    /// Bilinear interpolation; `None` outside the grid.
    pub fn value(&self, t: f64, y: f64) -> Option<f64> {
        let (k, a) = locate(&self.times, t)?;
        let (i, b) = locate(&self.ys, y)?;
        let n = self.ys.len();
        let v = |kk: usize, ii: usize| self.values[kk * n + ii];
        let at = |kk: usize| (1.0 - b) * v(kk, i) + b * v(kk, i + 1);
        Some(if a == 0.0 { at(k) } else { (1.0 - a) * at(k) + a * at(k + 1) })
    }

    /// Central-difference `∂_y` of slice `k` (one-sided at the faces).
    pub fn dy_slice(&self, k: usize) -> Vec<f64> {
        let u = self.slice(k);
        let n = u.len();
        let h = self.dy();
        (0..n)
            .map(|i| {
                if i == 0 {
                    (u[1] - u[0]) / h
                } else if i == n - 1 {
                    (u[n - 1] - u[n - 2]) / h
                } else {
                    (u[i + 1] - u[i - 1]) / (2.0 * h)
                }
            })
            .collect()
    }
}

fn locate(xs: &[f64], x: f64) -> Option<(usize, f64)> {
    let (lo, hi) = (xs[0], *xs.last()?);
    let eps = 1e-12 * (1.0 + hi.abs().max(lo.abs()));
    if x < lo - eps || x > hi + eps {
        return None;
    }
    let h = (hi - lo) / (xs.len() - 1) as f64;
    let u = ((x - lo) / h).max(0.0);
    let i = (u.floor() as usize).min(xs.len() - 2);
    Some((i, (u - i as f64).clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeGrid {
    pub start: f64,
    pub steps: usize,
    pub y_lo: f64,
    pub y_hi: f64,
    pub nodes: usize,
    /// Backward Euler steps before switching to Crank–Nicolson.
    pub smoothing_steps: usize,
}

impl PdeGrid {
    /// `±half_width` standard deviations of the model's volatility at `y0` around `y0`.
    pub fn around(model: &DiffusionModel, y0: f64, steps: usize, nodes: usize, half_width: f64) -> Self {
        let t = model.horizon();
        let spread = (model.sigma(0.0, y0).abs() * t.sqrt()).max(0.25);
        let drift = model.b(0.0, y0).abs() * t;
        let half = half_width * spread + drift;
        PdeGrid {
            start: 0.0,
            steps,
            y_lo: y0 - half,
            y_hi: y0 + half,
            nodes,
            smoothing_steps: 4,
        }
    }
}

/// Solves `(a_i, b_i, c_i) x = d` in place (Thomas algorithm); `a[0]` and `c[n−1]` are ignored.
fn tridiagonal(a: &[f64], b: &[f64], c: &[f64], d: &mut [f64], scratch: &mut [f64]) {
    let n = d.len();
    scratch[0] = c[0] / b[0];
    d[0] /= b[0];
    for i in 1..n {
        let m = b[i] - a[i] * scratch[i - 1];
        scratch[i] = if i + 1 < n { c[i] / m } else { 0.0 };
        d[i] = (d[i] - a[i] * d[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        d[i] -= scratch[i] * d[i + 1];
    }
}

/// Spatial operator at time `t`: `(L u)_i = lo_i u_{i−1} + di_i u_i + up_i u_{i+1}`.
fn operator(model: &DiffusionModel, t: f64, ys: &[f64], h: f64, potential: &dyn Fn(f64, f64) -> f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = ys.len();
    let mut lo = vec![0.0; n];
    let mut di = vec![0.0; n];
    let mut up = vec![0.0; n];
    for (i, &y) in ys.iter().enumerate() {
        let b = model.b(t, y);
        let s = model.sigma(t, y);
        let c = potential(t, y);
        if i == 0 {
            if b > 0.0 {
                di[i] = -b / h;
                up[i] = b / h;
            }
        } else if i == n - 1 {
            if b < 0.0 {
                lo[i] = -b / h;
                di[i] = b / h;
            }
        } else {
            let dif = 0.5 * s * s / (h * h);
            lo[i] = dif - b / (2.0 * h);
            up[i] = dif + b / (2.0 * h);
            di[i] = -2.0 * dif;
        }
        di[i] += c;
    }
    (lo, di, up)
}

/// Solves the backward problem; `source(k, t, i)` is `h` at time node `k`.
pub fn solve_backward(
    model: &DiffusionModel,
    grid: &PdeGrid,
    role: FieldRole,
    terminal: &dyn Fn(f64) -> f64,
    potential: &dyn Fn(f64, f64) -> f64,
    source: &dyn Fn(usize, f64, usize) -> f64,
) -> Result<Field2, OracleError> {
    if grid.nodes < 3 || grid.steps == 0 || !(grid.y_hi > grid.y_lo) || !(grid.start < model.horizon()) {
        return Err(OracleError::BadGrid);
    }
    let n = grid.nodes;
    let h = (grid.y_hi - grid.y_lo) / (n - 1) as f64;
    let ys: Vec<f64> = (0..n).map(|i| grid.y_lo + h * i as f64).collect();
    let dt = (model.horizon() - grid.start) / grid.steps as f64;
    let times: Vec<f64> = (0..=grid.steps)
        .map(|k| if k == grid.steps { model.horizon() } else { grid.start + dt * k as f64 })
        .collect();
    let mut values = vec![0.0; (grid.steps + 1) * n];
    for (i, &y) in ys.iter().enumerate() {
        values[grid.steps * n + i] = terminal(y);
    }
    let mut rhs = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let (mut a, mut b, mut c) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for k in (0..grid.steps).rev() {
        let theta = if grid.steps - k <= grid.smoothing_steps { 1.0 } else { 0.5 };
        let (t0, t1) = (times[k], times[k + 1]);
        let (lo0, di0, up0) = operator(model, t0, &ys, h, potential);
        let (lo1, di1, up1) = operator(model, t1, &ys, h, potential);
        let next = &values[(k + 1) * n..(k + 2) * n];
        for i in 0..n {
            let mut l1 = di1[i] * next[i];
            if i > 0 {
                l1 += lo1[i] * next[i - 1];
            }
            if i + 1 < n {
                l1 += up1[i] * next[i + 1];
            }
            let src = theta * source(k, t0, i) + (1.0 - theta) * source(k + 1, t1, i);
            rhs[i] = next[i] + dt * ((1.0 - theta) * l1 + src);
            a[i] = -dt * theta * lo0[i];
            b[i] = 1.0 - dt * theta * di0[i];
            c[i] = -dt * theta * up0[i];
        }
        tridiagonal(&a, &b, &c, &mut rhs, &mut scratch);
        if let Some(i) = rhs.iter().position(|v| !v.is_finite()) {
            return Err(OracleError::NonFinite { t: t0, y: ys[i] });
        }
        values[k * n..(k + 1) * n].copy_from_slice(&rhs);
    }
    Ok(Field2 { role, times, ys, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::Payoff;
    use approx::assert_abs_diff_eq;

    #[test]
    fn thomas_solves_small_system() {
        let a = [0.0, 1.0, 1.0];
        let b = [4.0, 4.0, 4.0];
        let c = [1.0, 1.0, 0.0];
        let mut d = [5.0, 6.0, 5.0];
        let mut s = [0.0; 3];
        tridiagonal(&a, &b, &c, &mut d, &mut s);
        for v in d {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn heat_equation_matches_gaussian_smoothing() {
        // u(0, y) = E[sin(y + W_1)] = sin(y) e^{-1/2}
        let model = DiffusionModel::brownian(1.0, 0.0, 1.0, Payoff::Sin, 0.0);
        let grid = PdeGrid::around(&model, 0.0, 400, 801, 8.0);
        let u = solve_backward(&model, &grid, FieldRole::Vtilde, &|y| y.sin(), &|_, _| 0.0, &|_, _, _| 0.0).unwrap();
        for y in [-1.0, 0.0, 0.3, 1.2] {
            assert_abs_diff_eq!(u.value(0.0, y).unwrap(), y.sin() * (-0.5f64).exp(), epsilon = 2e-4);
        }
    }

    #[test]
    fn source_and_potential() {
        // u_t + 1 = 0 → u(0) = T; u_t + u = 0 → u(0) = e^T u(T).
        let model = DiffusionModel::constant(2.0, Payoff::Constant(0.0), 0.0);
        let grid = PdeGrid { start: 0.0, steps: 200, y_lo: -1.0, y_hi: 1.0, nodes: 5, smoothing_steps: 0 };
        let u = solve_backward(&model, &grid, FieldRole::Vtilde, &|_| 0.0, &|_, _| 0.0, &|_, _, _| 1.0).unwrap();
        assert_abs_diff_eq!(u.value(0.0, 0.0).unwrap(), 2.0, epsilon = 1e-12);
        let u = solve_backward(&model, &grid, FieldRole::Vtilde, &|_| 1.0, &|_, _| 1.0, &|_, _, _| 0.0).unwrap();
        assert_abs_diff_eq!(u.value(0.0, 0.0).unwrap(), 2f64.exp(), epsilon = 1e-3);
    }
}
