//! One backward step of the explicit monotone scheme.
//!
//! The control enters only through the rank-one diffusion
//! `½ (σ ∂_y + z β ∂_z)² V`, i.e. a second derivative along the direction
//! `(σ, z β)`. At an interior node the scheme maximises, over lattice
//! directions `(M Δy, k Δz)` with `gcd(M, k) = 1`, the centred second
//! difference along that direction, which corresponds to the control
//! `β = k Δz σ / (M Δy z)`; only directions with `|β| ≤ n` whose stencil stays
//! on the grid are admitted. Every candidate is a nonnegative combination of
//! the previous slice under the CFL bound, so the maximum is monotone, and
//! the candidate set grows with `n`.

use super::{Grid3, HjbError};

/// Primitive `k ≥ 0` for each reach `M = 1..=reach` (index `M − 1`).
#[derive(Debug, Clone)]
pub(crate) struct Directions {
    per_reach: Vec<Vec<usize>>,
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Directions {
    pub(crate) fn new(reach: usize, k_max: usize) -> Self {
        let per_reach = (1..=reach.max(1))
            .map(|m| (0..=k_max).filter(|&k| gcd(m, k) == 1).collect())
            .collect();
        Directions { per_reach }
    }
}

/// Coefficients of one time slice, frozen at `t_{k+1}`.
pub(crate) struct SliceCoefficients {
    pub b: Vec<f64>,
    pub sigma: Vec<f64>,
    pub g: Vec<f64>,
}

pub(crate) struct StepInput<'a> {
    pub grid: &'a Grid3,
    pub coef: &'a SliceCoefficients,
    pub dirs: &'a Directions,
    pub n: f64,
    pub next: &'a [f64],
    pub lower: &'a [f64],
    pub upper: &'a [f64],
    pub zs: &'a [f64],
}

/// Values and maximising controls of row `i` at the earlier time.
pub(crate) fn step_row(inp: &StepInput<'_>, i: usize, out: &mut [f64], beta: &mut [f64]) {
    let g = inp.grid;
    let (ni, nj) = (g.y_nodes, g.z_nodes);
    let (dt, dy, dz) = (g.dt(), g.dy(), g.dz());
    let b = inp.coef.b[i];
    let sigma = inp.coef.sigma[i];
    let run = inp.coef.g[i];
    let row = |ii: usize| &inp.next[ii * nj..(ii + 1) * nj];
    let cur = row(i);

    out[0] = inp.lower[i];
    out[nj - 1] = inp.upper[i];
    beta[0] = 0.0;
    beta[nj - 1] = 0.0;

    if i == 0 || i == ni - 1 {
        // Faces: transport from the interior only, no diffusion.
        for j in 1..nj - 1 {
            let drift = if i == 0 && b > 0.0 {
                b * (row(1)[j] - cur[j]) / dy
            } else if i == ni - 1 && b < 0.0 {
                b * (cur[j] - row(ni - 2)[j]) / dy
            } else {
                0.0
            };
            out[j] = cur[j] + dt * (drift + inp.zs[j] * run);
            beta[j] = 0.0;
        }
        return;
    }

    let up = row(i + 1);
    let down = row(i - 1);
    let reach = inp.dirs.per_reach.len().min(i).min(ni - 1 - i);
    let sig2 = sigma * sigma;
    let diffusive = sigma != 0.0;
    for j in 1..nj - 1 {
        let c = cur[j];
        let z = inp.zs[j];
        let drift = if b > 0.0 {
            b * (up[j] - c) / dy
        } else {
            b * (c - down[j]) / dy
        };
        let (mut best, mut best_beta) = (0.0, 0.0);
        if diffusive {
            // β = 0: plain second difference in y.
            best = 0.5 * sig2 / (dy * dy) * (up[j] + down[j] - 2.0 * c);
            let room = j.min(nj - 1 - j);
            for m in 1..=reach {
                let a = 0.5 * sig2 / ((m * m) as f64 * dy * dy);
                let k_cap = inp.n * z * m as f64 * dy / (dz * sigma.abs());
                let k_lim = if k_cap >= room as f64 { room } else { (k_cap + 1e-9).floor() as usize };
                let plus = row(i + m);
                let minus = row(i - m);
                let unit_beta = dz * sigma / (m as f64 * dy * z);
                for &k in &inp.dirs.per_reach[m - 1] {
                    if k > k_lim {
                        break;
                    }
                    if k == 0 {
                        continue;
                    }
                    let dp = a * (plus[j + k] + minus[j - k] - 2.0 * c);
                    if dp > best {
                        best = dp;
                        best_beta = k as f64 * unit_beta;
                    }
                    let dm = a * (plus[j - k] + minus[j + k] - 2.0 * c);
                    if dm > best {
                        best = dm;
                        best_beta = -(k as f64) * unit_beta;
                    }
                }
            }
        }
        out[j] = c + dt * (best + drift + z * run);
        beta[j] = best_beta;
    }
}

/// `Δt (σ²/Δy² + |b|/Δy)` must not exceed `cfl_safety`.
pub(crate) fn check_cfl(grid: &Grid3, coef: &SliceCoefficients, cfl_safety: f64) -> Result<(), HjbError> {
    let dy = grid.dy();
    let rate = coef
        .b
        .iter()
        .zip(&coef.sigma)
        .map(|(b, s)| s * s / (dy * dy) + b.abs() / dy)
        .fold(0.0f64, f64::max);
    let dt = grid.dt();
    if dt * rate > cfl_safety {
        return Err(HjbError::Cfl {
            dt,
            required: cfl_safety / rate,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitive_directions() {
        let d = Directions::new(3, 6);
        assert_eq!(d.per_reach[0], vec![0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(d.per_reach[1], vec![1, 3, 5]);
        assert_eq!(d.per_reach[2], vec![1, 2, 4, 5]);
    }
}
