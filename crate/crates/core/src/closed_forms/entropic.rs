//! Entropic loss: `V(s, y, z) = −z log z + z − 1 + z Ṽ(s, y)` with
//! `Ṽ(s, y) = log E[exp(f(Y_T) + ∫_s^T g dt)]`.

use super::linear_pde::{solve_backward, Field2, FieldRole, PdeGrid};
use super::OracleError;
use crate::oce::claim_samples_from;
use crate::par;
use crate::sde::DiffusionModel;

/// Exponents beyond this are clamped in the Monte-Carlo estimate.
pub const EXP_CLAMP: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EntropicMethod {
    Mc { paths: usize, steps: usize, seed: u64 },
    Pde { steps: usize, nodes: usize, half_width: f64 },
}

impl EntropicMethod {
    /// Dense implicit grid used when the PDE route is requested without details.
    pub fn pde_default() -> Self {
        EntropicMethod::Pde { steps: 2000, nodes: 1601, half_width: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropicValue {
    pub value: f64,
    pub vtilde: f64,
    /// Delta-method standard error (zero for the PDE route).
    pub stderr: f64,
    /// Samples whose exponent had to be clamped.
    pub clamped: usize,
}

/// `−z log z + z − 1 + z Ṽ`
pub fn assemble(z: f64, vtilde: f64) -> f64 {
    let ent = if z == 0.0 { 0.0 } else { z * z.ln() };
    -ent + z - 1.0 + z * vtilde
}

pub fn entropic_value(model: &DiffusionModel, s: f64, y: f64, z: f64, method: EntropicMethod) -> Result<EntropicValue, OracleError> {
    if !(z > 0.0) {
        return Err(OracleError::NonPositiveZ(z));
    }
    match method {
        EntropicMethod::Mc { paths, steps, seed } => {
            let x = claim_samples_from(model, s, y, steps, paths, seed)?;
            let n = x.len();
            // Shift by the sample maximum to keep the exponentials in range.
            let shift = x.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v.clamp(-EXP_CLAMP, EXP_CLAMP)));
            let clamped = x.iter().filter(|v| v.abs() > EXP_CLAMP).count();
            let (sum, sq) = par::sum_and_sq_by(n, |i| (x[i].clamp(-EXP_CLAMP, EXP_CLAMP) - shift).exp());
            let mean = sum / n as f64;
            let var = ((sq - n as f64 * mean * mean) / (n as f64 - 1.0).max(1.0)).max(0.0);
            let vtilde = shift + mean.ln();
            let se_log = (var / n as f64).sqrt() / mean;
            Ok(EntropicValue {
                value: assemble(z, vtilde),
                vtilde,
                stderr: z * se_log,
                clamped,
            })
        }
        EntropicMethod::Pde { steps, nodes, half_width } => {
            let oracle = EntropicOracle::solve(model, y, s, steps, nodes, half_width)?;
            let vtilde = oracle.vtilde(s, y).ok_or(OracleError::OutOfRange { t: s, y })?;
            Ok(EntropicValue {
                value: assemble(z, vtilde),
                vtilde,
                stderr: 0.0,
                clamped: 0,
            })
        }
    }
}

/// `exp(Ṽ)` solved once on a `(t, y)` grid: `w_t + b w_y + ½σ² w_yy + g w = 0`, `w(T) = e^f`.
#[derive(Debug, Clone)]
pub struct EntropicOracle {
    pub w: Field2,
}

impl EntropicOracle {
    pub fn solve(model: &DiffusionModel, y0: f64, start: f64, steps: usize, nodes: usize, half_width: f64) -> Result<Self, OracleError> {
        model.require_scalar()?;
        let mut grid = PdeGrid::around(model, y0, steps, nodes, half_width);
        grid.start = start;
        let w = solve_backward(
            model,
            &grid,
            FieldRole::ExpVtilde,
            &|y| model.f(y).exp(),
            &|t, y| model.g(t, y),
            &|_, _, _| 0.0,
        )?;
        Ok(EntropicOracle { w })
    }

    pub fn vtilde(&self, t: f64, y: f64) -> Option<f64> {
        self.w.value(t, y).map(f64::ln)
    }

    pub fn value(&self, t: f64, y: f64, z: f64) -> Option<f64> {
        if !(z >= 0.0) {
            return None;
        }
        self.vtilde(t, y).map(|v| assemble(z, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::Payoff;
    use approx::assert_abs_diff_eq;

    #[test]
    fn degenerate_model_gives_payoff() {
        let model = DiffusionModel::constant(1.0, Payoff::Tanh, 0.0);
        let v = entropic_value(&model, 0.0, 0.8, 1.0, EntropicMethod::Mc { paths: 10, steps: 1, seed: 1 }).unwrap();
        assert_abs_diff_eq!(v.value, 0.8f64.tanh(), epsilon = 1e-14);
        let v = entropic_value(&model, 0.0, 0.8, 1.0, EntropicMethod::Pde { steps: 10, nodes: 41, half_width: 4.0 }).unwrap();
        assert_abs_diff_eq!(v.value, 0.8f64.tanh(), epsilon = 1e-12);
    }

    #[test]
    fn separation_at_two() {
        let model = DiffusionModel::brownian(1.0, 0.0, 1.0, Payoff::Sin, 0.0);
        let v = entropic_value(&model, 0.0, 0.2, 2.0, EntropicMethod::pde_default()).unwrap();
        assert_abs_diff_eq!(v.value, -2.0 * 2f64.ln() + 1.0 + 2.0 * v.vtilde, epsilon = 1e-14);
    }

    #[test]
    fn brownian_linear_payoff_is_gaussian_moment() {
        // log E[e^{y + W_T}] = y + T/2
        let model = DiffusionModel::brownian(0.5, 0.0, 1.0, Payoff::Identity, 0.0);
        let v = entropic_value(&model, 0.0, 0.3, 1.0, EntropicMethod::pde_default()).unwrap();
        assert_abs_diff_eq!(v.vtilde, 0.55, epsilon = 1e-4);
    }
}
