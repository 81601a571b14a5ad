//! Monte-Carlo evaluation of OCE risk measures and of the value function.
//!
//! `ρ(X) = inf_r E[l(X − r)] + r` and, more generally,
//! `V(s, y, z) = inf_r E[l(X^{s,y} − r)] + r z`, computed on a sample of the
//! claim by golden-section search over the cash allocation `r`. The objective
//! is convex in `r`, so no derivatives are needed and kinked losses are fine.

use thiserror::Error;

use crate::loss::{ExtReal, LossSpec};
use crate::par;
use crate::sde::{claim_sample, simulate_y, DiffusionModel, SimError, SimOptions};
use crate::search::{golden_max, golden_min};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OceError {
    #[error("the claim sample is empty")]
    EmptySample,
    #[error("sample {index} is not finite ({value})")]
    NonFiniteSample { index: usize, value: f64 },
    #[error("objective keeps decreasing after expanding the cash bracket to [{lo}, {hi}]; the loss violates l(x) > x")]
    Unbounded { lo: f64, hi: f64 },
    #[error("z = {z} is not in the interior of dom(l*) = [{lo}, {hi}]")]
    OutsideDomain { z: f64, lo: f64, hi: ExtReal },
    #[error("CVaR level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("value function is not concave near z = {at} (excess {excess:.3e})")]
    NonConcaveValue { at: f64, excess: f64 },
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OceOptions {
    /// Relative golden-section tolerance: the search stops once the bracket
    /// is narrower than `tol_scale · (1 + width)`.
    pub tol_scale: f64,
    pub max_expansions: usize,
}

impl Default for OceOptions {
    fn default() -> Self {
        OceOptions {
            tol_scale: 1e-7,
            max_expansions: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OceResult {
    pub value: f64,
    /// Optimal cash allocation.
    pub r_star: f64,
    /// Bracket of the final search.
    pub bracket: (f64, f64),
    /// Standard error of the sample mean of `l(X − r*) + r* z`.
    pub mc_stderr: f64,
    /// How many times the initial bracket had to be widened.
    pub expansions: usize,
}

fn check_samples(samples: &[f64]) -> Result<f64, OceError> {
    if samples.is_empty() {
        return Err(OceError::EmptySample);
    }
    let mut c = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        if !x.is_finite() {
            return Err(OceError::NonFiniteSample { index: i, value: x });
        }
        c = c.max(x.abs());
    }
    Ok(c)
}

/// `ρ(X)` on the empirical law of `samples`.
pub fn oce(samples: &[f64], loss: &LossSpec) -> Result<OceResult, OceError> {
    oce_scaled_with(samples, loss, 1.0, &OceOptions::default())
}

/// `inf_r mean(l(X − r)) + r z`, the OCE of the unnormalised loss `l(·)/z`
/// scaled by `z`.
pub fn oce_scaled(samples: &[f64], loss: &LossSpec, z: f64) -> Result<OceResult, OceError> {
    oce_scaled_with(samples, loss, z, &OceOptions::default())
}

pub fn oce_scaled_with(samples: &[f64], loss: &LossSpec, z: f64, opts: &OceOptions) -> Result<OceResult, OceError> {
    let c = check_samples(samples)?;
    let n = samples.len();
    let objective = |r: f64| par::sum_by(n, |i| loss.loss(samples[i] - r)) / n as f64 + r * z;

    let dom_hi_eff = match loss.dom_hi() {
        ExtReal::Finite(h) => h.min(z + 1.0),
        ExtReal::PosInf => z + 1.0,
    };
    let m = 1.0 + c * (dom_hi_eff + 1.0);
    let (mut lo, mut hi) = (-c - m, c + m);
    let mut expansions = 0;
    loop {
        let width = hi - lo;
        let best = golden_min(objective, lo, hi, opts.tol_scale * (1.0 + width));
        let margin = 0.01 * width;
        let interior = best.x - lo > margin && hi - best.x > margin;
        if interior {
            let r = best.x;
            let (s, q) = par::sum_and_sq_by(n, |i| loss.loss(samples[i] - r) + r * z);
            let mean = s / n as f64;
            let var = if n > 1 { ((q - n as f64 * mean * mean) / (n - 1) as f64).max(0.0) } else { 0.0 };
            return Ok(OceResult {
                value: best.value,
                r_star: r,
                bracket: (lo, hi),
                mc_stderr: (var / n as f64).sqrt(),
                expansions,
            });
        }
        if expansions >= opts.max_expansions {
            return Err(OceError::Unbounded { lo, hi });
        }
        let mid = 0.5 * (lo + hi);
        lo = mid - width;
        hi = mid + width;
        expansions += 1;
    }
}

/// Monte-Carlo estimate of `V(s, y, z)` for a scalar model.
#[allow(clippy::too_many_arguments)]
pub fn value_fn_mc(
    model: &DiffusionModel,
    loss: &LossSpec,
    s: f64,
    y: f64,
    z: f64,
    steps: usize,
    paths: usize,
    seed: u64,
) -> Result<OceResult, OceError> {
    if !loss.in_interior(z) {
        return Err(OceError::OutsideDomain { z, lo: loss.dom_lo(), hi: loss.dom_hi() });
    }
    let samples = claim_samples_from(model, s, y, steps, paths, seed)?;
    oce_scaled(&samples, loss, z)
}

/// Claim samples `f(Y_T) + ∫ g dt` from `(s, y)`.
pub fn claim_samples_from(
    model: &DiffusionModel,
    s: f64,
    y: f64,
    steps: usize,
    paths: usize,
    seed: u64,
) -> Result<Vec<f64>, OceError> {
    model.require_scalar()?;
    let batch = simulate_y(model, s, &[y], &SimOptions::new(steps, paths, seed))?;
    Ok(claim_sample(&batch, model))
}

/// `VaR_u(X) = inf{m : P(X > m) ≤ u}` on the empirical law; `sorted` ascending.
///
/// With `k = ⌊uN⌋` this is the `(N − k)`-th smallest sample: at most `k`
/// samples lie strictly above it and at least `k + 1 > uN` lie at or above it.
pub fn var_sorted(sorted: &[f64], u: f64) -> f64 {
    let n = sorted.len();
    let k = ((u * n as f64).floor() as usize).min(n - 1);
    sorted[n - k - 1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvarVar {
    pub cvar: f64,
    pub var: f64,
    /// `(1/α) ∫₀^α VaR_u du` of the empirical law, integrated exactly.
    pub quantile_average: f64,
    /// `α N < 1`: the tail holds less than one sample.
    pub small_sample: bool,
    pub cvar_result: OceResult,
}

impl CvarVar {
    /// `|cvar − quantile_average|`, which vanishes up to the search tolerance.
    pub fn identity_gap(&self) -> f64 {
        (self.cvar - self.quantile_average).abs()
    }
}

/// `(1/α) ∫₀^α VaR_u du` for ascending `sorted`, exact for the step function `u ↦ VaR_u`.
pub fn quantile_average_sorted(sorted: &[f64], alpha: f64) -> f64 {
    let n = sorted.len();
    let nf = n as f64;
    let k = ((alpha * nf).floor() as usize).min(n);
    let mut total: f64 = (0..k).map(|j| sorted[n - j - 1]).sum::<f64>() / nf;
    if k < n {
        total += (alpha - k as f64 / nf) * sorted[n - k - 1];
    }
    total / alpha
}

/// CVaR (via the OCE minimisation) and VaR at level `alpha`.
pub fn cvar_var(samples: &[f64], alpha: f64) -> Result<CvarVar, OceError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(OceError::InvalidLevel(alpha));
    }
    check_samples(samples)?;
    let loss = LossSpec::cvar(alpha).map_err(|_| OceError::InvalidLevel(alpha))?;
    let res = oce(samples, &loss)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(CvarVar {
        cvar: res.value,
        var: var_sorted(&sorted, alpha),
        quantile_average: quantile_average_sorted(&sorted, alpha),
        small_sample: alpha * (samples.len() as f64) < 1.0,
        cvar_result: res,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeResult {
    pub value: f64,
    pub lambda_star: f64,
    /// The maximiser sits at an end of the `λ` grid.
    pub at_edge: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeOptions {
    pub grid_points: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub refinements: usize,
    pub concavity_tol: f64,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        EnvelopeOptions {
            grid_points: 400,
            lambda_min: 1e-3,
            lambda_max: 1e3,
            refinements: 3,
            concavity_tol: 1e-9,
        }
    }
}

/// `sup_{λ > 0} (V(λz) − δ)/λ`, the positively homogeneous upper envelope of `V − δ`.
///
/// `value` may return a non-finite number outside the domain of `V`; those
/// points are skipped.
pub fn es_envelope<F: Fn(f64) -> f64>(value: F, delta: f64, z: f64) -> Result<EnvelopeResult, OceError> {
    es_envelope_with(value, delta, z, &EnvelopeOptions::default())
}

pub fn es_envelope_with<F: Fn(f64) -> f64>(
    value: F,
    delta: f64,
    z: f64,
    opts: &EnvelopeOptions,
) -> Result<EnvelopeResult, OceError> {
    let h = |lam: f64| {
        let v = value(lam * z);
        if v.is_finite() {
            (v - delta) / lam
        } else {
            f64::NEG_INFINITY
        }
    };
    let (a, b) = (opts.lambda_min.ln(), opts.lambda_max.ln());
    let npts = opts.grid_points.max(3);
    let mut lams: Vec<f64> = (0..npts)
        .map(|i| (a + (b - a) * i as f64 / (npts - 1) as f64).exp())
        .collect();
    lams.push(1.0);
    lams.sort_by(f64::total_cmp);
    lams.dedup();

    // Concavity of the input along the grid.
    let pts: Vec<(f64, f64)> = lams
        .iter()
        .map(|&l| (l * z, value(l * z)))
        .filter(|p| p.1.is_finite())
        .collect();
    for w in pts.windows(3) {
        let (x0, v0) = w[0];
        let (x1, v1) = w[1];
        let (x2, v2) = w[2];
        let chord = v0 + (v2 - v0) * (x1 - x0) / (x2 - x0);
        let excess = chord - v1;
        if excess > opts.concavity_tol * (1.0 + v0.abs().max(v1.abs()).max(v2.abs())) {
            return Err(OceError::NonConcaveValue { at: x1, excess });
        }
    }

    let argmax = |ls: &[f64]| -> (usize, f64) {
        ls.iter()
            .enumerate()
            .map(|(i, &l)| (i, h(l)))
            .fold((0, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
    };
    let (i0, mut best) = argmax(&lams);
    let at_edge = i0 == 0 || i0 == lams.len() - 1;
    let mut lam_star = lams[i0];
    let mut lo = lams[i0.saturating_sub(1)];
    let mut hi = lams[(i0 + 1).min(lams.len() - 1)];
    for _ in 0..opts.refinements {
        let fine: Vec<f64> = (0..=40)
            .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / 40.0).exp())
            .collect();
        let (j, v) = argmax(&fine);
        if v > best {
            best = v;
            lam_star = fine[j];
        }
        lo = fine[j.saturating_sub(1)];
        hi = fine[(j + 1).min(fine.len() - 1)];
    }
    if hi > lo {
        let g = golden_max(|t| h(t.exp()), lo.ln(), hi.ln(), 1e-13);
        if g.value > best {
            best = g.value;
            lam_star = g.x.exp();
        }
    }
    Ok(EnvelopeResult {
        value: best,
        lambda_star: lam_star,
        at_edge,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_claim_is_cash() {
        for loss in [LossSpec::entropic(), LossSpec::cvar(0.1).unwrap(), LossSpec::mmv()] {
            let r = oce(&[0.7; 50], &loss).unwrap();
            assert_abs_diff_eq!(r.value, 0.7, epsilon = 1e-6);
        }
    }

    #[test]
    fn entropic_two_point() {
        let r = oce(&[-1.0, 1.0], &LossSpec::entropic()).unwrap();
        assert_abs_diff_eq!(r.value, 1f64.cosh().ln(), epsilon = 1e-10);
        assert_abs_diff_eq!(r.value, 0.433781, epsilon = 1e-6);
        assert!(r.bracket.0 < r.r_star && r.r_star < r.bracket.1);
    }

    #[test]
    fn cvar_uniform_grid_top_decile() {
        let xs: Vec<f64> = (0..100).map(|i| 0.005 + 0.01 * i as f64).collect();
        let r = oce(&xs, &LossSpec::cvar(0.1).unwrap()).unwrap();
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        let top: f64 = sorted[90..].iter().sum::<f64>() / 10.0;
        assert_abs_diff_eq!(r.value, top, epsilon = 1e-6);
        assert_abs_diff_eq!(r.value, 0.95, epsilon = 1e-6);
    }

    #[test]
    fn cvar_var_examples() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = cvar_var(&xs, 0.5).unwrap();
        assert_abs_diff_eq!(r.cvar, 0.75, epsilon = 1e-6);
        assert!(r.identity_gap() < 1e-6);

        let r = cvar_var(&[2.5; 10], 0.3).unwrap();
        assert_abs_diff_eq!(r.cvar, 2.5, epsilon = 1e-6);
        assert_eq!(r.var, 2.5);

        // inf{m : P(X > m) ≤ 1/2} on {0, 1} is 0; CVaR is 1.
        let r = cvar_var(&[0.0, 1.0], 0.5).unwrap();
        assert_abs_diff_eq!(r.cvar, 1.0, epsilon = 1e-6);
        assert_eq!(r.var, 0.0);
        assert!(!r.small_sample);
        assert!(cvar_var(&[0.0, 1.0], 0.1).unwrap().small_sample);
    }

    #[test]
    fn var_matches_brute_force_definition() {
        let xs = [3.0, -1.0, 2.0, 2.0, 7.0, 0.5, 2.0];
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        for u in [0.05, 0.1, 0.2, 0.3, 0.45, 0.6, 0.9] {
            let brute = sorted
                .iter()
                .copied()
                .filter(|&m| xs.iter().filter(|&&x| x > m).count() as f64 / xs.len() as f64 <= u)
                .fold(f64::INFINITY, f64::min);
            assert_eq!(var_sorted(&sorted, u), brute, "u = {u}");
        }
    }

    #[test]
    fn scaled_oce_at_one_is_oce() {
        let xs: Vec<f64> = (0..200).map(|i| ((i * 37 % 101) as f64 / 50.0 - 1.0).sin()).collect();
        let loss = LossSpec::mmv();
        assert_eq!(oce(&xs, &loss).unwrap(), oce_scaled(&xs, &loss, 1.0).unwrap());
    }

    #[test]
    fn degenerate_model_value() {
        let model = DiffusionModel::constant(1.0, crate::sde::Payoff::Sin, 0.0);
        let loss = LossSpec::entropic();
        let r = value_fn_mc(&model, &loss, 0.0, 0.4, 2.5, 4, 10, 1).unwrap();
        let want = 0.4f64.sin() * 2.5 - loss.conjugate_finite(2.5).unwrap();
        assert_abs_diff_eq!(r.value, want, epsilon = 1e-9);
    }

    #[test]
    fn value_fn_rejects_boundary_z() {
        let model = DiffusionModel::constant(1.0, crate::sde::Payoff::Sin, 0.0);
        let loss = LossSpec::cvar(0.25).unwrap();
        assert!(matches!(
            value_fn_mc(&model, &loss, 0.0, 0.0, 4.0, 1, 10, 1),
            Err(OceError::OutsideDomain { .. })
        ));
        assert!(value_fn_mc(&model, &loss, 0.0, 0.0, 0.0, 1, 10, 1).is_err());
    }

    #[test]
    fn unbounded_objective_is_reported() {
        // A linear loss with conjugate domain {1}: at z = 2 the objective falls without bound.
        let linear = LossSpec::custom_with_conjugate(
            "linear",
            |x| x,
            |z| if z == 1.0 { ExtReal::Finite(0.0) } else { ExtReal::PosInf },
            1.0,
            ExtReal::Finite(1.0),
        );
        // The axioms check rejects it, which is the first line of defence.
        assert!(linear.is_err());
        let samples = [0.0, 1.0];
        let loss = LossSpec::cvar(0.5).unwrap();
        // CVaR at z beyond 1/α: r ↦ r(z − 1/α) is unbounded below.
        let r = oce_scaled_with(&samples, &loss, 3.0, &OceOptions { max_expansions: 5, ..Default::default() });
        assert!(matches!(r, Err(OceError::Unbounded { .. })), "{r:?}");
    }

    #[test]
    fn envelope_of_homogeneous_function_is_itself() {
        let e = es_envelope(|w| 1.3 * w, 0.0, 0.7).unwrap();
        assert_abs_diff_eq!(e.value, 1.3 * 0.7, epsilon = 1e-12);
    }

    #[test]
    fn envelope_matches_dense_grid() {
        let v = |w: f64| w - 0.5 * (w - 1.0) * (w - 1.0);
        for (delta, z) in [(0.0, 1.0), (0.2, 1.0), (-0.3, 0.5)] {
            let e = es_envelope(v, delta, z).unwrap();
            let dense = (1..=2_000_000)
                .map(|i| {
                    let lam = i as f64 * 1e-6 * 5.0;
                    (v(lam * z) - delta) / lam
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(e.value >= dense - 1e-9, "{delta} {z}: {} vs {dense}", e.value);
            assert!(e.value <= dense + 1e-6);
            assert!(e.value >= v(z) - delta);
        }
    }

    #[test]
    fn envelope_is_homogeneous() {
        let v = |w: f64| 0.4 * w - w * w.ln() + w - 1.0;
        let a = es_envelope(v, 0.1, 0.8).unwrap();
        let b = es_envelope(v, 0.1, 1.6).unwrap();
        assert_abs_diff_eq!(b.value, 2.0 * a.value, epsilon = 1e-10);
    }

    #[test]
    fn envelope_rejects_convex_input() {
        let r = es_envelope(|w| w * w, 0.0, 1.0);
        assert!(matches!(r, Err(OceError::NonConcaveValue { .. })));
    }
}
