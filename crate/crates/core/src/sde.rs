//! Diffusion models and path simulation.
//!
//! A [`DiffusionModel`] bundles the coefficients `b`, `σ` of
//! `dY = b(t, Y) dt + σ(t, Y) dW` with the claim data `f`, `g` of
//! `X = f(Y_T) + ∫ g(t, Y_t) dt`. Paths are simulated by Euler–Maruyama on a
//! uniform grid; the density state `Z` of a control `β` is advanced in log
//! coordinates so it stays positive.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::gauss;
use crate::par;
use crate::rng::path_stream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("non-finite state on path {path} at step {step} (t = {t})")]
    NonFinite { path: usize, step: usize, t: f64 },
    #[error("start time {s} must lie in [0, {end})")]
    BadStart { s: f64, end: f64 },
    #[error("steps and paths must both be positive")]
    EmptyRun,
    #[error("initial density z0 = {0} must be positive")]
    NonPositiveDensity(f64),
    #[error("expected a state of dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("operation needs a scalar model (m = d = 1), got m = {m}, d = {d}")]
    NotScalar { m: usize, d: usize },
}

/// `(t, y, out)`: writes a vector (drift, length `m`) or a row-major
/// `m × d` matrix (volatility) into `out`.
pub type CoefficientFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
pub type TerminalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
pub type RunningFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;
/// `(s, y_s, t, W_t − W_s, out)`: exact transition of a model that is a
/// deterministic function of the driving Brownian motion.
pub type TransitionFn = dyn Fn(f64, &[f64], f64, &[f64], &mut [f64]) + Send + Sync;

/// Named terminal payoffs for scalar models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payoff {
    Identity,
    Tanh,
    Sin,
    /// `min(max(y, 0), 1)`
    Clip01,
    /// `max(y, 0)`
    PositivePart,
    Constant(f64),
}

impl Payoff {
    pub fn eval(self, y: f64) -> f64 {
        match self {
            Payoff::Identity => y,
            Payoff::Tanh => y.tanh(),
            Payoff::Sin => y.sin(),
            Payoff::Clip01 => y.clamp(0.0, 1.0),
            Payoff::PositivePart => y.max(0.0),
            Payoff::Constant(c) => c,
        }
    }

    /// Sup-norm bound, when the payoff is bounded.
    pub fn bound(self) -> Option<f64> {
        match self {
            Payoff::Tanh | Payoff::Sin | Payoff::Clip01 => Some(1.0),
            Payoff::Constant(c) => Some(c.abs()),
            Payoff::Identity | Payoff::PositivePart => None,
        }
    }

    pub fn parse(name: &str) -> Option<Payoff> {
        Some(match name {
            "identity" => Payoff::Identity,
            "tanh" => Payoff::Tanh,
            "sin" => Payoff::Sin,
            "clip01" => Payoff::Clip01,
            "positive_part" => Payoff::PositivePart,
            other => Payoff::Constant(other.strip_prefix("constant:")?.trim().parse().ok()?),
        })
    }
}

/// Coefficients and claim data of a Markovian claim.
#[derive(Clone)]
pub struct DiffusionModel {
    pub name: String,
    m: usize,
    d: usize,
    horizon: f64,
    drift: Arc<CoefficientFn>,
    vol: Arc<CoefficientFn>,
    terminal: Arc<TerminalFn>,
    running: Arc<RunningFn>,
    transition: Option<Arc<TransitionFn>>,
    running_is_zero: bool,
    /// Declared Lipschitz/growth constant of `b`, `σ`.
    pub lip_b_sigma: f64,
    /// Declared sup-norm bound of `f`, `g`.
    pub bound_fg: f64,
    /// Default starting point.
    pub y0: Vec<f64>,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("name", &self.name)
            .field("m", &self.m)
            .field("d", &self.d)
            .field("horizon", &self.horizon)
            .field("y0", &self.y0)
            .finish_non_exhaustive()
    }
}

impl DiffusionModel {
    /// A general `m`-dimensional model driven by `d` Brownian motions.
    #[allow(clippy::too_many_arguments)]
    pub fn general(
        name: &str,
        m: usize,
        d: usize,
        horizon: f64,
        drift: Arc<CoefficientFn>,
        vol: Arc<CoefficientFn>,
        terminal: Arc<TerminalFn>,
        running: Arc<RunningFn>,
    ) -> Self {
        DiffusionModel {
            name: name.to_string(),
            m,
            d,
            horizon,
            drift,
            vol,
            terminal,
            running,
            transition: None,
            running_is_zero: false,
            lip_b_sigma: f64::INFINITY,
            bound_fg: f64::INFINITY,
            y0: vec![0.0; m],
        }
    }

    /// A scalar model from plain functions.
    pub fn scalar<B, S, F, G>(name: &str, horizon: f64, b: B, sigma: S, f: F, g: G) -> Self
    where
        B: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        S: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::general(
            name,
            1,
            1,
            horizon,
            Arc::new(move |t, y, out| out[0] = b(t, y[0])),
            Arc::new(move |t, y, out| out[0] = sigma(t, y[0])),
            Arc::new(move |y| f(y[0])),
            Arc::new(move |t, y| g(t, y[0])),
        )
    }

    fn scalar_payoff(name: &str, horizon: f64, payoff: Payoff, g: f64) -> Self {
        // Placeholder coefficients; callers overwrite drift and vol.
        let mut m = Self::scalar(name, horizon, |_, _| 0.0, |_, _| 0.0, move |y| payoff.eval(y), move |_, _| g);
        m.running_is_zero = g == 0.0;
        m.bound_fg = payoff.bound().map_or(f64::INFINITY, |b| b.max(g.abs()));
        m
    }

    /// `b = σ = 0`: the state never moves.
    pub fn constant(horizon: f64, payoff: Payoff, g: f64) -> Self {
        let mut m = Self::scalar_payoff("constant", horizon, payoff, g);
        m.lip_b_sigma = 0.0;
        m
    }

    /// `dY = μ dt + σ dW`.
    pub fn brownian(horizon: f64, mu: f64, sigma: f64, payoff: Payoff, g: f64) -> Self {
        let mut m = Self::scalar_payoff("brownian", horizon, payoff, g);
        m.drift = Arc::new(move |_, _, out| out[0] = mu);
        m.vol = Arc::new(move |_, _, out| out[0] = sigma);
        m.lip_b_sigma = mu.abs() + sigma.abs();
        m
    }

    /// `dY = κ(θ − Y) dt + σ dW`.
    pub fn ou(horizon: f64, kappa: f64, mean: f64, sigma: f64, payoff: Payoff, g: f64) -> Self {
        let mut m = Self::scalar_payoff("ou", horizon, payoff, g);
        m.drift = Arc::new(move |_, y, out| out[0] = kappa * (mean - y[0]));
        m.vol = Arc::new(move |_, _, out| out[0] = sigma);
        m.lip_b_sigma = kappa.abs() * (1.0 + mean.abs()) + sigma.abs();
        m
    }

    /// `dY = μ Y dt + σ Y dW`.
    pub fn gbm(horizon: f64, mu: f64, sigma: f64, payoff: Payoff, g: f64) -> Self {
        let mut m = Self::scalar_payoff("gbm", horizon, payoff, g);
        m.drift = Arc::new(move |_, y, out| out[0] = mu * y[0]);
        m.vol = Arc::new(move |_, y, out| out[0] = sigma * y[0]);
        m.lip_b_sigma = mu.abs() + sigma.abs();
        m.y0 = vec![1.0];
        m
    }

    /// The martingale `Y_t = c + 2Φ(W_t/√(T − t)) − 1` ending at
    /// `Y_T = c + sign(W_T)`, with claim `f(y) = y⁺`.
    ///
    /// Its volatility `√(2/(π(T − t))) exp(−½ Φ⁻¹((y − c + 1)/2)²)` is not
    /// uniformly parabolic, so paths are generated from the exact map in `W`.
    pub fn sign_example(horizon: f64, center: f64) -> Self {
        let mut m = Self::scalar_payoff("sign_example", horizon, Payoff::PositivePart, 0.0);
        m.vol = Arc::new(move |t, y, out| out[0] = sign_model_vol(horizon, center, t, y[0]));
        m.transition = Some(Arc::new(move |s, ys, t, dw, out| {
            out[0] = sign_model_transition(horizon, center, s, ys[0], t, dw[0]);
        }));
        m.bound_fg = f64::INFINITY;
        m.y0 = vec![center];
        m
    }

    pub fn with_start(mut self, y0: Vec<f64>) -> Self {
        self.y0 = y0;
        self
    }

    pub fn with_constants(mut self, lip_b_sigma: f64, bound_fg: f64) -> Self {
        self.lip_b_sigma = lip_b_sigma;
        self.bound_fg = bound_fg;
        self
    }

    /// Marks `g ≡ 0`, letting simulations skip the running integral.
    pub fn with_zero_running(mut self) -> Self {
        self.running_is_zero = true;
        self
    }

    pub fn state_dim(&self) -> usize {
        self.m
    }

    pub fn noise_dim(&self) -> usize {
        self.d
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn is_scalar(&self) -> bool {
        self.m == 1 && self.d == 1
    }

    pub fn has_running(&self) -> bool {
        !self.running_is_zero
    }

    pub fn drift_into(&self, t: f64, y: &[f64], out: &mut [f64]) {
        (self.drift)(t, y, out)
    }

    pub fn vol_into(&self, t: f64, y: &[f64], out: &mut [f64]) {
        (self.vol)(t, y, out)
    }

    pub fn terminal(&self, y: &[f64]) -> f64 {
        (self.terminal)(y)
    }

    pub fn running(&self, t: f64, y: &[f64]) -> f64 {
        if self.running_is_zero {
            0.0
        } else {
            (self.running)(t, y)
        }
    }

    /// `b(t, y)` of a scalar model.
    pub fn b(&self, t: f64, y: f64) -> f64 {
        let mut out = [0.0];
        (self.drift)(t, &[y], &mut out);
        out[0]
    }

    /// `σ(t, y)` of a scalar model.
    pub fn sigma(&self, t: f64, y: f64) -> f64 {
        let mut out = [0.0];
        (self.vol)(t, &[y], &mut out);
        out[0]
    }

    /// `f(y)` of a scalar model.
    pub fn f(&self, y: f64) -> f64 {
        (self.terminal)(&[y])
    }

    /// `g(t, y)` of a scalar model.
    pub fn g(&self, t: f64, y: f64) -> f64 {
        self.running(t, &[y])
    }

    pub fn require_scalar(&self) -> Result<(), SimError> {
        if self.is_scalar() {
            Ok(())
        } else {
            Err(SimError::NotScalar { m: self.m, d: self.d })
        }
    }

    /// Spot-checks of the growth and boundedness assumptions on a sample of
    /// scalar states `ys` at `times`.
    pub fn check_assumptions(&self, times: &[f64], ys: &[f64]) -> AssumptionReport {
        let mut report = AssumptionReport {
            finite: true,
            bounded_claim: true,
            growth: true,
            worst_growth_ratio: 0.0,
        };
        let mut b = vec![0.0; self.m];
        let mut s = vec![0.0; self.m * self.d];
        for &t in times {
            for &y0 in ys {
                let y = vec![y0; self.m];
                self.drift_into(t, &y, &mut b);
                self.vol_into(t, &y, &mut s);
                let f = self.terminal(&y);
                let g = self.running(t, &y);
                if !(b.iter().chain(&s).all(|v| v.is_finite()) && f.is_finite() && g.is_finite()) {
                    report.finite = false;
                    continue;
                }
                if f.abs() > self.bound_fg || g.abs() > self.bound_fg {
                    report.bounded_claim = false;
                }
                let size = b.iter().map(|v| v * v).sum::<f64>().sqrt() + s.iter().map(|v| v * v).sum::<f64>().sqrt();
                let ratio = size / (1.0 + y0.abs() * (self.m as f64).sqrt());
                report.worst_growth_ratio = report.worst_growth_ratio.max(ratio);
                if ratio > self.lip_b_sigma * (1.0 + 1e-12) {
                    report.growth = false;
                }
            }
        }
        report
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub finite: bool,
    pub bounded_claim: bool,
    pub growth: bool,
    /// `max (|b| + |σ|)/(1 + |y|)` over the samples.
    pub worst_growth_ratio: f64,
}

fn sign_model_vol(horizon: f64, center: f64, t: f64, y: f64) -> f64 {
    let rem = horizon - t;
    let p = 0.5 * (y - center + 1.0);
    if rem <= 0.0 || p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    let q = gauss::inv_cdf(p);
    (2.0 / (std::f64::consts::PI * rem)).sqrt() * (-0.5 * q * q).exp()
}

fn sign_model_transition(horizon: f64, center: f64, s: f64, ys: f64, t: f64, dw: f64) -> f64 {
    let p = 0.5 * (ys - center + 1.0);
    if p <= 0.0 || p >= 1.0 || s >= horizon {
        return ys;
    }
    let w_s = (horizon - s).sqrt() * gauss::inv_cdf(p);
    let w_t = w_s + dw;
    let rem = horizon - t;
    if rem <= 1e-14 * horizon {
        let sign = if w_t > 0.0 {
            1.0
        } else if w_t < 0.0 {
            -1.0
        } else {
            0.0
        };
        center + sign
    } else {
        center + 2.0 * gauss::cdf(w_t / rem.sqrt()) - 1.0
    }
}

/// `(t, y, z, out)`: writes the `d` components of `β` into `out`.
pub type BetaFn = dyn Fn(f64, &[f64], f64, &mut [f64]) + Send + Sync;

/// A feedback control `β(t, y, z)`, clamped to the ball of radius `cap`.
#[derive(Clone)]
pub struct ControlSpec {
    beta: Arc<BetaFn>,
    pub cap: f64,
}

impl fmt::Debug for ControlSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlSpec").field("cap", &self.cap).finish_non_exhaustive()
    }
}

impl ControlSpec {
    pub fn new(cap: f64, beta: Arc<BetaFn>) -> Self {
        ControlSpec { beta, cap }
    }

    /// A control for one Brownian driver.
    pub fn scalar<F>(cap: f64, beta: F) -> Self
    where
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        ControlSpec {
            beta: Arc::new(move |t, y, z, out| out[0] = beta(t, y[0], z)),
            cap,
        }
    }

    pub fn constant(beta: f64) -> Self {
        Self::scalar(beta.abs(), move |_, _, _| beta)
    }

    /// Piecewise constant in time: `values[k]` on the `k`-th of equal pieces of `[start, end)`.
    pub fn piecewise_constant(start: f64, end: f64, values: Vec<f64>) -> Self {
        let cap = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let k = values.len();
        Self::scalar(cap, move |t, _, _| {
            let idx = (((t - start) / (end - start)) * k as f64).floor();
            values[(idx.max(0.0) as usize).min(k - 1)]
        })
    }

    /// `β(t, y, z)` clamped to radius `cap`.
    pub fn eval_into(&self, t: f64, y: &[f64], z: f64, out: &mut [f64]) {
        (self.beta)(t, y, z, out);
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > self.cap {
            let scale = if norm.is_finite() { self.cap / norm } else { 0.0 };
            out.iter_mut().for_each(|v| *v *= scale);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    /// Pair path `2k + 1` with the negated increments of path `2k`.
    pub antithetic: bool,
    /// Keep every time slice rather than only the end state.
    pub record_paths: bool,
    /// Stop at this time instead of the horizon.
    pub stop_time: Option<f64>,
}

impl SimOptions {
    pub fn new(steps: usize, paths: usize, seed: u64) -> Self {
        SimOptions {
            steps,
            paths,
            seed,
            antithetic: false,
            record_paths: false,
            stop_time: None,
        }
    }

    pub fn antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    pub fn record_paths(mut self, on: bool) -> Self {
        self.record_paths = on;
        self
    }

    pub fn stop_at(mut self, t: f64) -> Self {
        self.stop_time = Some(t);
        self
    }
}

/// Simulated trajectories of `Y` (and `Z` when a control was supplied).
#[derive(Debug, Clone)]
pub struct PathBatch {
    pub times: Vec<f64>,
    pub m: usize,
    pub paths: usize,
    pub seed: u64,
    /// `[paths × m]`
    pub y_end: Vec<f64>,
    /// `[paths × (steps + 1) × m]` when recorded.
    pub y_paths: Option<Vec<f64>>,
    /// `[paths]` when a control was supplied.
    pub z_end: Option<Vec<f64>>,
    /// `[paths × (steps + 1)]` when recorded with a control.
    pub z_paths: Option<Vec<f64>>,
    /// Left-endpoint `∫ g(t, Y_t) dt` per path.
    pub run_int: Vec<f64>,
    /// Left-endpoint `∫ g(t, Y_t) Z_t dt` per path, with a control.
    pub run_int_z: Option<Vec<f64>>,
}

impl PathBatch {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn y_end_of(&self, path: usize) -> &[f64] {
        &self.y_end[path * self.m..(path + 1) * self.m]
    }

    /// CSV rows `path,t,y0[,y1…][,z]`; every recorded slice when available,
    /// otherwise only the end state.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut header = String::from("path,t");
        for j in 0..self.m {
            header.push_str(&format!(",y{j}"));
        }
        if self.z_end.is_some() {
            header.push_str(",z");
        }
        writeln!(w, "{header}")?;
        let slices = self.times.len();
        for p in 0..self.paths {
            let rows: Vec<usize> = if self.y_paths.is_some() { (0..slices).collect() } else { vec![slices - 1] };
            for k in rows {
                write!(w, "{p},{:.16e}", self.times[k])?;
                for j in 0..self.m {
                    let v = match &self.y_paths {
                        Some(yp) => yp[(p * slices + k) * self.m + j],
                        None => self.y_end[p * self.m + j],
                    };
                    write!(w, ",{v:.16e}")?;
                }
                match (&self.z_paths, &self.z_end) {
                    (Some(zp), _) => write!(w, ",{:.16e}", zp[p * slices + k])?,
                    (None, Some(ze)) => write!(w, ",{:.16e}", ze[p])?,
                    _ => {}
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

/// Euler–Maruyama paths of `Y` from `(s, y0)`.
pub fn simulate_y(model: &DiffusionModel, s: f64, y0: &[f64], opts: &SimOptions) -> Result<PathBatch, SimError> {
    simulate(model, None, s, y0, 1.0, opts)
}

/// Joint paths of `(Y, Z^β)` driven by the same increments.
pub fn simulate_yz(
    model: &DiffusionModel,
    control: &ControlSpec,
    s: f64,
    y0: &[f64],
    z0: f64,
    opts: &SimOptions,
) -> Result<PathBatch, SimError> {
    if !(z0 > 0.0) {
        return Err(SimError::NonPositiveDensity(z0));
    }
    simulate(model, Some(control), s, y0, z0, opts)
}

/// `f(Y_T) + ∫ g dt` for every path.
pub fn claim_sample(batch: &PathBatch, model: &DiffusionModel) -> Vec<f64> {
    (0..batch.paths)
        .map(|p| model.terminal(batch.y_end_of(p)) + batch.run_int[p])
        .collect()
}

const SIM_CHUNK: usize = 512;

struct ChunkOut {
    y_end: Vec<f64>,
    y_paths: Vec<f64>,
    z_end: Vec<f64>,
    z_paths: Vec<f64>,
    run_int: Vec<f64>,
    run_int_z: Vec<f64>,
}

fn simulate(
    model: &DiffusionModel,
    control: Option<&ControlSpec>,
    s: f64,
    y0: &[f64],
    z0: f64,
    opts: &SimOptions,
) -> Result<PathBatch, SimError> {
    let end = opts.stop_time.unwrap_or(model.horizon).min(model.horizon);
    if !(s >= 0.0 && s < end) {
        return Err(SimError::BadStart { s, end });
    }
    if opts.steps == 0 || opts.paths == 0 {
        return Err(SimError::EmptyRun);
    }
    if y0.len() != model.m {
        return Err(SimError::Dimension { expected: model.m, got: y0.len() });
    }
    let steps = opts.steps;
    let dt = (end - s) / steps as f64;
    let times: Vec<f64> = (0..=steps)
        .map(|k| if k == steps { end } else { s + dt * k as f64 })
        .collect();
    let (m, d) = (model.m, model.d);
    let chunks = opts.paths.div_ceil(SIM_CHUNK);
    let times_ref = &times;

    let results = par::map_indexed(chunks, |c| -> Result<ChunkOut, SimError> {
        let lo = c * SIM_CHUNK;
        let hi = (lo + SIM_CHUNK).min(opts.paths);
        let n = hi - lo;
        let slices = steps + 1;
        let mut out = ChunkOut {
            y_end: Vec::with_capacity(n * m),
            y_paths: if opts.record_paths { Vec::with_capacity(n * slices * m) } else { Vec::new() },
            z_end: Vec::with_capacity(if control.is_some() { n } else { 0 }),
            z_paths: Vec::new(),
            run_int: Vec::with_capacity(n),
            run_int_z: Vec::new(),
        };
        let mut y = vec![0.0; m];
        let mut y_next = vec![0.0; m];
        let mut b = vec![0.0; m];
        let mut sig = vec![0.0; m * d];
        let mut dw = vec![0.0; d];
        let mut beta = vec![0.0; d];
        for p in lo..hi {
            let (stream, sign) = if opts.antithetic { ((p / 2) as u64, if p % 2 == 1 { -1.0 } else { 1.0 }) } else { (p as u64, 1.0) };
            let mut rng = path_stream(opts.seed, stream);
            y.copy_from_slice(y0);
            let mut log_z = z0.ln();
            let mut run = 0.0;
            let mut run_z = 0.0;
            if opts.record_paths {
                out.y_paths.extend_from_slice(&y);
                if control.is_some() {
                    out.z_paths.push(z0);
                }
            }
            for k in 0..steps {
                let t = times_ref[k];
                let h = times_ref[k + 1] - t;
                let sqrt_h = h.sqrt();
                for w in dw.iter_mut() {
                    let xi: f64 = rng.sample(StandardNormal);
                    *w = sign * xi * sqrt_h;
                }
                let z = log_z.exp();
                if model.has_running() {
                    let gv = model.running(t, &y);
                    run += gv * h;
                    run_z += gv * z * h;
                }
                if let Some(ctrl) = control {
                    ctrl.eval_into(t, &y, z, &mut beta);
                    let bw: f64 = beta.iter().zip(&dw).map(|(a, b)| a * b).sum();
                    let bb: f64 = beta.iter().map(|a| a * a).sum();
                    log_z += bw - 0.5 * bb * h;
                }
                match &model.transition {
                    Some(tr) => tr(t, &y, times_ref[k + 1], &dw, &mut y_next),
                    None => {
                        model.drift_into(t, &y, &mut b);
                        model.vol_into(t, &y, &mut sig);
                        for i in 0..m {
                            let mut v = y[i] + b[i] * h;
                            for j in 0..d {
                                v += sig[i * d + j] * dw[j];
                            }
                            y_next[i] = v;
                        }
                    }
                }
                std::mem::swap(&mut y, &mut y_next);
                if !(y.iter().all(|v| v.is_finite()) && log_z.is_finite() && run.is_finite()) {
                    return Err(SimError::NonFinite { path: p, step: k + 1, t: times_ref[k + 1] });
                }
                if opts.record_paths {
                    out.y_paths.extend_from_slice(&y);
                    if control.is_some() {
                        out.z_paths.push(log_z.exp());
                    }
                }
            }
            out.y_end.extend_from_slice(&y);
            out.run_int.push(run);
            if control.is_some() {
                out.z_end.push(log_z.exp());
                out.run_int_z.push(run_z);
            }
        }
        Ok(out)
    });

    let mut batch = PathBatch {
        times,
        m,
        paths: opts.paths,
        seed: opts.seed,
        y_end: Vec::with_capacity(opts.paths * m),
        y_paths: opts.record_paths.then(Vec::new),
        z_end: control.map(|_| Vec::with_capacity(opts.paths)),
        z_paths: (opts.record_paths && control.is_some()).then(Vec::new),
        run_int: Vec::with_capacity(opts.paths),
        run_int_z: control.map(|_| Vec::with_capacity(opts.paths)),
    };
    for r in results {
        let c = r?;
        batch.y_end.extend(c.y_end);
        batch.run_int.extend(c.run_int);
        if let Some(v) = batch.y_paths.as_mut() {
            v.extend(c.y_paths);
        }
        if let Some(v) = batch.z_end.as_mut() {
            v.extend(c.z_end);
        }
        if let Some(v) = batch.z_paths.as_mut() {
            v.extend(c.z_paths);
        }
        if let Some(v) = batch.run_int_z.as_mut() {
            v.extend(c.run_int_z);
        }
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn zero_dynamics_keep_state_and_integrate_g() {
        let model = DiffusionModel::scalar("still", 1.0, |_, _| 0.0, |_, _| 0.0, |y| y, |t, y| t + y);
        let b = simulate_y(&model, 0.0, &[1.0], &SimOptions::new(100, 10, 3)).unwrap();
        assert!(b.y_end.iter().all(|&y| y == 1.0));
        // Left-endpoint rule of ∫₀¹ (t + 1) dt on 100 steps.
        let want: f64 = (0..100).map(|k| (k as f64 / 100.0 + 1.0) * 0.01).sum();
        assert!(b.run_int.iter().all(|&r| (r - want).abs() < 1e-12));
    }

    #[test]
    fn pure_drift_is_exact() {
        let model = DiffusionModel::brownian(1.0, 1.0, 0.0, Payoff::Identity, 0.0);
        let b = simulate_y(&model, 0.0, &[0.0], &SimOptions::new(10, 5, 1)).unwrap();
        for &y in &b.y_end {
            assert_abs_diff_eq!(y, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn brownian_variance() {
        let model = DiffusionModel::brownian(1.0, 0.0, 1.0, Payoff::Identity, 0.0);
        let n = 100_000;
        let b = simulate_y(&model, 0.0, &[0.0], &SimOptions::new(4, n, 11)).unwrap();
        let mu = mean(&b.y_end);
        let var = b.y_end.iter().map(|y| (y - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "{var}");
    }

    #[test]
    fn zero_control_keeps_density() {
        let model = DiffusionModel::brownian(1.0, 0.0, 1.0, Payoff::Identity, 0.0);
        let b = simulate_yz(&model, &ControlSpec::constant(0.0), 0.0, &[0.0], 1.7, &SimOptions::new(8, 50, 2)).unwrap();
        assert!(b.z_end.unwrap().iter().all(|&z| (z - 1.7).abs() < 1e-14));
    }

    #[test]
    fn unit_control_density_moments() {
        let model = DiffusionModel::brownian(1.0, 0.0, 1.0, Payoff::Identity, 0.0);
        let n = 100_000;
        let b = simulate_yz(&model, &ControlSpec::constant(1.0), 0.0, &[0.0], 1.0, &SimOptions::new(16, n, 5)).unwrap();
        let z = b.z_end.unwrap();
        assert!(z.iter().all(|&v| v > 0.0));
        assert!((mean(&z) - 1.0).abs() < 0.02);
        let ent: Vec<f64> = z.iter().map(|v| v * v.ln()).collect();
        assert!((mean(&ent) - 0.5).abs() < 0.03, "{}", mean(&ent));
    }

    #[test]
    fn control_is_clamped() {
        let c = ControlSpec::scalar(2.0, |_, _, _| -7.0);
        let mut out = [0.0];
        c.eval_into(0.0, &[0.0], 1.0, &mut out);
        assert_eq!(out[0], -2.0);
    }

    #[test]
    fn same_seed_same_paths_in_both_modes() {
        let model = DiffusionModel::ou(1.0, 1.0, 0.0, 0.5, Payoff::Sin, 0.3);
        let opts = SimOptions::new(20, 2000, 9);
        let a = simulate_y(&model, 0.0, &[0.2], &opts).unwrap();
        let b = par::sequential(|| simulate_y(&model, 0.0, &[0.2], &opts).unwrap());
        assert_eq!(a.y_end, b.y_end);
        assert_eq!(a.run_int, b.run_int);
    }

    #[test]
    fn antithetic_pairs_mirror() {
        let model = DiffusionModel::brownian(1.0, 0.0, 1.0, Payoff::Identity, 0.0);
        let b = simulate_y(&model, 0.0, &[0.0], &SimOptions::new(3, 10, 4).antithetic(true)).unwrap();
        for k in 0..5 {
            assert_abs_diff_eq!(b.y_end[2 * k], -b.y_end[2 * k + 1], epsilon = 1e-15);
        }
    }

    #[test]
    fn sign_model_terminal_law() {
        let model = DiffusionModel::sign_example(1.0, 0.5);
        let b = simulate_y(&model, 0.0, &[0.5], &SimOptions::new(1, 20_000, 8)).unwrap();
        let x = claim_sample(&b, &model);
        let ups = x.iter().filter(|&&v| v == 1.5).count();
        let downs = x.iter().filter(|&&v| v == 0.0).count();
        assert_eq!(ups + downs, x.len());
        assert!((ups as f64 / x.len() as f64 - 0.5).abs() < 0.015);
    }

    #[test]
    fn sign_model_intermediate_steps_agree_with_one_step() {
        // Exact map in W: splitting the increment must not change the law.
        let model = DiffusionModel::sign_example(1.0, 0.0);
        let b = simulate_y(&model, 0.0, &[0.0], &SimOptions::new(7, 20_000, 8)).unwrap();
        let ups = b.y_end.iter().filter(|&&v| v == 1.0).count() as f64 / 20_000.0;
        assert!((ups - 0.5).abs() < 0.015);
        assert!(b.y_end.iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn nan_coefficients_are_reported() {
        let model = DiffusionModel::scalar("bad", 1.0, |t, _| if t > 0.5 { f64::NAN } else { 0.0 }, |_, _| 0.0, |y| y, |_, _| 0.0);
        let err = simulate_y(&model, 0.0, &[0.0], &SimOptions::new(10, 3, 1)).unwrap_err();
        assert!(matches!(err, SimError::NonFinite { path: 0, step: 7, .. }), "{err:?}");
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let model = DiffusionModel::brownian(1.0, 0.0, 1.0, Payoff::Identity, 0.0);
        let b = simulate_yz(&model, &ControlSpec::constant(0.5), 0.0, &[0.0], 1.0, &SimOptions::new(2, 2, 1).record_paths(true)).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "path,t,y0,z");
        assert_eq!(lines.len(), 1 + 2 * 3);
    }

    #[test]
    fn assumption_spot_check() {
        let model = DiffusionModel::ou(1.0, 1.0, 0.0, 1.0, Payoff::Sin, 0.0);
        let r = model.check_assumptions(&[0.0, 0.5], &[-3.0, 0.0, 3.0]);
        assert!(r.finite && r.bounded_claim && r.growth, "{r:?}");
        let unbounded = DiffusionModel::brownian(1.0, 0.0, 1.0, Payoff::Identity, 0.0).with_constants(1.0, 2.0);
        assert!(!unbounded.check_assumptions(&[0.0], &[5.0]).bounded_claim);
    }
}
