//! Bass martingale embedding of a claim given only through its law.
//!
//! With `H = F_X⁻¹ ∘ Φ_T`, `H(W_T)` has the law of `X`. The martingale
//! `Y_t = u(t, W_t)`, `u(t, x) = E[H(x + W_{T−t})]`, solves
//! `dY = ∂_x u(t, v(t, Y)) dW` where `v(t, ·)` inverts `u(t, ·)`, so the
//! claim becomes the Markovian `f(Y_T) = Y_T` with the same OCE value.

use std::io::{self, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::gauss::{self, GaussHermite};
use crate::par;
use crate::sde::DiffusionModel;

/// Below this time to maturity the kernel is replaced by a difference quotient of `H`.
pub const NEAR_MATURITY: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BassError {
    #[error("invalid target law: {0}")]
    InvalidLaw(String),
    #[error("time {t} is outside [0, {horizon})")]
    BadTime { t: f64, horizon: f64 },
    #[error("y = {y} lies outside the open range ({lo}, {hi}) of u({t}, ·)")]
    OutsideRange { t: f64, y: f64, lo: f64, hi: f64 },
    #[error("the unit-volatility embedding needs a law with a positive density")]
    NoDensity,
}

/// The law of a claim through its quantile function.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetLaw {
    Gaussian { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    /// `lo` with probability `1 − p_hi`, `hi` with probability `p_hi`.
    TwoPoint { lo: f64, hi: f64, p_hi: f64 },
    Constant(f64),
    /// Quantiles `values[i] = F⁻¹(probs[i])`, interpolated linearly.
    Table { probs: Vec<f64>, values: Vec<f64> },
}

impl TargetLaw {
    pub fn gaussian(mean: f64, sd: f64) -> Result<Self, BassError> {
        if !(mean.is_finite() && sd > 0.0 && sd.is_finite()) {
            return Err(BassError::InvalidLaw(format!("gaussian needs sd > 0, got {sd}")));
        }
        Ok(TargetLaw::Gaussian { mean, sd })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self, BassError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(BassError::InvalidLaw(format!("uniform needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(TargetLaw::Uniform { lo, hi })
    }

    pub fn two_point(lo: f64, hi: f64, p_hi: f64) -> Result<Self, BassError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi && p_hi > 0.0 && p_hi < 1.0) {
            return Err(BassError::InvalidLaw(format!("two-point needs lo < hi and 0 < p < 1, got {lo}, {hi}, {p_hi}")));
        }
        Ok(TargetLaw::TwoPoint { lo, hi, p_hi })
    }

    /// Tabulated quantile function; `probs` must start at 0, end at 1 and increase.
    pub fn table(probs: Vec<f64>, values: Vec<f64>) -> Result<Self, BassError> {
        if probs.len() != values.len() || probs.len() < 2 {
            return Err(BassError::InvalidLaw("table needs at least two (p, x) rows of equal length".into()));
        }
        if probs[0] != 0.0 || *probs.last().expect("nonempty") != 1.0 {
            return Err(BassError::InvalidLaw("table probabilities must run from 0 to 1".into()));
        }
        if !probs.windows(2).all(|w| w[0] < w[1]) {
            return Err(BassError::InvalidLaw("table probabilities must increase strictly".into()));
        }
        if !values.iter().all(|v| v.is_finite()) || !values.windows(2).all(|w| w[0] <= w[1]) {
            return Err(BassError::InvalidLaw("table quantiles must be finite and nondecreasing".into()));
        }
        Ok(TargetLaw::Table { probs, values })
    }

    /// `F⁻¹(p)` and whether `p` had to be clamped into `[0, 1]`.
    pub fn quantile(&self, p: f64) -> (f64, bool) {
        let clamped = !(0.0..=1.0).contains(&p);
        let p = p.clamp(0.0, 1.0);
        let x = match self {
            TargetLaw::Gaussian { mean, sd } => mean + sd * gauss::inv_cdf(p),
            TargetLaw::Uniform { lo, hi } => lo + (hi - lo) * p,
            TargetLaw::TwoPoint { lo, hi, p_hi } => {
                if p <= 1.0 - p_hi {
                    *lo
                } else {
                    *hi
                }
            }
            TargetLaw::Constant(c) => *c,
            TargetLaw::Table { probs, values } => {
                let i = probs.partition_point(|&q| q <= p).clamp(1, probs.len() - 1);
                let w = (p - probs[i - 1]) / (probs[i] - probs[i - 1]);
                values[i - 1] + w * (values[i] - values[i - 1])
            }
        };
        (x, clamped)
    }

    /// Closed support `[lo, hi]`.
    pub fn support(&self) -> (f64, f64) {
        match self {
            TargetLaw::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            TargetLaw::Uniform { lo, hi } | TargetLaw::TwoPoint { lo, hi, .. } => (*lo, *hi),
            TargetLaw::Constant(c) => (*c, *c),
            TargetLaw::Table { values, .. } => (values[0], *values.last().expect("nonempty")),
        }
    }

    /// `C` with support in `[−C, C]`.
    pub fn bound(&self) -> f64 {
        let (lo, hi) = self.support();
        lo.abs().max(hi.abs())
    }

    pub fn mean(&self) -> f64 {
        match self {
            TargetLaw::Gaussian { mean, .. } => *mean,
            TargetLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            TargetLaw::TwoPoint { lo, hi, p_hi } => lo + p_hi * (hi - lo),
            TargetLaw::Constant(c) => *c,
            TargetLaw::Table { probs, values } => probs
                .windows(2)
                .zip(values.windows(2))
                .map(|(p, v)| 0.5 * (p[1] - p[0]) * (v[0] + v[1]))
                .sum(),
        }
    }

    /// `F(x) = P(X ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            TargetLaw::Gaussian { mean, sd } => gauss::cdf((x - mean) / sd),
            TargetLaw::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            TargetLaw::TwoPoint { lo, hi, p_hi } => {
                if x < *lo {
                    0.0
                } else if x < *hi {
                    1.0 - p_hi
                } else {
                    1.0
                }
            }
            TargetLaw::Constant(c) => {
                if x < *c {
                    0.0
                } else {
                    1.0
                }
            }
            TargetLaw::Table { probs, values } => {
                if x < values[0] {
                    return 0.0;
                }
                if x >= *values.last().expect("nonempty") {
                    return 1.0;
                }
                // Largest p with F⁻¹(p) ≤ x.
                let i = values.partition_point(|&v| v <= x).clamp(1, values.len() - 1);
                let (v0, v1) = (values[i - 1], values[i]);
                if v1 == v0 {
                    probs[i]
                } else {
                    probs[i - 1] + (x - v0) / (v1 - v0) * (probs[i] - probs[i - 1])
                }
            }
        }
    }

    /// Density where one exists.
    pub fn pdf(&self, x: f64) -> Option<f64> {
        match self {
            TargetLaw::Gaussian { mean, sd } => Some(gauss::pdf((x - mean) / sd) / sd),
            TargetLaw::Uniform { lo, hi } => Some(if x >= *lo && x <= *hi { 1.0 / (hi - lo) } else { 0.0 }),
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        let (lo, hi) = self.support();
        lo == hi
    }

    /// `name` is one of `gaussian`, `uniform`, `two-point`; `params` fills
    /// `(mean, sd)`, `(lo, hi)` and `(lo, hi, p_hi)` respectively.
    pub fn named(name: &str, params: &[f64]) -> Result<Self, BassError> {
        let get = |i: usize, default: f64| params.get(i).copied().unwrap_or(default);
        match name {
            "gaussian" => Self::gaussian(get(0, 0.0), get(1, 1.0)),
            "uniform" => Self::uniform(get(0, 0.0), get(1, 1.0)),
            "two-point" => Self::two_point(get(0, -1.0), get(1, 1.0), get(2, 0.5)),
            "constant" => Ok(TargetLaw::Constant(get(0, 0.0))),
            other => Err(BassError::InvalidLaw(format!("unknown law '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Volatility {
    pub value: f64,
    /// Computed from a difference quotient of `H` near maturity.
    pub reduced_accuracy: bool,
}

/// `H`, `u`, `∂_x u` and `v` for one law and horizon.
#[derive(Debug, Clone)]
pub struct BassMap {
    pub law: TargetLaw,
    pub horizon: f64,
    gh: GaussHermite,
    /// Use the closed-form kernels of the named laws instead of quadrature.
    pub closed_form: bool,
}

impl BassMap {
    pub fn new(law: TargetLaw, horizon: f64, quad_order: usize) -> Result<Self, BassError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(BassError::BadTime { t: 0.0, horizon });
        }
        Ok(BassMap {
            law,
            horizon,
            gh: GaussHermite::new(quad_order.max(2)),
            closed_form: true,
        })
    }

    /// Forces Gauss–Hermite quadrature for every law.
    pub fn quadrature_only(mut self) -> Self {
        self.closed_form = false;
        self
    }

    /// `H(w) = F⁻¹(Φ(w/√T))`, clamped to the support.
    pub fn h(&self, w: f64) -> f64 {
        let rt = self.horizon.sqrt();
        match &self.law {
            TargetLaw::Gaussian { mean, sd } => mean + sd / rt * w,
            law => law.quantile(gauss::cdf(w / rt)).0,
        }
    }

    fn check_time(&self, t: f64) -> Result<f64, BassError> {
        if !(t >= 0.0 && t < self.horizon) {
            return Err(BassError::BadTime { t, horizon: self.horizon });
        }
        Ok((self.horizon - t).sqrt())
    }

    /// `u(t, x) = E[H(x + √(T − t) ξ)]`.
    pub fn u(&self, t: f64, x: f64) -> Result<f64, BassError> {
        let s = self.check_time(t)?;
        let rt = self.horizon.sqrt();
        if self.closed_form {
            let r = (2.0 * self.horizon - t).sqrt();
            match &self.law {
                TargetLaw::Gaussian { mean, sd } => return Ok(mean + sd / rt * x),
                TargetLaw::Uniform { lo, hi } => return Ok(lo + (hi - lo) * gauss::cdf(x / r)),
                TargetLaw::TwoPoint { lo, hi, p_hi } => {
                    let w_star = rt * gauss::inv_cdf(1.0 - p_hi);
                    return Ok(lo + (hi - lo) * gauss::cdf((x - w_star) / s));
                }
                TargetLaw::Constant(c) => return Ok(*c),
                TargetLaw::Table { .. } => {}
            }
        }
        Ok(self.gh.expect(x, s, |w| self.h(w)))
    }

    /// `∂_x u(t, x) = E[H(x + √(T − t) ξ) ξ] / √(T − t)`.
    pub fn ux(&self, t: f64, x: f64) -> Result<f64, BassError> {
        let s = self.check_time(t)?;
        let rt = self.horizon.sqrt();
        if self.closed_form {
            let r = (2.0 * self.horizon - t).sqrt();
            match &self.law {
                TargetLaw::Gaussian { sd, .. } => return Ok(sd / rt),
                TargetLaw::Uniform { lo, hi } => return Ok((hi - lo) * gauss::pdf(x / r) / r),
                TargetLaw::TwoPoint { lo, hi, p_hi } => {
                    let w_star = rt * gauss::inv_cdf(1.0 - p_hi);
                    return Ok((hi - lo) * gauss::pdf((x - w_star) / s) / s);
                }
                TargetLaw::Constant(_) => return Ok(0.0),
                TargetLaw::Table { .. } => {}
            }
        }
        Ok(self.gh.expect_times_xi(x, s, |w| self.h(w)) / s)
    }

    /// Open range of `u(t, ·)`, which is the open hull of the support.
    pub fn range(&self) -> (f64, f64) {
        self.law.support()
    }

    /// `x` with `u(t, x) = y`, by bisection.
    pub fn v(&self, t: f64, y: f64) -> Result<f64, BassError> {
        self.check_time(t)?;
        let (lo, hi) = self.range();
        if !(y > lo && y < hi) {
            return Err(BassError::OutsideRange { t, y, lo, hi });
        }
        invert(|x| self.u(t, x).unwrap_or(f64::NAN), y, self.horizon.sqrt())
            .ok_or(BassError::OutsideRange { t, y, lo, hi })
    }

    /// `∂_x u(t, v(t, y))`.
    pub fn volatility(&self, t: f64, y: f64) -> Result<Volatility, BassError> {
        self.check_time(t)?;
        if self.law.is_constant() {
            return Ok(Volatility { value: 0.0, reduced_accuracy: false });
        }
        if self.horizon - t < NEAR_MATURITY {
            let (lo, hi) = self.range();
            if !(y > lo && y < hi) {
                return Err(BassError::OutsideRange { t, y, lo, hi });
            }
            let x = invert(|w| self.h(w), y, self.horizon.sqrt()).ok_or(BassError::OutsideRange { t, y, lo, hi })?;
            let step = (self.horizon - t).sqrt().max(1e-6);
            let value = (self.h(x + step) - self.h(x)) / step;
            return Ok(Volatility { value, reduced_accuracy: true });
        }
        let x = self.v(t, y)?;
        Ok(Volatility {
            value: self.ux(t, x)?,
            reduced_accuracy: false,
        })
    }
}

/// Solves `f(x) = y` for nondecreasing `f`, expanding the bracket from `±scale`.
fn invert<F: Fn(f64) -> f64>(f: F, y: f64, scale: f64) -> Option<f64> {
    let mut lo = -scale;
    let mut hi = scale;
    let mut tries = 0;
    while !(f(lo) < y) {
        lo *= 2.0;
        tries += 1;
        if tries > 60 {
            return None;
        }
    }
    while !(f(hi) > y) {
        hi *= 2.0;
        tries += 1;
        if tries > 120 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Volatility surface on a uniform `(t, y)` grid, stored `[k][i]`.
#[derive(Debug, Clone)]
pub struct VolTable {
    pub times: Vec<f64>,
    pub ys: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Nodes computed near maturity with reduced accuracy.
    pub reduced: usize,
}

impl VolTable {
    /// Bilinear interpolation; zero outside the `y` range, flat in time beyond the last node.
    pub fn at(&self, t: f64, y: f64) -> f64 {
        let ny = self.ys.len();
        let (y0, y1) = (self.ys[0], self.ys[ny - 1]);
        if !(y >= y0 && y <= y1) {
            return 0.0;
        }
        let fy = (y - y0) / (y1 - y0) * (ny - 1) as f64;
        let i = (fy.floor() as usize).min(ny - 2);
        let b = fy - i as f64;
        let nt = self.times.len();
        let (t0, t1) = (self.times[0], self.times[nt - 1]);
        let ft = ((t - t0) / (t1 - t0) * (nt - 1) as f64).clamp(0.0, (nt - 1) as f64);
        let k = (ft.floor() as usize).min(nt - 2);
        let a = ft - k as f64;
        let v = |kk: usize, ii: usize| self.sigma[kk * ny + ii];
        let row = |kk: usize| (1.0 - b) * v(kk, i) + b * v(kk, i + 1);
        (1.0 - a) * row(k) + a * row(k + 1)
    }

    /// Reads the `t,y,sigma` rows written by [`VolTable::write_csv`] (time-major, uniform nodes).
    pub fn from_rows(rows: &[(f64, f64, f64)]) -> Result<Self, BassError> {
        let bad = |m: &str| BassError::InvalidLaw(format!("volatility table: {m}"));
        let t0 = rows.first().ok_or_else(|| bad("no rows"))?.0;
        let ny = rows.iter().take_while(|r| r.0 == t0).count();
        if ny < 2 || !rows.len().is_multiple_of(ny) || rows.len() / ny < 2 {
            return Err(bad("expected a full time-major grid with at least two nodes per axis"));
        }
        let ys: Vec<f64> = rows[..ny].iter().map(|r| r.1).collect();
        let times: Vec<f64> = rows.iter().step_by(ny).map(|r| r.0).collect();
        for (n, r) in rows.iter().enumerate() {
            if r.0 != times[n / ny] || r.1 != ys[n % ny] || !r.2.is_finite() {
                return Err(bad(&format!("row {} breaks the grid layout", n + 1)));
            }
        }
        Ok(VolTable {
            times,
            ys,
            sigma: rows.iter().map(|r| r.2).collect(),
            reduced: 0,
        })
    }

    /// CSV `t,y,sigma`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,y,sigma")?;
        let ny = self.ys.len();
        for (k, t) in self.times.iter().enumerate() {
            for (i, y) in self.ys.iter().enumerate() {
                writeln!(w, "{t:.16e},{y:.16e},{:.16e}", self.sigma[k * ny + i])?;
            }
        }
        Ok(())
    }
}

/// A law embedded as a martingale diffusion.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub model: DiffusionModel,
    pub map: Arc<BassMap>,
    pub table: Arc<VolTable>,
}

/// `dY = σ(t, Y) dW`, `f(y) = y`, `g = 0`, `Y_0 = E[X]`, with `σ` tabulated on
/// `table_size × table_size` nodes over `[0, T) × support`.
pub fn embed(law: &TargetLaw, horizon: f64, quad_order: usize, table_size: usize) -> Result<Embedding, BassError> {
    let map = Arc::new(BassMap::new(law.clone(), horizon, quad_order)?);
    let n = table_size.max(3);
    let y0 = map.u(0.0, 0.0)?;
    let (lo, hi) = match law {
        TargetLaw::Gaussian { mean, sd } => (mean - 8.0 * sd, mean + 8.0 * sd),
        _ => law.support(),
    };
    let (lo, hi) = if lo < hi { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
    let ys: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    // The last time node stops just short of maturity, where σ may blow up.
    let t_last = horizon * (1.0 - 1.0 / (4.0 * n as f64)).max(0.0);
    let times: Vec<f64> = (0..n).map(|k| t_last * k as f64 / (n - 1) as f64).collect();
    let rows = par::map_indexed(n, |k| {
        ys.iter()
            .map(|&y| match map.volatility(times[k], y) {
                Ok(v) => (v.value, v.reduced_accuracy),
                Err(_) => (0.0, false),
            })
            .collect::<Vec<_>>()
    });
    let mut sigma = Vec::with_capacity(n * n);
    let mut reduced = 0;
    for row in rows {
        for (s, r) in row {
            sigma.push(s);
            reduced += r as usize;
        }
    }
    let table = Arc::new(VolTable { times, ys, sigma, reduced });
    let model = vol_table_model(table.clone(), horizon, y0, law.bound());
    Ok(Embedding { model, map, table })
}

/// `dY = σ(t, Y) dW` with `σ` read from `table`, `f(y) = y`, `g = 0`.
pub fn vol_table_model(table: Arc<VolTable>, horizon: f64, y0: f64, bound: f64) -> DiffusionModel {
    let vmax = table.sigma.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    DiffusionModel::scalar("bass", horizon, |_, _| 0.0, move |t, y| table.at(t, y), |y| y, |_, _| 0.0)
        .with_start(vec![y0])
        .with_constants(vmax, bound)
        .with_zero_running()
}

/// The alternative `dY = (∂_x w / w)(t, Y) dt + dW`, `Y_0 = 0`, with
/// `w(t, x) = E[h(x + W_{T−t})]` and `h = f_X / φ_T`. Needs a density.
#[derive(Debug, Clone)]
pub struct UnitVolEmbedding {
    pub model: DiffusionModel,
    pub drift: Arc<VolTable>,
}

pub fn embed_unit_vol(law: &TargetLaw, horizon: f64, table_size: usize, quad_points: usize) -> Result<UnitVolEmbedding, BassError> {
    law.pdf(0.0).ok_or(BassError::NoDensity)?;
    let (lo, hi) = match law {
        TargetLaw::Gaussian { mean, sd } => (mean - 10.0 * sd, mean + 10.0 * sd),
        _ => law.support(),
    };
    let nq = quad_points.max(3) | 1;
    let hq = (hi - lo) / (nq - 1) as f64;
    // Simpson weights times h(ξ) = f_X(ξ) / φ_T(ξ).
    let rt = horizon.sqrt();
    let nodes: Vec<(f64, f64)> = (0..nq)
        .map(|q| {
            let x = lo + hq * q as f64;
            let simpson = if q == 0 || q == nq - 1 { 1.0 } else if q % 2 == 1 { 4.0 } else { 2.0 };
            let dens = law.pdf(x).unwrap_or(0.0) / (gauss::pdf(x / rt) / rt);
            (x, simpson * hq / 3.0 * dens)
        })
        .collect();
    let n = table_size.max(3);
    let span = 6.0 * rt + lo.abs().max(hi.abs());
    let ys: Vec<f64> = (0..n).map(|i| -span + 2.0 * span * i as f64 / (n - 1) as f64).collect();
    let t_last = horizon * (1.0 - 1.0 / (4.0 * n as f64));
    let times: Vec<f64> = (0..n).map(|k| t_last * k as f64 / (n - 1) as f64).collect();
    let rows = par::map_indexed(n, |k| {
        let s2 = horizon - times[k];
        ys.iter()
            .map(|&y| {
                // Work with log-kernels relative to the largest one to avoid underflow.
                let logs: Vec<f64> = nodes.iter().map(|&(x, _)| -0.5 * (x - y) * (x - y) / s2).collect();
                let top = logs.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let (mut w, mut wx) = (0.0, 0.0);
                for (&(x, c), &l) in nodes.iter().zip(&logs) {
                    let e = c * (l - top).exp();
                    w += e;
                    wx += e * (x - y) / s2;
                }
                if w > 0.0 {
                    wx / w
                } else {
                    0.0
                }
            })
            .collect::<Vec<_>>()
    });
    let drift = Arc::new(VolTable {
        times,
        ys,
        sigma: rows.into_iter().flatten().collect(),
        reduced: 0,
    });
    let d = drift.clone();
    let model = DiffusionModel::scalar("bass_unit_vol", horizon, move |t, y| d.at(t, y), |_, _| 1.0, |y| y, |_, _| 0.0)
        .with_start(vec![0.0])
        .with_zero_running();
    Ok(UnitVolEmbedding { model, drift })
}

/// Kolmogorov–Smirnov distance between a sample and a law.
pub fn ks_distance(sample: &[f64], law: &TargetLaw) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = law.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at level 1%.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{simulate_y, SimOptions};
    use approx::assert_abs_diff_eq;

    #[test]
    fn gaussian_law_gives_identity_map() {
        let t: f64 = 2.0;
        let law = TargetLaw::gaussian(0.0, t.sqrt()).unwrap();
        let map = BassMap::new(law, t, 64).unwrap().quadrature_only();
        for x in [-2.0, 0.0, 0.7] {
            assert_abs_diff_eq!(map.h(x), x, epsilon = 1e-12);
            assert_abs_diff_eq!(map.u(0.5, x).unwrap(), x, epsilon = 1e-10);
            assert_abs_diff_eq!(map.volatility(0.5, x).unwrap().value, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn affine_gaussian_law_has_constant_volatility() {
        let law = TargetLaw::gaussian(0.3, 2.0).unwrap();
        let map = BassMap::new(law, 1.0, 64).unwrap().quadrature_only();
        assert_abs_diff_eq!(map.h(0.5), 0.3 + 2.0 * 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(map.volatility(0.2, 1.1).unwrap().value, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn two_point_map_is_a_sign() {
        let law = TargetLaw::two_point(-1.0, 1.0, 0.5).unwrap();
        let map = BassMap::new(law, 1.0, 64).unwrap();
        for w in [-3.0, -0.1, -1e-9] {
            assert_eq!(map.h(w), -1.0);
        }
        for w in [1e-9, 0.2, 4.0] {
            assert_eq!(map.h(w), 1.0);
        }
    }

    #[test]
    fn two_point_volatility_matches_sign_model() {
        let horizon = 1.0;
        let map = BassMap::new(TargetLaw::two_point(-1.0, 1.0, 0.5).unwrap(), horizon, 64).unwrap();
        for (t, y) in [(0.2, 0.0), (0.9, 0.4), (0.99, -0.7)] {
            let q = gauss::inv_cdf((y + 1.0) / 2.0);
            let expected = (2.0 / (std::f64::consts::PI * (horizon - t))).sqrt() * (-0.5 * q * q).exp();
            assert_abs_diff_eq!(map.volatility(t, y).unwrap().value, expected, epsilon = 1e-8 * expected);
        }
    }

    #[test]
    fn quadrature_agrees_with_closed_form_for_uniform() {
        let law = TargetLaw::uniform(0.0, 1.0).unwrap();
        let exact = BassMap::new(law.clone(), 1.0, 64).unwrap();
        let quad = BassMap::new(law, 1.0, 64).unwrap().quadrature_only();
        for x in [-1.0, 0.0, 0.4, 2.0] {
            assert_abs_diff_eq!(quad.u(0.3, x).unwrap(), exact.u(0.3, x).unwrap(), epsilon = 1e-8);
            assert_abs_diff_eq!(quad.ux(0.3, x).unwrap(), exact.ux(0.3, x).unwrap(), epsilon = 1e-8);
        }
    }

    #[test]
    fn inversion_round_trips() {
        let map = BassMap::new(TargetLaw::uniform(0.0, 1.0).unwrap(), 1.0, 64).unwrap();
        for x in [-2.0, -0.3, 0.0, 1.5] {
            let y = map.u(0.4, x).unwrap();
            assert_abs_diff_eq!(map.v(0.4, y).unwrap(), x, epsilon = 1e-8);
        }
        assert!(matches!(map.v(0.4, 1.0), Err(BassError::OutsideRange { .. })));
        assert!(map.u(0.5, -0.1).unwrap() < map.u(0.5, 0.1).unwrap());
    }

    #[test]
    fn near_maturity_uses_difference_quotient() {
        let map = BassMap::new(TargetLaw::uniform(0.0, 1.0).unwrap(), 1.0, 64).unwrap();
        let v = map.volatility(1.0 - 1e-6, 0.5).unwrap();
        assert!(v.reduced_accuracy);
        assert_abs_diff_eq!(v.value, gauss::pdf(0.0), epsilon = 1e-3);
    }

    #[test]
    fn table_law_interpolates_quantiles() {
        let law = TargetLaw::table(vec![0.0, 0.5, 1.0], vec![-1.0, 0.0, 3.0]).unwrap();
        assert_eq!(law.quantile(0.25).0, -0.5);
        assert_eq!(law.quantile(0.75).0, 1.5);
        assert!(law.quantile(1.5).1);
        assert_abs_diff_eq!(law.cdf(1.5), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(law.mean(), 0.5, epsilon = 1e-15);
        assert!(TargetLaw::table(vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn table_rows_round_trip() {
        let e = embed(&TargetLaw::uniform(0.0, 1.0).unwrap(), 1.0, 16, 5).unwrap();
        let rows: Vec<(f64, f64, f64)> = (0..25).map(|n| (e.table.times[n / 5], e.table.ys[n % 5], e.table.sigma[n])).collect();
        let back = VolTable::from_rows(&rows).unwrap();
        assert_eq!(back.sigma, e.table.sigma);
        assert!(VolTable::from_rows(&rows[..7]).is_err());
    }

    #[test]
    fn constant_law_gives_still_model() {
        let e = embed(&TargetLaw::Constant(0.4), 1.0, 16, 5).unwrap();
        assert_eq!(e.model.y0, vec![0.4]);
        assert!(e.table.sigma.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn embedded_gaussian_is_brownian() {
        let e = embed(&TargetLaw::gaussian(0.0, 1.0).unwrap(), 1.0, 32, 21).unwrap();
        assert_abs_diff_eq!(e.model.y0[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.model.sigma(0.3, 0.5), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn embedded_uniform_hits_its_law() {
        let law = TargetLaw::uniform(0.0, 1.0).unwrap();
        let e = embed(&law, 1.0, 64, 201).unwrap();
        let b = simulate_y(&e.model, 0.0, &e.model.y0, &SimOptions::new(200, 20_000, 9)).unwrap();
        assert!(ks_distance(&b.y_end, &law) < ks_critical_1pct(20_000));
    }

    #[test]
    fn unit_vol_embedding_of_a_gaussian() {
        // X ~ N(0.5, 0.8²) with T = 1.
        let law = TargetLaw::gaussian(0.5, 0.8).unwrap();
        let e = embed_unit_vol(&law, 1.0, 201, 2001).unwrap();
        let b = simulate_y(&e.model, 0.0, &[0.0], &SimOptions::new(400, 20_000, 4)).unwrap();
        assert!(ks_distance(&b.y_end, &law) < ks_critical_1pct(20_000));
    }
}
