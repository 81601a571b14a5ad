//! Loss functions and their convex conjugates.
//!
//! A loss `l` is convex, nondecreasing, `l(0) = 0`, normalised so that its
//! conjugate `l*(z) = sup_x (xz − l(x))` vanishes at `z = 1`, and coercive in
//! the sense `l(x) > x` for large `|x|`. The conjugate is extended-real valued
//! and is carried as an [`ExtReal`].

use std::fmt;
use std::ops::Add;
use std::sync::Arc;

use thiserror::Error;

use crate::search::INV_PHI;

/// A real number or `+∞`.
///
/// Arithmetic saturates: `x + ∞ = ∞`, `min(x, ∞) = x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::PosInf => None,
        }
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        match (self, other) {
            (ExtReal::PosInf, o) | (o, ExtReal::PosInf) => o,
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a.min(b)),
        }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        match (self, other) {
            (ExtReal::PosInf, _) | (_, ExtReal::PosInf) => ExtReal::PosInf,
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a.max(b)),
        }
    }

    /// `self ≤ other + tol`, with `∞ ≤ ∞`.
    pub fn le_tol(self, other: ExtReal, tol: f64) -> bool {
        match (self, other) {
            (_, ExtReal::PosInf) => true,
            (ExtReal::PosInf, ExtReal::Finite(_)) => false,
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a <= b + tol,
        }
    }
}

impl Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::PosInf,
        }
    }
}

impl Add<f64> for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: f64) -> ExtReal {
        self + ExtReal::Finite(rhs)
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        use std::cmp::Ordering;
        match (self, other) {
            (ExtReal::PosInf, ExtReal::PosInf) => Some(Ordering::Equal),
            (ExtReal::PosInf, _) => Some(Ordering::Greater),
            (_, ExtReal::PosInf) => Some(Ordering::Less),
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.partial_cmp(b),
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => f.write_str("+inf"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("CVaR level alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("objective x*z - l(x) is not concave near x = {at} (excess {excess:.3e}); the loss is not convex")]
    NonConcaveObjective { at: f64, excess: f64 },
    #[error("invalid search bracket [{0}, {1}]")]
    InvalidBracket(f64, f64),
    #[error("loss `{name}` fails validation: {reason}")]
    Invalid { name: String, reason: String },
}

/// Which named family a [`LossSpec`] belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    /// `l(x) = eˣ − 1`
    Entropic,
    /// `l(x) = x⁺ / α`
    CVaR { alpha: f64 },
    /// `l(x) = ((1 + x)⁺² − 1) / 2`
    MonotoneMeanVariance,
    /// User-supplied loss; its conjugate is computed numerically unless given.
    Custom,
}

type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;
type ConjugateFn = dyn Fn(f64) -> ExtReal + Send + Sync;

struct CustomLoss {
    name: String,
    loss: Box<ScalarFn>,
    conjugate: Option<Box<ConjugateFn>>,
}

/// A loss function together with its conjugate and the conjugate's domain.
#[derive(Clone)]
pub struct LossSpec {
    kind: LossKind,
    custom: Option<Arc<CustomLoss>>,
    dom_lo: f64,
    dom_hi: ExtReal,
}

impl fmt::Debug for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LossSpec")
            .field("kind", &self.kind)
            .field("name", &self.name())
            .field("dom_lo", &self.dom_lo)
            .field("dom_hi", &self.dom_hi)
            .finish()
    }
}

impl LossSpec {
    /// Entropic loss `eˣ − 1`, conjugate `z log z − z + 1` on `[0, ∞)`.
    pub fn entropic() -> Self {
        LossSpec {
            kind: LossKind::Entropic,
            custom: None,
            dom_lo: 0.0,
            dom_hi: ExtReal::PosInf,
        }
    }

    /// CVaR loss `x⁺/α`; its conjugate is the indicator of `[0, 1/α]`.
    pub fn cvar(alpha: f64) -> Result<Self, LossError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(LossError::InvalidAlpha(alpha));
        }
        Ok(LossSpec {
            kind: LossKind::CVaR { alpha },
            custom: None,
            dom_lo: 0.0,
            dom_hi: ExtReal::Finite(1.0 / alpha),
        })
    }

    /// Monotone mean-variance loss, conjugate `(z − 1)²/2` on `[0, ∞)`.
    pub fn mmv() -> Self {
        LossSpec {
            kind: LossKind::MonotoneMeanVariance,
            custom: None,
            dom_lo: 0.0,
            dom_hi: ExtReal::PosInf,
        }
    }

    /// A user-supplied loss with a numerically computed conjugate.
    ///
    /// The candidate is validated (convexity, monotonicity, normalisation and
    /// coercivity on a sampled grid) before it is accepted.
    pub fn custom<F>(name: &str, loss: F, dom_lo: f64, dom_hi: ExtReal) -> Result<Self, LossError>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::build_custom(name, Box::new(loss), None, dom_lo, dom_hi)
    }

    /// A user-supplied loss with a known conjugate.
    pub fn custom_with_conjugate<F, G>(
        name: &str,
        loss: F,
        conjugate: G,
        dom_lo: f64,
        dom_hi: ExtReal,
    ) -> Result<Self, LossError>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> ExtReal + Send + Sync + 'static,
    {
        Self::build_custom(name, Box::new(loss), Some(Box::new(conjugate)), dom_lo, dom_hi)
    }

    fn build_custom(
        name: &str,
        loss: Box<ScalarFn>,
        conjugate: Option<Box<ConjugateFn>>,
        dom_lo: f64,
        dom_hi: ExtReal,
    ) -> Result<Self, LossError> {
        let spec = LossSpec {
            kind: LossKind::Custom,
            custom: Some(Arc::new(CustomLoss {
                name: name.to_string(),
                loss,
                conjugate,
            })),
            dom_lo,
            dom_hi,
        };
        let report = spec.validate(&ValidationOptions::default());
        match report.first_failure() {
            None => Ok(spec),
            Some(reason) => Err(LossError::Invalid {
                name: name.to_string(),
                reason: reason.to_string(),
            }),
        }
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn name(&self) -> String {
        match self.kind {
            LossKind::Entropic => "entropic".into(),
            LossKind::CVaR { alpha } => format!("cvar({alpha})"),
            LossKind::MonotoneMeanVariance => "mmv".into(),
            LossKind::Custom => self
                .custom
                .as_ref()
                .map(|c| c.name.clone())
                .unwrap_or_else(|| "custom".into()),
        }
    }

    /// CVaR level, if this is a CVaR loss.
    pub fn alpha(&self) -> Option<f64> {
        match self.kind {
            LossKind::CVaR { alpha } => Some(alpha),
            _ => None,
        }
    }

    /// `l(x)`
    #[inline]
    pub fn loss(&self, x: f64) -> f64 {
        match self.kind {
            LossKind::Entropic => x.exp_m1(),
            LossKind::CVaR { alpha } => x.max(0.0) / alpha,
            LossKind::MonotoneMeanVariance => {
                let p = (1.0 + x).max(0.0);
                0.5 * (p * p - 1.0)
            }
            LossKind::Custom => (self.custom.as_ref().expect("custom loss").loss)(x),
        }
    }

    /// `l*(z)`; `+∞` outside the domain.
    pub fn conjugate(&self, z: f64) -> ExtReal {
        if z < 0.0 || z.is_nan() {
            return ExtReal::PosInf;
        }
        match self.kind {
            LossKind::Entropic => {
                if z == 0.0 {
                    ExtReal::Finite(1.0)
                } else {
                    ExtReal::Finite(z * z.ln() - z + 1.0)
                }
            }
            LossKind::CVaR { alpha } => {
                if z <= 1.0 / alpha {
                    ExtReal::Finite(0.0)
                } else {
                    ExtReal::PosInf
                }
            }
            LossKind::MonotoneMeanVariance => ExtReal::Finite(0.5 * (z - 1.0) * (z - 1.0)),
            LossKind::Custom => {
                let c = self.custom.as_ref().expect("custom loss");
                if let Some(conj) = &c.conjugate {
                    return conj(z);
                }
                if z < self.dom_lo || !ExtReal::Finite(z).le_tol(self.dom_hi, 0.0) {
                    return ExtReal::PosInf;
                }
                numeric_conjugate_auto(&|x| (c.loss)(x), z, &ConjugateOptions::default())
                    .unwrap_or(ExtReal::PosInf)
            }
        }
    }

    /// `l*(z)` as a plain number, `None` outside the domain.
    pub fn conjugate_finite(&self, z: f64) -> Option<f64> {
        self.conjugate(z).finite()
    }

    pub fn dom_lo(&self) -> f64 {
        self.dom_lo
    }

    pub fn dom_hi(&self) -> ExtReal {
        self.dom_hi
    }

    /// Whether `z` lies in the interior of `dom(l*)`.
    pub fn in_interior(&self, z: f64) -> bool {
        z > self.dom_lo
            && match self.dom_hi {
                ExtReal::Finite(h) => z < h,
                ExtReal::PosInf => z.is_finite(),
            }
    }

    /// `l(x) + l*(z) − xz`, which Fenchel–Young makes nonnegative.
    pub fn fenchel_young_gap(&self, x: f64, z: f64) -> ExtReal {
        ExtReal::Finite(self.loss(x)) + self.conjugate(z) + (-x * z)
    }

    /// Sampled checks of the loss axioms and of conditions (N) and (C).
    pub fn validate(&self, opts: &ValidationOptions) -> ValidationReport {
        let mut report = ValidationReport::default();
        let xs: Vec<f64> = (0..=opts.grid_points)
            .map(|i| -opts.grid_half_width + 2.0 * opts.grid_half_width * i as f64 / opts.grid_points as f64)
            .collect();
        let ls: Vec<f64> = xs.iter().map(|&x| self.loss(x)).collect();

        report.normalised = self.loss(0.0).abs() <= 1e-12;
        report.nondecreasing = ls.windows(2).all(|w| w[1] >= w[0] - opts.tol * (1.0 + w[0].abs()));
        report.convex = xs.windows(2).all(|w| {
            let mid = self.loss(0.5 * (w[0] + w[1]));
            let avg = 0.5 * (self.loss(w[0]) + self.loss(w[1]));
            mid <= avg + opts.tol * (1.0 + avg.abs())
        });
        report.condition_n = match self.conjugate(1.0) {
            ExtReal::Finite(v) => v.abs() <= 1e-8,
            ExtReal::PosInf => false,
        };
        let xc = opts.coercivity_witness;
        report.condition_c = self.loss(xc) > xc && self.loss(-xc) > -xc;

        let zs = self.sample_domain(opts.conjugate_samples);
        report.conjugate_nonnegative = zs.iter().all(|&z| match self.conjugate(z) {
            ExtReal::Finite(v) => v >= -1e-9,
            ExtReal::PosInf => true,
        });
        report.fenchel_young = zs.iter().all(|&z| {
            xs.iter().step_by(8).all(|&x| match self.fenchel_young_gap(x, z) {
                ExtReal::Finite(g) => g >= -opts.tol * (1.0 + (x * z).abs()),
                ExtReal::PosInf => true,
            })
        });
        report
    }

    /// `count` points spread over the interior of `dom(l*)` (capped at 10 when unbounded).
    pub fn sample_domain(&self, count: usize) -> Vec<f64> {
        let hi = match self.dom_hi {
            ExtReal::Finite(h) => h,
            ExtReal::PosInf => self.dom_lo + 10.0,
        };
        let width = hi - self.dom_lo;
        (1..=count)
            .map(|i| self.dom_lo + width * i as f64 / (count + 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ValidationOptions {
    /// Sampled `x` range is `[−w, w]`.
    pub grid_half_width: f64,
    pub grid_points: usize,
    pub conjugate_samples: usize,
    /// `X_C` in condition (C).
    pub coercivity_witness: f64,
    pub tol: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            grid_half_width: 20.0,
            grid_points: 400,
            conjugate_samples: 25,
            coercivity_witness: 10.0,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub normalised: bool,
    pub nondecreasing: bool,
    pub convex: bool,
    pub condition_n: bool,
    pub condition_c: bool,
    pub conjugate_nonnegative: bool,
    pub fenchel_young: bool,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.first_failure().is_none()
    }

    pub fn first_failure(&self) -> Option<&'static str> {
        [
            (self.normalised, "l(0) != 0"),
            (self.nondecreasing, "l is not nondecreasing"),
            (self.convex, "l is not convex"),
            (self.condition_n, "l*(1) != 0"),
            (self.condition_c, "l(x) > x fails at the coercivity witness"),
            (self.conjugate_nonnegative, "l* takes negative values"),
            (self.fenchel_young, "Fenchel-Young inequality violated"),
        ]
        .into_iter()
        .find(|(ok, _)| !ok)
        .map(|(_, why)| why)
    }
}

#[derive(Debug, Clone)]
pub struct ConjugateOptions {
    /// Golden-section stops when the bracket is this wide (relative to `1 + |x|`).
    pub x_tol: f64,
    /// The objective counts as still increasing at the upper end when its slope exceeds this.
    pub slope_tol: f64,
    /// Allowed violation of concavity before the loss is declared non-convex.
    pub concavity_tol: f64,
    /// Initial bracket for [`numeric_conjugate_auto`].
    pub initial_bracket: (f64, f64),
    pub max_expansions: usize,
}

impl Default for ConjugateOptions {
    fn default() -> Self {
        ConjugateOptions {
            x_tol: 1e-11,
            slope_tol: 1e-7,
            concavity_tol: 1e-9,
            initial_bracket: (-50.0, 50.0),
            max_expansions: 16,
        }
    }
}

/// Outcome of a bracketed conjugate evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
struct BracketedSup {
    value: f64,
    argmax: f64,
    rising_at_hi: bool,
    falling_at_lo: bool,
}

fn bracketed_sup(
    l: &dyn Fn(f64) -> f64,
    z: f64,
    lo: f64,
    hi: f64,
    opts: &ConjugateOptions,
) -> Result<BracketedSup, LossError> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(LossError::InvalidBracket(lo, hi));
    }
    let phi = |x: f64| x * z - l(x);
    let concave_check = |pts: &[(f64, f64); 4]| -> Result<(), LossError> {
        let s1 = (pts[1].1 - pts[0].1) / (pts[1].0 - pts[0].0);
        let s2 = (pts[2].1 - pts[1].1) / (pts[2].0 - pts[1].0);
        let s3 = (pts[3].1 - pts[2].1) / (pts[3].0 - pts[2].0);
        let scale = 1.0 + s1.abs().max(s3.abs());
        let fmax = pts.iter().fold(1.0f64, |m, p| m.max(p.1.abs()));
        let gap = (pts[1].0 - pts[0].0)
            .min(pts[2].0 - pts[1].0)
            .min(pts[3].0 - pts[2].0);
        let roundoff = 8.0 * f64::EPSILON * fmax / gap;
        let excess = (s2 - s1).max(s3 - s2);
        if excess > opts.concavity_tol * scale + roundoff {
            return Err(LossError::NonConcaveObjective { at: pts[1].0, excess });
        }
        Ok(())
    };

    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (phi(a), phi(b));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = phi(c);
    let mut fd = phi(d);
    let mut iters = 0;
    while b - a > opts.x_tol * (1.0 + a.abs().max(b.abs())) && iters < 400 {
        concave_check(&[(a, fa), (c, fc), (d, fd), (b, fb)])?;
        if fc >= fd {
            b = d;
            fb = fd;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = phi(c);
        } else {
            a = c;
            fa = fc;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = phi(d);
        }
        iters += 1;
    }
    let (argmax, value) = [(a, fa), (c, fc), (d, fd), (b, fb)]
        .into_iter()
        .fold((a, f64::NEG_INFINITY), |best, p| if p.1 > best.1 { p } else { best });

    let width = hi - lo;
    let h = 1e-6 * width.max(1.0);
    let slope_hi = (phi(hi) - phi(hi - h)) / h;
    let slope_lo = (phi(lo + h) - phi(lo)) / h;
    let near_hi = hi - argmax <= 1e-6 * width;
    let near_lo = argmax - lo <= 1e-6 * width;
    Ok(BracketedSup {
        value,
        argmax,
        rising_at_hi: near_hi && slope_hi > opts.slope_tol,
        falling_at_lo: near_lo && slope_lo < -opts.slope_tol,
    })
}

/// `sup_{x ∈ bracket} (xz − l(x))` by golden-section maximisation.
///
/// Returns `+∞` when the objective is still increasing at the upper end of the
/// bracket (the supremum escapes to the right). A failed concavity check on
/// the probed points is reported as [`LossError::NonConcaveObjective`].
pub fn numeric_conjugate(
    l: &dyn Fn(f64) -> f64,
    z: f64,
    bracket: (f64, f64),
    opts: &ConjugateOptions,
) -> Result<ExtReal, LossError> {
    let r = bracketed_sup(l, z, bracket.0, bracket.1, opts)?;
    if r.rising_at_hi {
        Ok(ExtReal::PosInf)
    } else {
        Ok(ExtReal::Finite(r.value))
    }
}

/// [`numeric_conjugate`] with the bracket grown ×2 on whichever side the
/// maximiser sits against, until the maximum is interior (or the objective
/// flattens out) or `max_expansions` is exhausted, in which case `+∞`.
pub fn numeric_conjugate_auto(
    l: &dyn Fn(f64) -> f64,
    z: f64,
    opts: &ConjugateOptions,
) -> Result<ExtReal, LossError> {
    let (mut lo, mut hi) = opts.initial_bracket;
    for _ in 0..=opts.max_expansions {
        let r = bracketed_sup(l, z, lo, hi, opts)?;
        if !r.rising_at_hi && !r.falling_at_lo {
            return Ok(ExtReal::Finite(r.value));
        }
        if r.rising_at_hi {
            hi *= 2.0;
        }
        if r.falling_at_lo {
            lo *= 2.0;
        }
        let _ = r.argmax;
    }
    Ok(ExtReal::PosInf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ext_real_saturates() {
        let a = ExtReal::Finite(2.0);
        assert_eq!(a + ExtReal::PosInf, ExtReal::PosInf);
        assert_eq!(a.min(ExtReal::PosInf), a);
        assert_eq!(a + 1.5, ExtReal::Finite(3.5));
        assert!(a < ExtReal::PosInf);
        assert!(ExtReal::PosInf.le_tol(ExtReal::PosInf, 0.0));
        assert!(!ExtReal::PosInf.le_tol(a, 1e9));
    }

    #[test]
    fn entropic_examples() {
        let l = LossSpec::entropic();
        assert_eq!(l.conjugate(1.0), ExtReal::Finite(0.0));
        assert_eq!(l.loss(0.0), 0.0);
        let want = 2.0 * 2f64.ln() - 1.0;
        assert_abs_diff_eq!(l.conjugate_finite(2.0).unwrap(), want, epsilon = 1e-15);
        assert_abs_diff_eq!(want, 0.386294, epsilon = 1e-6);
        assert_eq!(l.conjugate(0.0), ExtReal::Finite(1.0));
        assert_eq!(l.conjugate(-0.1), ExtReal::PosInf);
    }

    #[test]
    fn cvar_examples() {
        let l = LossSpec::cvar(0.5).unwrap();
        for z in [0.0, 0.3, 1.0, 1.7, 2.0] {
            assert_eq!(l.conjugate(z), ExtReal::Finite(0.0));
        }
        assert_eq!(l.conjugate(2.0001), ExtReal::PosInf);
        assert_eq!(l.loss(-3.0), 0.0);
        assert_abs_diff_eq!(LossSpec::cvar(0.1).unwrap().loss(2.0), 20.0, epsilon = 1e-12);
        assert_eq!(l.dom_hi(), ExtReal::Finite(2.0));
    }

    #[test]
    fn cvar_rejects_bad_alpha() {
        for a in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(matches!(LossSpec::cvar(a), Err(LossError::InvalidAlpha(_))));
        }
    }

    #[test]
    fn mmv_examples() {
        let l = LossSpec::mmv();
        assert_eq!(l.conjugate(1.0), ExtReal::Finite(0.0));
        assert_eq!(l.conjugate(3.0), ExtReal::Finite(2.0));
        assert_abs_diff_eq!(l.loss(-2.0), -0.5, epsilon = 1e-15);
    }

    #[test]
    fn numeric_conjugate_examples() {
        let opts = ConjugateOptions::default();
        let ent = LossSpec::entropic();
        let v = numeric_conjugate(&|x| ent.loss(x), 1.0, (-50.0, 50.0), &opts).unwrap();
        assert_abs_diff_eq!(v.finite().unwrap(), 0.0, epsilon = 1e-8);

        let mmv = LossSpec::mmv();
        let v = numeric_conjugate(&|x| mmv.loss(x), 3.0, (-10.0, 10.0), &opts).unwrap();
        assert_abs_diff_eq!(v.finite().unwrap(), 2.0, epsilon = 1e-6);

        let cvar = LossSpec::cvar(0.5).unwrap();
        let v = numeric_conjugate(&|x| cvar.loss(x), 3.0, (-10.0, 10.0), &opts).unwrap();
        assert_eq!(v, ExtReal::PosInf);
    }

    #[test]
    fn numeric_conjugate_flags_nonconvex_loss() {
        let wavy = |x: f64| x + 0.5 * (3.0 * x).sin();
        let r = numeric_conjugate(&wavy, 1.0, (-10.0, 10.0), &ConjugateOptions::default());
        assert!(matches!(r, Err(LossError::NonConcaveObjective { .. })), "{r:?}");
    }

    #[test]
    fn auto_bracket_handles_boundary_of_domain() {
        let opts = ConjugateOptions::default();
        let ent = LossSpec::entropic();
        // l*(0) = 1 is approached as x -> -inf.
        let v = numeric_conjugate_auto(&|x| ent.loss(x), 0.0, &opts).unwrap();
        assert_abs_diff_eq!(v.finite().unwrap(), 1.0, epsilon = 1e-9);
        let cvar = LossSpec::cvar(0.25).unwrap();
        let v = numeric_conjugate_auto(&|x| cvar.loss(x), 4.5, &opts).unwrap();
        assert_eq!(v, ExtReal::PosInf);
        let v = numeric_conjugate_auto(&|x| cvar.loss(x), 4.0, &opts).unwrap();
        assert_abs_diff_eq!(v.finite().unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn named_losses_validate() {
        let opts = ValidationOptions::default();
        for l in [LossSpec::entropic(), LossSpec::cvar(0.1).unwrap(), LossSpec::mmv()] {
            let r = l.validate(&opts);
            assert!(r.is_valid(), "{}: {:?}", l.name(), r.first_failure());
        }
    }

    #[test]
    fn custom_loss_gets_numeric_conjugate() {
        // Quadratic-exponential blend; convex, increasing, l(0) = 0, l'(0) = 1.
        let l = LossSpec::custom("blend", |x: f64| 0.5 * x.exp_m1() + 0.5 * (x + 0.5 * x * x.max(0.0)), 0.0, ExtReal::PosInf)
            .unwrap();
        assert_abs_diff_eq!(l.conjugate_finite(1.0).unwrap(), 0.0, epsilon = 1e-8);
        assert_eq!(l.kind(), LossKind::Custom);
    }

    #[test]
    fn custom_rejects_risk_neutral_loss() {
        // l(x) = x violates condition (C).
        let r = LossSpec::custom("linear", |x| x, 1.0, ExtReal::Finite(1.0));
        assert!(matches!(r, Err(LossError::Invalid { .. })));
    }
}
