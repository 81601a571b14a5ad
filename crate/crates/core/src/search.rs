//! Golden-section search for unimodal scalar functions.
//!
//! Used for the cash-allocation minimisation, the numerical convex conjugate
//! and the envelope refinement. No derivatives are taken anywhere, so kinked
//! objectives (the CVaR loss) are handled the same as smooth ones.

/// `(√5 − 1) / 2`
pub const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldenResult {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Minimises `f` on `[lo, hi]` until the bracket is narrower than `tol`.
///
/// `f` is assumed unimodal on the bracket. The best point seen (including the
/// two endpoints) is returned, so a monotone `f` reports the better endpoint.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> GoldenResult {
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut evals = 2;
    let tol = tol.max(f64::EPSILON * (1.0 + a.abs().max(b.abs())));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        evals += 1;
        if evals > 10_000 {
            break;
        }
    }
    let fa = f(a);
    let fb = f(b);
    evals += 2;
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    if fa < best.1 {
        best = (a, fa);
    }
    if fb < best.1 {
        best = (b, fb);
    }
    GoldenResult {
        x: best.0,
        value: best.1,
        evaluations: evals,
    }
}

/// Maximises `f` on `[lo, hi]`; see [`golden_min`].
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> GoldenResult {
    let r = golden_min(|x| -f(x), lo, hi, tol);
    GoldenResult {
        value: -r.value,
        ..r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_smooth_minimum() {
        let r = golden_min(|x| (x - 1.3).powi(2) + 2.0, -10.0, 10.0, 1e-10);
        assert!((r.x - 1.3).abs() < 1e-7);
        assert!((r.value - 2.0).abs() < 1e-14);
    }

    #[test]
    fn finds_kink_minimum() {
        let r = golden_min(|x| (x - 0.25).abs(), -3.0, 5.0, 1e-12);
        assert!((r.x - 0.25).abs() < 1e-11);
    }

    #[test]
    fn monotone_objective_reports_endpoint() {
        let r = golden_min(|x| x, -2.0, 3.0, 1e-9);
        assert_eq!(r.x, -2.0);
        let r = golden_max(|x| x, -2.0, 3.0, 1e-9);
        assert_eq!(r.x, 3.0);
        assert_eq!(r.value, 3.0);
    }
}
