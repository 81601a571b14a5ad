//! Standard normal helpers and Gauss–Hermite quadrature.

use std::f64::consts::PI;

use statrs::distribution::{ContinuousCDF, Normal};

fn standard() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// `Φ(x)`
pub fn cdf(x: f64) -> f64 {
    standard().cdf(x)
}

/// `Φ⁻¹(p)`; `±∞` at `p ∈ {0, 1}`.
pub fn inv_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        standard().inverse_cdf(p)
    }
}

/// `φ(x)`
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Nodes and weights for `∫ e^{−x²} h(x) dx ≈ Σ wᵢ h(xᵢ)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Rule of the given order, by Newton iteration on the orthonormal
    /// Hermite recurrence (Golub–Welsch initial guesses).
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let pim4 = PI.powf(-0.25);
        let m = n.div_ceil(2);
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = (j + 1) as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * n as f64).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        // Ascending order reads more naturally.
        nodes.reverse();
        weights.reverse();
        GaussHermite { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// `E[h(mean + sd·ξ)]` for `ξ ~ N(0, 1)`.
    pub fn expect<F: Fn(f64) -> f64>(&self, mean: f64, sd: f64, h: F) -> f64 {
        let scale = std::f64::consts::SQRT_2 * sd;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * h(mean + scale * x))
            .sum::<f64>()
            / PI.sqrt()
    }

    /// `E[h(mean + sd·ξ)·ξ]`, the Gaussian integration-by-parts form of a derivative in `mean` (times `sd`).
    pub fn expect_times_xi<F: Fn(f64) -> f64>(&self, mean: f64, sd: f64, h: F) -> f64 {
        let scale = std::f64::consts::SQRT_2 * sd;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * std::f64::consts::SQRT_2 * x * h(mean + scale * x))
            .sum::<f64>()
            / PI.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cdf_and_inverse_round_trip() {
        for p in [1e-10, 0.01, 0.25, 0.5, 0.9, 1.0 - 1e-9] {
            assert_abs_diff_eq!(cdf(inv_cdf(p)), p, epsilon = 1e-10 * p.min(1.0 - p).max(1e-3));
        }
        assert_abs_diff_eq!(inv_cdf(0.975), 1.959963984540054, epsilon = 1e-12);
    }

    #[test]
    fn weights_sum_to_sqrt_pi() {
        for n in [1, 2, 5, 20, 64, 100] {
            let gh = GaussHermite::new(n);
            let s: f64 = gh.weights.iter().sum();
            assert_abs_diff_eq!(s, PI.sqrt(), epsilon = 1e-12);
            assert!(gh.nodes.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn gaussian_moments_are_exact() {
        let gh = GaussHermite::new(20);
        assert_abs_diff_eq!(gh.expect(0.0, 1.0, |x| x * x), 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(gh.expect(0.0, 1.0, |x| x.powi(4)), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gh.expect(1.0, 2.0, |x| x), 1.0, epsilon = 1e-13);
        // E[e^{ξ}] = e^{1/2}
        assert_abs_diff_eq!(gh.expect(0.0, 1.0, f64::exp), 0.5f64.exp(), epsilon = 1e-12);
        // Stein: E[h(ξ)ξ] = E[h'(ξ)]
        assert_abs_diff_eq!(gh.expect_times_xi(0.0, 1.0, |x| x.powi(3)), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn two_point_rule_matches_known_nodes() {
        let gh = GaussHermite::new(2);
        assert_abs_diff_eq!(gh.nodes[1], 0.5f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(gh.weights[0], PI.sqrt() / 2.0, epsilon = 1e-14);
    }
}
