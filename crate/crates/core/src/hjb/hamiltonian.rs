//! The truncated Hamiltonian `H^n` with its inner maximisation in closed form.

use crate::sde::DiffusionModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianValue {
    /// `b V_y + ½σ² V_yy + z g + M_n`
    pub value: f64,
    /// `M_n = max_{|β| ≤ n} ½ z² β² V_zz + z σ V_yz β`
    pub control_term: f64,
    /// A maximising `β`.
    pub beta: f64,
}

/// `max_{|β| ≤ n} ½ z² β² v_zz + z σ v_yz β` and its maximiser.
///
/// For `v_zz < 0` the unconstrained vertex `−σ v_yz/(z v_zz)` is clamped to
/// `[−n, n]`; otherwise the maximum sits at `±n` (the sign of `σ v_yz`, or `+n`
/// on a tie), except that `v_zz = v_yz = 0` picks `β = 0`.
pub fn control_max(z: f64, sigma: f64, v_yz: f64, v_zz: f64, n: f64) -> (f64, f64) {
    let quad = 0.5 * z * z * v_zz;
    let lin = z * sigma * v_yz;
    let eval = |beta: f64| quad * beta * beta + lin * beta;
    if v_zz < 0.0 {
        let beta = (-lin / (2.0 * quad)).clamp(-n, n);
        (eval(beta), beta)
    } else if quad == 0.0 && lin == 0.0 {
        (0.0, 0.0)
    } else {
        let beta = if lin >= 0.0 { n } else { -n };
        (eval(beta), beta)
    }
}

/// `H^n` at `(t, y, z)` for a scalar model, given the spatial derivatives of `V`.
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian_n(
    model: &DiffusionModel,
    t: f64,
    y: f64,
    z: f64,
    v_y: f64,
    v_yy: f64,
    v_yz: f64,
    v_zz: f64,
    n: f64,
) -> HamiltonianValue {
    let sigma = model.sigma(t, y);
    let (m, beta) = control_max(z, sigma, v_yz, v_zz, n);
    HamiltonianValue {
        value: model.b(t, y) * v_y + 0.5 * sigma * sigma * v_yy + z * model.g(t, y) + m,
        control_term: m,
        beta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn concave_without_cross_term() {
        assert_eq!(control_max(1.3, 1.0, 0.0, -2.0, 5.0), (0.0, 0.0));
    }

    #[test]
    fn interior_vertex() {
        let (m, b) = control_max(1.0, 1.0, 1.0, -1.0, 100.0);
        assert_abs_diff_eq!(m, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn convex_case_hits_the_cap() {
        let (m, b) = control_max(1.0, 1.0, 0.0, 1.0, 2.0);
        assert_abs_diff_eq!(m, 2.0, epsilon = 1e-15);
        assert_eq!(b.abs(), 2.0);
    }

    #[test]
    fn clamped_vertex() {
        // Unconstrained maximiser is 3; capped at 1.
        let (m, b) = control_max(1.0, 1.0, 3.0, -1.0, 1.0);
        assert_eq!(b, 1.0);
        assert_abs_diff_eq!(m, -0.5 + 3.0, epsilon = 1e-15);
    }

    #[test]
    fn full_hamiltonian_adds_linear_terms() {
        let model = DiffusionModel::scalar("m", 1.0, |_, _| 2.0, |_, _| 1.0, |y| y, |_, _| 0.5);
        let h = hamiltonian_n(&model, 0.0, 0.0, 1.0, 1.0, 4.0, 1.0, -1.0, 10.0);
        assert_abs_diff_eq!(h.value, 2.0 + 2.0 + 0.5 + 0.5, epsilon = 1e-14);
    }
}
