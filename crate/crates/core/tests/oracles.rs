use rand::Rng;
use risk_pde::closed_forms::{cvar_field, entropic_value, EntropicMethod, MmvOptions, MmvOracle};
use risk_pde::oce::value_fn_mc;
use risk_pde::rng::path_stream;
use risk_pde::sde::{DiffusionModel, Payoff};
use risk_pde::LossSpec;

fn ou() -> DiffusionModel {
    DiffusionModel::ou(0.5, 1.0, 0.0, 1.0, Payoff::Sin, 0.0)
}

#[test]
fn entropic_pde_and_monte_carlo_agree_on_random_nodes() {
    let model = ou();
    let mut rng = path_stream(11, 0);
    for node in 0..20 {
        let s = rng.random_range(0.0..0.4);
        let y = rng.random_range(-1.0..1.0);
        let z = rng.random_range(0.2..3.0);
        let pde = entropic_value(&model, s, y, z, EntropicMethod::Pde { steps: 800, nodes: 801, half_width: 8.0 }).unwrap();
        let mc = entropic_value(&model, s, y, z, EntropicMethod::Mc { paths: 40_000, steps: 50, seed: node }).unwrap();
        // Euler bias at 50 steps is well below the statistical band.
        let tol = 3.0 * mc.stderr + 3e-3 * z;
        assert!((pde.value - mc.value).abs() <= tol, "node {node} ({s:.3}, {y:.3}, {z:.3}): pde {} mc {} tol {tol}", pde.value, mc.value);
        assert_eq!(mc.clamped, 0);
    }
}

#[test]
fn entropic_oracle_matches_oce_minimisation() {
    let model = ou();
    let loss = LossSpec::entropic();
    for (i, z) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let pde = entropic_value(&model, 0.0, 0.3, z, EntropicMethod::pde_default()).unwrap().value;
        let mc = value_fn_mc(&model, &loss, 0.0, 0.3, z, 50, 100_000, i as u64).unwrap();
        assert!((pde - mc.value).abs() <= 3.0 * mc.mc_stderr + 2e-3, "z {z}: {pde} vs {}", mc.value);
    }
}

#[test]
fn mmv_ansatz_matches_oce_minimisation_where_valid() {
    // |X − E X| ≤ 2 for a sine claim, so the quadratic branch is active for z ≥ 2.
    let model = ou();
    let oracle = MmvOracle::solve(&model, 0.0, &MmvOptions::default()).unwrap();
    let loss = LossSpec::mmv();
    for (i, (y, z)) in [(-0.5, 2.0), (0.0, 2.5), (0.7, 3.0)].into_iter().enumerate() {
        let v = oracle.value(0.0, y, z).unwrap();
        let mc = value_fn_mc(&model, &loss, 0.0, y, z, 50, 100_000, 100 + i as u64).unwrap();
        assert!((v - mc.value).abs() <= 3.0 * mc.mc_stderr + 2e-3, "({y}, {z}): {v} vs {}", mc.value);
    }
}

#[test]
fn cvar_field_is_z_times_cvar_and_its_slope_is_var() {
    let model = DiffusionModel::brownian(1.0, 0.0, 1.0, Payoff::Identity, 0.0);
    let f = cvar_field(&model, 0.25, 0.0, 0.0, 2.0, 1, 200_000, 3).unwrap();
    // Gaussian: VaR_u = Φ⁻¹(1 − u), CVaR_u = φ(Φ⁻¹(1 − u)) / u at u = αz = 0.5.
    let q = risk_pde::gauss::inv_cdf(0.5);
    let cvar = risk_pde::gauss::pdf(q) / 0.5;
    assert!((f.value - 2.0 * cvar).abs() < 1e-2, "{}", f.value);
    assert!((f.var_z - q).abs() < 1e-2, "{}", f.var_z);
    assert!((f.homogeneous - f.value).abs() < 1e-6);
    assert!((f.quadrature - f.value).abs() < 1e-3);
}
