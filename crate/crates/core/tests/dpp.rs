use std::sync::Arc;

use risk_pde::closed_forms::{dpp_check, DppOptions, InnerValue, MmvOptions, MmvOracle};
use risk_pde::sde::{DiffusionModel, Payoff};
use risk_pde::{ControlSpec, LossSpec};

#[test]
fn mmv_dynamic_programming_bound_holds() {
    let model = DiffusionModel::ou(1.0, 1.0, 0.0, 1.0, Payoff::Sin, 0.0);
    let oracle = MmvOracle::solve(&model, 0.0, &MmvOptions { steps: 800, nodes: 801, ..MmvOptions::default() }).unwrap();
    let inner = InnerValue::Callback(Arc::new(move |t, y, z| oracle.value(t, y, z).unwrap_or(f64::NAN)));
    let controls: Vec<ControlSpec> = [-0.5, 0.0, 0.3, 1.0].into_iter().map(ControlSpec::constant).collect();
    let opts = DppOptions { theta: 0.5, outer_paths: 8000, steps: 40, seed: 1, ..DppOptions::default() };
    let r = dpp_check(&model, &LossSpec::mmv(), 0.0, 0.0, 2.5, &controls, &inner, &opts).unwrap();
    assert!(r.inequality_holds(), "{r:?}");
    assert!(r.gap > -0.05 && r.gap < 0.2, "{}", r.gap);
}

#[test]
fn small_inner_budget_widens_the_tolerance() {
    let model = DiffusionModel::brownian(1.0, 0.0, 1.0, Payoff::Tanh, 0.0);
    let inner = InnerValue::McShared { paths: 500, steps: 10, seed: 3 };
    let opts = DppOptions { theta: 0.5, outer_paths: 300, steps: 10, seed: 2, ..DppOptions::default() };
    let r = dpp_check(&model, &LossSpec::entropic(), 0.0, 0.0, 1.0, &[ControlSpec::constant(0.0)], &inner, &opts).unwrap();
    assert!(r.widened);
    assert!(r.inner_bias > 0.0);
}
