//! Builds models, losses and solver settings from a resolved [`Config`].

use std::path::Path;
use std::sync::Arc;

use risk_pde::bass::{vol_table_model, VolTable};
use risk_pde::closed_forms::{EntropicOracle, MmvOptions, MmvOracle};
use risk_pde::hjb::{BoundaryPolicy, SolveConfig};
use risk_pde::{DiffusionModel, LossKind, LossSpec, Payoff};

use crate::config::{Config, ConfigError};
use crate::error::CliError;

pub fn model(c: &Config) -> Result<DiffusionModel, CliError> {
    let horizon = c.positive("model.horizon")?;
    let payoff = Payoff::parse(c.str("model.payoff")).ok_or_else(|| bad(c, "model.payoff"))?;
    let g = c.f64("model.running")?;
    let kind = c.choice("model.kind", &["brownian", "ou", "gbm", "constant", "sign", "vol_table"])?;
    let mut m = match kind {
        "brownian" => DiffusionModel::brownian(horizon, c.f64("model.mu")?, c.f64("model.sigma")?, payoff, g),
        "ou" => DiffusionModel::ou(horizon, c.f64("model.kappa")?, c.f64("model.mean")?, c.f64("model.sigma")?, payoff, g),
        "gbm" => DiffusionModel::gbm(horizon, c.f64("model.mu")?, c.f64("model.sigma")?, payoff, g),
        "constant" => DiffusionModel::constant(horizon, payoff, g),
        "sign" => DiffusionModel::sign_example(horizon, c.f64("model.center")?),
        _ => {
            c.require("model.vol_table", "model.kind = vol_table reads its volatility surface from this file")?;
            let table = read_vol_table(Path::new(c.str("model.vol_table")))?;
            let y0 = c.opt_f64("model.y0")?.unwrap_or(0.0);
            vol_table_model(Arc::new(table), horizon, y0, f64::INFINITY)
        }
    };
    if let Some(y0) = c.opt_f64("model.y0")? {
        m = m.with_start(vec![y0]);
    }
    if g == 0.0 {
        m = m.with_zero_running();
    }
    Ok(m)
}

fn bad(c: &Config, key: &str) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        value: c.str(key).to_string(),
        expected: "a value listed for this key (see `risk-pde check --help`)".to_string(),
    }
}

pub fn read_vol_table(path: &Path) -> Result<VolTable, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in reader.deserialize::<(f64, f64, f64)>() {
        rows.push(rec.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?);
    }
    Ok(VolTable::from_rows(&rows)?)
}

pub fn loss(c: &Config) -> Result<LossSpec, CliError> {
    Ok(match c.choice("loss.kind", &["entropic", "cvar", "mmv"])? {
        "entropic" => LossSpec::entropic(),
        "mmv" => LossSpec::mmv(),
        _ => {
            c.require("loss.alpha", "loss.kind = cvar needs its level")?;
            let alpha = c.f64("loss.alpha")?;
            LossSpec::cvar(alpha).map_err(|_| ConfigError::BadValue {
                key: "loss.alpha".to_string(),
                value: c.str("loss.alpha").to_string(),
                expected: "a level in (0, 1)".to_string(),
            })?
        }
    })
}

fn pair(c: &Config, lo: &str, hi: &str) -> Result<Option<(f64, f64)>, CliError> {
    match (c.opt_f64(lo)?, c.opt_f64(hi)?) {
        (None, None) => Ok(None),
        (Some(a), Some(b)) => Ok(Some((a, b))),
        (None, Some(_)) => Err(ConfigError::Missing { key: lo.to_string(), reason: format!("{hi} is set") }.into()),
        (Some(_), None) => Err(ConfigError::Missing { key: hi.to_string(), reason: format!("{lo} is set") }.into()),
    }
}

pub fn solve_config(c: &Config, model: &DiffusionModel, loss: &LossSpec) -> Result<SolveConfig, CliError> {
    let seed = c.u64("seed")?;
    let boundary = match c.choice("boundary.kind", &["mc", "degenerate", "closed_form"])? {
        "mc" => BoundaryPolicy::MonteCarlo {
            paths: c.count("boundary.paths", 1)?,
            time_stride: c.count("boundary.time_stride", 1)?,
            steps_per_unit: c.positive("boundary.steps_per_unit")?,
            seed,
        },
        "degenerate" => BoundaryPolicy::Degenerate,
        _ => closed_form_boundary(c, model, loss)?,
    };
    Ok(SolveConfig {
        steps: c.count("grid.steps", 1)?,
        y_nodes: c.count("grid.y_nodes", 3)?,
        z_nodes: c.count("grid.z_nodes", 3)?,
        y_range: pair(c, "grid.y_lo", "grid.y_hi")?,
        z_range: pair(c, "grid.z_lo", "grid.z_hi")?,
        n_schedule: c.ascending("grid.n_schedule")?,
        cfl_safety: c.positive("grid.cfl_safety")?,
        tol_n: c.nonneg("grid.tol_n")?,
        stencil_reach: c.count("grid.stencil_reach", 1)?,
        boundary,
        store_argmax: c.bool("grid.store_argmax")?,
        tol_conc: c.nonneg("grid.tol_conc")?,
        ..SolveConfig::default()
    })
}

/// Entropic and monotone mean-variance faces from the separated oracles.
fn closed_form_boundary(c: &Config, model: &DiffusionModel, loss: &LossSpec) -> Result<BoundaryPolicy, CliError> {
    let y0 = model.y0.first().copied().unwrap_or(0.0);
    let steps = c.count("oracle.steps", 1)?;
    let nodes = c.count("oracle.nodes", 3)?;
    let half_width = c.positive("oracle.half_width")?;
    match loss.kind() {
        LossKind::Entropic => {
            let o = EntropicOracle::solve(model, y0, 0.0, steps, nodes, half_width)?;
            Ok(BoundaryPolicy::ClosedForm(Arc::new(move |t, y, z| o.value(t, y, z).unwrap_or(f64::NAN))))
        }
        LossKind::MonotoneMeanVariance => {
            let o = MmvOracle::solve(model, y0, &MmvOptions { steps, nodes, half_width, ..MmvOptions::default() })?;
            Ok(BoundaryPolicy::ClosedForm(Arc::new(move |t, y, z| o.value(t, y, z).unwrap_or(f64::NAN))))
        }
        _ => Err(CliError::Unsupported(format!(
            "boundary.kind = closed_form is available for entropic and mmv losses, not {}",
            loss.name()
        ))),
    }
}

/// `(s, ys, zs)` query points; `query.y` defaults to the model's start.
pub fn queries(c: &Config, model: &DiffusionModel) -> Result<(f64, Vec<f64>, Vec<f64>), CliError> {
    let s = c.nonneg("query.s")?;
    let mut ys = c.list("query.y")?;
    if ys.is_empty() {
        ys.push(model.y0.first().copied().unwrap_or(0.0));
    }
    let zs = c.list("query.z")?;
    if zs.is_empty() || zs.iter().any(|z| *z < 0.0) {
        return Err(ConfigError::BadValue {
            key: "query.z".to_string(),
            value: c.str("query.z").to_string(),
            expected: "a comma-separated list of nonnegative numbers".to_string(),
        }
        .into());
    }
    if s >= model.horizon() {
        return Err(ConfigError::BadValue {
            key: "query.s".to_string(),
            value: c.str("query.s").to_string(),
            expected: format!("a time in [0, {})", model.horizon()),
        }
        .into());
    }
    Ok((s, ys, zs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cvar_without_alpha_names_the_key() {
        let mut c = Config::default();
        c.apply_flags(&["loss.kind=cvar"]).unwrap();
        let e = loss(&c).unwrap_err().to_string();
        assert!(e.contains("loss.alpha"), "{e}");
    }

    #[test]
    fn defaults_build_a_solver_setup() {
        let c = Config::default();
        let m = model(&c).unwrap();
        let l = loss(&c).unwrap();
        let s = solve_config(&c, &m, &l).unwrap();
        assert_eq!((s.steps, s.y_nodes, s.z_nodes), (400, 121, 81));
        assert_eq!(s.n_schedule, vec![1.0, 2.0, 4.0, 8.0]);
    }

    #[test]
    fn half_specified_range_is_an_error() {
        let mut c = Config::default();
        c.apply_flags(&["grid.z_lo=0.1"]).unwrap();
        let m = model(&c).unwrap();
        let e = solve_config(&c, &m, &LossSpec::entropic()).unwrap_err().to_string();
        assert!(e.contains("grid.z_hi"), "{e}");
    }

    #[test]
    fn constant_payoff_parses() {
        let mut c = Config::default();
        c.apply_flags(&["model.payoff=constant:0.5", "model.kind=constant"]).unwrap();
        assert_eq!(model(&c).unwrap().f(3.0), 0.5);
    }
}
