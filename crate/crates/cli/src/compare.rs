//! `V(s, y, z)` computed by the HJB solver, by Monte-Carlo OCE minimisation
//! and, where one exists, by an independent oracle, with pairwise verdicts.

use std::collections::BTreeMap;
use std::time::Instant;

use risk_pde::closed_forms::{degenerate_value, entropic_value, EntropicMethod, MmvOptions, MmvOracle};
use risk_pde::hjb::solve_v;
use risk_pde::oce::value_fn_mc;
use risk_pde::rng::derive_seed;
use risk_pde::{DiffusionModel, LossKind, LossSpec};

use crate::config::Config;
use crate::error::CliError;
use crate::setup;

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub method: String,
    pub s: f64,
    pub y: f64,
    pub z: f64,
    pub value: f64,
    /// Monte-Carlo standard error, zero for deterministic methods.
    pub stderr: f64,
    pub reference: String,
    pub difference: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
    pub notes: Vec<String>,
    pub timings: BTreeMap<String, f64>,
}

impl Comparison {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }
}

/// `b = σ = 0` everywhere we can see.
fn is_still(model: &DiffusionModel) -> bool {
    let t = model.horizon();
    [0.0, 0.5 * t].iter().all(|&s| [-1.0, 0.0, 1.0].iter().all(|&y| model.b(s, y) == 0.0 && model.sigma(s, y) == 0.0))
}

fn oracle_value(c: &Config, model: &DiffusionModel, loss: &LossSpec, s: f64, y: f64, z: f64, mmv: &mut Option<MmvOracle>) -> Result<Option<(String, f64)>, CliError> {
    if is_still(model) {
        return Ok(Some(("degenerate".into(), degenerate_value(model, loss, s, y, z, 4096)?)));
    }
    let steps = c.count("oracle.steps", 1)?;
    let nodes = c.count("oracle.nodes", 3)?;
    let half_width = c.positive("oracle.half_width")?;
    match loss.kind() {
        LossKind::Entropic if z > 0.0 => {
            let v = entropic_value(model, s, y, z, EntropicMethod::Pde { steps, nodes, half_width })?;
            Ok(Some(("entropic_pde".into(), v.value)))
        }
        LossKind::MonotoneMeanVariance => {
            if mmv.is_none() {
                let y0 = model.y0.first().copied().unwrap_or(0.0);
                *mmv = Some(MmvOracle::solve(model, y0, &MmvOptions { steps, nodes, half_width, ..MmvOptions::default() })?);
            }
            let o = mmv.as_ref().expect("solved above");
            Ok(o.value(s, y, z).map(|v| ("mmv_ansatz".into(), v)))
        }
        _ => Ok(None),
    }
}

pub fn run_compare(c: &Config) -> Result<Comparison, CliError> {
    let model = setup::model(c)?;
    let loss = setup::loss(c)?;
    let cfg = setup::solve_config(c, &model, &loss)?;
    let (s, ys, zs) = setup::queries(c, &model)?;
    let seed = c.u64("seed")?;
    let tol = c.nonneg("compare.tol")?;
    let sigmas = c.positive("compare.sigmas")?;
    let mut out = Comparison::default();

    let started = Instant::now();
    let solved = solve_v(&model, &loss, &cfg)?;
    out.timings.insert("hjb".into(), started.elapsed().as_secs_f64());
    if !solved.converged {
        out.notes.push(format!("n-sweep stopped at n = {} without meeting tol_n", solved.field.n));
    }

    let mut mmv = None;
    for &y in &ys {
        for &z in &zs {
            let mut candidates: Vec<(String, f64, f64)> = Vec::new();
            candidates.push(("hjb".into(), solved.field.read(s, y, z)?, 0.0));

            let started = Instant::now();
            if loss.in_interior(z) {
                let mc = value_fn_mc(&model, &loss, s, y, z, c.count("mc.steps", 1)?, c.count("mc.paths", 2)?, derive_seed(seed, "compare"))?;
                candidates.push(("mc".into(), mc.value, mc.mc_stderr));
            } else {
                out.notes.push(format!("z = {z} is on the edge of dom(l*): no Monte-Carlo row"));
            }
            *out.timings.entry("mc".into()).or_default() += started.elapsed().as_secs_f64();

            let started = Instant::now();
            match oracle_value(c, &model, &loss, s, y, z, &mut mmv)? {
                Some((name, v)) => candidates.push((name, v, 0.0)),
                None => out.notes.push(format!("no closed-form oracle for {} at z = {z}: two-way comparison", loss.name())),
            }
            *out.timings.entry("oracle".into()).or_default() += started.elapsed().as_secs_f64();

            // The oracle when present, else Monte-Carlo, is the reference.
            let reference = candidates.iter().rev().find(|c| c.0 != "hjb").cloned().unwrap_or_else(|| candidates[0].clone());
            for (method, value, stderr) in candidates {
                let difference = value - reference.1;
                let tolerance = tol.max(sigmas * (stderr * stderr + reference.2 * reference.2).sqrt());
                out.rows.push(CompareRow {
                    passed: difference.abs() <= tolerance,
                    method,
                    s,
                    y,
                    z,
                    value,
                    stderr,
                    reference: reference.0.clone(),
                    difference,
                    tolerance,
                });
            }
        }
    }
    Ok(out)
}
