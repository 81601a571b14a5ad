//! One function per subcommand. Each writes its CSV files into `output.dir`
//! and records outputs, timings and verdicts in the manifest.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use risk_pde::bass::{embed, embed_unit_vol, ks_critical_1pct, ks_distance, TargetLaw};
use risk_pde::closed_forms::{
    cvar_field, dpp_check, entropic_value, DppOptions, EntropicMethod, EntropicOracle, InnerValue, MmvOptions, MmvOracle,
};
use risk_pde::hjb::solve_v;
use risk_pde::oce::{claim_samples_from, oce_scaled};
use risk_pde::rng::{derive_seed, path_stream};
use risk_pde::sde::{simulate_y, SimOptions};
use risk_pde::{ControlSpec, LossKind};

use crate::compare::run_compare;
use crate::config::Config;
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::out::{num, CsvOut};
use crate::setup;
use crate::suite::{Criterion, Suite};

pub fn out_dir(c: &Config) -> PathBuf {
    PathBuf::from(c.str("output.dir"))
}

fn record(manifest: &mut RunManifest, path: PathBuf) {
    let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    manifest.outputs.push(name);
}

pub fn solve_hjb(c: &Config, manifest: &mut RunManifest) -> Result<(), CliError> {
    let dir = out_dir(c);
    let model = setup::model(c)?;
    let loss = setup::loss(c)?;
    let cfg = setup::solve_config(c, &model, &loss)?;
    let (s, ys, zs) = setup::queries(c, &model)?;
    let started = Instant::now();
    let out = solve_v(&model, &loss, &cfg)?;
    manifest.timings.insert("boundary".into(), out.boundary_seconds);
    manifest.timings.insert("solve".into(), started.elapsed().as_secs_f64());
    for l in &out.levels {
        manifest.timings.insert(format!("level_n{}", l.n), l.seconds);
    }

    let mut levels = CsvOut::create(&dir, "levels.csv", &["n", "increment"])?;
    for l in &out.levels {
        levels.row(&[num(l.n), num(l.increment)])?;
    }
    record(manifest, levels.finish()?);

    let field = &out.field;
    let g = &field.grid;
    let with_beta = field.argmax_beta.is_some();
    let header: &[&str] = if with_beta { &["t", "y", "z", "value", "beta"] } else { &["t", "y", "z", "value"] };
    let mut slices = CsvOut::create(&dir, "value_field.csv", header)?;
    for t in c.list("output.times")? {
        let (k, a) = g.locate_t(t.clamp(0.0, g.horizon));
        let k = if a > 0.5 { k + 1 } else { k };
        for i in 0..g.y_nodes {
            for j in 0..g.z_nodes {
                let mut row = vec![num(g.t(k)), num(g.y(i)), num(g.z(j)), num(field.at(k, i, j))];
                if let Some(b) = &field.argmax_beta {
                    row.push(num(b[k * g.slice_len() + g.idx(i, j)]));
                }
                slices.row(&row)?;
            }
        }
    }
    record(manifest, slices.finish()?);

    let mut at = CsvOut::create(&dir, "value_at.csv", &["s", "y", "z", "value"])?;
    for &y in &ys {
        for &z in &zs {
            at.row(&[num(s), num(y), num(z), num(field.read(s, y, z)?)])?;
        }
    }
    record(manifest, at.finish()?);

    manifest.check(
        "n_sweep_converged",
        out.converged,
        format!("last level n = {}, increment {:.3e}, tol_n {:.1e}", field.n, out.levels.last().map_or(f64::NAN, |l| l.increment), cfg.tol_n),
    );
    manifest.check(
        "z_concavity",
        field.diagnostics.concavity_violations == 0,
        format!("{} violations, worst excess {:.3e}", field.diagnostics.concavity_violations, field.diagnostics.max_concavity_excess),
    );
    Ok(())
}

pub fn oce_mc(c: &Config, manifest: &mut RunManifest) -> Result<(), CliError> {
    let dir = out_dir(c);
    let model = setup::model(c)?;
    let loss = setup::loss(c)?;
    let (s, ys, zs) = setup::queries(c, &model)?;
    let steps = c.count("mc.steps", 1)?;
    let paths = c.count("mc.paths", 2)?;
    let seed = derive_seed(c.u64("seed")?, "oce-mc");
    let started = Instant::now();
    let mut csv = CsvOut::create(&dir, "oce_mc.csv", &["s", "y", "z", "value", "r_star", "stderr", "mean", "paths"])?;
    let mut above_mean = true;
    for &y in &ys {
        let x = claim_samples_from(&model, s, y, steps, paths, seed)?;
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        for &z in &zs {
            let r = oce_scaled(&x, &loss, z)?;
            if z == 1.0 && r.value < mean - 1e-9 * (1.0 + mean.abs()) {
                above_mean = false;
            }
            csv.row(&[num(s), num(y), num(z), num(r.value), num(r.r_star), num(r.mc_stderr), num(mean), paths.to_string()])?;
        }
    }
    record(manifest, csv.finish()?);
    manifest.timings.insert("mc".into(), started.elapsed().as_secs_f64());
    manifest.check("rho_at_least_mean", above_mean, "V(s, y, 1) >= sample mean of the claim");

    let keep = c.usize("mc.record_paths")?;
    if keep > 0 {
        let opts = SimOptions::new(steps, keep, seed).record_paths(true);
        let batch = simulate_y(&model, s, &[ys[0]], &opts)?;
        let path = dir.join("paths.csv");
        batch.write_csv(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
        record(manifest, path);
    }
    Ok(())
}

pub fn oracle(c: &Config, manifest: &mut RunManifest) -> Result<(), CliError> {
    let dir = out_dir(c);
    let model = setup::model(c)?;
    let (s, ys, zs) = setup::queries(c, &model)?;
    let steps = c.count("oracle.steps", 1)?;
    let nodes = c.count("oracle.nodes", 3)?;
    let half_width = c.positive("oracle.half_width")?;
    let seed = c.u64("seed")?;
    let y0 = model.y0.first().copied().unwrap_or(0.0);
    let started = Instant::now();
    match c.choice("oracle.which", &["entropic", "mmv", "cvar", "dpp"])? {
        "entropic" => {
            let method = match c.choice("oracle.method", &["pde", "mc"])? {
                "pde" => EntropicMethod::Pde { steps, nodes, half_width },
                _ => EntropicMethod::Mc {
                    paths: c.count("mc.paths", 2)?,
                    steps: c.count("mc.steps", 1)?,
                    seed: derive_seed(seed, "oracle"),
                },
            };
            let mut csv = CsvOut::create(&dir, "oracle_entropic.csv", &["s", "y", "z", "value", "vtilde", "stderr", "clamped"])?;
            let mut clamped = 0;
            for &y in &ys {
                for &z in &zs {
                    let v = entropic_value(&model, s, y, z, method)?;
                    clamped += v.clamped;
                    csv.row(&[num(s), num(y), num(z), num(v.value), num(v.vtilde), num(v.stderr), v.clamped.to_string()])?;
                }
            }
            record(manifest, csv.finish()?);
            manifest.check("no_exponent_clamping", clamped == 0, format!("{clamped} samples clamped at |x| = 50"));
        }
        "mmv" => {
            let o = MmvOracle::solve(&model, y0, &MmvOptions { steps, nodes, half_width, ..MmvOptions::default() })?;
            let mut csv = CsvOut::create(&dir, "oracle_mmv.csv", &["s", "y", "z", "value", "vtilde", "phi"])?;
            for &y in &ys {
                let vt = o.vtilde.value(s, y).ok_or_else(|| CliError::Input(format!("y = {y} is outside the oracle grid")))?;
                let phi = o.phi.value(s, y).expect("same grid as vtilde");
                for &z in &zs {
                    csv.row(&[num(s), num(y), num(z), num(phi + z * vt - 0.5 * (z - 1.0) * (z - 1.0)), num(vt), num(phi)])?;
                }
            }
            record(manifest, csv.finish()?);
            manifest.notes.push("the quadratic ansatz reproduces V where z + X − E[X] ≥ 0 holds almost surely".into());
        }
        "cvar" => {
            let loss = setup::loss(c)?;
            let alpha = loss.alpha().ok_or_else(|| CliError::Unsupported("oracle.which = cvar needs loss.kind = cvar".into()))?;
            let mut csv = CsvOut::create(&dir, "oracle_cvar.csv", &["s", "y", "z", "value", "var_z", "quadrature", "stderr"])?;
            for &y in &ys {
                for &z in &zs {
                    let f = cvar_field(&model, alpha, s, y, z, c.count("mc.steps", 1)?, c.count("mc.paths", 2)?, derive_seed(seed, "oracle"))?;
                    csv.row(&[num(s), num(y), num(z), num(f.value), num(f.var_z), num(f.quadrature), num(f.result.mc_stderr)])?;
                }
            }
            record(manifest, csv.finish()?);
        }
        _ => dpp(c, manifest, &dir, s, ys[0], zs[0])?,
    }
    manifest.timings.insert("oracle".into(), started.elapsed().as_secs_f64());
    Ok(())
}

/// Random piecewise-constant controls on `[s, θ]` with values in `[−cap, cap]`.
pub fn random_controls(count: usize, pieces: usize, cap: f64, s: f64, theta: f64, seed: u64) -> Vec<ControlSpec> {
    let mut rng = path_stream(derive_seed(seed, "dpp-controls"), 0);
    (0..count)
        .map(|_| {
            let values = (0..pieces.max(1)).map(|_| rng.random_range(-cap..=cap)).collect();
            ControlSpec::piecewise_constant(s, theta, values)
        })
        .collect()
}

fn dpp(c: &Config, manifest: &mut RunManifest, dir: &Path, s: f64, y: f64, z: f64) -> Result<(), CliError> {
    let model = setup::model(c)?;
    let loss = setup::loss(c)?;
    let seed = c.u64("seed")?;
    let theta = c.opt_f64("oracle.theta")?.unwrap_or(0.5 * (s + model.horizon()));
    let steps = c.count("oracle.steps", 1)?;
    let nodes = c.count("oracle.nodes", 3)?;
    let half_width = c.positive("oracle.half_width")?;
    let y0 = model.y0.first().copied().unwrap_or(0.0);
    let inner = match loss.kind() {
        LossKind::Entropic => {
            let o = EntropicOracle::solve(&model, y0, 0.0, steps, nodes, half_width)?;
            InnerValue::Callback(Arc::new(move |t, y, z| o.value(t, y, z).unwrap_or(f64::NAN)))
        }
        LossKind::MonotoneMeanVariance => {
            let o = MmvOracle::solve(&model, y0, &MmvOptions { steps, nodes, half_width, ..MmvOptions::default() })?;
            InnerValue::Callback(Arc::new(move |t, y, z| o.value(t, y, z).unwrap_or(f64::NAN)))
        }
        _ => InnerValue::McShared {
            paths: c.count("oracle.inner_paths", 2)?,
            steps: c.count("mc.steps", 1)?,
            seed: derive_seed(seed, "dpp-inner"),
        },
    };
    let mut controls = vec![ControlSpec::constant(0.0)];
    controls.extend(random_controls(
        c.count("oracle.controls", 1)?,
        c.count("oracle.control_pieces", 1)?,
        c.positive("oracle.control_cap")?,
        s,
        theta,
        seed,
    ));
    let mut labels: Vec<String> = (0..controls.len()).map(|i| if i == 0 { "zero".into() } else { format!("random_{i}") }).collect();
    if c.bool("grid.store_argmax")? {
        let cfg = setup::solve_config(c, &model, &loss)?;
        let solved = Arc::new(solve_v(&model, &loss, &cfg)?.field);
        let cap = solved.n;
        controls.push(ControlSpec::scalar(cap, move |t, y, z| solved.beta(t, y, z).unwrap_or(0.0)));
        labels.push("hjb_argmax".into());
    }
    let opts = DppOptions {
        theta,
        outer_paths: c.count("oracle.outer_paths", 2)?,
        steps: c.count("oracle.dpp_steps", 1)?,
        seed,
        sigmas: c.positive("compare.sigmas")?,
        gap_tol: c.nonneg("compare.tol")?,
        ..DppOptions::default()
    };
    let report = dpp_check(&model, &loss, s, y, z, &controls, &inner, &opts)?;
    let mut csv = CsvOut::create(dir, "oracle_dpp.csv", &["control", "estimate", "stderr", "below"])?;
    csv.row(&["reference".into(), num(report.reference), num(0.0), "true".into()])?;
    for (label, e) in labels.iter().zip(&report.controls) {
        csv.row(&[label.clone(), num(e.estimate), num(e.stderr), e.below.to_string()])?;
    }
    record(manifest, csv.finish()?);
    if report.widened {
        manifest.notes.push(format!("inner Monte-Carlo budget below {}: tolerance widened by {:.3e}", opts.min_inner_paths, report.inner_bias));
    }
    manifest.check("dpp_inequality", report.inequality_holds(), format!("{} controls, reference {:.6}", report.controls.len(), report.reference));
    if labels.last().is_some_and(|l| l == "hjb_argmax") {
        manifest.check("dpp_gap", report.gap_within(opts.gap_tol), format!("gap {:.3e}, tolerance {:.1e}", report.gap, opts.gap_tol));
    }
    Ok(())
}

fn target_law(c: &Config) -> Result<TargetLaw, CliError> {
    let spec = c.str("bass.law");
    if let Some(file) = spec.strip_prefix("table:") {
        let mut reader = csv::Reader::from_path(file).map_err(|e| CliError::Input(format!("{file}: {e}")))?;
        let (mut probs, mut values) = (Vec::new(), Vec::new());
        for rec in reader.deserialize::<(f64, f64)>() {
            let (p, x) = rec.map_err(|e| CliError::Input(format!("{file}: {e}")))?;
            probs.push(p);
            values.push(x);
        }
        return Ok(TargetLaw::table(probs, values)?);
    }
    Ok(TargetLaw::named(spec, &c.list("bass.params")?)?)
}

pub fn bass_embed(c: &Config, manifest: &mut RunManifest) -> Result<(), CliError> {
    let dir = out_dir(c);
    let law = target_law(c)?;
    let horizon = c.positive("model.horizon")?;
    let size = c.count("bass.table_size", 3)?;
    let paths = c.count("bass.paths", 2)?;
    let steps = c.count("bass.steps", 1)?;
    let seed = derive_seed(c.u64("seed")?, "bass");
    let started = Instant::now();
    let (model, y0) = if c.bool("bass.unit_vol")? {
        let e = embed_unit_vol(&law, horizon, size, 4001)?;
        let mut csv = CsvOut::create(&dir, "drift.csv", &["t", "y", "drift"])?;
        write_table(&mut csv, &e.drift)?;
        record(manifest, csv.finish()?);
        manifest.notes.push("unit-volatility embedding: no reusable model handle is written".into());
        (e.model, 0.0)
    } else {
        let e = embed(&law, horizon, c.count("bass.quad_order", 2)?, size)?;
        let mut csv = CsvOut::create(&dir, "volatility.csv", &["t", "y", "sigma"])?;
        write_table(&mut csv, &e.table)?;
        let vol_path = csv.finish()?;
        let y0 = e.model.y0[0];
        let abs = std::fs::canonicalize(&vol_path).unwrap_or(vol_path.clone());
        let handle = dir.join("model.ini");
        std::fs::write(
            &handle,
            format!(
                "[model]\nkind = vol_table\nvol_table = {}\nhorizon = {horizon}\ny0 = {}\npayoff = identity\n",
                abs.display(),
                num(y0)
            ),
        )?;
        record(manifest, vol_path);
        record(manifest, handle);
        if e.table.reduced > 0 {
            manifest.notes.push(format!("{} table nodes near maturity use a difference quotient of H", e.table.reduced));
        }
        (e.model, y0)
    };
    manifest.timings.insert("embed".into(), started.elapsed().as_secs_f64());
    let batch = simulate_y(&model, 0.0, &[y0], &SimOptions::new(steps, paths, seed))?;
    let n = batch.y_end.len() as f64;
    let mean = batch.y_end.iter().sum::<f64>() / n;
    let var = batch.y_end.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    manifest.check("martingale_mean", (mean - law.mean()).abs() <= 3.0 * se + 1e-12, format!("E[Y_T] = {mean:.6}, law mean {:.6}, stderr {se:.2e}", law.mean()));
    if matches!(law, TargetLaw::TwoPoint { .. } | TargetLaw::Constant(_)) {
        manifest.notes.push("Kolmogorov–Smirnov test skipped for an atomic law".into());
    } else {
        let d = ks_distance(&batch.y_end, &law);
        let crit = ks_critical_1pct(batch.y_end.len());
        manifest.check("ks_1pct", d < crit, format!("D = {d:.5}, critical {crit:.5}"));
    }
    manifest.timings.insert("simulate".into(), started.elapsed().as_secs_f64());
    Ok(())
}

fn write_table(csv: &mut CsvOut, t: &risk_pde::bass::VolTable) -> Result<(), CliError> {
    let ny = t.ys.len();
    for (k, &time) in t.times.iter().enumerate() {
        for (i, &y) in t.ys.iter().enumerate() {
            csv.row(&[num(time), num(y), num(t.sigma[k * ny + i])])?;
        }
    }
    Ok(())
}

pub fn compare(c: &Config, manifest: &mut RunManifest) -> Result<(), CliError> {
    let dir = out_dir(c);
    let result = run_compare(c)?;
    let mut csv = CsvOut::create(
        &dir,
        "compare.csv",
        &["method", "s", "y", "z", "value", "stderr", "reference", "difference", "tolerance", "verdict"],
    )?;
    for r in &result.rows {
        csv.row(&[
            r.method.clone(),
            num(r.s),
            num(r.y),
            num(r.z),
            num(r.value),
            num(r.stderr),
            r.reference.clone(),
            num(r.difference),
            num(r.tolerance),
            if r.passed { "pass" } else { "fail" }.into(),
        ])?;
    }
    record(manifest, csv.finish()?);
    manifest.timings.extend(result.timings.clone());
    manifest.notes.extend(result.notes.clone());
    for r in &result.rows {
        manifest.check(
            &format!("{}_vs_{}_y{}_z{}", r.method, r.reference, r.y, r.z),
            r.passed,
            format!("difference {:.3e}, tolerance {:.3e}", r.difference, r.tolerance),
        );
    }
    Ok(())
}

pub fn check(c: &Config, manifest: &mut RunManifest, criteria: &[Criterion]) -> Result<(), CliError> {
    let dir = out_dir(c);
    let mut csv = CsvOut::create(&dir, "checks.csv", &["criterion", "verdict", "detail"])?;
    let suite = Suite::new(c.u64("seed")?);
    for &cr in criteria {
        let started = Instant::now();
        let v = suite.run(cr);
        manifest.timings.insert(cr.id().to_string(), started.elapsed().as_secs_f64());
        csv.row(&[cr.id().to_string(), if v.passed { "pass" } else { "fail" }.into(), v.detail.clone()])?;
        manifest.check(cr.id(), v.passed, v.detail);
    }
    record(manifest, csv.finish()?);
    Ok(())
}
