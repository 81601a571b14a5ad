use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn risk_pde(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_risk-pde"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn digest(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).expect("output exists")).to_vec()
}

fn manifest(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).expect("manifest exists")).expect("valid json")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned() + &String::from_utf8_lossy(&o.stderr)
}

const SMALL: &[&str] = &["--set", "mc.paths=4000", "--set", "mc.steps=20", "--set", "query.z=0.5,1,2"];

#[test]
fn oce_mc_outputs_are_bit_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let mut a = vec!["oce-mc", "--out", "a"];
    a.extend(SMALL);
    let mut b = vec!["oce-mc", "--out", "b"];
    b.extend(SMALL);
    assert!(risk_pde(tmp.path(), &a).status.success());
    assert!(risk_pde(tmp.path(), &b).status.success());
    assert_eq!(digest(&tmp.path().join("a/oce_mc.csv")), digest(&tmp.path().join("b/oce_mc.csv")));
    let text = std::fs::read_to_string(tmp.path().join("a/oce_mc.csv")).unwrap();
    assert!(text.starts_with("s,y,z,value,r_star,stderr,mean,paths\n"), "{text}");
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn rerunning_from_a_manifest_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut a = vec!["oce-mc", "--out", "a", "--seed", "7"];
    a.extend(SMALL);
    assert!(risk_pde(tmp.path(), &a).status.success());
    let o = risk_pde(tmp.path(), &["oce-mc", "--config", "a/manifest.json", "--out", "b"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(digest(&tmp.path().join("a/oce_mc.csv")), digest(&tmp.path().join("b/oce_mc.csv")));
    assert_eq!(manifest(&tmp.path().join("b/manifest.json"))["seed"], 7);
}

#[test]
fn flags_override_file_and_file_overrides_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("run.ini"), "[loss]\nkind = mmv\n[mc]\npaths = 1000\nsteps = 10\n").unwrap();
    let o = risk_pde(tmp.path(), &["oce-mc", "--config", "run.ini", "--set", "mc.paths=1500", "--out", "o"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let m = manifest(&tmp.path().join("o/manifest.json"));
    assert_eq!(m["config"]["loss.kind"], "mmv");
    assert_eq!(m["config"]["mc.paths"], "1500");
    assert_eq!(m["config"]["grid.steps"], "400");
    assert_eq!(m["command"], "oce-mc");
}

#[test]
fn unknown_keys_are_hard_errors() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.ini"), "grid.stpes = 10\n").unwrap();
    let o = risk_pde(tmp.path(), &["solve-hjb", "--config", "bad.ini"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("grid.stpes"), "{}", stdout(&o));
    let o = risk_pde(tmp.path(), &["oce-mc", "--set", "mc.pahts=3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cvar_without_level_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = risk_pde(tmp.path(), &["oce-mc", "--set", "loss.kind=cvar"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("loss.alpha"), "{}", stdout(&o));
}

#[test]
fn thread_cap_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["oce-mc", "--out", "o"];
    args.extend(SMALL);
    let o = Command::new(env!("CARGO_BIN_EXE_risk-pde"))
        .current_dir(tmp.path())
        .env("RISK_PDE_THREADS", "1")
        .args(&args)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(manifest(&tmp.path().join("o/manifest.json"))["threads"], 1);
}

const GRID: &[&str] = &[
    "--set", "grid.steps=80",
    "--set", "grid.y_nodes=41",
    "--set", "grid.z_nodes=31",
    "--set", "grid.z_lo=0.2",
    "--set", "grid.z_hi=4",
    "--set", "boundary.kind=closed_form",
    "--set", "oracle.steps=400",
    "--set", "oracle.nodes=401",
];

#[test]
fn solve_hjb_writes_slices_levels_and_queries() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["solve-hjb", "--out", "o", "--set", "output.times=0,0.5", "--set", "query.z=1"];
    args.extend(GRID);
    let o = risk_pde(tmp.path(), &args);
    assert!(o.status.code().is_some_and(|c| c <= 1), "{}", stdout(&o));
    let field = std::fs::read_to_string(tmp.path().join("o/value_field.csv")).unwrap();
    assert!(field.starts_with("t,y,z,value\n"));
    assert_eq!(field.lines().count(), 1 + 2 * 41 * 31);
    let levels = std::fs::read_to_string(tmp.path().join("o/levels.csv")).unwrap();
    assert!(levels.starts_with("n,increment\n"));
    assert!((2..=5).contains(&levels.lines().count()), "{levels}");
    let m = manifest(&tmp.path().join("o/manifest.json"));
    assert!(m["timings"]["solve"].as_f64().unwrap() > 0.0);
}

#[test]
fn compare_reports_three_methods_for_the_entropic_loss() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["compare", "--out", "o", "--set", "query.z=1", "--set", "mc.paths=200000", "--set", "mc.steps=1"];
    args.extend(GRID);
    let o = risk_pde(tmp.path(), &args);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = std::fs::read_to_string(tmp.path().join("o/compare.csv")).unwrap();
    let methods: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["hjb", "mc", "entropic_pde"]);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",pass")), "{text}");
}

#[test]
fn compare_falls_back_to_two_way_for_cvar() {
    let tmp = tempfile::tempdir().unwrap();
    let o = risk_pde(
        tmp.path(),
        &[
            "compare", "--out", "o",
            "--set", "loss.kind=cvar", "--set", "loss.alpha=0.25",
            "--set", "model.payoff=clip01",
            "--set", "grid.steps=80", "--set", "grid.y_nodes=41", "--set", "grid.z_nodes=21",
            "--set", "grid.n_schedule=1,2,4,8,16",
            "--set", "boundary.paths=2000", "--set", "boundary.steps_per_unit=1",
            "--set", "mc.paths=100000", "--set", "mc.steps=1",
            "--set", "query.z=1", "--set", "compare.tol=5e-2",
        ],
    );
    assert!(o.status.code().is_some_and(|c| c <= 1), "{}", stdout(&o));
    let text = std::fs::read_to_string(tmp.path().join("o/compare.csv")).unwrap();
    assert_eq!(text.lines().count(), 3, "{text}");
    let m = manifest(&tmp.path().join("o/manifest.json"));
    assert!(m["notes"].as_array().unwrap().iter().any(|n| n.as_str().unwrap().contains("two-way")));
}

#[test]
fn oracle_subcommands_write_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: &[(&[&str], &str)] = &[
        (&["--which", "entropic", "--set", "oracle.steps=400", "--set", "oracle.nodes=401"], "oracle_entropic.csv"),
        (&["--which", "mmv", "--set", "oracle.steps=400", "--set", "oracle.nodes=401"], "oracle_mmv.csv"),
        (&["--which", "cvar", "--set", "loss.kind=cvar", "--set", "loss.alpha=0.25", "--set", "mc.paths=20000", "--set", "mc.steps=1"], "oracle_cvar.csv"),
    ];
    for (i, (flags, file)) in cases.iter().enumerate() {
        let out = format!("o{i}");
        let mut args = vec!["oracle", "--out", &out, "--set", "query.z=0.5,1"];
        args.extend_from_slice(flags);
        let o = risk_pde(tmp.path(), &args);
        assert!(o.status.success(), "{file}: {}", stdout(&o));
        let text = std::fs::read_to_string(tmp.path().join(&out).join(file)).unwrap();
        assert_eq!(text.lines().count(), 3, "{text}");
    }
}

#[test]
fn dpp_oracle_checks_the_inequality() {
    let tmp = tempfile::tempdir().unwrap();
    let o = risk_pde(
        tmp.path(),
        &[
            "oracle", "--which", "dpp", "--out", "o",
            "--set", "oracle.steps=400", "--set", "oracle.nodes=401",
            "--set", "oracle.controls=5", "--set", "oracle.outer_paths=4000", "--set", "oracle.dpp_steps=20",
        ],
    );
    assert!(o.status.success(), "{}", stdout(&o));
    let text = std::fs::read_to_string(tmp.path().join("o/oracle_dpp.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 1 + 6);
    assert!(stdout(&o).contains("PASS dpp_inequality"));
}

#[test]
fn bass_embedding_handle_drives_other_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let o = risk_pde(
        tmp.path(),
        &[
            "bass-embed", "--law", "uniform", "--T", "1", "--quad-order", "32", "--out", "emb",
            "--set", "bass.table_size=81", "--set", "bass.paths=20000", "--set", "bass.steps=100",
        ],
    );
    assert!(o.status.success(), "{}", stdout(&o));
    let vol = std::fs::read_to_string(tmp.path().join("emb/volatility.csv")).unwrap();
    assert!(vol.starts_with("t,y,sigma\n"));
    let o = risk_pde(
        tmp.path(),
        &["oce-mc", "--config", "emb/model.ini", "--out", "mc", "--set", "mc.paths=20000", "--set", "mc.steps=100", "--set", "query.z=1"],
    );
    assert!(o.status.success(), "{}", stdout(&o));
    let rows = std::fs::read_to_string(tmp.path().join("mc/oce_mc.csv")).unwrap();
    let mean: f64 = rows.lines().nth(1).unwrap().split(',').nth(6).unwrap().parse().unwrap();
    assert!((mean - 0.5).abs() < 0.02, "{mean}");
}

#[test]
fn bass_embedding_reads_a_table_law() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("law.csv"), "p,quantile\n0,-1\n0.5,0\n1,2\n").unwrap();
    let o = risk_pde(
        tmp.path(),
        &["bass-embed", "--law", "table:law.csv", "--out", "o", "--set", "bass.table_size=41", "--set", "bass.paths=5000"],
    );
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("martingale_mean"));
}

#[test]
fn check_runs_selected_criteria_and_sets_the_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let o = risk_pde(tmp.path(), &["check", "--only", "M2,D1", "--out", "o"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = std::fs::read_to_string(tmp.path().join("o/checks.csv")).unwrap();
    assert!(text.contains("M2,pass") && text.contains("D1,pass"), "{text}");
    let o = risk_pde(tmp.path(), &["check", "--only", "Z9"]);
    assert_eq!(o.status.code(), Some(2));
}
