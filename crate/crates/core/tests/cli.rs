use std::path::Path;
use std::process::{Command, Output};

fn ivmaps(args: &[&str], out_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ivmaps"));
    cmd.args(args).env_remove("IVMAPS_OUT_DIR");
    if let Some(d) = out_dir {
        cmd.env("IVMAPS_OUT_DIR", d);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = ivmaps(&["frobnicate"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn failing_h1_exits_with_one() {
    let o = ivmaps(&["verify", "h1", "--map", "doubling", "--q", "0.5", "--delta", "0.25"], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("theta_hat = 1.000000"));
    let text = stdout(&o);
    assert!(text.starts_with("window_left,window_right,sum,error_bar\n"));
    // the straddle of 1/2 has sum exactly 1 for equal slopes
    let first: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(first[2], 1.0);
}

#[test]
fn passing_h1_exits_with_zero() {
    let o = ivmaps(&["verify", "h1", "--map", "vssv:0.4", "--q", "0.3"], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn h3_reports_the_magnet_time() {
    let o = ivmaps(&["verify", "h3", "--map", "vssv:0.4:30", "--magnet", "0.16,0.4", "--n-max", "40"], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(doc["n_c"].as_u64().is_some());
}

#[test]
fn computational_errors_carry_module_codes() {
    let o = ivmaps(&["density", "--map", "vssv:0.5", "--method", "closed-form"], None);
    assert_eq!(o.status.code(), Some(7));
    assert!(stderr(&o).contains("no acip"));
    let o = ivmaps(&["density", "--map", "nonsense"], None);
    assert_eq!(o.status.code(), Some(4));
    let o = ivmaps(&["verify", "h1", "--map", "doubling", "--q", "1.5"], None);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    // q = 0.3 passes on vssv(0.4); without the override q = 1 fails
    std::fs::write(&cfg, r#"{"q": 0.3}"#).unwrap();
    let args = ["verify", "h1", "--map", "vssv:0.4", "--q", "1.0"];
    assert_ne!(ivmaps(&args, None).status.code(), Some(0));
    let mut with_cfg = args.to_vec();
    with_cfg.extend(["--config", cfg.to_str().unwrap()]);
    let o = ivmaps(&with_cfg, None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn out_dir_environment_variable_receives_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = ivmaps(&["density", "--map", "vssv:0.4:30", "--method", "closed-form"], Some(dir.path()));
    assert!(o.status.success());
    assert!(stdout(&o).is_empty());
    let text = std::fs::read_to_string(dir.path().join("density.csv")).unwrap();
    assert!(text.starts_with("left,right,value\n"));
    assert_eq!(text.lines().count(), 31);
}

#[test]
fn monte_carlo_output_is_reproducible_across_threads() {
    let run = |threads: &str, seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let o = ivmaps(
            &[
                "mix", "--map", "vssv:0.4", "--f", r#"{"kind":"polynomial","coefficients":[0,1]}"#,
                "--n-max", "5", "--method", "mc", "--samples", "20000", "--seed", seed, "--threads", threads,
            ],
            Some(dir.path()),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(dir.path().join("mix.csv")).unwrap()
    };
    let a = run("1", "9");
    assert_eq!(a, run("4", "9"));
    assert_ne!(a, run("1", "10"));
}

#[test]
fn family_commands_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let fam = dir.path().join("fam.json");
    std::fs::write(&fam, r#"[{"support":[0.2,0.6],"density":"uniform","weight":1.0}]"#).unwrap();
    let f = fam.to_str().unwrap();
    let z = ivmaps(&["family", "z", "--in", f, "--map", "vssv:0.4", "--q0", "0.5"], None);
    assert!(z.status.success());
    // a single Lebesgue pair on (0.2, 0.6]: Z = |W|^{-q0}
    let value: f64 = stdout(&z).trim().parse().unwrap();
    assert!((value - 0.4f64.powf(-0.5)).abs() < 1e-12);
    let it = ivmaps(&["family", "iterate", "--in", f, "--map", "vssv:0.4", "--n", "2"], None);
    assert!(it.status.success());
    let doc: serde_json::Value = serde_json::from_str(&stdout(&it)).unwrap();
    let total: f64 = doc.as_array().unwrap().iter().map(|e| e["weight"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn coupling_ledger_and_tower_artifacts() {
    let o = ivmaps(&["couple", "--map", "vssv:0.4", "--magnet", "0.16,0.4", "--rounds", "3"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("round,time,coupled_mass,cumulative,residual,residual_Z,delta_observed\n"));
    assert_eq!(text.lines().count(), 4);

    let o = ivmaps(&["tower", "--map", "doubling"], None);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["nodes"].as_array().unwrap().len(), 1);
    assert_eq!(doc["edges"].as_array().unwrap().len(), 2);

    let o = ivmaps(&["tower-mass", "--map", "vssv:0.4", "--n", "1"], None);
    let row: Vec<String> = stdout(&o).lines().nth(1).unwrap().split(',').map(String::from).collect();
    // one step from Lebesgue leaves the base with mass 1 − λ²
    assert!((row[1].parse::<f64>().unwrap() - 0.84).abs() < 1e-12);
}

#[test]
fn repro_recipe_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = ivmaps(&["repro", "vssv-density", "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("PASS"));
    assert!(dir.path().join("density.csv").is_file());
    let o = ivmaps(&["repro", "no-such-recipe"], None);
    assert_eq!(o.status.code(), Some(2));
}
