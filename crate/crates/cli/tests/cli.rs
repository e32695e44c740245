use std::path::Path;
use std::process::{Command, Output};

fn mirrorflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mirrorflow")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn list_prints_catalogue_and_filters() {
    let all = mirrorflow(&["list"]);
    assert!(all.status.success());
    let text = stdout(&all);
    for name in ["logregress", "nbp", "d_bp_c", "apdmd", "sadmd"] {
        assert!(text.contains(name), "{name} missing from:\n{text}");
    }

    let some = stdout(&mirrorflow(&["list", "d_bp"]));
    assert!(some.contains("d_bp_r") && some.contains("d_bp_c"));
    assert!(!some.contains("logregress"));

    let none = mirrorflow(&["list", "no-such-entry"]);
    assert_eq!(none.status.code(), Some(0));
    assert!(stdout(&none).trim().is_empty());
}

#[test]
fn usage_errors_exit_2_before_writing_anything() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    for args in [
        vec!["run", "--problem", "nope"],
        vec!["run", "--problem", "nbp", "--system", "apdmd"],
        vec!["run", "--problem", "scalar", "--tf", "0.5"],
        vec!["run", "--problem", "scalar", "--alpha", "1"],
    ] {
        let mut full = args.clone();
        full.extend(["--out", path(&out)]);
        let o = mirrorflow(&full);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(!out.exists(), "{args:?} created output");
    }
    let o = mirrorflow(&["run", "--problem", "nope"]);
    assert!(stderr(&o).contains("logregress"), "{}", stderr(&o));
}

#[test]
fn run_writes_artifacts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = mirrorflow(&["run", "--problem", "scalar", "--alpha", "2", "--tf", "30", "--out", path(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let csv_a = std::fs::read(a.join("trajectory.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("trajectory.csv")).unwrap());

    let text = String::from_utf8(csv_a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,gap,lagrangian_gap,feasibility,lyapunov,mu,x_norm,lambda_norm"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 8);
    assert_eq!(first[0], "1");
    assert_eq!(first[5], "", "unsmoothed runs leave mu empty");

    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    for key in ["slope", "v0", "bounds", "feasibility_max_violation", "runtime_secs", "warnings"] {
        assert!(summary.get(key).is_some(), "summary.json lacks {key}");
    }
    assert_eq!(summary["problem"], "scalar");
    assert_eq!(summary["alpha"], 2.0);
    assert!(summary["slope"].as_f64().unwrap() < -1.8);

    let plot = std::fs::read_to_string(a.join("plot.gp")).unwrap();
    assert!(plot.contains("trajectory.csv") && plot.contains("logscale"));
}

#[test]
fn alpha_sweep_writes_one_directory_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mirrorflow"))
        .args(["run", "--problem", "logregress", "--alpha", "2,4,6", "--tf", "20", "--out", path(dir.path())])
        .env("MIRRORFLOW_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    for a in ["2", "4", "6"] {
        assert!(dir.path().join(format!("alpha-{a}")).join("summary.json").exists());
    }

    let bad = Command::new(env!("CARGO_BIN_EXE_mirrorflow"))
        .args(["run", "--problem", "scalar", "--out", path(&dir.path().join("x"))])
        .env("MIRRORFLOW_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn config_files_in_toml_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let toml_cfg = dir.path().join("c.toml");
    std::fs::write(&toml_cfg, "problem = \"scalar\"\nalpha = 2.0\ntf = 10.0\n[integrator]\nrel_tol = 1e-7\n").unwrap();
    let json_cfg = dir.path().join("c.json");
    std::fs::write(&json_cfg, r#"{"problem": "scalar", "alpha": 2.0, "tf": 10.0, "integrator": {"rel_tol": 1e-7}}"#).unwrap();
    let (ta, ja) = (dir.path().join("t"), dir.path().join("j"));
    assert!(mirrorflow(&["run", "--config", path(&toml_cfg), "--out", path(&ta)]).status.success());
    assert!(mirrorflow(&["run", "--config", path(&json_cfg), "--out", path(&ja)]).status.success());
    assert_eq!(std::fs::read(ta.join("trajectory.csv")).unwrap(), std::fs::read(ja.join("trajectory.csv")).unwrap());

    // Flags override the file.
    let over = dir.path().join("o");
    assert!(mirrorflow(&["run", "--config", path(&toml_cfg), "--alpha", "3", "--out", path(&over)]).status.success());
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(over.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["alpha"], 3.0);

    let typo = dir.path().join("typo.toml");
    std::fs::write(&typo, "alpah = 2\n").unwrap();
    let o = mirrorflow(&["run", "--config", path(&typo)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("alpah"));
}

#[test]
fn integration_failure_exits_nonzero_with_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.toml");
    std::fs::write(&cfg, "problem = \"scalar\"\nalpha = 2.0\n[integrator]\nmax_steps = 20\n").unwrap();
    let out = dir.path().join("run");
    let o = mirrorflow(&["run", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("maximum number of steps"));
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(s["failure"].is_string());
    assert!(s["final_time"].as_f64().unwrap() < 100.0);
    assert!(std::fs::read_to_string(out.join("trajectory.csv")).unwrap().lines().count() > 1);
}

#[test]
fn verify_negative_control_flips_with_slack() {
    let ok = mirrorflow(&["verify", "--only", "0,2"]);
    assert!(ok.status.success(), "{}", stdout(&ok));
    assert!(stdout(&ok).contains("2 of 2 passed"));

    let tampered = mirrorflow(&["verify", "--only", "0", "--slack", "0.5"]);
    assert_eq!(tampered.status.code(), Some(1));
    let text = stdout(&tampered);
    assert!(text.contains("FAIL") && text.contains("consensus"), "{text}");

    assert_eq!(mirrorflow(&["verify", "--only", "42"]).status.code(), Some(2));
}
