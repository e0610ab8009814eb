use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mkofl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mkofl")).args(args).output().expect("spawn mkofl")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn ok(args: &[&str]) -> Output {
    let out = mkofl(args);
    assert!(out.status.success(), "mkofl {args:?} failed: {}", stderr(&out));
    out
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_one_mse_row_per_round() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    ok(&["run", "--set", "rounds=37", "--set", "nodes=4", "--trials", "2", "--out", s(&out)]);
    let (header, rows) = read_csv(&out.join("mse_trace.csv"));
    assert_eq!(header, ["round", "mse", "uplink_scalars", "downlink_scalars"]);
    assert_eq!(rows.len(), 37);
    let (_, trace) = read_csv(&out.join("trace.csv"));
    assert_eq!(trace.len(), 37 * 4);
    for f in ["summary.json", "manifest.json", "config.toml", "selection_fraction.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["runs"][0]["seeds"]["data"], 3);
    assert_eq!(manifest["runs"][0]["seeds"]["trials"].as_array().unwrap().len(), 2);
}

#[test]
fn identical_invocations_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&["run", "--set", "rounds=40", "--trials", "3", "--seed", "11", "--verbose-trace", "--out", s(&out)]);
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["mse_trace.csv", "trace.csv", "selection_fraction.csv", "summary.json", "config.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let strip = |p: &Path| {
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("manifest.json")).unwrap()).unwrap();
        let m = v.as_object_mut().unwrap();
        for key in ["started_unix_secs", "duration_secs", "args", "replay"] {
            m.remove(key);
        }
        v
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn config_snapshot_replays_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    ok(&["run", "--set", "rounds=30", "--set", "lambda=0.05", "--algo", "naive_mk", "--trials", "2", "--out", s(&first)]);
    let second = dir.path().join("second");
    ok(&["run", "--config", s(&first.join("config.toml")), "--out", s(&second)]);
    for f in ["trace.csv", "mse_trace.csv", "summary.json", "config.toml"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn missing_dataset_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, "rounds = 10\n[dataset]\nkind = \"csv\"\npath = \"no_such_file.csv\"\nlabel_column = \"y\"\n").unwrap();
    let out = mkofl(&["run", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("no_such_file.csv"), "{}", stderr(&out));

    let out = mkofl(&["run", "--config", s(&dir.path().join("absent.toml"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("absent.toml"));
}

#[test]
fn invalid_settings_exit_with_config_code() {
    for args in [
        vec!["run", "--set", "roundz=3"],
        vec!["run", "--set", "budget=2"],
        vec!["run", "--algo", "sk_ofl"],
        vec!["run", "--algo", "bogus"],
        vec!["run", "--set", "burn_in=600"],
        vec!["run", "--bogus-flag"],
    ] {
        let out = mkofl(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
        assert!(!stderr(&out).is_empty());
    }
    assert_eq!(mkofl(&["--help"]).status.code(), Some(0));
}

#[test]
fn csv_dataset_paths_resolve_next_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("a,b,y\n");
    for i in 0..200 {
        let (a, b) = (i as f64 / 200.0, ((i * 37) % 200) as f64 / 200.0);
        text.push_str(&format!("{a},{b},{}\n", (3.0 * a).sin() + b));
    }
    fs::create_dir(dir.path().join("data")).unwrap();
    fs::write(dir.path().join("data/toy.csv"), text).unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, "rounds = 20\nnodes = 5\ntrials = 1\n[dataset]\nkind = \"csv\"\npath = \"data/toy.csv\"\nlabel_column = \"y\"\n").unwrap();
    let out = dir.path().join("o");
    ok(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert!(!out.join("selection_fraction.csv").exists());
    let (_, rows) = read_csv(&out.join("mse_trace.csv"));
    assert_eq!(rows.len(), 20);

    let too_long = mkofl(&["run", "--config", s(&cfg), "--set", "rounds=100", "--out", s(&out)]);
    assert_eq!(too_long.status.code(), Some(2), "{}", stderr(&too_long));
}

#[test]
fn compare_aligns_mk_and_every_sk_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    ok(&["compare", "--runs", "mk,sk", "--set", "rounds=25", "--set", "nodes=5", "--trials", "2", "--out", s(&out)]);
    let (header, rows) = read_csv(&out.join("compare_mse.csv"));
    assert_eq!(header.len(), 13);
    assert_eq!(header[0], "round");
    assert_eq!(header[1], "mk_ofl");
    assert_eq!(header[12], "sk_ofl_p11");
    assert_eq!(rows.len(), 25);
    assert!(rows.iter().all(|r| r.len() == 13));
}

#[test]
fn naive_uplink_costs_p_times_mk() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    ok(&["compare", "--runs", "mk,naive", "--set", "rounds=15", "--trials", "1", "--out", s(&out)]);
    let (header, rows) = read_csv(&out.join("compare_comm.csv"));
    assert_eq!(header, ["run", "uplink_scalars_per_node_round", "uplink_scalars_total", "downlink_scalars_total"]);
    let get = |name: &str, col: usize| rows.iter().find(|r| r[0] == name).unwrap()[col].parse::<f64>().unwrap();
    let (p, d) = (11.0, 49.0);
    let expected = (p * 2.0 * d + p) / (2.0 * d + 1.0);
    assert_eq!(get("naive_mk", 1) / get("mk_ofl", 1), expected);
    assert_eq!(get("naive_mk", 2) / get("mk_ofl", 2), expected);
    assert!((expected - p).abs() < 1e-12);
}

fn snapshot_configs(dir: &Path) -> (PathBuf, PathBuf) {
    let out = dir.join("base");
    ok(&["compare", "--runs", "mk,naive", "--set", "rounds=10", "--trials", "1", "--out", s(&out)]);
    (out.join("runs/mk_ofl.toml"), out.join("runs/naive_mk.toml"))
}

#[test]
fn compare_replays_from_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let (mk, naive) = snapshot_configs(dir.path());
    let out = dir.path().join("again");
    ok(&["compare", s(&mk), s(&naive), "--out", s(&out)]);
    assert_eq!(
        fs::read(dir.path().join("base/compare_mse.csv")).unwrap(),
        fs::read(out.join("compare_mse.csv")).unwrap()
    );
}

#[test]
fn compare_refuses_mismatched_data_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let (mk, naive) = snapshot_configs(dir.path());
    let text = fs::read_to_string(&naive).unwrap();
    assert!(text.contains("seed = 3\n"));
    let other = dir.path().join("other_seed.toml");
    fs::write(&other, text.replace("seed = 3\n", "seed = 4\n")).unwrap();
    let out = mkofl(&["compare", s(&mk), s(&other), "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("data seed mismatch") && err.contains("data seed 3") && err.contains("data seed 4"), "{err}");
    assert!(!dir.path().join("x/compare_mse.csv").exists());

    let drift = dir.path().join("drift.toml");
    fs::write(&drift, fs::read_to_string(&naive).unwrap().replace("lambda = 0.01", "lambda = 0.5")).unwrap();
    let out = mkofl(&["compare", s(&mk), s(&drift), "--out", s(&dir.path().join("y"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("lambda"));
}

#[test]
fn oracle_on_single_node_run_has_zero_tv() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    ok(&["run", "--set", "nodes=1", "--set", "rounds=60", "--trials", "1", "--verbose-trace", "--out", s(&run)]);
    ok(&["oracle", "--trace", s(&run.join("trace.csv")), "--config", s(&run.join("config.toml")), "--samples", "2000"]);
    let (header, rows) = read_csv(&run.join("central_pmf.csv"));
    assert_eq!(header, ["round", "tv"]);
    assert_eq!(rows.len(), 60);
    for r in &rows {
        assert!(r[1].parse::<f64>().unwrap() <= 1e-12, "{r:?}");
    }
}

#[test]
fn oracle_reports_regret_and_hindsight_table() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    ok(&["run", "--set", "nodes=5", "--set", "rounds=80", "--trials", "1", "--verbose-trace", "--out", s(&run)]);
    let out = dir.path().join("oracle");
    ok(&[
        "oracle",
        "--trace",
        s(&run.join("trace.csv")),
        "--config",
        s(&run.join("config.toml")),
        "--samples",
        "5000",
        "--frozen",
        "4",
        "--out",
        s(&out),
    ]);
    let (header, rows) = read_csv(&out.join("regret.csv"));
    assert!(header.iter().any(|h| h == "regret_over_sqrt_t"));
    assert_eq!(rows.len(), 1);
    let (_, hindsight) = read_csv(&out.join("hindsight.csv"));
    assert_eq!(hindsight.len(), 11);
    let (_, mart) = read_csv(&out.join("martingale.csv"));
    assert_eq!(mart.len(), 4);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("oracle_report.json")).unwrap()).unwrap();
    assert_eq!(report["regret"]["hindsight_losses"].as_array().unwrap().len(), 11);
    assert!(out.join("oracle_manifest.json").is_file());
}

#[test]
fn oracle_without_verbose_trace_is_actionable() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    ok(&["run", "--set", "rounds=10", "--trials", "1", "--out", s(&run)]);
    let out = mkofl(&["oracle", "--trace", s(&run.join("trace.csv")), "--config", s(&run.join("config.toml"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--verbose-trace"), "{}", stderr(&out));
}

#[test]
fn oracle_rejects_a_trace_from_another_config() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    ok(&["run", "--set", "rounds=10", "--trials", "1", "--verbose-trace", "--out", s(&run)]);
    let trace = run.join("trace.csv");
    let out = mkofl(&["oracle", "--trace", s(&trace), "--set", "rounds=12", "--set", "verbose_trace=true"]);
    assert_eq!(out.status.code(), Some(2));
    let out = mkofl(&["oracle", "--trace", s(&trace), "--set", "rounds=10", "--set", "dataset.seed=5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sample row"), "{}", stderr(&out));
    let out = mkofl(&["oracle", "--trace", s(&dir.path().join("nothing.csv"))]);
    assert_eq!(out.status.code(), Some(2));
}
