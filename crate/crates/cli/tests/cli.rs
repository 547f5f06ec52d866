use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_grazing-lab"));
    c.env_remove("GRAZING_LAB_SEED");
    c
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// Data lines of a CSV, without the `#` header comments.
fn data_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).map(String::from).collect()
}

#[test]
fn check_pairs_cosh_passes() {
    let o = run(bin().args(["check-pairs", "--pair", "cosh"]));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["pair"], "cosh");
    assert!(v[0]["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
}

#[test]
fn check_report_goes_to_configured_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pairs.toml");
    let out = dir.path().join("pairs.json");
    std::fs::write(&cfg, format!("[mc]\nseed = 2024\n\n[output]\npath = {:?}\n", out.display().to_string())).unwrap();
    let o = run(bin().arg("check-pairs").arg("--config").arg(&cfg));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
}

#[test]
fn check_geometry_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("geom.json");
    let o = run(bin().args(["check-geometry", "--frames", "5000", "--out"]).arg(&out));
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
}

#[test]
fn grazing_sweep_writes_rows_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let o = run(bin()
        .args(["grazing-sweep", "--pair", "cosh", "--gamma", "0", "--eps-list", "0.4,0.2,0.1,0.05"])
        .args(["--samples", "20000", "--seed", "5", "--out"])
        .arg(&csv));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines = data_lines(&csv);
    assert_eq!(lines[0], "epsilon,value,value_stderr,target,target_stderr,gap,gap_stderr,rate");
    assert_eq!(lines.len(), 5);
    assert!(lines[4].starts_with("0.05,"));
    let svg = std::fs::read_to_string(csv.with_extension("svg")).unwrap();
    assert!(svg.contains("<svg"));
}

#[test]
fn identical_config_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "[mc]\nsamples = 4000\nseed = 9\nworkers = 2\n\n[functionals]\neps_list = [0.2, 0.1]\ntest_function = \"energy\"\n",
    )
    .unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let o = run(bin().arg("functionals").arg("--config").arg(&cfg).arg("--out").arg(p));
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let strip = |p: &Path| {
        std::fs::read_to_string(p).unwrap().lines().filter(|l| !l.starts_with("# generated:")).collect::<Vec<_>>().join("\n")
    };
    let (sa, sb) = (strip(&a), strip(&b));
    // the config line records the output path, which differs
    let body = |s: &str| s.lines().filter(|l| !l.starts_with("# config:")).collect::<Vec<_>>().join("\n");
    assert_eq!(body(&sa), body(&sb));
    assert!(sa.contains("\"seed\":9"));
    // every value column has a paired _stderr column
    let header = data_lines(&a)[0].clone();
    assert!(header.contains("value,value_stderr"));
}

#[test]
fn environment_seed_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "[mc]\nsamples = 2000\nseed = 1\n\n[functionals]\neps_list = [0.2]\n").unwrap();
    let out = dir.path().join("f.csv");
    let o = run(bin().env("GRAZING_LAB_SEED", "77").arg("functionals").arg("--config").arg(&cfg).arg("--out").arg(&out));
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("\"seed\":77"));
    assert!(data_lines(&out)[1].contains(",77,"));
}

#[test]
fn unknown_key_exits_one_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[kernel]\ngama = 1.0\n").unwrap();
    let o = run(bin().arg("functionals").arg("--config").arg(&cfg));
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("kernel.gama"), "{err}");
}

#[test]
fn missing_required_key_exits_one_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[density]\nkind = \"maxwellian\"\ndim = 2\nx_var = 1.0\ntemperature = 1.0\n").unwrap();
    let o = run(bin().arg("simulate").arg("--config").arg(&cfg));
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("density") && err.contains("drift"), "{err}");
}

#[test]
fn invalid_values_exit_one() {
    assert_eq!(code(&run(bin().args(["check-pairs", "--pair", "sinh"]))), 1);
    assert_eq!(code(&run(bin().args(["grazing-sweep", "--eps-list", "0.1,0.2", "--samples", "100"]))), 1);
    assert_eq!(code(&run(bin().args(["simulate", "--n", "10"]))), 1);
}

#[test]
fn simulate_writes_trace_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, snap) = (dir.path().join("trace.csv"), dir.path().join("snap.csv"));
    let o = run(bin()
        .args(["simulate", "--n", "300", "--dt", "0.005", "--horizon", "0.02", "--eps", "1", "--gamma", "0"])
        .args(["--kappa", "1", "--seed", "2", "--trace-out"])
        .arg(&trace)
        .arg("--snapshot-out")
        .arg(&snap));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(summary["max_energy_drift"].as_f64().unwrap() < 1e-10);
    let t = data_lines(&trace);
    assert_eq!(t.len(), 1 + 5);
    assert!(t[0].starts_with("step,t,mass,momentum_1,momentum_2,energy"));
    let s = data_lines(&snap);
    assert_eq!(s[0], "x_1,x_2,v_1,v_2");
    assert_eq!(s.len(), 301);
    assert!(s[1..].iter().all(|l| l.split(',').count() == 4));
}
