use std::process::{Command, Output};

fn rccap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rccap")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(rccap(&["figure1", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(rccap(&["bounds", "--phi", "1.5"]).status.code(), Some(2));
    assert_eq!(rccap(&[]).status.code(), Some(2));
}

#[test]
fn bounds_for_white_noise_equal_dimension() {
    let out = rccap(&["bounds", "--n", "7"]);
    assert!(out.status.success());
    let v = json(&out);
    for key in ["rho_bound", "spectral_bound", "gershgorin"] {
        assert!((v[key].as_f64().unwrap() - 7.0).abs() < 1e-9, "{key}: {v}");
    }
}

#[test]
fn model_flag_maps_grid_value() {
    let out = rccap(&["bounds", "--n", "2", "--model", "ar1", "--phi", "0.5"]);
    let v = json(&out);
    assert!((v["gershgorin"].as_f64().unwrap() - 6.0).abs() < 1e-9);
}

#[test]
fn rank_and_reduce_on_generated_system() {
    let v = json(&rccap(&["rank", "--n", "4", "--seed", "3"]));
    assert_eq!(v["capacity"]["mc"], 4);
    assert_eq!(v["controllability"]["rank"], 4);
    let v = json(&rccap(&["reduce", "--n", "4", "--seed", "3"]));
    assert_eq!(v["injection"].as_array().unwrap().len(), 4);
}

#[test]
fn analytic_capacity_of_system_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sys.json");
    std::fs::write(&path, r#"{"type":"linear","A":[[0.5]],"C":[1.0]}"#).unwrap();
    let p = path.to_str().unwrap();
    let v = json(&rccap(&["capacity", "--system", p, "--analytic", "--tau-max", "200"]));
    assert!((v["mc_total"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    let out = rccap(&["capacity", "--system", p, "--tau-max", "20", "--length", "20000"]);
    assert!(out.status.success());
    assert!((json(&out)["mc_total"].as_f64().unwrap() - 1.0).abs() < 0.05);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    let out = dir.path().join("out");
    std::fs::write(
        &cfg,
        format!(
            "n = 3\ntau_max = 10\nlength = 1000\nmodels = [\"ar1\"]\ngrid = [0.0, 0.5]\noutput_dir = {:?}\n",
            dir.path().join("ignored")
        ),
    )
    .unwrap();
    let status = rccap(&[
        "figure1",
        "--config",
        cfg.to_str().unwrap(),
        "--grid",
        "0,0.2,0.4",
        "--out",
        out.to_str().unwrap(),
        "--plot",
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let csv = std::fs::read_to_string(out.join("figure1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().nth(3).unwrap().starts_with("ar1,0.40,0.00,"));
    assert!(out.join("figure1_ar1.svg").exists());
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn malformed_config_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    assert_eq!(rccap(&["figure1", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn quick_selftest_passes_and_reports_json() {
    let out = rccap(&["selftest", "--scale", "quick", "--seed", "5"]);
    let v = json(&out);
    assert_eq!(out.status.code(), Some(0), "{v}");
    assert_eq!(v["passed"], true);
    assert!(v["checks"].as_array().unwrap().len() >= 20);
}
