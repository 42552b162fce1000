use std::process::Command;

fn starris() -> Command {
    Command::new(env!("CARGO_BIN_EXE_starris"))
}

#[test]
fn analyze_fbl_dumps_grid() {
    let out = starris().args(["analyze-fbl", "--a", "0.2185", "--points", "50"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# a=0.2185"));
    assert_eq!(lines[1], "gamma,f");
    assert_eq!(lines.len(), 52);
}

#[test]
fn sweep_from_toml_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.toml");
    std::fs::write(
        &config,
        r#"
param = "n_t"
values = [100, 400]
baselines = ["NoRIS", "TI"]
num_draws = 3
base_seed = 0
[scenario.topology]
kind = "two_cell"
users_per_cell = 1
bs_antennas = 2
ris_elements = 4
"#,
    )
    .unwrap();
    let out_path = dir.path().join("out.csv");
    let status = starris()
        .args(["sweep", "--config", config.to_str().unwrap(), "--out", out_path.to_str().unwrap(), "--draws", "2"])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out_path).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().skip(1).all(|l| l.starts_with("n_t,") && l.ends_with(",2,0")));
}

#[test]
fn single_emits_json_trace() {
    let out = starris().args(["single", "--format", "json", "--seed", "3"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let trace = v["trace"].as_array().unwrap();
    assert!(trace.windows(2).all(|w| w[1].as_f64().unwrap() >= w[0].as_f64().unwrap() - 1e-9));
}

#[test]
fn bad_config_fails() {
    let out = starris().args(["sweep", "--config", "/nonexistent.json"]).output().unwrap();
    assert!(!out.status.success());
}
