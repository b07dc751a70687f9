use std::fs;
use std::path::Path;
use std::process::Command;

fn coldec(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_coldec")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn amplitudes_with_defaults_writes_table_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = coldec(&["amplitudes", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("amplitudes.csv")).unwrap();
    assert!(csv.starts_with("k,re_r,im_r,re_t,im_t,abs_r_sq"));
    assert_eq!(csv.lines().count(), 2049);
    let manifest: toml::Table = fs::read_to_string(out.join("manifest_amplitudes.toml")).unwrap().parse().unwrap();
    assert_eq!(manifest["status"].as_str(), Some("ok"));
    assert_eq!(manifest["inputs_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn even_node_count_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[grid]\nnodes = 200\n");
    let res = coldec(&["kernel", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("grid.nodes"));
}

#[test]
fn unknown_key_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[packet]\nmomentum = 3.0\n");
    let res = coldec(&["amplitudes", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn evolve_writes_snapshots_series_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[grid]\nnodes = 61\n[time]\nsteps = 300\n");
    let out = dir.path().join("out");
    let res = coldec(&[
        "evolve",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--snapshots",
        "10,20",
        "--threads",
        "2",
        "--emit-plots",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for name in ["density_t0.csv", "density_t10.csv", "rho_abs_t20.csv", "density_t300.csv", "timeseries.csv"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let series = fs::read_to_string(out.join("timeseries.csv")).unwrap();
    assert!(series.starts_with("step,t,trace,herm_defect,momentum,kinetic_energy,visibility"));
    assert_eq!(series.lines().count(), 302);
    let script = fs::read_to_string(out.join("plot_density.gp")).unwrap();
    assert!(script.contains("density_t10.csv"));
    assert!(out.join("plot_rho_abs.gp").exists() && out.join("plot_timeseries.gp").exists());
}

#[test]
fn validate_writes_convergence_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = coldec(&["validate", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let table = fs::read_to_string(out.join("oracle_convergence.csv")).unwrap();
    assert!(table.starts_with("tau,l2_error"));
}

#[test]
fn coarse_oracle_grid_fails_the_norm_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[oracle]\nn_x = 8192\n");
    let out = dir.path().join("out");
    let res = coldec(&["validate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("oracle norm defect"));
    let manifest: toml::Table = fs::read_to_string(out.join("manifest_validate.toml")).unwrap().parse().unwrap();
    assert_eq!(manifest["status"].as_str(), Some("invariant_violation"));
}

#[test]
fn small_oracle_window_is_rejected_with_minimum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[oracle]\nx_window = 0.05\n");
    let res = coldec(&["validate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("minimum"));
}
