use std::path::Path;
use std::process::Command;

use fxdiff_cli::ExperimentConfig;

fn fxdiff(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fxdiff"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml_string()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn tiny_gains_are_refused_with_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::reference();
    cfg.differentiator.gains = Some(vec![1e-6; 3]);
    let path = write_config(dir.path(), &cfg);
    let out = fxdiff(&["--config", &path, "simulate"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("validation"));
}

#[test]
fn unknown_keys_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        ExperimentConfig::reference().to_toml_string() + "\nbogus = 1\n",
    )
    .unwrap();
    let out = fxdiff(
        &["--config", path.to_str().unwrap(), "simulate"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn uncertifiable_reference_design_exits_with_certification_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = fxdiff(&["certify"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn simulate_writes_a_traceable_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = fxdiff(&["simulate", "--t-final", "2"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config_digest: "));
    assert_eq!(lines.next().unwrap(), "t,e_1,e_2,e_3,norm_e,V");
    assert!(lines.count() > 100);
}

fn sweep_bytes(workers: &str) -> (Vec<u8>, String) {
    let dir = tempfile::tempdir().unwrap();
    let out = fxdiff(
        &["sweep-ic", "--t-final", "4", "--workers", workers],
        dir.path(),
    );
    assert!(
        out.status.code().is_some_and(|c| c == 0 || c == 2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let bytes = std::fs::read(dir.path().join("sweep_ic.csv")).unwrap();
    (bytes, String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn sweeps_are_deterministic_and_independent_of_worker_count() {
    let (a, _) = sweep_bytes("1");
    let (b, _) = sweep_bytes("1");
    let (c, _) = sweep_bytes("3");
    assert!(a == b, "repeated runs differ");
    assert!(a == c, "worker count changes the output");
}

#[test]
fn noise_sweep_is_deterministic() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let out = fxdiff(
            &["sweep-noise", "--t-final", "6", "--seed", "5"],
            dir.path(),
        );
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        std::fs::read(dir.path().join("sweep_noise.csv")).unwrap()
    };
    assert!(run() == run(), "repeated noise sweeps differ");
}
