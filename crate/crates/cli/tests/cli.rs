use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ris-owc"));
    cmd.env_remove("RIS_OWC_OUT");
    cmd
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn budget_reports_reference_pilot_length() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["budget"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("M_required=128"), "{text}");
    assert!(text.contains("feasible=true"));
    assert!(dir.path().join("budget.json").exists());
}

#[test]
fn strict_budget_exits_four_when_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[budget]\nfeedback_bandwidth_hz = 1000.0\n");
    let o = run(&["--config", &cfg, "budget", "--strict"], dir.path());
    assert_eq!(o.status.code(), Some(4));
    let relaxed = run(&["--config", &cfg, "budget"], dir.path());
    assert_eq!(relaxed.status.code(), Some(0));
    assert!(stdout(&relaxed).contains("feasible=false"));
}

#[test]
fn estimate_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run(&["estimate", "--seed", "7"], a.path()).status.success());
    assert!(run(&["estimate", "--seed", "7"], b.path()).status.success());
    for name in ["estimate.csv", "estimate_summary.json"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    let c = tempfile::tempdir().unwrap();
    assert!(run(&["estimate", "--seed", "8"], c.path()).status.success());
    assert_ne!(
        std::fs::read(a.path().join("estimate.csv")).unwrap(),
        std::fs::read(c.path().join("estimate.csv")).unwrap()
    );
}

#[test]
fn sweep_writes_csv_with_contract_header() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["sweep", "nmse_vs_M", "--trials", "8"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("nmse_vs_M.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "M,mean_nmse,stderr,trials,seed");
    assert_eq!(csv.lines().count(), 4);
    let manifest = std::fs::read_to_string(dir.path().join("nmse_vs_M.manifest.json")).unwrap();
    assert!(manifest.contains("scenario_hash"));
}

#[test]
fn thread_count_does_not_change_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["sweep", "effsnr_vs_nmse", "--trials", "16", "--grid", "0.01,0.02"];
    assert!(run(&[&args[..], &["--threads", "1"]].concat(), a.path()).status.success());
    assert!(run(&[&args[..], &["--threads", "3"]].concat(), b.path()).status.success());
    assert_eq!(
        std::fs::read(a.path().join("effsnr_vs_nmse.csv")).unwrap(),
        std::fs::read(b.path().join("effsnr_vs_nmse.csv")).unwrap()
    );
}

#[test]
fn json_format_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--format", "json", "sweep", "complexity", "--grid", "8,16"], dir.path());
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("complexity.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["points"].as_array().unwrap().len(), 2);
}

#[test]
fn output_directory_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().arg("channel").env("RIS_OWC_OUT", dir.path()).output().unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("channel.csv").exists());
}

#[test]
fn unknown_key_exits_two_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[link]\nextinction = 1e-4\n");
    let o = run(&["--config", &cfg, "channel"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("extinction"));
}

#[test]
fn invalid_value_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[pilot]\nlength = 10\n");
    let o = run(&["--config", &cfg, "estimate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pilot.length"));
}

#[test]
fn missing_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--config", "/nonexistent/scenario.toml", "budget"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn quadrature_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[optics]\nquadrature_nodes = 8\nquadrature_max_nodes = 16\nquadrature_rel_tol = 1e-15\n\
         [jitter.tr]\nsigma_x_mrad = 0.3\ncorrelation = 0.5\n",
    );
    let o = run(&["--config", &cfg, "channel"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn shipped_reference_config_matches_builtin_defaults() {
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml");
    let dir = tempfile::tempdir().unwrap();
    let a = run(&["--config", shipped.to_str().unwrap(), "budget"], dir.path());
    let b = run(&["budget"], dir.path());
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn remaining_subcommands_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["pixel-gain", "--points", "5"], dir.path());
    assert!(o.status.success());
    assert!(dir.path().join("pixel_gain_maps.csv").exists());
    assert!(dir.path().join("pixel_gains.json").exists());

    let o = run(&["adapt"], dir.path());
    assert!(o.status.success());
    let trace = std::fs::read_to_string(dir.path().join("adapt_trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,objective\n"));

    let cfg = write_config(dir.path(), "[experiment]\ntrials = 20\n");
    let o = run(&["--config", &cfg, "baselines"], dir.path());
    assert!(o.status.success());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("baselines.json")).unwrap()).unwrap();
    assert!(v["realistic_snr_db"].as_f64().unwrap() <= v["perfect_csi_snr_db"].as_f64().unwrap());
}

#[test]
fn unknown_experiment_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["sweep", "nmse_vs_everything"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
