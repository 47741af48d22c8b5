use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use twistlab_cli::config::ObservableSpec;
use twistlab_cli::{run, Experiment, ExperimentConfig, RunManifest};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_twistlab"))
}

/// sha256 of every file except the manifest, which records wall time.
fn digests(dir: &Path) -> BTreeMap<String, String> {
    let m: RunManifest = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    m.verify(dir).unwrap();
    m.files.into_iter().map(|f| (f.path, f.sha256)).collect()
}

fn config(kind: Experiment, out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(kind);
    c.seed = Some(2024);
    c.out = out.into();
    c
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    for kind in [Experiment::TwistedSweep, Experiment::KzExponents, Experiment::GapSweep] {
        let mut c = config(kind, &out);
        c.surfaces = 4;
        c.samples.zorich_steps = 2000;
        run(kind, &c, 1).unwrap();
        let one = digests(&out);
        std::fs::remove_dir_all(&out).unwrap();
        let m = run(kind, &c, 4).unwrap();
        assert_eq!(m.threads, 4);
        assert_eq!(digests(&out), one, "{}", kind.name());
        std::fs::remove_dir_all(&out).unwrap();
    }
}

#[test]
fn seed_changes_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut c = config(Experiment::TwistedSweep, &out);
    run(Experiment::TwistedSweep, &c, 1).unwrap();
    let a = std::fs::read(out.join("sweep_000.csv")).unwrap();
    c.seed = Some(2025);
    run(Experiment::TwistedSweep, &c, 1).unwrap();
    assert_ne!(std::fs::read(out.join("sweep_000.csv")).unwrap(), a);
}

#[test]
fn manifest_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let m = run(Experiment::GapSweep, &config(Experiment::GapSweep, &out), 1).unwrap();
    assert_eq!(m.config_hash, config(Experiment::GapSweep, &out).hash());
    assert!(m.files.iter().any(|f| f.path == "gap_000.csv"));
    m.verify(&out).unwrap();
    std::fs::write(out.join("gap_000.csv"), "lambda\n").unwrap();
    assert!(m.verify(&out).is_err());
}

#[test]
fn stratum_info_for_h2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("si");
    let status = bin().args(["stratum-info", "--seed", "1", "--out"]).arg(&out).status().unwrap();
    assert!(status.success());
    let mut r = csv::Reader::from_path(out.join("stratum_info.csv")).unwrap();
    let row: BTreeMap<String, String> = r.deserialize().next().unwrap().unwrap();
    assert_eq!(row["genus"], "2");
    assert_eq!(row["kappa"], "2");
    assert_eq!(row["d"], "4");
}

#[test]
fn smoke_sweep_is_fast() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sw");
    let start = Instant::now();
    let status = bin().args(["twisted-sweep", "--seed", "5", "--format", "json", "--out"]).arg(&out).status().unwrap();
    assert!(status.success());
    assert!(start.elapsed().as_secs_f64() < 10.0);
    let rows: Vec<serde_json::Value> = serde_json::from_slice(&std::fs::read(out.join("sweep_000.json")).unwrap()).unwrap();
    assert_eq!(rows.len(), 27);
    assert!(rows[0]["abs"].as_f64().unwrap() > 0.0);
    assert!(out.join("plot.py").exists() && out.join("config.json").exists());
}

#[test]
fn config_file_round_trips_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w");
    let mut c = config(Experiment::Weakmix, &out);
    c.observable = ObservableSpec::Vertical { max_mode: 2, terms: 2 };
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, c.to_json()).unwrap();
    let status = bin().arg("weakmix").arg("--config").arg(&path).status().unwrap();
    assert!(status.success());
    assert_eq!(std::fs::read_to_string(out.join("config.json")).unwrap(), c.to_json());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| bin().args(args).current_dir(dir.path()).status().unwrap().code();
    assert_eq!(code(&["twisted-sweep", "--out", "x"]), Some(2));

    std::fs::write(dir.path().join("bad.json"), "{\"schema_version\": 1, \"bogus\": 3}").unwrap();
    assert_eq!(code(&["spectral", "--config", "bad.json"]), Some(2));

    let mut c = config(Experiment::TwistedSweep, Path::new("partial"));
    c.surfaces = 2;
    c.t_grid = vec![10.0, 20.0, 40.0];
    std::fs::write(dir.path().join("partial.json"), c.to_json()).unwrap();
    assert_eq!(code(&["twisted-sweep", "--config", "partial.json"]), Some(3));
    let m: RunManifest = serde_json::from_str(&std::fs::read_to_string(dir.path().join("partial/manifest.json")).unwrap()).unwrap();
    assert_eq!(m.failed_tasks(), 2);

    std::fs::write(dir.path().join("blocker"), "").unwrap();
    assert_eq!(code(&["stratum-info", "--seed", "1", "--out", "blocker/inner"]), Some(1));
}
