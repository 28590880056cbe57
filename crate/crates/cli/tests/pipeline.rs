use std::path::Path;
use std::process::Command;

use dhs_cli::{cmd_control, cmd_eval, cmd_gen_data, cmd_simulate, cmd_train, Context, ControllerKind};
use dhs_core::config::ExperimentConfig;
use dhs_core::models::Arch;
use dhs_core::sim::SplitKind;

fn tiny(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        out_dir: out.to_path_buf(),
        seeds: vec![1],
        ..ExperimentConfig::default()
    };
    cfg.data.n_samples = 600;
    cfg.train.epochs = 2;
    cfg.train.batches_per_epoch = 2;
    cfg.control.steps = 6;
    cfg
}

fn data_rows(text: &str) -> usize {
    text.lines().filter(|l| !l.starts_with('#')).count() - 1
}

#[test]
fn missing_topology_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.topology = Some(dir.path().join("nowhere.topo"));
    let err = Context::new(cfg).err().expect("config must be rejected");
    assert!(err.to_string().contains("nowhere.topo"), "{err}");
}

#[test]
fn simulate_one_day_writes_288_rows() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = Context::new(tiny(dir.path())).unwrap();
    let p = cmd_simulate(&ctx, 24.0, false).unwrap();
    let text = std::fs::read_to_string(p).unwrap();
    assert_eq!(data_rows(&text), 288);
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert!(header.starts_with("t,T0s,P1c"));
    assert!(header.ends_with(",P0"));
}

#[test]
fn gen_data_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = cmd_gen_data(&Context::new(tiny(a.path())).unwrap()).unwrap().1;
    let pb = cmd_gen_data(&Context::new(tiny(b.path())).unwrap()).unwrap().1;
    assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());

    let c = tempfile::tempdir().unwrap();
    let mut cfg = tiny(c.path());
    cfg.data.seed += 1;
    let pc = cmd_gen_data(&Context::new(cfg).unwrap()).unwrap().1;
    assert_ne!(std::fs::read(pc).unwrap(), std::fs::read(a.path().join("dataset.csv")).unwrap());
}

#[test]
fn saved_model_evaluates_like_training_report() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = Context::new(tiny(dir.path())).unwrap();
    let (ds, _) = cmd_gen_data(&ctx).unwrap();
    let t = cmd_train(&ctx, Arch::PiGru, 18, &ds, "t").unwrap();
    assert_eq!(t.sizes.iter().sum::<usize>(), 18);
    let run = t.best_run();
    let r = cmd_eval(&ctx, &run.model_path, &ds, SplitKind::Test).unwrap();
    assert_eq!(r.fit, run.test.fit);
    assert!(dir.path().join("tables/t-pi-gru-18.csv").exists());
}

#[test]
fn rule_based_control_holds_its_setpoint() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = Context::new(tiny(dir.path())).unwrap();
    let (r, s) = cmd_control(&ctx, ControllerKind::RuleBased, None, "rb").unwrap();
    assert_eq!(r.len(), 6);
    assert!(r.t0s.iter().all(|t| *t == 75.0));
    assert_eq!(s.indexes.t_avg, None);
    assert!(cmd_control(&ctx, ControllerKind::Nmpc, None, "x").is_err());
}

#[test]
fn binary_runs_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_dhs"))
        .args(["--out", dir.path().to_str().unwrap(), "simulate", "--hours", "2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("simulate.csv")).unwrap();
    assert_eq!(data_rows(&text), 24);

    let out = Command::new(env!("CARGO_BIN_EXE_dhs"))
        .args(["--config", "/nonexistent/cfg.toml", "simulate"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/cfg.toml"));
}
