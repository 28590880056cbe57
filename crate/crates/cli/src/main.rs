use std::path::PathBuf;

use anyhow::{Context as _, Result};
use clap::{Parser, Subcommand};

use dhs_cli::{
    cmd_control, cmd_eval, cmd_gen_data, cmd_reproduce, cmd_simulate, cmd_train, load_or_generate, Context,
    ControllerKind,
};
use dhs_core::config::ExperimentConfig;
use dhs_core::models::{AnyModel, Arch};
use dhs_core::sim::SplitKind;

#[derive(Parser)]
#[command(name = "dhs", version, about = "District heating identification and economic NMPC")]
struct Cli {
    /// Experiment config (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces the configured seed list with a single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Open-loop plant run at constant supply temperature.
    Simulate {
        #[arg(long, default_value_t = 24.0)]
        hours: f64,
        /// Hold the first demand row for the whole run.
        #[arg(long)]
        constant: bool,
    },
    /// Excitation dataset from the plant simulator.
    GenData {
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Identify a model for every seed.
    Train {
        #[arg(long, value_parser = parse_arch)]
        arch: Arch,
        #[arg(long)]
        states: Option<usize>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Free-run metrics of a saved model.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: SplitKind,
    },
    /// One simulated day in closed loop.
    Control {
        #[arg(long, value_parser = parse_controller)]
        controller: ControllerKind,
        /// Model file, required for NMPC.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Dataset, identification and closed-loop comparison in one run.
    Reproduce,
}

fn parse_arch(s: &str) -> Result<Arch, String> {
    s.parse().map_err(|e: dhs_core::Error| e.to_string())
}

fn parse_controller(s: &str) -> Result<ControllerKind, String> {
    s.parse().map_err(|e: dhs_core::Error| e.to_string())
}

fn parse_split(s: &str) -> Result<SplitKind, String> {
    match s {
        "train" => Ok(SplitKind::Train),
        "val" => Ok(SplitKind::Val),
        "test" => Ok(SplitKind::Test),
        _ => Err(format!("unknown split {s:?} (train | val | test)")),
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    if let Command::GenData { samples: Some(n) } = cli.command {
        cfg.data.n_samples = n;
    }
    let ctx = Context::new(cfg)?;

    match cli.command {
        Command::Simulate { hours, constant } => {
            let p = cmd_simulate(&ctx, hours, constant)?;
            println!("wrote {}", p.display());
        }
        Command::GenData { .. } => {
            let (ds, p) = cmd_gen_data(&ctx)?;
            println!("wrote {} ({} rows)", p.display(), ds.len());
        }
        Command::Train { arch, states, dataset } => {
            let ds = load_or_generate(&ctx, dataset.as_deref())?;
            let states = states.unwrap_or(ctx.cfg.identification.states);
            let t = cmd_train(&ctx, arch, states, &ds, "train")?;
            println!("{} {} states, sizes {:?}", t.arch, t.states, t.sizes);
            for r in &t.runs {
                println!("  seed {:>3}: FIT {:6.2}  R2 [{:6.2}, {:6.2}]", r.seed, r.test.fit, r.test.r2_min, r.test.r2_max);
            }
            let a = &t.aggregate;
            println!(
                "  mean: FIT {:.2} ± {:.2}  R2min {:.2} ± {:.2}  R2max {:.2} ± {:.2}",
                a.fit.0, a.fit.1, a.r2_min.0, a.r2_min.1, a.r2_max.0, a.r2_max.1
            );
        }
        Command::Eval { model, dataset, split } => {
            let ds = load_or_generate(&ctx, dataset.as_deref())?;
            let r = cmd_eval(&ctx, &model, &ds, split)?;
            println!("FIT {:.2}  R2 [{:.2}, {:.2}]  ({} samples)", r.fit, r.r2_min, r.r2_max, r.n_samples);
        }
        Command::Control { controller, model } => {
            let m = model
                .map(|p| AnyModel::load(&p, Some(&ctx.reduced)).with_context(|| format!("loading {}", p.display())))
                .transpose()?;
            let label = match controller {
                ControllerKind::RuleBased => "rule-based".to_string(),
                ControllerKind::Nmpc => "nmpc".to_string(),
            };
            let (_, s) = cmd_control(&ctx, controller, m.as_ref(), &label)?;
            print_control(&s);
        }
        Command::Reproduce => {
            let r = cmd_reproduce(&ctx)?;
            for t in r.identification.iter().chain(&r.half_data).chain(&r.controller_models) {
                let a = &t.aggregate;
                println!(
                    "{:>8} {:>6} {:>3} states: FIT {:6.2} ± {:5.2}  R2min {:6.2}  R2max {:6.2}",
                    t.label, t.arch, t.states, a.fit.0, a.fit.1, a.r2_min.0, a.r2_max.0
                );
            }
            for c in &r.control {
                print_control(c);
            }
        }
    }
    Ok(())
}

fn print_control(s: &dhs_cli::ControlSummary) {
    let t_avg = s.indexes.t_avg.map_or("-".to_string(), |t| format!("{t:.3} s"));
    println!(
        "{:<16} C_p {:10.2}  t_avg {:>9}  P_loss {:8.2} kW (mean)  violations {:.1} %",
        s.label,
        s.indexes.cost,
        t_avg,
        s.indexes.loss_mean / 1e3,
        100.0 * s.violation_fraction
    );
}
