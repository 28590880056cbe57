//! Pipeline commands behind the `dhs` binary. Every command writes under the
//! configured output directory and stamps its files with the config
//! fingerprint.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use dhs_core::config::ExperimentConfig;
use dhs_core::metrics::{evaluate, AggregateReport, EvalReport};
use dhs_core::models::{build_model, AnyModel, Arch};
use dhs_core::nmpc::{
    closed_loop, default_demand_profile, read_profile_csv, ClosedLoopResult, Controller, NmpcController,
    PerformanceIndexes, PriceProfile, RuleBasedController,
};
use dhs_core::rnn::{train_tbptt, SequenceModel};
use dhs_core::sim::{generate_dataset, Dataset, Simulator, SplitKind};
use dhs_core::topology::{reduce_graph, NetworkGraph, ReducedGraph};
use dhs_core::{Error, Result};

pub struct Context {
    pub cfg: ExperimentConfig,
    pub fingerprint: String,
    pub graph: NetworkGraph,
    pub reduced: ReducedGraph,
    pub sim: Simulator,
}

impl Context {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.check()?;
        let graph = cfg.graph()?;
        let reduced = reduce_graph(&graph)?;
        let sim = Simulator::new(graph.clone(), cfg.sim.clone())?;
        let fingerprint = cfg.fingerprint()?;
        Ok(Context {
            cfg,
            fingerprint,
            graph,
            reduced,
            sim,
        })
    }

    /// Path under the output directory, with parents created.
    pub fn out_path(&self, rel: &str) -> Result<PathBuf> {
        let p = self.cfg.out_dir.join(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(p)
    }

    fn write(&self, rel: &str, text: &str) -> Result<PathBuf> {
        let p = self.out_path(rel)?;
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Stamped<'a, T> {
            fingerprint: &'a str,
            #[serde(flatten)]
            value: &'a T,
        }
        let text = serde_json::to_string_pretty(&Stamped {
            fingerprint: &self.fingerprint,
            value,
        })
        .map_err(|e| Error::Format(e.to_string()))?;
        self.write(rel, &text)
    }

    /// Per-load demand rows, periodic, at least `n` of them.
    pub fn demand_rows(&self, n: usize) -> Result<Vec<Vec<f64>>> {
        let day = match &self.cfg.control.demand_profile {
            Some(p) => read_demand_csv(p, self.graph.n_loads())?,
            None => default_demand_profile(self.graph.n_loads(), self.cfg.nmpc.steps_per_day),
        };
        Ok(day.iter().cycle().take(n).cloned().collect())
    }

    pub fn prices(&self) -> Result<PriceProfile> {
        match &self.cfg.control.price_profile {
            Some(p) => PriceProfile::new(read_profile_csv(p)?),
            None => Ok(PriceProfile::synthetic(self.cfg.nmpc.steps_per_day)),
        }
    }
}

/// Reads `k,P1c,…` rows; `#` lines and a non-numeric header are skipped.
pub fn read_demand_csv(path: &Path, n_loads: usize) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != n_loads + 1 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: format!("expected {} columns, found {}", n_loads + 1, fields.len()),
            });
        }
        if rows.is_empty() && fields[0].parse::<f64>().is_err() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = fields[1..].iter().map(|f| f.parse::<f64>()).collect();
        rows.push(row.map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: "no demand rows".into(),
        });
    }
    Ok(rows)
}

/// Open-loop run under the control demand profile and a constant supply
/// temperature. With `constant`, the first demand row is held throughout.
pub fn cmd_simulate(ctx: &Context, hours: f64, constant: bool) -> Result<PathBuf> {
    let dt = ctx.sim.config().dt;
    let steps = (hours * 3600.0 / dt).round() as usize;
    let mut demands = ctx.demand_rows(steps.max(1))?;
    if constant {
        let first = demands[0].clone();
        demands.iter_mut().for_each(|r| *r = first.clone());
    }
    let t0s = ctx.cfg.control.initial_t0s;
    let mut state = ctx.sim.initial_state(t0s)?;
    ctx.sim.warm_up(&mut state, t0s, &demands[0], ctx.sim.config().warmup_hours)?;

    let mut s = format!("# fingerprint={}\nt", ctx.fingerprint);
    for name in ctx
        .sim
        .input_names()
        .iter()
        .chain(&ctx.sim.disturbance_names())
        .chain(&ctx.sim.output_names())
    {
        s.push(',');
        s.push_str(name);
    }
    s.push_str(",P0\n");
    for (k, d) in demands.iter().take(steps).enumerate() {
        let rec = ctx.sim.step(&mut state, t0s, d)?;
        let _ = write!(s, "{},{t0s}", k as f64 * dt);
        for v in d.iter().chain(&rec.outputs) {
            let _ = write!(s, ",{v}");
        }
        let _ = writeln!(s, ",{}", rec.station_power);
    }
    ctx.write("simulate.csv", &s)
}

pub fn cmd_gen_data(ctx: &Context) -> Result<(Dataset, PathBuf)> {
    let ds = generate_dataset(&ctx.sim, &ctx.cfg.data)?;
    let p = ctx.write("dataset.csv", &ds.to_csv(&ctx.fingerprint))?;
    Ok((ds, p))
}

/// The dataset file under the output directory, generated when missing.
pub fn load_or_generate(ctx: &Context, path: Option<&Path>) -> Result<Dataset> {
    match path {
        Some(p) => Dataset::read_csv(p),
        None => {
            let p = ctx.cfg.out_dir.join("dataset.csv");
            if p.exists() {
                Dataset::read_csv(&p)
            } else {
                Ok(cmd_gen_data(ctx)?.0)
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    pub best_epoch: Option<usize>,
    pub best_val_fit: Option<f64>,
    pub diverged_at: Option<usize>,
    pub test: EvalReport,
    pub model_path: PathBuf,
    /// Wall-clock seconds.
    pub train_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainSummary {
    pub label: String,
    pub arch: String,
    pub states: usize,
    pub sizes: Vec<usize>,
    pub train_rows: usize,
    pub runs: Vec<SeedRun>,
    pub aggregate: AggregateReport,
}

impl TrainSummary {
    /// Run with the highest validation FIT; the first one on ties.
    pub fn best_run(&self) -> &SeedRun {
        let key = |r: &SeedRun| r.best_val_fit.unwrap_or(f64::NEG_INFINITY);
        self.runs
            .iter()
            .reduce(|a, b| if key(b) > key(a) { b } else { a })
            .expect("at least one seed")
    }

    fn stem(&self) -> String {
        format!("{}-{}-{}", self.label, self.arch, self.states)
    }
}

/// Trains one model per configured seed and evaluates each on the test split.
pub fn cmd_train(ctx: &Context, arch: Arch, states: usize, ds: &Dataset, label: &str) -> Result<TrainSummary> {
    let id = &ctx.cfg.identification;
    let stem = format!("{label}-{arch}-{states}");
    let runs = ctx
        .cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<(SeedRun, Vec<usize>)> {
            let model = build_model(arch, &ctx.graph, &ctx.reduced, states, id.gru_layers, id.cumulative_demand, seed)?;
            let sizes = model.sizes();
            let mut tc = ctx.cfg.train.clone();
            tc.seed = seed;
            let started = Instant::now();
            let out = train_tbptt(&model, ds, &tc)?;
            let train_seconds = started.elapsed().as_secs_f64();
            let test = evaluate(&out.model, ds, SplitKind::Test, id.eval_washout)?;
            let model_path = ctx.write(&format!("models/{stem}-s{seed}.json"), &out.model.to_json_tagged(&ctx.fingerprint))?;
            ctx.write(&format!("history/{stem}-s{seed}.csv"), &out.history.to_csv(&ctx.fingerprint))?;
            ctx.write_json(&format!("eval/{stem}-s{seed}.json"), &test)?;
            let best = out.history.best();
            Ok((
                SeedRun {
                    seed,
                    best_epoch: best.map(|b| b.epoch),
                    best_val_fit: best.map(|b| b.val_fit),
                    diverged_at: out.history.diverged_at,
                    test,
                    model_path,
                    train_seconds,
                },
                sizes,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let sizes = runs[0].1.clone();
    let runs: Vec<SeedRun> = runs.into_iter().map(|r| r.0).collect();
    let reports: Vec<EvalReport> = runs.iter().map(|r| r.test.clone()).collect();
    let summary = TrainSummary {
        label: label.to_string(),
        arch: arch.to_string(),
        states,
        sizes,
        train_rows: ds.range(SplitKind::Train).len(),
        aggregate: AggregateReport::from_reports(&reports),
        runs,
    };

    let mut s = format!("# fingerprint={}\nseed,fit,r2_min,r2_max,best_epoch\n", ctx.fingerprint);
    for r in &summary.runs {
        let best = r.best_epoch.map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{best}", r.seed, r.test.fit, r.test.r2_min, r.test.r2_max);
    }
    let a = &summary.aggregate;
    let _ = writeln!(s, "mean,{},{},{},", a.fit.0, a.r2_min.0, a.r2_max.0);
    let _ = writeln!(s, "std,{},{},{},", a.fit.1, a.r2_min.1, a.r2_max.1);
    ctx.write(&format!("tables/{}.csv", summary.stem()), &s)?;
    Ok(summary)
}

pub fn cmd_eval(ctx: &Context, model_path: &Path, ds: &Dataset, split: SplitKind) -> Result<EvalReport> {
    let model = AnyModel::load(model_path, Some(&ctx.reduced))?;
    let report = evaluate(&model, ds, split, ctx.cfg.identification.eval_washout)?;
    let stem = model_path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    ctx.write_json(&format!("eval/{stem}-{}.json", split_name(split)), &report)?;
    Ok(report)
}

pub fn split_name(split: SplitKind) -> &'static str {
    match split {
        SplitKind::Train => "train",
        SplitKind::Val => "val",
        SplitKind::Test => "test",
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControllerKind {
    Nmpc,
    RuleBased,
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nmpc" => Ok(ControllerKind::Nmpc),
            "rule-based" => Ok(ControllerKind::RuleBased),
            _ => Err(Error::Config(format!("unknown controller {s:?} (nmpc | rule-based)"))),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ControlSummary {
    pub label: String,
    pub controller: String,
    pub indexes: PerformanceIndexes,
    pub failures: usize,
    pub steps: usize,
    pub t0s_min: f64,
    pub t0s_max: f64,
    /// Largest step-to-step change of the applied supply temperature, °C.
    pub max_rate: f64,
    /// Fraction of steps with a load supply temperature more than 0.5 °C
    /// below its lower bound.
    pub violation_fraction: f64,
    pub worst_violation: f64,
    pub solve_times: Vec<Option<f64>>,
}

impl ControlSummary {
    fn from_result(label: &str, r: &ClosedLoopResult, initial_t0s: f64) -> Self {
        ControlSummary {
            label: label.to_string(),
            controller: r.controller.clone(),
            indexes: r.indexes.clone(),
            failures: r.failures,
            steps: r.len(),
            t0s_min: r.t0s.iter().copied().fold(f64::INFINITY, f64::min),
            t0s_max: r.t0s.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            max_rate: r.max_rate(initial_t0s),
            violation_fraction: r.violation_fraction(0.5),
            worst_violation: r.lower_violation.iter().copied().fold(0.0, f64::max),
            solve_times: r.solve_times.clone(),
        }
    }
}

/// One simulated day under the chosen controller. `model` is required for
/// NMPC.
pub fn cmd_control(
    ctx: &Context,
    kind: ControllerKind,
    model: Option<&AnyModel>,
    label: &str,
) -> Result<(ClosedLoopResult, ControlSummary)> {
    let c = &ctx.cfg.control;
    let nmpc = &ctx.cfg.nmpc;
    let mut controller: Box<dyn Controller + '_> = match kind {
        ControllerKind::RuleBased => Box::new(RuleBasedController::new(c.rule_based_t0s, nmpc.t0s_bounds)?),
        ControllerKind::Nmpc => {
            let m = model.ok_or_else(|| Error::Config("NMPC needs a model".into()))?;
            let name = format!("{}-{}", m.arch(), m.n_x());
            Box::new(NmpcController::new(m, nmpc.clone(), name)?)
        }
    };
    let demands = ctx.demand_rows(c.steps + nmpc.horizon)?;
    let prices = ctx.prices()?;
    let r = closed_loop(&ctx.sim, controller.as_mut(), &demands, &prices, c.steps, c.initial_t0s, nmpc)?;
    let summary = ControlSummary::from_result(label, &r, c.initial_t0s);
    ctx.write(&format!("control/{label}.csv"), &r.to_csv(&ctx.fingerprint))?;
    ctx.write_json(&format!("control/{label}.json"), &summary)?;
    Ok((r, summary))
}

#[derive(Clone, Debug, Serialize)]
pub struct ReproduceSummary {
    pub dataset_rows: usize,
    pub identification: Vec<TrainSummary>,
    pub half_data: Vec<TrainSummary>,
    pub controller_models: Vec<TrainSummary>,
    pub control: Vec<ControlSummary>,
}

impl ReproduceSummary {
    pub fn identification(&self, arch: Arch) -> Option<&TrainSummary> {
        self.identification.iter().find(|t| t.arch == arch.as_str())
    }

    pub fn half_data(&self, arch: Arch) -> Option<&TrainSummary> {
        self.half_data.iter().find(|t| t.arch == arch.as_str())
    }

    pub fn control(&self, label: &str) -> Option<&ControlSummary> {
        self.control.iter().find(|c| c.label == label)
    }
}

fn identification_table(ctx: &Context, rows: &[&TrainSummary]) -> String {
    let mut s = format!(
        "# fingerprint={}\nlabel,arch,states,sizes,train_rows,runs,fit_mean,fit_std,r2_min_mean,r2_min_std,r2_max_mean,r2_max_std\n",
        ctx.fingerprint
    );
    for t in rows {
        let a = &t.aggregate;
        let sizes: Vec<String> = t.sizes.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            t.label,
            t.arch,
            t.states,
            sizes.join(" "),
            t.train_rows,
            a.runs,
            a.fit.0,
            a.fit.1,
            a.r2_min.0,
            a.r2_min.1,
            a.r2_max.0,
            a.r2_max.1
        );
    }
    s
}

/// Dataset, identification of both architectures, optional half-data runs,
/// and the daily closed-loop comparison, in one pass.
pub fn cmd_reproduce(ctx: &Context) -> Result<ReproduceSummary> {
    let (ds, _) = cmd_gen_data(ctx)?;
    let states = ctx.cfg.identification.states;
    let archs = [Arch::Gru, Arch::PiGru];

    let identification = archs
        .iter()
        .map(|&a| cmd_train(ctx, a, states, &ds, "full"))
        .collect::<Result<Vec<_>>>()?;
    let half_data = if ctx.cfg.identification.data_efficiency {
        let half = ds.with_training_fraction(0.5)?;
        archs
            .iter()
            .map(|&a| cmd_train(ctx, a, states, &half, "half"))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    let mut controller_models = Vec::new();
    let mut chosen = Vec::new();
    for (arch, n) in [(Arch::PiGru, ctx.cfg.control.pi_states), (Arch::Gru, ctx.cfg.control.gru_states)] {
        let summary = match identification.iter().find(|t| t.arch == arch.as_str() && t.states == n) {
            Some(t) => t.clone(),
            None => {
                let t = cmd_train(ctx, arch, n, &ds, "control")?;
                controller_models.push(t.clone());
                t
            }
        };
        let model = AnyModel::load(&summary.best_run().model_path, Some(&ctx.reduced))?;
        chosen.push((format!("nmpc-{arch}-{n}"), model));
    }

    let mut control = vec![cmd_control(ctx, ControllerKind::RuleBased, None, "rule-based")?.1];
    for (label, model) in &chosen {
        control.push(cmd_control(ctx, ControllerKind::Nmpc, Some(model), label)?.1);
    }

    let mut rows: Vec<&TrainSummary> = identification.iter().collect();
    rows.extend(&half_data);
    rows.extend(&controller_models);
    ctx.write("tables/identification.csv", &identification_table(ctx, &rows))?;

    let mut s = format!(
        "# fingerprint={}\ncontroller,cost,loss_sum_w,loss_mean_w,failures,violation_fraction\n",
        ctx.fingerprint
    );
    for c in &control {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            c.label, c.indexes.cost, c.indexes.loss_sum, c.indexes.loss_mean, c.failures, c.violation_fraction
        );
    }
    ctx.write("tables/control.csv", &s)?;

    let summary = ReproduceSummary {
        dataset_rows: ds.len(),
        identification,
        half_data,
        controller_models,
        control,
    };
    ctx.write_json("summary.json", &summary)?;
    Ok(summary)
}
