//! End-to-end acceptance run. Prints one line per criterion and exits
//! non-zero when any of them fails.
//!
//! Criteria 5 to 8 train every model at desk scale and take roughly half an
//! hour on one core.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dhs_cli::{cmd_control, cmd_reproduce, Context, ControllerKind, ReproduceSummary};
use dhs_core::config::ExperimentConfig;
use dhs_core::metrics::{fit_index, r2_per_output};
use dhs_core::models::{AnyModel, Arch};
use dhs_core::nmpc::{default_demand_profile, objective_and_constraints, NmpcConfig, PriceProfile, Problem};
use dhs_core::pirnn::{build_pi_rnn, PiRnnModel};
use dhs_core::rnn::{bptt_gradients_normalized, build_monolithic_gru, Normalizer, RnnModel, SequenceModel};
use dhs_core::sim::{generate_mprbs, pipe_step, DatasetConfig, PhysConstants, PipeGeometry, PipeState, SimConfig, Simulator};
use dhs_core::topology::{aroma, reduce_graph, reduce_unchecked, LoadParams, NetworkGraph, Node, NodeId, PipeEdge};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

// 1

fn random_graph(rng: &mut ChaCha8Rng) -> NetworkGraph {
    let n = rng.random_range(2..=12);
    let n_loads = rng.random_range(0..=(n - 1).min(4));
    let mut ids: Vec<usize> = (1..n).collect();
    for i in (1..ids.len()).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    let loads = &ids[..n_loads];
    let nodes = (0..n)
        .map(|i| match i {
            0 => Node::station(),
            _ if loads.contains(&i) => Node::load(i, LoadParams::default()),
            _ => Node::junction(i),
        })
        .collect();
    let density = rng.random_range(0.05..0.5);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && rng.random_bool(density) {
                edges.push(PipeEdge::new(a, b, 100.0, 0.1, 0.5));
            }
        }
    }
    NetworkGraph::new("random", nodes, edges)
}

fn brute_force_edges(g: &NetworkGraph) -> BTreeSet<(NodeId, NodeId)> {
    fn walk(g: &NetworkGraph, s: NodeId, at: NodeId, seen: &mut Vec<NodeId>, out: &mut BTreeSet<(NodeId, NodeId)>) {
        for e in g.edges().iter().filter(|e| e.from == at) {
            if seen.contains(&e.to) {
                continue;
            }
            if g.is_significant(e.to) {
                out.insert((s, e.to));
            } else {
                seen.push(e.to);
                walk(g, s, e.to, seen, out);
                seen.pop();
            }
        }
    }
    let mut out = BTreeSet::new();
    for n in g.nodes().iter().filter(|n| g.is_significant(n.id)) {
        walk(g, n.id, n.id, &mut vec![n.id], &mut out);
    }
    out
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for _ in 0..500 {
        let g = random_graph(&mut rng);
        let got: BTreeSet<_> = reduce_unchecked(&g).edges.into_iter().collect();
        if got != brute_force_edges(&g) {
            mismatches += 1;
        }
    }
    let expected: BTreeSet<(NodeId, NodeId)> = [(0, 1), (0, 2), (1, 3), (2, 4), (2, 5), (3, 4), (3, 5)]
        .into_iter()
        .map(|(a, b)| (NodeId(a), NodeId(b)))
        .collect();
    let aroma_ok = reduce_graph(&aroma())
        .map(|rg| rg.edges.into_iter().collect::<BTreeSet<_>>() == expected)
        .unwrap_or(false);
    let secs = t.elapsed().as_secs_f64();
    Outcome::new(
        mismatches == 0 && aroma_ok && secs < 10.0,
        format!("{mismatches}/500 mismatches, AROMA edges ok: {aroma_ok}, {secs:.2} s"),
    )
}

// 2

fn aroma_sim(filter: f64) -> Simulator {
    let cfg = SimConfig {
        flow_filter_s: filter,
        warmup_hours: 6.0,
        ..SimConfig::default()
    };
    Simulator::new(aroma(), cfg).unwrap()
}

fn worst_mass_residual() -> f64 {
    let mut worst: f64 = 0.0;
    for filter in [0.0, 1800.0] {
        let sim = aroma_sim(filter);
        let seq = generate_mprbs(&DatasetConfig::default().channels(5), 1000, 3).unwrap();
        let mut st = sim.initial_state(70.0).unwrap();
        for k in 0..seq[0].len() {
            let d: Vec<f64> = seq[1..].iter().map(|c| c[k]).collect();
            let rec = sim.step(&mut st, seq[0][k], &d).unwrap();
            let q0 = rec.outputs[1];
            let loads: f64 = (0..5).map(|i| rec.outputs[4 + 3 * i]).sum();
            worst = worst.max((q0 - loads).abs() / q0);
            worst = worst.max(sim.hydraulics().balance_residual(&st.flows) / q0);
        }
    }
    worst
}

fn energy_closure_error() -> f64 {
    let sim = aroma_sim(0.0);
    let demands = [300e3, 450e3, 200e3, 600e3, 350e3];
    let mut st = sim.initial_state(75.0).unwrap();
    sim.settle(&mut st, 75.0, &demands, 1e-11, 20_000).unwrap();
    let losses = sim.pipe_losses(&st);
    let rec = sim.step(&mut st, 75.0, &demands).unwrap();
    let gap = rec.station_power - demands.iter().sum::<f64>();
    (gap - losses).abs() / losses
}

/// Arrival error of a temperature front in cell residence times.
fn transport_delay_error() -> f64 {
    let (length, diameter, q) = (3000.0, 0.2, 5.0);
    let params = LoadParams {
        t_ref: 90.0,
        q_min: 0.2,
        q_max: q,
    };
    let g = NetworkGraph::new(
        "chain",
        vec![Node::station(), Node::load(1, params)],
        vec![PipeEdge::new(0, 1, length, diameter, 0.0)],
    );
    let sim = Simulator::new(g, SimConfig::default()).unwrap();
    let dt = sim.config().dt;
    let mut st = sim.initial_state(65.0).unwrap();
    sim.warm_up(&mut st, 65.0, &[100e3], 2.0).unwrap();
    let ts: Vec<f64> = (0..200).map(|_| sim.step(&mut st, 75.0, &[100e3]).unwrap().outputs[2]).collect();
    let k = ts.iter().position(|t| *t >= 70.0).unwrap();
    let arrival = (k as f64 - 1.0 + (70.0 - ts[k - 1]) / (ts[k] - ts[k - 1])) * dt;
    let area = std::f64::consts::PI * diameter * diameter / 4.0;
    let delay = 1000.0 * area * length / q;
    let cell = 1000.0 * area * 100.0 / q;
    (arrival - delay).abs() / cell
}

fn steady_profile_error() -> f64 {
    let c = PhysConstants::default();
    let g = PipeGeometry {
        length: 1000.0,
        area: 0.02,
        heat_loss_coeff: 0.5,
    };
    let q = 3.0;
    let mut p = PipeState::uniform(g.length, 100.0, 10.0);
    for _ in 0..2000 {
        p = pipe_step(&p, q, 80.0, 300.0, &g, &c).unwrap().0;
    }
    let ratio = c.c_w * q / (c.c_w * q + g.heat_loss_coeff * p.cell_length);
    let mut expected = 80.0 - c.t_ext;
    let mut worst: f64 = 0.0;
    for t in &p.cells {
        expected *= ratio;
        worst = worst.max((t - c.t_ext - expected).abs());
    }
    worst
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let mass = worst_mass_residual();
    let energy = energy_closure_error();
    let delay = transport_delay_error();
    let profile = steady_profile_error();
    let secs = t.elapsed().as_secs_f64();
    Outcome::new(
        mass <= 1e-12 && energy <= 1e-6 && delay <= 1.0 && profile < 1e-9 && secs < 30.0,
        format!(
            "mass {mass:.1e}, energy closure {energy:.1e}, front arrival {delay:.2} cells, steady profile {profile:.1e} K, {secs:.2} s"
        ),
    )
}

// 3

fn random_seq(rng: &mut ChaCha8Rng, len: usize, n: usize) -> Vec<Vec<f64>> {
    (0..len).map(|_| (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).collect()
}

fn param_gradient_error<M: SequenceModel + Clone>(m: &M, len: usize, washout: usize, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_seq(&mut rng, len, m.n_u());
    let y = random_seq(&mut rng, len, m.n_y());
    let x0 = vec![0.0; m.n_x()];
    let (_, g) = bptt_gradients_normalized(m, &x0, &u, &y, washout).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let i = rng.random_range(0..m.n_params());
        let mut mp = m.clone();
        mp.params_mut()[i] += h;
        let lp = bptt_gradients_normalized(&mp, &x0, &u, &y, washout).unwrap().0;
        mp.params_mut()[i] -= 2.0 * h;
        let lm = bptt_gradients_normalized(&mp, &x0, &u, &y, washout).unwrap().0;
        worst = worst.max(rel_err(g[i], (lp - lm) / (2.0 * h)));
    }
    worst
}

fn plant_normalizers() -> (Normalizer, Normalizer) {
    let input = Normalizer {
        mean: vec![75.0, 4e5, 4e5, 4e5, 4e5, 4e5],
        std: vec![6.0, 2e5, 2e5, 2e5, 2e5, 2e5],
    };
    let mut mean = vec![48.0, 60.0];
    let mut std = vec![3.0, 15.0];
    for _ in 0..5 {
        mean.extend([72.0, 47.0, 3.0]);
        std.extend([5.0, 3.0, 1.0]);
    }
    (input, Normalizer { mean, std })
}

fn plant_like_gru(seed: u64) -> RnnModel {
    let mut m = build_monolithic_gru(2, &[8, 8], 6, 17, seed).unwrap();
    (m.input_norm, m.output_norm) = plant_normalizers();
    m
}

fn pi_gru(seed: u64) -> PiRnnModel {
    let rg = reduce_graph(&aroma()).unwrap();
    build_pi_rnn(&rg, &[3, 3, 3, 4, 8, 9], true, seed).unwrap()
}

/// Every blocked component of several NMPC problems with active penalties.
fn nmpc_gradient_error() -> (f64, usize) {
    let m = plant_like_gru(3);
    let cfg = NmpcConfig {
        horizon: 96,
        block: 1,
        t0r_bounds: (47.5, 48.5),
        p0_bounds: (1e6, 3e6),
        tis_upper: 74.0,
        max_rate: 1.0,
        ..NmpcConfig::default()
    };
    let demands = default_demand_profile(5, 288);
    let prices = PriceProfile::synthetic(288);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for k_start in [20, 110, 230] {
        let forecast: Vec<Vec<f64>> = demands.iter().cycle().skip(k_start).take(cfg.horizon).cloned().collect();
        let x0: Vec<f64> = (0..m.n_x()).map(|_| rng.random_range(-0.5..0.5)).collect();
        let p = Problem {
            x0: &x0,
            forecast: &forecast,
            prices: &prices,
            k_start,
            last_input: Some(74.0),
        };
        let blocked: Vec<f64> = (0..cfg.horizon).map(|_| rng.random_range(66.0..84.0)).collect();
        let ev = objective_and_constraints(&m, &p, &blocked, &cfg).unwrap();
        let h = 1e-5;
        for i in 0..blocked.len() {
            let mut bp = blocked.clone();
            bp[i] += h;
            let mut bm = blocked.clone();
            bm[i] -= h;
            let fp = objective_and_constraints(&m, &p, &bp, &cfg).unwrap().objective.total;
            let fm = objective_and_constraints(&m, &p, &bm, &cfg).unwrap().objective.total;
            worst = worst.max(rel_err(ev.gradient[i], (fp - fm) / (2.0 * h)));
            count += 1;
        }
    }
    (worst, count)
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let gru = param_gradient_error(&build_monolithic_gru(3, &[5, 4, 6], 3, 4, 2).unwrap(), 40, 10, 250, 5);
    let pi = param_gradient_error(&pi_gru(3), 30, 5, 250, 6);
    let (nmpc, n) = nmpc_gradient_error();
    let secs = t.elapsed().as_secs_f64();
    Outcome::new(
        gru < 1e-4 && pi < 1e-4 && nmpc < 1e-4 && n >= 200 && secs < 120.0,
        format!("worst rel. error GRU {gru:.1e} (250), PI-GRU {pi:.1e} (250), NMPC {nmpc:.1e} ({n}), {secs:.2} s"),
    )
}

// 4

fn col(v: &[f64]) -> Vec<Vec<f64>> {
    v.iter().map(|x| vec![*x]).collect()
}

fn criterion_4() -> Outcome {
    let y2 = col(&[0.0, 2.0]);
    let y3 = col(&[1.0, 2.0, 3.0]);
    let fixtures = [
        fit_index(&y2, &col(&[1.0, 1.0])).ok() == Some(0.0),
        fit_index(&y2, &y2).ok() == Some(100.0),
        fit_index(&y3, &col(&[3.0, 2.0, 1.0])).ok() == Some(-100.0),
        r2_per_output(&y3, &col(&[2.0, 2.0, 2.0]), 0).ok() == Some(0.0),
        r2_per_output(&y3, &y3, 0).ok() == Some(100.0),
        r2_per_output(&y3, &col(&[0.0, 2.0, 4.0]), 0).ok() == Some(0.0),
        r2_per_output(&y3, &col(&[3.0, 2.0, 1.0]), 0).ok() == Some(-300.0),
    ];
    let exact = fixtures.iter().filter(|ok| **ok).count();

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_mean: f64 = 0.0;
    let mut perfect_ok = true;
    for _ in 0..100 {
        let y = random_seq(&mut rng, 50, 4);
        let mean: Vec<f64> = (0..4).map(|j| y.iter().map(|r| r[j]).sum::<f64>() / 50.0).collect();
        worst_mean = worst_mean.max(fit_index(&y, &vec![mean; 50]).unwrap().abs());
        perfect_ok &= fit_index(&y, &y).unwrap() == 100.0;
    }
    Outcome::new(
        exact == fixtures.len() && worst_mean < 1e-9 && perfect_ok,
        format!(
            "{exact}/{} fixtures exact, |FIT(mean)| ≤ {worst_mean:.1e}, FIT(perfect) = 100: {perfect_ok}",
            fixtures.len()
        ),
    )
}

// 5 to 8

fn desk_scale_config(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        out_dir: out.to_path_buf(),
        seeds: vec![1, 2, 3],
        ..ExperimentConfig::default()
    };
    cfg.train.batches_per_epoch = 8;
    cfg.identification.data_efficiency = true;
    cfg
}

fn mean_fit(r: &ReproduceSummary, arch: Arch, half: bool) -> f64 {
    let t = if half { r.half_data(arch) } else { r.identification(arch) };
    t.map_or(f64::NAN, |t| t.aggregate.fit.0)
}

fn criterion_5(r: &ReproduceSummary, secs: f64) -> Outcome {
    let pi = mean_fit(r, Arch::PiGru, false);
    let gru = mean_fit(r, Arch::Gru, false);
    let runs = r.identification.iter().map(|t| t.runs.len()).min().unwrap_or(0);
    Outcome::new(
        r.dataset_rows >= 4000 && runs >= 3 && pi - gru >= 10.0 && pi >= 70.0 && secs <= 3600.0,
        format!(
            "mean test FIT PI-GRU {pi:.2} vs GRU {gru:.2} ({} samples, {runs} seeds, full run {secs:.0} s)",
            r.dataset_rows
        ),
    )
}

fn criterion_6(r: &ReproduceSummary) -> Outcome {
    let (pi, pi_half) = (mean_fit(r, Arch::PiGru, false), mean_fit(r, Arch::PiGru, true));
    let (gru, gru_half) = (mean_fit(r, Arch::Gru, false), mean_fit(r, Arch::Gru, true));
    let pi_drop = pi - pi_half;
    let gru_drop = gru - gru_half;
    Outcome::new(
        pi_drop < 5.0 && (gru_drop > pi_drop || pi_half - gru_half >= 10.0),
        format!("half-data FIT PI-GRU {pi_half:.2} (drop {pi_drop:.2}), GRU {gru_half:.2} (drop {gru_drop:.2})"),
    )
}

fn criterion_7(r: &ReproduceSummary, cfg: &ExperimentConfig, secs: f64) -> Outcome {
    let (Some(rb), Some(pi)) = (r.control("rule-based"), r.control("nmpc-pi-gru-30")) else {
        return Outcome::new(false, "closed-loop runs missing");
    };
    let n = &cfg.nmpc;
    let in_box = r.control.iter().all(|c| c.t0s_min >= n.t0s_bounds.0 && c.t0s_max <= n.t0s_bounds.1);
    let rate_ok = r.control.iter().all(|c| c.max_rate <= n.max_rate * (1.0 + 1e-12));
    let pass = pi.steps == 288
        && pi.indexes.cost < rb.indexes.cost
        && pi.indexes.loss_mean < rb.indexes.loss_mean
        && in_box
        && rate_ok
        && pi.violation_fraction < 0.05
        && secs <= 1800.0;
    Outcome::new(
        pass,
        format!(
            "C_p {:.1} vs {:.1}, P_loss {:.2} vs {:.2} kW, box {in_box}, max rate {:.3} °C, violations {:.2} %, closed loop {secs:.0} s",
            pi.indexes.cost,
            rb.indexes.cost,
            pi.indexes.loss_mean / 1e3,
            rb.indexes.loss_mean / 1e3,
            pi.max_rate,
            100.0 * pi.violation_fraction
        ),
    )
}

fn criterion_8(r: &ReproduceSummary, dt: f64) -> Outcome {
    let t_avg = |label: &str| r.control(label).and_then(|c| c.indexes.t_avg).unwrap_or(f64::NAN);
    let pi = t_avg("nmpc-pi-gru-30");
    let gru = t_avg("nmpc-gru-54");
    Outcome::new(
        pi < gru && gru < dt,
        format!("mean solve time PI-GRU-30 {pi:.3} s vs GRU-54 {gru:.3} s (sampling {dt} s)"),
    )
}

/// Times one NMPC day with the chosen PI-GRU model.
fn closed_loop_seconds(ctx: &Context, r: &ReproduceSummary) -> f64 {
    let Some(t) = r.identification.iter().chain(&r.controller_models).find(|t| t.arch == "pi-gru" && t.states == 30)
    else {
        return f64::INFINITY;
    };
    let Ok(model) = AnyModel::load(&t.best_run().model_path, Some(&ctx.reduced)) else {
        return f64::INFINITY;
    };
    let start = Instant::now();
    match cmd_control(ctx, ControllerKind::Nmpc, Some(&model), "timing") {
        Ok(_) => start.elapsed().as_secs_f64(),
        Err(_) => f64::INFINITY,
    }
}

// 9

fn tiny_config(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        out_dir: out.to_path_buf(),
        seeds: vec![1, 2],
        ..ExperimentConfig::default()
    };
    cfg.data.n_samples = 800;
    cfg.train.epochs = 3;
    cfg.train.batches_per_epoch = 2;
    cfg.identification.data_efficiency = true;
    cfg.control.steps = 12;
    cfg
}

fn csv_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn criterion_9() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let ctx = Context::new(tiny_config(d.path())).unwrap();
        if let Err(e) = cmd_reproduce(&ctx) {
            return Outcome::new(false, format!("reproduce failed: {e}"));
        }
    }
    let a = csv_files(dirs[0].path());
    let b = csv_files(dirs[1].path());
    if a != b {
        return Outcome::new(false, "different sets of CSV files");
    }
    let differing: Vec<String> = a
        .iter()
        .filter(|p| std::fs::read(dirs[0].path().join(p)).unwrap() != std::fs::read(dirs[1].path().join(p)).unwrap())
        .map(|p| p.display().to_string())
        .collect();
    Outcome::new(
        differing.is_empty() && !a.is_empty(),
        format!("{} CSV files compared, {} differ {:?}", a.len(), differing.len(), differing),
    )
}

fn report(n: usize, o: &Outcome) {
    println!("criterion {n}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn main() -> ExitCode {
    let mut results = Vec::new();
    let mut run = |n: usize, o: Outcome| {
        report(n, &o);
        results.push(o.pass);
    };
    run(1, criterion_1());
    run(2, criterion_2());
    run(3, criterion_3());
    run(4, criterion_4());

    let out = tempfile::tempdir().unwrap();
    let cfg = desk_scale_config(out.path());
    let ctx = Context::new(cfg.clone()).unwrap();
    let start = Instant::now();
    match cmd_reproduce(&ctx) {
        Ok(r) => {
            let total = start.elapsed().as_secs_f64();
            let loop_secs = closed_loop_seconds(&ctx, &r);
            run(5, criterion_5(&r, total));
            run(6, criterion_6(&r));
            run(7, criterion_7(&r, &cfg, loop_secs));
            run(8, criterion_8(&r, cfg.nmpc.dt));
        }
        Err(e) => {
            for n in 5..=8 {
                run(n, Outcome::new(false, format!("reproduce failed: {e}")));
            }
        }
    }
    run(9, criterion_9());

    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
