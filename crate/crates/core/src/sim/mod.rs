//! Ground-truth thermo-hydraulic plant.
//!
//! One call to [`Simulator::step`] advances the network by one sample period:
//!
//! 1. load supply temperatures are read from the supply pipe outlets,
//! 2. each local controller sets its flow and the load output temperature follows,
//! 3. flows are distributed over the network,
//! 4. supply and return pipes advance with a shared explicit sub-step,
//! 5. the output vector `[T0r, q0, {Tis, Tic, qic}]` is assembled.
//!
//! Outputs describe the state at the start of the step under the current
//! inputs.

pub mod dataset;
pub mod flows;
pub mod mprbs;
pub mod physics;
pub mod pipe;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{validate_graph, NetworkGraph, NodeId, ReturnFlow};
pub use dataset::{generate_dataset, run_dataset, split_bounds, Dataset, DatasetConfig, SplitKind};
pub use mprbs::{generate_mprbs, ExcitationChannel};
pub use flows::{network_flows, FlowField, Hydraulics};
pub use physics::{load_flow, load_output_temp, station_power, PhysConstants};
pub use pipe::{pipe_step, PipeGeometry, PipeState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Sample period τ_s, s.
    pub dt: f64,
    /// Target finite-volume cell length, m.
    pub cell_length: f64,
    pub constants: PhysConstants,
    /// Fraction drawn from the first of two inlets; also orients reversible pairs.
    pub split_fraction: f64,
    /// First-order lag on the load flow controllers, s (0 = static).
    pub flow_filter_s: f64,
    /// Discarded warm-up before recording, h.
    pub warmup_hours: f64,
    /// Replaces every pipe's heat-loss coefficient when set, W/(m·K).
    pub heat_loss_override: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 300.0,
            cell_length: 100.0,
            constants: PhysConstants::default(),
            split_fraction: 0.5,
            flow_filter_s: 0.0,
            warmup_hours: 24.0,
            heat_loss_override: None,
        }
    }
}

/// Complete plant state at one sample instant.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub supply: Vec<PipeState>,
    pub ret: Vec<PipeState>,
    /// Flows of the previous step; weights the supply mixing at step start.
    pub flows: FlowField,
    /// Controller flows after the optional lag, load order, kg/s.
    pub load_flow: Vec<f64>,
    pub time: f64,
}

/// Outputs and auxiliary quantities of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// `[T0r, q0, {Tis, Tic, qic}]`.
    pub outputs: Vec<f64>,
    /// Station power `c_w q0 (T0s − T0r)`, W.
    pub station_power: f64,
}

pub struct Simulator {
    graph: NetworkGraph,
    hyd: Hydraulics,
    geom: Vec<PipeGeometry>,
    cfg: SimConfig,
}

impl Simulator {
    pub fn new(graph: NetworkGraph, cfg: SimConfig) -> Result<Self> {
        let report = validate_graph(&graph);
        if !report.is_valid() {
            return Err(Error::InvalidGraph(report.violations));
        }
        cfg.constants.check()?;
        if !(cfg.dt > 0.0 && cfg.cell_length > 0.0) {
            return Err(Error::Config("dt and cell_length must be positive".into()));
        }
        if !(0.0..=1.0).contains(&cfg.split_fraction) || cfg.flow_filter_s < 0.0 {
            return Err(Error::Config("split_fraction in [0,1], flow_filter_s >= 0".into()));
        }
        if graph.edges().iter().any(|e| e.return_flow == ReturnFlow::Same) {
            return Err(Error::Config(
                "the simulator supports counter-flow return networks only".into(),
            ));
        }
        let hyd = Hydraulics::new(&graph);
        let geom = hyd
            .pipes
            .iter()
            .map(|p| PipeGeometry {
                length: p.length,
                area: p.area(),
                heat_loss_coeff: cfg.heat_loss_override.unwrap_or(p.heat_loss_coeff),
            })
            .collect();
        Ok(Simulator {
            graph,
            hyd,
            geom,
            cfg,
        })
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn hydraulics(&self) -> &Hydraulics {
        &self.hyd
    }

    pub fn geometry(&self) -> &[PipeGeometry] {
        &self.geom
    }

    pub fn n_loads(&self) -> usize {
        self.hyd.loads.len()
    }

    pub fn n_outputs(&self) -> usize {
        2 + 3 * self.n_loads()
    }

    pub fn input_names(&self) -> Vec<String> {
        vec!["T0s".to_string()]
    }

    pub fn disturbance_names(&self) -> Vec<String> {
        self.hyd.loads.iter().map(|l| format!("P{}c", l.0)).collect()
    }

    pub fn output_names(&self) -> Vec<String> {
        let mut v = vec!["T0r".to_string(), "q0".to_string()];
        for l in &self.hyd.loads {
            v.push(format!("T{}s", l.0));
            v.push(format!("T{}c", l.0));
            v.push(format!("q{}c", l.0));
        }
        v
    }

    /// Every cell at `temp`, load flows at their floors.
    pub fn initial_state(&self, temp: f64) -> Result<SimState> {
        let q: Vec<f64> = self
            .hyd
            .loads
            .iter()
            .map(|l| self.graph.load_params(*l).map_or(0.0, |p| p.q_min))
            .collect();
        let flows = self.hyd.solve(&q, self.cfg.split_fraction)?;
        let pipes = |_: ()| -> Vec<PipeState> {
            self.hyd
                .pipes
                .iter()
                .map(|p| PipeState::uniform(p.length, self.cfg.cell_length, temp))
                .collect()
        };
        Ok(SimState {
            supply: pipes(()),
            ret: pipes(()),
            flows,
            load_flow: q,
            time: 0.0,
        })
    }

    /// Supply temperature at node index `i` given pipe outlets and flow weights.
    fn supply_mix(&self, supply: &[PipeState], flows: &FlowField, i: usize, t0s: f64) -> f64 {
        if self.hyd.nodes[i] == NodeId::STATION {
            return t0s;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        let mut plain = 0.0;
        let mut count = 0usize;
        for p in 0..self.hyd.pipes.len() {
            let (_, to) = flows.supply_ends(&self.hyd.pipes, p);
            if self.hyd.node_index(to) != i {
                continue;
            }
            let t = supply[p].outlet_dir(flows.pipe_reversed[p]);
            num += flows.pipe_flow[p] * t;
            den += flows.pipe_flow[p];
            plain += t;
            count += 1;
        }
        if den > 0.0 {
            num / den
        } else if count > 0 {
            plain / count as f64
        } else {
            self.cfg.constants.t_ext
        }
    }

    /// Return-side mixing temperature at node index `i`.
    fn return_mix(&self, ret: &[PipeState], flows: &FlowField, load_t: &[f64], i: usize) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut plain = 0.0;
        let mut count = 0usize;
        if let Some(k) = self.hyd.load_index(i) {
            num += flows.load_flow[k] * load_t[k];
            den += flows.load_flow[k];
            plain += load_t[k];
            count += 1;
        }
        for p in 0..self.hyd.pipes.len() {
            let (from, _) = flows.supply_ends(&self.hyd.pipes, p);
            if self.hyd.node_index(from) != i {
                continue;
            }
            // Return water runs against the supply orientation.
            let t = ret[p].outlet_dir(!flows.pipe_reversed[p]);
            num += flows.pipe_flow[p] * t;
            den += flows.pipe_flow[p];
            plain += t;
            count += 1;
        }
        if den > 0.0 {
            num / den
        } else if count > 0 {
            plain / count as f64
        } else {
            self.cfg.constants.t_ext
        }
    }

    /// Advances the plant by one sample period.
    pub fn step(&self, state: &mut SimState, t0s: f64, demands: &[f64]) -> Result<StepRecord> {
        let nl = self.n_loads();
        if demands.len() != nl {
            return Err(Error::Dimension(format!("{} demands for {nl} loads", demands.len())));
        }
        if !t0s.is_finite() || demands.iter().any(|d| !d.is_finite()) {
            return Err(Error::NonFinite("simulator input".into()));
        }
        let c = &self.cfg.constants;
        let dt = self.cfg.dt;

        // (i) load supply temperatures from the current pipe outlets
        let t_supply: Vec<f64> = self
            .hyd
            .loads
            .iter()
            .map(|l| self.supply_mix(&state.supply, &state.flows, self.hyd.node_index(*l), t0s))
            .collect();

        // (ii) local controllers and load output temperatures
        let alpha = if self.cfg.flow_filter_s > 0.0 {
            1.0 - (-dt / self.cfg.flow_filter_s).exp()
        } else {
            1.0
        };
        let mut q = Vec::with_capacity(nl);
        let mut t_load = Vec::with_capacity(nl);
        for k in 0..nl {
            let params = self
                .graph
                .load_params(self.hyd.loads[k])
                .expect("validated load has parameters");
            let target = load_flow(t_supply[k], demands[k], &params, c);
            let qk = (state.load_flow[k] + alpha * (target - state.load_flow[k]))
                .clamp(params.q_min, params.q_max);
            t_load.push(load_output_temp(t_supply[k], demands[k], qk, c)?);
            q.push(qk);
        }

        // (iii) network flows
        let flows = self.hyd.solve(&q, self.cfg.split_fraction)?;
        let station = self.hyd.node_index(NodeId::STATION);
        let t0r = self.return_mix(&state.ret, &flows, &t_load, station);

        let mut outputs = Vec::with_capacity(self.n_outputs());
        outputs.push(t0r);
        outputs.push(flows.q0);
        for k in 0..nl {
            outputs.push(t_supply[k]);
            outputs.push(t_load[k]);
            outputs.push(q[k]);
        }
        let power = station_power(flows.q0, t0s, t0r, c);

        // (iv) pipes, shared sub-step for supply and return
        let np = self.hyd.pipes.len();
        let mut nsub = 1;
        for p in 0..np {
            let fq = flows.pipe_flow[p];
            nsub = nsub
                .max(state.supply[p].substeps(fq, dt, &self.geom[p], c))
                .max(state.ret[p].substeps(fq, dt, &self.geom[p], c));
        }
        let h = dt / nsub as f64;
        let n = self.hyd.nodes.len();
        let mut node_s = vec![0.0; n];
        let mut node_r = vec![0.0; n];
        for _ in 0..nsub {
            for i in 0..n {
                node_s[i] = self.supply_mix(&state.supply, &flows, i, t0s);
                node_r[i] = self.return_mix(&state.ret, &flows, &t_load, i);
            }
            for p in 0..np {
                let (from, to) = flows.supply_ends(&self.hyd.pipes, p);
                let rev = flows.pipe_reversed[p];
                let fq = flows.pipe_flow[p];
                let t_in_s = node_s[self.hyd.node_index(from)];
                let t_in_r = node_r[self.hyd.node_index(to)];
                state.supply[p].advance(fq, t_in_s, h, &self.geom[p], c, rev);
                state.ret[p].advance(fq, t_in_r, h, &self.geom[p], c, !rev);
            }
        }

        if outputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("simulator output".into()));
        }
        state.flows = flows;
        state.load_flow = q;
        state.time += dt;
        Ok(StepRecord {
            outputs,
            station_power: power,
        })
    }

    /// Runs `hours` of simulated time at constant inputs, discarding outputs.
    pub fn warm_up(&self, state: &mut SimState, t0s: f64, demands: &[f64], hours: f64) -> Result<()> {
        let steps = (hours * 3600.0 / self.cfg.dt).round() as usize;
        for _ in 0..steps {
            self.step(state, t0s, demands)?;
        }
        state.time = 0.0;
        Ok(())
    }

    /// Iterates at constant inputs until no cell moves by more than `tol` °C
    /// over a step. Returns the number of steps taken.
    pub fn settle(
        &self,
        state: &mut SimState,
        t0s: f64,
        demands: &[f64],
        tol: f64,
        max_steps: usize,
    ) -> Result<usize> {
        for k in 0..max_steps {
            let before: Vec<f64> = state
                .supply
                .iter()
                .chain(state.ret.iter())
                .flat_map(|p| p.cells.iter().copied())
                .collect();
            let load_before = state.load_flow.clone();
            self.step(state, t0s, demands)?;
            let after = state
                .supply
                .iter()
                .chain(state.ret.iter())
                .flat_map(|p| p.cells.iter().copied());
            let moved = before
                .iter()
                .zip(after)
                .map(|(a, b)| (a - b).abs())
                .chain(load_before.iter().zip(&state.load_flow).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if moved <= tol {
                return Ok(k + 1);
            }
        }
        Ok(max_steps)
    }

    /// Heat currently lost by all supply and return pipes, W.
    pub fn pipe_losses(&self, state: &SimState) -> f64 {
        let c = &self.cfg.constants;
        (0..self.hyd.pipes.len())
            .map(|p| state.supply[p].heat_loss(&self.geom[p], c) + state.ret[p].heat_loss(&self.geom[p], c))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::aroma;

    #[test]
    fn global_equilibrium_at_ground_temperature() {
        let sim = Simulator::new(aroma(), SimConfig::default()).unwrap();
        let t_ext = sim.config().constants.t_ext;
        let mut st = sim.initial_state(t_ext).unwrap();
        for _ in 0..20 {
            let rec = sim.step(&mut st, t_ext, &[0.0; 5]).unwrap();
            let y = &rec.outputs;
            assert!((y[0] - t_ext).abs() < 1e-12);
            assert!((y[1] - 5.0 * 0.2).abs() < 1e-12);
            for k in 0..5 {
                assert!((y[2 + 3 * k] - t_ext).abs() < 1e-12);
                assert!((y[3 + 3 * k] - t_ext).abs() < 1e-12);
                assert!((y[4 + 3 * k] - 0.2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn output_layout() {
        let sim = Simulator::new(aroma(), SimConfig::default()).unwrap();
        assert_eq!(sim.n_outputs(), 17);
        let names = sim.output_names();
        assert_eq!(&names[..5], &["T0r", "q0", "T1s", "T1c", "q1c"]);
        assert_eq!(sim.disturbance_names().len(), 5);
    }

    #[test]
    fn rejects_bad_inputs() {
        let sim = Simulator::new(aroma(), SimConfig::default()).unwrap();
        let mut st = sim.initial_state(60.0).unwrap();
        assert!(matches!(sim.step(&mut st, 70.0, &[0.0; 4]), Err(Error::Dimension(_))));
        assert!(matches!(
            sim.step(&mut st, f64::NAN, &[0.0; 5]),
            Err(Error::NonFinite(_))
        ));
    }
}
