use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use dhs_core::metrics::{self, EvalReport};
use dhs_core::models::{build_model, AnyModel, Arch};
use dhs_core::nmpc::{self, default_demand_profile, NmpcConfig, NmpcController, PriceProfile, RuleBasedController};
use dhs_core::pirnn::allocate_neurons;
use dhs_core::rnn::{predict, train_tbptt, SequenceModel, TrainConfig};
use dhs_core::sim::{self, DatasetConfig, SimConfig, SimState, SplitKind};
use dhs_core::topology::{self, NetworkGraph, ReducedGraph};

create_exception!(dhs, DhsError, PyException);

fn err(e: dhs_core::Error) -> PyErr {
    DhsError::new_err(e.to_string())
}

fn split(name: &str) -> PyResult<SplitKind> {
    match name {
        "train" => Ok(SplitKind::Train),
        "val" => Ok(SplitKind::Val),
        "test" => Ok(SplitKind::Test),
        _ => Err(DhsError::new_err(format!("unknown split {name:?}"))),
    }
}

/// District heating network with its reduced graph.
#[pyclass(module = "dhs", frozen)]
struct Network {
    graph: NetworkGraph,
    reduced: ReducedGraph,
}

impl Network {
    fn wrap(graph: NetworkGraph) -> PyResult<Self> {
        let reduced = topology::reduce_graph(&graph).map_err(err)?;
        Ok(Network { graph, reduced })
    }
}

#[pymethods]
impl Network {
    /// The five-load AROMA benchmark network.
    #[staticmethod]
    fn aroma() -> PyResult<Self> {
        Self::wrap(topology::aroma())
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Self::wrap(topology::parse_topology(text, "<string>").map_err(err)?)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Self::wrap(topology::load_topology(path).map_err(err)?)
    }

    fn to_text(&self) -> String {
        topology::format_topology(&self.graph)
    }

    #[getter]
    fn n_loads(&self) -> usize {
        self.graph.n_loads()
    }

    /// Edges `(from, to)` between the station and the loads.
    fn reduced_edges(&self) -> Vec<(usize, usize)> {
        self.reduced.edges.iter().map(|(a, b)| (a.0, b.0)).collect()
    }

    /// Subnet sizes of a PI-GRU with `total` states, loads first.
    fn allocate(&self, total: usize) -> PyResult<Vec<usize>> {
        allocate_neurons(&self.reduced, &self.graph.distances_from_station(), total).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Network(loads={}, reduced_edges={})", self.graph.n_loads(), self.reduced.edges.len())
    }
}

/// Plant simulator with its current state.
#[pyclass(module = "dhs")]
struct Simulator {
    sim: sim::Simulator,
    state: Option<SimState>,
}

#[pymethods]
impl Simulator {
    #[new]
    #[pyo3(signature = (network, dt = 300.0, flow_filter_s = 0.0, warmup_hours = 24.0))]
    fn new(network: &Network, dt: f64, flow_filter_s: f64, warmup_hours: f64) -> PyResult<Self> {
        let cfg = SimConfig {
            dt,
            flow_filter_s,
            warmup_hours,
            ..SimConfig::default()
        };
        Ok(Simulator {
            sim: sim::Simulator::new(network.graph.clone(), cfg).map_err(err)?,
            state: None,
        })
    }

    /// Brings the plant to steady state under constant inputs.
    fn reset(&mut self, t0s: f64, demands: Vec<f64>) -> PyResult<()> {
        let mut s = self.sim.initial_state(t0s).map_err(err)?;
        let hours = self.sim.config().warmup_hours;
        self.sim.warm_up(&mut s, t0s, &demands, hours).map_err(err)?;
        self.state = Some(s);
        Ok(())
    }

    /// Advances one sample; returns the outputs and the station power in W.
    fn step(&mut self, t0s: f64, demands: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| DhsError::new_err("call reset() before step()"))?;
        let r = self.sim.step(state, t0s, &demands).map_err(err)?;
        Ok((r.outputs, r.station_power))
    }

    #[getter]
    fn output_names(&self) -> Vec<String> {
        self.sim.output_names()
    }

    #[getter]
    fn input_names(&self) -> Vec<String> {
        let mut v = self.sim.input_names();
        v.extend(self.sim.disturbance_names());
        v
    }

    /// MPRBS excitation dataset.
    #[pyo3(signature = (n_samples, seed = 1))]
    fn generate_dataset(&self, py: Python<'_>, n_samples: usize, seed: u64) -> PyResult<Dataset> {
        let cfg = DatasetConfig {
            n_samples,
            seed,
            ..DatasetConfig::default()
        };
        let ds = py.detach(|| sim::generate_dataset(&self.sim, &cfg)).map_err(err)?;
        Ok(Dataset { ds })
    }
}

#[pyclass(module = "dhs", frozen)]
struct Dataset {
    ds: sim::Dataset,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Dataset {
            ds: sim::Dataset::read_csv(path).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.ds.write_csv(path, "python").map_err(err)
    }

    fn __len__(&self) -> usize {
        self.ds.len()
    }

    /// Model inputs `[T0s, P1c, …]` of a split.
    #[pyo3(signature = (split_name = "test"))]
    fn inputs(&self, split_name: &str) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.ds.model_inputs(self.ds.range(split(split_name)?)))
    }

    #[pyo3(signature = (split_name = "test"))]
    fn outputs(&self, split_name: &str) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.ds.model_outputs(self.ds.range(split(split_name)?)))
    }

    fn half_training(&self) -> PyResult<Dataset> {
        Ok(Dataset {
            ds: self.ds.with_training_fraction(0.5).map_err(err)?,
        })
    }
}

#[pyclass(module = "dhs", frozen, get_all)]
struct Report {
    fit: f64,
    r2: Vec<Option<f64>>,
    r2_min: f64,
    r2_max: f64,
    channels: Vec<String>,
    n_samples: usize,
}

impl From<EvalReport> for Report {
    fn from(r: EvalReport) -> Self {
        Report {
            fit: r.fit,
            r2: r.r2,
            r2_min: r.r2_min,
            r2_max: r.r2_max,
            channels: r.channels,
            n_samples: r.n_samples,
        }
    }
}

#[pymethods]
impl Report {
    fn __repr__(&self) -> String {
        format!("Report(fit={:.2}, r2_min={:.2}, r2_max={:.2})", self.fit, self.r2_min, self.r2_max)
    }
}

/// Monolithic GRU or topology-wired PI-GRU.
#[pyclass(module = "dhs")]
struct Model {
    model: AnyModel,
}

#[pymethods]
impl Model {
    /// Fresh model; `arch` is `"gru"` or `"pi-gru"`.
    #[staticmethod]
    #[pyo3(signature = (arch, network, states, seed = 0, gru_layers = 6, cumulative_demand = true))]
    fn build(
        arch: &str,
        network: &Network,
        states: usize,
        seed: u64,
        gru_layers: usize,
        cumulative_demand: bool,
    ) -> PyResult<Self> {
        let arch: Arch = arch.parse().map_err(err)?;
        let model = build_model(
            arch,
            &network.graph,
            &network.reduced,
            states,
            gru_layers,
            cumulative_demand,
            seed,
        )
        .map_err(err)?;
        Ok(Model { model })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Model {
            model: AnyModel::load(path, None).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.model.save(path).map_err(err)
    }

    #[getter]
    fn arch(&self) -> &'static str {
        self.model.arch().as_str()
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.model.n_x()
    }

    #[getter]
    fn sizes(&self) -> Vec<usize> {
        self.model.sizes()
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.model.n_params()
    }

    /// TBPTT with ADAM; keeps the best-validation snapshot. Returns
    /// `(epoch, train_loss, val_loss, val_fit)` per epoch.
    #[pyo3(signature = (dataset, epochs = 300, learning_rate = 0.003, batches_per_epoch = 0, seed = 0))]
    fn train(
        &mut self,
        py: Python<'_>,
        dataset: &Dataset,
        epochs: usize,
        learning_rate: f64,
        batches_per_epoch: usize,
        seed: u64,
    ) -> PyResult<Vec<(usize, f64, f64, f64)>> {
        let cfg = TrainConfig {
            epochs,
            learning_rate,
            batches_per_epoch,
            seed,
            ..TrainConfig::default()
        };
        let out = py.detach(|| train_tbptt(&self.model, &dataset.ds, &cfg)).map_err(err)?;
        self.model = out.model;
        Ok(out
            .history
            .epochs
            .iter()
            .map(|e| (e.epoch, e.train_loss, e.val_loss, e.val_fit))
            .collect())
    }

    /// Free-run prediction from the zero state, physical units.
    fn predict(&self, inputs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        predict(&self.model, &inputs).map_err(err)
    }

    #[pyo3(signature = (dataset, split_name = "test", washout = 50))]
    fn evaluate(&self, dataset: &Dataset, split_name: &str, washout: usize) -> PyResult<Report> {
        Ok(metrics::evaluate(&self.model, &dataset.ds, split(split_name)?, washout)
            .map_err(err)?
            .into())
    }
}

#[pyclass(module = "dhs", frozen, get_all)]
struct ClosedLoop {
    controller: String,
    t0s: Vec<f64>,
    outputs: Vec<Vec<f64>>,
    station_power: Vec<f64>,
    lower_violation: Vec<f64>,
    cost: f64,
    loss_sum: f64,
    t_avg: Option<f64>,
    failures: usize,
}

/// One day (or `steps` samples) under `"rule-based"` or `"nmpc"` control
/// with the default demand and price profiles. NMPC needs `model`.
#[pyfunction]
#[pyo3(signature = (simulator, controller, model = None, steps = 288, horizon = 72, block = 6, t0s = 75.0))]
#[allow(clippy::too_many_arguments)]
fn closed_loop(
    py: Python<'_>,
    simulator: &Simulator,
    controller: &str,
    model: Option<PyRef<'_, Model>>,
    steps: usize,
    horizon: usize,
    block: usize,
    t0s: f64,
) -> PyResult<ClosedLoop> {
    let cfg = NmpcConfig {
        horizon,
        block,
        dt: simulator.sim.config().dt,
        ..NmpcConfig::default()
    };
    let n_loads = simulator.sim.n_loads();
    let demands: Vec<Vec<f64>> = default_demand_profile(n_loads, cfg.steps_per_day)
        .into_iter()
        .cycle()
        .take(steps + horizon)
        .collect();
    let prices = PriceProfile::synthetic(cfg.steps_per_day);
    let r = match controller {
        "rule-based" => {
            let mut c = RuleBasedController::new(t0s, cfg.t0s_bounds).map_err(err)?;
            py.detach(|| nmpc::closed_loop(&simulator.sim, &mut c, &demands, &prices, steps, t0s, &cfg))
        }
        "nmpc" => {
            let m = model.ok_or_else(|| DhsError::new_err("nmpc needs a model"))?;
            let mut c = NmpcController::new(&m.model, cfg.clone(), m.model.arch().as_str()).map_err(err)?;
            py.detach(|| nmpc::closed_loop(&simulator.sim, &mut c, &demands, &prices, steps, t0s, &cfg))
        }
        other => return Err(DhsError::new_err(format!("unknown controller {other:?}"))),
    }
    .map_err(err)?;
    Ok(ClosedLoop {
        controller: r.controller,
        t0s: r.t0s,
        outputs: r.outputs,
        station_power: r.station_power,
        lower_violation: r.lower_violation,
        cost: r.indexes.cost,
        loss_sum: r.indexes.loss_sum,
        t_avg: r.indexes.t_avg,
        failures: r.failures,
    })
}

/// FIT over all channels, percent.
#[pyfunction]
fn fit_index(y_meas: Vec<Vec<f64>>, y_pred: Vec<Vec<f64>>) -> PyResult<f64> {
    metrics::fit_index(&y_meas, &y_pred).map_err(err)
}

/// R² of channel `j`, percent.
#[pyfunction]
fn r2_per_output(y_meas: Vec<Vec<f64>>, y_pred: Vec<Vec<f64>>, j: usize) -> PyResult<f64> {
    metrics::r2_per_output(&y_meas, &y_pred, j).map_err(err)
}

#[pymodule]
fn dhs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DhsError", m.py().get_type::<DhsError>())?;
    m.add_class::<Network>()?;
    m.add_class::<Simulator>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_class::<Report>()?;
    m.add_class::<ClosedLoop>()?;
    m.add_function(wrap_pyfunction!(closed_loop, m)?)?;
    m.add_function(wrap_pyfunction!(fit_index, m)?)?;
    m.add_function(wrap_pyfunction!(r2_per_output, m)?)?;
    Ok(())
}
