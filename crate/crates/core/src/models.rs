//! Either identified architecture behind one type, chosen from the file.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pirnn::{allocate_neurons, build_pi_rnn, PiRnnModel, PI_FORMAT};
use crate::rnn::{build_monolithic_gru, even_layers, Normalizer, RnnModel, SequenceModel, GRU_FORMAT};
use crate::topology::{NetworkGraph, ReducedGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Arch {
    Gru,
    PiGru,
}

impl Arch {
    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Gru => "gru",
            Arch::PiGru => "pi-gru",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gru" => Ok(Arch::Gru),
            "pi-gru" | "pi" => Ok(Arch::PiGru),
            _ => Err(Error::Config(format!("unknown architecture {s:?} (gru | pi-gru)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub enum AnyModel {
    Gru(RnnModel),
    Pi(PiRnnModel),
}

/// Fresh model of `states` total states for the network `graph`.
pub fn build_model(
    arch: Arch,
    graph: &NetworkGraph,
    rg: &ReducedGraph,
    states: usize,
    gru_layers: usize,
    cumulative_demand: bool,
    seed: u64,
) -> Result<AnyModel> {
    let n_loads = graph.n_loads();
    match arch {
        Arch::Gru => {
            let sizes = even_layers(states, gru_layers)?;
            Ok(AnyModel::Gru(build_monolithic_gru(
                gru_layers,
                &sizes,
                1 + n_loads,
                2 + 3 * n_loads,
                seed,
            )?))
        }
        Arch::PiGru => {
            let alloc = allocate_neurons(rg, &graph.distances_from_station(), states)?;
            Ok(AnyModel::Pi(build_pi_rnn(rg, &alloc, cumulative_demand, seed)?))
        }
    }
}

impl AnyModel {
    pub fn arch(&self) -> Arch {
        match self {
            AnyModel::Gru(_) => Arch::Gru,
            AnyModel::Pi(_) => Arch::PiGru,
        }
    }

    /// Per-layer sizes for the GRU, per-subnet sizes for the PI-GRU.
    pub fn sizes(&self) -> Vec<usize> {
        match self {
            AnyModel::Gru(m) => m.layer_sizes().to_vec(),
            AnyModel::Pi(m) => m.allocation(),
        }
    }

    pub fn to_json(&self) -> String {
        match self {
            AnyModel::Gru(m) => m.to_json(),
            AnyModel::Pi(m) => m.to_json(),
        }
    }

    /// Model file with an extra `config_fingerprint` field; readers ignore it.
    pub fn to_json_tagged(&self, fingerprint: &str) -> String {
        let mut v: serde_json::Value = serde_json::from_str(&self.to_json()).expect("model JSON parses");
        v["config_fingerprint"] = serde_json::Value::from(fingerprint);
        serde_json::to_string(&v).expect("model JSON serializes")
    }

    /// Dispatches on the `format` field. A PI-GRU file is checked against
    /// `expected` when given.
    pub fn from_json(text: &str, expected: Option<&ReducedGraph>) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        match v.get("format").and_then(|f| f.as_str()) {
            Some(GRU_FORMAT) => Ok(AnyModel::Gru(RnnModel::from_json(text)?)),
            Some(PI_FORMAT) => Ok(AnyModel::Pi(PiRnnModel::from_json(text, expected)?)),
            other => Err(Error::Format(format!("unrecognized model format {other:?}"))),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, expected: Option<&ReducedGraph>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, expected)
    }

    fn inner(&self) -> &dyn SequenceModel {
        match self {
            AnyModel::Gru(m) => m,
            AnyModel::Pi(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn SequenceModel {
        match self {
            AnyModel::Gru(m) => m,
            AnyModel::Pi(m) => m,
        }
    }
}

impl SequenceModel for AnyModel {
    fn n_u(&self) -> usize {
        self.inner().n_u()
    }

    fn n_y(&self) -> usize {
        self.inner().n_y()
    }

    fn n_x(&self) -> usize {
        self.inner().n_x()
    }

    fn params(&self) -> &[f64] {
        self.inner().params()
    }

    fn params_mut(&mut self) -> &mut [f64] {
        self.inner_mut().params_mut()
    }

    fn input_norm(&self) -> &Normalizer {
        self.inner().input_norm()
    }

    fn output_norm(&self) -> &Normalizer {
        self.inner().output_norm()
    }

    fn fit_normalization(&mut self, inputs: &[Vec<f64>], outputs: &[Vec<f64>]) -> Result<()> {
        self.inner_mut().fit_normalization(inputs, outputs)
    }

    fn tape_stride(&self) -> usize {
        self.inner().tape_stride()
    }

    fn step_n(&self, x: &mut [f64], u_n: &[f64], y_n: &mut [f64], tape: Option<&mut [f64]>) {
        self.inner().step_n(x, u_n, y_n, tape)
    }

    fn backward_step_n(
        &self,
        tape: &[f64],
        dy_n: &[f64],
        dx: &mut [f64],
        g: Option<&mut [f64]>,
        du_n: Option<&mut [f64]>,
    ) {
        self.inner().backward_step_n(tape, dy_n, dx, g, du_n)
    }
}
