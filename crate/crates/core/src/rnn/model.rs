//! Monolithic stacked GRU with channel normalization and a JSON file format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rnn::gru::GruNet;
use crate::rnn::{Normalizer, SequenceModel};

pub const GRU_FORMAT: &str = "dhs-gru";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct RnnModel {
    net: GruNet,
    params: Vec<f64>,
    pub input_norm: Normalizer,
    pub output_norm: Normalizer,
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RnnFile {
    format: String,
    version: u32,
    sizes: Vec<usize>,
    n_u: usize,
    n_y: usize,
    #[serde(default)]
    input_names: Vec<String>,
    #[serde(default)]
    output_names: Vec<String>,
    input_norm: Normalizer,
    output_norm: Normalizer,
    params: Vec<f64>,
}

impl RnnModel {
    pub fn new(net: GruNet, params: Vec<f64>, input_norm: Normalizer, output_norm: Normalizer) -> Result<Self> {
        if params.len() != net.n_params() {
            return Err(Error::Dimension(format!(
                "{} parameters for a network of {}",
                params.len(),
                net.n_params()
            )));
        }
        if input_norm.len() != net.n_in || output_norm.len() != net.n_out {
            return Err(Error::Dimension("normalizer size does not match the network".into()));
        }
        input_norm.check()?;
        output_norm.check()?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("model parameter".into()));
        }
        Ok(RnnModel {
            net,
            params,
            input_norm,
            output_norm,
            input_names: Vec::new(),
            output_names: Vec::new(),
        })
    }

    pub fn net(&self) -> &GruNet {
        &self.net
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.net.sizes
    }

    pub fn with_names(mut self, inputs: Vec<String>, outputs: Vec<String>) -> Self {
        self.input_names = inputs;
        self.output_names = outputs;
        self
    }

    pub fn to_json(&self) -> String {
        let f = RnnFile {
            format: GRU_FORMAT.into(),
            version: FORMAT_VERSION,
            sizes: self.net.sizes.clone(),
            n_u: self.net.n_in,
            n_y: self.net.n_out,
            input_names: self.input_names.clone(),
            output_names: self.output_names.clone(),
            input_norm: self.input_norm.clone(),
            output_norm: self.output_norm.clone(),
            params: self.params.clone(),
        };
        serde_json::to_string(&f).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: RnnFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if f.format != GRU_FORMAT {
            return Err(Error::Format(format!("expected format {GRU_FORMAT}, found {}", f.format)));
        }
        if f.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {}", f.version)));
        }
        let net = GruNet::new(f.sizes, f.n_u, f.n_y)?;
        Ok(RnnModel::new(net, f.params, f.input_norm, f.output_norm)?.with_names(f.input_names, f.output_names))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl SequenceModel for RnnModel {
    fn n_u(&self) -> usize {
        self.net.n_in
    }

    fn n_y(&self) -> usize {
        self.net.n_out
    }

    fn n_x(&self) -> usize {
        self.net.n_x()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn input_norm(&self) -> &Normalizer {
        &self.input_norm
    }

    fn output_norm(&self) -> &Normalizer {
        &self.output_norm
    }

    fn fit_normalization(&mut self, inputs: &[Vec<f64>], outputs: &[Vec<f64>]) -> Result<()> {
        let i = Normalizer::fit(inputs)?;
        let o = Normalizer::fit(outputs)?;
        if i.len() != self.n_u() || o.len() != self.n_y() {
            return Err(Error::Dimension("data channels do not match the model".into()));
        }
        self.input_norm = i;
        self.output_norm = o;
        Ok(())
    }

    fn tape_stride(&self) -> usize {
        self.net.tape_stride()
    }

    fn step_n(&self, x: &mut [f64], u_n: &[f64], y_n: &mut [f64], tape: Option<&mut [f64]>) {
        self.net.step(&self.params, x, u_n, y_n, tape);
    }

    fn backward_step_n(
        &self,
        tape: &[f64],
        dy_n: &[f64],
        dx: &mut [f64],
        g: Option<&mut [f64]>,
        du_n: Option<&mut [f64]>,
    ) {
        self.net.backward_step(&self.params, tape, dy_n, dx, g, du_n);
    }
}

/// Stacked GRU with `sizes.len() == n_layers`, freshly initialized and with
/// identity normalization.
pub fn build_monolithic_gru(n_layers: usize, sizes: &[usize], n_u: usize, n_y: usize, seed: u64) -> Result<RnnModel> {
    if n_layers == 0 || sizes.len() != n_layers {
        return Err(Error::Dimension(format!("{n_layers} layers but {} sizes", sizes.len())));
    }
    let net = GruNet::new(sizes.to_vec(), n_u, n_y)?;
    let params = net.init_params(seed);
    RnnModel::new(net, params, Normalizer::identity(n_u), Normalizer::identity(n_y))
}

/// Even split of `total` states over `n_layers` layers, e.g. 54 → 6 × 9.
pub fn even_layers(total: usize, n_layers: usize) -> Result<Vec<usize>> {
    if n_layers == 0 || total < n_layers {
        return Err(Error::Allocation(format!("{total} states over {n_layers} layers")));
    }
    let base = total / n_layers;
    let extra = total % n_layers;
    Ok((0..n_layers).map(|i| base + usize::from(i >= n_layers - extra)).collect())
}
