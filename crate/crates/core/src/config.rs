//! Experiment configuration: one TOML file drives the whole pipeline.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nmpc::NmpcConfig;
use crate::rnn::TrainConfig;
use crate::sim::{DatasetConfig, SimConfig};
use crate::topology::{aroma, format_topology, hex, load_topology, NetworkGraph};

/// Model sizes and evaluation settings for identification runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentificationConfig {
    /// Total recurrent states of every identified model.
    pub states: usize,
    /// Layer count of the monolithic GRU.
    pub gru_layers: usize,
    /// Feed each load subnet the summed demand of its downstream loads.
    pub cumulative_demand: bool,
    /// Samples excluded from the evaluation metrics.
    pub eval_washout: usize,
    /// Also train on half of the training rows.
    pub data_efficiency: bool,
}

impl Default for IdentificationConfig {
    fn default() -> Self {
        IdentificationConfig {
            states: 54,
            gru_layers: 6,
            cumulative_demand: true,
            eval_washout: 50,
            data_efficiency: false,
        }
    }
}

/// Daily closed-loop experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub steps: usize,
    /// Supply temperature of the rule-based strategy, °C.
    pub rule_based_t0s: f64,
    /// Supply temperature during the plant warm-up, °C.
    pub initial_t0s: f64,
    /// States of the PI-GRU used by the controller.
    pub pi_states: usize,
    /// States of the monolithic GRU used by the controller.
    pub gru_states: usize,
    /// `k,value` CSV of prices per Wh; synthetic profile when absent.
    pub price_profile: Option<PathBuf>,
    /// Per-load demand CSV (`k,P1c,…`); built-in daily profile when absent.
    pub demand_profile: Option<PathBuf>,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            steps: 288,
            rule_based_t0s: 75.0,
            initial_t0s: 75.0,
            pi_states: 30,
            gru_states: 54,
            price_profile: None,
            demand_profile: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Topology file; the built-in AROMA network when absent.
    pub topology: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub sim: SimConfig,
    pub data: DatasetConfig,
    pub train: TrainConfig,
    pub identification: IdentificationConfig,
    pub nmpc: NmpcConfig,
    pub control: ControlConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            topology: None,
            out_dir: PathBuf::from("out"),
            seeds: vec![1, 2, 3],
            sim: SimConfig {
                flow_filter_s: 1800.0,
                ..SimConfig::default()
            },
            data: DatasetConfig::default(),
            train: TrainConfig::default(),
            identification: IdentificationConfig::default(),
            nmpc: NmpcConfig::default(),
            control: ControlConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
            msg: e.message().to_string(),
        })
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.out_dir);
        for p in [&mut cfg.topology, &mut cfg.control.price_profile, &mut cfg.control.demand_profile]
            .into_iter()
            .flatten()
        {
            rebase(p);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn check(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        for p in self
            .topology
            .iter()
            .chain(&self.control.price_profile)
            .chain(&self.control.demand_profile)
        {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        if self.identification.states == 0 || self.identification.gru_layers == 0 {
            return Err(Error::Config("model sizes must be positive".into()));
        }
        if (self.nmpc.dt - self.sim.dt).abs() > 1e-9 {
            return Err(Error::Config("controller and simulator sample periods differ".into()));
        }
        self.train.check()?;
        self.nmpc.check()
    }

    pub fn graph(&self) -> Result<NetworkGraph> {
        match &self.topology {
            Some(p) => load_topology(p),
            None => Ok(aroma()),
        }
    }

    /// Hex digest of the settings and the network they refer to. The output
    /// directory does not enter the digest.
    pub fn fingerprint(&self) -> Result<String> {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.topology = None;
        let mut h = Sha256::new();
        h.update(c.to_toml().as_bytes());
        h.update(format_topology(&self.graph()?).as_bytes());
        for p in self.control.price_profile.iter().chain(&self.control.demand_profile) {
            h.update(std::fs::read(p).map_err(|e| Error::io(p, e))?);
        }
        Ok(hex(&h.finalize()[..8]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::from_toml("", "mem").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        c.check().unwrap();
    }

    #[test]
    fn round_trip_and_fingerprint() {
        let mut c = ExperimentConfig::default();
        c.seeds = vec![7];
        c.data.n_samples = 7845;
        let back = ExperimentConfig::from_toml(&c.to_toml(), "mem").unwrap();
        assert_eq!(back, c);
        let f = c.fingerprint().unwrap();
        assert_eq!(f.len(), 16);
        c.out_dir = PathBuf::from("elsewhere");
        assert_eq!(c.fingerprint().unwrap(), f);
        c.train.seed = 9;
        assert_ne!(c.fingerprint().unwrap(), f);
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(ExperimentConfig::from_toml("seeds = []", "mem").unwrap().check().is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1", "mem").is_err());
        let c = ExperimentConfig::from_toml("topology = \"/no/such/file.topo\"", "mem").unwrap();
        assert!(matches!(c.check(), Err(Error::Config(_))));
    }
}
