//! Time-aligned identification datasets and their CSV form.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::mprbs::{generate_mprbs, ExcitationChannel};
use crate::sim::Simulator;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Sample period, s.
    pub dt: f64,
    pub input_names: Vec<String>,
    pub disturbance_names: Vec<String>,
    pub output_names: Vec<String>,
    /// Row-major, one row per sample.
    pub inputs: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    /// Exclusive end of the training rows.
    pub train_end: usize,
    /// Exclusive end of the validation rows; the rest is test.
    pub val_end: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

/// Excitation and size of a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n_samples: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
    /// Supply temperature range, °C.
    pub t0s_range: (f64, f64),
    /// Per-load demand range, W.
    pub demand_range: (f64, f64),
    /// Dwell bounds, samples.
    pub hold: (usize, usize),
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_samples: 15690,
            train_fraction: 0.7,
            val_fraction: 0.15,
            t0s_range: (65.0, 85.0),
            demand_range: (100e3, 800e3),
            hold: (12, 72),
            seed: 1,
        }
    }
}

impl DatasetConfig {
    pub fn channels(&self, n_loads: usize) -> Vec<ExcitationChannel> {
        let mut ch = vec![ExcitationChannel::new(
            self.t0s_range.0,
            self.t0s_range.1,
            self.hold.0,
            self.hold.1,
        )];
        ch.extend((0..n_loads).map(|_| {
            ExcitationChannel::new(self.demand_range.0, self.demand_range.1, self.hold.0, self.hold.1)
        }));
        ch
    }
}

/// Contiguous split boundaries `(train_end, val_end)`.
pub fn split_bounds(n: usize, train_fraction: f64, val_fraction: f64) -> Result<(usize, usize)> {
    if !(train_fraction > 0.0 && val_fraction >= 0.0 && train_fraction + val_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "bad split fractions {train_fraction}/{val_fraction}"
        )));
    }
    let train_end = (n as f64 * train_fraction).round() as usize;
    let val_end = ((n as f64 * (train_fraction + val_fraction)).round() as usize).min(n);
    Ok((train_end, val_end))
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn range(&self, kind: SplitKind) -> Range<usize> {
        match kind {
            SplitKind::Train => 0..self.train_end,
            SplitKind::Val => self.train_end..self.val_end,
            SplitKind::Test => self.val_end..self.len(),
        }
    }

    /// Model input rows `[v, d]` over `rows`.
    pub fn model_inputs(&self, rows: Range<usize>) -> Vec<Vec<f64>> {
        rows.map(|k| {
            let mut u = self.inputs[k].clone();
            u.extend_from_slice(&self.disturbances[k]);
            u
        })
        .collect()
    }

    pub fn model_outputs(&self, rows: Range<usize>) -> Vec<Vec<f64>> {
        self.outputs[rows].to_vec()
    }

    /// First `n` rows with fresh split boundaries.
    pub fn truncated(&self, n: usize, train_fraction: f64, val_fraction: f64) -> Result<Dataset> {
        let n = n.min(self.len());
        let (train_end, val_end) = split_bounds(n, train_fraction, val_fraction)?;
        Ok(Dataset {
            dt: self.dt,
            input_names: self.input_names.clone(),
            disturbance_names: self.disturbance_names.clone(),
            output_names: self.output_names.clone(),
            inputs: self.inputs[..n].to_vec(),
            disturbances: self.disturbances[..n].to_vec(),
            outputs: self.outputs[..n].to_vec(),
            train_end,
            val_end,
        })
    }

    /// Keeps only the last `fraction` of the training rows; validation and
    /// test rows are unchanged.
    pub fn with_training_fraction(&self, fraction: f64) -> Result<Dataset> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Config(format!("training fraction {fraction} outside (0, 1]")));
        }
        let keep = ((self.train_end as f64) * fraction).round() as usize;
        let skip = self.train_end - keep;
        Ok(Dataset {
            dt: self.dt,
            input_names: self.input_names.clone(),
            disturbance_names: self.disturbance_names.clone(),
            output_names: self.output_names.clone(),
            inputs: self.inputs[skip..].to_vec(),
            disturbances: self.disturbances[skip..].to_vec(),
            outputs: self.outputs[skip..].to_vec(),
            train_end: keep,
            val_end: self.val_end - skip,
        })
    }

    fn check(&self) -> Result<()> {
        let n = self.len();
        if self.inputs.len() != n || self.disturbances.len() != n {
            return Err(Error::Dimension("dataset matrices have different row counts".into()));
        }
        if !(self.train_end <= self.val_end && self.val_end <= n) {
            return Err(Error::Dimension("split boundaries out of order".into()));
        }
        Ok(())
    }

    /// CSV text. Leading `#` lines carry the fingerprint, column groups and split.
    pub fn to_csv(&self, fingerprint: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# fingerprint={fingerprint}");
        let _ = writeln!(
            s,
            "# columns inputs={} disturbances={} outputs={}",
            self.input_names.len(),
            self.disturbance_names.len(),
            self.output_names.len()
        );
        let _ = writeln!(
            s,
            "# split train={} val={} test={}",
            self.train_end,
            self.val_end - self.train_end,
            self.len() - self.val_end
        );
        s.push('t');
        for name in self
            .input_names
            .iter()
            .chain(&self.disturbance_names)
            .chain(&self.output_names)
        {
            s.push(',');
            s.push_str(name);
        }
        s.push('\n');
        for k in 0..self.len() {
            let _ = write!(s, "{}", k as f64 * self.dt);
            for v in self.inputs[k]
                .iter()
                .chain(&self.disturbances[k])
                .chain(&self.outputs[k])
            {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str, origin: &str) -> Result<Dataset> {
        let err = |line: usize, msg: String| Error::Parse {
            path: origin.to_string(),
            line,
            msg,
        };
        let mut groups: Option<(usize, usize, usize)> = None;
        let mut split: Option<(usize, usize, usize)> = None;
        let mut header: Option<Vec<String>> = None;
        let mut times = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let lineno = k + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let meta = meta.trim();
                let kv = |s: &str| -> Vec<(String, usize)> {
                    s.split_whitespace()
                        .skip(1)
                        .filter_map(|t| t.split_once('='))
                        .filter_map(|(k, v)| v.parse().ok().map(|v| (k.to_string(), v)))
                        .collect()
                };
                let get = |pairs: &[(String, usize)], key: &str| {
                    pairs.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
                };
                if meta.starts_with("columns") {
                    let p = kv(meta);
                    groups = Some((
                        get(&p, "inputs").ok_or_else(|| err(lineno, "missing inputs=".into()))?,
                        get(&p, "disturbances")
                            .ok_or_else(|| err(lineno, "missing disturbances=".into()))?,
                        get(&p, "outputs").ok_or_else(|| err(lineno, "missing outputs=".into()))?,
                    ));
                } else if meta.starts_with("split") {
                    let p = kv(meta);
                    split = Some((
                        get(&p, "train").ok_or_else(|| err(lineno, "missing train=".into()))?,
                        get(&p, "val").ok_or_else(|| err(lineno, "missing val=".into()))?,
                        get(&p, "test").ok_or_else(|| err(lineno, "missing test=".into()))?,
                    ));
                }
                continue;
            }
            if header.is_none() {
                let cols: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
                if cols.first().map(String::as_str) != Some("t") {
                    return Err(err(lineno, "header must start with t".into()));
                }
                header = Some(cols);
                continue;
            }
            let width = header.as_ref().map_or(0, |h| h.len());
            let vals: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>().map_err(|_| err(lineno, format!("bad number {c}"))))
                .collect::<Result<_>>()?;
            if vals.len() != width {
                return Err(err(lineno, format!("expected {width} columns, got {}", vals.len())));
            }
            times.push(vals[0]);
            rows.push(vals[1..].to_vec());
        }
        let header = header.ok_or_else(|| err(0, "missing header".into()))?;
        let (ni, nd, no) = groups.ok_or_else(|| err(0, "missing '# columns' line".into()))?;
        if 1 + ni + nd + no != header.len() {
            return Err(err(0, "column groups do not match the header".into()));
        }
        let n = rows.len();
        let (train, val, test) = split.unwrap_or((n, 0, 0));
        if train + val + test != n {
            return Err(err(0, format!("split sizes do not add up to {n} rows")));
        }
        let dt = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
        let ds = Dataset {
            dt,
            input_names: header[1..1 + ni].to_vec(),
            disturbance_names: header[1 + ni..1 + ni + nd].to_vec(),
            output_names: header[1 + ni + nd..].to_vec(),
            inputs: rows.iter().map(|r| r[..ni].to_vec()).collect(),
            disturbances: rows.iter().map(|r| r[ni..ni + nd].to_vec()).collect(),
            outputs: rows.iter().map(|r| r[ni + nd..].to_vec()).collect(),
            train_end: train,
            val_end: train + val,
        };
        ds.check()?;
        Ok(ds)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, fingerprint: &str) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv(fingerprint)).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, &path.display().to_string())
    }
}

/// Simulates the plant under the given excitation. `sequences[0]` is the
/// supply temperature, `sequences[1..]` the per-load demands. The plant is
/// warmed up at the first sample's inputs before recording.
pub fn run_dataset(
    sim: &Simulator,
    sequences: &[Vec<f64>],
    train_fraction: f64,
    val_fraction: f64,
) -> Result<Dataset> {
    let nl = sim.n_loads();
    if sequences.len() != 1 + nl {
        return Err(Error::Dimension(format!(
            "{} excitation channels for {} loads",
            sequences.len(),
            nl
        )));
    }
    let n = sequences[0].len();
    if sequences.iter().any(|s| s.len() != n) || n == 0 {
        return Err(Error::Dimension("excitation sequences differ in length".into()));
    }
    let (train_end, val_end) = split_bounds(n, train_fraction, val_fraction)?;
    let demands_at = |k: usize| -> Vec<f64> { sequences[1..].iter().map(|s| s[k]).collect() };

    let mut state = sim.initial_state(sequences[0][0])?;
    sim.warm_up(&mut state, sequences[0][0], &demands_at(0), sim.config().warmup_hours)?;

    let mut inputs = Vec::with_capacity(n);
    let mut disturbances = Vec::with_capacity(n);
    let mut outputs = Vec::with_capacity(n);
    for k in 0..n {
        let d = demands_at(k);
        let rec = sim.step(&mut state, sequences[0][k], &d)?;
        inputs.push(vec![sequences[0][k]]);
        disturbances.push(d);
        outputs.push(rec.outputs);
    }
    Ok(Dataset {
        dt: sim.config().dt,
        input_names: sim.input_names(),
        disturbance_names: sim.disturbance_names(),
        output_names: sim.output_names(),
        inputs,
        disturbances,
        outputs,
        train_end,
        val_end,
    })
}

/// MPRBS excitation followed by [`run_dataset`].
pub fn generate_dataset(sim: &Simulator, cfg: &DatasetConfig) -> Result<Dataset> {
    let seqs = generate_mprbs(&cfg.channels(sim.n_loads()), cfg.n_samples, cfg.seed)?;
    run_dataset(sim, &seqs, cfg.train_fraction, cfg.val_fraction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SimConfig;
    use crate::topology::aroma;

    #[test]
    fn split_arithmetic() {
        assert_eq!(split_bounds(1000, 0.7, 0.15).unwrap(), (700, 850));
        assert!(split_bounds(10, 0.9, 0.2).is_err());
    }

    #[test]
    fn requested_rows_and_csv_round_trip() {
        let sim = Simulator::new(aroma(), SimConfig::default()).unwrap();
        let cfg = DatasetConfig {
            n_samples: 200,
            ..DatasetConfig::default()
        };
        let ds = generate_dataset(&sim, &cfg).unwrap();
        assert_eq!(ds.len(), 200);
        assert_eq!((ds.range(SplitKind::Train).len(), ds.range(SplitKind::Val).len()), (140, 30));
        let text = ds.to_csv("abc");
        assert!(text.lines().nth(3).unwrap().starts_with("t,T0s,P1c"));
        let back = Dataset::from_csv(&text, "mem").unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn halving_training_rows_keeps_evaluation_rows() {
        let sim = Simulator::new(aroma(), SimConfig::default()).unwrap();
        let ds = generate_dataset(&sim, &DatasetConfig { n_samples: 100, ..DatasetConfig::default() }).unwrap();
        let half = ds.with_training_fraction(0.5).unwrap();
        assert_eq!(half.range(SplitKind::Train).len(), 35);
        assert_eq!(half.outputs[half.train_end..], ds.outputs[ds.train_end..]);
        assert_eq!(half.outputs[0], ds.outputs[35]);
    }
}
