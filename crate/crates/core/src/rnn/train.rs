//! Truncated BPTT on random subsequences with ADAM and best-validation
//! snapshotting.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::fit_index;
use crate::rnn::adam::{adam_update, AdamConfig, AdamState};
use crate::rnn::{bptt_gradients_normalized, SequenceModel};
use crate::sim::{Dataset, SplitKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub subsequence_len: usize,
    pub washout: usize,
    pub batch_size: usize,
    /// ADAM steps per epoch; 0 picks enough batches to cover the training
    /// split once.
    pub batches_per_epoch: usize,
    /// Global gradient-norm clip; 0 disables it.
    pub grad_clip: f64,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            learning_rate: 0.003,
            subsequence_len: 200,
            washout: 50,
            batch_size: 16,
            batches_per_epoch: 0,
            grad_clip: 0.0,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if self.washout >= self.subsequence_len {
            return Err(Error::Config(format!(
                "washout {} must be shorter than the subsequence length {}",
                self.washout, self.subsequence_len
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) || self.batch_size == 0 {
            return Err(Error::Config("learning rate must be ≥ 0 and batch size ≥ 1".into()));
        }
        Ok(())
    }

    fn batches(&self, train_len: usize) -> usize {
        if self.batches_per_epoch > 0 {
            return self.batches_per_epoch;
        }
        let per_seq = self.subsequence_len - self.washout;
        train_len.div_ceil(per_seq * self.batch_size).max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_fit: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub diverged_at: Option<usize>,
}

impl History {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.best_epoch.and_then(|e| self.epochs.iter().find(|r| r.epoch == e))
    }

    pub fn to_csv(&self, fingerprint: &str) -> String {
        let mut s = format!("# fingerprint={fingerprint}\nepoch,train_loss,val_loss,val_fit\n");
        for r in &self.epochs {
            let _ = writeln!(s, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.val_fit);
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, fingerprint: &str) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv(fingerprint)).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<M> {
    /// Best-validation snapshot.
    pub model: M,
    pub history: History,
}

fn validation<M: SequenceModel>(m: &M, u_n: &[Vec<f64>], y: &[Vec<f64>], washout: usize) -> (f64, f64) {
    let mut x = vec![0.0; m.n_x()];
    let mut yn = vec![0.0; m.n_y()];
    let on = m.output_norm();
    let yt = on.normalize_rows(y);
    let mut loss = 0.0;
    let mut pred = Vec::with_capacity(u_n.len());
    for (k, u) in u_n.iter().enumerate() {
        m.step_n(&mut x, u, &mut yn, None);
        if k >= washout {
            loss += yn.iter().zip(&yt[k]).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        pred.push(on.denormalize(&yn));
    }
    loss /= ((u_n.len() - washout) * m.n_y()) as f64;
    let fit = fit_index(&y[washout..], &pred[washout..]).unwrap_or(f64::NEG_INFINITY);
    let fit = if fit.is_finite() { fit } else { f64::NEG_INFINITY };
    (loss, fit)
}

/// Trains a copy of `model` on the training split of `ds`. Normalization is
/// refitted on the training split first; the returned model is the snapshot
/// with the best validation FIT.
pub fn train_tbptt<M: SequenceModel + Clone>(model: &M, ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome<M>> {
    cfg.check()?;
    let tr = ds.range(SplitKind::Train);
    let va = ds.range(SplitKind::Val);
    if tr.len() < cfg.subsequence_len {
        return Err(Error::Config(format!(
            "training split has {} rows, fewer than the subsequence length {}",
            tr.len(),
            cfg.subsequence_len
        )));
    }
    if va.len() < cfg.washout + 2 {
        return Err(Error::Config("validation split is too short".into()));
    }
    let mut m = model.clone();
    let u_tr = ds.model_inputs(tr.clone());
    let y_tr = ds.model_outputs(tr.clone());
    m.fit_normalization(&u_tr, &y_tr)?;
    let u_tr = m.input_norm().normalize_rows(&u_tr);
    let y_tr = m.output_norm().normalize_rows(&y_tr);
    let u_va = m.input_norm().normalize_rows(&ds.model_inputs(va.clone()));
    let y_va = ds.model_outputs(va);

    let mut history = History::default();
    let mut best = m.clone();
    if cfg.epochs == 0 {
        return Ok(TrainOutcome { model: best, history });
    }
    let mut best_fit = f64::NEG_INFINITY;
    let mut adam = AdamState::new(m.n_params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_batches = cfg.batches(tr.len());
    let l = cfg.subsequence_len;
    let x0 = vec![0.0; m.n_x()];

    for epoch in 1..=cfg.epochs {
        let mut epoch_loss = 0.0;
        for _ in 0..n_batches {
            let starts: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..=tr.len() - l)).collect();
            let results: Vec<Result<(f64, Vec<f64>)>> = starts
                .par_iter()
                .map(|&s| bptt_gradients_normalized(&m, &x0, &u_tr[s..s + l], &y_tr[s..s + l], cfg.washout))
                .collect();
            let mut grad = vec![0.0; m.n_params()];
            let mut loss = 0.0;
            let mut failed = false;
            for r in results {
                match r {
                    Ok((li, gi)) => {
                        loss += li;
                        for (a, b) in grad.iter_mut().zip(&gi) {
                            *a += b;
                        }
                    }
                    Err(_) => failed = true,
                }
            }
            let scale = 1.0 / cfg.batch_size as f64;
            loss *= scale;
            grad.iter_mut().for_each(|g| *g *= scale);
            if failed || !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                history.diverged_at = Some(epoch);
                return Ok(TrainOutcome { model: best, history });
            }
            if cfg.grad_clip > 0.0 {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > cfg.grad_clip {
                    let s = cfg.grad_clip / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            adam_update(m.params_mut(), &grad, &mut adam, cfg.learning_rate, &cfg.adam);
            epoch_loss += loss;
        }
        let (val_loss, val_fit) = validation(&m, &u_va, &y_va, cfg.washout);
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / n_batches as f64,
            val_loss,
            val_fit,
        });
        if !val_loss.is_finite() {
            history.diverged_at = Some(epoch);
            break;
        }
        if val_fit > best_fit {
            best_fit = val_fit;
            best = m.clone();
            history.best_epoch = Some(epoch);
        }
    }
    Ok(TrainOutcome { model: best, history })
}
