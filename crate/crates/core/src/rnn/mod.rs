//! Recurrent models: the GRU machinery, the sequence-model interface shared
//! by monolithic and topology-wired networks, BPTT and training.

pub mod adam;
pub mod gru;
pub mod model;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{adam_update, AdamConfig, AdamState};
pub use gru::{gru_cell_step, GruLayerParams, GruNet};
pub use model::{build_monolithic_gru, even_layers, RnnModel, GRU_FORMAT};
pub use train::{train_tbptt, EpochRecord, History, TrainConfig, TrainOutcome};

/// Per-channel affine standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(n: usize) -> Self {
        Normalizer {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    /// Mean and population standard deviation per column. Constant columns
    /// get unit scale.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Dimension("cannot fit normalization on zero rows".into()))?;
        let n = first.len();
        let len = rows.len() as f64;
        let mut mean = vec![0.0; n];
        for r in rows {
            if r.len() != n {
                return Err(Error::Dimension("ragged rows".into()));
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= len);
        let mut var = vec![0.0; n];
        for r in rows {
            for j in 0..n {
                var[j] += (r[j] - mean[j]).powi(2);
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / len).sqrt();
                if s > 1e-9 * (1.0 + s.abs()) && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        let out = Normalizer { mean, std };
        out.check()?;
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        if self.mean.len() != self.std.len() {
            return Err(Error::Dimension("normalizer mean/std lengths differ".into()));
        }
        if self.std.iter().any(|s| !(*s > 0.0 && s.is_finite())) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("normalizer constants".into()));
        }
        Ok(())
    }

    pub fn normalize(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn denormalize(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| m + s * x)
            .collect()
    }

    pub fn normalize_rows(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.normalize(r)).collect()
    }
}

/// A discrete-time recurrent model `x⁺ = φ(x, u)`, `y = ψ(x⁺)` with a flat
/// parameter vector, evaluated in normalized channel space.
pub trait SequenceModel: Send + Sync {
    fn n_u(&self) -> usize;
    fn n_y(&self) -> usize;
    fn n_x(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn input_norm(&self) -> &Normalizer;
    fn output_norm(&self) -> &Normalizer;
    /// Recomputes normalization constants from (training) data.
    fn fit_normalization(&mut self, inputs: &[Vec<f64>], outputs: &[Vec<f64>]) -> Result<()>;
    /// Floats recorded per step by [`SequenceModel::step_n`].
    fn tape_stride(&self) -> usize;
    fn step_n(&self, x: &mut [f64], u_n: &[f64], y_n: &mut [f64], tape: Option<&mut [f64]>);
    /// Reverse pass of one step. `dx` carries the state gradient backwards.
    fn backward_step_n(
        &self,
        tape: &[f64],
        dy_n: &[f64],
        dx: &mut [f64],
        g: Option<&mut [f64]>,
        du_n: Option<&mut [f64]>,
    );

    fn n_params(&self) -> usize {
        self.params().len()
    }
}

fn check_input<M: SequenceModel + ?Sized>(m: &M, u: &[f64]) -> Result<()> {
    if u.len() != m.n_u() {
        return Err(Error::Dimension(format!("input has {} channels, model expects {}", u.len(), m.n_u())));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("model input".into()));
    }
    Ok(())
}

/// One step on physical channels.
pub fn model_step<M: SequenceModel + ?Sized>(m: &M, x: &[f64], u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != m.n_x() {
        return Err(Error::Dimension(format!("state has {} entries, model expects {}", x.len(), m.n_x())));
    }
    check_input(m, u)?;
    let mut xn = x.to_vec();
    let mut y = vec![0.0; m.n_y()];
    m.step_n(&mut xn, &m.input_norm().normalize(u), &mut y, None);
    Ok((xn, m.output_norm().denormalize(&y)))
}

/// Folds [`model_step`] over `inputs`. Returns outputs and the state after
/// each step.
pub fn rollout<M: SequenceModel + ?Sized>(
    m: &M,
    x0: &[f64],
    inputs: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if inputs.is_empty() {
        return Err(Error::Dimension("empty input sequence".into()));
    }
    if x0.len() != m.n_x() {
        return Err(Error::Dimension(format!("state has {} entries, model expects {}", x0.len(), m.n_x())));
    }
    let mut x = x0.to_vec();
    let mut ys = Vec::with_capacity(inputs.len());
    let mut xs = Vec::with_capacity(inputs.len());
    let mut yn = vec![0.0; m.n_y()];
    for u in inputs {
        check_input(m, u)?;
        m.step_n(&mut x, &m.input_norm().normalize(u), &mut yn, None);
        ys.push(m.output_norm().denormalize(&yn));
        xs.push(x.clone());
    }
    Ok((ys, xs))
}

/// Free-run prediction from the zero state.
pub fn predict<M: SequenceModel + ?Sized>(m: &M, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    Ok(rollout(m, &vec![0.0; m.n_x()], inputs)?.0)
}

/// Forward record for a normalized sequence.
#[derive(Clone, Debug)]
pub struct Trace {
    pub tape: Vec<f64>,
    pub y_n: Vec<Vec<f64>>,
    pub x_final: Vec<f64>,
}

pub fn forward_trace<M: SequenceModel + ?Sized>(m: &M, x0: &[f64], u_n: &[Vec<f64>]) -> Trace {
    let stride = m.tape_stride();
    let mut tape = vec![0.0; stride * u_n.len()];
    let mut x = x0.to_vec();
    let mut y_n = Vec::with_capacity(u_n.len());
    for (k, u) in u_n.iter().enumerate() {
        let mut y = vec![0.0; m.n_y()];
        m.step_n(&mut x, u, &mut y, Some(&mut tape[k * stride..(k + 1) * stride]));
        y_n.push(y);
    }
    Trace { tape, y_n, x_final: x }
}

/// Gradients produced by [`backward_trace`].
#[derive(Clone, Debug)]
pub struct TraceGrad {
    pub params: Vec<f64>,
    pub inputs: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
}

/// Backpropagates `dy_n` (one row per step) through a recorded forward pass.
pub fn backward_trace<M: SequenceModel + ?Sized>(
    m: &M,
    trace: &Trace,
    dy_n: &[Vec<f64>],
    want_params: bool,
    want_inputs: bool,
) -> TraceGrad {
    let stride = m.tape_stride();
    let len = trace.y_n.len();
    let mut g = if want_params { vec![0.0; m.n_params()] } else { Vec::new() };
    let mut du = if want_inputs { vec![vec![0.0; m.n_u()]; len] } else { Vec::new() };
    let mut dx = vec![0.0; m.n_x()];
    for k in (0..len).rev() {
        let tape = &trace.tape[k * stride..(k + 1) * stride];
        let gp = if want_params { Some(g.as_mut_slice()) } else { None };
        let dup = if want_inputs { Some(du[k].as_mut_slice()) } else { None };
        m.backward_step_n(tape, &dy_n[k], &mut dx, gp, dup);
    }
    TraceGrad {
        params: g,
        inputs: du,
        x0: dx,
    }
}

/// Mean squared error over normalized outputs for steps `k ≥ washout`, and
/// its exact gradient with respect to all parameters.
pub fn bptt_gradients_normalized<M: SequenceModel + ?Sized>(
    m: &M,
    x0: &[f64],
    u_n: &[Vec<f64>],
    y_n: &[Vec<f64>],
    washout: usize,
) -> Result<(f64, Vec<f64>)> {
    let len = u_n.len();
    if len == 0 || y_n.len() != len {
        return Err(Error::Dimension(format!("{} inputs vs {} targets", len, y_n.len())));
    }
    if washout >= len {
        return Err(Error::Config(format!("washout {washout} must be shorter than the sequence ({len})")));
    }
    let trace = forward_trace(m, x0, u_n);
    let count = ((len - washout) * m.n_y()) as f64;
    let mut loss = 0.0;
    let mut dy = vec![vec![0.0; m.n_y()]; len];
    for k in washout..len {
        for j in 0..m.n_y() {
            let e = trace.y_n[k][j] - y_n[k][j];
            loss += e * e;
            dy[k][j] = 2.0 * e / count;
        }
    }
    loss /= count;
    if !loss.is_finite() {
        return Err(Error::Diverged { epoch: 0, loss });
    }
    let g = backward_trace(m, &trace, &dy, true, false);
    Ok((loss, g.params))
}

/// [`bptt_gradients_normalized`] on physical channels.
pub fn bptt_gradients<M: SequenceModel + ?Sized>(
    m: &M,
    x0: &[f64],
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    washout: usize,
) -> Result<(f64, Vec<f64>)> {
    for u in inputs {
        check_input(m, u)?;
    }
    let u_n = m.input_norm().normalize_rows(inputs);
    let y_n = m.output_norm().normalize_rows(targets);
    bptt_gradients_normalized(m, x0, &u_n, &y_n, washout)
}
