use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected ADAM step, in place.
pub fn adam_update(params: &mut [f64], grads: &[f64], s: &mut AdamState, lr: f64, cfg: &AdamConfig) {
    assert_eq!(params.len(), grads.len(), "parameter/gradient length mismatch");
    assert_eq!(params.len(), s.m.len(), "parameter/moment length mismatch");
    s.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(s.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(s.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        s.m[i] = cfg.beta1 * s.m[i] + (1.0 - cfg.beta1) * g;
        s.v[i] = cfg.beta2 * s.v[i] + (1.0 - cfg.beta2) * g * g;
        let mh = s.m[i] / bc1;
        let vh = s.v[i] / bc2;
        params[i] -= lr * mh / (vh.sqrt() + cfg.eps);
    }
}
