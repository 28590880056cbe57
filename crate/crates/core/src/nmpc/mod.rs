//! Economic NMPC over an identified recurrent model: blocked supply
//! temperature, energy cost plus terminal term, soft output constraints.

pub mod closed_loop;
pub mod solver;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rnn::{backward_trace, forward_trace, SequenceModel};

pub use closed_loop::{
    closed_loop, default_demand_profile, observer_update, performance_indexes, ClosedLoopResult, Controller,
    Decision, NmpcController, ObserverState, PerformanceIndexes, RuleBasedController,
};
pub use solver::{solve, NmpcSolution};

/// Controller parameters; defaults are the reference settings for a 300 s
/// sample period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmpcConfig {
    /// Prediction horizon, steps.
    pub horizon: usize,
    /// Input block length, steps.
    pub block: usize,
    /// Sample period, s.
    pub dt: f64,
    /// Heat-pump efficiency.
    pub eta: f64,
    pub terminal_weight: f64,
    /// Terminal reference for load supply temperatures, °C.
    pub t_star: f64,
    /// Largest change of the supply temperature per step, °C.
    pub max_rate: f64,
    pub t0s_bounds: (f64, f64),
    pub t0r_bounds: (f64, f64),
    /// Station power bounds, W.
    pub p0_bounds: (f64, f64),
    pub tis_upper: f64,
    /// Lower bound on load supply temperatures inside `day_window`, °C.
    pub tis_lower_day: f64,
    pub tis_lower_night: f64,
    /// Steps of the day (inclusive) with the raised lower bound.
    pub day_window: (usize, usize),
    pub steps_per_day: usize,
    /// Quadratic penalty per unit² of violation (°C², MW²).
    pub slack_weight: f64,
    pub max_iter: usize,
    /// Projected-gradient tolerance.
    pub tol: f64,
    pub lbfgs_memory: usize,
    /// Largest change of any blocked value per iteration, °C.
    pub max_step: f64,
}

impl Default for NmpcConfig {
    fn default() -> Self {
        NmpcConfig {
            horizon: 72,
            block: 6,
            dt: 300.0,
            eta: 2.5,
            terminal_weight: 10.0,
            t_star: 75.0,
            max_rate: 5.0,
            t0s_bounds: (65.0, 85.0),
            t0r_bounds: (40.0, 70.0),
            p0_bounds: (0.1e6, 10e6),
            tis_upper: 85.0,
            tis_lower_day: 70.0,
            tis_lower_night: 65.0,
            day_window: (84, 228),
            steps_per_day: 288,
            slack_weight: 1e4,
            max_iter: 60,
            tol: 1e-4,
            lbfgs_memory: 8,
            max_step: 5.0,
        }
    }
}

impl NmpcConfig {
    pub fn check(&self) -> Result<()> {
        let ok_pair = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a <= b;
        if self.horizon == 0 || self.block == 0 || self.steps_per_day == 0 {
            return Err(Error::Config("horizon, block and day length must be positive".into()));
        }
        if !(ok_pair(self.t0s_bounds) && ok_pair(self.t0r_bounds) && ok_pair(self.p0_bounds)) {
            return Err(Error::Config("bounds must be finite with lower ≤ upper".into()));
        }
        if !(self.eta > 0.0 && self.dt > 0.0 && self.max_rate > 0.0 && self.max_step > 0.0) {
            return Err(Error::Config("eta, dt, max_rate and max_step must be positive".into()));
        }
        if self.slack_weight < 0.0 || self.terminal_weight < 0.0 {
            return Err(Error::Config("weights must be non-negative".into()));
        }
        Ok(())
    }

    pub fn n_blocks(&self) -> usize {
        self.horizon.div_ceil(self.block)
    }

    /// Lower bound on load supply temperatures at absolute step `k`.
    pub fn tis_lower(&self, k: usize) -> f64 {
        let kd = k % self.steps_per_day;
        if (self.day_window.0..=self.day_window.1).contains(&kd) {
            self.tis_lower_day
        } else {
            self.tis_lower_night
        }
    }
}

/// Electricity price over one day, currency per Wh, periodic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceProfile {
    pub values: Vec<f64>,
}

impl PriceProfile {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("prices must be finite, non-negative and non-empty".into()));
        }
        Ok(PriceProfile { values })
    }

    /// Night trough, morning and evening peaks; 0.08–0.31 per kWh.
    pub fn synthetic(steps_per_day: usize) -> Self {
        let values = (0..steps_per_day)
            .map(|k| {
                let h = 24.0 * k as f64 / steps_per_day as f64;
                let bump = |c: f64, w: f64| (-((h - c) / w).powi(2)).exp();
                let per_kwh = 0.12 + 0.10 * bump(8.0, 1.5) + 0.12 * bump(19.0, 2.0) - 0.04 * bump(3.0, 2.5);
                per_kwh / 1000.0
            })
            .collect();
        PriceProfile { values }
    }

    pub fn constant(value: f64, steps_per_day: usize) -> Self {
        PriceProfile {
            values: vec![value; steps_per_day],
        }
    }

    pub fn at(&self, k: usize) -> f64 {
        self.values[k % self.values.len()]
    }
}

/// Reads a `k,value` profile; `#` lines and a non-numeric header are skipped.
pub fn read_profile_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',');
        let (k, v) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
        let Ok(k) = k.trim().parse::<usize>() else {
            if out.is_empty() {
                continue;
            }
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: format!("bad step index {k}"),
            });
        };
        if k != out.len() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: format!("expected step {}, found {k}", out.len()),
            });
        }
        out.push(v.trim().parse::<f64>().map_err(|_| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: format!("bad value {v}"),
        })?);
    }
    Ok(out)
}

pub fn profile_csv(values: &[f64]) -> String {
    let mut s = String::from("k,value\n");
    for (k, v) in values.iter().enumerate() {
        let _ = writeln!(s, "{k},{v}");
    }
    s
}

/// Step `k` takes `blocked[k / block]`.
pub fn blocking_expand(blocked: &[f64], horizon: usize, block: usize) -> Result<Vec<f64>> {
    if block == 0 || blocked.len() != horizon.div_ceil(block) {
        return Err(Error::Dimension(format!(
            "{} blocked values for horizon {horizon} with blocks of {block}",
            blocked.len()
        )));
    }
    Ok((0..horizon).map(|k| blocked[k / block]).collect())
}

/// Inputs to one NMPC problem.
#[derive(Clone, Debug)]
pub struct Problem<'a> {
    pub x0: &'a [f64],
    /// Demands per step over the horizon, W.
    pub forecast: &'a [Vec<f64>],
    pub prices: &'a PriceProfile,
    /// Absolute step index of the first predicted sample.
    pub k_start: usize,
    /// Last applied supply temperature, for the rate constraint.
    pub last_input: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub energy: f64,
    pub terminal: f64,
    pub penalty: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub objective: ObjectiveBreakdown,
    /// Gradient with respect to the blocked values.
    pub gradient: Vec<f64>,
    /// Largest violation per softened constraint: T0r, P0 (MW), Tis, rate.
    pub residuals: [f64; 4],
    /// Physical outputs over the horizon.
    pub outputs: Vec<Vec<f64>>,
}

/// Specific heat used in the station power expression, J/(kg·K).
pub const C_W: f64 = 4186.0;

fn penalty(v: f64, lo: f64, hi: f64) -> (f64, f64) {
    if v < lo {
        (lo - v, -1.0)
    } else if v > hi {
        (v - hi, 1.0)
    } else {
        (0.0, 0.0)
    }
}

/// Cost, exact gradient over the blocked variables, and constraint residuals.
///
/// Output layout is `[T0r, q0, T1s, T1c, q1c, …]`, input layout
/// `[T0s, P1c, …]`.
pub fn objective_and_constraints<M: SequenceModel + ?Sized>(
    model: &M,
    problem: &Problem<'_>,
    blocked: &[f64],
    cfg: &NmpcConfig,
) -> Result<Evaluation> {
    let n = cfg.horizon;
    if problem.forecast.len() < n {
        return Err(Error::Dimension(format!(
            "forecast covers {} steps, horizon is {n}",
            problem.forecast.len()
        )));
    }
    let n_loads = model.n_u() - 1;
    if model.n_y() != 2 + 3 * n_loads {
        return Err(Error::Dimension("model outputs do not follow the plant layout".into()));
    }
    let t0s = blocking_expand(blocked, n, cfg.block)?;
    let inorm = model.input_norm();
    let onorm = model.output_norm();
    let u_n: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let mut u = Vec::with_capacity(1 + n_loads);
            u.push(t0s[k]);
            u.extend_from_slice(&problem.forecast[k]);
            inorm.normalize(&u)
        })
        .collect();
    let trace = forward_trace(model, problem.x0, &u_n);
    let y: Vec<Vec<f64>> = trace.y_n.iter().map(|r| onorm.denormalize(r)).collect();
    if y.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::ModelDivergence("non-finite prediction over the horizon".into()));
    }

    let w = cfg.slack_weight;
    let hours = cfg.dt / 3600.0;
    let mut obj = ObjectiveBreakdown::default();
    let mut res = [0.0f64; 4];
    let mut dy = vec![vec![0.0; model.n_y()]; n];
    let mut dt0s = vec![0.0; n];
    for k in 0..n {
        let (t0r, q0) = (y[k][0], y[k][1]);
        let p0 = C_W * q0 * (t0s[k] - t0r);
        let c = problem.prices.at(problem.k_start + k) * hours / cfg.eta;
        obj.energy += c * p0;
        let mut dp0 = c;

        let (v, s) = penalty(t0r, cfg.t0r_bounds.0, cfg.t0r_bounds.1);
        obj.penalty += w * v * v;
        dy[k][0] += 2.0 * w * v * s;
        res[0] = res[0].max(v);

        let (v, s) = penalty(p0 / 1e6, cfg.p0_bounds.0 / 1e6, cfg.p0_bounds.1 / 1e6);
        obj.penalty += w * v * v;
        dp0 += 2.0 * w * v * s / 1e6;
        res[1] = res[1].max(v);

        dy[k][1] += dp0 * C_W * (t0s[k] - t0r);
        dy[k][0] -= dp0 * C_W * q0;
        dt0s[k] += dp0 * C_W * q0;

        let lo = cfg.tis_lower(problem.k_start + k);
        for i in 0..n_loads {
            let ch = 2 + 3 * i;
            let (v, s) = penalty(y[k][ch], lo, cfg.tis_upper);
            obj.penalty += w * v * v;
            dy[k][ch] += 2.0 * w * v * s;
            res[2] = res[2].max(v);
        }
    }
    for i in 0..n_loads {
        let ch = 2 + 3 * i;
        let e = y[n - 1][ch] - cfg.t_star;
        obj.terminal += cfg.terminal_weight * e * e;
        dy[n - 1][ch] += 2.0 * cfg.terminal_weight * e;
    }
    // rate: consecutive expanded steps and the last applied input
    let mut rate = |a: f64, b: f64, ka: Option<usize>, kb: usize, obj: &mut ObjectiveBreakdown, dt0s: &mut [f64]| {
        let d = b - a;
        let v = d.abs() - cfg.max_rate;
        if v > 0.0 {
            obj.penalty += w * v * v;
            let gd = 2.0 * w * v * d.signum();
            dt0s[kb] += gd;
            if let Some(ka) = ka {
                dt0s[ka] -= gd;
            }
            res[3] = res[3].max(v);
        }
    };
    if let Some(prev) = problem.last_input {
        rate(prev, t0s[0], None, 0, &mut obj, &mut dt0s);
    }
    for k in 1..n {
        rate(t0s[k - 1], t0s[k], Some(k - 1), k, &mut obj, &mut dt0s);
    }
    obj.total = obj.energy + obj.terminal + obj.penalty;

    let dy_n: Vec<Vec<f64>> = dy
        .iter()
        .map(|r| r.iter().zip(&onorm.std).map(|(d, s)| d * s).collect())
        .collect();
    let g = backward_trace(model, &trace, &dy_n, false, true);
    for k in 0..n {
        dt0s[k] += g.inputs[k][0] / inorm.std[0];
    }
    let mut gradient = vec![0.0; blocked.len()];
    for k in 0..n {
        gradient[k / cfg.block] += dt0s[k];
    }
    if !obj.total.is_finite() || gradient.iter().any(|v| !v.is_finite()) {
        return Err(Error::ModelDivergence("non-finite objective".into()));
    }
    Ok(Evaluation {
        objective: obj,
        gradient,
        residuals: res,
        outputs: y,
    })
}
