//! Receding-horizon operation against the plant simulator.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nmpc::{solve, NmpcConfig, PriceProfile, Problem};
use crate::rnn::{model_step, SequenceModel};
use crate::sim::Simulator;

/// Open-loop state estimate: the model replayed under applied inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ObserverState {
    pub x_hat: Vec<f64>,
    pub last_input: Option<f64>,
}

impl ObserverState {
    pub fn new(n_x: usize) -> Self {
        ObserverState {
            x_hat: vec![0.0; n_x],
            last_input: None,
        }
    }
}

pub fn observer_update<M: SequenceModel + ?Sized>(
    model: &M,
    o: &ObserverState,
    applied: f64,
    demands: &[f64],
) -> Result<ObserverState> {
    let mut u = Vec::with_capacity(1 + demands.len());
    u.push(applied);
    u.extend_from_slice(demands);
    let (x, _) = model_step(model, &o.x_hat, &u)?;
    Ok(ObserverState {
        x_hat: x,
        last_input: Some(applied),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub t0s: f64,
    /// Wall-clock seconds; `None` when nothing was optimized.
    pub solve_time: Option<f64>,
    pub iterations: usize,
    pub failed: bool,
}

pub trait Controller {
    fn name(&self) -> String;
    /// Steps of demand forecast the controller needs.
    fn horizon(&self) -> usize;
    /// Replays the inputs that brought the plant to its initial state.
    fn initialize(&mut self, history: &[(f64, Vec<f64>)]) -> Result<()>;
    fn decide(&mut self, k: usize, forecast: &[Vec<f64>], prices: &PriceProfile) -> Decision;
    fn observe(&mut self, applied: f64, demands: &[f64]) -> Result<()>;
}

/// Constant supply temperature.
#[derive(Clone, Debug)]
pub struct RuleBasedController {
    pub t_const: f64,
}

impl RuleBasedController {
    pub fn new(t_const: f64, bounds: (f64, f64)) -> Result<Self> {
        if !(bounds.0..=bounds.1).contains(&t_const) {
            return Err(Error::Config(format!(
                "supply temperature {t_const} outside station bounds {bounds:?}"
            )));
        }
        Ok(RuleBasedController { t_const })
    }
}

impl Controller for RuleBasedController {
    fn name(&self) -> String {
        format!("rule-based {}", self.t_const)
    }

    fn horizon(&self) -> usize {
        0
    }

    fn initialize(&mut self, _: &[(f64, Vec<f64>)]) -> Result<()> {
        Ok(())
    }

    fn decide(&mut self, _: usize, _: &[Vec<f64>], _: &PriceProfile) -> Decision {
        Decision {
            t0s: self.t_const,
            solve_time: None,
            iterations: 0,
            failed: false,
        }
    }

    fn observe(&mut self, _: f64, _: &[f64]) -> Result<()> {
        Ok(())
    }
}

pub struct NmpcController<'m, M: SequenceModel + ?Sized> {
    pub model: &'m M,
    pub cfg: NmpcConfig,
    pub observer: ObserverState,
    pub label: String,
    warm: Option<Vec<f64>>,
}

impl<'m, M: SequenceModel + ?Sized> NmpcController<'m, M> {
    pub fn new(model: &'m M, cfg: NmpcConfig, label: impl Into<String>) -> Result<Self> {
        cfg.check()?;
        Ok(NmpcController {
            observer: ObserverState::new(model.n_x()),
            model,
            cfg,
            label: label.into(),
            warm: None,
        })
    }
}

impl<M: SequenceModel + ?Sized> Controller for NmpcController<'_, M> {
    fn name(&self) -> String {
        format!("nmpc {}", self.label)
    }

    fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    fn initialize(&mut self, history: &[(f64, Vec<f64>)]) -> Result<()> {
        let mut o = ObserverState::new(self.model.n_x());
        for (v, d) in history {
            o = observer_update(self.model, &o, *v, d)?;
        }
        self.observer = o;
        self.warm = None;
        Ok(())
    }

    fn decide(&mut self, k: usize, forecast: &[Vec<f64>], prices: &PriceProfile) -> Decision {
        let problem = Problem {
            x0: &self.observer.x_hat,
            forecast,
            prices,
            k_start: k,
            last_input: self.observer.last_input,
        };
        let fallback = self.observer.last_input.unwrap_or(self.cfg.t_star);
        match solve(self.model, &problem, &self.cfg, self.warm.as_deref()) {
            Ok(sol) => {
                let t0s = sol.trajectory[0];
                self.warm = Some(sol.blocked);
                Decision {
                    t0s,
                    solve_time: Some(sol.solve_time),
                    iterations: sol.iterations,
                    failed: false,
                }
            }
            Err(_) => Decision {
                t0s: fallback,
                solve_time: Some(0.0),
                iterations: 0,
                failed: true,
            },
        }
    }

    fn observe(&mut self, applied: f64, demands: &[f64]) -> Result<()> {
        self.observer = observer_update(self.model, &self.observer, applied, demands)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerformanceIndexes {
    /// Production cost over the run, currency.
    pub cost: f64,
    /// Σ_k (P0*(k) − Σ_i P_i^c(k)), W.
    pub loss_sum: f64,
    /// Mean of the same difference, W.
    pub loss_mean: f64,
    /// Mean solve time, s; `None` for controllers that do not optimize.
    pub t_avg: Option<f64>,
}

/// Cost `Σ c(k)·P0*(k)·τ/η`, summed losses and mean solve time.
pub fn performance_indexes(
    station_power: &[f64],
    total_demand: &[f64],
    prices: &[f64],
    eta: f64,
    dt: f64,
    solve_times: &[Option<f64>],
) -> Result<PerformanceIndexes> {
    let n = station_power.len();
    if total_demand.len() != n || prices.len() != n {
        return Err(Error::Dimension("closed-loop records differ in length".into()));
    }
    let hours = dt / 3600.0;
    let cost = station_power.iter().zip(prices).map(|(p, c)| c * p * hours / eta).sum();
    let loss_sum: f64 = station_power.iter().zip(total_demand).map(|(p, d)| p - d).sum();
    let times: Vec<f64> = solve_times.iter().flatten().copied().collect();
    Ok(PerformanceIndexes {
        cost,
        loss_sum,
        loss_mean: if n > 0 { loss_sum / n as f64 } else { 0.0 },
        t_avg: (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopResult {
    pub controller: String,
    pub dt: f64,
    pub t0s: Vec<f64>,
    pub output_names: Vec<String>,
    pub outputs: Vec<Vec<f64>>,
    pub demands: Vec<Vec<f64>>,
    /// Plant-measured station power, W.
    pub station_power: Vec<f64>,
    pub total_demand: Vec<f64>,
    pub prices: Vec<f64>,
    /// Time-varying lower bound on load supply temperatures.
    pub tis_lower: Vec<f64>,
    /// Largest shortfall of any load supply temperature below its bound, °C.
    pub lower_violation: Vec<f64>,
    pub solve_times: Vec<Option<f64>>,
    pub iterations: Vec<usize>,
    pub failures: usize,
    pub indexes: PerformanceIndexes,
}

impl ClosedLoopResult {
    pub fn len(&self) -> usize {
        self.t0s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t0s.is_empty()
    }

    /// Time series without wall-clock data.
    pub fn to_csv(&self, fingerprint: &str) -> String {
        let mut s = format!("# fingerprint={fingerprint}\n# controller={}\n", self.controller);
        s.push_str("k,t,T0s,price,P0,Pc_total,tis_lower,violation,iterations");
        for n in &self.output_names {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for k in 0..self.len() {
            let _ = write!(
                s,
                "{k},{},{},{},{},{},{},{},{}",
                k as f64 * self.dt,
                self.t0s[k],
                self.prices[k],
                self.station_power[k],
                self.total_demand[k],
                self.tis_lower[k],
                self.lower_violation[k],
                self.iterations[k]
            );
            for v in &self.outputs[k] {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    /// Fraction of steps with a lower-bound shortfall above `threshold`.
    pub fn violation_fraction(&self, threshold: f64) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.lower_violation.iter().filter(|v| **v > threshold).count() as f64 / self.len() as f64
    }

    pub fn max_rate(&self, previous: f64) -> f64 {
        let mut prev = previous;
        let mut m: f64 = 0.0;
        for &v in &self.t0s {
            m = m.max((v - prev).abs());
            prev = v;
        }
        m
    }
}

/// One day of per-load demands, W: a morning and an evening peak over a
/// base level, between roughly 35 % and 100 % of each load's peak.
pub fn default_demand_profile(n_loads: usize, steps_per_day: usize) -> Vec<Vec<f64>> {
    const PEAKS_KW: [f64; 5] = [560.0, 520.0, 480.0, 620.0, 580.0];
    let shape = |h: f64| {
        let bump = |c: f64, w: f64| (-((h - c) / w).powi(2)).exp();
        0.35 + 0.5 * bump(7.5, 2.0) + 0.4 * bump(19.0, 2.5) + 0.1 * bump(13.0, 3.0)
    };
    let peak_shape = (0..steps_per_day)
        .map(|k| shape(24.0 * k as f64 / steps_per_day as f64))
        .fold(0.0, f64::max);
    (0..steps_per_day)
        .map(|k| {
            let s = shape(24.0 * k as f64 / steps_per_day as f64) / peak_shape;
            (0..n_loads).map(|i| PEAKS_KW[i % PEAKS_KW.len()] * 1e3 * s).collect()
        })
        .collect()
}

/// Runs `steps` control steps. `demands[k]` holds the per-load demands at
/// step `k` and must cover `steps + horizon` rows. The plant and the
/// controller's observer are first brought to steady state under
/// `initial_t0s` and the first demand row.
pub fn closed_loop(
    sim: &Simulator,
    controller: &mut dyn Controller,
    demands: &[Vec<f64>],
    prices: &PriceProfile,
    steps: usize,
    initial_t0s: f64,
    nmpc: &NmpcConfig,
) -> Result<ClosedLoopResult> {
    let need = steps + controller.horizon();
    if demands.len() < need.max(steps) {
        return Err(Error::Dimension(format!("demand profile has {} rows, need {need}", demands.len())));
    }
    let dt = sim.config().dt;
    let warm_hours = sim.config().warmup_hours;
    let mut state = sim.initial_state(initial_t0s)?;
    sim.warm_up(&mut state, initial_t0s, &demands[0], warm_hours)?;
    let warm_steps = (warm_hours * 3600.0 / dt).round() as usize;
    let history: Vec<(f64, Vec<f64>)> = (0..warm_steps).map(|_| (initial_t0s, demands[0].clone())).collect();
    controller.initialize(&history)?;
    controller.observe(initial_t0s, &demands[0])?;

    let n_loads = sim.n_loads();
    let mut r = ClosedLoopResult {
        controller: controller.name(),
        dt,
        t0s: Vec::with_capacity(steps),
        output_names: sim.output_names(),
        outputs: Vec::with_capacity(steps),
        demands: Vec::with_capacity(steps),
        station_power: Vec::with_capacity(steps),
        total_demand: Vec::with_capacity(steps),
        prices: Vec::with_capacity(steps),
        tis_lower: Vec::with_capacity(steps),
        lower_violation: Vec::with_capacity(steps),
        solve_times: Vec::with_capacity(steps),
        iterations: Vec::with_capacity(steps),
        failures: 0,
        indexes: PerformanceIndexes {
            cost: 0.0,
            loss_sum: 0.0,
            loss_mean: 0.0,
            t_avg: None,
        },
    };
    for k in 0..steps {
        let forecast = &demands[k..(k + controller.horizon()).max(k + 1)];
        let dec = controller.decide(k, forecast, prices);
        let t0s = dec.t0s.clamp(nmpc.t0s_bounds.0, nmpc.t0s_bounds.1);
        let rec = sim.step(&mut state, t0s, &demands[k])?;
        controller.observe(t0s, &demands[k])?;

        let lo = nmpc.tis_lower(k);
        let viol = (0..n_loads)
            .map(|i| (lo - rec.outputs[2 + 3 * i]).max(0.0))
            .fold(0.0, f64::max);
        r.t0s.push(t0s);
        r.outputs.push(rec.outputs);
        r.station_power.push(rec.station_power);
        r.total_demand.push(demands[k].iter().sum());
        r.demands.push(demands[k].clone());
        r.prices.push(prices.at(k));
        r.tis_lower.push(lo);
        r.lower_violation.push(viol);
        r.solve_times.push(dec.solve_time);
        r.iterations.push(dec.iterations);
        r.failures += usize::from(dec.failed);
    }
    r.indexes = performance_indexes(&r.station_power, &r.total_demand, &r.prices, nmpc.eta, dt, &r.solve_times)?;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_based_bounds() {
        assert!(RuleBasedController::new(90.0, (65.0, 85.0)).is_err());
        let mut c = RuleBasedController::new(75.0, (65.0, 85.0)).unwrap();
        let d = c.decide(3, &[], &PriceProfile::constant(1.0, 4));
        assert_eq!((d.t0s, d.solve_time), (75.0, None));
    }

    #[test]
    fn index_arithmetic() {
        let n = 288;
        let p = vec![2e6; n];
        let idx = performance_indexes(&p, &p, &vec![1e-4; n], 2.5, 300.0, &vec![None; n]).unwrap();
        assert_eq!(idx.loss_sum, 0.0);
        assert!((idx.cost - 1e-4 * 2e6 * 24.0 / 2.5).abs() < 1e-9);
        assert_eq!(idx.t_avg, None);
    }

    #[test]
    fn demand_profile_in_training_range() {
        let d = default_demand_profile(5, 288);
        assert_eq!(d.len(), 288);
        for row in &d {
            assert!(row.iter().all(|v| (100e3..=800e3).contains(v)));
        }
    }
}
