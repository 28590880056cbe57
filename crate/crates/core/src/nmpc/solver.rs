//! Projected limited-memory BFGS on the blocked supply temperatures.

use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nmpc::{blocking_expand, objective_and_constraints, NmpcConfig, ObjectiveBreakdown, Problem};
use crate::rnn::SequenceModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmpcSolution {
    pub blocked: Vec<f64>,
    /// Expanded supply temperature over the horizon.
    pub trajectory: Vec<f64>,
    /// Largest violation per softened constraint: T0r, P0 (MW), Tis, rate.
    pub slacks: [f64; 4],
    pub predicted: Vec<Vec<f64>>,
    pub objective: ObjectiveBreakdown,
    /// Objective after each accepted iteration, starting point first.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Wall-clock seconds.
    pub solve_time: f64,
}

fn bounds(problem: &Problem<'_>, cfg: &NmpcConfig) -> Vec<(f64, f64)> {
    let (lo, hi) = cfg.t0s_bounds;
    let mut b = vec![(lo, hi); cfg.n_blocks()];
    if let Some(prev) = problem.last_input {
        let (l0, h0) = (lo.max(prev - cfg.max_rate), hi.min(prev + cfg.max_rate));
        b[0] = if l0 <= h0 {
            (l0, h0)
        } else {
            let v = if prev < lo { lo } else { hi };
            (v, v)
        };
    }
    b
}

fn project(x: &mut [f64], b: &[(f64, f64)]) {
    for (v, (lo, hi)) in x.iter_mut().zip(b) {
        *v = v.clamp(*lo, *hi);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves one NMPC problem. The supply-temperature box and the rate limit
/// of the first block against the last applied input are enforced exactly
/// by projection; every other constraint is a quadratic penalty.
pub fn solve<M: SequenceModel + ?Sized>(
    model: &M,
    problem: &Problem<'_>,
    cfg: &NmpcConfig,
    warm_start: Option<&[f64]>,
) -> Result<NmpcSolution> {
    cfg.check()?;
    let started = Instant::now();
    let nb = cfg.n_blocks();
    let b = bounds(problem, cfg);
    let mut x: Vec<f64> = match warm_start {
        Some(w) if w.len() == nb => w.to_vec(),
        _ => vec![problem.last_input.unwrap_or(cfg.t_star); nb],
    };
    project(&mut x, &b);

    let mut ev = objective_and_constraints(model, problem, &x, cfg)?;
    let mut trace = vec![ev.objective.total];
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        let g = &ev.gradient;
        let f = ev.objective.total;
        let pg = x
            .iter()
            .zip(g)
            .zip(&b)
            .map(|((xi, gi), (lo, hi))| (xi - (xi - gi).clamp(*lo, *hi)).abs())
            .fold(0.0, f64::max);
        if pg <= cfg.tol * (1.0 + f.abs()) {
            converged = true;
            break;
        }
        let free: Vec<bool> = x
            .iter()
            .zip(g)
            .zip(&b)
            .map(|((xi, gi), (lo, hi))| !((*xi <= *lo && *gi > 0.0) || (*xi >= *hi && *gi < 0.0)))
            .collect();
        let gf: Vec<f64> = g.iter().zip(&free).map(|(gi, f)| if *f { *gi } else { 0.0 }).collect();

        // two-loop recursion
        let mut q = gf.clone();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = mem.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
            let beta = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - beta) * si);
        }
        let mut d: Vec<f64> = q.iter().zip(&free).map(|(v, f)| if *f { -v } else { 0.0 }).collect();
        if dot(&d, &gf) >= 0.0 || mem.is_empty() {
            d = gf.iter().map(|v| -v).collect();
            if !mem.is_empty() {
                mem.clear();
            }
        }
        // step damping
        let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if dmax > cfg.max_step {
            let s = cfg.max_step / dmax;
            d.iter_mut().for_each(|v| *v *= s);
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            project(&mut xn, &b);
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(g, &step);
            if decrease >= 0.0 {
                alpha *= 0.5;
                continue;
            }
            let evn = objective_and_constraints(model, problem, &xn, cfg)?;
            if evn.objective.total <= f + 1e-4 * decrease {
                accepted = Some((xn, evn, step));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, evn, s)) = accepted else {
            // no descent left at working precision
            converged = true;
            break;
        };
        let y: Vec<f64> = evn.gradient.iter().zip(&ev.gradient).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).max(1e-300).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            mem.push_back((s, y, 1.0 / sy));
            if mem.len() > cfg.lbfgs_memory {
                mem.pop_front();
            }
        }
        let fnew = evn.objective.total;
        x = xn;
        ev = evn;
        trace.push(fnew);
        iterations += 1;
        if (f - fnew).abs() <= 1e-12 * (1.0 + f.abs()) {
            converged = true;
            break;
        }
    }

    Ok(NmpcSolution {
        trajectory: blocking_expand(&x, cfg.horizon, cfg.block)?,
        blocked: x,
        slacks: ev.residuals,
        predicted: ev.outputs,
        objective: ev.objective,
        objective_trace: trace,
        iterations,
        converged,
        solve_time: started.elapsed().as_secs_f64(),
    })
}
