use dhs_core::nmpc::{
    closed_loop, default_demand_profile, objective_and_constraints, solve, NmpcConfig, NmpcController, PriceProfile,
    Problem, RuleBasedController,
};
use dhs_core::rnn::{build_monolithic_gru, Normalizer, RnnModel, SequenceModel};

fn plant_like_model(seed: u64) -> RnnModel {
    let mut m = build_monolithic_gru(1, &[12], 6, 17, seed).unwrap();
    m.input_norm = Normalizer {
        mean: vec![75.0, 4e5, 4e5, 4e5, 4e5, 4e5],
        std: vec![6.0, 2e5, 2e5, 2e5, 2e5, 2e5],
    };
    let mut mean = vec![48.0, 60.0];
    let mut std = vec![3.0, 15.0];
    for _ in 0..5 {
        mean.extend([72.0, 47.0, 3.0]);
        std.extend([5.0, 3.0, 1.0]);
    }
    m.output_norm = Normalizer { mean, std };
    m
}

fn small_cfg() -> NmpcConfig {
    NmpcConfig {
        horizon: 12,
        block: 3,
        ..NmpcConfig::default()
    }
}

fn forecast(n: usize) -> Vec<Vec<f64>> {
    default_demand_profile(5, 288).into_iter().cycle().skip(80).take(n).collect()
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let m = plant_like_model(3);
    let mut cfg = small_cfg();
    // tight boxes so every penalty is active somewhere
    cfg.t0r_bounds = (47.5, 48.5);
    cfg.p0_bounds = (1e6, 3e6);
    cfg.tis_upper = 74.0;
    cfg.tis_lower_day = 71.0;
    cfg.tis_lower_night = 71.0;
    cfg.max_rate = 1.0;
    let f = forecast(12);
    let prices = PriceProfile::synthetic(288);
    let x0 = vec![0.1; m.n_x()];
    let p = Problem {
        x0: &x0,
        forecast: &f,
        prices: &prices,
        k_start: 80,
        last_input: Some(74.0),
    };
    let blocked = [70.0, 78.0, 73.5, 81.0];
    let ev = objective_and_constraints(&m, &p, &blocked, &cfg).unwrap();
    assert!(ev.objective.penalty > 0.0);
    let h = 1e-5;
    for i in 0..blocked.len() {
        let mut bp = blocked;
        bp[i] += h;
        let mut bm = blocked;
        bm[i] -= h;
        let fp = objective_and_constraints(&m, &p, &bp, &cfg).unwrap().objective.total;
        let fm = objective_and_constraints(&m, &p, &bm, &cfg).unwrap().objective.total;
        let fd = (fp - fm) / (2.0 * h);
        let err = (fd - ev.gradient[i]).abs() / fd.abs().max(ev.gradient[i].abs()).max(1e-6);
        assert!(err < 1e-5, "block {i}: analytic {} vs fd {fd}", ev.gradient[i]);
    }
}

fn loose(mut cfg: NmpcConfig) -> NmpcConfig {
    cfg.t0r_bounds = (-1e3, 1e3);
    cfg.p0_bounds = (-1e12, 1e12);
    cfg.tis_upper = 1e3;
    cfg.tis_lower_day = -1e3;
    cfg.tis_lower_night = -1e3;
    cfg.max_rate = 1e3;
    cfg
}

#[test]
fn zero_prices_and_weights_give_zero_objective() {
    let m = plant_like_model(4);
    let mut cfg = loose(small_cfg());
    cfg.terminal_weight = 0.0;
    let f = forecast(12);
    let prices = PriceProfile::constant(0.0, 288);
    let x0 = vec![0.0; m.n_x()];
    let p = Problem {
        x0: &x0,
        forecast: &f,
        prices: &prices,
        k_start: 0,
        last_input: None,
    };
    let ev = objective_and_constraints(&m, &p, &[70.0, 75.0, 80.0, 72.0], &cfg).unwrap();
    assert_eq!(ev.objective.total, 0.0);
    assert!(ev.gradient.iter().all(|g| *g == 0.0));
}

#[test]
fn doubling_efficiency_halves_energy_term() {
    let m = plant_like_model(5);
    let cfg = small_cfg();
    let f = forecast(12);
    let prices = PriceProfile::synthetic(288);
    let x0 = vec![0.0; m.n_x()];
    let p = Problem {
        x0: &x0,
        forecast: &f,
        prices: &prices,
        k_start: 10,
        last_input: None,
    };
    let b = [74.0, 76.0, 75.0, 77.0];
    let e1 = objective_and_constraints(&m, &p, &b, &cfg).unwrap().objective;
    let cfg2 = NmpcConfig { eta: 2.0 * cfg.eta, ..cfg };
    let e2 = objective_and_constraints(&m, &p, &b, &cfg2).unwrap().objective;
    assert!((e2.energy - 0.5 * e1.energy).abs() <= 1e-12 * e1.energy.abs());
    assert_eq!(e1.terminal, e2.terminal);
}

#[test]
fn degenerate_box_pins_the_solution() {
    let m = plant_like_model(6);
    let cfg = NmpcConfig {
        t0s_bounds: (75.0, 75.0),
        ..small_cfg()
    };
    let f = forecast(12);
    let prices = PriceProfile::synthetic(288);
    let x0 = vec![0.0; m.n_x()];
    let p = Problem {
        x0: &x0,
        forecast: &f,
        prices: &prices,
        k_start: 0,
        last_input: Some(75.0),
    };
    let sol = solve(&m, &p, &cfg, Some(&[80.0, 70.0, 66.0, 84.0])).unwrap();
    assert!(sol.trajectory.iter().all(|v| *v == 75.0));
}

#[test]
fn solver_descends_and_respects_bounds() {
    let m = plant_like_model(7);
    let cfg = small_cfg();
    let f = forecast(12);
    let prices = PriceProfile::synthetic(288);
    let x0 = vec![0.0; m.n_x()];
    let p = Problem {
        x0: &x0,
        forecast: &f,
        prices: &prices,
        k_start: 100,
        last_input: Some(72.0),
    };
    let sol = solve(&m, &p, &cfg, None).unwrap();
    assert!(sol.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    assert!(sol.blocked.iter().all(|v| (65.0..=85.0).contains(v)));
    assert!((sol.trajectory[0] - 72.0).abs() <= cfg.max_rate + 1e-12);
    let again = solve(&m, &p, &cfg, Some(&sol.blocked)).unwrap();
    assert!(again.objective.total <= sol.objective.total + 1e-9 * sol.objective.total.abs());
}

#[test]
fn closed_loop_records_one_row_per_step() {
    use dhs_core::sim::{SimConfig, Simulator};
    use dhs_core::topology::aroma;
    let sim = Simulator::new(aroma(), SimConfig { warmup_hours: 2.0, ..SimConfig::default() }).unwrap();
    let demands: Vec<Vec<f64>> = default_demand_profile(5, 288).into_iter().cycle().take(40).collect();
    let prices = PriceProfile::synthetic(288);
    let cfg = small_cfg();

    let mut rb = RuleBasedController::new(75.0, cfg.t0s_bounds).unwrap();
    let r = closed_loop(&sim, &mut rb, &demands, &prices, 12, 75.0, &cfg).unwrap();
    assert_eq!(r.len(), 12);
    assert!(r.t0s.iter().all(|v| *v == 75.0));
    assert_eq!(r.indexes.t_avg, None);
    assert!(r.indexes.cost > 0.0);

    let m = plant_like_model(8);
    let mut mpc = NmpcController::new(&m, cfg.clone(), "test").unwrap();
    let r = closed_loop(&sim, &mut mpc, &demands, &prices, 6, 75.0, &cfg).unwrap();
    assert_eq!(r.solve_times.len(), 6);
    assert!(r.indexes.t_avg.is_some());
    assert!(r.max_rate(75.0) <= cfg.max_rate + 1e-9);
    let csv = r.to_csv("abc");
    assert_eq!(csv.lines().count(), 2 + 1 + 6);
}
