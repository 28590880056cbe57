use dhs_core::rnn::{bptt_gradients_normalized, build_monolithic_gru, SequenceModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_seq(rng: &mut ChaCha8Rng, len: usize, n: usize) -> Vec<Vec<f64>> {
    (0..len).map(|_| (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central differences on `n_samples` random parameter components.
fn check_param_gradients<M: SequenceModel + Clone>(m: &M, u: &[Vec<f64>], y: &[Vec<f64>], washout: usize, n_samples: usize, seed: u64) -> f64 {
    let x0 = vec![0.0; m.n_x()];
    let (_, g) = bptt_gradients_normalized(m, &x0, u, y, washout).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..n_samples {
        let i = rng.random_range(0..m.n_params());
        let mut mp = m.clone();
        mp.params_mut()[i] += h;
        let lp = bptt_gradients_normalized(&mp, &x0, u, y, washout).unwrap().0;
        mp.params_mut()[i] -= 2.0 * h;
        let lm = bptt_gradients_normalized(&mp, &x0, u, y, washout).unwrap().0;
        let fd = (lp - lm) / (2.0 * h);
        worst = worst.max(rel_err(g[i], fd));
    }
    worst
}

#[test]
fn monolithic_gru_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = build_monolithic_gru(3, &[5, 4, 6], 3, 4, 2).unwrap();
    let u = random_seq(&mut rng, 40, 3);
    let y = random_seq(&mut rng, 40, 4);
    let worst = check_param_gradients(&m, &u, &y, 10, 250, 5);
    assert!(worst < 1e-4, "worst relative error {worst}");
}

fn pi_model(cumulative: bool) -> dhs_core::pirnn::PiRnnModel {
    use dhs_core::topology::{aroma, reduce_graph};
    let rg = reduce_graph(&aroma()).unwrap();
    let mut m = dhs_core::pirnn::build_pi_rnn(&rg, &[3, 3, 3, 4, 8, 9], cumulative, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u: Vec<Vec<f64>> = (0..50)
        .map(|_| {
            let mut r = vec![rng.random_range(65.0..85.0)];
            r.extend((0..5).map(|_| rng.random_range(1e5..8e5)));
            r
        })
        .collect();
    let y = random_seq(&mut rng, 50, 17);
    m.fit_normalization(&u, &y).unwrap();
    m
}

#[test]
fn pi_gru_composite_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for cumulative in [false, true] {
        let m = pi_model(cumulative);
        let u = random_seq(&mut rng, 30, 6);
        let y = random_seq(&mut rng, 30, 17);
        let worst = check_param_gradients(&m, &u, &y, 5, 250, 6);
        assert!(worst < 1e-4, "cumulative={cumulative}: worst relative error {worst}");
    }
}

#[test]
fn two_subnet_chain_matches_finite_differences() {
    use dhs_core::topology::{reduce_graph, LoadParams, NetworkGraph, Node, PipeEdge};
    let g = NetworkGraph::new(
        "chain",
        vec![Node::station(), Node::load(1, LoadParams::default())],
        vec![PipeEdge::new(0, 1, 100.0, 0.1, 0.5)],
    );
    let rg = reduce_graph(&g).unwrap();
    let m = dhs_core::pirnn::build_pi_rnn(&rg, &[4, 3], false, 8).unwrap();
    assert_eq!(m.n_rnn(), 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let u = random_seq(&mut rng, 25, 2);
    let y = random_seq(&mut rng, 25, 5);
    let worst = check_param_gradients(&m, &u, &y, 3, 200, 9);
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn input_gradients_match_finite_differences() {
    use dhs_core::rnn::{backward_trace, forward_trace};
    let m = pi_model(true);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u = random_seq(&mut rng, 20, 6);
    let w = random_seq(&mut rng, 20, 17);
    let x0 = vec![0.0; m.n_x()];
    let loss = |u: &[Vec<f64>]| -> f64 {
        let t = forward_trace(&m, &x0, u);
        t.y_n.iter().zip(&w).map(|(y, w)| y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()).sum()
    };
    let trace = forward_trace(&m, &x0, &u);
    let g = backward_trace(&m, &trace, &w, false, true);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        for c in 0..6 {
            let mut up = u.clone();
            up[k][c] += h;
            let mut um = u.clone();
            um[k][c] -= h;
            let fd = (loss(&up) - loss(&um)) / (2.0 * h);
            worst = worst.max(rel_err(g.inputs[k][c], fd));
        }
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}
