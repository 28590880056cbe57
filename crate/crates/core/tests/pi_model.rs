use dhs_core::models::{build_model, AnyModel, Arch};
use dhs_core::pirnn::{build_pi_rnn, q_load_channel, t_return_channel, t_supply_channel};
use dhs_core::rnn::{predict, train_tbptt, SequenceModel, TrainConfig};
use dhs_core::sim::{generate_dataset, DatasetConfig, SimConfig, Simulator};
use dhs_core::topology::{aroma, reduce_graph};

/// Unit-scale rows; freshly built models use identity normalizers.
fn inputs(len: usize) -> Vec<Vec<f64>> {
    (0..len)
        .map(|k| {
            let mut r = vec![(k as f64 * 0.3).sin()];
            r.extend((0..5).map(|i| 0.5 * ((k + 7 * i) as f64 * 0.2).cos()));
            r
        })
        .collect()
}

fn load_channels(i: usize) -> [usize; 3] {
    [t_supply_channel(i), t_return_channel(i), q_load_channel(i)]
}

#[test]
fn demand_of_a_leaf_only_reaches_itself_and_the_return_network() {
    // AROMA load indices 0..5 are nodes 1..5; node 5 has no successors
    let rg = reduce_graph(&aroma()).unwrap();
    let m = build_pi_rnn(&rg, &[6, 6, 6, 8, 12, 16], false, 4).unwrap();
    let u = inputs(30);
    let mut v = u.clone();
    for r in v.iter_mut().skip(10) {
        r[5] += 0.5;
    }
    let a = predict(&m, &u).unwrap();
    let b = predict(&m, &v).unwrap();
    for (ya, yb) in a.iter().zip(&b).take(10) {
        assert_eq!(ya, yb);
    }
    for i in 0..4 {
        for c in load_channels(i) {
            assert!(a.iter().zip(&b).all(|(ya, yb)| ya[c] == yb[c]), "load {i} channel {c} moved");
        }
    }
    let moved = |c: usize| a.iter().zip(&b).any(|(ya, yb)| ya[c] != yb[c]);
    assert!(load_channels(4).iter().any(|&c| moved(c)));
    assert!(moved(0) && moved(1));
}

#[test]
fn supply_temperature_reaches_every_load() {
    let rg = reduce_graph(&aroma()).unwrap();
    let m = build_pi_rnn(&rg, &[6, 6, 6, 8, 12, 16], false, 4).unwrap();
    let u = inputs(20);
    let mut v = u.clone();
    v[3][0] += 0.5;
    let a = predict(&m, &u).unwrap();
    let b = predict(&m, &v).unwrap();
    for i in 0..5 {
        let c = t_supply_channel(i);
        assert!(a.iter().zip(&b).any(|(ya, yb)| ya[c] != yb[c]), "load {i}");
    }
}

#[test]
fn training_is_deterministic_for_a_seed() {
    let sim = Simulator::new(aroma(), SimConfig::default()).unwrap();
    let ds = generate_dataset(
        &sim,
        &DatasetConfig {
            n_samples: 600,
            ..DatasetConfig::default()
        },
    )
    .unwrap();
    let g = aroma();
    let rg = reduce_graph(&g).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        batches_per_epoch: 2,
        seed: 9,
        ..TrainConfig::default()
    };
    for arch in [Arch::Gru, Arch::PiGru] {
        let m = build_model(arch, &g, &rg, 18, 2, true, 9).unwrap();
        let a = train_tbptt(&m, &ds, &cfg).unwrap().model;
        let b = train_tbptt(&m, &ds, &cfg).unwrap().model;
        assert_eq!(a.params(), b.params(), "{arch}");
        assert_ne!(a.params(), m.params(), "{arch}");
        let back = AnyModel::from_json(&a.to_json(), Some(&rg)).unwrap();
        assert_eq!(back.params(), a.params());
    }
}
