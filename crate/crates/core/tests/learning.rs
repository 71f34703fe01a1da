use rumorsage::graph::FeaturedGraph;
use rumorsage::model::ModelConfig;
use rumorsage::synth::{generate, SignalKind, SynthConfig};
use rumorsage::train_eval::{evaluate, train, TrainConfig};

fn dataset(n: usize, strength: f64, seed: u64) -> Vec<FeaturedGraph> {
    generate(&SynthConfig {
        n_graphs: n,
        feature_dim: 32,
        signal_strength: strength,
        signal: SignalKind::Node,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
    .featured_graphs()
}

/// Nearest class mean over source-node features.
fn centroid_probe(train: &[FeaturedGraph], test: &[FeaturedGraph]) -> f64 {
    let dim = train[0].features.cols();
    let mut sums = vec![vec![0.0; dim]; 5];
    let mut counts = [0usize; 5];
    for g in train {
        let c = g.graph.label.unwrap();
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(g.features.row(0)) {
            *s += x;
        }
    }
    let correct = test
        .iter()
        .filter(|g| {
            let x = g.features.row(0);
            let dist = |c: usize| -> f64 {
                sums[c].iter().zip(x).map(|(s, v)| (s / counts[c] as f64 - v).powi(2)).sum()
            };
            let best = (0..5).min_by(|&a, &b| dist(a).total_cmp(&dist(b))).unwrap();
            best == g.graph.label.unwrap()
        })
        .count();
    correct as f64 / test.len() as f64
}

#[test]
fn strong_node_signal_is_linearly_separable() {
    let data = dataset(300, 5.0, 31);
    let acc = centroid_probe(&data[..200], &data[200..]);
    assert!(acc >= 0.95, "probe accuracy {acc}");
}

#[test]
fn zero_signal_leaves_the_probe_at_chance() {
    let data = dataset(400, 0.0, 32);
    let acc = centroid_probe(&data[..200], &data[200..]);
    assert!((acc - 0.2).abs() <= 0.1, "probe accuracy {acc}");
}

#[test]
fn trained_model_stays_at_chance_without_signal() {
    let data = dataset(500, 0.0, 33);
    let model = ModelConfig {
        in_dim: 32,
        ..ModelConfig::default()
    };
    let config = TrainConfig {
        max_epochs: 30,
        patience: 10,
        seed: 1,
        ..TrainConfig::default()
    };
    let out = train(&model, &config, &data[..200], &data[200..300]).unwrap();
    let acc = evaluate(&out.params, &data[300..]).unwrap().accuracy;
    assert!((acc - 0.2).abs() <= 0.1, "test accuracy {acc}");
}

#[test]
fn trained_model_learns_strong_node_signal() {
    let data = dataset(300, 3.0, 34);
    let model = ModelConfig {
        in_dim: 32,
        ..ModelConfig::default()
    };
    let config = TrainConfig {
        max_epochs: 60,
        patience: 20,
        seed: 2,
        ..TrainConfig::default()
    };
    let out = train(&model, &config, &data[..200], &data[200..250]).unwrap();
    let acc = evaluate(&out.params, &data[250..]).unwrap().accuracy;
    assert!(acc >= 0.8, "test accuracy {acc}");
}
