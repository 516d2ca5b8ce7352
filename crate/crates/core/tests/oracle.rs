mod common;

use common::*;
use rand::Rng;
use snowflake_gnn::baselines::random_prune;
use snowflake_gnn::engine::{
    backward, finite_diff_grad, forward, forward_eval, forward_parallel, init_params, AdjacencyGrads, PerturbTarget,
};
use snowflake_gnn::gradcheck::{relative_error, run_gradcheck, GradcheckConfig};
use snowflake_gnn::graph::normalize;
use snowflake_gnn::{LayerMaskSet, ModelConfig, NormalizedAdjacency, Variant};

fn masked(graph: &snowflake_gnn::Graph, masks: &LayerMaskSet) -> Vec<NormalizedAdjacency> {
    let base = normalize(graph);
    masks.layers().iter().map(|m| base.apply_mask(m).unwrap()).collect()
}

#[test]
fn sparse_forward_matches_dense_brute_force() {
    let mut rng = seeded(11);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let variant = Variant::ALL[trial % 3];
        let n = rng.random_range(3..=14);
        let (f, c) = (rng.random_range(1..=6), rng.random_range(2..=4));
        let g = random_graph(&mut rng, n, f, c);
        let depth = rng.random_range(1..=5);
        let mut cfg = ModelConfig::new(variant, depth, g.num_features(), g.num_classes())
            .with_hidden(rng.random_range(1..=6))
            .with_seed(trial as u64);
        cfg.batch_norm = trial % 4 == 1;
        let state = init_params(&cfg).unwrap();
        let mut masks = LayerMaskSet::full(g.pattern().clone(), depth);
        if trial % 2 == 0 {
            random_prune(&mut masks, rng.random_range(0.0..80.0), trial as u64).unwrap();
        }
        let tape = forward_eval(&g, &masked(&g, &masks), &state).unwrap();
        let dense = dense_forward(&g, &dense_masked(&g, &masks), &state);
        for (l, t) in dense.t.iter().enumerate() {
            worst = worst.max(max_abs_diff(t, tape.post_aggregation(l)));
        }
        worst = worst.max(max_abs_diff(&dense.logits, tape.logits()));
    }
    assert!(worst <= 1e-12, "max deviation {worst:e}");
}

#[test]
fn parallel_kernels_are_bitwise_identical() {
    let mut rng = seeded(3);
    for trial in 0..10 {
        let g = random_graph(&mut rng, 40, 8, 3);
        let cfg = ModelConfig::new(Variant::ALL[trial % 3], 4, 8, 3).with_hidden(5).with_seed(trial as u64);
        let state = init_params(&cfg).unwrap();
        let adj = masked(&g, &LayerMaskSet::full(g.pattern().clone(), 4));
        let a = forward(&g, &adj, &state).unwrap();
        let b = forward_parallel(&g, &adj, &state, true).unwrap();
        assert_eq!(a.logits(), b.logits());
    }
}

#[test]
fn gradcheck_default_passes_within_tolerance() {
    let report = run_gradcheck(&GradcheckConfig::default()).unwrap();
    for row in &report.rows {
        assert!(row.checked > 0, "{row:?}");
    }
    assert!(report.passed(), "{:?}", report.rows);
}

#[test]
fn zero_tolerance_fails_and_zero_trials_is_vacuous() {
    let strict = run_gradcheck(&GradcheckConfig {
        trials: 6,
        tolerance: 0.0,
        ..GradcheckConfig::default()
    })
    .unwrap();
    assert!(!strict.passed());
    let none = run_gradcheck(&GradcheckConfig {
        trials: 0,
        ..GradcheckConfig::default()
    })
    .unwrap();
    assert!(none.passed() && none.vacuous());
}

// d loss / d Â entries against central differences, independent of the
// gradcheck harness.
#[test]
fn adjacency_gradient_matches_central_difference() {
    let mut rng = seeded(21);
    let g = random_graph(&mut rng, 9, 4, 3);
    let cfg = ModelConfig::new(Variant::ResGcn, 3, 4, 3).with_hidden(4).with_seed(5);
    let state = init_params(&cfg).unwrap();
    let adj = masked(&g, &LayerMaskSet::full(g.pattern().clone(), 3));
    let split = g.splits().train.clone();
    let tape = forward(&g, &adj, &state).unwrap();
    let grads = backward(&tape, &g, &adj, &state, &split, AdjacencyGrads::All).unwrap();
    let mut checked = 0;
    for layer in 0..3 {
        let ga = grads.adjacency[layer].as_ref().unwrap();
        for edge in 0..adj[layer].values().len() {
            let fd = finite_diff_grad(&g, &adj, &state, &split, PerturbTarget::Adjacency { layer, edge }, 1e-5).unwrap();
            if fd.smooth {
                checked += 1;
                assert!(relative_error(ga[edge], fd.estimate) < 1e-4, "layer {layer} edge {edge}");
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn single_layer_gradient_request_matches_full() {
    let mut rng = seeded(8);
    let g = random_graph(&mut rng, 10, 3, 2);
    let cfg = ModelConfig::new(Variant::JkNet, 3, 3, 2).with_hidden(3);
    let state = init_params(&cfg).unwrap();
    let adj = masked(&g, &LayerMaskSet::full(g.pattern().clone(), 3));
    let split = g.splits().train.clone();
    let tape = forward(&g, &adj, &state).unwrap();
    let all = backward(&tape, &g, &adj, &state, &split, AdjacencyGrads::All).unwrap();
    let one = backward(&tape, &g, &adj, &state, &split, AdjacencyGrads::Layer(1)).unwrap();
    assert!(one.adjacency[0].is_none() && one.adjacency[2].is_none());
    assert_eq!(one.adjacency[1], all.adjacency[1]);
    assert_eq!(one.params, all.params);
}
