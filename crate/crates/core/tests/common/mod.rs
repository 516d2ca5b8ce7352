#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snowflake_gnn::graph::{symmetrize, Splits};
use snowflake_gnn::{Graph, LayerMaskSet, ModelState, Variant};

pub type Dense = Vec<Vec<f64>>;

/// Small random graph with a 60/40 train/val split and sparse-ish features.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, f: usize, c: usize) -> Graph {
    let p = rng.random_range(0.15..0.5);
    let mut raw = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                raw.push((i, j));
            }
        }
    }
    let (edges, _) = symmetrize(&raw);
    let x = Array2::from_shape_simple_fn((n, f), || {
        if rng.random::<f64>() < 0.5 {
            0.0
        } else {
            rng.random_range(-1.0..1.0)
        }
    });
    let labels = (0..n).map(|_| rng.random_range(0..c)).collect();
    let cut = (n * 3).div_ceil(5);
    Graph::new(n, &edges, x, labels, c)
        .unwrap()
        .with_splits(Splits {
            train: (0..cut).collect(),
            val: (cut..n).collect(),
            test: Vec::new(),
        })
        .unwrap()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense `S^-1/2 (A + I) S^-1/2` built straight from the neighbour lists,
/// with masked-out `(row, col)` entries zeroed.
pub fn dense_adjacency(graph: &Graph, keep: &dyn Fn(usize, usize) -> bool) -> Dense {
    let n = graph.num_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = 1.0;
        for j in graph.neighbours(i) {
            a[i][j] = 1.0;
        }
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    for i in 0..n {
        for j in 0..n {
            if a[i][j] != 0.0 {
                a[i][j] = if keep(i, j) { 1.0 / (deg[i] * deg[j]).sqrt() } else { 0.0 };
            }
        }
    }
    a
}

pub fn to_dense(m: &Array2<f64>) -> Dense {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b.first().map_or(0, Vec::len));
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for t in 0..k {
            for j in 0..m {
                out[i][j] += a[i][t] * b[t][j];
            }
        }
    }
    out
}

fn batch_norm(t: &Dense, gamma: &[f64], beta: &[f64]) -> Dense {
    let n = t.len() as f64;
    let cols = t[0].len();
    let mut out = t.clone();
    for j in 0..cols {
        let mean = t.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = t.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        for (o, r) in out.iter_mut().zip(t) {
            o[j] = (r[j] - mean) / (var + 1e-5).sqrt() * gamma[j] + beta[j];
        }
    }
    out
}

pub struct DenseTape {
    pub t: Vec<Dense>,
    pub logits: Dense,
}

/// Brute-force eval-mode forward pass over dense matrices.
pub fn dense_forward(graph: &Graph, adj: &[Dense], state: &ModelState) -> DenseTape {
    let cfg = state.config();
    let p = state.params();
    let bn_base = cfg.depth + usize::from(cfg.variant != Variant::Gcn);
    let mut h = to_dense(graph.features());
    let mut ts = Vec::new();
    let mut hidden = Vec::new();
    let mut last_t = Vec::new();
    for (l, a) in adj.iter().enumerate() {
        let z = matmul(&h, &to_dense(&p[l]));
        let t = matmul(a, &z);
        ts.push(t.clone());
        let is_hidden = cfg.variant != Variant::Gcn || l + 1 < cfg.depth;
        if !is_hidden {
            last_t = t;
            break;
        }
        let u = if cfg.batch_norm {
            batch_norm(&t, p[bn_base + 2 * l].as_slice().unwrap(), p[bn_base + 2 * l + 1].as_slice().unwrap())
        } else {
            t
        };
        let act: Dense = u.iter().map(|r| r.iter().map(|&v| v.max(0.0)).collect()).collect();
        h = if cfg.variant == Variant::ResGcn && l > 0 {
            h.iter()
                .zip(&act)
                .map(|(x, y)| x.iter().zip(y).map(|(a, b)| a + b).collect())
                .collect()
        } else {
            act
        };
        hidden.push(h.clone());
    }
    let logits = match cfg.variant {
        Variant::Gcn => last_t,
        Variant::ResGcn => matmul(&h, &to_dense(&p[cfg.depth])),
        Variant::JkNet => {
            let cat: Dense = (0..graph.num_nodes())
                .map(|i| hidden.iter().flat_map(|m| m[i].clone()).collect())
                .collect();
            matmul(&cat, &to_dense(&p[cfg.depth]))
        }
    };
    DenseTape { t: ts, logits }
}

pub fn max_abs_diff(a: &Dense, b: &Array2<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    assert_eq!(a.len(), b.nrows());
    for (i, row) in a.iter().enumerate() {
        assert_eq!(row.len(), b.ncols());
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((v - b[[i, j]]).abs());
        }
    }
    worst
}

/// Per-layer `keep(row, col)` closures for a mask set.
pub fn dense_masked(graph: &Graph, masks: &LayerMaskSet) -> Vec<Dense> {
    let pat = graph.pattern();
    (0..masks.depth())
        .map(|l| {
            let layer = masks.layer(l);
            dense_adjacency(graph, &|i, j| pat.find(i, j).is_some_and(|e| layer[e]))
        })
        .collect()
}
