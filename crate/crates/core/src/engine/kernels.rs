//! Sparse × dense kernels over an [`EdgePattern`].
//!
//! Every kernel walks rows in a fixed order and accumulates left to right,
//! so the row-parallel variants produce bit-identical results.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::graph::{EdgePattern, SparseRows};

// Below this many output entries the rayon split is not worth it.
const PARALLEL_MIN: usize = 1 << 15;

fn contiguous(m: &ArrayView2<'_, f64>) -> Vec<f64> {
    m.as_standard_layout().iter().copied().collect()
}

fn for_rows(out: &mut [f64], width: usize, parallel: bool, f: impl Fn(usize, &mut [f64]) + Sync) {
    if width == 0 {
        return;
    }
    if parallel && out.len() >= PARALLEL_MIN {
        out.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    } else {
        out.chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
}

/// `out = Â · z`, skipping zero (masked) entries.
pub fn spmm(pattern: &EdgePattern, values: &[f64], z: ArrayView2<'_, f64>, parallel: bool) -> Array2<f64> {
    let (n, w) = (pattern.num_nodes(), z.ncols());
    let zs = contiguous(&z);
    let mut out = vec![0.0; n * w];
    for_rows(&mut out, w, parallel, |i, row| {
        for e in pattern.row(i) {
            let a = values[e];
            if a == 0.0 {
                continue;
            }
            let j = pattern.col_of(e);
            for (o, &x) in row.iter_mut().zip(&zs[j * w..(j + 1) * w]) {
                *o += a * x;
            }
        }
    });
    Array2::from_shape_vec((n, w), out).expect("shape")
}

/// `out = Âᵀ · dt`, gathered per column so each output row is owned by one
/// task.
pub fn spmm_transposed(
    pattern: &EdgePattern,
    values: &[f64],
    dt: ArrayView2<'_, f64>,
    parallel: bool,
) -> Array2<f64> {
    let (n, w) = (pattern.num_nodes(), dt.ncols());
    let ds = contiguous(&dt);
    let mut out = vec![0.0; n * w];
    for_rows(&mut out, w, parallel, |j, row| {
        for &e in pattern.column(j) {
            let a = values[e];
            if a == 0.0 {
                continue;
            }
            let i = pattern.row_of(e);
            for (o, &g) in row.iter_mut().zip(&ds[i * w..(i + 1) * w]) {
                *o += a * g;
            }
        }
    });
    Array2::from_shape_vec((n, w), out).expect("shape")
}

/// `∂L/∂Â_ij = ⟨dT_i, Z_j⟩` for every active entry; zero elsewhere.
pub fn adjacency_grad(
    pattern: &EdgePattern,
    values: &[f64],
    dt: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
) -> Vec<f64> {
    let w = z.ncols();
    let ds = contiguous(&dt);
    let zs = contiguous(&z);
    (0..pattern.num_edges())
        .map(|e| {
            if values[e] == 0.0 {
                return 0.0;
            }
            let (i, j) = pattern.endpoints(e);
            ds[i * w..(i + 1) * w]
                .iter()
                .zip(&zs[j * w..(j + 1) * w])
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

/// `X · W` for row-compressed `X`.
pub fn sparse_rows_matmul(x: &SparseRows, w: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = x.row_ptr.len() - 1;
    let width = w.ncols();
    let ws = contiguous(&w);
    let mut out = Array2::zeros((n, width));
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let row = row.as_slice_mut().expect("standard layout");
        for k in x.row_ptr[i]..x.row_ptr[i + 1] {
            let (c, v) = (x.cols[k], x.vals[k]);
            for (o, &b) in row.iter_mut().zip(&ws[c * width..(c + 1) * width]) {
                *o += v * b;
            }
        }
    }
    out
}

/// `Xᵀ · G` for row-compressed `X` with `num_cols` columns.
pub fn sparse_rows_t_matmul(x: &SparseRows, num_cols: usize, g: ArrayView2<'_, f64>) -> Array2<f64> {
    let width = g.ncols();
    let gs = contiguous(&g);
    let mut out = vec![0.0; num_cols * width];
    for i in 0..x.row_ptr.len() - 1 {
        let grow = &gs[i * width..(i + 1) * width];
        for k in x.row_ptr[i]..x.row_ptr[i + 1] {
            let (c, v) = (x.cols[k], x.vals[k]);
            for (o, &b) in out[c * width..(c + 1) * width].iter_mut().zip(grow) {
                *o += v * b;
            }
        }
    }
    Array2::from_shape_vec((num_cols, width), out).expect("shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalize, symmetrize, Graph};
    use ndarray::array;

    fn triangle_plus_tail() -> Graph {
        let (edges, _) = symmetrize(&[(0, 1), (1, 2), (2, 0), (2, 3)]);
        Graph::new(4, &edges, Array2::zeros((4, 1)), vec![0; 4], 1).unwrap()
    }

    fn dense(adj: &crate::graph::NormalizedAdjacency, n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, n), |(i, j)| adj.get(i, j))
    }

    #[test]
    fn spmm_matches_dense_product() {
        let g = triangle_plus_tail();
        let a = normalize(&g);
        let z = array![[1.0, -2.0], [0.5, 3.0], [-1.0, 0.25], [2.0, 2.0]];
        let got = spmm(g.pattern(), a.values(), z.view(), false);
        let want = dense(&a, 4).dot(&z);
        assert!((&got - &want).iter().all(|d| d.abs() < 1e-15));
        let par = spmm(g.pattern(), a.values(), z.view(), true);
        assert_eq!(got, par);
    }

    #[test]
    fn transposed_product_and_edge_grad() {
        let g = triangle_plus_tail();
        let a = normalize(&g);
        let dt = array![[0.1, 0.2], [0.3, -0.4], [0.5, 0.6], [-0.7, 0.8]];
        let z = array![[1.0, -2.0], [0.5, 3.0], [-1.0, 0.25], [2.0, 2.0]];
        let got = spmm_transposed(g.pattern(), a.values(), dt.view(), false);
        let want = dense(&a, 4).t().dot(&dt);
        assert!((&got - &want).iter().all(|d| d.abs() < 1e-15));

        let ga = adjacency_grad(g.pattern(), a.values(), dt.view(), z.view());
        let full = dt.dot(&z.t());
        for e in 0..g.pattern().num_edges() {
            let (i, j) = g.pattern().endpoints(e);
            assert!((ga[e] - full[[i, j]]).abs() < 1e-15);
        }
    }

    #[test]
    fn sparse_feature_products() {
        let x = array![[0.0, 1.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
        let sx = SparseRows::from_dense(&x);
        let w = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        assert_eq!(sparse_rows_matmul(&sx, w.view()), x.dot(&w));
        let g = array![[1.0, -1.0], [0.5, 0.5], [9.0, 9.0]];
        assert_eq!(sparse_rows_t_matmul(&sx, 3, g.view()), x.t().dot(&g));
    }
}
