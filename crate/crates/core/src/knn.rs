//! The KNN graph baseline that fixed-graph attention replaces.
//!
//! Every image gets its own graph: each pixel links to its `k` nearest
//! pixels in channel-feature space. Aggregation then works on a node-major
//! (n, h·w, c) copy of the features and copies the result back to NCHW.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{mismatch, Error, Result};
use crate::scalar::{fold_max, Scalar};
use crate::svga::{project_relative, FixedGraph};
use crate::tensor::{ConvBn, Dims, Tensor4};

/// Per-image neighbor lists: `k` flat pixel indices per node, node-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnnAdjacency {
    pub batch: usize,
    pub num_nodes: usize,
    pub k: usize,
    /// Length `batch · num_nodes · k`.
    pub neighbor_idx: Vec<u32>,
}

impl KnnAdjacency {
    pub fn neighbors(&self, b: usize, node: usize) -> &[u32] {
        let start = (b * self.num_nodes + node) * self.k;
        &self.neighbor_idx[start..start + self.k]
    }

    /// Adjacency of a fixed graph, neighbors in the graph's fold order.
    pub fn from_fixed_graph(graph: &FixedGraph, batch: usize) -> Self {
        let num_nodes = graph.h * graph.w;
        let mut per_image = Vec::with_capacity(num_nodes * graph.neighbor_count());
        for i in 0..graph.h {
            for j in 0..graph.w {
                per_image.extend(graph.neighbors_of(i, j).map(|q| q as u32));
            }
        }
        let mut neighbor_idx = Vec::with_capacity(per_image.len() * batch);
        for _ in 0..batch {
            neighbor_idx.extend_from_slice(&per_image);
        }
        KnnAdjacency { batch, num_nodes, k: graph.neighbor_count(), neighbor_idx }
    }
}

/// NCHW → (n, h·w, c), materialized.
pub fn to_node_major<T: Scalar>(x: &Tensor4<T>) -> Vec<T> {
    let d = x.dims();
    let nodes = d.plane();
    let mut out = vec![T::ZERO; d.len()];
    for n in 0..d.n {
        let dst = &mut out[n * nodes * d.c..(n + 1) * nodes * d.c];
        for c in 0..d.c {
            for (p, &v) in x.plane(n, c).iter().enumerate() {
                dst[p * d.c + c] = v;
            }
        }
    }
    out
}

/// (n, h·w, c) → NCHW, materialized.
pub fn from_node_major<T: Scalar>(nodes: &[T], dims: Dims) -> Tensor4<T> {
    let plane = dims.plane();
    let mut out = vec![T::ZERO; dims.len()];
    for n in 0..dims.n {
        let src = &nodes[n * plane * dims.c..(n + 1) * plane * dims.c];
        for c in 0..dims.c {
            let dst = &mut out[(n * dims.c + c) * plane..(n * dims.c + c + 1) * plane];
            for (p, v) in dst.iter_mut().enumerate() {
                *v = src[p * dims.c + c];
            }
        }
    }
    Tensor4::new(dims, out).expect("dims come from a valid tensor")
}

#[inline]
fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::ZERO;
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

fn by_distance_then_index<T: Scalar>(a: &(T, u32), b: &(T, u32)) -> Ordering {
    a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

/// For every pixel, its `k` nearest other pixels by squared Euclidean
/// distance over channels; equal distances go to the lower flat index.
/// Neighbors are listed nearest first.
pub fn knn_graph<T: Scalar>(x: &Tensor4<T>, k: usize) -> Result<KnnAdjacency> {
    let d = x.dims();
    let nodes = d.plane();
    if k >= nodes {
        return Err(Error::Config(format!("knn k = {k} needs more than {nodes} pixels")));
    }
    let feats = to_node_major(x);
    let mut neighbor_idx = Vec::with_capacity(d.n * nodes * k);
    let mut cand: Vec<(T, u32)> = Vec::with_capacity(nodes);
    for n in 0..d.n {
        let image = &feats[n * nodes * d.c..(n + 1) * nodes * d.c];
        for i in 0..nodes {
            let fi = &image[i * d.c..(i + 1) * d.c];
            cand.clear();
            cand.extend(
                (0..nodes)
                    .filter(|&j| j != i)
                    .map(|j| (squared_distance(fi, &image[j * d.c..(j + 1) * d.c]), j as u32)),
            );
            if k > 0 {
                cand.select_nth_unstable_by(k - 1, by_distance_then_index);
                cand[..k].sort_unstable_by(by_distance_then_index);
            }
            neighbor_idx.extend(cand[..k].iter().map(|&(_, j)| j));
        }
    }
    Ok(KnnAdjacency { batch: d.n, num_nodes: nodes, k, neighbor_idx })
}

/// Max-relative aggregation over an arbitrary adjacency: reshape to node
/// layout, gather, fold `X(p) - X(q)` into a zero-initialized maximum per
/// channel, reshape back.
pub fn relative_max_knn<T: Scalar>(x: &Tensor4<T>, adj: &KnnAdjacency) -> Result<Tensor4<T>> {
    let d = x.dims();
    let nodes = d.plane();
    if adj.batch != d.n || adj.num_nodes != nodes || adj.neighbor_idx.len() != d.n * nodes * adj.k {
        return Err(mismatch(
            "relative_max_knn",
            format!("adjacency {}x{} nodes (k={}) for input {d}", adj.batch, adj.num_nodes, adj.k),
        ));
    }
    let feats = to_node_major(x);
    let mut agg = vec![T::ZERO; feats.len()];
    let mut gathered: Vec<T> = vec![T::ZERO; adj.k * d.c];
    for n in 0..d.n {
        let image = &feats[n * nodes * d.c..(n + 1) * nodes * d.c];
        for i in 0..nodes {
            for (slot, &q) in adj.neighbors(n, i).iter().enumerate() {
                let q = q as usize;
                if q >= nodes {
                    return Err(Error::IndexOutOfRange { index: q, len: nodes });
                }
                gathered[slot * d.c..(slot + 1) * d.c].copy_from_slice(&image[q * d.c..(q + 1) * d.c]);
            }
            let own = &image[i * d.c..(i + 1) * d.c];
            let out = &mut agg[(n * nodes + i) * d.c..(n * nodes + i + 1) * d.c];
            for (c, acc) in out.iter_mut().enumerate() {
                let mut m = T::ZERO;
                for slot in 0..adj.k {
                    m = fold_max(m, own[c] - gathered[slot * d.c + c]);
                }
                *acc = m;
            }
        }
    }
    Ok(from_node_major(&agg, d))
}

/// Graph construction plus aggregation, the per-input work the fixed graph
/// avoids.
pub fn knn_aggregate<T: Scalar>(x: &Tensor4<T>, k: usize) -> Result<Tensor4<T>> {
    relative_max_knn(x, &knn_graph(x, k)?)
}

/// Max-relative convolution over a KNN adjacency, with the same projection
/// as the roll-based path.
pub fn mrconv_knn<T: Scalar>(x: &Tensor4<T>, adj: &KnnAdjacency, proj: &ConvBn<T>) -> Result<Tensor4<T>> {
    let xj = relative_max_knn(x, adj)?;
    project_relative(x, &xj, proj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::SeededInit;
    use crate::svga::{build_fixed_offsets, mrconv_gather_oracle};
    use crate::tensor::{concat_channels, ConvSpec};

    #[test]
    fn node_layout_round_trip() {
        let x: Tensor4<f32> = SeededInit::new(1).tensor(Dims::new(2, 3, 4, 5), 1.0);
        let nodes = to_node_major(&x);
        assert_eq!(nodes[(20 + 7) * 3 + 2], x.at(1, 2, 1, 2));
        assert!(from_node_major(&nodes, x.dims()).bitwise_eq(&x));
    }

    #[test]
    fn identical_pair_selects_each_other() {
        // 1×2×2×2: pixels 1 and 2 share a feature vector, the rest are far away
        let feats: [[f32; 2]; 4] = [[100.0, 0.0], [1.0, 1.0], [1.0, 1.0], [-50.0, 30.0]];
        let x = Tensor4::from_fn(Dims::new(1, 2, 2, 2), |_, c, h, w| feats[h * 2 + w][c]);
        let adj = knn_graph(&x, 1).unwrap();
        assert_eq!(adj.neighbors(0, 1), &[2]);
        assert_eq!(adj.neighbors(0, 2), &[1]);
    }

    #[test]
    fn coordinate_features_pick_grid_neighbors() {
        let x = Tensor4::from_fn(Dims::new(1, 2, 5, 5), |_, c, h, w| if c == 0 { h as f32 } else { w as f32 });
        let adj = knn_graph(&x, 4).unwrap();
        let mut got = adj.neighbors(0, 2 * 5 + 2).to_vec();
        got.sort();
        assert_eq!(got, [7, 11, 13, 17]);
    }

    #[test]
    fn identical_features_fall_back_to_lowest_indices() {
        let x = Tensor4::full(Dims::new(1, 3, 3, 3), 0.5f32);
        let adj = knn_graph(&x, 3).unwrap();
        assert_eq!(adj.neighbors(0, 0), &[1, 2, 3]);
        assert_eq!(adj.neighbors(0, 2), &[0, 1, 3]);
        assert_eq!(adj.neighbors(0, 8), &[0, 1, 2]);
    }

    #[test]
    fn k_must_be_below_pixel_count() {
        let x = Tensor4::<f32>::zeros(Dims::new(1, 1, 2, 2));
        assert!(knn_graph(&x, 4).is_err());
        assert!(knn_graph(&x, 3).is_ok());
    }

    #[test]
    fn fixed_adjacency_matches_gather_oracle() {
        let mut init = SeededInit::new(4);
        let mut proj = ConvBn::zeros(ConvSpec::pointwise(8, 4));
        init.init_dense(&mut proj, 0.5);
        for (h, w, k) in [(8, 8, 2), (7, 5, 2), (4, 4, 4), (14, 14, 3)] {
            let x: Tensor4<f32> = init.tensor(Dims::new(2, 4, h, w), 1.0);
            let g = build_fixed_offsets(h, w, k).unwrap();
            let adj = KnnAdjacency::from_fixed_graph(&g, 2);
            let a = mrconv_knn(&x, &adj, &proj).unwrap();
            let b = mrconv_gather_oracle(&x, &g, &proj).unwrap();
            assert!(a.bitwise_eq(&b), "{h}x{w} k={k}");
        }
    }

    #[test]
    fn constant_input_and_empty_adjacency() {
        let mut init = SeededInit::new(6);
        let c = Tensor4::full(Dims::new(1, 2, 4, 4), 3.0f32);
        let adj = knn_graph(&init.tensor::<f32>(Dims::new(1, 2, 4, 4), 1.0), 5).unwrap();
        assert!(relative_max_knn(&c, &adj).unwrap().data().iter().all(|&v| v == 0.0));

        let x: Tensor4<f32> = init.tensor(Dims::new(1, 2, 4, 4), 1.0);
        let empty = KnnAdjacency { batch: 1, num_nodes: 16, k: 0, neighbor_idx: Vec::new() };
        let mut proj = ConvBn::zeros(ConvSpec::pointwise(4, 2));
        init.init_dense(&mut proj, 0.5);
        let y = mrconv_knn(&x, &empty, &proj).unwrap();
        let expect = proj.forward(&concat_channels(&x, &Tensor4::zeros(x.dims())).unwrap()).unwrap();
        assert!(y.bitwise_eq(&expect));
    }

    #[test]
    fn bad_adjacency_rejected() {
        let x = Tensor4::<f32>::zeros(Dims::new(1, 1, 2, 2));
        let adj = KnnAdjacency { batch: 1, num_nodes: 4, k: 1, neighbor_idx: vec![1, 0, 9, 2] };
        assert!(matches!(relative_max_knn(&x, &adj), Err(Error::IndexOutOfRange { index: 9, len: 4 })));
        let wrong = KnnAdjacency { batch: 2, num_nodes: 4, k: 0, neighbor_idx: Vec::new() };
        assert!(relative_max_knn(&x, &wrong).is_err());
    }
}
