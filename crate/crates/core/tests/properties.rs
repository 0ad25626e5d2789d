use mobilevig_core::init::SeededInit;
use mobilevig_core::knn::knn_graph;
use mobilevig_core::svga::{
    build_fixed_offsets, mrconv_gather_oracle, mrconv_roll, relative_max_roll, svga_block_forward, SvgaBlockWeights,
};
use mobilevig_core::tensor::{elem_max, global_avg_pool, roll_2d, ConvBn, ConvSpec};
use mobilevig_core::{Dims, Tensor4};
use proptest::prelude::*;

fn tensor_strategy(max_hw: usize) -> impl Strategy<Value = Tensor4<f32>> {
    (1usize..3, 1usize..4, 1..=max_hw, 1..=max_hw).prop_flat_map(|(n, c, h, w)| {
        prop::collection::vec(-10.0f32..10.0, n * c * h * w)
            .prop_map(move |data| Tensor4::new(Dims::new(n, c, h, w), data).unwrap())
    })
}

proptest! {
    #[test]
    fn roll_inverse(x in tensor_strategy(9), a in 0usize..9, b in 0usize..9) {
        let d = x.dims();
        let (a, b) = (a % d.h, b % d.w);
        let back = roll_2d(&roll_2d(&x, a as isize, b as isize), (d.h - a) as isize, (d.w - b) as isize);
        prop_assert!(back.bitwise_eq(&x));
    }

    #[test]
    fn roll_is_additive(x in tensor_strategy(9), a in -20isize..20, b in -20isize..20, c in -20isize..20, e in -20isize..20) {
        let twice = roll_2d(&roll_2d(&x, a, b), c, e);
        prop_assert!(twice.bitwise_eq(&roll_2d(&x, a + c, b + e)));
    }

    #[test]
    fn max_fold_order_free(xs in prop::collection::vec(prop::collection::vec(-5.0f32..5.0, 24), 2..6), seed in any::<u64>()) {
        let ts: Vec<Tensor4<f32>> = xs.into_iter().map(|v| Tensor4::new(Dims::new(1, 2, 3, 4), v).unwrap()).collect();
        let forward = ts[1..].iter().fold(ts[0].clone(), |acc, t| elem_max(&acc, t).unwrap());
        let mut order: Vec<usize> = (0..ts.len()).collect();
        // deterministic shuffle driven by the seed
        let mut s = seed;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled = order[1..].iter().fold(ts[order[0]].clone(), |acc, &i| elem_max(&acc, &ts[i]).unwrap());
        prop_assert!(forward.bitwise_eq(&shuffled));
    }

    #[test]
    fn pooling_ignores_rolls(x in tensor_strategy(9), a in -9isize..9, b in -9isize..9) {
        let p = global_avg_pool(&x);
        let q = global_avg_pool(&roll_2d(&x, a, b));
        for (u, v) in p.data().iter().zip(q.data()) {
            prop_assert!((u - v).abs() <= 1e-6 * u.abs().max(1.0));
        }
    }

    #[test]
    fn aggregate_is_nonnegative(x in tensor_strategy(12), k in 1usize..6) {
        let xj = relative_max_roll(&x, k).unwrap();
        prop_assert!(xj.data().iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn roll_matches_gather_across_grid() {
    let mut init = SeededInit::new(2024);
    for &h in &[1usize, 2, 4, 7, 8, 14] {
        for &w in &[1usize, 2, 4, 7, 8, 14] {
            for &k in &[1usize, 2, 3, 5] {
                let graph = build_fixed_offsets(h, w, k).unwrap();
                for c in [1usize, 3] {
                    let mut proj = ConvBn::zeros(ConvSpec::pointwise(2 * c, c));
                    init.init_dense(&mut proj, 0.5);
                    let x: Tensor4<f32> = init.tensor(Dims::new(2, c, h, w), 1.0);
                    let a = mrconv_roll(&x, k, &proj).unwrap();
                    let b = mrconv_gather_oracle(&x, &graph, &proj).unwrap();
                    assert!(a.bitwise_eq(&b), "h={h} w={w} k={k} c={c}");
                }
            }
        }
    }
}

#[test]
fn block_commutes_with_every_shift() {
    for (h, w) in [(8, 8), (7, 7), (6, 9)] {
        let mut init = SeededInit::new(h as u64 * 31 + w as u64);
        let mut weights = SvgaBlockWeights::<f32>::zeros(4, 2, 4);
        init.init_dense(&mut weights, 0.4);
        let x: Tensor4<f32> = init.tensor(Dims::new(1, 4, h, w), 1.0);
        let base = svga_block_forward(&x, &weights).unwrap();
        for d in 0..h as isize {
            for e in 0..w as isize {
                let shifted = svga_block_forward(&roll_2d(&x, d, e), &weights).unwrap();
                assert!(shifted.bitwise_eq(&roll_2d(&base, d, e)), "{h}x{w} shift ({d}, {e})");
            }
        }
    }
}

/// Full sort of every candidate by (distance, index).
fn brute_force_knn(x: &Tensor4<f32>, k: usize) -> Vec<u32> {
    let d = x.dims();
    let nodes = d.h * d.w;
    let mut out = Vec::new();
    for n in 0..d.n {
        for i in 0..nodes {
            let mut all: Vec<(f32, u32)> = (0..nodes)
                .filter(|&j| j != i)
                .map(|j| {
                    let mut s = 0.0f32;
                    for c in 0..d.c {
                        let diff = x.at(n, c, i / d.w, i % d.w) - x.at(n, c, j / d.w, j % d.w);
                        s += diff * diff;
                    }
                    (s, j as u32)
                })
                .collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            out.extend(all[..k].iter().map(|p| p.1));
        }
    }
    out
}

#[test]
fn knn_matches_brute_force_with_ties() {
    let mut init = SeededInit::new(77);
    for (h, w, c, k) in [(4, 4, 3, 5), (6, 3, 1, 4), (8, 8, 2, 9)] {
        let x: Tensor4<f32> = init.tensor(Dims::new(2, c, h, w), 1.0);
        // quantized copy forces many equal distances
        let q = x.map(|v| (v * 2.0).round() / 2.0);
        for t in [&x, &q] {
            assert_eq!(knn_graph(t, k).unwrap().neighbor_idx, brute_force_knn(t, k));
        }
    }
}
