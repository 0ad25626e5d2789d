use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// The input-independent connectivity of sparse vision graph attention:
/// every pixel links to the pixels `mK` steps away along its column and its
/// row, wrapping circularly.
///
/// The `m = 0` self term is not stored; it contributes a zero relative
/// feature and is folded in implicitly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedGraph {
    pub h: usize,
    pub w: usize,
    pub k: usize,
    /// Rightward circular offsets `{mK : m ≥ 1, mK < w}`, ascending.
    pub row_offsets: Vec<usize>,
    /// Downward circular offsets `{mK : m ≥ 1, mK < h}`, ascending.
    pub col_offsets: Vec<usize>,
}

impl FixedGraph {
    /// Neighbors per pixel, excluding the implicit self term.
    pub fn neighbor_count(&self) -> usize {
        self.row_offsets.len() + self.col_offsets.len()
    }

    /// Flat row-major indices of the neighbors of pixel `(i, j)`: column
    /// offsets first, then row offsets, each ascending. Neighbor `q` of `p`
    /// at offset `s` sits `s` pixels up (resp. left) of `p`, circularly.
    pub fn neighbors_of(&self, i: usize, j: usize) -> impl Iterator<Item = usize> + '_ {
        let (h, w) = (self.h, self.w);
        let down = self.col_offsets.iter().map(move |&s| ((i + h - s) % h) * w + j);
        let right = self.row_offsets.iter().map(move |&s| i * w + (j + w - s) % w);
        down.chain(right)
    }
}

/// Builds the fixed graph for an `h`×`w` grid with connection stride `k`.
pub fn build_fixed_offsets(h: usize, w: usize, k: usize) -> Result<FixedGraph> {
    if k == 0 {
        return Err(Error::Config("connection stride k must be >= 1".into()));
    }
    if h == 0 || w == 0 {
        return Err(Error::Config(format!("grid must be at least 1x1, got {h}x{w}")));
    }
    Ok(FixedGraph {
        h,
        w,
        k,
        row_offsets: (1..).map(|m| m * k).take_while(|&s| s < w).collect(),
        col_offsets: (1..).map(|m| m * k).take_while(|&s| s < h).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn eight_by_eight_stride_two() {
        let g = build_fixed_offsets(8, 8, 2).unwrap();
        assert_eq!(g.row_offsets, vec![2, 4, 6]);
        assert_eq!(g.col_offsets, vec![2, 4, 6]);
        assert_eq!(g.neighbor_count(), 6);
    }

    #[test]
    fn stride_equal_to_extent_is_empty() {
        let g = build_fixed_offsets(4, 4, 4).unwrap();
        assert!(g.row_offsets.is_empty() && g.col_offsets.is_empty());
        assert_eq!(g.neighbor_count(), 0);
    }

    #[test]
    fn rectangular_grid() {
        let g = build_fixed_offsets(7, 5, 2).unwrap();
        assert_eq!(g.col_offsets, vec![2, 4, 6]);
        assert_eq!(g.row_offsets, vec![2, 4]);
    }

    #[test]
    fn zero_stride_rejected() {
        assert!(build_fixed_offsets(4, 4, 0).is_err());
        assert!(build_fixed_offsets(0, 4, 1).is_err());
    }

    #[test]
    fn neighbor_count_formula() {
        for h in 1..12 {
            for w in 1..12 {
                for k in 1..6 {
                    let g = build_fixed_offsets(h, w, k).unwrap();
                    assert_eq!(g.neighbor_count(), h.div_ceil(k) - 1 + w.div_ceil(k) - 1);
                    let n: alloc::vec::Vec<usize> = g.neighbors_of(0, 0).collect();
                    assert_eq!(n.len(), g.neighbor_count());
                    assert!(!n.contains(&0));
                }
            }
        }
    }
}
