//! Multi-indices for partial derivatives on a flat torus.
//!
//! Covariant derivatives commute on a flat torus, so the component
//! `∇^k_{i_1…i_k} u` depends only on how many times each axis occurs.
//! A [`MultiIndex`] stores exactly those counts.

use std::fmt;

pub const MAX_DIMS: usize = 3;
const AXIS_NAMES: [char; MAX_DIMS] = ['x', 'y', 'z'];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    counts: [u8; MAX_DIMS],
}

impl MultiIndex {
    pub const ZERO: MultiIndex = MultiIndex { counts: [0; MAX_DIMS] };

    pub fn from_counts(counts: &[usize]) -> Self {
        let mut c = [0u8; MAX_DIMS];
        for (slot, &v) in c.iter_mut().zip(counts) {
            *slot = v as u8;
        }
        MultiIndex { counts: c }
    }

    /// Builds the multi-index of an ordered list of axes, e.g. `[0, 1, 0]` is `∂x∂y∂x`.
    pub fn from_axes(axes: &[usize]) -> Self {
        let mut c = [0u8; MAX_DIMS];
        for &a in axes {
            c[a] += 1;
        }
        MultiIndex { counts: c }
    }

    pub fn count(&self, axis: usize) -> usize {
        self.counts[axis] as usize
    }

    pub fn counts(&self) -> [usize; MAX_DIMS] {
        self.counts.map(|c| c as usize)
    }

    pub fn order(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }

    pub fn with_axis(mut self, axis: usize) -> Self {
        self.counts[axis] += 1;
        self
    }

    /// Axes in nondecreasing order, the canonical tensor component of this index.
    pub fn axes(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.order());
        for (a, &c) in self.counts.iter().enumerate() {
            out.extend(std::iter::repeat_n(a, c as usize));
        }
        out
    }

    /// Number of ordered index tuples that collapse onto this multi-index.
    pub fn multiplicity(&self) -> usize {
        let mut num = factorial(self.order());
        for &c in &self.counts {
            num /= factorial(c as usize);
        }
        num
    }

    /// All multi-indices of total order `k` in `n` dimensions, in a fixed order.
    pub fn all_of_order(n: usize, k: usize) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut counts = [0usize; MAX_DIMS];
        fill(n, 0, k, &mut counts, &mut out);
        out
    }

    /// All multi-indices of order `< max_order`, grouped by order.
    pub fn all_below(n: usize, max_order: usize) -> Vec<MultiIndex> {
        (0..max_order).flat_map(|k| Self::all_of_order(n, k)).collect()
    }

    /// Identifier used in coefficient expressions: `u`, `u_x`, `u_xxy`, …
    pub fn name(&self) -> String {
        if self.order() == 0 {
            return "u".to_string();
        }
        let mut s = String::from("u_");
        for a in self.axes() {
            s.push(AXIS_NAMES[a]);
        }
        s
    }
}

fn fill(n: usize, axis: usize, remaining: usize, counts: &mut [usize; MAX_DIMS], out: &mut Vec<MultiIndex>) {
    if axis + 1 == n {
        counts[axis] = remaining;
        out.push(MultiIndex::from_counts(&counts[..n]));
        counts[axis] = 0;
        return;
    }
    for c in (0..=remaining).rev() {
        counts[axis] = c;
        fill(n, axis + 1, remaining - c, counts, out);
    }
    counts[axis] = 0;
}

pub fn factorial(k: usize) -> usize {
    (1..=k).product()
}

pub fn axis_name(axis: usize) -> char {
    AXIS_NAMES[axis]
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Iterates over all ordered index tuples in `{0..n}^rank`, last index fastest.
pub fn index_tuples(n: usize, rank: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = n.pow(rank as u32);
    (0..total).map(move |mut flat| {
        let mut tuple = vec![0; rank];
        for slot in tuple.iter_mut().rev() {
            *slot = flat % n;
            flat /= n;
        }
        tuple
    })
}

/// Flat component position of an ordered index tuple (last index fastest).
pub fn tuple_offset(n: usize, tuple: &[usize]) -> usize {
    tuple.iter().fold(0, |acc, &i| acc * n + i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_of_order_match_stars_and_bars() {
        // C(k + n - 1, n - 1)
        assert_eq!(MultiIndex::all_of_order(1, 4).len(), 1);
        assert_eq!(MultiIndex::all_of_order(2, 4).len(), 5);
        assert_eq!(MultiIndex::all_of_order(3, 4).len(), 15);
        assert_eq!(MultiIndex::all_of_order(3, 0), vec![MultiIndex::ZERO]);
    }

    #[test]
    fn multiplicities_sum_to_n_pow_k() {
        for n in 1..=3 {
            for k in 0..=5 {
                let total: usize = MultiIndex::all_of_order(n, k).iter().map(|m| m.multiplicity()).sum();
                assert_eq!(total, n.pow(k as u32));
            }
        }
    }

    #[test]
    fn names() {
        assert_eq!(MultiIndex::ZERO.name(), "u");
        assert_eq!(MultiIndex::from_axes(&[1, 0, 0]).name(), "u_xxy");
    }

    #[test]
    fn tuples_round_trip_offsets() {
        for (i, t) in index_tuples(3, 3).enumerate() {
            assert_eq!(tuple_offset(3, &t), i);
        }
    }
}
