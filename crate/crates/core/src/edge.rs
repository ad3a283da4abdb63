//! Vertex sets packed into a `u128` bitmask.
//!
//! Vertices are numbered `1..=n` with `n <= 128`; vertex `v` occupies bit `v - 1`.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Largest supported vertex count.
pub const MAX_VERTICES: u32 = 128;

/// A finite set of vertices, used for edges, hyperedges and cliques alike.
///
/// Ordering is lexicographic on the sorted vertex tuple, which for sets of
/// equal size is the canonical order used everywhere in the crate.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Edge(pub u128);

impl Edge {
    pub fn from_vertices(vs: &[u32]) -> Edge {
        let mut m = 0u128;
        for &v in vs {
            debug_assert!(v >= 1 && v <= MAX_VERTICES);
            m |= 1u128 << (v - 1);
        }
        Edge(m)
    }

    /// Checked constructor: vertices must be distinct and lie in `1..=n`.
    pub fn try_from_vertices(vs: &[u32], n: u32) -> Option<Edge> {
        let mut m = 0u128;
        for &v in vs {
            if v == 0 || v > n || v > MAX_VERTICES {
                return None;
            }
            let bit = 1u128 << (v - 1);
            if m & bit != 0 {
                return None;
            }
            m |= bit;
        }
        Some(Edge(m))
    }

    #[inline]
    pub fn mask(self) -> u128 {
        self.0
    }

    #[inline]
    pub fn size(self) -> u32 {
        self.0.count_ones()
    }

    #[inline]
    pub fn contains(self, v: u32) -> bool {
        v >= 1 && v <= MAX_VERTICES && self.0 & (1u128 << (v - 1)) != 0
    }

    /// Number of shared vertices.
    #[inline]
    pub fn meet(self, other: Edge) -> u32 {
        (self.0 & other.0).count_ones()
    }

    #[inline]
    pub fn union(self, other: Edge) -> Edge {
        Edge(self.0 | other.0)
    }

    #[inline]
    pub fn intersection(self, other: Edge) -> Edge {
        Edge(self.0 & other.0)
    }

    #[inline]
    pub fn is_subset_of(self, other: Edge) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn with(self, v: u32) -> Edge {
        Edge(self.0 | (1u128 << (v - 1)))
    }

    pub fn vertices(self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.size() as usize);
        let mut m = self.0;
        while m != 0 {
            let b = m.trailing_zeros();
            out.push(b + 1);
            m &= m - 1;
        }
        out
    }

    /// All subsets of exactly `k` vertices, in canonical order.
    pub fn subsets(self, k: u32) -> Vec<Edge> {
        let vs = self.vertices();
        let mut out = Vec::new();
        for_each_combination(vs.len(), k as usize, |idx| {
            let mut m = 0u128;
            for &i in idx {
                m |= 1u128 << (vs[i] - 1);
            }
            out.push(Edge(m));
        });
        out
    }
}

impl Ord for Edge {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.0, other.0);
        if a == b {
            return Ordering::Equal;
        }
        // Below the lowest differing vertex both tuples agree; the set holding
        // that vertex has the smaller next entry.
        let d = (a ^ b).trailing_zeros();
        let a_has = a >> d & 1 == 1;
        match (self.size().cmp(&other.size()), a_has) {
            (Ordering::Equal, true) => Ordering::Less,
            (Ordering::Equal, false) => Ordering::Greater,
            // Mixed sizes only need a consistent total order.
            (o, _) => o,
        }
    }
}

impl PartialOrd for Edge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.vertices())
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let vs: Vec<String> = self.vertices().iter().map(|v| v.to_string()).collect();
        write!(f, "{{{}}}", vs.join(","))
    }
}

impl Serialize for Edge {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.vertices().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Edge {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let vs = Vec::<u32>::deserialize(d)?;
        Edge::try_from_vertices(&vs, MAX_VERTICES)
            .ok_or_else(|| serde::de::Error::custom("vertex out of range or repeated"))
    }
}

/// Calls `f` with every `k`-combination of `0..m` in lexicographic order.
pub fn for_each_combination(m: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > m {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == i - 1 + m - k {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// All `k`-subsets of `1..=n` in canonical order.
pub fn all_k_sets(n: u32, k: u32) -> Vec<Edge> {
    let mut out = Vec::with_capacity(binomial(n as u64, k as u64) as usize);
    for_each_combination(n as usize, k as usize, |idx| {
        let mut m = 0u128;
        for &i in idx {
            m |= 1u128 << i;
        }
        out.push(Edge(m));
    });
    out
}

/// Mask with vertices `1..=n` set.
#[inline]
pub fn full_mask(n: u32) -> u128 {
    if n >= 128 {
        u128::MAX
    } else {
        (1u128 << n) - 1
    }
}

/// Exact binomial coefficient; saturates at `u64::MAX`.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Binomial coefficient extended to real `x` through the falling factorial.
pub fn binomial_real(x: f64, k: u32) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc *= (x - i as f64) / (i + 1) as f64;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_matches_tuple_order() {
        let sets = all_k_sets(7, 3);
        let tuples: Vec<Vec<u32>> = sets.iter().map(|e| e.vertices()).collect();
        let mut sorted = tuples.clone();
        sorted.sort();
        assert_eq!(tuples, sorted);
        let mut by_ord = sets.clone();
        by_ord.sort();
        assert_eq!(by_ord, sets);
    }

    #[test]
    fn combination_counts() {
        assert_eq!(all_k_sets(10, 4).len(), 210);
        assert_eq!(all_k_sets(5, 0).len(), 1);
        assert_eq!(all_k_sets(3, 4).len(), 0);
        assert_eq!(binomial(99, 2), 4851);
        assert_eq!(binomial(128, 64), u64::MAX);
    }

    #[test]
    fn falling_factorial_binomial_agrees_on_integers() {
        for x in 0..12u64 {
            for k in 0..6u32 {
                let want = binomial(x, k as u64) as f64;
                assert!((binomial_real(x as f64, k) - want).abs() < 1e-9 * want.max(1.0));
            }
        }
    }

    #[test]
    fn high_vertex_roundtrip() {
        let e = Edge::from_vertices(&[1, 64, 128]);
        assert_eq!(e.vertices(), vec![1, 64, 128]);
        assert!(Edge::try_from_vertices(&[3, 3], 5).is_none());
        assert!(Edge::try_from_vertices(&[6], 5).is_none());
    }
}
