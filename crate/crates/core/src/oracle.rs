//! Brute-force reference implementations.
//!
//! These enumerate outright and share no code paths with the searches they
//! check. Only suitable for tiny inputs.

use std::collections::HashSet;

use crate::condprob::{CliqueConditioning, CondProbError};
use crate::edge::{full_mask, Edge};
use crate::hypergraph::{nullity, UniformHypergraph};

/// Conditional probability by summing over every assignment of the edges
/// mentioned by the conditioning or the target. At most 24 such edges.
pub fn brute_conditional_prob(
    cond: &CliqueConditioning,
    target: Edge,
) -> Result<f64, CondProbError> {
    let mut forced: HashSet<Edge> = cond.forced_edges.iter().copied().collect();
    for h in &cond.positives {
        forced.extend(h.subsets(cond.s));
    }
    let mut clauses: Vec<Vec<Edge>> = cond.negatives.iter().map(|h| h.subsets(cond.s)).collect();
    clauses.extend(cond.forbidden_patterns.iter().cloned());
    let tgt = target.subsets(cond.s);
    let mut vars: Vec<Edge> = clauses.iter().flatten().chain(&tgt).copied().collect();
    vars.retain(|e| !forced.contains(e));
    vars.sort();
    vars.dedup();
    assert!(vars.len() <= 24, "too many edges for enumeration");
    let p = cond.p;
    let (mut den, mut num) = (0.0, 0.0);
    for a in 0u32..1 << vars.len() {
        let present = |e: &Edge| {
            forced.contains(e)
                || vars
                    .iter()
                    .position(|v| v == e)
                    .is_some_and(|i| a >> i & 1 == 1)
        };
        if clauses.iter().any(|c| c.iter().all(present)) {
            continue;
        }
        let ones = a.count_ones() as i32;
        let w = p.powi(ones) * (1.0 - p).powi(vars.len() as i32 - ones);
        den += w;
        if tgt.iter().all(present) {
            num += w;
        }
    }
    if den == 0.0 {
        return Err(CondProbError::ZeroProbability);
    }
    Ok(num / den)
}

/// Whether some connected edge subset of size at most `cap` has nullity at
/// least 2, by checking every subset. At most 20 edges.
pub fn brute_has_avoidable(h: &UniformHypergraph, cap: usize) -> bool {
    let es = h.edge_vec();
    assert!(es.len() <= 20, "too many edges for enumeration");
    (1u32..1 << es.len()).any(|m| {
        if m.count_ones() as usize > cap {
            return false;
        }
        let sub: Vec<Edge> = (0..es.len())
            .filter(|&i| m >> i & 1 == 1)
            .map(|i| es[i])
            .collect();
        is_connected(&sub) && nullity(&sub) >= 2
    })
}

/// Connectivity by repeated absorption.
pub fn is_connected(edges: &[Edge]) -> bool {
    if edges.is_empty() {
        return false;
    }
    let mut reached = edges[0].mask();
    let mut used = vec![false; edges.len()];
    used[0] = true;
    loop {
        let mut grew = false;
        for (i, e) in edges.iter().enumerate() {
            if !used[i] && e.mask() & reached != 0 {
                used[i] = true;
                reached |= e.mask();
                grew = true;
            }
        }
        if !grew {
            return used.iter().all(|&u| u);
        }
    }
}

/// Whether a perfect matching exists, by scanning edges in order and either
/// taking or skipping each.
pub fn brute_has_perfect_matching(h: &UniformHypergraph) -> bool {
    if h.n % h.arity != 0 {
        return false;
    }
    fn go(es: &[Edge], i: usize, covered: u128, full: u128) -> bool {
        if covered == full {
            return true;
        }
        if i == es.len() {
            return false;
        }
        (es[i].mask() & covered == 0 && go(es, i + 1, covered | es[i].mask(), full))
            || go(es, i + 1, covered, full)
    }
    go(&h.edge_vec(), 0, 0, full_mask(h.n))
}

/// Clique sets by testing every `r`-subset.
pub fn brute_cliques(g: &UniformHypergraph, r: u32) -> Vec<Edge> {
    crate::edge::all_k_sets(g.n, r)
        .into_iter()
        .filter(|c| c.subsets(g.arity).iter().all(|e| g.contains(*e)))
        .collect()
}
