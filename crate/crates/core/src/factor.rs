//! Perfect matchings and clique factors by exact-cover backtracking.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edge::{full_mask, Edge};
use crate::hypergraph::{cliques, HypergraphError, UniformHypergraph};

pub const DEFAULT_NODE_BUDGET: u64 = 5_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum FactorError {
    #[error("{n} vertices cannot be split into blocks of {arity}")]
    NotDivisible { n: u32, arity: u32 },
    #[error(transparent)]
    Hypergraph(#[from] HypergraphError),
}

/// Result of an exact search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "blocks", rename_all = "snake_case")]
pub enum FactorOutcome {
    /// Disjoint blocks covering every vertex, in canonical order.
    Found(Vec<Edge>),
    /// The search space was exhausted.
    Infeasible,
    /// The node budget ran out before a decision.
    BudgetExceeded,
}

impl FactorOutcome {
    pub fn is_found(&self) -> bool {
        matches!(self, FactorOutcome::Found(_))
    }
}

/// Perfect matching of a uniform hypergraph.
///
/// Branches on the uncovered vertex with the fewest usable edges.
pub fn perfect_matching(
    h: &UniformHypergraph,
    node_budget: u64,
) -> Result<FactorOutcome, FactorError> {
    if h.n % h.arity != 0 {
        return Err(FactorError::NotDivisible {
            n: h.n,
            arity: h.arity,
        });
    }
    let edges = h.edge_vec();
    let mut by_vertex: Vec<Vec<u128>> = vec![Vec::new(); h.n as usize];
    for e in &edges {
        for v in e.vertices() {
            by_vertex[(v - 1) as usize].push(e.mask());
        }
    }
    if by_vertex.iter().any(|l| l.is_empty()) {
        return Ok(FactorOutcome::Infeasible);
    }
    let mut search = Cover {
        by_vertex,
        full: full_mask(h.n),
        nodes: 0,
        budget: node_budget,
    };
    let mut chosen = Vec::new();
    match search.solve(0, &mut chosen) {
        Some(true) => {
            let mut blocks: Vec<Edge> = chosen.into_iter().map(Edge).collect();
            blocks.sort();
            Ok(FactorOutcome::Found(blocks))
        }
        Some(false) => Ok(FactorOutcome::Infeasible),
        None => Ok(FactorOutcome::BudgetExceeded),
    }
}

struct Cover {
    by_vertex: Vec<Vec<u128>>,
    full: u128,
    nodes: u64,
    budget: u64,
}

impl Cover {
    /// `None` once the budget is spent.
    fn solve(&mut self, covered: u128, chosen: &mut Vec<u128>) -> Option<bool> {
        if covered == self.full {
            return Some(true);
        }
        self.nodes += 1;
        if self.nodes > self.budget {
            return None;
        }
        let mut best: Option<(usize, usize)> = None;
        let mut open = self.full & !covered;
        while open != 0 {
            let v = open.trailing_zeros() as usize;
            open &= open - 1;
            let k = self.by_vertex[v]
                .iter()
                .filter(|&&m| m & covered == 0)
                .count();
            if k == 0 {
                return Some(false);
            }
            if best.map_or(true, |(_, b)| k < b) {
                best = Some((v, k));
                if k == 1 {
                    break;
                }
            }
        }
        let (v, _) = best.expect("an uncovered vertex exists");
        let options: Vec<u128> = self.by_vertex[v]
            .iter()
            .copied()
            .filter(|&m| m & covered == 0)
            .collect();
        for m in options {
            chosen.push(m);
            match self.solve(covered | m, chosen) {
                Some(true) => return Some(true),
                Some(false) => {}
                None => return None,
            }
            chosen.pop();
        }
        Some(false)
    }
}

/// `K_r`-factor of `g`: a perfect matching of its `r`-cliques.
pub fn clique_factor(
    g: &UniformHypergraph,
    r: u32,
    node_budget: u64,
) -> Result<FactorOutcome, FactorError> {
    if g.n % r != 0 {
        return Err(FactorError::NotDivisible { n: g.n, arity: r });
    }
    let cl = UniformHypergraph::from_edges(g.n, r, cliques(g, r)?)?;
    perfect_matching(&cl, node_budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge::all_k_sets;

    #[test]
    fn complete_hypergraph_has_matching() {
        let h = UniformHypergraph::from_edges(6, 3, all_k_sets(6, 3)).unwrap();
        match perfect_matching(&h, 1000).unwrap() {
            FactorOutcome::Found(b) => {
                assert_eq!(b.len(), 2);
                assert_eq!(b[0].mask() | b[1].mask(), full_mask(6));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn divisibility_and_isolated_vertices() {
        let h = UniformHypergraph::from_edges(7, 3, all_k_sets(7, 3)).unwrap();
        assert!(matches!(
            perfect_matching(&h, 10),
            Err(FactorError::NotDivisible { .. })
        ));
        let sparse =
            UniformHypergraph::from_edges(6, 3, [Edge::from_vertices(&[1, 2, 3])]).unwrap();
        assert_eq!(
            perfect_matching(&sparse, 10).unwrap(),
            FactorOutcome::Infeasible
        );
    }

    #[test]
    fn budget_outcome_is_distinct() {
        // Two overlapping triangles per vertex block force branching.
        let h = UniformHypergraph::from_edges(12, 3, all_k_sets(12, 3)).unwrap();
        assert_eq!(
            perfect_matching(&h, 1).unwrap(),
            FactorOutcome::BudgetExceeded
        );
    }

    #[test]
    fn triangle_factor_of_two_triangles() {
        let g = UniformHypergraph::from_edges(
            6,
            2,
            Edge::from_vertices(&[1, 2, 3])
                .subsets(2)
                .into_iter()
                .chain(Edge::from_vertices(&[4, 5, 6]).subsets(2)),
        )
        .unwrap();
        assert_eq!(
            clique_factor(&g, 3, 100).unwrap(),
            FactorOutcome::Found(vec![
                Edge::from_vertices(&[1, 2, 3]),
                Edge::from_vertices(&[4, 5, 6])
            ])
        );
    }
}
