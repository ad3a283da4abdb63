//! Fast searches against brute-force enumeration on small random inputs.

use std::collections::BTreeMap;

use proptest::prelude::*;
use proptest::sample::subsequence;

use cliquehit::condprob::{exact_conditional_prob, CliqueConditioning, ExactOptions};
use cliquehit::edge::{all_k_sets, Edge};
use cliquehit::factor::{perfect_matching, FactorOutcome};
use cliquehit::hypergraph::{
    cliques, default_avoidable_cap, find_avoidable_configuration, UniformHypergraph,
};
use cliquehit::oracle::{
    brute_cliques, brute_conditional_prob, brute_has_avoidable, brute_has_perfect_matching,
};
use cliquehit::timing::{exceptional_set, hitting_comparison, time_orders_from_values};

fn hypergraph(n: u32, r: u32, max_edges: usize) -> impl Strategy<Value = UniformHypergraph> {
    subsequence(all_k_sets(n, r), 0..=max_edges)
        .prop_map(move |es| UniformHypergraph::from_edges(n, r, es).unwrap())
}

/// Triples that pairwise share at most one pair, each sharing a pair with
/// at most one other.
fn linear_ish(n: u32, picks: &[Edge]) -> UniformHypergraph {
    let mut kept: Vec<Edge> = Vec::new();
    let mut partners: BTreeMap<Edge, usize> = BTreeMap::new();
    for &e in picks {
        let meets: Vec<Edge> = kept.iter().copied().filter(|k| k.meet(e) == 2).collect();
        let ok = !kept.contains(&e)
            && kept.iter().all(|k| k.meet(e) <= 2)
            && meets.len() <= 1
            && meets
                .iter()
                .all(|k| partners.get(k).copied().unwrap_or(0) == 0);
        if ok {
            for k in &meets {
                *partners.entry(*k).or_default() += 1;
                *partners.entry(e).or_default() += 1;
            }
            kept.push(e);
        }
    }
    UniformHypergraph::from_edges(n, 3, kept).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn avoidable_matches_enumeration(h in (5u32..=8).prop_flat_map(|n| hypergraph(n, 3, 8))) {
        let cap = default_avoidable_cap(3);
        prop_assert_eq!(find_avoidable_configuration(&h, cap).is_some(), brute_has_avoidable(&h, cap));
    }

    #[test]
    fn avoidable_witness_is_within_h(h in hypergraph(7, 3, 10)) {
        if let Some(w) = find_avoidable_configuration(&h, default_avoidable_cap(3)) {
            prop_assert!(w.iter().all(|e| h.contains(*e)));
            prop_assert!(w.len() <= default_avoidable_cap(3));
        }
    }

    #[test]
    fn matching_r3_matches_enumeration(h in prop_oneof![hypergraph(6, 3, 12), hypergraph(9, 3, 16)]) {
        let fast = perfect_matching(&h, u64::MAX).unwrap();
        prop_assert_ne!(&fast, &FactorOutcome::BudgetExceeded);
        prop_assert_eq!(fast.is_found(), brute_has_perfect_matching(&h));
        if let FactorOutcome::Found(blocks) = fast {
            let union = blocks.iter().fold(0u128, |m, b| m | b.mask());
            prop_assert_eq!(union.count_ones(), h.n);
            prop_assert!(blocks.iter().all(|b| h.contains(*b)));
        }
    }

    #[test]
    fn matching_graph_matches_enumeration(h in hypergraph(8, 2, 14)) {
        prop_assert_eq!(perfect_matching(&h, u64::MAX).unwrap().is_found(), brute_has_perfect_matching(&h));
    }

    #[test]
    fn cliques_match_enumeration(g in hypergraph(8, 2, 20), r in 3u32..=4) {
        let mut fast = cliques(&g, r).unwrap();
        fast.sort();
        prop_assert_eq!(fast, brute_cliques(&g, r));
    }

    #[test]
    fn exact_conditional_matches_enumeration(
        picks in subsequence(all_k_sets(5, 3), 1..=5),
        split in 0usize..=4,
        p in 0.1f64..0.9,
    ) {
        let target = picks[0];
        let rest = &picks[1..];
        let k = split.min(rest.len());
        let mut cond = CliqueConditioning::graph(5, p);
        cond.positives = rest[..k].to_vec();
        cond.negatives = rest[k..].to_vec();
        match (exact_conditional_prob(&cond, target, &ExactOptions::default()), brute_conditional_prob(&cond, target)) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "engine {:?}, enumeration {:?}", a, b),
        }
    }

    #[test]
    fn hyperedges_outside_s2_arrive_with_their_clique(
        picks in subsequence(all_k_sets(8, 3), 1..=12),
        clocks in proptest::collection::vec(0.0f64..1.0, 28),
        dummies in proptest::collection::vec(0.0f64..1.0, 12),
    ) {
        let h = linear_ish(8, &picks);
        let g = h.clique_expansion(2).unwrap();
        let xi: BTreeMap<Edge, f64> = g.edge_vec().into_iter().zip(clocks).collect();
        let pairs = count_pairs(&h);
        let orders = time_orders_from_values(&g, &h, xi, &dummies[..pairs]).unwrap();
        let s2 = orders.s2();
        for e in h.edges.iter().filter(|e| !s2.contains(e)) {
            prop_assert_eq!(orders.tau_hyperedge[e], orders.clique_time(*e));
        }
        for w in orders.sigma_h.windows(2) {
            prop_assert!(orders.tau_hyperedge[&w[0]] <= orders.tau_hyperedge[&w[1]]);
        }
    }

    #[test]
    fn exceptional_members_are_second_partners_when_times_agree(
        picks in subsequence(all_k_sets(7, 3), 3..=20),
        clocks in proptest::collection::vec(0.0f64..1.0, 21),
        dummies in proptest::collection::vec(0.0f64..1.0, 20),
    ) {
        let h = linear_ish(7, &picks);
        let g = h.clique_expansion(2).unwrap();
        let xi: BTreeMap<Edge, f64> = g.edge_vec().into_iter().zip(clocks).collect();
        let pairs = count_pairs(&h);
        let orders = time_orders_from_values(&g, &h, xi, &dummies[..pairs]).unwrap();
        let cmp = hitting_comparison(&orders).unwrap();
        if cmp.equal {
            let ex = exceptional_set(&orders, &cmp, 1.0).unwrap();
            prop_assert!(ex.in_s2);
        }
    }
}

fn count_pairs(h: &UniformHypergraph) -> usize {
    let es = h.edge_vec();
    let mut c = 0;
    for i in 0..es.len() {
        for j in i + 1..es.len() {
            c += (es[i].meet(es[j]) == 2) as usize;
        }
    }
    c
}
