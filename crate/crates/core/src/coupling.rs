//! Couplings of a random graph with a random hypergraph whose hyperedges
//! become cliques, plus the clique-probability diagnostics around them.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::{Mutex, OnceLock};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::condprob::{CondProbError, ModelOptions, RevealedModel};
use crate::edge::{all_k_sets, binomial, Edge};
use crate::hypergraph::{
    all_potential_clean_cycles, clean_three_cycles, cliques, default_avoidable_cap,
    find_avoidable_configuration, find_avoidable_in, CleanCycle, HypergraphError,
    UniformHypergraph,
};
use crate::seed::{self, Rng, Stage};

#[derive(Debug, Error, PartialEq)]
pub enum CouplingError {
    #[error("invalid coupling parameters: {0}")]
    Invalid(String),
    #[error("{count} potential clean 3-cycles exceed the limit of {limit}")]
    TooManyPatterns { count: usize, limit: usize },
    #[error("no sample with two or more clean 3-cycles in {0} attempts")]
    CycleSampling(usize),
    #[error(transparent)]
    CondProb(#[from] CondProbError),
    #[error(transparent)]
    Hypergraph(#[from] HypergraphError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig {
    /// Exponent in the `1 - n^-delta` gap between the two edge densities.
    pub delta: f64,
    pub model: ModelOptions,
    /// Samples used to estimate clean-3-cycle laws.
    pub cycle_law_samples: usize,
    /// Attempts when drawing a collection of two or more clean 3-cycles.
    pub cycle_sample_budget: usize,
    /// Refuse the 3-uniform algorithm beyond this many potential cycles.
    pub max_potential_cycles: usize,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        CouplingConfig {
            delta: 0.1,
            model: ModelOptions::default(),
            cycle_law_samples: 4000,
            cycle_sample_budget: 100_000,
            max_potential_cycles: 30_000,
        }
    }
}

/// Hyperedge density matched to edge density `p`.
pub fn matched_pi(n: u32, r: u32, s: u32, p: f64, delta: f64) -> f64 {
    (1.0 - (n as f64).powf(-delta)) * p.powi(binomial(r as u64, s as u64) as i32)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Yes,
    No,
    Star,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    /// A hyperedge was added while its clique probability sat below the
    /// target density.
    PiBelowPiAtHeads,
    /// Same, against the hypergraph-side conditional probability.
    PiBelowPiPrimeAtHeads,
    /// The clean-3-cycle collections of the two sides differ.
    CycleMismatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub step: Option<usize>,
    pub reason: FailureReason,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub hyperedge: Edge,
    /// Clique probability in the graph given everything revealed so far.
    pub pi_j: f64,
    /// Hyperedge probability on the hypergraph side, where tracked.
    pub pi_j_prime: Option<f64>,
    pub exact: bool,
    pub coin: Option<bool>,
    pub test: Option<bool>,
    pub decision: Decision,
    pub included: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledOutcome {
    pub n: u32,
    pub r: u32,
    pub s: u32,
    pub p: f64,
    pub pi: f64,
    pub seed: u64,
    pub g: UniformHypergraph,
    pub h: UniformHypergraph,
    pub history: Vec<StepRecord>,
    pub failures: Vec<Failure>,
    pub cycles_g: Vec<CleanCycle>,
    pub cycles_h: Vec<CleanCycle>,
}

impl CoupledOutcome {
    pub fn failed(&self) -> bool {
        !self.failures.is_empty()
    }

    /// Steps whose probabilities came from the sampler rather than exact
    /// counting.
    pub fn approximate_steps(&self) -> usize {
        self.history.iter().filter(|s| !s.exact).count()
    }

    /// Whether every hyperedge spans a clique of the graph.
    pub fn contained(&self) -> bool {
        let edges: &BTreeSet<Edge> = &self.g.edges;
        self.h
            .edges
            .iter()
            .all(|h| h.subsets(self.s).iter().all(|e| edges.contains(e)))
    }
}

fn check_density(p: f64) -> Result<(), CouplingError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(CouplingError::Invalid(format!("p = {p} outside (0, 1)")));
    }
    Ok(())
}

/// Coupling for clique size at least four in graphs.
pub fn riordan_couple(
    n: u32,
    r: u32,
    p: f64,
    seed: u64,
    cfg: &CouplingConfig,
) -> Result<CoupledOutcome, CouplingError> {
    if r < 4 {
        return Err(CouplingError::Invalid(format!(
            "clique size {r} needs the clean-cycle variant"
        )));
    }
    couple_sequential(n, r, 2, p, seed, cfg)
}

/// The sequential reveal-and-test coupling for any `2 <= s < r <= n`, with
/// `s`-uniform base hypergraph. No special handling of clean 3-cycles.
pub fn couple_sequential(
    n: u32,
    r: u32,
    s: u32,
    p: f64,
    seed: u64,
    cfg: &CouplingConfig,
) -> Result<CoupledOutcome, CouplingError> {
    check_density(p)?;
    if s < 2 || s >= r || r > n || n > crate::edge::MAX_VERTICES {
        return Err(CouplingError::Invalid(format!(
            "need 2 <= s < r <= n, got {s}, {r}, {n}"
        )));
    }
    let pi = matched_pi(n, r, s, p, cfg.delta);
    let mut rng = seed::rng(seed);
    let mut model = RevealedModel::new(p, all_k_sets(n, s), HashSet::new(), Vec::new(), cfg.model);
    let mut history = Vec::new();
    let mut failures = Vec::new();
    let mut included = Vec::new();
    for (j, h) in all_k_sets(n, r).into_iter().enumerate() {
        let target = h.subsets(s);
        let pj = model.prob_all_present(&target, &mut rng)?;
        let mut rec = StepRecord {
            hyperedge: h,
            pi_j: pj.value,
            pi_j_prime: None,
            exact: pj.exact,
            coin: None,
            test: None,
            decision: Decision::Star,
            included: false,
        };
        if pj.value >= pi {
            let heads = rng.random::<f64>() < pi / pj.value;
            rec.coin = Some(heads);
            if heads {
                let yes = model.test_all_present(&target, pj, &mut rng)?;
                rec.test = Some(yes);
                if yes {
                    model.reveal_present(&target)?;
                    rec.decision = Decision::Yes;
                    rec.included = true;
                } else {
                    model.reveal_not_all(&target)?;
                    rec.decision = Decision::No;
                }
            }
        } else {
            let heads = rng.random::<f64>() < pi;
            rec.coin = Some(heads);
            if heads {
                rec.included = true;
                failures.push(Failure {
                    step: Some(j),
                    reason: FailureReason::PiBelowPiAtHeads,
                });
            }
        }
        if rec.included {
            included.push(h);
        }
        history.push(rec);
    }
    let g = UniformHypergraph::from_edges(n, s, model.sample(&mut rng)?)?;
    let h = UniformHypergraph::from_edges(n, r, included)?;
    Ok(CoupledOutcome {
        n,
        r,
        s,
        p,
        pi,
        seed,
        g,
        h,
        history,
        failures,
        cycles_g: Vec::new(),
        cycles_h: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// Clean 3-cycle laws and the 3-uniform coupling
// ---------------------------------------------------------------------------

/// Estimated law of the clean-3-cycle collection, truncated to at most one
/// cycle. By symmetry every single cycle is equally likely.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleLaw {
    pub potential: usize,
    pub h_none: f64,
    pub h_single: f64,
    pub g_none: f64,
    pub g_single: f64,
    pub samples: usize,
}

impl CycleLaw {
    pub fn estimate(n: u32, p: f64, pi: f64, samples: usize, seed: u64) -> CycleLaw {
        let all = all_potential_clean_cycles(n);
        let k = all.len();
        let mut rng = seed::rng(seed);
        let (mut hn, mut hs, mut gn, mut gs) = (0usize, 0usize, 0usize, 0usize);
        for _ in 0..samples {
            match sample_h_cycles(n, pi, &mut rng).len() {
                0 => hn += 1,
                1 => hs += 1,
                _ => {}
            }
            match sample_g_cycles(n, p, &all, &mut rng).len() {
                0 => gn += 1,
                1 => gs += 1,
                _ => {}
            }
        }
        let t = samples.max(1) as f64;
        let per = |c: usize| if k == 0 { 0.0 } else { c as f64 / t / k as f64 };
        CycleLaw {
            potential: k,
            h_none: hn as f64 / t,
            h_single: per(hs),
            g_none: gn as f64 / t,
            g_single: per(gs),
            samples,
        }
    }

    /// Probability that the truncated maximal coupling agrees.
    pub fn agreement(&self) -> f64 {
        self.h_none.min(self.g_none) + self.potential as f64 * self.h_single.min(self.g_single)
    }
}

fn sample_h_cycles(n: u32, pi: f64, rng: &mut Rng) -> Vec<CleanCycle> {
    let h = UniformHypergraph::from_edges(
        n,
        3,
        all_k_sets(n, 3)
            .into_iter()
            .filter(|_| rng.random::<f64>() < pi),
    )
    .expect("valid dimensions");
    clean_three_cycles(&h).expect("3-uniform")
}

fn sample_g_cycles(n: u32, p: f64, all: &[CleanCycle], rng: &mut Rng) -> Vec<CleanCycle> {
    let present: HashSet<Edge> = all_k_sets(n, 2)
        .into_iter()
        .filter(|_| rng.random::<f64>() < p)
        .collect();
    graph_clean_cycles(&present, all)
}

/// Clean 3-cycles present in a graph, as edge configurations.
pub fn graph_clean_cycles(present: &HashSet<Edge>, all: &[CleanCycle]) -> Vec<CleanCycle> {
    all.iter()
        .filter(|c| c.graph_edges().iter().all(|e| present.contains(e)))
        .copied()
        .collect()
}

fn cycle_law_cached(n: u32, p: f64, pi: f64, samples: usize) -> CycleLaw {
    static CACHE: OnceLock<Mutex<HashMap<(u32, u64, u64, usize), CycleLaw>>> = OnceLock::new();
    let key = (n, p.to_bits(), pi.to_bits(), samples);
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(l) = cache.lock().unwrap().get(&key) {
        return *l;
    }
    let law = CycleLaw::estimate(
        n,
        p,
        pi,
        samples,
        seed::stage_seed(key.1 ^ key.2, Stage::CycleLaw),
    );
    cache.lock().unwrap().insert(key, law);
    law
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum CycleDraw {
    None,
    Single(usize),
    Many,
}

fn draw_residual(none: f64, single: f64, k: usize, rng: &mut Rng) -> CycleDraw {
    let many = (1.0 - none - k as f64 * single).max(0.0);
    let total = none + k as f64 * single + many;
    let u = rng.random::<f64>() * total;
    if u < none {
        CycleDraw::None
    } else if u < none + k as f64 * single {
        CycleDraw::Single(rng.random_range(0..k.max(1)))
    } else {
        CycleDraw::Many
    }
}

/// Maximal coupling of the two truncated laws.
fn couple_cycle_laws(law: &CycleLaw, rng: &mut Rng) -> (CycleDraw, CycleDraw) {
    let k = law.potential;
    let both_none = law.h_none.min(law.g_none);
    let both_single = law.h_single.min(law.g_single);
    let u = rng.random::<f64>();
    if u < both_none {
        return (CycleDraw::None, CycleDraw::None);
    }
    if u < both_none + k as f64 * both_single {
        let c = rng.random_range(0..k);
        return (CycleDraw::Single(c), CycleDraw::Single(c));
    }
    let h = draw_residual(law.h_none - both_none, law.h_single - both_single, k, rng);
    let g = draw_residual(law.g_none - both_none, law.g_single - both_single, k, rng);
    (h, g)
}

fn materialize(
    draw: CycleDraw,
    all: &[CleanCycle],
    mut sample: impl FnMut(&mut Rng) -> Vec<CleanCycle>,
    budget: usize,
    rng: &mut Rng,
) -> Result<Vec<CleanCycle>, CouplingError> {
    match draw {
        CycleDraw::None => Ok(Vec::new()),
        CycleDraw::Single(i) => Ok(vec![all[i]]),
        CycleDraw::Many => {
            for _ in 0..budget {
                let cs = sample(rng);
                if cs.len() >= 2 {
                    return Ok(cs);
                }
            }
            Err(CouplingError::CycleSampling(budget))
        }
    }
}

/// Coupling for triangles in graphs against 3-uniform hypergraphs.
///
/// The clean-3-cycle collections are coupled first; every remaining
/// hyperedge is then handled with both a graph-side and a hypergraph-side
/// conditional probability.
pub fn modified_couple_r3(
    n: u32,
    p: f64,
    seed: u64,
    cfg: &CouplingConfig,
) -> Result<CoupledOutcome, CouplingError> {
    check_density(p)?;
    if n < 3 || n > crate::edge::MAX_VERTICES {
        return Err(CouplingError::Invalid(format!("n = {n}")));
    }
    let count = 120 * binomial(n as u64, 6) as usize;
    if count > cfg.max_potential_cycles {
        return Err(CouplingError::TooManyPatterns {
            count,
            limit: cfg.max_potential_cycles,
        });
    }
    let pi = matched_pi(n, 3, 2, p, cfg.delta);
    let all = all_potential_clean_cycles(n);
    let law = cycle_law_cached(n, p, pi, cfg.cycle_law_samples);
    let mut rng = seed::rng(seed);
    let (dh, dg) = couple_cycle_laws(&law, &mut rng);
    let mut failures = Vec::new();
    let mismatch = dh != dg || dh == CycleDraw::Many;
    if mismatch {
        failures.push(Failure {
            step: None,
            reason: FailureReason::CycleMismatch,
        });
    }
    let cycles_h = materialize(
        dh,
        &all,
        |r| sample_h_cycles(n, pi, r),
        cfg.cycle_sample_budget,
        &mut rng,
    )?;
    let cycles_g = materialize(
        dg,
        &all,
        |r| sample_g_cycles(n, p, &all, r),
        cfg.cycle_sample_budget,
        &mut rng,
    )?;

    let in_g: HashSet<CleanCycle> = cycles_g.iter().copied().collect();
    let in_h: HashSet<CleanCycle> = cycles_h.iter().copied().collect();
    let g_forced: HashSet<Edge> = cycles_g.iter().flat_map(|c| c.graph_edges()).collect();
    let g_clauses: Vec<Vec<Edge>> = all
        .iter()
        .filter(|c| !in_g.contains(c))
        .map(|c| c.graph_edges())
        .collect();
    let h_cycle_edges: BTreeSet<Edge> = cycles_h.iter().flat_map(|c| c.edges).collect();
    let h_forced: HashSet<Edge> = h_cycle_edges.iter().copied().collect();
    let h_clauses: Vec<Vec<Edge>> = all
        .iter()
        .filter(|c| !in_h.contains(c))
        .map(|c| c.edges.to_vec())
        .collect();
    let mut gm = RevealedModel::new(p, all_k_sets(n, 2), g_forced, g_clauses, cfg.model);
    let mut hm = RevealedModel::new(pi, all_k_sets(n, 3), h_forced, h_clauses, cfg.model);

    let mut history = Vec::new();
    let mut included: Vec<Edge> = h_cycle_edges.iter().copied().collect();
    for (j, h) in all_k_sets(n, 3)
        .into_iter()
        .filter(|h| !h_cycle_edges.contains(h))
        .enumerate()
    {
        let target = h.subsets(2);
        let pj = gm.prob_all_present(&target, &mut rng)?;
        let pjp = hm.prob_all_present(&[h], &mut rng)?;
        let mut rec = StepRecord {
            hyperedge: h,
            pi_j: pj.value,
            pi_j_prime: Some(pjp.value),
            exact: pj.exact && pjp.exact,
            coin: None,
            test: None,
            decision: Decision::Star,
            included: false,
        };
        if pj.value >= pjp.value {
            if pj.value == 0.0 {
                gm.reveal_not_all(&target)?;
                hm.reveal_not_all(&[h])?;
                rec.decision = Decision::No;
            } else {
                let heads = rng.random::<f64>() < pjp.value / pj.value;
                rec.coin = Some(heads);
                if heads {
                    let yes = gm.test_all_present(&target, pj, &mut rng)?;
                    rec.test = Some(yes);
                    if yes {
                        gm.reveal_present(&target)?;
                        hm.reveal_present(&[h])?;
                        rec.decision = Decision::Yes;
                        rec.included = true;
                    } else {
                        gm.reveal_not_all(&target)?;
                        hm.reveal_not_all(&[h])?;
                        rec.decision = Decision::No;
                    }
                } else {
                    hm.reveal_not_all(&[h])?;
                }
            }
        } else {
            let heads = rng.random::<f64>() < pjp.value;
            rec.coin = Some(heads);
            if heads {
                hm.reveal_present(&[h])?;
                rec.included = true;
                failures.push(Failure {
                    step: Some(j),
                    reason: FailureReason::PiBelowPiPrimeAtHeads,
                });
            } else {
                hm.reveal_not_all(&[h])?;
            }
        }
        if rec.included {
            included.push(h);
        }
        history.push(rec);
    }
    let g = UniformHypergraph::from_edges(n, 2, gm.sample(&mut rng)?)?;
    let h = UniformHypergraph::from_edges(n, 3, included)?;
    Ok(CoupledOutcome {
        n,
        r: 3,
        s: 2,
        p,
        pi,
        seed,
        g,
        h,
        history,
        failures,
        cycles_g,
        cycles_h,
    })
}

/// Graph/hypergraph pair for clique size `r` over `s`-uniform base, using
/// the variant suited to the parameters.
pub fn couple_auto(
    n: u32,
    r: u32,
    s: u32,
    p: f64,
    seed: u64,
    cfg: &CouplingConfig,
) -> Result<CoupledOutcome, CouplingError> {
    let cycles = 120 * binomial(n as u64, 6) as usize;
    if r == 3 && s == 2 && cycles <= cfg.max_potential_cycles {
        modified_couple_r3(n, p, seed, cfg)
    } else {
        couple_sequential(n, r, s, p, seed, cfg)
    }
}

/// Pearson statistic of per-hyperedge inclusion counts against density
/// `pi`, with degrees of freedom and upper-tail p-value.
pub fn inclusion_chi_square(counts: &[u64], runs: u64, pi: f64) -> ChiSquare {
    let exp = runs as f64 * pi;
    let var = exp * (1.0 - pi);
    let statistic = counts.iter().map(|&c| (c as f64 - exp).powi(2) / var).sum();
    let df = counts.len();
    let p_value = ChiSquared::new(df as f64)
        .map(|d| d.sf(statistic))
        .unwrap_or(f64::NAN);
    ChiSquare {
        statistic,
        df,
        p_value,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

// ---------------------------------------------------------------------------
// Clique probabilities given a fixed hypergraph
// ---------------------------------------------------------------------------

/// Probability that `target` spans a clique in the graph made of the clique
/// expansion of `h0` plus independent `p`-random edges.
pub fn pi_star(h0: &UniformHypergraph, target: Edge, p: f64) -> f64 {
    pi_star_s(h0, 2, target, p)
}

/// As [`pi_star`] over an `s`-uniform base.
pub fn pi_star_s(h0: &UniformHypergraph, s: u32, target: Edge, p: f64) -> f64 {
    let missing = target
        .subsets(s)
        .into_iter()
        .filter(|e| !h0.edges.iter().any(|h| e.is_subset_of(*h)))
        .count();
    p.powi(missing as i32)
}

/// Total excess clique probability over all non-hyperedges through `v`.
pub fn extra_clique_sum(h0: &UniformHypergraph, v: u32, p: f64) -> f64 {
    extra_clique_sum_s(h0, 2, v, p)
}

pub fn extra_clique_sum_s(h0: &UniformHypergraph, s: u32, v: u32, p: f64) -> f64 {
    let r = h0.arity;
    let forced: BTreeSet<Edge> = h0.edges.iter().flat_map(|h| h.subsets(s)).collect();
    let base_prob = p.powi(binomial(r as u64, s as u64) as i32);
    let mut seen: HashSet<Edge> = HashSet::new();
    for f in &forced {
        let base = f.with(v);
        if base.size() > r {
            continue;
        }
        let rest: Vec<u32> = (1..=h0.n).filter(|&u| !base.contains(u)).collect();
        crate::edge::for_each_combination(rest.len(), (r - base.size()) as usize, |idx| {
            let mut e = base;
            for &i in idx {
                e = e.with(rest[i]);
            }
            if !h0.contains(e) {
                seen.insert(e);
            }
        });
    }
    seen.iter()
        .map(|&e| pi_star_s(h0, s, e, p) - base_prob)
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExtraCliqueClass {
    MiddleTriangle { cycle: CleanCycle },
    AvoidableConfig { witness: Vec<Edge> },
    Unexplained,
}

/// Cliques of `g` that are not hyperedges of `h`, each with the structure
/// of `h` that accounts for it.
pub fn classify_extra_cliques(
    g: &UniformHypergraph,
    h: &UniformHypergraph,
) -> Result<Vec<(Edge, ExtraCliqueClass)>, CouplingError> {
    let r = h.arity;
    let s = g.arity;
    let extras: Vec<Edge> = cliques(g, r)?
        .into_iter()
        .filter(|c| !h.contains(*c))
        .collect();
    if extras.is_empty() {
        return Ok(Vec::new());
    }
    let cycles = if r == 3 && s == 2 {
        clean_three_cycles(h)?
    } else {
        Vec::new()
    };
    let cap = default_avoidable_cap(r);
    let mut global: Option<Option<Vec<Edge>>> = None;
    let mut out = Vec::with_capacity(extras.len());
    for t in extras {
        if let Some(c) = cycles.iter().find(|c| c.middle == t) {
            out.push((t, ExtraCliqueClass::MiddleTriangle { cycle: *c }));
            continue;
        }
        let local: Vec<Edge> = h.edges.iter().copied().filter(|e| e.meet(t) >= s).collect();
        if let Some(w) = find_avoidable_in(&local, cap) {
            out.push((t, ExtraCliqueClass::AvoidableConfig { witness: w }));
            continue;
        }
        let g_witness = global
            .get_or_insert_with(|| find_avoidable_configuration(h, cap))
            .clone();
        match g_witness {
            Some(w) => out.push((t, ExtraCliqueClass::AvoidableConfig { witness: w })),
            None => out.push((t, ExtraCliqueClass::Unexplained)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::{bad_events, find_avoidable_configuration};
    use crate::process::{g_default, window_params};

    fn he(vs: &[u32]) -> Edge {
        Edge::from_vertices(vs)
    }

    fn hyper(n: u32, r: u32, es: &[&[u32]]) -> UniformHypergraph {
        UniformHypergraph::from_edges(n, r, es.iter().map(|v| he(v))).unwrap()
    }

    #[test]
    fn sequential_coupling_is_deterministic() {
        let cfg = CouplingConfig::default();
        let a = riordan_couple(7, 4, 0.7, 11, &cfg).unwrap();
        let b = riordan_couple(7, 4, 0.7, 11, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.history.len(), 35);
    }

    #[test]
    fn rejects_bad_parameters() {
        let cfg = CouplingConfig::default();
        assert!(matches!(
            riordan_couple(7, 3, 0.5, 0, &cfg),
            Err(CouplingError::Invalid(_))
        ));
        assert!(matches!(
            riordan_couple(7, 4, 1.0, 0, &cfg),
            Err(CouplingError::Invalid(_))
        ));
        assert!(matches!(
            couple_sequential(4, 5, 2, 0.5, 0, &cfg),
            Err(CouplingError::Invalid(_))
        ));
    }

    #[test]
    fn decisions_match_inclusions() {
        let cfg = CouplingConfig::default();
        for seed in 0..20 {
            let o = riordan_couple(7, 4, 0.75, seed, &cfg).unwrap();
            for (j, s) in o.history.iter().enumerate() {
                assert_eq!(s.included, o.h.contains(s.hyperedge));
                match s.decision {
                    Decision::Yes => assert!(s.included && s.test == Some(true)),
                    Decision::No => assert!(!s.included && s.test == Some(false)),
                    Decision::Star => {
                        let failed_here = o.failures.iter().any(|f| f.step == Some(j));
                        assert_eq!(s.included, failed_here);
                    }
                }
            }
            if !o.failed() {
                assert!(o.contained(), "seed {seed}");
            }
        }
    }

    #[test]
    fn inclusion_marginals_match_density() {
        let cfg = CouplingConfig::default();
        let (n, r, p) = (7, 4, 0.75);
        let runs = 400u64;
        let all = all_k_sets(n, r);
        let mut counts = vec![0u64; all.len()];
        let mut pi = 0.0;
        for seed in 0..runs {
            let o = riordan_couple(n, r, p, seed, &cfg).unwrap();
            pi = o.pi;
            for (i, h) in all.iter().enumerate() {
                counts[i] += o.h.contains(*h) as u64;
            }
        }
        let chi = inclusion_chi_square(&counts, runs, pi);
        assert_eq!(chi.df, 35);
        assert!(chi.p_value > 0.05, "{chi:?}");
    }

    fn failed_with_bad_events(runs: u64) -> (u32, u32) {
        let cfg = CouplingConfig::default();
        let w = window_params(9, 4, 2, 0.1).unwrap();
        let (mut failed, mut bad) = (0, 0);
        for seed in 0..runs {
            let o = riordan_couple(9, 4, w.p_plus, seed, &cfg).unwrap();
            if o.failed() {
                failed += 1;
                let b = bad_events(&o.h, o.pi, g_default(9));
                bad += (b.high_degree.is_some() || b.avoidable.is_some()) as u32;
            }
        }
        (failed, bad)
    }

    #[test]
    fn failed_runs_mostly_carry_bad_events() {
        let (failed, bad) = failed_with_bad_events(40);
        assert_eq!((failed, bad), (31, 30));
    }

    #[test]
    #[ignore = "the implication is asymptotic; at n = 9 one failed run in 31 has no bad event"]
    fn every_failed_run_carries_bad_events() {
        let (failed, bad) = failed_with_bad_events(40);
        assert_eq!(failed, bad);
    }

    #[test]
    fn modified_coupling_probability_bounds() {
        let cfg = CouplingConfig {
            cycle_law_samples: 500,
            ..CouplingConfig::default()
        };
        let a = modified_couple_r3(7, 0.6, 3, &cfg).unwrap();
        let b = modified_couple_r3(7, 0.6, 3, &cfg).unwrap();
        assert_eq!(a, b);
        for seed in 0..4 {
            let o = modified_couple_r3(7, 0.6, seed, &cfg).unwrap();
            for s in &o.history {
                let pp = s.pi_j_prime.unwrap();
                assert!(pp <= o.pi + 1e-12);
                if s.exact && s.pi_j < pp {
                    assert_eq!(s.pi_j, 0.0);
                }
            }
            let cyc: HashSet<Edge> = o.cycles_h.iter().flat_map(|c| c.edges).collect();
            assert!(cyc.iter().all(|e| o.h.contains(*e)));
        }
    }

    #[test]
    fn pattern_limit_is_enforced() {
        let cfg = CouplingConfig {
            max_potential_cycles: 100,
            ..CouplingConfig::default()
        };
        assert_eq!(
            modified_couple_r3(9, 0.5, 0, &cfg),
            Err(CouplingError::TooManyPatterns {
                count: 10080,
                limit: 100
            })
        );
    }

    #[test]
    #[ignore = "truncated cycle coupling cannot agree at n = 9: about 15 clean 3-cycles are expected"]
    fn cycle_mismatch_rare_at_n9() {
        let cfg = CouplingConfig::default();
        let p = window_params(9, 3, 2, 0.1).unwrap().p_plus;
        let mismatches = (0..2000)
            .filter(|&s| {
                modified_couple_r3(9, p, s, &cfg)
                    .unwrap()
                    .failures
                    .iter()
                    .any(|f| f.reason == FailureReason::CycleMismatch)
            })
            .count();
        assert!(mismatches as f64 / 2000.0 <= 0.05);
    }

    #[test]
    fn cycle_law_agreement_vanishes_at_desk_scale() {
        let p = window_params(9, 3, 2, 0.1).unwrap().p_plus;
        let pi = matched_pi(9, 3, 2, p, 0.1);
        let law = CycleLaw::estimate(9, p, pi, 300, 1);
        assert_eq!(law.potential, 10080);
        assert!(law.agreement() < 0.05, "{law:?}");
    }

    #[test]
    fn pi_star_closed_forms() {
        let p = 0.3f64;
        let h0 = hyper(8, 4, &[&[5, 6, 7, 8]]);
        assert!((pi_star(&h0, he(&[1, 2, 3, 4]), p) - p.powi(6)).abs() < 1e-15);
        let h0 = hyper(6, 4, &[&[1, 2, 3, 4]]);
        assert!((pi_star(&h0, he(&[1, 2, 3, 5]), p) - p.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn extra_clique_sum_matches_term_by_term() {
        let p = 0.3f64;
        let empty = UniformHypergraph::new(8, 4).unwrap();
        assert_eq!(extra_clique_sum(&empty, 1, p), 0.0);
        let h0 = hyper(8, 4, &[&[1, 2, 3, 4]]);
        let mut direct = 0.0;
        for rest in all_k_sets(7, 3) {
            let h = Edge::from_vertices(
                &rest
                    .vertices()
                    .iter()
                    .map(|v| v + 1)
                    .chain([1])
                    .collect::<Vec<_>>(),
            );
            if !h0.contains(h) {
                direct += pi_star(&h0, h, p) - p.powi(6);
            }
        }
        assert!((extra_clique_sum(&h0, 1, p) - direct).abs() < 1e-14);
        assert!(direct > 0.0);
    }

    #[test]
    fn middle_triangle_of_clean_cycle() {
        let h = hyper(6, 3, &[&[1, 2, 3], &[3, 4, 5], &[1, 5, 6]]);
        let g = h.clique_expansion(2).unwrap();
        let out = classify_extra_cliques(&g, &h).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0, he(&[1, 3, 5]));
        assert!(matches!(out[0].1, ExtraCliqueClass::MiddleTriangle { .. }));
    }

    #[test]
    fn overlapping_pair_explained_by_avoidable() {
        let h = hyper(5, 4, &[&[1, 2, 3, 4], &[2, 3, 4, 5]]);
        assert!(find_avoidable_configuration(&h, default_avoidable_cap(4)).is_some());
        let g = h.clique_expansion(2).unwrap();
        for (_, c) in classify_extra_cliques(&g, &h).unwrap() {
            assert!(matches!(c, ExtraCliqueClass::AvoidableConfig { .. }));
        }
        // Two triples on four vertices give extra triangles.
        let h = hyper(4, 3, &[&[1, 2, 3], &[2, 3, 4], &[1, 2, 4]]);
        let g = h.clique_expansion(2).unwrap();
        let out = classify_extra_cliques(&g, &h).unwrap();
        assert_eq!(out.len(), 1);
        assert!(matches!(out[0].1, ExtraCliqueClass::AvoidableConfig { .. }));
    }

    #[test]
    fn disjoint_edges_have_no_extras() {
        let h = hyper(6, 3, &[&[1, 2, 3], &[4, 5, 6]]);
        let g = h.clique_expansion(2).unwrap();
        assert!(classify_extra_cliques(&g, &h).unwrap().is_empty());
    }

    #[test]
    fn chi_square_p_value_sane() {
        let c = inclusion_chi_square(&[50, 50, 50, 50], 100, 0.5);
        assert_eq!(c.statistic, 0.0);
        assert!((c.p_value - 1.0).abs() < 1e-12);
        let c = inclusion_chi_square(&[90, 10], 100, 0.5);
        assert!(c.p_value < 1e-10);
    }
}
