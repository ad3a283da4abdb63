//! Conditional probabilities of clique events in random (hyper)graphs.
//!
//! Every edge is present independently with probability `q`. Conditioning
//! information has two shapes: edges known to be present, and "not all of
//! these edges are present" constraints (NAND clauses). Clique events being
//! conditioned true become forced edges; clique events conditioned false and
//! forbidden patterns become clauses.

use std::collections::{HashMap, HashSet};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edge::Edge;
use crate::seed::{self, Rng};

#[derive(Debug, Error, PartialEq)]
pub enum CondProbError {
    #[error("conditioning event has probability zero")]
    ZeroProbability,
    #[error("{free} free edges exceed the exact cap of {cap}")]
    TooLarge { free: usize, cap: usize },
    #[error("exact count exceeded its node budget of {0}")]
    BudgetExceeded(u64),
    #[error("no sample satisfied the conditioning in {0} trials")]
    NoAcceptances(u64),
    #[error("invalid conditioning: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactOptions {
    /// Largest number of free edges in the relevant part of the conditioning.
    pub max_free_vars: usize,
    /// Largest number of branching nodes in one weighted count.
    pub node_budget: u64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            max_free_vars: 64,
            node_budget: 400_000,
        }
    }
}

// ---------------------------------------------------------------------------
// Weighted counting over NAND clauses
// ---------------------------------------------------------------------------

/// Probability that no clause has all of its variables present, each
/// variable present independently with probability `q`. Clauses are bitmasks
/// over at most 64 local variables.
pub struct NandCounter {
    q: f64,
    memo: HashMap<Vec<u64>, f64>,
    nodes: u64,
    budget: u64,
}

impl NandCounter {
    pub fn new(q: f64, budget: u64) -> Self {
        NandCounter {
            q,
            memo: HashMap::new(),
            nodes: 0,
            budget,
        }
    }

    /// `None` when the node budget runs out.
    pub fn count(&mut self, clauses: &[u64]) -> Option<f64> {
        let cs = normalize(clauses);
        self.count_normal(cs)
    }

    fn count_normal(&mut self, cs: Vec<u64>) -> Option<f64> {
        if cs.is_empty() {
            return Some(1.0);
        }
        if cs[0] == 0 {
            return Some(0.0);
        }
        if cs.len() == 1 {
            return Some(1.0 - self.q.powi(cs[0].count_ones() as i32));
        }
        if let Some(&v) = self.memo.get(&cs) {
            return Some(v);
        }
        self.nodes += 1;
        if self.nodes > self.budget {
            return None;
        }
        let comps = split_components(&cs);
        let value = if comps.len() > 1 {
            let mut acc = 1.0;
            for c in comps {
                acc *= self.count_normal(c)?;
                if acc == 0.0 {
                    break;
                }
            }
            acc
        } else {
            let bit = most_frequent_bit(&cs);
            let present: Vec<u64> = cs.iter().map(|&c| c & !bit).collect();
            let absent: Vec<u64> = cs.iter().copied().filter(|&c| c & bit == 0).collect();
            let w1 = self.count_normal(normalize(&present))?;
            let w0 = self.count_normal(normalize(&absent))?;
            self.q * w1 + (1.0 - self.q) * w0
        };
        self.memo.insert(cs, value);
        Some(value)
    }
}

/// Sorted, deduplicated, with clauses implied by a smaller clause dropped.
fn normalize(clauses: &[u64]) -> Vec<u64> {
    let mut cs: Vec<u64> = clauses.to_vec();
    cs.sort_unstable_by_key(|c| (c.count_ones(), *c));
    cs.dedup();
    if cs.first() == Some(&0) {
        return vec![0];
    }
    let mut kept: Vec<u64> = Vec::with_capacity(cs.len());
    for c in cs {
        if !kept.iter().any(|&k| k & c == k) {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    kept
}

fn split_components(cs: &[u64]) -> Vec<Vec<u64>> {
    let mut groups: Vec<(u64, Vec<u64>)> = Vec::new();
    for &c in cs {
        let mut mask = c;
        let mut members = vec![c];
        groups.retain_mut(|(m, mem)| {
            if *m & mask != 0 {
                mask |= *m;
                members.append(mem);
                false
            } else {
                true
            }
        });
        groups.push((mask, members));
    }
    groups
        .into_iter()
        .map(|(_, mut m)| {
            m.sort_unstable();
            m
        })
        .collect()
}

fn most_frequent_bit(cs: &[u64]) -> u64 {
    let mut counts = [0u32; 64];
    for &c in cs {
        let mut m = c;
        while m != 0 {
            counts[m.trailing_zeros() as usize] += 1;
            m &= m - 1;
        }
    }
    let best = (0..64)
        .max_by_key(|&i| (counts[i], std::cmp::Reverse(i)))
        .unwrap();
    1u64 << best
}

// ---------------------------------------------------------------------------
// Exact conditional probability on edge variables
// ---------------------------------------------------------------------------

/// Clauses restricted to edges that are not forced present.
fn free_clauses(
    forced: &HashSet<Edge>,
    clauses: &[Vec<Edge>],
) -> Result<Vec<Vec<Edge>>, CondProbError> {
    let mut out = Vec::with_capacity(clauses.len());
    for c in clauses {
        let free: Vec<Edge> = c.iter().copied().filter(|e| !forced.contains(e)).collect();
        if free.is_empty() {
            return Err(CondProbError::ZeroProbability);
        }
        out.push(free);
    }
    Ok(out)
}

/// Clauses reachable from `seeds` through shared variables.
fn relevant_component(seeds: &[Edge], clauses: &[Vec<Edge>]) -> Vec<usize> {
    let mut by_var: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (i, c) in clauses.iter().enumerate() {
        for &e in c {
            by_var.entry(e).or_default().push(i);
        }
    }
    let mut seen_var: HashSet<Edge> = seeds.iter().copied().collect();
    let mut stack: Vec<Edge> = seeds.to_vec();
    let mut taken = vec![false; clauses.len()];
    let mut out = Vec::new();
    while let Some(v) = stack.pop() {
        if let Some(list) = by_var.get(&v) {
            for &ci in list {
                if !taken[ci] {
                    taken[ci] = true;
                    out.push(ci);
                    for &w in &clauses[ci] {
                        if seen_var.insert(w) {
                            stack.push(w);
                        }
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// `P(all target edges present | forced present, no clause fully present)`.
pub fn conditional_all_present(
    q: f64,
    forced: &HashSet<Edge>,
    clauses: &[Vec<Edge>],
    target: &[Edge],
    opts: &ExactOptions,
) -> Result<f64, CondProbError> {
    let free = free_clauses(forced, clauses)?;
    let mut t: Vec<Edge> = target
        .iter()
        .copied()
        .filter(|e| !forced.contains(e))
        .collect();
    t.sort();
    t.dedup();
    if t.is_empty() {
        return Ok(1.0);
    }
    let rel = relevant_component(&t, &free);
    let mut local: HashMap<Edge, u32> = HashMap::new();
    for &e in &t {
        let k = local.len() as u32;
        local.entry(e).or_insert(k);
    }
    for &ci in &rel {
        for &e in &free[ci] {
            let k = local.len() as u32;
            local.entry(e).or_insert(k);
        }
    }
    if local.len() > opts.max_free_vars.min(64) {
        return Err(CondProbError::TooLarge {
            free: local.len(),
            cap: opts.max_free_vars,
        });
    }
    let tmask: u64 = t.iter().fold(0, |m, e| m | 1u64 << local[e]);
    let masks: Vec<u64> = rel
        .iter()
        .map(|&ci| free[ci].iter().fold(0u64, |m, e| m | 1u64 << local[e]))
        .collect();
    let mut counter = NandCounter::new(q, opts.node_budget);
    let den = counter
        .count(&masks)
        .ok_or(CondProbError::BudgetExceeded(opts.node_budget))?;
    if den <= 0.0 {
        return Err(CondProbError::ZeroProbability);
    }
    let reduced: Vec<u64> = masks.iter().map(|&c| c & !tmask).collect();
    let num = counter
        .count(&reduced)
        .ok_or(CondProbError::BudgetExceeded(opts.node_budget))?;
    Ok(q.powi(t.len() as i32) * num / den)
}

/// Exact sample of the free edges touched by clauses, given forced edges and
/// clauses. Edges in `universe` that no clause mentions are drawn
/// independently. Returns the present edges, forced ones included.
pub fn sample_exact(
    q: f64,
    universe: &[Edge],
    forced: &HashSet<Edge>,
    clauses: &[Vec<Edge>],
    opts: &ExactOptions,
    rng: &mut Rng,
) -> Result<Vec<Edge>, CondProbError> {
    let free = free_clauses(forced, clauses)?;
    let mut in_clause: HashSet<Edge> = HashSet::new();
    for c in &free {
        in_clause.extend(c.iter().copied());
    }
    let mut present: Vec<Edge> = Vec::new();
    for &e in universe {
        if forced.contains(&e) {
            present.push(e);
        } else if !in_clause.contains(&e) && rng.random::<f64>() < q {
            present.push(e);
        }
    }
    // Components of the clause structure are independent.
    let mut done = vec![false; free.len()];
    for start in 0..free.len() {
        if done[start] {
            continue;
        }
        let comp = relevant_component(&free[start][..1], &free);
        for &ci in &comp {
            done[ci] = true;
        }
        let mut vars: Vec<Edge> = comp
            .iter()
            .flat_map(|&ci| free[ci].iter().copied())
            .collect();
        vars.sort();
        vars.dedup();
        if vars.len() > opts.max_free_vars.min(64) {
            return Err(CondProbError::TooLarge {
                free: vars.len(),
                cap: opts.max_free_vars,
            });
        }
        let idx: HashMap<Edge, u32> = vars
            .iter()
            .enumerate()
            .map(|(i, &e)| (e, i as u32))
            .collect();
        let mut masks: Vec<u64> = comp
            .iter()
            .map(|&ci| free[ci].iter().fold(0u64, |m, e| m | 1u64 << idx[e]))
            .collect();
        let mut counter = NandCounter::new(q, opts.node_budget);
        let mut total = counter
            .count(&masks)
            .ok_or(CondProbError::BudgetExceeded(opts.node_budget))?;
        if total <= 0.0 {
            return Err(CondProbError::ZeroProbability);
        }
        for (i, &e) in vars.iter().enumerate() {
            let bit = 1u64 << i;
            let with: Vec<u64> = masks.iter().map(|&c| c & !bit).collect();
            let w1 = q * counter
                .count(&with)
                .ok_or(CondProbError::BudgetExceeded(opts.node_budget))?;
            if rng.random::<f64>() * total < w1 {
                present.push(e);
                masks = with;
            } else {
                masks.retain(|&c| c & bit == 0);
            }
            total = counter
                .count(&masks)
                .ok_or(CondProbError::BudgetExceeded(opts.node_budget))?;
        }
    }
    present.sort();
    Ok(present)
}

// ---------------------------------------------------------------------------
// Clique conditionings
// ---------------------------------------------------------------------------

/// Conditioning of the binomial random `s`-uniform hypergraph on `n`
/// vertices, edge probability `p`, on clique events.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CliqueConditioning {
    pub n: u32,
    /// Edge size of the underlying hypergraph; 2 for graphs.
    pub s: u32,
    pub p: f64,
    /// Vertex sets conditioned to span cliques.
    pub positives: Vec<Edge>,
    /// Vertex sets conditioned not to span cliques.
    pub negatives: Vec<Edge>,
    /// Edges conditioned present.
    pub forced_edges: Vec<Edge>,
    /// Edge sets conditioned not to be fully present.
    pub forbidden_patterns: Vec<Vec<Edge>>,
}

impl CliqueConditioning {
    pub fn graph(n: u32, p: f64) -> Self {
        CliqueConditioning {
            n,
            s: 2,
            p,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<(), CondProbError> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(CondProbError::Invalid(format!(
                "p = {} outside (0, 1)",
                self.p
            )));
        }
        if self.s < 1 {
            return Err(CondProbError::Invalid("edge size must be positive".into()));
        }
        let pos: HashSet<Edge> = self.positives.iter().copied().collect();
        if let Some(e) = self.negatives.iter().find(|e| pos.contains(e)) {
            return Err(CondProbError::Invalid(format!(
                "{e} is both positive and negative"
            )));
        }
        let limit = crate::edge::full_mask(self.n);
        let all = self
            .positives
            .iter()
            .chain(&self.negatives)
            .chain(&self.forced_edges)
            .chain(self.forbidden_patterns.iter().flatten());
        for e in all {
            if e.mask() & !limit != 0 || e.size() < self.s {
                return Err(CondProbError::Invalid(format!(
                    "{e} does not fit the conditioning"
                )));
            }
        }
        Ok(())
    }

    /// Forced edges and NAND clauses.
    pub fn compile(&self) -> Result<(HashSet<Edge>, Vec<Vec<Edge>>), CondProbError> {
        self.validate()?;
        let mut forced: HashSet<Edge> = self.forced_edges.iter().copied().collect();
        for h in &self.positives {
            forced.extend(h.subsets(self.s));
        }
        let mut clauses: Vec<Vec<Edge>> =
            self.negatives.iter().map(|h| h.subsets(self.s)).collect();
        clauses.extend(self.forbidden_patterns.iter().cloned());
        Ok((forced, clauses))
    }
}

pub fn exact_conditional_prob(
    cond: &CliqueConditioning,
    target: Edge,
    opts: &ExactOptions,
) -> Result<f64, CondProbError> {
    let (forced, clauses) = cond.compile()?;
    if target.size() < cond.s {
        return Err(CondProbError::Invalid(format!(
            "target {target} smaller than an edge"
        )));
    }
    conditional_all_present(cond.p, &forced, &clauses, &target.subsets(cond.s), opts)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    /// Normal-approximation 95% half-width.
    pub half_width: f64,
    pub accepted: u64,
    pub trials: u64,
}

/// Rejection-sampling estimate of the same quantity as
/// [`exact_conditional_prob`].
pub fn mc_conditional_prob(
    cond: &CliqueConditioning,
    target: Edge,
    trials: u64,
    seed: u64,
) -> Result<McEstimate, CondProbError> {
    let (forced, clauses) = cond.compile()?;
    let clauses = free_clauses(&forced, &clauses)?;
    let t: Vec<Edge> = target
        .subsets(cond.s)
        .into_iter()
        .filter(|e| !forced.contains(e))
        .collect();
    let mut vars: Vec<Edge> = clauses.iter().flatten().chain(&t).copied().collect();
    vars.sort();
    vars.dedup();
    let idx: HashMap<Edge, usize> = vars.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let cl: Vec<Vec<usize>> = clauses
        .iter()
        .map(|c| c.iter().map(|e| idx[e]).collect())
        .collect();
    let ti: Vec<usize> = t.iter().map(|e| idx[e]).collect();
    let mut rng = seed::rng(seed);
    let mut state = vec![false; vars.len()];
    let (mut accepted, mut hits) = (0u64, 0u64);
    for _ in 0..trials {
        for s in state.iter_mut() {
            *s = rng.random::<f64>() < cond.p;
        }
        if cl.iter().any(|c| c.iter().all(|&i| state[i])) {
            continue;
        }
        accepted += 1;
        if ti.iter().all(|&i| state[i]) {
            hits += 1;
        }
    }
    if accepted == 0 {
        return Err(CondProbError::NoAcceptances(trials));
    }
    let est = hits as f64 / accepted as f64;
    Ok(McEstimate {
        estimate: est,
        half_width: 1.96 * (est * (1.0 - est) / accepted as f64).sqrt(),
        accepted,
        trials,
    })
}

// ---------------------------------------------------------------------------
// Correlation of monotone events
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarrisReport {
    pub p_a: f64,
    pub p_b: f64,
    pub p_ab: f64,
    /// `P(A and B) - P(A) P(B)`.
    pub gap: f64,
    /// 95% half-width of `gap`.
    pub gap_half_width: f64,
    pub trials: u64,
}

/// Monte Carlo estimate of the covariance of two events of independent bits.
pub fn harris_check(
    probs: &[f64],
    a: impl Fn(&[bool]) -> bool,
    b: impl Fn(&[bool]) -> bool,
    trials: u64,
    seed: u64,
) -> Result<HarrisReport, CondProbError> {
    if trials < 2 {
        return Err(CondProbError::Invalid("need at least two trials".into()));
    }
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(CondProbError::Invalid(
            "probabilities must lie in [0, 1]".into(),
        ));
    }
    let mut rng = seed::rng(seed);
    let mut bits = vec![false; probs.len()];
    let (mut na, mut nb, mut nab) = (0u64, 0u64, 0u64);
    for _ in 0..trials {
        for (x, &p) in bits.iter_mut().zip(probs) {
            *x = rng.random::<f64>() < p;
        }
        let (ia, ib) = (a(&bits), b(&bits));
        na += ia as u64;
        nb += ib as u64;
        nab += (ia && ib) as u64;
    }
    let t = trials as f64;
    let (pa, pb, pab) = (na as f64 / t, nb as f64 / t, nab as f64 / t);
    let gap = pab - pa * pb;
    // Variance of the centred product (A - pA)(B - pB).
    let m2 = centred_square_moment(pa, pb, pab);
    let var = (m2 - gap * gap).max(0.0);
    Ok(HarrisReport {
        p_a: pa,
        p_b: pb,
        p_ab: pab,
        gap,
        gap_half_width: 1.96 * (var / t).sqrt(),
        trials,
    })
}

/// `E[((A - a)(B - b))^2]` from the joint frequencies of two indicators.
fn centred_square_moment(pa: f64, pb: f64, pab: f64) -> f64 {
    let p11 = pab;
    let p10 = pa - pab;
    let p01 = pb - pab;
    let p00 = 1.0 - pa - pb + pab;
    let sq = |x: f64, y: f64| (x * y) * (x * y);
    p11 * sq(1.0 - pa, 1.0 - pb)
        + p10 * sq(1.0 - pa, -pb)
        + p01 * sq(-pa, 1.0 - pb)
        + p00 * sq(-pa, -pb)
}

// ---------------------------------------------------------------------------
// Gibbs sampling under NAND clauses
// ---------------------------------------------------------------------------

/// Single-site Gibbs chain on edge indicators under forced edges and NAND
/// clauses. Used when exact counting is out of reach.
#[derive(Clone, Debug)]
pub struct GibbsChain {
    q: f64,
    vars: Vec<Edge>,
    index: HashMap<Edge, u32>,
    state: Vec<bool>,
    fixed: Vec<bool>,
    clauses: Vec<Vec<u32>>,
    var_clauses: Vec<Vec<u32>>,
    zeros: Vec<u32>,
}

impl GibbsChain {
    /// Starts from the all-absent configuration plus forced edges, which
    /// satisfies any consistent clause set.
    pub fn new(
        q: f64,
        universe: &[Edge],
        forced: &HashSet<Edge>,
        clauses: &[Vec<Edge>],
    ) -> Result<Self, CondProbError> {
        let vars = universe.to_vec();
        let index: HashMap<Edge, u32> = vars
            .iter()
            .enumerate()
            .map(|(i, &e)| (e, i as u32))
            .collect();
        let fixed: Vec<bool> = vars.iter().map(|e| forced.contains(e)).collect();
        let state = fixed.clone();
        let mut chain = GibbsChain {
            q,
            vars,
            index,
            state,
            fixed,
            clauses: Vec::new(),
            var_clauses: Vec::new(),
            zeros: Vec::new(),
        };
        chain.var_clauses = vec![Vec::new(); chain.vars.len()];
        for c in clauses {
            chain.add_clause(c)?;
        }
        Ok(chain)
    }

    fn idx(&self, e: Edge) -> Result<u32, CondProbError> {
        self.index
            .get(&e)
            .copied()
            .ok_or_else(|| CondProbError::Invalid(format!("{e} is not a variable")))
    }

    /// Adds a clause, clearing one of its free edges if it is violated.
    pub fn add_clause(&mut self, clause: &[Edge]) -> Result<(), CondProbError> {
        let ids: Vec<u32> = clause
            .iter()
            .map(|&e| self.idx(e))
            .collect::<Result<_, _>>()?;
        if ids.iter().all(|&i| self.fixed[i as usize]) {
            return Err(CondProbError::ZeroProbability);
        }
        let zeros = ids.iter().filter(|&&i| !self.state[i as usize]).count() as u32;
        let ci = self.clauses.len() as u32;
        for &i in &ids {
            self.var_clauses[i as usize].push(ci);
        }
        self.clauses.push(ids.clone());
        self.zeros.push(zeros);
        if zeros == 0 {
            let free = *ids.iter().find(|&&i| !self.fixed[i as usize]).unwrap();
            self.set(free, false);
        }
        Ok(())
    }

    /// Fixes an edge present, clearing other free edges as needed.
    pub fn force(&mut self, e: Edge) -> Result<(), CondProbError> {
        let x = self.idx(e)?;
        if !self.state[x as usize] {
            for ci in self.var_clauses[x as usize].clone() {
                if self.zeros[ci as usize] == 1 {
                    let other = self.clauses[ci as usize]
                        .iter()
                        .copied()
                        .find(|&i| i != x && !self.fixed[i as usize] && self.state[i as usize]);
                    match other {
                        Some(o) => self.set(o, false),
                        None => return Err(CondProbError::ZeroProbability),
                    }
                }
            }
            self.set(x, true);
        }
        self.fixed[x as usize] = true;
        Ok(())
    }

    fn set(&mut self, x: u32, value: bool) {
        let xi = x as usize;
        if self.state[xi] == value {
            return;
        }
        self.state[xi] = value;
        for &ci in &self.var_clauses[xi] {
            if value {
                self.zeros[ci as usize] -= 1;
            } else {
                self.zeros[ci as usize] += 1;
            }
        }
    }

    fn can_be_present(&self, x: usize) -> bool {
        let own = !self.state[x] as u32;
        self.var_clauses[x]
            .iter()
            .all(|&ci| self.zeros[ci as usize] - own >= 1)
    }

    pub fn sweep(&mut self, rng: &mut Rng) {
        for x in 0..self.vars.len() {
            if self.fixed[x] {
                continue;
            }
            let v = self.can_be_present(x) && rng.random::<f64>() < self.q;
            self.set(x as u32, v);
        }
    }

    /// Free target variables and, for each clause touching them, the zero
    /// count outside the block and which block members it contains.
    fn block(&self, target: &[Edge]) -> Result<(Vec<u32>, Vec<(u32, u32)>), CondProbError> {
        let mut ids: Vec<u32> = Vec::new();
        for &e in target {
            let i = self.idx(e)?;
            if !self.fixed[i as usize] && !ids.contains(&i) {
                ids.push(i);
            }
        }
        let mut touched: HashMap<u32, u32> = HashMap::new();
        for (k, &i) in ids.iter().enumerate() {
            for &ci in &self.var_clauses[i as usize] {
                *touched.entry(ci).or_insert(0) |= 1 << k;
            }
        }
        let mut out: Vec<(u32, u32)> = touched
            .into_iter()
            .map(|(ci, m)| {
                let inside = (0..ids.len())
                    .filter(|&k| m >> k & 1 == 1 && !self.state[ids[k] as usize])
                    .count() as u32;
                (self.zeros[ci as usize] - inside, m)
            })
            .collect();
        out.sort_unstable();
        Ok((ids, out))
    }

    fn block_weights(&self, k: usize, cons: &[(u32, u32)]) -> Vec<f64> {
        (0..1u32 << k)
            .map(|a| {
                let ok = cons.iter().all(|&(outside, m)| outside >= 1 || m & !a != 0);
                if !ok {
                    return 0.0;
                }
                let ones = a.count_ones() as i32;
                self.q.powi(ones) * (1.0 - self.q).powi(k as i32 - ones)
            })
            .collect()
    }

    /// Probability that every target edge is present given the rest of the
    /// current state.
    pub fn block_probability(&self, target: &[Edge]) -> Result<f64, CondProbError> {
        let (ids, cons) = self.block(target)?;
        if ids.is_empty() {
            return Ok(1.0);
        }
        let w = self.block_weights(ids.len(), &cons);
        let total: f64 = w.iter().sum();
        Ok(w[w.len() - 1] / total)
    }

    /// Resamples the target edges from their conditional law; reports
    /// whether all ended up present.
    pub fn resample_block(
        &mut self,
        target: &[Edge],
        rng: &mut Rng,
    ) -> Result<bool, CondProbError> {
        let (ids, cons) = self.block(target)?;
        if ids.is_empty() {
            return Ok(true);
        }
        let w = self.block_weights(ids.len(), &cons);
        let total: f64 = w.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = w.len() - 1;
        for (a, &wa) in w.iter().enumerate() {
            if u < wa {
                pick = a;
                break;
            }
            u -= wa;
        }
        for (k, &i) in ids.iter().enumerate() {
            self.set(i, pick >> k & 1 == 1);
        }
        Ok(pick == w.len() - 1)
    }

    pub fn present(&self) -> Vec<Edge> {
        let mut out: Vec<Edge> = self
            .vars
            .iter()
            .zip(&self.state)
            .filter(|(_, &s)| s)
            .map(|(&e, _)| e)
            .collect();
        out.sort();
        out
    }
}

// ---------------------------------------------------------------------------
// Sequentially revealed conditioning
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub exact: ExactOptions,
    /// Sweeps spent on each estimate once the chain is in use.
    pub sweeps_per_estimate: usize,
    /// Sweeps when the chain starts and before the final sample.
    pub burn_in: usize,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            exact: ExactOptions::default(),
            sweeps_per_estimate: 24,
            burn_in: 200,
        }
    }
}

/// A conditional probability together with how it was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbValue {
    pub value: f64,
    pub exact: bool,
}

/// Conditioning that grows one clique decision at a time. Probabilities are
/// exact while the weighted count fits its budget; afterwards a Gibbs chain
/// takes over for the rest of the run.
pub struct RevealedModel {
    q: f64,
    universe: Vec<Edge>,
    forced: HashSet<Edge>,
    clauses: Vec<Vec<Edge>>,
    opts: ModelOptions,
    chain: Option<GibbsChain>,
}

impl RevealedModel {
    pub fn new(
        q: f64,
        universe: Vec<Edge>,
        forced: HashSet<Edge>,
        clauses: Vec<Vec<Edge>>,
        opts: ModelOptions,
    ) -> Self {
        RevealedModel {
            q,
            universe,
            forced,
            clauses,
            opts,
            chain: None,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.chain.is_none()
    }

    fn switch_to_chain(&mut self, rng: &mut Rng) -> Result<(), CondProbError> {
        let mut chain = GibbsChain::new(self.q, &self.universe, &self.forced, &self.clauses)?;
        for _ in 0..self.opts.burn_in {
            chain.sweep(rng);
        }
        self.chain = Some(chain);
        Ok(())
    }

    pub fn prob_all_present(
        &mut self,
        target: &[Edge],
        rng: &mut Rng,
    ) -> Result<ProbValue, CondProbError> {
        if self.chain.is_none() {
            match conditional_all_present(
                self.q,
                &self.forced,
                &self.clauses,
                target,
                &self.opts.exact,
            ) {
                Ok(v) => {
                    return Ok(ProbValue {
                        value: v,
                        exact: true,
                    })
                }
                Err(CondProbError::TooLarge { .. }) | Err(CondProbError::BudgetExceeded(_)) => {
                    self.switch_to_chain(rng)?
                }
                Err(e) => return Err(e),
            }
        }
        let sweeps = self.opts.sweeps_per_estimate.max(1);
        let chain = self.chain.as_mut().unwrap();
        let mut acc = 0.0;
        for _ in 0..sweeps {
            chain.sweep(rng);
            acc += chain.block_probability(target)?;
        }
        Ok(ProbValue {
            value: acc / sweeps as f64,
            exact: false,
        })
    }

    /// Decides whether all target edges are present, drawing from the
    /// conditional law; `known` is the probability just computed.
    pub fn test_all_present(
        &mut self,
        target: &[Edge],
        known: ProbValue,
        rng: &mut Rng,
    ) -> Result<bool, CondProbError> {
        match self.chain.as_mut() {
            None => Ok(rng.random::<f64>() < known.value),
            Some(chain) => chain.resample_block(target, rng),
        }
    }

    /// Conditions on every target edge being present.
    pub fn reveal_present(&mut self, target: &[Edge]) -> Result<(), CondProbError> {
        for &e in target {
            if self.forced.insert(e) {
                if let Some(c) = self.chain.as_mut() {
                    c.force(e)?;
                }
            }
        }
        Ok(())
    }

    /// Conditions on the target edges not all being present.
    pub fn reveal_not_all(&mut self, target: &[Edge]) -> Result<(), CondProbError> {
        let clause = target.to_vec();
        if let Some(c) = self.chain.as_mut() {
            c.add_clause(&clause)?;
        }
        self.clauses.push(clause);
        Ok(())
    }

    /// One draw from the conditional law of all edges.
    pub fn sample(&mut self, rng: &mut Rng) -> Result<Vec<Edge>, CondProbError> {
        if self.chain.is_none() {
            match sample_exact(
                self.q,
                &self.universe,
                &self.forced,
                &self.clauses,
                &self.opts.exact,
                rng,
            ) {
                Ok(v) => return Ok(v),
                Err(CondProbError::TooLarge { .. }) | Err(CondProbError::BudgetExceeded(_)) => {
                    self.switch_to_chain(rng)?
                }
                Err(e) => return Err(e),
            }
        }
        let chain = self.chain.as_mut().unwrap();
        for _ in 0..self.opts.burn_in {
            chain.sweep(rng);
        }
        Ok(chain.present())
    }
}
