//! Process-level coupling: common clocks for a coupled graph/hypergraph
//! pair, the hyperedges that arrive before their cliques, the random set
//! that absorbs them, thinning, and the composed chain.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coupling::{couple_auto, CouplingConfig, CouplingError};
use crate::edge::{all_k_sets, binomial, full_mask, Edge};
use crate::factor::{clique_factor, perfect_matching, FactorOutcome, DEFAULT_NODE_BUDGET};
use crate::hypergraph::{HypergraphError, UniformHypergraph};
use crate::process::{
    g_default, hitting_time_min_degree, window_params_with_g, CliqueCoverTracker, ProcessError,
    ProcessTrace,
};
use crate::seed::{self, Stage};

#[derive(Debug, Error, PartialEq)]
pub enum TimingError {
    #[error("{reason}: {witness:?}")]
    Precondition { reason: String, witness: Vec<Edge> },
    #[error("hitting time undefined: {0}")]
    Undefined(String),
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Hypergraph(#[from] HypergraphError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
}

fn precondition(reason: &str, witness: Vec<Edge>) -> TimingError {
    TimingError::Precondition {
        reason: reason.to_string(),
        witness,
    }
}

/// Two hyperedges sharing exactly one base edge. `u` is the smaller one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartnerPair {
    pub u: Edge,
    pub v: Edge,
    pub shared: Edge,
    /// Clock value of the dummy edge standing in for `shared` inside `v`.
    pub xi_prime: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeOrders {
    pub n: u32,
    pub r: u32,
    pub s: u32,
    pub tau_edge: BTreeMap<Edge, f64>,
    pub tau_hyperedge: BTreeMap<Edge, f64>,
    pub partners: Vec<PartnerPair>,
    /// Edges of the graph by ascending clock.
    pub sigma_g: Vec<Edge>,
    /// Hyperedges by ascending clock.
    pub sigma_h: Vec<Edge>,
}

impl TimeOrders {
    /// Time at which the clique on `h` is complete in the graph.
    pub fn clique_time(&self, h: Edge) -> f64 {
        h.subsets(self.s)
            .iter()
            .map(|e| self.tau_edge[e])
            .fold(0.0, f64::max)
    }

    /// Second members of partner pairs.
    pub fn s2(&self) -> BTreeSet<Edge> {
        self.partners.iter().map(|p| p.v).collect()
    }

    /// Members of any partner pair.
    pub fn with_partner(&self) -> BTreeSet<Edge> {
        self.partners.iter().flat_map(|p| [p.u, p.v]).collect()
    }

    fn partner_of(&self, h: Edge) -> Option<Edge> {
        self.partners.iter().find_map(|p| {
            if p.v == h {
                Some(p.u)
            } else if p.u == h {
                Some(p.v)
            } else {
                None
            }
        })
    }
}

fn check_pair(
    g: &UniformHypergraph,
    h: &UniformHypergraph,
    dummies: bool,
) -> Result<Vec<(Edge, Edge, Edge)>, TimingError> {
    let (s, r) = (g.arity, h.arity);
    if g.n != h.n || r <= s {
        return Err(TimingError::Invalid(format!(
            "graph arity {s} on {} vertices, hypergraph arity {r} on {}",
            g.n, h.n
        )));
    }
    for e in &h.edges {
        if !e.subsets(s).iter().all(|b| g.contains(*b)) {
            return Err(precondition("hyperedge without a clique", vec![*e]));
        }
    }
    let limit = if dummies { s } else { s - 1 };
    let es = h.edge_vec();
    let mut pairs = Vec::new();
    let mut partner: HashMap<Edge, Edge> = HashMap::new();
    for i in 0..es.len() {
        for j in i + 1..es.len() {
            let m = es[i].meet(es[j]);
            if m > limit {
                return Err(precondition(
                    "hyperedges overlap too much",
                    vec![es[i], es[j]],
                ));
            }
            if m == s {
                for a in [es[i], es[j]] {
                    if let Some(&b) = partner.get(&a) {
                        return Err(precondition(
                            "hyperedge with two partners",
                            vec![b, es[i], es[j]],
                        ));
                    }
                }
                partner.insert(es[i], es[j]);
                partner.insert(es[j], es[i]);
                pairs.push((es[i], es[j], es[i].intersection(es[j])));
            }
        }
    }
    Ok(pairs)
}

/// Clocks for a coupled pair. Each base edge gets an independent uniform
/// time; hyperedges take the time their clique completes, except that the
/// second member of a partner pair uses a dummy in place of the shared edge.
///
/// With `dummies` off, any two hyperedges sharing a base edge are rejected.
pub fn build_time_orders(
    g: &UniformHypergraph,
    h: &UniformHypergraph,
    seed: u64,
    dummies: bool,
) -> Result<TimeOrders, TimingError> {
    let pairs = check_pair(g, h, dummies)?;
    let mut rng = seed::rng(seed);
    let xi: BTreeMap<Edge, f64> = g.edges.iter().map(|&e| (e, rng.random::<f64>())).collect();
    let xi_prime: Vec<f64> = pairs.iter().map(|_| rng.random::<f64>()).collect();
    assemble(g, h, pairs, xi, &xi_prime)
}

/// As [`build_time_orders`] with explicit clock values.
pub fn time_orders_from_values(
    g: &UniformHypergraph,
    h: &UniformHypergraph,
    xi: BTreeMap<Edge, f64>,
    xi_prime: &[f64],
) -> Result<TimeOrders, TimingError> {
    let pairs = check_pair(g, h, true)?;
    if xi_prime.len() != pairs.len() || !g.edges.iter().all(|e| xi.contains_key(e)) {
        return Err(TimingError::Invalid(
            "clock values do not match the pair".into(),
        ));
    }
    assemble(g, h, pairs, xi, xi_prime)
}

fn assemble(
    g: &UniformHypergraph,
    h: &UniformHypergraph,
    pairs: Vec<(Edge, Edge, Edge)>,
    xi: BTreeMap<Edge, f64>,
    xi_prime: &[f64],
) -> Result<TimeOrders, TimingError> {
    let s = g.arity;
    let partners: Vec<PartnerPair> = pairs
        .into_iter()
        .zip(xi_prime)
        .map(|((u, v, shared), &xp)| PartnerPair {
            u,
            v,
            shared,
            xi_prime: xp,
        })
        .collect();
    let mut tau_h = BTreeMap::new();
    for &e in &h.edges {
        let t = match partners.iter().find(|p| p.v == e) {
            Some(p) => e
                .subsets(s)
                .iter()
                .filter(|b| **b != p.shared)
                .map(|b| xi[b])
                .fold(p.xi_prime, f64::max),
            None => e.subsets(s).iter().map(|b| xi[b]).fold(0.0, f64::max),
        };
        tau_h.insert(e, t);
    }
    let sort = |m: &BTreeMap<Edge, f64>| {
        let mut v: Vec<(Edge, f64)> = m.iter().map(|(&e, &t)| (e, t)).collect();
        v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        v.into_iter().map(|(e, _)| e).collect::<Vec<_>>()
    };
    Ok(TimeOrders {
        n: g.n,
        r: h.arity,
        s,
        sigma_g: sort(&xi),
        sigma_h: sort(&tau_h),
        tau_edge: xi,
        tau_hyperedge: tau_h,
        partners,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HittingComparison {
    /// Clock at which every vertex lies in a clique of the graph.
    pub t_g: Option<f64>,
    /// Clock at which the hypergraph has no isolated vertex.
    pub t_h: Option<f64>,
    /// Number of graph edges present at `t_g`.
    pub steps_g: Option<usize>,
    /// Number of hyperedges present at `t_h`.
    pub steps_h: Option<usize>,
    pub equal: bool,
    /// Every partner pair has both cliques by the time both hyperedges are
    /// present.
    pub partner_inequality: bool,
}

pub fn hitting_comparison(orders: &TimeOrders) -> Result<HittingComparison, TimingError> {
    let mut tracker = CliqueCoverTracker::new(orders.n, orders.s, orders.r)?;
    let mut t_g = None;
    for (i, e) in orders.sigma_g.iter().enumerate() {
        tracker.add(*e);
        if tracker.all_covered() {
            t_g = Some((orders.tau_edge[e], i + 1));
            break;
        }
    }
    let full = full_mask(orders.n);
    let mut covered = 0u128;
    let mut t_h = None;
    for (i, h) in orders.sigma_h.iter().enumerate() {
        covered |= h.mask();
        if covered == full {
            t_h = Some((orders.tau_hyperedge[h], i + 1));
            break;
        }
    }
    let partner_inequality = orders.partners.iter().all(|p| {
        orders.clique_time(p.u).max(orders.clique_time(p.v))
            <= orders.tau_hyperedge[&p.u].max(orders.tau_hyperedge[&p.v])
    });
    Ok(HittingComparison {
        t_g: t_g.map(|x| x.0),
        t_h: t_h.map(|x| x.0),
        steps_g: t_g.map(|x| x.1),
        steps_h: t_h.map(|x| x.1),
        equal: matches!((t_g, t_h), (Some(a), Some(b)) if a.0 == b.0),
        partner_inequality,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalSet {
    /// Hyperedges present at the hypergraph hitting time whose clique is
    /// missing at the graph hitting time.
    pub members: Vec<Edge>,
    pub in_s2: bool,
    /// With equal hitting times: every member's partner is still absent.
    pub partners_absent: Option<bool>,
    /// Every member's partner arrives within `window` further hyperedges.
    /// `None` when there are no members.
    pub partners_in_window: Option<bool>,
    pub window: usize,
}

pub fn exceptional_set(
    orders: &TimeOrders,
    cmp: &HittingComparison,
    g_value: f64,
) -> Result<ExceptionalSet, TimingError> {
    let (Some(t_g), Some(t_h), Some(steps_h)) = (cmp.t_g, cmp.t_h, cmp.steps_h) else {
        return Err(TimingError::Undefined(
            "graph or hypergraph never covered".into(),
        ));
    };
    let members: Vec<Edge> = orders.sigma_h[..steps_h]
        .iter()
        .copied()
        .filter(|&h| orders.clique_time(h) > t_g)
        .collect();
    let s2 = orders.s2();
    let in_s2 = members.iter().all(|h| s2.contains(h));
    let partners_absent = cmp.equal.then(|| {
        members.iter().all(|&h| {
            orders
                .partner_of(h)
                .is_some_and(|u| orders.tau_hyperedge[&u] > t_h)
        })
    });
    let window = (g_value * orders.n as f64).floor() as usize;
    let rank: HashMap<Edge, usize> = orders
        .sigma_h
        .iter()
        .enumerate()
        .map(|(i, &h)| (h, i + 1))
        .collect();
    let partners_in_window = (!members.is_empty()).then(|| {
        members.iter().all(|&h| {
            orders
                .partner_of(h)
                .is_some_and(|u| rank[&u] > steps_h && rank[&u] - steps_h <= window)
        })
    });
    Ok(ExceptionalSet {
        members,
        in_s2,
        partners_absent,
        partners_in_window,
        window,
    })
}

// ---------------------------------------------------------------------------
// Random set and thinning
// ---------------------------------------------------------------------------

/// Multipliers in `pi_I = c_I g / n^(r-1)` and `pi_R = c_R g / n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetConstants {
    pub c_i: f64,
    pub c_r: f64,
}

impl SetConstants {
    /// `10 r!` and `10 r^4`.
    pub fn asymptotic(r: u32) -> Self {
        let fact: f64 = (1..=r).map(|i| i as f64).product();
        SetConstants {
            c_i: 10.0 * fact,
            c_r: 10.0 * (r as f64).powi(4),
        }
    }

    /// The asymptotic pair scaled by one factor so that `pi_R` equals
    /// `target`.
    pub fn scaled_to(n: u32, r: u32, g_value: f64, target: f64) -> Self {
        let a = Self::asymptotic(r);
        let lambda = target * n as f64 / (a.c_r * g_value);
        SetConstants {
            c_i: a.c_i * lambda,
            c_r: a.c_r * lambda,
        }
    }

    pub fn pi_i(&self, n: u32, r: u32, g_value: f64) -> f64 {
        self.c_i * g_value / (n as f64).powi(r as i32 - 1)
    }

    pub fn pi_r(&self, n: u32, g_value: f64) -> f64 {
        self.c_r * g_value / n as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomSetBundle {
    pub t_h: usize,
    pub pi_i: f64,
    pub pi_r: f64,
    /// Hyperedges arriving right after the hitting time, in arrival order.
    pub i_set: Vec<Edge>,
    /// Exclusive-partner counts for members of the stopped hypergraph.
    pub x: Vec<(Edge, usize)>,
    pub r_prime: Vec<Edge>,
    pub r_set: Vec<Edge>,
    pub f_set: Vec<Edge>,
    pub f_in_r: bool,
    pub extended: ProcessTrace,
}

impl RandomSetBundle {
    pub fn pi_h(&self, x_h: usize) -> f64 {
        1.0 - (1.0 - self.pi_i).powi(x_h as i32)
    }
}

/// Potential hyperedges outside `present` meeting `h` in exactly `overlap`
/// vertices.
fn outside_partners(h: Edge, n: u32, overlap: u32, present: &HashSet<Edge>) -> Vec<Edge> {
    let r = h.size();
    let rest: Vec<u32> = (1..=n).filter(|&v| !h.contains(v)).collect();
    let mut out = Vec::new();
    for core in h.subsets(overlap) {
        crate::edge::for_each_combination(rest.len(), (r - overlap) as usize, |idx| {
            let mut e = core;
            for &i in idx {
                e = e.with(rest[i]);
            }
            if !present.contains(&e) {
                out.push(e);
            }
        });
    }
    out
}

/// Random set of stopped-process hyperedges, each kept with probability
/// `pi_R`, built so that it contains every hyperedge whose partner arrives
/// shortly after the hitting time.
///
/// A complete trace is taken as the process and the hyperedges right after
/// the hitting time serve as `I`; a truncated trace is extended instead.
pub fn build_random_set(
    trace: &ProcessTrace,
    g_value: f64,
    consts: SetConstants,
    seed: u64,
) -> Result<RandomSetBundle, TimingError> {
    build_random_set_with(trace, g_value, consts, 2, seed)
}

pub fn build_random_set_with(
    trace: &ProcessTrace,
    g_value: f64,
    consts: SetConstants,
    overlap: u32,
    seed: u64,
) -> Result<RandomSetBundle, TimingError> {
    let (n, r) = (trace.n, trace.arity);
    let pi_i = consts.pi_i(n, r, g_value);
    let pi_r = consts.pi_r(n, g_value);
    if !(0.0..=1.0).contains(&pi_i) {
        return Err(TimingError::Invalid(format!("pi_I = {pi_i}; lower c_I")));
    }
    if !(0.0..=1.0).contains(&pi_r) {
        return Err(TimingError::Invalid(format!(
            "pi_R = {pi_r} exceeds 1; lower c_R"
        )));
    }
    let t_h = hitting_time_min_degree(trace)
        .ok_or_else(|| TimingError::Undefined("trace never covers every vertex".into()))?;
    let stopped: Vec<Edge> = trace.order[..t_h].to_vec();
    let present: HashSet<Edge> = stopped.iter().copied().collect();
    let mut rng = seed::rng(seed);
    let total = binomial(n as u64, r as u64);

    let (extended, i_len) = if trace.is_complete() {
        let k = Binomial::new(total - t_h as u64, pi_i)
            .map_err(|e| TimingError::Invalid(e.to_string()))?
            .sample(&mut rng) as usize;
        (trace.clone(), k)
    } else {
        let mut i_part = Vec::new();
        let mut rest = Vec::new();
        for e in all_k_sets(n, r)
            .into_iter()
            .filter(|e| !present.contains(e))
        {
            if rng.random::<f64>() < pi_i {
                i_part.push(e);
            } else {
                rest.push(e);
            }
        }
        i_part.shuffle(&mut rng);
        rest.shuffle(&mut rng);
        let k = i_part.len();
        let order = stopped.iter().copied().chain(i_part).chain(rest).collect();
        (
            ProcessTrace {
                n,
                arity: r,
                seed: trace.seed,
                order,
                uniforms: None,
            },
            k,
        )
    };
    let i_set: Vec<Edge> = extended.order[t_h..t_h + i_len].to_vec();
    let i_lookup: HashSet<Edge> = i_set.iter().copied().collect();

    let mut claims: HashMap<Edge, u32> = HashMap::new();
    let candidates: Vec<Vec<Edge>> = stopped
        .iter()
        .map(|&h| outside_partners(h, n, overlap, &present))
        .collect();
    for c in &candidates {
        for e in c {
            *claims.entry(*e).or_default() += 1;
        }
    }
    let mut x = Vec::with_capacity(t_h);
    let mut r_prime = Vec::new();
    let mut r_set = Vec::new();
    for (&h, cands) in stopped.iter().zip(&candidates) {
        let exclusive: Vec<Edge> = cands.iter().copied().filter(|e| claims[e] == 1).collect();
        let x_h = exclusive.len();
        let pi_h = 1.0 - (1.0 - pi_i).powi(x_h as i32);
        if pi_h > pi_r {
            return Err(TimingError::Invalid(format!(
                "pi_h = {pi_h} exceeds pi_R = {pi_r}; raise c_R relative to c_I"
            )));
        }
        x.push((h, x_h));
        let hit = exclusive.iter().any(|e| i_lookup.contains(e));
        if hit {
            r_prime.push(h);
            r_set.push(h);
        } else if rng.random::<f64>() < (pi_r - pi_h) / (1.0 - pi_h) {
            r_set.push(h);
        }
    }
    let window = (g_value * n as f64).floor() as usize;
    let next = &extended.order[t_h..(t_h + window).min(extended.order.len())];
    let f_set: Vec<Edge> = stopped
        .iter()
        .copied()
        .filter(|h| next.iter().any(|e| e.meet(*h) == overlap))
        .collect();
    let r_lookup: HashSet<Edge> = r_set.iter().copied().collect();
    let f_in_r = f_set.iter().all(|h| r_lookup.contains(h));
    Ok(RandomSetBundle {
        t_h,
        pi_i,
        pi_r,
        i_set,
        x,
        r_prime,
        r_set,
        f_set,
        f_in_r,
        extended,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThinOutcome {
    pub thinned: ProcessTrace,
    /// Hitting time of the original trace.
    pub t_h: usize,
    /// Survivors among the first `t_h` arrivals.
    pub t0: usize,
    /// Hitting time of the thinned trace.
    pub t_h_thinned: Option<usize>,
    pub min_degree_ok: bool,
}

/// Deletes every arrival independently with probability `pi_r`.
pub fn thin_process(
    trace: &ProcessTrace,
    pi_r: f64,
    seed: u64,
) -> Result<ThinOutcome, TimingError> {
    thin_with_set(trace, None, pi_r, seed)
}

/// Thinning where the deletions among the stopped prefix are the given set;
/// later arrivals are deleted independently with probability `pi_r`.
pub fn thin_with_set(
    trace: &ProcessTrace,
    prefix_removed: Option<&HashSet<Edge>>,
    pi_r: f64,
    seed: u64,
) -> Result<ThinOutcome, TimingError> {
    if !(0.0..1.0).contains(&pi_r) {
        return Err(TimingError::Invalid(format!(
            "pi_R = {pi_r} outside [0, 1)"
        )));
    }
    let t_h = hitting_time_min_degree(trace)
        .ok_or_else(|| TimingError::Undefined("trace never covers every vertex".into()))?;
    let mut rng = seed::rng(seed);
    let mut order = Vec::with_capacity(trace.order.len());
    let mut t0 = 0;
    for (i, &e) in trace.order.iter().enumerate() {
        let coin = rng.random::<f64>() < pi_r;
        let removed = match prefix_removed {
            Some(set) if i < t_h => set.contains(&e),
            _ => coin,
        };
        if !removed {
            order.push(e);
            if i < t_h {
                t0 += 1;
            }
        }
    }
    let thinned = ProcessTrace {
        n: trace.n,
        arity: trace.arity,
        seed: trace.seed,
        order,
        uniforms: None,
    };
    let t_h_thinned = hitting_time_min_degree(&thinned);
    let min_degree_ok = thinned.prefix(t0).min_degree() >= 1;
    Ok(ThinOutcome {
        thinned,
        t_h,
        t0,
        t_h_thinned,
        min_degree_ok,
    })
}

// ---------------------------------------------------------------------------
// Composed chain
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainOptions {
    pub delta: f64,
    /// Overrides the slack function value.
    pub g_value: Option<f64>,
    /// Random-set multipliers; by default scaled so that `pi_R` is
    /// `default_pi_r`.
    pub constants: Option<SetConstants>,
    pub default_pi_r: f64,
    pub coupling: CouplingConfig,
    pub node_budget: u64,
    pub record_runtime: bool,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions {
            delta: 0.1,
            g_value: None,
            constants: None,
            default_pi_r: 0.05,
            coupling: CouplingConfig::default(),
            node_budget: DEFAULT_NODE_BUDGET,
            record_runtime: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainVerdict {
    pub seed: u64,
    pub n: u32,
    pub r: u32,
    pub s: u32,
    pub static_failed: bool,
    /// Thinned stopped hypergraph inside the cliques of the stopped graph.
    pub containment: bool,
    /// Perfect matching of the thinned stopped hypergraph.
    pub matching: Option<bool>,
    /// Clique factor of the stopped graph.
    pub factor: Option<bool>,
    pub t_eq: bool,
    /// Both hitting times exist, so the exceptional set was computed.
    pub e_defined: bool,
    pub e_size: usize,
    pub e_in_s2: bool,
    pub e_partner_window: Option<bool>,
    pub f_in_r: bool,
    pub thin_ok: bool,
    pub partner_inequality: bool,
    /// Isolated vertices at the window start are all low-degree.
    pub iso_low_degree: bool,
    /// Each such vertex lies on some hyperedge without a partner.
    pub iso_not_bad: bool,
    pub runtime_ms: Option<f64>,
    pub rejected: Option<String>,
}

/// Graph/hypergraph chain for `K_r`-factors in graphs.
pub fn chain_coupling(n: u32, r: u32, seed: u64, opts: &ChainOptions) -> ChainVerdict {
    run_chain(n, r, 2, seed, true, opts)
}

/// Shared driver for the graph and `s`-uniform chains.
pub fn run_chain(
    n: u32,
    r: u32,
    s: u32,
    seed: u64,
    dummies: bool,
    opts: &ChainOptions,
) -> ChainVerdict {
    let start = Instant::now();
    let mut v = ChainVerdict {
        seed,
        n,
        r,
        s,
        ..ChainVerdict::default()
    };
    if let Err((stage, e)) = chain_stages(&mut v, dummies, opts) {
        v.rejected = Some(format!("{stage}: {e}"));
    }
    if opts.record_runtime {
        v.runtime_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    v
}

fn chain_stages(
    v: &mut ChainVerdict,
    dummies: bool,
    opts: &ChainOptions,
) -> Result<(), (&'static str, TimingError)> {
    let (n, r, s, seed) = (v.n, v.r, v.s, v.seed);
    let g_value = opts.g_value.unwrap_or_else(|| g_default(n as u64));
    let w = window_params_with_g(n, r, s, opts.delta, g_value).map_err(|e| ("window", e.into()))?;
    let cfg = CouplingConfig {
        delta: opts.delta,
        ..opts.coupling
    };
    let out = couple_auto(
        n,
        r,
        s,
        w.p_plus,
        seed::stage_seed(seed, Stage::StaticCoupling),
        &cfg,
    )
    .map_err(|e| ("static", e.into()))?;
    v.static_failed = out.failed();
    chain_after_static(
        v,
        &out.g,
        &out.h,
        w.pi_minus / w.pi_plus,
        g_value,
        dummies,
        opts,
    )
}

/// The chain from a given coupled pair onwards. `pi_ratio` is the ratio of
/// window-start to window-end hyperedge density.
pub fn chain_from_pair(
    g: &UniformHypergraph,
    h: &UniformHypergraph,
    seed: u64,
    pi_ratio: f64,
    dummies: bool,
    opts: &ChainOptions,
) -> ChainVerdict {
    let start = Instant::now();
    let mut v = ChainVerdict {
        seed,
        n: h.n,
        r: h.arity,
        s: g.arity,
        ..ChainVerdict::default()
    };
    let g_value = opts.g_value.unwrap_or_else(|| g_default(h.n as u64));
    if let Err((stage, e)) = chain_after_static(&mut v, g, h, pi_ratio, g_value, dummies, opts) {
        v.rejected = Some(format!("{stage}: {e}"));
    }
    if opts.record_runtime {
        v.runtime_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    v
}

fn chain_after_static(
    v: &mut ChainVerdict,
    g: &UniformHypergraph,
    h: &UniformHypergraph,
    pi_ratio: f64,
    g_value: f64,
    dummies: bool,
    opts: &ChainOptions,
) -> Result<(), (&'static str, TimingError)> {
    let (n, r, s, seed) = (v.n, v.r, v.s, v.seed);
    let orders = build_time_orders(g, h, seed::stage_seed(seed, Stage::TimeOrders), dummies)
        .map_err(|e| ("time_orders", e))?;
    let cmp = hitting_comparison(&orders).map_err(|e| ("hitting", e))?;
    v.partner_inequality = cmp.partner_inequality;
    v.t_eq = cmp.equal;
    let e_set = exceptional_set(&orders, &cmp, g_value).map_err(|e| ("hitting", e))?;
    v.e_defined = true;
    v.e_size = e_set.members.len();
    v.e_in_s2 = e_set.in_s2;
    v.e_partner_window = e_set.partners_in_window;

    // Window-start diagnostic on the hypergraph side.
    let t_minus = pi_ratio.powf(1.0 / binomial(r as u64, s as u64) as f64);
    let mut covered = 0u128;
    for h in &orders.sigma_h {
        if orders.tau_hyperedge[h] <= t_minus {
            covered |= h.mask();
        }
    }
    let isolated: Vec<u32> = (1..=n).filter(|&x| covered >> (x - 1) & 1 == 0).collect();
    let degrees = h.degrees();
    v.iso_low_degree = isolated
        .iter()
        .all(|&x| degrees[(x - 1) as usize] as f64 <= 7.0 * g_value);
    let with_partner = orders.with_partner();
    v.iso_not_bad = isolated.iter().all(|&x| {
        h.edges
            .iter()
            .any(|e| e.contains(x) && !with_partner.contains(e))
    });

    // Whole hypergraph process: the coupled order on H, then the rest.
    let mut rng = seed::rng(seed::stage_seed(seed, Stage::Process));
    let mut rest: Vec<Edge> = all_k_sets(n, r)
        .into_iter()
        .filter(|e| !h.contains(*e))
        .collect();
    rest.shuffle(&mut rng);
    let order: Vec<Edge> = orders.sigma_h.iter().copied().chain(rest).collect();
    let trace = ProcessTrace {
        n,
        arity: r,
        seed: Some(seed),
        order,
        uniforms: None,
    };

    let consts = opts
        .constants
        .unwrap_or_else(|| SetConstants::scaled_to(n, r, g_value, opts.default_pi_r));
    let bundle = build_random_set_with(
        &trace,
        g_value,
        consts,
        s,
        seed::stage_seed(seed, Stage::RandomSet),
    )
    .map_err(|e| ("random_set", e))?;
    v.f_in_r = bundle.f_in_r;
    let removed: HashSet<Edge> = bundle.r_set.iter().copied().collect();
    let thin = thin_with_set(
        &trace,
        Some(&removed),
        bundle.pi_r,
        seed::stage_seed(seed, Stage::Thinning),
    )
    .map_err(|e| ("thinning", e))?;
    v.thin_ok = thin.min_degree_ok;
    let t_prime = thin.t_h_thinned.ok_or((
        "thinning",
        TimingError::Undefined("thinned trace never covers".into()),
    ))?;
    let h_stop = thin.thinned.prefix(t_prime);
    let steps_g = cmp.steps_g.ok_or((
        "hitting",
        TimingError::Undefined("graph never covered".into()),
    ))?;
    let g_stop = UniformHypergraph::from_edges(n, s, orders.sigma_g[..steps_g].iter().copied())
        .map_err(|e| ("hitting", e.into()))?;
    v.containment = h_stop
        .edges
        .iter()
        .all(|h| h.subsets(s).iter().all(|e| g_stop.contains(*e)));
    if n % r == 0 {
        v.matching = match perfect_matching(&h_stop, opts.node_budget) {
            Ok(FactorOutcome::Found(_)) => Some(true),
            Ok(FactorOutcome::Infeasible) => Some(false),
            _ => None,
        };
        v.factor = match clique_factor(&g_stop, r, opts.node_budget) {
            Ok(FactorOutcome::Found(_)) => Some(true),
            Ok(FactorOutcome::Infeasible) => Some(false),
            _ => None,
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::standard_process;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn he(vs: &[u32]) -> Edge {
        Edge::from_vertices(vs)
    }

    fn hyper(n: u32, r: u32, es: &[&[u32]]) -> UniformHypergraph {
        UniformHypergraph::from_edges(n, r, es.iter().map(|v| he(v))).unwrap()
    }

    fn clocks(pairs: &[(&[u32], f64)]) -> BTreeMap<Edge, f64> {
        pairs.iter().map(|(v, t)| (he(v), *t)).collect()
    }

    fn chi_p(counts: &[u64], expected: f64) -> f64 {
        let stat: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        ChiSquared::new(counts.len() as f64 - 1.0).unwrap().sf(stat)
    }

    #[test]
    fn no_partners_follow_clique_order() {
        let h = hyper(9, 3, &[&[1, 2, 3], &[3, 4, 5], &[6, 7, 8], &[1, 8, 9]]);
        let g = h.clique_expansion(2).unwrap();
        for seed in 0..20 {
            let o = build_time_orders(&g, &h, seed, true).unwrap();
            assert!(o.partners.is_empty());
            for e in &h.edges {
                assert_eq!(o.tau_hyperedge[e], o.clique_time(*e));
            }
            let mut by_clique = h.edge_vec();
            by_clique.sort_by(|a, b| o.clique_time(*a).total_cmp(&o.clique_time(*b)));
            assert_eq!(by_clique, o.sigma_h);
        }
    }

    #[test]
    fn two_pairs_by_hand() {
        let h = hyper(8, 3, &[&[1, 2, 3], &[1, 2, 4], &[5, 6, 7], &[5, 6, 8]]);
        let g = h.clique_expansion(2).unwrap();
        let xi = clocks(&[
            (&[1, 2], 0.9),
            (&[1, 3], 0.1),
            (&[2, 3], 0.2),
            (&[1, 4], 0.3),
            (&[2, 4], 0.4),
            (&[5, 6], 0.15),
            (&[5, 7], 0.25),
            (&[6, 7], 0.35),
            (&[5, 8], 0.45),
            (&[6, 8], 0.55),
        ]);
        let o = time_orders_from_values(&g, &h, xi, &[0.5, 0.05]).unwrap();
        assert_eq!(o.partners.len(), 2);
        assert_eq!(o.partners[0].v, he(&[1, 2, 4]));
        assert_eq!(o.partners[0].shared, he(&[1, 2]));
        assert_eq!(o.tau_hyperedge[&he(&[1, 2, 3])], 0.9);
        assert_eq!(o.tau_hyperedge[&he(&[1, 2, 4])], 0.5);
        assert_eq!(o.tau_hyperedge[&he(&[5, 6, 7])], 0.35);
        assert_eq!(o.tau_hyperedge[&he(&[5, 6, 8])], 0.55);
        assert_eq!(o.clique_time(he(&[1, 2, 4])), 0.9);
    }

    #[test]
    fn hyperedge_order_is_uniform() {
        let h = hyper(10, 3, &[&[1, 2, 3], &[1, 2, 4], &[5, 6, 7], &[8, 9, 10]]);
        let g = h.clique_expansion(2).unwrap();
        let es = h.edge_vec();
        let mut counts: HashMap<Vec<usize>, u64> = HashMap::new();
        let runs = 10_000;
        for seed in 0..runs {
            let o = build_time_orders(&g, &h, seed, true).unwrap();
            let perm: Vec<usize> = o
                .sigma_h
                .iter()
                .map(|e| es.iter().position(|x| x == e).unwrap())
                .collect();
            *counts.entry(perm).or_default() += 1;
        }
        assert_eq!(counts.len(), 24);
        let c: Vec<u64> = counts.values().copied().collect();
        assert!(chi_p(&c, runs as f64 / 24.0) > 0.01);
    }

    #[test]
    fn preconditions_are_checked() {
        let h = hyper(6, 3, &[&[1, 2, 3], &[1, 2, 4], &[1, 2, 5]]);
        let g = h.clique_expansion(2).unwrap();
        match build_time_orders(&g, &h, 0, true) {
            Err(TimingError::Precondition { witness, .. }) => assert_eq!(witness.len(), 3),
            other => panic!("{other:?}"),
        }
        let h = hyper(6, 3, &[&[1, 2, 3], &[1, 2, 4]]);
        let g = h.clique_expansion(2).unwrap();
        assert!(build_time_orders(&g, &h, 0, false).is_err());
        let mut thin = g.clone();
        thin.edges.remove(&he(&[1, 2]));
        assert!(matches!(
            build_time_orders(&thin, &h, 0, true),
            Err(TimingError::Precondition { .. })
        ));
    }

    #[test]
    fn single_hyperedge_hits_together() {
        let h = hyper(3, 3, &[&[1, 2, 3]]);
        let g = h.clique_expansion(2).unwrap();
        let o = build_time_orders(&g, &h, 4, true).unwrap();
        let c = hitting_comparison(&o).unwrap();
        let last = o.tau_edge.values().copied().fold(0.0, f64::max);
        assert_eq!(c.t_g, Some(last));
        assert_eq!(c.t_h, Some(last));
        assert!(c.equal);
    }

    #[test]
    fn shared_edge_last_keeps_partner_inequality() {
        let h = hyper(4, 3, &[&[1, 2, 3], &[1, 2, 4]]);
        let g = h.clique_expansion(2).unwrap();
        let xi = clocks(&[
            (&[1, 2], 0.9),
            (&[1, 3], 0.1),
            (&[2, 3], 0.2),
            (&[1, 4], 0.3),
            (&[2, 4], 0.4),
        ]);
        let o = time_orders_from_values(&g, &h, xi, &[0.2]).unwrap();
        let c = hitting_comparison(&o).unwrap();
        assert!(c.partner_inequality);
        assert!(c.t_g.unwrap() <= c.t_h.unwrap());
        let e = exceptional_set(&o, &c, 1.0).unwrap();
        assert!(e.members.is_empty());
        assert_eq!(e.partners_in_window, None);
    }

    #[test]
    fn constructed_exceptional_member() {
        let h = hyper(
            7,
            3,
            &[&[1, 2, 3], &[1, 2, 4], &[3, 4, 5], &[1, 5, 6], &[2, 6, 7]],
        );
        let g = h.clique_expansion(2).unwrap();
        let xi = clocks(&[
            (&[1, 3], 0.10),
            (&[2, 3], 0.11),
            (&[1, 4], 0.12),
            (&[2, 4], 0.13),
            (&[3, 4], 0.14),
            (&[3, 5], 0.20),
            (&[4, 5], 0.21),
            (&[1, 5], 0.30),
            (&[1, 6], 0.31),
            (&[5, 6], 0.32),
            (&[2, 6], 0.40),
            (&[2, 7], 0.41),
            (&[6, 7], 0.42),
            (&[1, 2], 0.99),
        ]);
        let o = time_orders_from_values(&g, &h, xi, &[0.05]).unwrap();
        let c = hitting_comparison(&o).unwrap();
        assert_eq!(c.t_h, Some(0.42));
        assert_eq!(c.t_g, Some(0.42));
        assert_eq!(c.steps_h, Some(4));
        let e = exceptional_set(&o, &c, 1.0).unwrap();
        assert_eq!(e.members, vec![he(&[1, 2, 4])]);
        assert!(e.in_s2);
        assert_eq!(e.partners_absent, Some(true));
        assert_eq!(e.partners_in_window, Some(true));
        let e = exceptional_set(&o, &c, 0.1).unwrap();
        assert_eq!(e.window, 0);
        assert_eq!(e.partners_in_window, Some(false));
    }

    #[test]
    fn exceptional_set_needs_hitting_times() {
        let h = hyper(4, 3, &[&[1, 2, 3]]);
        let g = h.clique_expansion(2).unwrap();
        let o = build_time_orders(&g, &h, 0, true).unwrap();
        let c = hitting_comparison(&o).unwrap();
        assert_eq!(c.t_h, None);
        assert!(matches!(
            exceptional_set(&o, &c, 1.0),
            Err(TimingError::Undefined(_))
        ));
    }

    fn four_vertex_trace(seed: u64) -> ProcessTrace {
        standard_process(4, 3, seed).unwrap()
    }

    #[test]
    fn no_exclusive_partners_gives_plain_bernoulli() {
        let g_value = 1.0;
        let pi_r = 0.3;
        let consts = SetConstants {
            c_i: 1.0,
            c_r: pi_r * 4.0 / g_value,
        };
        let runs = 10_000u64;
        let (mut first, mut second, mut both) = (0u64, 0u64, 0u64);
        for seed in 0..runs {
            let tr = four_vertex_trace(seed);
            let b = build_random_set(&tr, g_value, consts, seed + 1).unwrap();
            assert_eq!(b.t_h, 2);
            assert!(b.x.iter().all(|&(_, x)| x == 0));
            assert!(b.r_prime.is_empty());
            assert!((b.pi_r - pi_r).abs() < 1e-12);
            let a = b.r_set.contains(&tr.order[0]);
            let c = b.r_set.contains(&tr.order[1]);
            first += a as u64;
            second += c as u64;
            both += (a && c) as u64;
        }
        let half = |p: f64| 3.0 * (p * (1.0 - p) / runs as f64).sqrt();
        for k in [first, second] {
            assert!((k as f64 / runs as f64 - pi_r).abs() < half(pi_r));
        }
        assert!((both as f64 / runs as f64 - pi_r * pi_r).abs() < half(pi_r * pi_r));
    }

    #[test]
    fn random_set_rejects_large_density() {
        let tr = standard_process(12, 3, 0).unwrap();
        let consts = SetConstants::asymptotic(3);
        assert!(matches!(
            build_random_set(&tr, 1.0, consts, 0),
            Err(TimingError::Invalid(_))
        ));
    }

    #[test]
    fn random_set_invariants() {
        let g_value = g_default(30);
        let consts = SetConstants::scaled_to(30, 3, g_value, 0.2);
        for seed in 0..10 {
            let tr = standard_process(30, 3, seed).unwrap();
            let b = build_random_set(&tr, g_value, consts, seed).unwrap();
            let stopped: HashSet<Edge> = tr.order[..b.t_h].iter().copied().collect();
            assert!(b.r_prime.iter().all(|h| b.r_set.contains(h)));
            assert!(b.r_set.iter().all(|h| stopped.contains(h)));
            assert!(b.x.iter().all(|&(_, x)| b.pi_h(x) <= b.pi_r));
            assert_eq!(b.i_set, tr.order[b.t_h..b.t_h + b.i_set.len()]);
            // Truncated traces are extended instead.
            let short = ProcessTrace::from_order(30, 3, tr.order[..b.t_h].to_vec());
            let e = build_random_set(&short, g_value, consts, seed).unwrap();
            assert!(e.extended.is_complete());
            assert_eq!(e.extended.order[..b.t_h], tr.order[..b.t_h]);
        }
    }

    #[test]
    #[ignore = "at n = 60 the set I holds a handful of hyperedges against a window of 84 arrivals"]
    fn partners_in_window_are_absorbed_at_n60() {
        let g_value = g_default(60);
        let consts = SetConstants::scaled_to(60, 3, g_value, 0.1);
        let ok = (0..200)
            .filter(|&s| {
                let tr = standard_process(60, 3, s).unwrap();
                build_random_set(&tr, g_value, consts, s).unwrap().f_in_r
            })
            .count();
        assert!(ok as f64 / 200.0 >= 0.9);
    }

    #[test]
    fn zero_thinning_is_identity() {
        let tr = standard_process(12, 3, 5).unwrap();
        let t = thin_process(&tr, 0.0, 1).unwrap();
        assert_eq!(t.thinned.order, tr.order);
        assert_eq!(t.t0, t.t_h);
        assert_eq!(t.t_h_thinned, Some(t.t_h));
        assert!(t.min_degree_ok);
        assert_eq!(
            thin_process(&tr, 0.2, 9).unwrap(),
            thin_process(&tr, 0.2, 9).unwrap()
        );
        assert!(thin_process(&tr, 1.0, 9).is_err());
    }

    #[test]
    fn thinning_survival_rate() {
        let tr = standard_process(10, 3, 2).unwrap();
        let pi_r = 0.2;
        let mut survived = 0usize;
        let runs = 200;
        for seed in 0..runs {
            survived += thin_process(&tr, pi_r, seed).unwrap().thinned.order.len();
        }
        let total = (runs as usize * tr.order.len()) as f64;
        let rate = survived as f64 / total;
        assert!((rate - (1.0 - pi_r)).abs() < 3.0 * (pi_r * (1.0 - pi_r) / total).sqrt());
    }

    #[test]
    fn given_set_removed_from_prefix() {
        let tr = standard_process(12, 3, 1).unwrap();
        let t_h = hitting_time_min_degree(&tr).unwrap();
        let removed: HashSet<Edge> = [tr.order[0], tr.order[1]].into_iter().collect();
        let t = thin_with_set(&tr, Some(&removed), 0.0, 0).unwrap();
        assert_eq!(t.t0, t_h - 2);
        assert_eq!(t.thinned.order.len(), tr.order.len() - 2);
    }

    #[test]
    fn chain_is_deterministic() {
        let opts = ChainOptions::default();
        let a = chain_coupling(9, 3, 4, &opts);
        assert_eq!(a, chain_coupling(9, 3, 4, &opts));
        assert!(a.runtime_ms.is_none());
    }

    #[test]
    fn chain_from_clean_pair_contains() {
        let h = hyper(
            9,
            3,
            &[
                &[1, 2, 3],
                &[4, 5, 6],
                &[7, 8, 9],
                &[1, 4, 7],
                &[2, 5, 8],
                &[3, 6, 9],
            ],
        );
        let g = h.clique_expansion(2).unwrap();
        let opts = ChainOptions {
            default_pi_r: 0.0,
            ..ChainOptions::default()
        };
        for seed in 0..10 {
            let v = chain_from_pair(&g, &h, seed, 0.5, true, &opts);
            assert_eq!(v.rejected, None);
            assert!(v.t_eq && v.e_size == 0 && v.e_in_s2 && v.partner_inequality);
            assert!(v.thin_ok && v.containment);
            assert_eq!(v.factor, Some(true));
        }
    }
}
