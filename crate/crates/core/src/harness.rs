//! Experiment configuration, trial fan-out, aggregation and report output.
//!
//! CSV reports are long-format with the columns
//! `experiment,n,trial,seed,label,metric,value`. Per-trial rows come first,
//! sorted by `n` then trial index; aggregate rows follow with `trial` set to
//! `aggregate` and metrics suffixed `.estimate`, `.lo`, `.hi` (proportions)
//! or `.mean` (numbers), plus any experiment-level statistics.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::condprob::{
    exact_conditional_prob, mc_conditional_prob, CliqueConditioning, ExactOptions,
};
use crate::coupling::{
    classify_extra_cliques, inclusion_chi_square, modified_couple_r3, pi_star_s, riordan_couple,
    CouplingConfig, ExtraCliqueClass, FailureReason,
};
use crate::edge::{all_k_sets, Edge};
use crate::factor::{clique_factor, perfect_matching, FactorOutcome, DEFAULT_NODE_BUDGET};
use crate::hypergraph::{
    bad_events, default_avoidable_cap, find_avoidable_configuration, UniformHypergraph,
};
use crate::oracle::brute_has_avoidable;
use crate::par;
use crate::process::{
    g_default, hitting_time_clique_cover, hitting_time_min_degree, standard_process,
    window_params_with_g,
};
use crate::seed::{self, Stage};
use crate::suniform::{verify_partition_bound, verify_w_function};
use crate::timing::{
    build_random_set, run_chain, thin_process, ChainOptions, ChainVerdict, SetConstants,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse preset: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Invalid(msg.into())
}

/// Wilson score interval for a binomial proportion, clamped to `[0, 1]`.
pub fn wilson_interval(successes: u64, trials: u64, confidence: f64) -> Result<(f64, f64)> {
    if trials == 0 || successes > trials {
        return Err(invalid(format!("{successes} successes in {trials} trials")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(invalid(format!("confidence {confidence}")));
    }
    let z = Normal::standard().inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    Ok((lo, hi))
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// `K_r`-factor in the graph process at the clique-cover hitting time.
    FactorAtHitting,
    /// Perfect matching in the `r`-uniform process at the isolated-vertex
    /// hitting time.
    MatchingAtHitting,
    RiordanCoupling,
    ModifiedCouplingR3,
    Thinning,
    RandomSet,
    Chain,
    SuniformChain,
    BadEvents,
    CondProbOracle,
    PiStarOracle,
    AvoidableOracle,
    ExtraCliqueClassification,
    Analytic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    /// Consecutive Wilson intervals never drop entirely below the previous.
    NonDecreasing,
}

/// Threshold on an aggregate. `min`/`max` compare the point estimate of a
/// proportion, the mean of a number, or an experiment statistic.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub metric: String,
    /// Free-form tag used to group results, e.g. by acceptance criterion.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub n: Option<u32>,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
    #[serde(default)]
    pub trend: Option<Trend>,
    /// Pass when the metric has no observations.
    #[serde(default)]
    pub vacuous_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub n: Vec<u32>,
    #[serde(default = "default_r")]
    pub r: u32,
    #[serde(default = "default_s")]
    pub s: u32,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub c_i: Option<f64>,
    #[serde(default)]
    pub c_r: Option<f64>,
    #[serde(default)]
    pub g_value: Option<f64>,
    /// Edge density; defaults to the end of the critical window.
    #[serde(default)]
    pub p: Option<f64>,
    /// Thinning probability.
    #[serde(default)]
    pub pi_r: Option<f64>,
    /// Edges per random instance in the oracle experiments.
    #[serde(default)]
    pub max_edges: Option<usize>,
    #[serde(default)]
    pub record_runtime: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    #[serde(default, rename = "check")]
    pub checks: Vec<Check>,
}

fn default_r() -> u32 {
    3
}
fn default_s() -> u32 {
    2
}
fn default_trials() -> usize {
    100
}
fn default_delta() -> f64 {
    0.1
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, n: Vec<u32>, r: u32, trials: usize, master_seed: u64) -> Self {
        ExperimentConfig {
            kind,
            n,
            r,
            s: 2,
            trials,
            master_seed,
            delta: 0.1,
            c_i: None,
            c_r: None,
            g_value: None,
            p: None,
            pi_r: None,
            max_edges: None,
            record_runtime: false,
            output: None,
            format: Format::Csv,
            checks: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        use ExperimentKind::*;
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.kind != Analytic && self.n.is_empty() {
            return Err(invalid("at least one n is required"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid(format!("delta = {} outside (0, 1)", self.delta)));
        }
        for (name, v) in [
            ("c_i", self.c_i),
            ("c_r", self.c_r),
            ("g_value", self.g_value),
        ] {
            if v.is_some_and(|x| !(x > 0.0 && x.is_finite())) {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if self.p.is_some_and(|p| !(p > 0.0 && p < 1.0)) {
            return Err(invalid("p outside (0, 1)"));
        }
        if self.pi_r.is_some_and(|p| !(0.0..1.0).contains(&p)) {
            return Err(invalid("pi_r outside [0, 1)"));
        }
        let r = self.r;
        for &n in &self.n {
            if n < 2 || n > crate::edge::MAX_VERTICES {
                return Err(invalid(format!("n = {n} outside 2..=128")));
            }
            if r > n && !matches!(self.kind, Analytic) {
                return Err(invalid(format!("r = {r} exceeds n = {n}")));
            }
            let needs_window = matches!(
                self.kind,
                RiordanCoupling | ModifiedCouplingR3 | Chain | SuniformChain | BadEvents
            ) && self.p.is_none();
            if needs_window {
                let s = if self.kind == SuniformChain {
                    self.s
                } else {
                    2
                };
                let g = self.g_value.unwrap_or_else(|| g_default(n as u64));
                window_params_with_g(n, r, s, self.delta, g)
                    .map_err(|e| invalid(format!("n = {n}: {e}")))?;
            }
            if matches!(self.kind, FactorAtHitting | MatchingAtHitting) && n % r != 0 {
                return Err(invalid(format!("n = {n} not divisible by r = {r}")));
            }
        }
        match self.kind {
            FactorAtHitting if r < 3 => Err(invalid("clique factors need r >= 3")),
            MatchingAtHitting if r < 2 => Err(invalid("matchings need r >= 2")),
            RiordanCoupling if r < 4 => Err(invalid("this coupling needs r >= 4")),
            ModifiedCouplingR3 if r != 3 => Err(invalid("this coupling is for r = 3")),
            Chain | Thinning | RandomSet | ExtraCliqueClassification if r < 3 => {
                Err(invalid("need r >= 3"))
            }
            SuniformChain if !(self.s >= 3 && r > self.s) => Err(invalid("need r > s >= 3")),
            Analytic if r < 4 => Err(invalid("analytic sweep needs r >= 4")),
            _ => Ok(()),
        }
    }
}

/// A preset file: one or more experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    #[serde(default)]
    pub name: String,
    #[serde(rename = "experiment")]
    pub experiments: Vec<ExperimentConfig>,
}

pub fn load_preset(path: &Path) -> Result<Preset> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let preset: Preset = toml::from_str(&text)?;
    for e in &preset.experiments {
        e.validate()?;
    }
    Ok(preset)
}

// ---------------------------------------------------------------------------
// Trials
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Flag(bool),
    Number(f64),
}

impl Value {
    fn as_f64(self) -> f64 {
        match self {
            Value::Flag(b) => b as u8 as f64,
            Value::Number(x) => x,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub n: u32,
    pub trial: usize,
    pub seed: u64,
    pub label: String,
    pub values: Vec<(String, Value)>,
    /// Set when the trial was rejected; the message says which stage.
    pub rejected: Option<String>,
}

#[derive(Default)]
struct TrialOut {
    label: String,
    values: Vec<(String, Value)>,
    rejected: Option<String>,
    /// Hyperedges of a coupled hypergraph, for marginal tests.
    included: Option<Vec<Edge>>,
    pi: Option<f64>,
}

impl TrialOut {
    fn flag(&mut self, name: &str, v: bool) {
        self.values.push((name.to_string(), Value::Flag(v)));
    }
    fn num(&mut self, name: &str, v: f64) {
        self.values.push((name.to_string(), Value::Number(v)));
    }
    fn reject(mut self, msg: impl ToString) -> Self {
        self.rejected = Some(msg.to_string());
        self
    }
}

/// Seed of trial `index` at size `n`.
pub fn seed_for(master: u64, n: u32, index: usize) -> u64 {
    seed::trial_seed(master, (n as u64) << 32 | index as u64)
}

fn window_p(cfg: &ExperimentConfig, n: u32, r: u32, s: u32) -> f64 {
    cfg.p.unwrap_or_else(|| {
        let g = cfg.g_value.unwrap_or_else(|| g_default(n as u64));
        window_params_with_g(n, r, s, cfg.delta, g)
            .expect("validated")
            .p_plus
    })
}

fn chain_options(cfg: &ExperimentConfig, n: u32, r: u32) -> ChainOptions {
    let g = cfg.g_value.unwrap_or_else(|| g_default(n as u64));
    let mut opts = ChainOptions {
        delta: cfg.delta,
        g_value: cfg.g_value,
        record_runtime: cfg.record_runtime,
        ..ChainOptions::default()
    };
    if cfg.c_i.is_some() || cfg.c_r.is_some() {
        let base = SetConstants::scaled_to(n, r, g, opts.default_pi_r);
        opts.constants = Some(SetConstants {
            c_i: cfg.c_i.unwrap_or(base.c_i),
            c_r: cfg.c_r.unwrap_or(base.c_r),
        });
    }
    if let Some(p) = cfg.pi_r {
        opts.default_pi_r = p;
    }
    opts
}

fn chain_values(out: &mut TrialOut, v: &ChainVerdict) {
    out.flag("static_failed", v.static_failed);
    out.flag("containment", v.containment);
    if let Some(m) = v.matching {
        out.flag("matching", m);
    }
    if let Some(f) = v.factor {
        out.flag("factor", f);
    }
    out.flag("t_eq", v.t_eq);
    out.flag("e_defined", v.e_defined);
    out.flag("e_in_s2", v.e_defined && v.e_in_s2);
    out.num("e_size", v.e_size as f64);
    if let Some(w) = v.e_partner_window {
        out.flag("e_partner_window", w);
    }
    out.flag("f_in_r", v.f_in_r);
    out.flag("thin_ok", v.thin_ok);
    out.flag("partner_inequality", v.partner_inequality);
    out.flag("iso_low_degree", v.iso_low_degree);
    out.flag("iso_not_bad", v.iso_not_bad);
    if let Some(ms) = v.runtime_ms {
        out.num("runtime_ms", ms);
    }
    if let Some(r) = &v.rejected {
        out.rejected = Some(r.clone());
    }
}

fn random_hypergraph(n: u32, r: u32, edges: usize, rng: &mut seed::Rng) -> UniformHypergraph {
    let all = all_k_sets(n, r);
    let k = rng.random_range(1..=edges.min(all.len()));
    UniformHypergraph::from_edges(n, r, all.choose_multiple(rng, k).copied()).expect("dimensions")
}

/// A conditioning at `n` whose exact answer lies in `[0.02, 0.98]`, so the
/// sampling error is not degenerate.
fn random_conditioning(n: u32, rng: &mut seed::Rng) -> (CliqueConditioning, Edge, f64) {
    let triples = all_k_sets(n, 3);
    loop {
        let mut cond = CliqueConditioning::graph(n, rng.random_range(0.3..0.8));
        let picked: Vec<Edge> = triples.choose_multiple(rng, 4).copied().collect();
        let target = picked[0];
        let split = rng.random_range(0..=3);
        cond.positives = picked[1..1 + split.min(1)].to_vec();
        cond.negatives = picked[1 + split.min(1)..].to_vec();
        if let Ok(v) = exact_conditional_prob(&cond, target, &ExactOptions::default()) {
            if (0.02..=0.98).contains(&v) {
                return (cond, target, v);
            }
        }
    }
}

fn run_trial(cfg: &ExperimentConfig, n: u32, seed: u64) -> TrialOut {
    use ExperimentKind::*;
    let r = cfg.r;
    let mut out = TrialOut::default();
    let mut rng = seed::rng(seed::stage_seed(seed, Stage::Instance));
    match cfg.kind {
        FactorAtHitting => {
            let trace = match standard_process(n, 2, seed) {
                Ok(t) => t,
                Err(e) => return out.reject(e),
            };
            let t = match hitting_time_clique_cover(&trace, r) {
                Ok(Some(t)) => t,
                Ok(None) => return out.reject("graph never covered"),
                Err(e) => return out.reject(e),
            };
            out.num("hitting_time", t as f64);
            match clique_factor(&trace.prefix(t), r, DEFAULT_NODE_BUDGET) {
                Ok(FactorOutcome::Found(_)) => out.flag("factor", true),
                Ok(FactorOutcome::Infeasible) => out.flag("factor", false),
                Ok(FactorOutcome::BudgetExceeded) => {
                    out.flag("factor", false);
                    return out.reject("factor search budget exceeded");
                }
                Err(e) => return out.reject(e),
            }
        }
        MatchingAtHitting => {
            let trace = match standard_process(n, r, seed) {
                Ok(t) => t,
                Err(e) => return out.reject(e),
            };
            let Some(t) = hitting_time_min_degree(&trace) else {
                return out.reject("hypergraph never covered");
            };
            out.num("hitting_time", t as f64);
            match perfect_matching(&trace.prefix(t), DEFAULT_NODE_BUDGET) {
                Ok(FactorOutcome::Found(_)) => out.flag("matching", true),
                Ok(FactorOutcome::Infeasible) => out.flag("matching", false),
                Ok(FactorOutcome::BudgetExceeded) => {
                    out.flag("matching", false);
                    return out.reject("matching search budget exceeded");
                }
                Err(e) => return out.reject(e),
            }
        }
        RiordanCoupling | ModifiedCouplingR3 => {
            let p = window_p(cfg, n, r, 2);
            let ccfg = CouplingConfig {
                delta: cfg.delta,
                ..CouplingConfig::default()
            };
            let res = if cfg.kind == RiordanCoupling {
                riordan_couple(n, r, p, seed, &ccfg)
            } else {
                modified_couple_r3(n, p, seed, &ccfg)
            };
            let o = match res {
                Ok(o) => o,
                Err(e) => return out.reject(e),
            };
            out.flag("failed", o.failed());
            if !o.failed() {
                out.flag("contained_given_ok", o.contained());
            }
            out.num("approximate_steps", o.approximate_steps() as f64);
            out.num("hyperedges", o.h.len() as f64);
            if cfg.kind == ModifiedCouplingR3 {
                let mismatch = o
                    .failures
                    .iter()
                    .any(|f| f.reason == FailureReason::CycleMismatch);
                out.flag("cycle_mismatch", mismatch);
                let bound = o.history.iter().all(|st| {
                    let pp = st.pi_j_prime.unwrap_or(0.0);
                    pp <= o.pi + 1e-12 && (!st.exact || st.pi_j >= pp || st.pi_j == 0.0)
                });
                out.flag("pi_prime_bounds", bound);
            }
            out.pi = Some(o.pi);
            out.included = Some(o.h.edge_vec());
        }
        Thinning => {
            let pi_r = cfg.pi_r.unwrap_or(0.05);
            let trace = match standard_process(n, r, seed) {
                Ok(t) => t,
                Err(e) => return out.reject(e),
            };
            match thin_process(&trace, pi_r, seed::stage_seed(seed, Stage::Thinning)) {
                Ok(t) => {
                    out.flag("min_degree_ok", t.min_degree_ok);
                    out.num("t_h", t.t_h as f64);
                    out.num("t0", t.t0 as f64);
                }
                Err(e) => return out.reject(e),
            }
        }
        RandomSet => {
            let g = cfg.g_value.unwrap_or_else(|| g_default(n as u64));
            let base = SetConstants::scaled_to(n, r, g, cfg.pi_r.unwrap_or(0.1));
            let consts = SetConstants {
                c_i: cfg.c_i.unwrap_or(base.c_i),
                c_r: cfg.c_r.unwrap_or(base.c_r),
            };
            let trace = match standard_process(n, r, seed) {
                Ok(t) => t,
                Err(e) => return out.reject(e),
            };
            match build_random_set(&trace, g, consts, seed::stage_seed(seed, Stage::RandomSet)) {
                Ok(b) => {
                    out.flag("f_in_r", b.f_in_r);
                    out.num("r_size", b.r_set.len() as f64);
                    out.num("f_size", b.f_set.len() as f64);
                    out.num("i_size", b.i_set.len() as f64);
                }
                Err(e) => return out.reject(e),
            }
        }
        Chain | SuniformChain => {
            let s = if cfg.kind == SuniformChain { cfg.s } else { 2 };
            let v = run_chain(n, r, s, seed, s == 2, &chain_options(cfg, n, r));
            chain_values(&mut out, &v);
        }
        BadEvents => {
            let g = cfg.g_value.unwrap_or_else(|| g_default(n as u64));
            let w = window_params_with_g(n, r, 2, cfg.delta, g).expect("validated");
            let pi = cfg.p.unwrap_or(w.pi_plus);
            let trace = match standard_process(n, r, seed) {
                Ok(t) => t,
                Err(e) => return out.reject(e),
            };
            let h = trace.prefix_at(pi).expect("labelled trace");
            let b = bad_events(&h, pi, g);
            let names = [
                "high_degree",
                "avoidable",
                "many_low_degree",
                "many_partners",
                "isolated",
            ];
            for (name, f) in names.iter().zip(b.flags()) {
                out.flag(name, f);
            }
            out.flag("none", !b.any());
        }
        CondProbOracle => {
            let (cond, target, exact) = random_conditioning(n, &mut rng);
            match mc_conditional_prob(
                &cond,
                target,
                40_000,
                seed::stage_seed(seed, Stage::Estimate),
            ) {
                Ok(mc) => {
                    out.num("abs_error", (mc.estimate - exact).abs());
                    out.flag(
                        "mc_agrees",
                        (mc.estimate - exact).abs() <= 3.0 * mc.half_width,
                    );
                }
                Err(e) => return out.reject(e),
            }
        }
        PiStarOracle => {
            let h0 = random_hypergraph(n, r, cfg.max_edges.unwrap_or(3), &mut rng);
            let outside: Vec<Edge> = all_k_sets(n, r)
                .into_iter()
                .filter(|e| !h0.contains(*e))
                .collect();
            let Some(&target) = outside.choose(&mut rng) else {
                return out.reject("no target outside H0");
            };
            let p = rng.random_range(0.1..0.9);
            let cond = CliqueConditioning {
                n,
                s: cfg.s,
                p,
                positives: h0.edge_vec(),
                ..Default::default()
            };
            match exact_conditional_prob(&cond, target, &ExactOptions::default()) {
                Ok(v) => {
                    let err = (pi_star_s(&h0, cfg.s, target, p) - v).abs();
                    out.num("abs_error", err);
                    out.flag("pi_star_agrees", err <= 1e-12);
                }
                Err(e) => return out.reject(e),
            }
        }
        AvoidableOracle => {
            let h = random_hypergraph(n, r, cfg.max_edges.unwrap_or(8), &mut rng);
            let cap = default_avoidable_cap(r);
            let fast = find_avoidable_configuration(&h, cap).is_some();
            out.flag("agree", fast == brute_has_avoidable(&h, cap));
            out.flag("avoidable", fast);
        }
        ExtraCliqueClassification => {
            let h = random_hypergraph(n, r, cfg.max_edges.unwrap_or(12), &mut rng);
            let g = h.clique_expansion(2).expect("r >= 3");
            match classify_extra_cliques(&g, &h) {
                Ok(list) => {
                    let unexplained = list
                        .iter()
                        .filter(|(_, c)| *c == ExtraCliqueClass::Unexplained)
                        .count();
                    out.num("extra_cliques", list.len() as f64);
                    out.flag("no_unexplained", unexplained == 0);
                }
                Err(e) => return out.reject(e),
            }
        }
        Analytic => unreachable!("handled separately"),
    }
    out
}

fn analytic_rows(cfg: &ExperimentConfig) -> Vec<TrialRow> {
    let mut rows = Vec::new();
    for r in 4..=cfg.r {
        for s in 3..r {
            let part = verify_partition_bound(r, s);
            let w = verify_w_function(r, s, 1000);
            let max_gap = part
                .iter()
                .map(|p| p.rhs as f64 - p.max_lhs as f64)
                .fold(f64::INFINITY, f64::min);
            rows.push(TrialRow {
                n: r,
                trial: rows.len(),
                seed: 0,
                label: format!("r={r};s={s}"),
                values: vec![
                    (
                        "partition_pass".into(),
                        Value::Flag(part.iter().all(|p| p.pass)),
                    ),
                    ("partition_min_slack".into(), Value::Number(max_gap)),
                    ("w_pass".into(), Value::Flag(w.pass)),
                    ("w_start".into(), Value::Number(w.w_start)),
                ],
                rejected: None,
            });
        }
    }
    rows
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: u32,
    pub metric: String,
    pub count: u64,
    /// Successes for flags; `None` for numbers.
    pub successes: Option<u64>,
    /// Proportion for flags, mean for numbers.
    pub estimate: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub n: Option<u32>,
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: Check,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub version: String,
    pub rows: Vec<TrialRow>,
    pub aggregates: Vec<Aggregate>,
    pub statistics: Vec<Statistic>,
    pub checks: Vec<CheckResult>,
    pub wall_clock_ms: f64,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn aggregate(&self, n: u32, metric: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.n == n && a.metric == metric)
    }

    pub fn statistic(&self, n: Option<u32>, name: &str) -> Option<f64> {
        self.statistics
            .iter()
            .find(|s| s.n == n && s.name == name)
            .map(|s| s.value)
    }
}

/// Runs every trial of `cfg`, aggregates and evaluates its checks.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment_with_workers(cfg, par::workers_from_env())
}

pub fn run_experiment_with_workers(
    cfg: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut statistics = Vec::new();
    if cfg.kind == ExperimentKind::Analytic {
        rows = analytic_rows(cfg);
    } else {
        let mut sizes = cfg.n.clone();
        sizes.sort_unstable();
        sizes.dedup();
        for n in sizes {
            let outs = par::map_indexed(cfg.trials, workers, |i| {
                let seed = seed_for(cfg.master_seed, n, i);
                (seed, run_trial(cfg, n, seed))
            });
            if let Some(stat) = marginal_statistic(cfg, n, &outs) {
                statistics.extend(stat);
            }
            for (i, (seed, o)) in outs.into_iter().enumerate() {
                rows.push(TrialRow {
                    n,
                    trial: i,
                    seed,
                    label: o.label,
                    values: o.values,
                    rejected: o.rejected,
                });
            }
        }
    }
    let aggregates = aggregate(&rows)?;
    let wall_clock_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut report = ExperimentReport {
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        rows,
        aggregates,
        statistics,
        checks: Vec::new(),
        wall_clock_ms,
    };
    report.checks = cfg.checks.iter().map(|c| evaluate(&report, c)).collect();
    Ok(report)
}

/// Chi-square of per-hyperedge inclusion against the hyperedge density.
fn marginal_statistic(
    cfg: &ExperimentConfig,
    n: u32,
    outs: &[(u64, TrialOut)],
) -> Option<Vec<Statistic>> {
    let pi = outs.iter().find_map(|(_, o)| o.pi)?;
    let all = all_k_sets(n, cfg.r);
    let index: BTreeMap<Edge, usize> = all.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let mut counts = vec![0u64; all.len()];
    let mut runs = 0u64;
    for (_, o) in outs {
        if let Some(inc) = &o.included {
            runs += 1;
            for e in inc {
                counts[index[e]] += 1;
            }
        }
    }
    let chi = inclusion_chi_square(&counts, runs, pi);
    Some(vec![
        Statistic {
            n: Some(n),
            name: "inclusion_chi_square".into(),
            value: chi.statistic,
        },
        Statistic {
            n: Some(n),
            name: "inclusion_chi_square_p".into(),
            value: chi.p_value,
        },
        Statistic {
            n: Some(n),
            name: "pi".into(),
            value: pi,
        },
    ])
}

fn aggregate(rows: &[TrialRow]) -> Result<Vec<Aggregate>> {
    let mut groups: BTreeMap<(u32, String), Vec<Value>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.n, "rejected".into()))
            .or_default()
            .push(Value::Flag(row.rejected.is_some()));
        for (m, v) in &row.values {
            groups.entry((row.n, m.clone())).or_default().push(*v);
        }
    }
    let mut out = Vec::new();
    for ((n, metric), vals) in groups {
        let count = vals.len() as u64;
        if vals.iter().all(|v| matches!(v, Value::Flag(_))) {
            let k = vals
                .iter()
                .filter(|v| matches!(v, Value::Flag(true)))
                .count() as u64;
            let (lo, hi) = wilson_interval(k, count, 0.95)?;
            out.push(Aggregate {
                n,
                metric,
                count,
                successes: Some(k),
                estimate: k as f64 / count as f64,
                lo: Some(lo),
                hi: Some(hi),
            });
        } else {
            let mean = vals.iter().map(|v| v.as_f64()).sum::<f64>() / count as f64;
            out.push(Aggregate {
                n,
                metric,
                count,
                successes: None,
                estimate: mean,
                lo: None,
                hi: None,
            });
        }
    }
    Ok(out)
}

fn evaluate(report: &ExperimentReport, check: &Check) -> CheckResult {
    let result = |pass: bool, detail: String| CheckResult {
        check: check.clone(),
        pass,
        detail,
    };
    if check.metric == "wall_clock_s" {
        let v = report.wall_clock_ms / 1e3;
        let pass = check.min.is_none_or(|m| v >= m) && check.max.is_none_or(|m| v <= m);
        return result(pass, format!("wall clock {v:.2} s"));
    }
    if let Some(Trend::NonDecreasing) = check.trend {
        let mut series: Vec<&Aggregate> = report
            .aggregates
            .iter()
            .filter(|a| a.metric == check.metric)
            .collect();
        series.sort_by_key(|a| a.n);
        if series.is_empty() {
            return result(
                check.vacuous_ok,
                format!("no observations of {}", check.metric),
            );
        }
        let mut detail = Vec::new();
        let mut pass = true;
        for w in series.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b.hi.unwrap_or(b.estimate) < a.lo.unwrap_or(a.estimate) {
                pass = false;
            }
        }
        for a in &series {
            detail.push(format!("n={}: {:.4}", a.n, a.estimate));
        }
        return result(
            pass,
            format!("{} non-decreasing: {}", check.metric, detail.join(", ")),
        );
    }
    let targets: Vec<(Option<u32>, f64, String)> = if let Some(v) = report
        .statistics
        .iter()
        .find(|s| s.name == check.metric && (check.n.is_none() || s.n == check.n))
    {
        vec![(v.n, v.value, format!("{} = {:.6}", v.name, v.value))]
    } else {
        report
            .aggregates
            .iter()
            .filter(|a| a.metric == check.metric && check.n.is_none_or(|n| a.n == n))
            .map(|a| {
                let ci = match (a.lo, a.hi) {
                    (Some(lo), Some(hi)) => format!(" [{lo:.4}, {hi:.4}]"),
                    _ => String::new(),
                };
                (
                    Some(a.n),
                    a.estimate,
                    format!(
                        "n={}: {} = {:.4}{ci} over {}",
                        a.n, a.metric, a.estimate, a.count
                    ),
                )
            })
            .collect()
    };
    if targets.is_empty() {
        return result(
            check.vacuous_ok,
            format!("no observations of {}", check.metric),
        );
    }
    let pass = targets
        .iter()
        .all(|(_, v, _)| check.min.is_none_or(|m| *v >= m) && check.max.is_none_or(|m| *v <= m));
    let bounds = match (check.min, check.max) {
        (Some(lo), Some(hi)) => format!(" (want {lo} ..= {hi})"),
        (Some(lo), None) => format!(" (want >= {lo})"),
        (None, Some(hi)) => format!(" (want <= {hi})"),
        (None, None) => String::new(),
    };
    let detail = targets
        .into_iter()
        .map(|t| t.2)
        .collect::<Vec<_>>()
        .join("; ");
    result(pass, format!("{detail}{bounds}"))
}

const CSV_HEADER: [&str; 7] = [
    "experiment",
    "n",
    "trial",
    "seed",
    "label",
    "metric",
    "value",
];

fn kind_name(kind: ExperimentKind) -> String {
    serde_json::to_value(kind)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

/// Writes `report` as long-format CSV or JSON.
pub fn emit_report(report: &ExperimentReport, format: Format, path: &Path) -> Result<()> {
    let bytes = render_report(report, format)?;
    let write_err = |source| HarnessError::Write {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(write_err)?;
    f.write_all(&bytes).map_err(write_err)
}

pub fn render_report(report: &ExperimentReport, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Json => Ok(serde_json::to_vec_pretty(report)?),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER)?;
            let kind = kind_name(report.config.kind);
            for row in &report.rows {
                let base = [
                    kind.clone(),
                    row.n.to_string(),
                    row.trial.to_string(),
                    row.seed.to_string(),
                    row.label.clone(),
                ];
                for (m, v) in &row.values {
                    let value = match v {
                        Value::Flag(b) => (*b as u8).to_string(),
                        Value::Number(x) => x.to_string(),
                    };
                    w.write_record(base.iter().cloned().chain([m.clone(), value]))?;
                }
                if let Some(msg) = &row.rejected {
                    w.write_record(
                        base.iter()
                            .cloned()
                            .chain(["rejected".to_string(), msg.clone()]),
                    )?;
                }
            }
            for a in &report.aggregates {
                let base = [
                    kind.clone(),
                    a.n.to_string(),
                    "aggregate".to_string(),
                    String::new(),
                    String::new(),
                ];
                let mut emit = |suffix: &str, v: f64| {
                    w.write_record(
                        base.iter()
                            .cloned()
                            .chain([format!("{}.{suffix}", a.metric), v.to_string()]),
                    )
                };
                if a.successes.is_some() {
                    emit("estimate", a.estimate)?;
                    emit("lo", a.lo.unwrap_or(0.0))?;
                    emit("hi", a.hi.unwrap_or(1.0))?;
                } else {
                    emit("mean", a.estimate)?;
                }
            }
            for s in &report.statistics {
                let n = s.n.map(|n| n.to_string()).unwrap_or_default();
                w.write_record([
                    kind.clone(),
                    n,
                    "aggregate".into(),
                    String::new(),
                    String::new(),
                    s.name.clone(),
                    s.value.to_string(),
                ])?;
            }
            w.flush().map_err(|source| HarnessError::Write {
                path: PathBuf::from("<buffer>"),
                source,
            })?;
            w.into_inner().map_err(|e| invalid(e.to_string()))
        }
    }
}

/// Column names of the CSV report.
pub fn csv_columns() -> &'static [&'static str] {
    &CSV_HEADER
}
