//! Chains over `s`-uniform base hypergraphs and the two counting lemmas
//! behind them.

use serde::{Deserialize, Serialize};

use crate::edge::{binomial, binomial_real};
use crate::hypergraph::UniformHypergraph;
use crate::timing::{run_chain, ChainOptions, ChainVerdict, TimingError};

/// Chain for `K_r^(s)`-factors with `r > s >= 3`. No dummy edges: any two
/// hyperedges sharing an `s`-set reject the run.
pub fn suniform_chain(
    n: u32,
    r: u32,
    s: u32,
    seed: u64,
    opts: &ChainOptions,
) -> Result<ChainVerdict, TimingError> {
    if s < 3 || r <= s {
        return Err(TimingError::Invalid(format!(
            "need r > s >= 3, got r = {r}, s = {s}"
        )));
    }
    Ok(run_chain(n, r, s, seed, false, opts))
}

/// Same driver with the dummy-edge switch exposed; at `s = 2` with dummies
/// on it is the graph chain.
pub fn suniform_chain_with(
    n: u32,
    r: u32,
    s: u32,
    seed: u64,
    dummies: bool,
    opts: &ChainOptions,
) -> ChainVerdict {
    run_chain(n, r, s, seed, dummies, opts)
}

/// Largest number of vertices shared by two distinct hyperedges.
pub fn max_overlap(h: &UniformHypergraph) -> u32 {
    let es = h.edge_vec();
    let mut best = 0;
    for (i, a) in es.iter().enumerate() {
        for b in &es[i + 1..] {
            best = best.max(a.meet(*b));
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionRow {
    pub r: u32,
    pub s: u32,
    pub t: u32,
    pub max_lhs: u64,
    pub rhs: u64,
    /// A composition attaining `max_lhs`.
    pub argmax: Vec<u32>,
    pub pass: bool,
}

/// For every `t` in `2..=r-s+1`, the largest `sum C(c_i, s)` over
/// compositions of `r` into `t` parts of size at most `r-t+1`, against
/// `C(r-t+1, s)`.
pub fn verify_partition_bound(r: u32, s: u32) -> Vec<PartitionRow> {
    assert!(r > s && s >= 2, "need r > s >= 2");
    (2..=r - s + 1)
        .map(|t| {
            let cap = r - t + 1;
            let mut best = (0u64, Vec::new());
            let mut parts = Vec::with_capacity(t as usize);
            compositions(r, t, cap, &mut parts, &mut |c| {
                let lhs: u64 = c.iter().map(|&x| binomial(x as u64, s as u64)).sum();
                if lhs > best.0 || best.1.is_empty() {
                    best = (lhs, c.to_vec());
                }
            });
            let rhs = binomial(cap as u64, s as u64);
            PartitionRow {
                r,
                s,
                t,
                max_lhs: best.0,
                rhs,
                argmax: best.1,
                pass: best.0 <= rhs,
            }
        })
        .collect()
}

fn compositions(total: u32, parts: u32, cap: u32, acc: &mut Vec<u32>, f: &mut impl FnMut(&[u32])) {
    if parts == 0 {
        if total == 0 {
            f(acc);
        }
        return;
    }
    let rest = parts - 1;
    for c in 1..=cap.min(total) {
        if total - c < rest || total - c > rest * cap {
            continue;
        }
        acc.push(c);
        compositions(total - c, rest, cap, acc, f);
        acc.pop();
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WReport {
    pub r: u32,
    pub s: u32,
    pub grid_points: usize,
    pub w_start: f64,
    pub w_end: f64,
    /// `w(2) = 1 - s + s/r` in exact arithmetic.
    pub start_exact: bool,
    /// `w(r-s+1) = 1 - s + (r-1)/C(r,s)` in exact arithmetic.
    pub end_exact: bool,
    pub ordered: bool,
    pub convex: bool,
    pub max_at_start: bool,
    pub all_negative: bool,
    pub pass: bool,
}

/// `w(t) = t - r + (r-1) C(r-t+1, s) / C(r, s)` with the real binomial.
pub fn w_value(r: u32, s: u32, t: f64) -> f64 {
    t - r as f64
        + (r - 1) as f64 * binomial_real(r as f64 - t + 1.0, s)
            / binomial(r as u64, s as u64) as f64
}

/// `w(t) * r * C(r,s)` at integer `t`, exactly.
fn w_scaled(r: u32, s: u32, t: u32) -> i128 {
    let c = binomial(r as u64, s as u64) as i128;
    let (r, t) = (r as i128, t as i128);
    (t - r) * r * c + (r - 1) * r * binomial((r - t + 1) as u64, s as u64) as i128
}

/// Checks the endpoint identities exactly and the shape of `w` on a grid
/// over `[2, r-s+1]`.
pub fn verify_w_function(r: u32, s: u32, grid_points: usize) -> WReport {
    assert!(
        r > s && s >= 3 && grid_points >= 100,
        "need r > s >= 3 and 100 grid points"
    );
    let c = binomial(r as u64, s as u64) as i128;
    let (ri, si) = (r as i128, s as i128);
    let end = r - s + 1;
    // 1 - s + s/r and 1 - s + (r-1)/C(r,s), both scaled by r*C(r,s).
    let start_exact = w_scaled(r, s, 2) == (1 - si) * ri * c + si * c;
    let end_exact = w_scaled(r, s, end) == (1 - si) * ri * c + (ri - 1) * ri;
    let w_start = w_value(r, s, 2.0);
    let w_end = w_value(r, s, end as f64);
    let (lo, hi) = (2.0, end as f64);
    let ws: Vec<f64> = (0..grid_points)
        .map(|i| w_value(r, s, lo + (hi - lo) * i as f64 / (grid_points - 1) as f64))
        .collect();
    let degenerate = end == 2;
    let convex = degenerate || ws.windows(3).all(|x| x[0] - 2.0 * x[1] + x[2] > 0.0);
    let max = ws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_at_start = (max - w_start).abs() <= 1e-12 * w_start.abs().max(1.0);
    let all_negative = ws.iter().all(|&w| w < 0.0);
    let ordered = w_start >= w_end;
    let pass = start_exact && end_exact && ordered && convex && max_at_start && all_negative;
    WReport {
        r,
        s,
        grid_points,
        w_start,
        w_end,
        start_exact,
        end_exact,
        ordered,
        convex,
        max_at_start,
        all_negative,
        pass,
    }
}
