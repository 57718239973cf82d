//! Seed selection from a trained Q function, the stability measurements that
//! compare one-shot and re-embedding selection, and lazy greedy baselines.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;

use crate::diffusion::{DiffusionModel, Simulator};
use crate::dqn::argmax_candidate;
use crate::embedding::{embed_with, q_values, EmbedConfig, Neighborhood, Theta};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng::{rng_from_seed, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    TopK,
    Iterative,
    Celf,
    Random,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::TopK, Method::Iterative, Method::Celf, Method::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::TopK => "topk",
            Method::Iterative => "iterative",
            Method::Celf => "celf",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "topk" | "top-k" | "disco" => Ok(Method::TopK),
            "iterative" => Ok(Method::Iterative),
            "celf" => Ok(Method::Celf),
            "random" => Ok(Method::Random),
            other => Err(Error::Config(format!("unknown selection method '{other}'"))),
        }
    }
}

/// Selected seeds in pick order. `scores[i]` is the Q value of `nodes[i]` when
/// it was chosen (the marginal gain for CELF, 0 for random picks).
#[derive(Clone, Debug, PartialEq)]
pub struct SeedSet {
    pub nodes: Vec<NodeId>,
    pub scores: Vec<f64>,
    pub method: Method,
}

impl SeedSet {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn check_budget(g: &Graph, k: usize) -> Result<()> {
    if k > g.n() {
        return Err(Error::BudgetTooLarge { k, n: g.n() });
    }
    Ok(())
}

/// Indices of the `k` largest entries, ordered by value descending and then
/// by index ascending.
pub fn top_k_indices(q: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..q.len()).collect();
    let by_rank = |&a: &usize, &b: &usize| q[b].total_cmp(&q[a]).then(a.cmp(&b));
    if k < order.len() {
        order.select_nth_unstable_by(k, by_rank);
        order.truncate(k);
    }
    order.sort_unstable_by(by_rank);
    order
}

/// One embedding pass with no seeds, then the `k` best nodes by Q.
pub fn select_topk(g: &Graph, theta: &Theta, k: usize, cfg: &EmbedConfig) -> Result<SeedSet> {
    check_budget(g, k)?;
    let hood = Neighborhood::new(g, cfg.neighbors);
    let q = q_values(&embed_with(&hood, &[], theta, cfg.iterations)?, theta)?;
    let picks = top_k_indices(&q, k);
    Ok(SeedSet {
        scores: picks.iter().map(|&v| q[v]).collect(),
        nodes: picks.into_iter().map(NodeId::from).collect(),
        method: Method::TopK,
    })
}

/// Re-embeds after every insertion and takes the best remaining node.
pub fn select_iterative(g: &Graph, theta: &Theta, k: usize, cfg: &EmbedConfig) -> Result<SeedSet> {
    check_budget(g, k)?;
    let hood = Neighborhood::new(g, cfg.neighbors);
    let mut nodes = Vec::with_capacity(k);
    let mut scores = Vec::with_capacity(k);
    for _ in 0..k {
        let state = embed_with(&hood, &nodes, theta, cfg.iterations)?;
        let q = q_values(&state, theta)?;
        let v = argmax_candidate(&q, &state.seeds).ok_or(Error::NoCandidates)?;
        nodes.push(v);
        scores.push(q[v.index()]);
    }
    Ok(SeedSet {
        nodes,
        scores,
        method: Method::Iterative,
    })
}

/// Uniform sample of `k` distinct nodes.
pub fn random_seeds(g: &Graph, k: usize, rng: &mut Rng) -> Result<SeedSet> {
    check_budget(g, k)?;
    let nodes = index::sample(rng, g.n(), k).into_iter().map(NodeId::from).collect();
    Ok(SeedSet {
        nodes,
        scores: vec![0.0; k],
        method: Method::Random,
    })
}

/// How greedy baselines evaluate spread.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpreadOracle {
    Exact,
    /// Paired Monte Carlo with a fixed stream, so every gain comes from the
    /// same sampled worlds.
    MonteCarlo { runs: usize, rng_seed: u64 },
}

/// Marginal gains within this distance of the best count as ties.
pub fn gain_tolerance(best: f64) -> f64 {
    1e-9 * best.abs().max(1.0)
}

struct GainOracle<'g> {
    sim: Simulator<'g>,
    oracle: SpreadOracle,
    base: Option<f64>,
}

impl GainOracle<'_> {
    fn gain(&mut self, seeds: &[NodeId], v: NodeId) -> Result<f64> {
        match self.oracle {
            SpreadOracle::Exact => {
                let base = match self.base {
                    Some(b) => b,
                    None => *self.base.insert(self.sim.exact(seeds)?),
                };
                let mut with = seeds.to_vec();
                with.push(v);
                Ok(self.sim.exact(&with)? - base)
            }
            SpreadOracle::MonteCarlo { runs, rng_seed } => self.sim.marginal_gain(seeds, v, runs, rng_seed),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    gain: f64,
    node: NodeId,
    round: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain.total_cmp(&other.gain).then(other.node.cmp(&self.node))
    }
}

/// Lazy greedy (CELF). Picks the same nodes as plain greedy that re-evaluates
/// every candidate each round and breaks ties (within [`gain_tolerance`]) by
/// smallest id.
pub fn celf_greedy(g: &Graph, model: DiffusionModel, k: usize, oracle: SpreadOracle) -> Result<SeedSet> {
    check_budget(g, k)?;
    let mut eval = GainOracle {
        sim: Simulator::new(g, model)?,
        oracle,
        base: None,
    };
    let mut seeds = Vec::with_capacity(k);
    let mut scores = Vec::with_capacity(k);
    let mut heap = BinaryHeap::with_capacity(g.n());
    if k > 0 {
        for v in g.nodes() {
            heap.push(Entry {
                gain: eval.gain(&seeds, v)?,
                node: v,
                round: 0,
            });
        }
    }
    let mut band = Vec::new();
    for round in 0..k {
        eval.base = None;
        loop {
            let mut top = heap.pop().expect("k <= n");
            if top.round != round {
                top.gain = eval.gain(&seeds, top.node)?;
                top.round = round;
                heap.push(top);
                continue;
            }
            let floor = top.gain - gain_tolerance(top.gain);
            band.clear();
            band.push(top);
            while heap.peek().is_some_and(|e| e.gain >= floor) {
                band.push(heap.pop().expect("peeked"));
            }
            if band.iter().all(|e| e.round == round) {
                let best = *band.iter().min_by_key(|e| e.node).expect("non-empty");
                heap.extend(band.drain(..).filter(|e| e.node != best.node));
                seeds.push(best.node);
                scores.push(best.gain);
                break;
            }
            for mut e in band.drain(..) {
                if e.round != round {
                    e.gain = eval.gain(&seeds, e.node)?;
                    e.round = round;
                }
                heap.push(e);
            }
        }
    }
    Ok(SeedSet {
        nodes: seeds,
        scores,
        method: Method::Celf,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityConfig {
    /// Random pairs per insertion when the candidate set exceeds
    /// `full_pairs_limit` nodes.
    pub pair_sample: usize,
    pub full_pairs_limit: usize,
    pub eval_runs: usize,
    pub model: DiffusionModel,
    pub rng_seed: u64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            pair_sample: 10_000,
            full_pairs_limit: 2_000,
            eval_runs: 10_000,
            model: DiffusionModel::ic(),
            rng_seed: 0,
        }
    }
}

/// Order changes caused by one insertion of the iterative procedure.
#[derive(Clone, Debug, PartialEq)]
pub struct InsertionStats {
    /// 1-based position of the inserted node.
    pub step: usize,
    pub inserted: NodeId,
    pub pairs: usize,
    pub preserved: usize,
    pub mean_gap: f64,
    pub max_gap: f64,
    /// Pairs whose normalized Q difference exceeded `max_gap` and still flipped.
    pub conditional_violations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub k: usize,
    pub delta_rank: f64,
    pub delta_inf: f64,
    pub topk_spread: f64,
    pub iterative_spread: f64,
    /// `Σ_{i=1..4} d^i / n` with `d` the average degree.
    pub claim_bound: f64,
    /// `Σ_{i=1..4} 2i·d^i / n²`.
    pub proof_bound: f64,
    /// Mean over insertions of the per-insertion mean gap.
    pub observed_gap: f64,
    pub max_gap: f64,
    pub insertions: Vec<InsertionStats>,
}

impl StabilityReport {
    /// Fraction of insertions whose mean gap lies below `claim_bound`.
    pub fn fraction_within_claim(&self) -> f64 {
        if self.insertions.is_empty() {
            return 1.0;
        }
        let ok = self.insertions.iter().filter(|s| s.mean_gap < self.claim_bound).count();
        ok as f64 / self.insertions.len() as f64
    }
}

pub fn claim_bounds(g: &Graph) -> Result<(f64, f64)> {
    let d = g.average_degree()?;
    let n = g.n() as f64;
    let mut claim = 0.0;
    let mut proof = 0.0;
    for i in 1..=4 {
        let p = d.powi(i);
        claim += p / n;
        proof += 2.0 * i as f64 * p / (n * n);
    }
    Ok((claim, proof))
}

fn normalized(q: &[f64], nodes: &[usize]) -> Vec<f64> {
    let (lo, hi) = nodes
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(q[v]), hi.max(q[v])));
    let span = hi - lo;
    nodes
        .iter()
        .map(|&v| if span > 0.0 { (q[v] - lo) / span } else { 0.0 })
        .collect()
}

fn compare_orders(before: &[f64], after: &[f64], pairs: &mut dyn Iterator<Item = (usize, usize)>) -> (usize, usize, f64, f64, Vec<(f64, f64)>) {
    let mut count = 0;
    let mut kept = 0;
    let mut gap_sum = 0.0;
    let mut gap_max: f64 = 0.0;
    let mut diffs = Vec::new();
    for (a, b) in pairs {
        let d0 = before[a] - before[b];
        let d1 = after[a] - after[b];
        count += 1;
        if d0 * d1 >= 0.0 {
            kept += 1;
        }
        let gap = (d0 - d1).abs();
        gap_sum += gap;
        gap_max = gap_max.max(gap);
        diffs.push((d0, d1));
    }
    (count, kept, gap_sum, gap_max, diffs)
}

/// Runs the iterative procedure for `k` insertions and measures how much each
/// re-embedding perturbs the Q order of the remaining nodes.
pub fn stability_report(
    g: &Graph,
    theta: &Theta,
    k: usize,
    embed: &EmbedConfig,
    cfg: &StabilityConfig,
) -> Result<StabilityReport> {
    if k == 0 {
        return Err(Error::Config("stability needs k >= 1".into()));
    }
    if g.n() < k + 2 {
        return Err(Error::NoCandidates);
    }
    let hood = Neighborhood::new(g, embed.neighbors);
    let mut rng = rng_from_seed(cfg.rng_seed);
    let mut seeds: Vec<NodeId> = Vec::with_capacity(k);
    let mut state = embed_with(&hood, &seeds, theta, embed.iterations)?;
    let mut q = q_values(&state, theta)?;
    let mut insertions = Vec::with_capacity(k);
    for step in 1..=k {
        let v = argmax_candidate(&q, &state.seeds).ok_or(Error::NoCandidates)?;
        seeds.push(v);
        let next_state = embed_with(&hood, &seeds, theta, embed.iterations)?;
        let next_q = q_values(&next_state, theta)?;
        let free: Vec<usize> = (0..g.n()).filter(|&u| !next_state.seeds[u]).collect();
        let before = normalized(&q, &free);
        let after = normalized(&next_q, &free);
        let m = free.len();
        let (pairs, preserved, gap_sum, max_gap, diffs) = if m <= cfg.full_pairs_limit {
            compare_orders(&before, &after, &mut (0..m).flat_map(|a| (a + 1..m).map(move |b| (a, b))))
        } else {
            let draws: Vec<(usize, usize)> = (0..cfg.pair_sample)
                .map(|_| {
                    let a = rng.random_range(0..m);
                    let mut b = rng.random_range(0..m - 1);
                    if b >= a {
                        b += 1;
                    }
                    (a, b)
                })
                .collect();
            compare_orders(&before, &after, &mut draws.into_iter())
        };
        let conditional_violations = diffs
            .iter()
            .filter(|(d0, d1)| d0.abs() > max_gap && d0 * d1 < 0.0)
            .count();
        insertions.push(InsertionStats {
            step,
            inserted: v,
            pairs,
            preserved,
            mean_gap: if pairs > 0 { gap_sum / pairs as f64 } else { 0.0 },
            max_gap,
            conditional_violations,
        });
        state = next_state;
        q = next_q;
    }

    let iterative: Vec<NodeId> = seeds;
    let topk = select_topk(g, theta, k, embed)?.nodes;
    let sim = Simulator::new(g, cfg.model)?;
    let eval_seed = rng.random::<u64>();
    let topk_spread = sim.estimate(&topk, cfg.eval_runs, eval_seed)?.mean;
    let iterative_spread = sim.estimate(&iterative, cfg.eval_runs, eval_seed)?.mean;
    let total_pairs: usize = insertions.iter().map(|s| s.pairs).sum();
    let total_kept: usize = insertions.iter().map(|s| s.preserved).sum();
    let (claim_bound, proof_bound) = claim_bounds(g)?;
    Ok(StabilityReport {
        k,
        delta_rank: if total_pairs > 0 {
            total_kept as f64 / total_pairs as f64
        } else {
            1.0
        },
        delta_inf: topk_spread / iterative_spread,
        topk_spread,
        iterative_spread,
        claim_bound,
        proof_bound,
        observed_gap: insertions.iter().map(|s| s.mean_gap).sum::<f64>() / insertions.len() as f64,
        max_gap: insertions.iter().map(|s| s.max_gap).fold(0.0, f64::max),
        insertions,
    })
}
