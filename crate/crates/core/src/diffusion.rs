//! Independent cascade and linear threshold diffusion: single cascades,
//! Monte-Carlo spread estimates, and exact live-edge enumeration for tiny graphs.
//!
//! Every simulation run `r` draws its randomness from
//! `RunStream::new(rng_seed, r)`: arc `a` is live in IC iff `u(a) < w(a)`, and
//! node `v`'s LT threshold is `u(num_arcs + v)`. Estimates built from the same
//! `rng_seed` therefore share worlds run by run, which is what makes
//! [`marginal_gain`] a paired (common random numbers) estimator.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng::RunStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ModelKind {
    #[default]
    IndependentCascade,
    LinearThreshold,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ic" => Ok(ModelKind::IndependentCascade),
            "lt" => Ok(ModelKind::LinearThreshold),
            other => Err(Error::Config(format!("unknown diffusion model `{other}`"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::IndependentCascade => "ic",
            ModelKind::LinearThreshold => "lt",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct DiffusionModel {
    pub kind: ModelKind,
    /// LT only: scale a node's incoming weights down to sum 1 instead of rejecting them.
    pub lt_renormalize: bool,
}

impl DiffusionModel {
    pub fn ic() -> Self {
        DiffusionModel {
            kind: ModelKind::IndependentCascade,
            lt_renormalize: false,
        }
    }

    pub fn lt(renormalize: bool) -> Self {
        DiffusionModel {
            kind: ModelKind::LinearThreshold,
            lt_renormalize: renormalize,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpreadEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub runs: usize,
}

const LT_SUM_TOLERANCE: f64 = 1e-9;

/// A diffusion model bound to one graph, with LT weights already validated.
#[derive(Clone, Debug)]
pub struct Simulator<'g> {
    graph: &'g Graph,
    kind: ModelKind,
    // per target node multiplier on incoming LT weights
    lt_scale: Vec<f64>,
}

/// Reusable buffers for repeated cascades on one graph.
#[derive(Clone, Debug, Default)]
pub struct Scratch {
    active: Vec<bool>,
    weight_in: Vec<f64>,
    touched: Vec<NodeId>,
    activated: Vec<NodeId>,
}

impl Scratch {
    pub fn new(n: usize) -> Self {
        Scratch {
            active: vec![false; n],
            weight_in: vec![0.0; n],
            touched: Vec::new(),
            activated: Vec::new(),
        }
    }

    fn reset(&mut self) {
        for &v in &self.touched {
            self.weight_in[v.index()] = 0.0;
        }
        for &v in &self.activated {
            self.active[v.index()] = false;
        }
        self.touched.clear();
        self.activated.clear();
    }
}

impl<'g> Simulator<'g> {
    pub fn new(graph: &'g Graph, model: DiffusionModel) -> Result<Self> {
        let mut lt_scale = Vec::new();
        if model.kind == ModelKind::LinearThreshold {
            lt_scale = vec![1.0; graph.n()];
            for v in graph.nodes() {
                let sum: f64 = graph.in_weights(v).iter().sum();
                if sum > 1.0 + LT_SUM_TOLERANCE {
                    if !model.lt_renormalize {
                        return Err(Error::LtWeightsExceedOne { node: v, sum });
                    }
                    lt_scale[v.index()] = 1.0 / sum;
                }
            }
        }
        Ok(Simulator {
            graph,
            kind: model.kind,
            lt_scale,
        })
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn scratch(&self) -> Scratch {
        Scratch::new(self.graph.n())
    }

    fn check_seeds(&self, seeds: &[NodeId]) -> Result<()> {
        seeds.iter().try_for_each(|&s| self.graph.check_node(s))
    }

    /// One cascade; returns the number of activated nodes. The activated set
    /// is left in `scratch.activated` until the next call.
    pub fn cascade(&self, seeds: &[NodeId], stream: RunStream, scratch: &mut Scratch) -> usize {
        scratch.reset();
        let g = self.graph;
        let mut queue = VecDeque::new();
        for &s in seeds {
            if !scratch.active[s.index()] {
                scratch.active[s.index()] = true;
                scratch.activated.push(s);
                queue.push_back(s);
            }
        }
        let threshold_base = g.num_arcs() as u64;
        while let Some(u) = queue.pop_front() {
            for arc in g.out_arcs(u) {
                let v = g.arc_target(arc);
                if scratch.active[v.index()] {
                    continue;
                }
                let w = g.arc_weight(arc);
                let fires = match self.kind {
                    ModelKind::IndependentCascade => w > 0.0 && stream.uniform(arc as u64) < w,
                    ModelKind::LinearThreshold => {
                        let slot = &mut scratch.weight_in[v.index()];
                        if *slot == 0.0 {
                            scratch.touched.push(v);
                        }
                        *slot += w * self.lt_scale[v.index()];
                        let theta = stream.uniform(threshold_base + v.index() as u64);
                        *slot > 0.0 && *slot >= theta
                    }
                };
                if fires {
                    scratch.active[v.index()] = true;
                    scratch.activated.push(v);
                    queue.push_back(v);
                }
            }
        }
        scratch.activated.len()
    }

    pub fn estimate(&self, seeds: &[NodeId], runs: usize, rng_seed: u64) -> Result<SpreadEstimate> {
        if runs == 0 {
            return Err(Error::Config("simulation count must be >= 1".into()));
        }
        self.check_seeds(seeds)?;
        let mut scratch = self.scratch();
        let mut sum: u64 = 0;
        let mut sum_sq: u128 = 0;
        for r in 0..runs {
            let c = self.cascade(seeds, RunStream::new(rng_seed, r as u64), &mut scratch) as u64;
            sum += c;
            sum_sq += (c as u128) * (c as u128);
        }
        Ok(summarize(sum as i128, sum_sq, runs))
    }

    /// Paired estimate of `σ(S ∪ {v}) - σ(S)`.
    pub fn marginal_gain(&self, seeds: &[NodeId], v: NodeId, runs: usize, rng_seed: u64) -> Result<f64> {
        Ok(self.marginal_gain_estimate(seeds, v, runs, rng_seed)?.mean)
    }

    pub fn marginal_gain_estimate(
        &self,
        seeds: &[NodeId],
        v: NodeId,
        runs: usize,
        rng_seed: u64,
    ) -> Result<SpreadEstimate> {
        if runs == 0 {
            return Err(Error::Config("simulation count must be >= 1".into()));
        }
        self.check_seeds(seeds)?;
        self.graph.check_node(v)?;
        if seeds.contains(&v) {
            return Err(Error::AlreadySeed(v));
        }
        let mut with: Vec<NodeId> = seeds.to_vec();
        with.push(v);
        let mut scratch = self.scratch();
        let mut sum: i128 = 0;
        let mut sum_sq: u128 = 0;
        for r in 0..runs {
            let stream = RunStream::new(rng_seed, r as u64);
            let base = self.cascade(seeds, stream, &mut scratch) as i64;
            let more = self.cascade(&with, stream, &mut scratch) as i64;
            let d = more - base;
            sum += d as i128;
            sum_sq += (d * d) as u128;
        }
        Ok(summarize(sum, sum_sq, runs))
    }

    /// Exact `σ(S)` by enumerating live-edge worlds.
    pub fn exact(&self, seeds: &[NodeId]) -> Result<f64> {
        self.check_seeds(seeds)?;
        match self.kind {
            ModelKind::IndependentCascade => self.exact_ic(seeds),
            ModelKind::LinearThreshold => self.exact_lt(seeds),
        }
    }

    fn exact_ic(&self, seeds: &[NodeId]) -> Result<f64> {
        let g = self.graph;
        let uncertain: Vec<usize> = (0..g.num_arcs())
            .filter(|&a| {
                let w = g.arc_weight(a);
                w > 0.0 && w < 1.0
            })
            .collect();
        if uncertain.len() > MAX_ENUMERATION_BITS {
            return Err(Error::TooLarge(format!(
                "{} uncertain arcs, at most {MAX_ENUMERATION_BITS} enumerable",
                uncertain.len()
            )));
        }
        let mut live: Vec<bool> = (0..g.num_arcs()).map(|a| g.arc_weight(a) >= 1.0).collect();
        let mut reach = Reach::new(g.n());
        let mut total = 0.0;
        for mask in 0u64..(1u64 << uncertain.len()) {
            let mut p = 1.0;
            for (bit, &a) in uncertain.iter().enumerate() {
                let on = mask >> bit & 1 == 1;
                live[a] = on;
                let w = g.arc_weight(a);
                p *= if on { w } else { 1.0 - w };
            }
            let count = reach.count(seeds, |u, out| {
                for a in g.out_arcs(u) {
                    if live[a] {
                        out.push(g.arc_target(a));
                    }
                }
            });
            total += p * count as f64;
        }
        Ok(total)
    }

    fn exact_lt(&self, seeds: &[NodeId]) -> Result<f64> {
        let g = self.graph;
        // each node picks one incoming arc (by in-neighbor) or none
        let mut options: Vec<Vec<(Option<NodeId>, f64)>> = Vec::with_capacity(g.n());
        let mut worlds: f64 = 1.0;
        for v in g.nodes() {
            let scale = self.lt_scale[v.index()];
            let mut opts: Vec<(Option<NodeId>, f64)> = g
                .in_neighbors(v)
                .iter()
                .zip(g.in_weights(v))
                .filter(|(_, &w)| w > 0.0)
                .map(|(&u, &w)| (Some(u), w * scale))
                .collect();
            let rest = 1.0 - opts.iter().map(|o| o.1).sum::<f64>();
            if rest > LT_SUM_TOLERANCE {
                opts.push((None, rest));
            }
            if opts.is_empty() {
                opts.push((None, 1.0));
            }
            worlds *= (g.in_neighbors(v).len() + 1) as f64;
            options.push(opts);
        }
        if worlds > (1u64 << MAX_ENUMERATION_BITS) as f64 {
            return Err(Error::TooLarge(format!(
                "{worlds} live-edge worlds, at most 2^{MAX_ENUMERATION_BITS} enumerable"
            )));
        }
        let n = g.n();
        let mut choice = vec![0usize; n];
        let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        let mut reach = Reach::new(n);
        let mut total = 0.0;
        loop {
            let mut p = 1.0;
            for c in children.iter_mut() {
                c.clear();
            }
            for v in 0..n {
                let (parent, pv) = options[v][choice[v]];
                p *= pv;
                if let Some(u) = parent {
                    children[u.index()].push(NodeId::from(v));
                }
            }
            let count = reach.count(seeds, |u, out| out.extend_from_slice(&children[u.index()]));
            total += p * count as f64;

            // mixed-radix increment
            let mut i = 0;
            loop {
                if i == n {
                    return Ok(total);
                }
                choice[i] += 1;
                if choice[i] < options[i].len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }
}

/// Largest enumeration exponent accepted by the exact oracles.
pub const MAX_ENUMERATION_BITS: usize = 20;

struct Reach {
    seen: Vec<bool>,
    stack: Vec<NodeId>,
    buf: Vec<NodeId>,
}

impl Reach {
    fn new(n: usize) -> Self {
        Reach {
            seen: vec![false; n],
            stack: Vec::new(),
            buf: Vec::new(),
        }
    }

    fn count<F: FnMut(NodeId, &mut Vec<NodeId>)>(&mut self, seeds: &[NodeId], mut next: F) -> usize {
        self.seen.iter_mut().for_each(|s| *s = false);
        let mut count = 0;
        for &s in seeds {
            if !self.seen[s.index()] {
                self.seen[s.index()] = true;
                count += 1;
                self.stack.push(s);
            }
        }
        while let Some(u) = self.stack.pop() {
            self.buf.clear();
            next(u, &mut self.buf);
            for &v in &self.buf {
                if !self.seen[v.index()] {
                    self.seen[v.index()] = true;
                    count += 1;
                    self.stack.push(v);
                }
            }
        }
        count
    }
}

fn summarize(sum: i128, sum_sq: u128, runs: usize) -> SpreadEstimate {
    let r = runs as f64;
    let mean = sum as f64 / r;
    let stderr = if runs > 1 {
        // exact integer numerator: R·Σx² − (Σx)²
        let num = (runs as i128) * (sum_sq as i128) - sum * sum;
        let var = num.max(0) as f64 / (r * (r - 1.0));
        (var / r).sqrt()
    } else {
        0.0
    };
    SpreadEstimate { mean, stderr, runs }
}

/// Activated node set (sorted) of one cascade.
pub fn simulate_once(g: &Graph, model: DiffusionModel, seeds: &[NodeId], rng_seed: u64) -> Result<Vec<NodeId>> {
    let sim = Simulator::new(g, model)?;
    sim.check_seeds(seeds)?;
    let mut scratch = sim.scratch();
    sim.cascade(seeds, RunStream::new(rng_seed, 0), &mut scratch);
    let mut out = scratch.activated.clone();
    out.sort_unstable();
    Ok(out)
}

pub fn estimate_spread(
    g: &Graph,
    model: DiffusionModel,
    seeds: &[NodeId],
    runs: usize,
    rng_seed: u64,
) -> Result<SpreadEstimate> {
    Simulator::new(g, model)?.estimate(seeds, runs, rng_seed)
}

pub fn exact_spread(g: &Graph, model: DiffusionModel, seeds: &[NodeId]) -> Result<f64> {
    Simulator::new(g, model)?.exact(seeds)
}

pub fn marginal_gain(
    g: &Graph,
    model: DiffusionModel,
    seeds: &[NodeId],
    v: NodeId,
    runs: usize,
    rng_seed: u64,
) -> Result<f64> {
    Simulator::new(g, model)?.marginal_gain(seeds, v, runs, rng_seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    fn triangle() -> Graph {
        Graph::from_edges(3, true, [(0, 1, 0.5), (0, 2, 0.5), (1, 2, 0.5)]).unwrap()
    }

    #[test]
    fn certain_and_impossible_cascades() {
        let path = Graph::from_edges(3, true, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        assert_eq!(simulate_once(&path, DiffusionModel::ic(), &ids(&[0]), 5).unwrap(), ids(&[0, 1, 2]));
        let dead = Graph::from_edges(3, true, [(0, 1, 0.0), (1, 2, 0.0), (0, 2, 0.0)]).unwrap();
        for seed in 0..20 {
            assert_eq!(simulate_once(&dead, DiffusionModel::ic(), &ids(&[0]), seed).unwrap(), ids(&[0]));
        }
        let edge = Graph::from_edges(2, true, [(0, 1, 1.0)]).unwrap();
        for seed in 0..50 {
            assert_eq!(simulate_once(&edge, DiffusionModel::lt(false), &ids(&[0]), seed).unwrap(), ids(&[0, 1]));
        }
    }

    #[test]
    fn invalid_seed() {
        let g = triangle();
        assert!(matches!(
            simulate_once(&g, DiffusionModel::ic(), &ids(&[3]), 0),
            Err(Error::InvalidNode { node: 3, .. })
        ));
    }

    #[test]
    fn zero_weights_give_exact_mean() {
        let g = Graph::from_edges(5, true, [(0, 1, 0.0), (1, 2, 0.0), (2, 3, 0.0), (3, 4, 0.0)]).unwrap();
        let est = estimate_spread(&g, DiffusionModel::ic(), &ids(&[0, 2, 4]), 100, 1).unwrap();
        assert_eq!(est.mean, 3.0);
        assert_eq!(est.stderr, 0.0);
        assert_eq!(est.runs, 100);
    }

    #[test]
    fn exact_values() {
        let edge = Graph::from_edges(2, true, [(0, 1, 0.5)]).unwrap();
        assert_eq!(exact_spread(&edge, DiffusionModel::ic(), &ids(&[0])).unwrap(), 1.5);
        assert_eq!(exact_spread(&edge, DiffusionModel::lt(false), &ids(&[0])).unwrap(), 1.5);
        let t = triangle();
        assert_eq!(exact_spread(&t, DiffusionModel::ic(), &ids(&[0])).unwrap(), 2.125);
        assert_eq!(exact_spread(&t, DiffusionModel::ic(), &ids(&[1])).unwrap(), 1.5);
        assert_eq!(exact_spread(&t, DiffusionModel::ic(), &ids(&[2])).unwrap(), 1.0);
        assert_eq!(exact_spread(&t, DiffusionModel::ic(), &ids(&[0, 1])).unwrap(), 2.75);
    }

    #[test]
    fn mc_matches_exact_on_small_cases() {
        let edge = Graph::from_edges(2, true, [(0, 1, 0.5)]).unwrap();
        let est = estimate_spread(&edge, DiffusionModel::ic(), &ids(&[0]), 10_000, 17).unwrap();
        assert!((est.mean - 1.5).abs() <= 3.0 * est.stderr, "{est:?}");
        let est = estimate_spread(&triangle(), DiffusionModel::ic(), &ids(&[0]), 10_000, 17).unwrap();
        assert!((est.mean - 2.125).abs() <= 3.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn lt_weight_validation() {
        let g = Graph::from_edges(3, true, [(0, 2, 0.7), (1, 2, 0.7)]).unwrap();
        assert!(matches!(
            Simulator::new(&g, DiffusionModel::lt(false)),
            Err(Error::LtWeightsExceedOne { .. })
        ));
        assert!(exact_spread(&g, DiffusionModel::lt(false), &ids(&[0])).is_err());
        // renormalized: node 2 picks 0 or 1 with probability 1/2 each
        let s = exact_spread(&g, DiffusionModel::lt(true), &ids(&[0])).unwrap();
        assert!((s - 1.5).abs() < 1e-12);
        let s = exact_spread(&g, DiffusionModel::lt(true), &ids(&[0, 1])).unwrap();
        assert!((s - 3.0).abs() < 1e-12);
    }

    #[test]
    fn marginal_gains() {
        let g = Graph::from_edges(4, true, [(0, 1, 0.0), (1, 2, 0.0)]).unwrap();
        assert_eq!(marginal_gain(&g, DiffusionModel::ic(), &ids(&[0]), NodeId(3), 50, 2).unwrap(), 1.0);
        let path = Graph::from_edges(3, true, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        assert_eq!(marginal_gain(&path, DiffusionModel::ic(), &ids(&[0]), NodeId(2), 50, 2).unwrap(), 0.0);
        assert!(matches!(
            marginal_gain(&path, DiffusionModel::ic(), &ids(&[0]), NodeId(0), 50, 2),
            Err(Error::AlreadySeed(_))
        ));
        let t = triangle();
        let exact = exact_spread(&t, DiffusionModel::ic(), &ids(&[0, 1])).unwrap()
            - exact_spread(&t, DiffusionModel::ic(), &ids(&[0])).unwrap();
        assert_eq!(exact, 0.625);
        let est = Simulator::new(&t, DiffusionModel::ic())
            .unwrap()
            .marginal_gain_estimate(&ids(&[0]), NodeId(1), 10_000, 9)
            .unwrap();
        assert!((est.mean - exact).abs() <= 4.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn undirected_edges_propagate_both_ways() {
        let g = Graph::from_edges(2, false, [(0, 1, 0.5)]).unwrap();
        assert_eq!(exact_spread(&g, DiffusionModel::ic(), &ids(&[1])).unwrap(), 1.5);
        assert_eq!(exact_spread(&g, DiffusionModel::ic(), &ids(&[0])).unwrap(), 1.5);
    }

    #[test]
    fn exact_rejects_large_instances() {
        let g = Graph::from_edges(22, true, (0..21).map(|i| (i, i + 1, 0.5))).unwrap();
        assert!(matches!(exact_spread(&g, DiffusionModel::ic(), &ids(&[0])), Err(Error::TooLarge(_))));
        // certain arcs do not count against the limit
        let g = Graph::from_edges(30, true, (0..29).map(|i| (i, i + 1, 1.0))).unwrap();
        assert_eq!(exact_spread(&g, DiffusionModel::ic(), &ids(&[0])).unwrap(), 30.0);
    }

    #[test]
    fn estimates_are_reproducible() {
        let t = triangle();
        let a = estimate_spread(&t, DiffusionModel::lt(false), &ids(&[0]), 500, 3);
        let b = estimate_spread(&t, DiffusionModel::lt(false), &ids(&[0]), 500, 3);
        assert_eq!(a.unwrap(), b.unwrap());
    }
}
