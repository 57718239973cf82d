//! Topology-based subgraph samplers and the Kolmogorov-Smirnov D-statistic.
//!
//! All samplers traverse the undirected view of the graph. BFS, snowball and
//! ISRW return node-induced subgraphs; SRW and RWF keep only the edges their
//! walk traversed.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;

use crate::ecdf::Ecdf;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng::{rng_from_seed, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SampleMethod {
    #[default]
    Bfs,
    Srw,
    Rwf,
    Isrw,
    Snowball,
}

impl FromStr for SampleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bfs" => Ok(SampleMethod::Bfs),
            "srw" => Ok(SampleMethod::Srw),
            "rwf" => Ok(SampleMethod::Rwf),
            "isrw" => Ok(SampleMethod::Isrw),
            "sb" | "snowball" => Ok(SampleMethod::Snowball),
            other => Err(Error::Config(format!("unknown sampler `{other}`"))),
        }
    }
}

impl fmt::Display for SampleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleMethod::Bfs => "bfs",
            SampleMethod::Srw => "srw",
            SampleMethod::Rwf => "rwf",
            SampleMethod::Isrw => "isrw",
            SampleMethod::Snowball => "sb",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSpec {
    pub method: SampleMethod,
    /// Target node fraction φ in (0, 1].
    pub fraction: f64,
    /// Probability of jumping back to the walk's start (RWF only).
    pub flyback_p: f64,
    /// Neighbors added per expansion (snowball only).
    pub snowball_limit: usize,
    /// Start node; a uniform-random node when `None`.
    pub root: Option<NodeId>,
    pub rng_seed: u64,
}

impl SampleSpec {
    pub const DEFAULT_FLYBACK: f64 = 0.15;
    pub const DEFAULT_SNOWBALL_LIMIT: usize = 5;

    pub fn new(method: SampleMethod, fraction: f64, rng_seed: u64) -> Self {
        SampleSpec {
            method,
            fraction,
            flyback_p: Self::DEFAULT_FLYBACK,
            snowball_limit: Self::DEFAULT_SNOWBALL_LIMIT,
            root: None,
            rng_seed,
        }
    }

    pub fn with_root(mut self, root: NodeId) -> Self {
        self.root = Some(root);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::InvalidSampleSpec(format!(
                "fraction {} not in (0, 1]",
                self.fraction
            )));
        }
        if !(0.0..1.0).contains(&self.flyback_p) {
            return Err(Error::InvalidSampleSpec(format!(
                "flyback probability {} not in [0, 1)",
                self.flyback_p
            )));
        }
        if self.snowball_limit == 0 {
            return Err(Error::InvalidSampleSpec("snowball limit must be >= 1".into()));
        }
        Ok(())
    }
}

/// Consecutive walk steps without a new node before the walk restarts, per node of `g`.
const STALL_FACTOR: usize = 100;

/// Draws a subgraph with exactly `ceil(fraction * n)` nodes.
pub fn sample_subgraph(g: &Graph, spec: &SampleSpec) -> Result<Graph> {
    spec.validate()?;
    if g.m() == 0 {
        return Err(Error::NoEdges);
    }
    let n = g.n();
    if spec.fraction * (n as f64) < 2.0 {
        return Err(Error::SampleTooSmall {
            target: (spec.fraction * n as f64).ceil() as usize,
            available: n,
        });
    }
    if let Some(root) = spec.root {
        g.check_node(root)?;
    }
    let target = ((spec.fraction * n as f64).ceil() as usize).min(n);
    let adj: Vec<Vec<NodeId>> = g.nodes().map(|v| g.undirected_neighbors(v)).collect();
    let mut state = Collector::new(n, rng_from_seed(spec.rng_seed));
    let root = match spec.root {
        Some(r) => r,
        None => state.random_node(),
    };

    match spec.method {
        SampleMethod::Bfs => {
            frontier_sample(&adj, &mut state, root, target, None);
            Ok(g.induced_subgraph(&state.order))
        }
        SampleMethod::Snowball => {
            frontier_sample(&adj, &mut state, root, target, Some(spec.snowball_limit));
            Ok(g.induced_subgraph(&state.order))
        }
        SampleMethod::Isrw => {
            walk_sample(&adj, &mut state, root, target, 0.0);
            Ok(g.induced_subgraph(&state.order))
        }
        SampleMethod::Srw | SampleMethod::Rwf => {
            let flyback = if spec.method == SampleMethod::Rwf {
                spec.flyback_p
            } else {
                0.0
            };
            let steps = walk_sample(&adj, &mut state, root, target, flyback);
            let lookup = g.edge_index_map();
            let mut kept = Vec::with_capacity(steps.len());
            for (a, b) in steps {
                if let Some(&i) = lookup.get(&(a, b)).or_else(|| lookup.get(&(b, a))) {
                    kept.push(i);
                }
            }
            Ok(g.edge_subgraph(&state.order, &kept))
        }
    }
}

struct Collector {
    visited: Vec<bool>,
    order: Vec<NodeId>,
    // unvisited nodes, with positions for O(1) removal
    pool: Vec<NodeId>,
    slot: Vec<usize>,
    rng: Rng,
}

impl Collector {
    fn new(n: usize, rng: Rng) -> Self {
        Collector {
            visited: vec![false; n],
            order: Vec::new(),
            pool: (0..n).map(NodeId::from).collect(),
            slot: (0..n).collect(),
            rng,
        }
    }

    fn below(&mut self, bound: usize) -> usize {
        self.rng.random_range(0..bound as u64) as usize
    }

    fn random_node(&mut self) -> NodeId {
        NodeId::from(self.below(self.visited.len()))
    }

    fn random_unvisited(&mut self) -> NodeId {
        let i = self.below(self.pool.len());
        self.pool[i]
    }

    /// Returns true if `v` was new.
    fn visit(&mut self, v: NodeId) -> bool {
        if self.visited[v.index()] {
            return false;
        }
        self.visited[v.index()] = true;
        self.order.push(v);
        let i = self.slot[v.index()];
        let last = *self.pool.last().expect("pool holds every unvisited node");
        self.pool.swap_remove(i);
        if last != v {
            self.slot[last.index()] = i;
        }
        true
    }
}

fn frontier_sample(
    adj: &[Vec<NodeId>],
    state: &mut Collector,
    root: NodeId,
    target: usize,
    limit: Option<usize>,
) {
    let mut queue = std::collections::VecDeque::new();
    state.visit(root);
    queue.push_back(root);
    while state.order.len() < target {
        let Some(u) = queue.pop_front() else {
            let fresh = state.random_unvisited();
            state.visit(fresh);
            queue.push_back(fresh);
            continue;
        };
        let fresh: Vec<NodeId> = adj[u.index()]
            .iter()
            .copied()
            .filter(|w| !state.visited[w.index()])
            .collect();
        let chosen = match limit {
            Some(l) if fresh.len() > l => {
                let mut picks = index::sample(&mut state.rng, fresh.len(), l).into_vec();
                picks.sort_unstable();
                picks.into_iter().map(|i| fresh[i]).collect()
            }
            _ => fresh,
        };
        for w in chosen {
            if state.order.len() >= target {
                break;
            }
            state.visit(w);
            queue.push_back(w);
        }
    }
}

/// Random walk until `target` nodes are collected. Returns the traversed steps.
fn walk_sample(
    adj: &[Vec<NodeId>],
    state: &mut Collector,
    root: NodeId,
    target: usize,
    flyback: f64,
) -> Vec<(NodeId, NodeId)> {
    let stall_limit = STALL_FACTOR * adj.len();
    let mut steps = Vec::new();
    let mut start = root;
    let mut cur = root;
    let mut stalled = 0usize;
    state.visit(root);
    while state.order.len() < target {
        if stalled >= stall_limit || adj[cur.index()].is_empty() {
            cur = state.random_unvisited();
            start = cur;
            state.visit(cur);
            stalled = 0;
            continue;
        }
        if flyback > 0.0 && state.rng.random::<f64>() < flyback {
            cur = start;
            stalled += 1;
            continue;
        }
        let nb = &adj[cur.index()];
        let next = nb[state.below(nb.len())];
        steps.push((cur, next));
        if state.visit(next) {
            stalled = 0;
        } else {
            stalled += 1;
        }
        cur = next;
    }
    steps
}

/// `max_x |F0(x) - F1(x)|` over the union of both supports.
pub fn ks_d_statistic(f0: &Ecdf, f1: &Ecdf) -> Result<f64> {
    if f0.is_empty() || f1.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let (a, b) = (f0.samples(), f1.samples());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        let diff = (i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs();
        d = d.max(diff);
    }
    Ok(d)
}

/// D-statistic between the degree distributions of a parent graph and a sample.
pub fn degree_d_statistic(parent: &Graph, sample: &Graph) -> Result<f64> {
    ks_d_statistic(&parent.degree_distribution()?, &sample.degree_distribution()?)
}

/// D-statistic between local clustering-coefficient distributions.
pub fn clustering_d_statistic(parent: &Graph, sample: &Graph) -> Result<f64> {
    ks_d_statistic(
        &parent.clustering_distribution()?,
        &sample.clustering_distribution()?,
    )
}
