//! Synthetic graph generators.

use std::collections::HashSet;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng::rng_from_seed;

/// Undirected preferential-attachment graph.
///
/// Starts from a clique on `attach + 1` nodes; every later node links to
/// `attach` distinct earlier nodes picked with probability proportional to
/// degree. Node ids follow arrival order, so the first `t` nodes induce the
/// graph as it was at time `t`.
pub fn preferential_attachment(n: usize, attach: usize, weight: f64, rng_seed: u64) -> Result<Graph> {
    if attach == 0 {
        return Err(Error::Config("attachment count must be >= 1".into()));
    }
    if n <= attach {
        return Err(Error::Config(format!("need n > attach, got n={n}, attach={attach}")));
    }
    let mut rng = rng_from_seed(rng_seed);
    let mut edges = Vec::with_capacity(n * attach);
    let mut ends: Vec<usize> = Vec::with_capacity(2 * n * attach);
    for u in 0..=attach {
        for v in u + 1..=attach {
            edges.push((u, v, weight));
            ends.extend([u, v]);
        }
    }
    let mut chosen = HashSet::with_capacity(attach);
    for v in attach + 1..n {
        chosen.clear();
        while chosen.len() < attach {
            chosen.insert(ends[rng.random_range(0..ends.len())]);
        }
        let mut targets: Vec<usize> = chosen.iter().copied().collect();
        targets.sort_unstable();
        for u in targets {
            edges.push((u, v, weight));
            ends.extend([u, v]);
        }
    }
    Graph::from_edges(n, false, edges)
}

/// G(n, p) with every edge weighted `weight`.
pub fn erdos_renyi(n: usize, p: f64, directed: bool, weight: f64, rng_seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("edge probability {p} not in [0, 1]")));
    }
    let mut rng = rng_from_seed(rng_seed);
    let mut edges = Vec::new();
    for u in 0..n {
        let from = if directed { 0 } else { u + 1 };
        for v in from..n {
            if u != v && rng.random::<f64>() < p {
                edges.push((u, v, weight));
            }
        }
    }
    Graph::from_edges(n, directed, edges)
}

/// The graph induced by the first `t` nodes of an arrival-ordered graph.
pub fn prefix_snapshot(g: &Graph, t: usize) -> Result<Graph> {
    if t > g.n() {
        return Err(Error::InvalidNode { node: t, n: g.n() });
    }
    let nodes: Vec<NodeId> = (0..t).map(NodeId::from).collect();
    Ok(g.induced_subgraph(&nodes))
}
