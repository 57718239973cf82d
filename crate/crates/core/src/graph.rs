//! Immutable weighted graphs in compressed sparse row form.
//!
//! Node ids are dense (`0..n`) and every graph keeps the external id each
//! node was loaded with. Neighbor lists are sorted by [`NodeId`], so every
//! traversal in the crate is deterministic. An undirected edge is stored once
//! in [`Graph::edges`] and appears in both endpoints' neighbor lists; for
//! diffusion it acts as two independent arcs.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::Path;

use crate::ecdf::Ecdf;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    #[inline]
    fn from(i: usize) -> Self {
        NodeId(u32::try_from(i).expect("node index exceeds u32"))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub weight: f64,
}

/// Which adjacency the embedding aggregates over on directed graphs.
/// Undirected graphs ignore this.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NeighborMode {
    #[default]
    Out,
    In,
    Both,
}

impl std::str::FromStr for NeighborMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "out" => Ok(NeighborMode::Out),
            "in" => Ok(NeighborMode::In),
            "both" => Ok(NeighborMode::Both),
            other => Err(Error::Config(format!("unknown neighbor mode `{other}`"))),
        }
    }
}

impl fmt::Display for NeighborMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NeighborMode::Out => "out",
            NeighborMode::In => "in",
            NeighborMode::Both => "both",
        })
    }
}

#[derive(Clone, Debug, Default)]
struct Csr {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
    weights: Vec<f64>,
}

impl Csr {
    fn build(n: usize, arcs: &[(NodeId, NodeId, f64)]) -> Csr {
        let mut offsets = vec![0usize; n + 1];
        for &(s, _, _) in arcs {
            offsets[s.index() + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut slots: Vec<(NodeId, f64)> = vec![(NodeId(0), 0.0); arcs.len()];
        for &(s, t, w) in arcs {
            slots[fill[s.index()]] = (t, w);
            fill[s.index()] += 1;
        }
        for v in 0..n {
            slots[offsets[v]..offsets[v + 1]].sort_by_key(|&(t, _)| t);
        }
        let (targets, weights) = slots.into_iter().unzip();
        Csr {
            offsets,
            targets,
            weights,
        }
    }

    #[inline]
    fn range(&self, v: NodeId) -> Range<usize> {
        self.offsets[v.index()]..self.offsets[v.index() + 1]
    }
}

#[derive(Clone, Debug)]
pub struct Graph {
    directed: bool,
    edges: Vec<Edge>,
    external: Vec<u64>,
    id_map: HashMap<u64, NodeId>,
    out: Csr,
    inc: Csr,
}

impl Graph {
    /// Builds a graph over nodes `0..n` whose external ids equal their index.
    pub fn from_edges<I>(n: usize, directed: bool, edges: I) -> Result<Graph>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        Graph::with_external_ids((0..n as u64).collect(), directed, edges)
    }

    pub(crate) fn with_external_ids<I>(external: Vec<u64>, directed: bool, edges: I) -> Result<Graph>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let n = external.len();
        let mut seen = HashSet::new();
        let mut list = Vec::new();
        for (s, t, w) in edges {
            for node in [s, t] {
                if node >= n {
                    return Err(Error::InvalidNode { node, n });
                }
            }
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::WeightOutOfRange {
                    src: external[s],
                    dst: external[t],
                    weight: w,
                });
            }
            if s == t {
                return Err(Error::SelfLoop(external[s]));
            }
            let key = if directed { (s, t) } else { (s.min(t), s.max(t)) };
            if !seen.insert(key) {
                return Err(Error::DuplicateEdge {
                    src: external[s],
                    dst: external[t],
                });
            }
            list.push(Edge {
                src: NodeId::from(s),
                dst: NodeId::from(t),
                weight: w,
            });
        }

        let mut fwd = Vec::with_capacity(list.len() * if directed { 1 } else { 2 });
        for e in &list {
            fwd.push((e.src, e.dst, e.weight));
            if !directed {
                fwd.push((e.dst, e.src, e.weight));
            }
        }
        let out = Csr::build(n, &fwd);
        let inc = if directed {
            let rev: Vec<_> = list.iter().map(|e| (e.dst, e.src, e.weight)).collect();
            Csr::build(n, &rev)
        } else {
            out.clone()
        };
        let id_map = external
            .iter()
            .enumerate()
            .map(|(i, &x)| (x, NodeId::from(i)))
            .collect();
        Ok(Graph {
            directed,
            edges: list,
            external,
            id_map,
            out,
            inc,
        })
    }

    pub fn n(&self) -> usize {
        self.external.len()
    }

    /// Number of logical edges.
    pub fn m(&self) -> usize {
        self.edges.len()
    }

    /// Number of directed arcs: `m` for directed graphs, `2m` for undirected.
    pub fn num_arcs(&self) -> usize {
        self.out.targets.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.n()).map(NodeId::from)
    }

    pub fn external_id(&self, v: NodeId) -> u64 {
        self.external[v.index()]
    }

    pub fn node_of(&self, external: u64) -> Option<NodeId> {
        self.id_map.get(&external).copied()
    }

    pub fn check_node(&self, v: NodeId) -> Result<()> {
        if v.index() < self.n() {
            Ok(())
        } else {
            Err(Error::InvalidNode {
                node: v.index(),
                n: self.n(),
            })
        }
    }

    /// Out-neighbors (both directions for undirected graphs), sorted.
    #[inline]
    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.out.targets[self.out.range(v)]
    }

    #[inline]
    pub fn neighbor_weights(&self, v: NodeId) -> &[f64] {
        &self.out.weights[self.out.range(v)]
    }

    #[inline]
    pub fn in_neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.inc.targets[self.inc.range(v)]
    }

    #[inline]
    pub fn in_weights(&self, v: NodeId) -> &[f64] {
        &self.inc.weights[self.inc.range(v)]
    }

    /// Global arc indices of `v`'s outgoing arcs.
    #[inline]
    pub fn out_arcs(&self, v: NodeId) -> Range<usize> {
        self.out.range(v)
    }

    #[inline]
    pub fn arc_target(&self, arc: usize) -> NodeId {
        self.out.targets[arc]
    }

    #[inline]
    pub fn arc_weight(&self, arc: usize) -> f64 {
        self.out.weights[arc]
    }

    /// `(neighbor, weight)` pairs for the embedding's aggregation set.
    pub fn embedding_neighbors(
        &self,
        v: NodeId,
        mode: NeighborMode,
    ) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        let out = self.neighbors(v).iter().copied().zip(self.neighbor_weights(v).iter().copied());
        let inc = self.in_neighbors(v).iter().copied().zip(self.in_weights(v).iter().copied());
        let (take_out, take_in) = match (self.directed, mode) {
            (false, _) | (true, NeighborMode::Out) => (true, false),
            (true, NeighborMode::In) => (false, true),
            (true, NeighborMode::Both) => (true, true),
        };
        out.filter(move |_| take_out).chain(inc.filter(move |_| take_in))
    }

    /// Out-degree for directed graphs, degree for undirected ones.
    #[inline]
    pub fn degree(&self, v: NodeId) -> usize {
        self.out.range(v).len()
    }

    /// Undirected view of the adjacency: out- and in-neighbors merged, sorted, unique.
    pub fn undirected_neighbors(&self, v: NodeId) -> Vec<NodeId> {
        if !self.directed {
            return self.neighbors(v).to_vec();
        }
        let mut all: Vec<NodeId> = self.neighbors(v).iter().chain(self.in_neighbors(v)).copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    /// `m/n` for directed graphs, `2m/n` for undirected.
    pub fn average_degree(&self) -> Result<f64> {
        if self.n() == 0 {
            return Err(Error::EmptyGraph);
        }
        Ok(self.num_arcs() as f64 / self.n() as f64)
    }

    pub fn degree_distribution(&self) -> Result<Ecdf> {
        if self.n() == 0 {
            return Err(Error::EmptyGraph);
        }
        Ecdf::from_counts(self.nodes().map(|v| self.degree(v)))
    }

    /// Local clustering coefficients on the undirected view.
    pub fn clustering_distribution(&self) -> Result<Ecdf> {
        if self.n() == 0 {
            return Err(Error::EmptyGraph);
        }
        let adj: Vec<Vec<NodeId>> = self.nodes().map(|v| self.undirected_neighbors(v)).collect();
        let coeffs = adj
            .iter()
            .map(|nb| {
                let d = nb.len();
                if d < 2 {
                    return 0.0;
                }
                let mut links = 0usize;
                for (i, &a) in nb.iter().enumerate() {
                    for &b in &nb[i + 1..] {
                        if adj[a.index()].binary_search(&b).is_ok() {
                            links += 1;
                        }
                    }
                }
                2.0 * links as f64 / (d * (d - 1)) as f64
            })
            .collect();
        Ecdf::new(coeffs)
    }

    /// Subgraph on `nodes` keeping every edge with both endpoints inside.
    /// Nodes are relabeled in increasing original-id order; external ids carry over.
    pub fn induced_subgraph(&self, nodes: &[NodeId]) -> Graph {
        let (order, local) = self.relabel(nodes);
        let edges = self.edges.iter().filter_map(|e| {
            Some((*local.get(&e.src)?, *local.get(&e.dst)?, e.weight))
        });
        let external = order.iter().map(|&v| self.external_id(v)).collect();
        Graph::with_external_ids(external, self.directed, edges.collect::<Vec<_>>())
            .expect("subgraph of a valid graph is valid")
    }

    /// Subgraph on `nodes` keeping only the listed edges (indices into [`Graph::edges`]).
    pub fn edge_subgraph(&self, nodes: &[NodeId], edge_indices: &[usize]) -> Graph {
        let (order, local) = self.relabel(nodes);
        let mut idx = edge_indices.to_vec();
        idx.sort_unstable();
        idx.dedup();
        let edges: Vec<_> = idx
            .iter()
            .map(|&i| {
                let e = self.edges[i];
                (local[&e.src], local[&e.dst], e.weight)
            })
            .collect();
        let external = order.iter().map(|&v| self.external_id(v)).collect();
        Graph::with_external_ids(external, self.directed, edges)
            .expect("subgraph of a valid graph is valid")
    }

    fn relabel(&self, nodes: &[NodeId]) -> (Vec<NodeId>, HashMap<NodeId, usize>) {
        let mut order = nodes.to_vec();
        order.sort_unstable();
        order.dedup();
        let local = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        (order, local)
    }

    /// Index into [`Graph::edges`] of the logical edge behind an arc `src -> dst`.
    pub(crate) fn edge_index_map(&self) -> HashMap<(NodeId, NodeId), usize> {
        let mut map = HashMap::with_capacity(self.edges.len() * 2);
        for (i, e) in self.edges.iter().enumerate() {
            map.insert((e.src, e.dst), i);
            if !self.directed {
                map.insert((e.dst, e.src), i);
            }
        }
        map
    }

    pub fn read_file(path: impl AsRef<Path>, directed: bool, default_weight: f64) -> Result<Graph> {
        let file = File::open(path)?;
        load_edge_list(BufReader::new(file), directed, default_weight)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::io::BufWriter::new(File::create(path)?);
        write_edge_list(self, &mut file)?;
        file.flush()?;
        Ok(())
    }
}

/// Marker comment declaring a node; keeps isolated nodes and the node order
/// intact across a round trip.
const NODE_DIRECTIVE: &str = "#@node";

/// Reads `u v` or `u v w` lines. Lines starting with `#` are comments, except
/// that `#@node <id>` declares a (possibly isolated) node.
pub fn load_edge_list<R: BufRead>(reader: R, directed: bool, default_weight: f64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&default_weight) {
        return Err(Error::Config(format!(
            "default weight {default_weight} outside [0, 1]"
        )));
    }
    let mut external: Vec<u64> = Vec::new();
    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut intern = |x: u64, external: &mut Vec<u64>| -> usize {
        *index.entry(x).or_insert_with(|| {
            external.push(x);
            external.len() - 1
        })
    };
    let mut edges = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix(NODE_DIRECTIVE) {
            let id = parse_id(rest.trim(), lineno)?;
            intern(id, &mut external);
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let (u, v, w) = match fields.as_slice() {
            [u, v] => (parse_id(u, lineno)?, parse_id(v, lineno)?, default_weight),
            [u, v, w] => {
                let w: f64 = w.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    reason: format!("bad weight `{w}`"),
                })?;
                (parse_id(u, lineno)?, parse_id(v, lineno)?, w)
            }
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    reason: format!("expected `u v [w]`, got {} fields", fields.len()),
                })
            }
        };
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::WeightOutOfRange { src: u, dst: v, weight: w });
        }
        let s = intern(u, &mut external);
        let t = intern(v, &mut external);
        edges.push((s, t, w));
    }
    Graph::with_external_ids(external, directed, edges)
}

fn parse_id(s: &str, line: usize) -> Result<u64> {
    s.parse().map_err(|_| Error::Parse {
        line,
        reason: format!("bad node id `{s}`"),
    })
}

/// Writes external ids and weights. Weights use the shortest decimal form that
/// parses back to the identical `f64`.
pub fn write_edge_list<W: Write>(g: &Graph, out: &mut W) -> Result<()> {
    writeln!(
        out,
        "# n={} m={} directed={}",
        g.n(),
        g.m(),
        g.is_directed()
    )?;
    // Readers number nodes by first appearance; declare every node up front
    // when that order would not reproduce ours.
    let mut seen = vec![false; g.n()];
    let mut next = 0;
    let mut in_order = true;
    for e in g.edges() {
        for v in [e.src, e.dst] {
            if !seen[v.index()] {
                seen[v.index()] = true;
                in_order &= v.index() == next;
                next += 1;
            }
        }
    }
    if !in_order || next != g.n() {
        for v in g.nodes() {
            writeln!(out, "{NODE_DIRECTIVE} {}", g.external_id(v))?;
        }
    }
    for e in g.edges() {
        writeln!(
            out,
            "{} {} {}",
            g.external_id(e.src),
            g.external_id(e.dst),
            e.weight
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, directed: bool) -> Result<Graph> {
        load_edge_list(text.as_bytes(), directed, 0.5)
    }

    #[test]
    fn default_weight_applied() {
        let g = load("0 1\n1 2\n", true).unwrap();
        assert_eq!((g.n(), g.m()), (3, 2));
        assert!(g.edges().iter().all(|e| e.weight == 0.5));
    }

    #[test]
    fn empty_stream() {
        let g = load("", false).unwrap();
        assert_eq!((g.n(), g.m()), (0, 0));
    }

    #[test]
    fn ids_are_remapped_densely() {
        let g = load("# header\n7 9 0.3\n", true).unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.node_of(7), Some(NodeId(0)));
        assert_eq!(g.node_of(9), Some(NodeId(1)));
        assert_eq!(g.edges()[0].weight, 0.3);
    }

    #[test]
    fn load_errors() {
        assert!(matches!(load("0 1\n1\n", true), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(load("0 x\n", true), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(load("0 1 1.5\n", true), Err(Error::WeightOutOfRange { .. })));
        assert!(matches!(load("0 1 -0.1\n", true), Err(Error::WeightOutOfRange { .. })));
        assert!(matches!(load("3 3\n", true), Err(Error::SelfLoop(3))));
        assert!(matches!(load("0 1\n0 1\n", true), Err(Error::DuplicateEdge { .. })));
        assert!(matches!(load("0 1\n1 0\n", false), Err(Error::DuplicateEdge { .. })));
        // opposite arcs are distinct in a directed graph
        assert!(load("0 1\n1 0\n", true).is_ok());
    }

    #[test]
    fn average_degrees() {
        let path = Graph::from_edges(3, false, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        assert!((path.average_degree().unwrap() - 4.0 / 3.0).abs() < 1e-15);
        let star = Graph::from_edges(5, false, (1..5).map(|i| (0, i, 1.0))).unwrap();
        assert_eq!(star.average_degree().unwrap(), 1.6);
        let cycle = Graph::from_edges(3, true, [(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap();
        assert_eq!(cycle.average_degree().unwrap(), 1.0);
        let empty = Graph::from_edges(0, false, []).unwrap();
        assert!(matches!(empty.average_degree(), Err(Error::EmptyGraph)));
    }

    #[test]
    fn degree_cdfs() {
        let star = Graph::from_edges(5, false, (1..5).map(|i| (0, i, 1.0))).unwrap();
        let f = star.degree_distribution().unwrap();
        assert!((f.eval(1.0) - 0.8).abs() < 1e-15);
        assert_eq!(f.eval(4.0), 1.0);

        let ring = Graph::from_edges(6, false, (0..6).map(|i| (i, (i + 1) % 6, 1.0))).unwrap();
        let f = ring.degree_distribution().unwrap();
        assert_eq!(f.eval(2.0), 1.0);
        assert_eq!(f.eval(1.0), 0.0);

        let isolated = Graph::from_edges(2, false, []).unwrap();
        assert_eq!(isolated.degree_distribution().unwrap().eval(0.0), 1.0);
        assert!(Graph::from_edges(0, true, []).unwrap().degree_distribution().is_err());
    }

    #[test]
    fn neighbor_lists_sorted_and_symmetric() {
        let g = Graph::from_edges(4, false, [(3, 0, 0.1), (0, 2, 0.2), (1, 0, 0.3)]).unwrap();
        assert_eq!(g.neighbors(NodeId(0)), &[NodeId(1), NodeId(2), NodeId(3)]);
        assert_eq!(g.neighbor_weights(NodeId(0)), &[0.3, 0.2, 0.1]);
        assert_eq!(g.neighbors(NodeId(3)), &[NodeId(0)]);
        let total: usize = g.nodes().map(|v| g.degree(v)).sum();
        assert_eq!(total, 2 * g.m());
    }

    #[test]
    fn embedding_neighbor_modes() {
        let g = Graph::from_edges(3, true, [(0, 1, 0.1), (2, 0, 0.2)]).unwrap();
        let collect = |mode| g.embedding_neighbors(NodeId(0), mode).collect::<Vec<_>>();
        assert_eq!(collect(NeighborMode::Out), vec![(NodeId(1), 0.1)]);
        assert_eq!(collect(NeighborMode::In), vec![(NodeId(2), 0.2)]);
        assert_eq!(collect(NeighborMode::Both).len(), 2);
    }

    #[test]
    fn isolated_nodes_survive_round_trip() {
        let g = Graph::from_edges(4, true, [(0, 1, 0.25)]).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        let h = load_edge_list(buf.as_slice(), true, 0.5).unwrap();
        assert_eq!(h.n(), 4);
        assert_eq!(h.m(), 1);
    }

    #[test]
    fn clustering_of_triangle_with_tail() {
        let g = Graph::from_edges(4, false, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (2, 3, 1.0)]).unwrap();
        let f = g.clustering_distribution().unwrap();
        // coefficients: 1, 1, 1/3, 0
        assert_eq!(f.eval(0.0), 0.25);
        assert_eq!(f.eval(0.5), 0.5);
        assert_eq!(f.eval(1.0), 1.0);
    }
}
