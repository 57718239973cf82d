#![allow(dead_code)]

use disco::dqn::{n_step_target, Transition};
use disco::embedding::{EmbedConfig, Theta};
use disco::diffusion::{exact_spread, DiffusionModel};
use disco::graph::{Graph, NodeId};
use disco::selection::gain_tolerance;
use rand::Rng as _;

/// Straight-line forward pass over `Vec<f64>`s. Returns the Q vector and the
/// smallest magnitude among the non-zero pre-activations that were seen.
pub fn naive_q(g: &Graph, seeds: &[NodeId], theta: &Theta, iterations: usize) -> (Vec<f64>, f64) {
    let (q, closest, _) = naive_q_pattern(g, seeds, theta, iterations);
    (q, closest)
}

/// As [`naive_q`], also returning which pre-activations were positive.
pub fn naive_q_pattern(g: &Graph, seeds: &[NodeId], theta: &Theta, iterations: usize) -> (Vec<f64>, f64, Vec<bool>) {
    let n = g.n();
    let q = theta.alpha3.len();
    let mut nbrs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for e in g.edges() {
        nbrs[e.src.index()].push((e.dst.index(), e.weight));
        if !g.is_directed() {
            nbrs[e.dst.index()].push((e.src.index(), e.weight));
        }
    }
    let mut seed = vec![0.0; n];
    for s in seeds {
        seed[s.index()] = 1.0;
    }
    let mut closest = f64::INFINITY;
    let mut pattern = Vec::new();
    let mut watch = |p: f64| {
        if p != 0.0 {
            closest = closest.min(p.abs());
        }
        pattern.push(p > 0.0);
    };
    let relu = |p: f64| if p > 0.0 { p } else { 0.0 };

    let mut x = vec![vec![0.0; q]; n];
    for _ in 0..iterations {
        let mut next = vec![vec![0.0; q]; n];
        for v in 0..n {
            let mut agg = vec![0.0; q];
            let mut edge = vec![0.0; q];
            for &(u, w) in &nbrs[v] {
                for r in 0..q {
                    agg[r] += x[u][r];
                    let p = theta.alpha3[r] * w;
                    watch(p);
                    edge[r] += relu(p);
                }
            }
            for r in 0..q {
                let mut p = theta.alpha4[r] * seed[v];
                for c in 0..q {
                    p += theta.alpha1[[r, c]] * agg[c] + theta.alpha2[[r, c]] * edge[c];
                }
                watch(p);
                next[v][r] = relu(p);
            }
        }
        x = next;
    }

    let mut total = vec![0.0; q];
    for xv in &x {
        for r in 0..q {
            total[r] += xv[r];
        }
    }
    let mut global = 0.0;
    for r in 0..q {
        let mut p = 0.0;
        for c in 0..q {
            p += theta.beta2[[r, c]] * total[c];
        }
        watch(p);
        global += theta.beta1[r] * relu(p);
    }
    let mut out = Vec::with_capacity(n);
    for xv in &x {
        let mut qv = global;
        for r in 0..q {
            let mut p = 0.0;
            for c in 0..q {
                p += theta.beta3[[r, c]] * xv[c];
            }
            watch(p);
            qv += theta.beta1[q + r] * relu(p);
        }
        out.push(qv);
    }
    (out, closest, pattern)
}

/// Exact spread by brute force over every live-edge world of an IC model.
pub fn brute_ic(g: &Graph, seeds: &[NodeId]) -> f64 {
    let mut arcs = Vec::new();
    for e in g.edges() {
        arcs.push((e.src.index(), e.dst.index(), e.weight));
        if !g.is_directed() {
            arcs.push((e.dst.index(), e.src.index(), e.weight));
        }
    }
    assert!(arcs.len() <= 24);
    let mut total = 0.0;
    for mask in 0u64..(1 << arcs.len()) {
        let mut p = 1.0;
        for (i, a) in arcs.iter().enumerate() {
            p *= if mask >> i & 1 == 1 { a.2 } else { 1.0 - a.2 };
        }
        if p == 0.0 {
            continue;
        }
        let live: Vec<_> = arcs
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, a)| (a.0, a.1))
            .collect();
        total += p * reach(g.n(), &live, seeds) as f64;
    }
    total
}

/// Exact spread of an LT model: each node keeps at most one incoming arc.
pub fn brute_lt(g: &Graph, seeds: &[NodeId]) -> f64 {
    let n = g.n();
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for e in g.edges() {
        incoming[e.dst.index()].push((e.src.index(), e.weight));
        if !g.is_directed() {
            incoming[e.src.index()].push((e.dst.index(), e.weight));
        }
    }
    let mut total = 0.0;
    let mut choice = vec![0usize; n];
    loop {
        let mut p = 1.0;
        let mut live = Vec::new();
        for v in 0..n {
            let c = choice[v];
            if c < incoming[v].len() {
                p *= incoming[v][c].1;
                live.push((incoming[v][c].0, v));
            } else {
                p *= 1.0 - incoming[v].iter().map(|x| x.1).sum::<f64>();
            }
        }
        if p > 0.0 {
            total += p * reach(n, &live, seeds) as f64;
        }
        let mut v = 0;
        loop {
            if v == n {
                return total;
            }
            choice[v] += 1;
            if choice[v] <= incoming[v].len() {
                break;
            }
            choice[v] = 0;
            v += 1;
        }
    }
}

fn reach(n: usize, live: &[(usize, usize)], seeds: &[NodeId]) -> usize {
    let mut on = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    for s in seeds {
        if !on[s.index()] {
            on[s.index()] = true;
            stack.push(s.index());
        }
    }
    while let Some(u) = stack.pop() {
        for &(a, b) in live {
            if a == u && !on[b] {
                on[b] = true;
                stack.push(b);
            }
        }
    }
    on.iter().filter(|&&b| b).count()
}

/// Parameters drawn uniformly from `(-scale, scale)`.
pub fn signed_theta(q: usize, scale: f64, rng: &mut disco::rng::Rng) -> Theta {
    let mut theta = Theta::zeros(q);
    for (_, t) in theta.tensors_mut() {
        for x in t.iter_mut() {
            *x = rng.random_range(-scale..scale);
        }
    }
    theta
}

pub fn frozen_loss(
    g: &[Graph],
    batch: &[Transition],
    targets: &[f64],
    theta: &Theta,
    iterations: usize,
) -> (f64, f64, Vec<bool>) {
    let mut total = 0.0;
    let mut closest = f64::INFINITY;
    let mut pattern = Vec::new();
    for (t, y) in batch.iter().zip(targets) {
        let (q, c, p) = naive_q_pattern(&g[t.graph], &t.state, theta, iterations);
        closest = closest.min(c);
        pattern.extend(p);
        let e = y - q[t.action.index()];
        total += e * e;
    }
    (total / batch.len() as f64, closest, pattern)
}

/// When a finite-difference probe counts as too close to a ReLU kink.
#[derive(Clone, Copy, Debug)]
pub enum KinkRule {
    /// Reject the point if any non-zero pre-activation is within this distance of 0.
    Margin(f64),
    /// Reject a coordinate whose ±h probes change which units are active.
    SignPattern,
}

pub struct FdPoint {
    pub analytic: f64,
    pub numeric: f64,
}

impl FdPoint {
    pub fn rel_err(&self) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.analytic - self.numeric).abs() / scale
        }
    }
}

/// Central differences on `coords` random coordinates. `None` when the point
/// is rejected by `rule`.
pub fn fd_check(
    graphs: &[Graph],
    batch: &[Transition],
    theta: &Theta,
    analytic: &Theta,
    gamma: f64,
    iterations: usize,
    h: f64,
    rule: KinkRule,
    coords: usize,
    rng: &mut disco::rng::Rng,
) -> Option<Vec<FdPoint>> {
    let cfg = EmbedConfig::new(iterations);
    let targets: Vec<f64> = batch
        .iter()
        .map(|t| n_step_target(t, theta, graphs, gamma, cfg).unwrap())
        .collect();
    let (_, closest, pattern) = frozen_loss(graphs, batch, &targets, theta, iterations);
    if let KinkRule::Margin(margin) = rule {
        if closest < margin {
            return None;
        }
    }
    let sizes: Vec<usize> = theta.tensors().iter().map(|(_, t)| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < coords {
        attempts += 1;
        if attempts > 50 * coords {
            return None;
        }
        let mut flat = rng.random_range(0..total);
        let mut ti = 0;
        while flat >= sizes[ti] {
            flat -= sizes[ti];
            ti += 1;
        }
        let at = |delta: f64| {
            let mut th = theta.clone();
            th.tensors_mut()[ti].1[flat] += delta;
            frozen_loss(graphs, batch, &targets, &th, iterations)
        };
        let (plus, _, pp) = at(h);
        let (minus, _, pm) = at(-h);
        if matches!(rule, KinkRule::SignPattern) && (pp != pattern || pm != pattern) {
            continue;
        }
        out.push(FdPoint {
            analytic: analytic.tensors()[ti].1[flat],
            numeric: (plus - minus) / (2.0 * h),
        });
    }
    Some(out)
}

/// Plain greedy: every round evaluates every candidate exactly.
pub fn naive_greedy(g: &Graph, model: DiffusionModel, k: usize) -> Vec<NodeId> {
    let mut seeds: Vec<NodeId> = Vec::new();
    for _ in 0..k {
        let base = exact_spread(g, model, &seeds).unwrap();
        let gains: Vec<(NodeId, f64)> = g
            .nodes()
            .filter(|v| !seeds.contains(v))
            .map(|v| {
                let mut with = seeds.clone();
                with.push(v);
                (v, exact_spread(g, model, &with).unwrap() - base)
            })
            .collect();
        let best = gains.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        let pick = gains.iter().find(|x| x.1 >= best - gain_tolerance(best)).unwrap().0;
        seeds.push(pick);
    }
    seeds
}

/// Random graph on `n` nodes with at most `max_m` edges and weights from a small grid.
pub fn random_weighted(n: usize, max_m: usize, directed: bool, rng: &mut disco::rng::Rng) -> Graph {
    let mut pairs = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && (directed || u < v) {
                pairs.push((u, v));
            }
        }
    }
    for i in (1..pairs.len()).rev() {
        pairs.swap(i, rng.random_range(0..=i));
    }
    let m = rng.random_range(0..=max_m.min(pairs.len()));
    let edges: Vec<_> = pairs[..m]
        .iter()
        .map(|&(u, v)| (u, v, [0.1, 0.25, 0.5, 1.0][rng.random_range(0..4)]))
        .collect();
    Graph::from_edges(n, directed, edges).unwrap()
}

/// Erdős–Rényi graph with uniform weights in [0.05, 1).
pub fn random_graph(n: usize, p: f64, directed: bool, rng: &mut disco::rng::Rng) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u == v || (!directed && v < u) {
                continue;
            }
            if rng.random::<f64>() < p {
                edges.push((u, v, rng.random_range(0.05..1.0)));
            }
        }
    }
    Graph::from_edges(n, directed, edges).unwrap()
}

/// Transitions with random states, actions and rewards over `graphs`.
pub fn random_batch(graphs: &[Graph], size: usize, rng: &mut disco::rng::Rng) -> Vec<Transition> {
    (0..size)
        .map(|_| {
            let gi = rng.random_range(0..graphs.len());
            let n = graphs[gi].n();
            let mut order: Vec<u32> = (0..n as u32).collect();
            for i in (1..n).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            let s = rng.random_range(0..n - 3);
            let extra = rng.random_range(1..3);
            let ids = |r: &[u32]| r.iter().map(|&v| NodeId(v)).collect::<Vec<_>>();
            Transition {
                graph: gi,
                state: ids(&order[..s]),
                action: NodeId(order[s]),
                reward_sum: rng.random_range(0.0..3.0),
                next_state: ids(&order[..s + extra]),
                terminal: rng.random::<bool>(),
            }
        })
        .collect()
}
