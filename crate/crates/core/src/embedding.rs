//! Structure2vec-style node embedding and the Q scoring function.
//!
//! One round of the embedding computes, for every node `v` simultaneously,
//!
//! ```text
//! x_v <- ReLU(α1 · Σ_{u∈N(v)} x_u  +  α2 · Σ_{u∈N(v)} ReLU(α3 · w(v,u))  +  α4 · a_v)
//! ```
//!
//! starting from `x = 0`, where `a_v` flags seed membership. The score of a
//! candidate is
//!
//! ```text
//! Q(v) = β1ᵀ · ReLU([β2 · Σ_u x_u ; β3 · x_v])
//! ```
//!
//! The second term of a round depends only on edge weights and the seed
//! flags, so it is computed once per embedding rather than once per round.
//! [`Tape`] keeps every round's intermediates for reverse-mode gradients.

use ndarray::{s, Array1, Array2, ArrayView1, Axis, Zip};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{Graph, NeighborMode, NodeId};
use crate::rng::rng_from_seed;

pub const DEFAULT_DIMENSION: usize = 64;
pub const DEFAULT_ITERATIONS: usize = 4;
/// Upper end of the open interval parameters are initialized from.
pub const INIT_SCALE: f64 = 0.1;

/// The seven learnable tensors. Matrices are `q × q`; `alpha3`, `alpha4` have
/// length `q`; `beta1` has length `2q` (global half first, node half second).
#[derive(Clone, Debug, PartialEq)]
pub struct Theta {
    pub alpha1: Array2<f64>,
    pub alpha2: Array2<f64>,
    pub alpha3: Array1<f64>,
    pub alpha4: Array1<f64>,
    pub beta1: Array1<f64>,
    pub beta2: Array2<f64>,
    pub beta3: Array2<f64>,
}

pub const TENSOR_NAMES: [&str; 7] = ["alpha1", "alpha2", "alpha3", "alpha4", "beta1", "beta2", "beta3"];

impl Theta {
    pub fn zeros(q: usize) -> Theta {
        Theta {
            alpha1: Array2::zeros((q, q)),
            alpha2: Array2::zeros((q, q)),
            alpha3: Array1::zeros(q),
            alpha4: Array1::zeros(q),
            beta1: Array1::zeros(2 * q),
            beta2: Array2::zeros((q, q)),
            beta3: Array2::zeros((q, q)),
        }
    }

    pub fn q(&self) -> usize {
        self.alpha3.len()
    }

    /// Checks every tensor against `q`.
    pub fn validate(&self) -> Result<()> {
        let q = self.q();
        let square = |name: &str, m: &Array2<f64>| {
            if m.dim() != (q, q) {
                Err(Error::Dimension(format!("{name} is {:?}, expected ({q}, {q})", m.dim())))
            } else {
                Ok(())
            }
        };
        square("alpha1", &self.alpha1)?;
        square("alpha2", &self.alpha2)?;
        square("beta2", &self.beta2)?;
        square("beta3", &self.beta3)?;
        if self.alpha4.len() != q {
            return Err(Error::Dimension(format!("alpha4 has {} entries, expected {q}", self.alpha4.len())));
        }
        if self.beta1.len() != 2 * q {
            return Err(Error::Dimension(format!("beta1 has {} entries, expected {}", self.beta1.len(), 2 * q)));
        }
        if q == 0 {
            return Err(Error::Dimension("embedding dimension is 0".into()));
        }
        Ok(())
    }

    /// Flat row-major views in [`TENSOR_NAMES`] order.
    pub fn tensors(&self) -> [(&'static str, &[f64]); 7] {
        [
            ("alpha1", self.alpha1.as_slice().expect("standard layout")),
            ("alpha2", self.alpha2.as_slice().expect("standard layout")),
            ("alpha3", self.alpha3.as_slice().expect("standard layout")),
            ("alpha4", self.alpha4.as_slice().expect("standard layout")),
            ("beta1", self.beta1.as_slice().expect("standard layout")),
            ("beta2", self.beta2.as_slice().expect("standard layout")),
            ("beta3", self.beta3.as_slice().expect("standard layout")),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 7] {
        [
            ("alpha1", self.alpha1.as_slice_mut().expect("standard layout")),
            ("alpha2", self.alpha2.as_slice_mut().expect("standard layout")),
            ("alpha3", self.alpha3.as_slice_mut().expect("standard layout")),
            ("alpha4", self.alpha4.as_slice_mut().expect("standard layout")),
            ("beta1", self.beta1.as_slice_mut().expect("standard layout")),
            ("beta2", self.beta2.as_slice_mut().expect("standard layout")),
            ("beta3", self.beta3.as_slice_mut().expect("standard layout")),
        ]
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += scale * other`.
    pub fn scaled_add(&mut self, scale: f64, other: &Theta) {
        self.alpha1.scaled_add(scale, &other.alpha1);
        self.alpha2.scaled_add(scale, &other.alpha2);
        self.alpha3.scaled_add(scale, &other.alpha3);
        self.alpha4.scaled_add(scale, &other.alpha4);
        self.beta1.scaled_add(scale, &other.beta1);
        self.beta2.scaled_add(scale, &other.beta2);
        self.beta3.scaled_add(scale, &other.beta3);
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| t.iter().any(|x| !x.is_finite()))
            .map(|(name, _)| name)
    }
}

/// Every entry drawn uniformly from the open interval `(0, 0.1)`.
pub fn init_theta(q: usize, rng_seed: u64) -> Result<Theta> {
    if q == 0 {
        return Err(Error::Dimension("embedding dimension must be >= 1".into()));
    }
    let mut rng = rng_from_seed(rng_seed);
    let mut theta = Theta::zeros(q);
    for (_, t) in theta.tensors_mut() {
        for x in t.iter_mut() {
            *x = loop {
                let u = INIT_SCALE * rng.random::<f64>();
                if u > 0.0 {
                    break u;
                }
            };
        }
    }
    Ok(theta)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmbedConfig {
    pub iterations: usize,
    pub neighbors: NeighborMode,
}

impl EmbedConfig {
    pub fn new(iterations: usize) -> Self {
        EmbedConfig {
            iterations,
            neighbors: NeighborMode::Out,
        }
    }
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig::new(DEFAULT_ITERATIONS)
    }
}

/// Aggregation lists `N(v)` with edge weights, flattened.
#[derive(Clone, Debug)]
pub struct Neighborhood {
    offsets: Vec<usize>,
    nodes: Vec<u32>,
    weights: Vec<f64>,
}

impl Neighborhood {
    pub fn new(g: &Graph, mode: NeighborMode) -> Self {
        let mut offsets = Vec::with_capacity(g.n() + 1);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for v in g.nodes() {
            for (u, w) in g.embedding_neighbors(v, mode) {
                nodes.push(u.0);
                weights.push(w);
            }
            offsets.push(nodes.len());
        }
        Neighborhood { offsets, nodes, weights }
    }

    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    fn of(&self, v: usize) -> (&[u32], &[f64]) {
        let r = self.offsets[v]..self.offsets[v + 1];
        (&self.nodes[r.clone()], &self.weights[r])
    }

    /// Row `v` of the result is `Σ_{u∈N(v)} x_u`.
    fn aggregate(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(x.dim());
        for (v, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            let (nb, _) = self.of(v);
            for &u in nb {
                row += &x.row(u as usize);
            }
        }
        out
    }

    /// Transpose of [`Neighborhood::aggregate`]: `out_u += Σ_{v : u∈N(v)} d_v`.
    fn scatter(&self, d: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(d.dim());
        for v in 0..self.n() {
            let (nb, _) = self.of(v);
            let dv = d.row(v);
            for &u in nb {
                let mut row = out.row_mut(u as usize);
                row += &dv;
            }
        }
        out
    }

    /// Row `v` is `Σ_{u∈N(v)} ReLU(α3 · w(v,u))`.
    fn edge_features(&self, alpha3: &Array1<f64>) -> Array2<f64> {
        let q = alpha3.len();
        let mut out = Array2::zeros((self.n(), q));
        for (v, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            let (_, ws) = self.of(v);
            for &w in ws {
                Zip::from(&mut row).and(alpha3).for_each(|r, &a| *r += relu(a * w));
            }
        }
        out
    }
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingState {
    /// `n × q`, row `v` is `x_v` after the last round.
    pub x: Array2<f64>,
    /// Seed indicators `a_v`.
    pub seeds: Vec<bool>,
    pub iterations_done: usize,
}

impl EmbeddingState {
    pub fn embedding(&self, v: NodeId) -> ArrayView1<'_, f64> {
        self.x.row(v.index())
    }
}

/// Intermediates of one embedding pass, for reverse-mode differentiation.
#[derive(Clone, Debug)]
pub(crate) struct Tape {
    edge: Array2<f64>,
    // pre-activation of each round; index i holds round i+1
    pre: Vec<Array2<f64>>,
    // aggregated inputs of each round; round 1 reads x^(0) = 0
    agg: Vec<Array2<f64>>,
    pub(crate) state: EmbeddingState,
}

fn seed_flags(n: usize, seeds: &[NodeId]) -> Result<Vec<bool>> {
    let mut flags = vec![false; n];
    for &s in seeds {
        if s.index() >= n {
            return Err(Error::InvalidNode { node: s.index(), n });
        }
        flags[s.index()] = true;
    }
    Ok(flags)
}

fn forward(nb: &Neighborhood, seeds: &[NodeId], theta: &Theta, iterations: usize, record: bool) -> Result<Tape> {
    theta.validate()?;
    let n = nb.n();
    let q = theta.q();
    let flags = seed_flags(n, seeds)?;
    let edge = nb.edge_features(&theta.alpha3);
    let mut constant = edge.dot(&theta.alpha2.t());
    for (v, &a) in flags.iter().enumerate() {
        if a {
            let mut row = constant.row_mut(v);
            row += &theta.alpha4;
        }
    }
    let mut x: Array2<f64> = Array2::zeros((n, q));
    let mut pre = Vec::new();
    let mut agg = Vec::new();
    for round in 1..=iterations {
        let (s, p) = if round == 1 {
            (Array2::zeros((n, q)), constant.clone())
        } else {
            let s = nb.aggregate(&x);
            let p = s.dot(&theta.alpha1.t()) + &constant;
            (s, p)
        };
        x = p.mapv(relu);
        if record {
            pre.push(p);
            agg.push(s);
        }
    }
    Ok(Tape {
        edge,
        pre,
        agg,
        state: EmbeddingState {
            x,
            seeds: flags,
            iterations_done: iterations,
        },
    })
}

/// Runs `cfg.iterations` synchronous rounds from `x = 0`.
pub fn embed(g: &Graph, seeds: &[NodeId], theta: &Theta, cfg: &EmbedConfig) -> Result<EmbeddingState> {
    embed_with(&Neighborhood::new(g, cfg.neighbors), seeds, theta, cfg.iterations)
}

pub fn embed_with(nb: &Neighborhood, seeds: &[NodeId], theta: &Theta, iterations: usize) -> Result<EmbeddingState> {
    Ok(forward(nb, seeds, theta, iterations, false)?.state)
}

pub(crate) fn embed_recorded(nb: &Neighborhood, seeds: &[NodeId], theta: &Theta, iterations: usize) -> Result<Tape> {
    forward(nb, seeds, theta, iterations, true)
}

/// `Q(v)` for every node.
pub fn q_values(state: &EmbeddingState, theta: &Theta) -> Result<Vec<f64>> {
    theta.validate()?;
    let q = theta.q();
    if state.x.ncols() != q {
        return Err(Error::Dimension(format!(
            "embedding has {} columns, theta expects {q}",
            state.x.ncols()
        )));
    }
    let total = state.x.sum_axis(Axis(0));
    let global = theta.beta1.slice(s![..q]).dot(&theta.beta2.dot(&total).mapv(relu));
    let local = state.x.dot(&theta.beta3.t()).mapv(relu).dot(&theta.beta1.slice(s![q..]));
    Ok(local.iter().map(|l| global + l).collect())
}

/// Q of a single node, without scoring the rest of the graph.
pub(crate) fn q_value_of(state: &EmbeddingState, theta: &Theta, v: NodeId) -> f64 {
    let q = theta.q();
    let total = state.x.sum_axis(Axis(0));
    let global = theta.beta1.slice(s![..q]).dot(&theta.beta2.dot(&total).mapv(relu));
    let local = theta.beta3.dot(&state.x.row(v.index())).mapv(relu).dot(&theta.beta1.slice(s![q..]));
    global + local
}

/// Adds `upstream · ∂Q(v)/∂θ` into `grad`.
pub(crate) fn backprop_q(nb: &Neighborhood, tape: &Tape, theta: &Theta, v: NodeId, upstream: f64, grad: &mut Theta) {
    let q = theta.q();
    let x = &tape.state.x;
    let (n, _) = x.dim();
    let beta1_global = theta.beta1.slice(s![..q]);
    let beta1_node = theta.beta1.slice(s![q..]);

    let total = x.sum_axis(Axis(0));
    let z_global = theta.beta2.dot(&total);
    let xv = x.row(v.index());
    let z_node = theta.beta3.dot(&xv);

    {
        let mut g1 = grad.beta1.slice_mut(s![..q]);
        g1.scaled_add(upstream, &z_global.mapv(relu));
    }
    {
        let mut g1 = grad.beta1.slice_mut(s![q..]);
        g1.scaled_add(upstream, &z_node.mapv(relu));
    }
    let dz_global = Zip::from(&z_global)
        .and(&beta1_global)
        .map_collect(|&z, &b| if z > 0.0 { upstream * b } else { 0.0 });
    let dz_node = Zip::from(&z_node)
        .and(&beta1_node)
        .map_collect(|&z, &b| if z > 0.0 { upstream * b } else { 0.0 });
    outer_add(&mut grad.beta2, &dz_global, &total.view());
    outer_add(&mut grad.beta3, &dz_node, &xv);
    let d_total = theta.beta2.t().dot(&dz_global);
    let d_xv = theta.beta3.t().dot(&dz_node);

    let mut dx = Array2::from_shape_fn((n, q), |(_, c)| d_total[c]);
    {
        let mut row = dx.row_mut(v.index());
        row += &d_xv;
    }

    let mut d_const: Array2<f64> = Array2::zeros((n, q));
    for round in (1..=tape.pre.len()).rev() {
        let pre = &tape.pre[round - 1];
        let dp = Zip::from(&dx).and(pre).map_collect(|&d, &p| if p > 0.0 { d } else { 0.0 });
        d_const += &dp;
        if round > 1 {
            grad.alpha1 += &dp.t().dot(&tape.agg[round - 1]);
            let ds = dp.dot(&theta.alpha1);
            dx = nb.scatter(&ds);
        }
    }

    grad.alpha2 += &d_const.t().dot(&tape.edge);
    for (vi, &a) in tape.state.seeds.iter().enumerate() {
        if a {
            grad.alpha4 += &d_const.row(vi);
        }
    }
    let d_edge = d_const.dot(&theta.alpha2);
    for vi in 0..n {
        let (_, ws) = nb.of(vi);
        let de = d_edge.row(vi);
        for &w in ws {
            Zip::from(&mut grad.alpha3)
                .and(&theta.alpha3)
                .and(&de)
                .for_each(|g, &a, &d| {
                    if a * w > 0.0 {
                        *g += d * w;
                    }
                });
        }
    }
}

fn outer_add(m: &mut Array2<f64>, left: &Array1<f64>, right: &ArrayView1<f64>) {
    for (i, mut row) in m.axis_iter_mut(Axis(0)).enumerate() {
        let l = left[i];
        if l != 0.0 {
            row.scaled_add(l, right);
        }
    }
}
