//! n-step deep Q-learning over the embedding-based Q function.
//!
//! An episode builds a seed set of size `k` on one training graph, picking
//! nodes ε-greedily from the current Q values and collecting the marginal
//! spread gain of each pick as its reward. Once `delta` picks separate a
//! state from the present, the transition `(S_j, v_j, R_j + … + R_{j+δ-1},
//! S_{j+δ})` enters the replay memory and one SGD step runs on a uniformly
//! sampled batch. Picks in the last `delta` steps of an episode are stored as
//! terminal transitions carrying the rewards that remain.
//!
//! Targets are treated as constants (semi-gradient), there is no separate
//! target network, and the update is plain SGD.

use std::collections::VecDeque;

use rand::Rng as _;

use crate::diffusion::{DiffusionModel, Simulator};
use crate::embedding::{
    backprop_q, embed_recorded, embed_with, init_theta, q_value_of, q_values, EmbedConfig, Neighborhood, Theta,
    DEFAULT_DIMENSION,
};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng::{rng_from_seed, substream_seed, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    /// Index of the training graph.
    pub graph: usize,
    pub state: Vec<NodeId>,
    pub action: NodeId,
    pub reward_sum: f64,
    pub next_state: Vec<NodeId>,
    pub terminal: bool,
}

/// Bounded FIFO store of transitions, sampled uniformly with replacement.
#[derive(Clone, Debug)]
pub struct ReplayMemory {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayMemory {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn sample(&self, batch_size: usize, rng: &mut Rng) -> Vec<Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..batch_size)
            .map(|_| self.items[rng.random_range(0..self.items.len() as u64) as usize].clone())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Seeds picked per episode (k).
    pub budget: usize,
    pub batch_size: usize,
    pub delta: usize,
    pub gamma: f64,
    pub lr: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_anneal_steps: usize,
    /// Simulations per reward evaluation.
    pub reward_runs: usize,
    pub replay_capacity: usize,
    pub dimension: usize,
    pub embed: EmbedConfig,
    pub model: DiffusionModel,
    /// Rescale each gradient to at most this L2 norm before the SGD step.
    pub grad_clip: Option<f64>,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 100,
            budget: 10,
            batch_size: 64,
            delta: 5,
            gamma: 0.99,
            lr: 0.001,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_anneal_steps: 10_000,
            reward_runs: 100,
            replay_capacity: 10_000,
            dimension: DEFAULT_DIMENSION,
            embed: EmbedConfig::default(),
            model: DiffusionModel::ic(),
            grad_clip: Some(DEFAULT_GRAD_CLIP),
            rng_seed: 0,
        }
    }
}

pub const DEFAULT_GRAD_CLIP: f64 = 1.0;

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail(format!("gamma {} not in (0, 1)", self.gamma));
        }
        if !(0.0 <= self.eps_end && self.eps_end <= self.eps_start && self.eps_start <= 1.0) {
            return fail(format!(
                "need 0 <= eps_end ({}) <= eps_start ({}) <= 1",
                self.eps_end, self.eps_start
            ));
        }
        if self.delta == 0 {
            return fail("delta must be >= 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if self.reward_runs == 0 {
            return fail("reward_runs must be >= 1".into());
        }
        if self.replay_capacity == 0 {
            return fail("replay_capacity must be >= 1".into());
        }
        if self.dimension == 0 {
            return fail("dimension must be >= 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail(format!("learning rate {} must be finite and >= 0", self.lr));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return fail(format!("grad_clip {c} must be positive"));
            }
        }
        Ok(())
    }

    /// Linearly annealed exploration rate after `step` selections.
    pub fn epsilon(&self, step: usize) -> f64 {
        if step >= self.eps_anneal_steps {
            return self.eps_end;
        }
        let decay = step as f64 * (self.eps_start - self.eps_end) / self.eps_anneal_steps as f64;
        (self.eps_start - decay).max(self.eps_end)
    }
}

/// Non-seed node with the largest Q, ties to the smallest id.
pub fn argmax_candidate(q: &[f64], is_seed: &[bool]) -> Option<NodeId> {
    let mut best: Option<(usize, f64)> = None;
    for (v, &qv) in q.iter().enumerate() {
        if is_seed[v] {
            continue;
        }
        match best {
            Some((_, b)) if qv <= b => {}
            _ => best = Some((v, qv)),
        }
    }
    best.map(|(v, _)| NodeId::from(v))
}

/// Uniform non-seed with probability `eps`, otherwise the arg-max candidate.
pub fn epsilon_greedy_action(q: &[f64], is_seed: &[bool], eps: f64, rng: &mut Rng) -> Result<NodeId> {
    let free = is_seed.iter().filter(|&&s| !s).count();
    if free == 0 {
        return Err(Error::NoCandidates);
    }
    if rng.random::<f64>() < eps {
        let pick = rng.random_range(0..free as u64) as usize;
        let v = is_seed
            .iter()
            .enumerate()
            .filter(|(_, &s)| !s)
            .nth(pick)
            .map(|(v, _)| v)
            .expect("pick < free");
        Ok(NodeId::from(v))
    } else {
        Ok(argmax_candidate(q, is_seed).expect("free > 0"))
    }
}

/// Marginal spread gain of adding `v` to `seeds`.
pub fn reward(
    g: &Graph,
    model: DiffusionModel,
    seeds: &[NodeId],
    v: NodeId,
    reward_runs: usize,
    rng_seed: u64,
) -> Result<f64> {
    Simulator::new(g, model)?.marginal_gain(seeds, v, reward_runs, rng_seed)
}

/// Graphs with their embedding neighborhoods, shared by target and gradient computations.
#[derive(Clone, Debug)]
pub struct TrainingSet<'a> {
    graphs: &'a [Graph],
    hoods: Vec<Neighborhood>,
    embed: EmbedConfig,
}

impl<'a> TrainingSet<'a> {
    pub fn new(graphs: &'a [Graph], embed: EmbedConfig) -> Self {
        TrainingSet {
            graphs,
            hoods: graphs.iter().map(|g| Neighborhood::new(g, embed.neighbors)).collect(),
            embed,
        }
    }

    pub fn graphs(&self) -> &'a [Graph] {
        self.graphs
    }

    fn hood(&self, t: &Transition) -> Result<&Neighborhood> {
        self.hoods
            .get(t.graph)
            .ok_or_else(|| Error::Config(format!("transition refers to missing graph {}", t.graph)))
    }

    /// `reward_sum + γ · max_{v ∉ S'} Q(v, S')`, or `reward_sum` when terminal.
    pub fn n_step_target(&self, t: &Transition, theta: &Theta, gamma: f64) -> Result<f64> {
        let hood = self.hood(t)?;
        if t.terminal {
            return Ok(t.reward_sum);
        }
        let state = embed_with(hood, &t.next_state, theta, self.embed.iterations)?;
        let q = q_values(&state, theta)?;
        let best = argmax_candidate(&q, &state.seeds).map(|v| q[v.index()]);
        Ok(t.reward_sum + gamma * best.unwrap_or(0.0))
    }

    pub fn predicted_q(&self, t: &Transition, theta: &Theta) -> Result<f64> {
        let state = embed_with(self.hood(t)?, &t.state, theta, self.embed.iterations)?;
        Ok(q_value_of(&state, theta, t.action))
    }

    pub fn loss(&self, batch: &[Transition], theta: &Theta, gamma: f64) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut total = 0.0;
        for t in batch {
            let err = self.n_step_target(t, theta, gamma)? - self.predicted_q(t, theta)?;
            total += err * err;
        }
        Ok(total / batch.len() as f64)
    }

    /// Loss and its gradient with targets held constant.
    pub fn loss_and_grad(&self, batch: &[Transition], theta: &Theta, gamma: f64) -> Result<(f64, Theta)> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let scale = 1.0 / batch.len() as f64;
        let mut grad = Theta::zeros(theta.q());
        let mut total = 0.0;
        for t in batch {
            let target = self.n_step_target(t, theta, gamma)?;
            let hood = self.hood(t)?;
            let tape = embed_recorded(hood, &t.state, theta, self.embed.iterations)?;
            let predicted = q_value_of(&tape.state, theta, t.action);
            let err = predicted - target;
            total += err * err;
            backprop_q(hood, &tape, theta, t.action, 2.0 * err * scale, &mut grad);
        }
        Ok((total * scale, grad))
    }
}

pub fn n_step_target(t: &Transition, theta: &Theta, graphs: &[Graph], gamma: f64, embed: EmbedConfig) -> Result<f64> {
    TrainingSet::new(graphs, embed).n_step_target(t, theta, gamma)
}

/// Mean squared TD error of the batch.
pub fn loss(batch: &[Transition], theta: &Theta, graphs: &[Graph], gamma: f64, embed: EmbedConfig) -> Result<f64> {
    TrainingSet::new(graphs, embed).loss(batch, theta, gamma)
}

/// Exact gradient of [`loss`] with respect to every tensor of `theta`.
pub fn grad_theta(
    batch: &[Transition],
    theta: &Theta,
    graphs: &[Graph],
    gamma: f64,
    embed: EmbedConfig,
) -> Result<Theta> {
    Ok(TrainingSet::new(graphs, embed).loss_and_grad(batch, theta, gamma)?.1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub graph: usize,
    /// Global selection count at the end of the episode.
    pub steps: usize,
    /// Mean batch loss over the episode's SGD updates; `None` if there were none.
    pub loss: Option<f64>,
    pub epsilon: f64,
    pub cum_reward: f64,
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub theta: Theta,
    pub log: Vec<EpisodeLog>,
    pub replay: ReplayMemory,
    pub updates: usize,
}

/// Runs `cfg.episodes` episodes round-robin over `graphs`.
pub fn train(graphs: &[Graph], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_theta(graphs, cfg, init_theta(cfg.dimension, substream_seed(cfg.rng_seed, "theta"))?)
}

/// As [`train`], starting from the given parameters.
pub fn train_with_theta(graphs: &[Graph], cfg: &TrainConfig, mut theta: Theta) -> Result<TrainOutcome> {
    cfg.validate()?;
    theta.validate()?;
    if theta.q() != cfg.dimension {
        return Err(Error::Dimension(format!(
            "theta has dimension {}, config asks for {}",
            theta.q(),
            cfg.dimension
        )));
    }
    if graphs.is_empty() {
        return Err(Error::Config("no training graphs".into()));
    }
    let min_n = graphs.iter().map(Graph::n).min().unwrap_or(0);
    if cfg.budget > min_n {
        return Err(Error::BudgetTooLarge { k: cfg.budget, n: min_n });
    }
    let set = TrainingSet::new(graphs, cfg.embed);
    let sims = graphs
        .iter()
        .map(|g| Simulator::new(g, cfg.model))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = rng_from_seed(substream_seed(cfg.rng_seed, "policy"));
    let mut replay = ReplayMemory::new(cfg.replay_capacity);
    let mut log = Vec::with_capacity(cfg.episodes);
    let started = std::time::Instant::now();
    let k = cfg.budget;
    let delta = cfg.delta;
    let mut selections = 0usize;
    let mut updates = 0usize;

    for episode in 0..cfg.episodes {
        let gi = episode % graphs.len();
        let g = &graphs[gi];
        let mut picks: Vec<NodeId> = Vec::with_capacity(k);
        let mut is_seed = vec![false; g.n()];
        let mut rewards: Vec<f64> = Vec::with_capacity(k);
        let mut losses = Vec::new();

        let push = |replay: &mut ReplayMemory, picks: &[NodeId], rewards: &[f64], j: usize, end: usize| {
            replay.push(Transition {
                graph: gi,
                state: picks[..j].to_vec(),
                action: picks[j],
                reward_sum: rewards[j..end].iter().sum(),
                next_state: picks[..end].to_vec(),
                terminal: j + delta >= k,
            });
        };

        for i in 0..k {
            let eps = cfg.epsilon(selections);
            let state = embed_with(&set.hoods[gi], &picks, &theta, cfg.embed.iterations)?;
            let q = q_values(&state, &theta)?;
            let v = epsilon_greedy_action(&q, &is_seed, eps, &mut rng)?;
            let r = sims[gi].marginal_gain(&picks, v, cfg.reward_runs, rng.random())?;
            picks.push(v);
            is_seed[v.index()] = true;
            rewards.push(r);
            selections += 1;

            if i >= delta {
                push(&mut replay, &picks, &rewards, i - delta, i);
                losses.push(sgd_step(&set, &replay, &mut theta, cfg, &mut rng, episode, &mut updates)?);
            }
        }
        for j in k.saturating_sub(delta)..k {
            push(&mut replay, &picks, &rewards, j, k);
        }
        if k > 0 && k <= delta {
            losses.push(sgd_step(&set, &replay, &mut theta, cfg, &mut rng, episode, &mut updates)?);
        }

        log.push(EpisodeLog {
            episode,
            graph: gi,
            steps: selections,
            loss: if losses.is_empty() {
                None
            } else {
                Some(losses.iter().sum::<f64>() / losses.len() as f64)
            },
            epsilon: cfg.epsilon(selections),
            cum_reward: rewards.iter().sum(),
            wall_time: started.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainOutcome {
        theta,
        log,
        replay,
        updates,
    })
}

fn sgd_step(
    set: &TrainingSet<'_>,
    replay: &ReplayMemory,
    theta: &mut Theta,
    cfg: &TrainConfig,
    rng: &mut Rng,
    episode: usize,
    updates: &mut usize,
) -> Result<f64> {
    let batch = replay.sample(cfg.batch_size, rng);
    let (loss, mut grad) = set.loss_and_grad(&batch, theta, cfg.gamma)?;
    *updates += 1;
    if let Some(tensor) = grad.first_non_finite() {
        return Err(Error::NonFinite {
            tensor,
            episode,
            update: *updates,
        });
    }
    if cfg.lr > 0.0 {
        if let Some(limit) = cfg.grad_clip {
            let norm = grad.norm();
            if norm > limit {
                grad.scale(limit / norm);
            }
        }
        theta.scaled_add(-cfg.lr, &grad);
        if let Some(tensor) = theta.first_non_finite() {
            return Err(Error::NonFinite {
                tensor,
                episode,
                update: *updates,
            });
        }
    }
    Ok(loss)
}
