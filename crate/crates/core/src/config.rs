//! Flat `key = value` experiment configuration.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. Unknown
//! keys are rejected. [`ExperimentConfig::to_text`] writes every key in a
//! fixed order; its SHA-256 is the config hash stamped on every output row.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::diffusion::{DiffusionModel, ModelKind};
use crate::dqn::TrainConfig;
use crate::embedding::EmbedConfig;
use crate::error::{Error, Result};
use crate::graph::NeighborMode;
use crate::sampling::SampleMethod;
use crate::selection::Method;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Target graph (edge list).
    pub graph: PathBuf,
    pub directed: bool,
    pub default_weight: f64,
    pub model: DiffusionModel,
    pub sampler: SampleMethod,
    pub sample_fraction: f64,
    /// Training subgraphs drawn from the target graph.
    pub sample_count: usize,
    pub train: TrainConfig,
    pub k: Vec<usize>,
    pub methods: Vec<Method>,
    /// Simulations per spread evaluation.
    pub eval_runs: usize,
    /// Simulations per marginal gain inside CELF.
    pub celf_runs: usize,
    pub stability: bool,
    pub pair_sample: usize,
    pub output: PathBuf,
    pub rng_seed: u64,
    /// Record elapsed seconds in CSVs; `false` writes 0 so reruns are byte-identical.
    pub wall_time: bool,
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            graph: PathBuf::new(),
            directed: false,
            default_weight: 0.5,
            model: DiffusionModel::ic(),
            sampler: SampleMethod::Bfs,
            sample_fraction: 0.05,
            sample_count: 20,
            train: TrainConfig::default(),
            k: vec![10, 20, 30, 40, 50],
            methods: vec![Method::TopK, Method::Iterative, Method::Celf, Method::Random],
            eval_runs: 10_000,
            celf_runs: 10_000,
            stability: true,
            pair_sample: 10_000,
            output: PathBuf::from("out"),
            rng_seed: 0,
            wall_time: true,
            threads: 1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true/false, got '{value}'"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

/// Splits config text into key/value pairs, rejecting repeated keys.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut pairs = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            reason: format!("expected key = value, got '{line}'"),
        })?;
        let key = key.trim().to_string();
        if pairs.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Parse {
                line: i + 1,
                reason: format!("key '{key}' repeated"),
            });
        }
    }
    Ok(pairs)
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (key, value) in parse_pairs(text)? {
            cfg.set(&key, &value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative `graph` or `output` resolves against the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_text(&std::fs::read_to_string(path)?)?;
        if let Some(dir) = path.parent() {
            if cfg.graph.is_relative() {
                cfg.graph = dir.join(&cfg.graph);
            }
            if cfg.output.is_relative() {
                cfg.output = dir.join(&cfg.output);
            }
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "graph" => self.graph = PathBuf::from(value),
            "directed" => self.directed = parse_bool(key, value)?,
            "default_weight" => self.default_weight = parse(key, value)?,
            "model" => self.model.kind = parse::<ModelKind>(key, value)?,
            "lt_renormalize" => self.model.lt_renormalize = parse_bool(key, value)?,
            "sampler" => self.sampler = parse(key, value)?,
            "sample_fraction" => self.sample_fraction = parse(key, value)?,
            "sample_count" => self.sample_count = parse(key, value)?,
            "episodes" => t.episodes = parse(key, value)?,
            "budget" => t.budget = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "delta" => t.delta = parse(key, value)?,
            "gamma" => t.gamma = parse(key, value)?,
            "lr" => t.lr = parse(key, value)?,
            "eps_start" => t.eps_start = parse(key, value)?,
            "eps_end" => t.eps_end = parse(key, value)?,
            "eps_anneal_steps" => t.eps_anneal_steps = parse(key, value)?,
            "reward_runs" => t.reward_runs = parse(key, value)?,
            "replay_capacity" => t.replay_capacity = parse(key, value)?,
            "dimension" => t.dimension = parse(key, value)?,
            "iterations" => t.embed.iterations = parse(key, value)?,
            "neighbors" => t.embed.neighbors = parse::<NeighborMode>(key, value)?,
            "grad_clip" => {
                t.grad_clip = match value {
                    "none" | "off" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "k" => self.k = parse_list(key, value)?,
            "methods" => self.methods = parse_list(key, value)?,
            "eval_runs" => self.eval_runs = parse(key, value)?,
            "celf_runs" => self.celf_runs = parse(key, value)?,
            "stability" => self.stability = parse_bool(key, value)?,
            "pair_sample" => self.pair_sample = parse(key, value)?,
            "output" => self.output = PathBuf::from(value),
            "rng_seed" => self.rng_seed = parse(key, value)?,
            "wall_time" => self.wall_time = parse_bool(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let mut train = self.train.clone();
        train.model = self.model;
        train.validate()?;
        if !(self.default_weight >= 0.0 && self.default_weight <= 1.0) {
            return Err(Error::Config(format!("default_weight {} not in [0, 1]", self.default_weight)));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::Config(format!("sample_fraction {} not in (0, 1]", self.sample_fraction)));
        }
        if self.k.is_empty() {
            return Err(Error::Config("k list is empty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods list is empty".into()));
        }
        if self.eval_runs == 0 || self.celf_runs == 0 {
            return Err(Error::Config("eval_runs and celf_runs must be >= 1".into()));
        }
        if self.threads != 1 {
            return Err(Error::Config(format!("threads = {}: only single-threaded runs are supported", self.threads)));
        }
        Ok(())
    }

    /// Training settings with the experiment's diffusion model and seed folded in.
    pub fn train_config(&self, rng_seed: u64) -> TrainConfig {
        TrainConfig {
            model: self.model,
            rng_seed,
            ..self.train.clone()
        }
    }

    pub fn embed(&self) -> EmbedConfig {
        self.train.embed
    }

    /// Every key, one per line, in a fixed order.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let list = |v: Vec<String>| v.join(",");
        let mut s = String::new();
        let mut put = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        put("graph", self.graph.display().to_string());
        put("directed", self.directed.to_string());
        put("default_weight", self.default_weight.to_string());
        put("model", self.model.kind.to_string());
        put("lt_renormalize", self.model.lt_renormalize.to_string());
        put("sampler", self.sampler.to_string());
        put("sample_fraction", self.sample_fraction.to_string());
        put("sample_count", self.sample_count.to_string());
        put("episodes", t.episodes.to_string());
        put("budget", t.budget.to_string());
        put("batch_size", t.batch_size.to_string());
        put("delta", t.delta.to_string());
        put("gamma", t.gamma.to_string());
        put("lr", t.lr.to_string());
        put("eps_start", t.eps_start.to_string());
        put("eps_end", t.eps_end.to_string());
        put("eps_anneal_steps", t.eps_anneal_steps.to_string());
        put("reward_runs", t.reward_runs.to_string());
        put("replay_capacity", t.replay_capacity.to_string());
        put("dimension", t.dimension.to_string());
        put("iterations", t.embed.iterations.to_string());
        put("neighbors", t.embed.neighbors.to_string());
        put("grad_clip", t.grad_clip.map_or("none".to_string(), |c| c.to_string()));
        put("k", list(self.k.iter().map(|k| k.to_string()).collect()));
        put("methods", list(self.methods.iter().map(|m| m.to_string()).collect()));
        put("eval_runs", self.eval_runs.to_string());
        put("celf_runs", self.celf_runs.to_string());
        put("stability", self.stability.to_string());
        put("pair_sample", self.pair_sample.to_string());
        put("output", self.output.display().to_string());
        put("rng_seed", self.rng_seed.to_string());
        put("wall_time", self.wall_time.to_string());
        put("threads", self.threads.to_string());
        s
    }

    /// First 16 hex digits of the SHA-256 of [`to_text`](Self::to_text),
    /// leaving out the output directory.
    pub fn hash(&self) -> String {
        let text: String = self
            .to_text()
            .lines()
            .filter(|l| !l.starts_with("output ="))
            .map(|l| format!("{l}\n"))
            .collect();
        hex(&Sha256::digest(text.as_bytes())[..8])
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = ExperimentConfig::from_text(
            "# comment\ngraph = g.txt\nepisodes = 0\nk = 1, 2,3\nmethods = topk,random\ngrad_clip = none\nmodel = lt # trailing\n",
        )
        .unwrap();
        assert_eq!(cfg.graph, PathBuf::from("g.txt"));
        assert_eq!(cfg.train.episodes, 0);
        assert_eq!(cfg.k, vec![1, 2, 3]);
        assert_eq!(cfg.methods, vec![Method::TopK, Method::Random]);
        assert_eq!(cfg.train.grad_clip, None);
        assert_eq!(cfg.model.kind, ModelKind::LinearThreshold);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.train.delta, 5);
        assert_eq!(cfg.train.lr, 0.001);
        assert_eq!(cfg.train.dimension, 64);
        assert_eq!(cfg.eval_runs, 10_000);
        assert_eq!(cfg.default_weight, 0.5);
    }

    #[test]
    fn text_round_trip_and_hash() {
        let mut cfg = ExperimentConfig::default();
        cfg.graph = "a/b.txt".into();
        cfg.k = vec![5];
        cfg.train.grad_clip = Some(2.5);
        let back = ExperimentConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 16);
        let mut other = cfg.clone();
        other.rng_seed = 1;
        assert_ne!(other.hash(), cfg.hash());
        other = cfg.clone();
        other.output = "elsewhere".into();
        assert_eq!(other.hash(), cfg.hash());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::from_text("nonsense = 1").is_err());
        assert!(ExperimentConfig::from_text("episodes = many").is_err());
        assert!(ExperimentConfig::from_text("gamma = 1.5").is_err());
        assert!(ExperimentConfig::from_text("k = 1\nk = 2").is_err());
        assert!(ExperimentConfig::from_text("no equals sign").is_err());
        assert!(ExperimentConfig::from_text("threads = 4").is_err());
        assert!(ExperimentConfig::from_text("methods = magic").is_err());
    }
}
