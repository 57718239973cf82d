//! End-to-end experiment runs: sample → train → select → evaluate → stability,
//! and training across evolving snapshots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::config::{hex, ExperimentConfig};
use crate::diffusion::{DiffusionModel, Simulator};
use crate::dqn::{train, EpisodeLog, TrainOutcome};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::model::{self, Model};
use crate::rng::{rng_from_seed, substream_seed};
use crate::sampling::{sample_subgraph, SampleSpec};
use crate::selection::{
    celf_greedy, random_seeds, select_iterative, select_topk, stability_report, Method, SeedSet, SpreadOracle,
    StabilityConfig, StabilityReport,
};

pub const TRAINING_LOG_HEADER: &str = "episode,step,loss,epsilon,cum_reward,wall_time,config_hash";
pub const SEEDS_HEADER: &str = "method,k,rank,node,score,config_hash";
pub const COMPARE_HEADER: &str = "method,k,spread_mean,spread_stderr,wall_time,config_hash";
pub const STABILITY_HEADER: &str =
    "k,delta_rank,delta_inf,observed_gap,max_gap,claim_bound,proof_bound,within_claim,config_hash";
pub const EVOLUTION_HEADER: &str = "train_snapshot,k,spread_mean,spread_stderr,config_hash";

const STAGING: &str = ".partial";
const QUARANTINE: &str = "quarantine";

/// Files written by a successful run, relative to the output directory.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub dir: PathBuf,
    pub config_hash: String,
    pub files: Vec<PathBuf>,
}

trait StageExt<T> {
    fn stage(self, name: &str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, name: &str) -> Result<T> {
        self.map_err(|e| e.in_stage(name))
    }
}

fn seconds(wall_time: bool, start: Instant) -> f64 {
    if wall_time {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    }
}

pub fn training_log_csv(log: &[EpisodeLog], hash: &str, wall_time: bool) -> String {
    let mut s = format!("{TRAINING_LOG_HEADER}\n");
    for e in log {
        let loss = e.loss.map_or(String::new(), |l| l.to_string());
        let wall = if wall_time { e.wall_time } else { 0.0 };
        writeln!(s, "{},{},{loss},{},{},{wall},{hash}", e.episode, e.steps, e.epsilon, e.cum_reward).unwrap();
    }
    s
}

pub fn seeds_csv(g: &Graph, sets: &[(usize, SeedSet)], hash: &str) -> String {
    let mut s = format!("{SEEDS_HEADER}\n");
    for (k, set) in sets {
        for (rank, (v, score)) in set.nodes.iter().zip(&set.scores).enumerate() {
            writeln!(s, "{},{k},{},{},{score},{hash}", set.method, rank + 1, g.external_id(*v)).unwrap();
        }
    }
    s
}

pub fn stability_csv(reports: &[StabilityReport], hash: &str) -> String {
    let mut s = format!("{STABILITY_HEADER}\n");
    for r in reports {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{hash}",
            r.k,
            r.delta_rank,
            r.delta_inf,
            r.observed_gap,
            r.max_gap,
            r.claim_bound,
            r.proof_bound,
            r.fraction_within_claim()
        )
        .unwrap();
    }
    s
}

/// Seeds chosen by `method` on `g`.
pub fn select(
    g: &Graph,
    method: Method,
    k: usize,
    model: Option<&Model>,
    diffusion: DiffusionModel,
    celf_runs: usize,
    rng_seed: u64,
) -> Result<SeedSet> {
    let need_model = || model.ok_or_else(|| Error::Config(format!("method {method} needs a model")));
    match method {
        Method::TopK => {
            let m = need_model()?;
            select_topk(g, &m.theta, k, &m.embed)
        }
        Method::Iterative => {
            let m = need_model()?;
            select_iterative(g, &m.theta, k, &m.embed)
        }
        Method::Celf => celf_greedy(g, diffusion, k, SpreadOracle::MonteCarlo { runs: celf_runs, rng_seed }),
        Method::Random => random_seeds(g, k, &mut rng_from_seed(rng_seed)),
    }
}

/// Runs every method in `cfg.methods` for every budget in `cfg.k` on `g` and
/// evaluates the seeds with common random numbers. Returns the compare CSV and
/// the chosen seed sets.
pub fn compare(
    g: &Graph,
    model: Option<&Model>,
    cfg: &ExperimentConfig,
    hash: &str,
) -> Result<(String, Vec<(usize, SeedSet)>)> {
    let celf_seed = substream_seed(cfg.rng_seed, "celf");
    let eval_seed = substream_seed(cfg.rng_seed, "eval");
    let sim = Simulator::new(g, cfg.model).stage("evaluate")?;
    let mut chosen = Vec::new();
    let mut csv = format!("{COMPARE_HEADER}\n");
    for &method in &cfg.methods {
        for &k in &cfg.k {
            let rng_seed = match method {
                Method::Random => substream_seed(cfg.rng_seed, &format!("random/{k}")),
                _ => celf_seed,
            };
            let start = Instant::now();
            let set = select(g, method, k, model, cfg.model, cfg.celf_runs, rng_seed).stage("select")?;
            let wall = seconds(cfg.wall_time, start);
            let est = sim.estimate(&set.nodes, cfg.eval_runs, eval_seed).stage("evaluate")?;
            writeln!(csv, "{method},{k},{},{},{wall},{hash}", est.mean, est.stderr).unwrap();
            chosen.push((k, set));
        }
    }
    Ok((csv, chosen))
}

/// Training subgraphs for `cfg`, each drawn with substream `sample/<i>`.
pub fn draw_samples(g: &Graph, cfg: &ExperimentConfig) -> Result<Vec<Graph>> {
    (0..cfg.sample_count)
        .map(|i| {
            let spec = SampleSpec::new(cfg.sampler, cfg.sample_fraction, substream_seed(cfg.rng_seed, &format!("sample/{i}")));
            sample_subgraph(g, &spec)
        })
        .collect()
}

struct Staging {
    root: PathBuf,
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Staging {
    fn new(root: &Path) -> Result<Self> {
        let dir = root.join(STAGING);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
        Ok(Staging {
            root: root.to_path_buf(),
            dir,
            files: Vec::new(),
        })
    }

    fn write(&mut self, rel: impl AsRef<Path>, contents: &str) -> Result<()> {
        let rel = rel.as_ref();
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, contents)?;
        self.files.push(rel.to_path_buf());
        Ok(())
    }

    /// Reserves `rel` for a writer that creates the file itself.
    fn reserve(&mut self, rel: impl AsRef<Path>) -> Result<PathBuf> {
        let rel = rel.as_ref();
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.files.push(rel.to_path_buf());
        Ok(path)
    }

    fn commit(self) -> Result<Vec<PathBuf>> {
        for rel in &self.files {
            let target = self.root.join(rel);
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::rename(self.dir.join(rel), target)?;
        }
        fs::remove_dir_all(&self.dir)?;
        let stale = self.root.join(QUARANTINE);
        if stale.exists() {
            fs::remove_dir_all(stale)?;
        }
        Ok(self.files)
    }

    fn quarantine(self) {
        let target = self.root.join(QUARANTINE);
        if target.exists() {
            let _ = fs::remove_dir_all(&target);
        }
        let _ = fs::rename(&self.dir, target);
    }
}

/// Runs every stage and writes the artifacts into `cfg.output`. On failure the
/// files written so far are moved to `<output>/quarantine` and the error names
/// the failing stage.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineOutput> {
    cfg.validate().stage("config")?;
    fs::create_dir_all(&cfg.output)?;
    let mut staging = Staging::new(&cfg.output)?;
    match run_stages(cfg, &mut staging) {
        Ok(hash) => Ok(PipelineOutput {
            dir: cfg.output.clone(),
            config_hash: hash,
            files: staging.commit()?,
        }),
        Err(e) => {
            staging.quarantine();
            Err(e)
        }
    }
}

fn run_stages(cfg: &ExperimentConfig, out: &mut Staging) -> Result<String> {
    let hash = cfg.hash();
    let seed = cfg.rng_seed;
    let mut substreams: Vec<(String, u64)> = Vec::new();
    let mut stream = |name: String| {
        let s = substream_seed(seed, &name);
        substreams.push((name, s));
        s
    };

    let g = Graph::read_file(&cfg.graph, cfg.directed, cfg.default_weight).stage("load")?;
    if let Some(&k) = cfg.k.iter().find(|&&k| k > g.n()) {
        return Err(Error::BudgetTooLarge { k, n: g.n() }).stage("load");
    }

    let mut samples = Vec::with_capacity(cfg.sample_count);
    for i in 0..cfg.sample_count {
        let spec = SampleSpec::new(cfg.sampler, cfg.sample_fraction, stream(format!("sample/{i}")));
        let s = sample_subgraph(&g, &spec).stage("sample")?;
        let path = out.reserve(format!("samples/sample_{i:03}.txt")).stage("sample")?;
        s.write_file(path).stage("sample")?;
        samples.push(s);
    }
    if samples.is_empty() {
        samples.push(g.clone());
    }

    let TrainOutcome { theta, log, .. } = train(&samples, &cfg.train_config(stream("train".into()))).stage("train")?;
    let trained = Model {
        theta,
        embed: cfg.embed(),
    };
    out.write("model.txt", &model::to_string(&trained)).stage("train")?;
    out.write("training_log.csv", &training_log_csv(&log, &hash, cfg.wall_time))
        .stage("train")?;

    for name in ["celf", "eval"] {
        stream(name.into());
    }
    if cfg.methods.contains(&Method::Random) {
        for &k in &cfg.k {
            stream(format!("random/{k}"));
        }
    }
    let (compare, chosen) = compare(&g, Some(&trained), cfg, &hash)?;
    out.write("seeds.csv", &seeds_csv(&g, &chosen, &hash)).stage("select")?;
    out.write("compare.csv", &compare).stage("evaluate")?;

    if cfg.stability {
        let stab = StabilityConfig {
            pair_sample: cfg.pair_sample,
            eval_runs: cfg.eval_runs,
            model: cfg.model,
            rng_seed: stream("stability".into()),
            ..StabilityConfig::default()
        };
        let reports = cfg
            .k
            .iter()
            .filter(|&&k| k + 2 <= g.n())
            .map(|&k| stability_report(&g, &trained.theta, k, &trained.embed, &stab))
            .collect::<Result<Vec<_>>>()
            .stage("stability")?;
        out.write("stability.csv", &stability_csv(&reports, &hash)).stage("stability")?;
    }

    let mut manifest = String::new();
    writeln!(manifest, "config_hash = {hash}").unwrap();
    writeln!(manifest, "rng_seed = {seed}").unwrap();
    for (name, s) in &substreams {
        writeln!(manifest, "substream {name} = {s}").unwrap();
    }
    for rel in &out.files {
        let bytes = fs::read(out.dir.join(rel)).map_err(Error::from).stage("manifest")?;
        writeln!(manifest, "file {} sha256 {}", rel.display(), hex(&Sha256::digest(&bytes))).unwrap();
    }
    manifest.push_str("\n# configuration\n");
    manifest.push_str(&cfg.to_text());
    out.write("manifest.txt", &manifest).stage("manifest")?;
    Ok(hash)
}

/// A training snapshot of an evolving network.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub timestamp: i64,
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSeries {
    pub snapshots: Vec<Snapshot>,
    /// Later snapshots must contain every node and edge of earlier ones.
    pub monotone: bool,
}

impl SnapshotSeries {
    pub fn new(snapshots: Vec<Snapshot>, monotone: bool) -> Result<Self> {
        if snapshots.len() < 2 {
            return Err(Error::Config("a snapshot series needs at least 2 snapshots".into()));
        }
        if let Some(w) = snapshots.windows(2).find(|w| w[0].timestamp >= w[1].timestamp) {
            return Err(Error::Config(format!(
                "snapshot timestamps must increase: {} then {}",
                w[0].timestamp, w[1].timestamp
            )));
        }
        Ok(SnapshotSeries { snapshots, monotone })
    }

    /// Reads `<timestamp> <path>` lines plus an optional `monotone = true`
    /// line. Relative paths resolve against the listing's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        let mut snapshots = Vec::new();
        let mut monotone = false;
        for (i, raw) in fs::read_to_string(path)?.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some((key, value)) = line.split_once('=') {
                if key.trim() != "monotone" {
                    return Err(Error::Parse {
                        line: i + 1,
                        reason: format!("unknown key '{}'", key.trim()),
                    });
                }
                monotone = matches!(value.trim(), "true" | "yes" | "1");
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(ts), Some(file), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Parse {
                    line: i + 1,
                    reason: format!("expected '<timestamp> <path>', got '{line}'"),
                });
            };
            let timestamp = ts.parse().map_err(|_| Error::Parse {
                line: i + 1,
                reason: format!("bad timestamp '{ts}'"),
            })?;
            snapshots.push(Snapshot {
                timestamp,
                path: base.join(file),
            });
        }
        Self::new(snapshots, monotone)
    }

    pub fn load_graphs(&self, directed: bool, default_weight: f64) -> Result<Vec<Graph>> {
        let graphs = self
            .snapshots
            .iter()
            .map(|s| Graph::read_file(&s.path, directed, default_weight))
            .collect::<Result<Vec<_>>>()?;
        if self.monotone {
            for (i, w) in graphs.windows(2).enumerate() {
                check_growth(&w[0], &w[1]).map_err(|e| e.in_stage(format!("snapshot {}", i + 1)))?;
            }
        }
        Ok(graphs)
    }
}

/// Errors unless `later` contains every node and edge of `earlier` (by external id).
pub fn check_growth(earlier: &Graph, later: &Graph) -> Result<()> {
    let map = |v: NodeId| {
        let ext = earlier.external_id(v);
        later
            .node_of(ext)
            .ok_or_else(|| Error::Config(format!("node {ext} disappeared")))
    };
    for v in earlier.nodes() {
        map(v)?;
    }
    for e in earlier.edges() {
        let (s, d) = (map(e.src)?, map(e.dst)?);
        let present = later.neighbors(s).contains(&d) || (!later.is_directed() && later.neighbors(d).contains(&s));
        if !present {
            return Err(Error::Config(format!(
                "edge {}-{} disappeared",
                earlier.external_id(e.src),
                earlier.external_id(e.dst)
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionRow {
    pub train_snapshot: i64,
    pub k: usize,
    pub spread_mean: f64,
    pub spread_stderr: f64,
}

/// Trains one model per snapshot in `train_on` (indices into the series) and
/// evaluates each model's top-k seeds on the last snapshot.
pub fn run_evolution(series: &SnapshotSeries, train_on: &[usize], cfg: &ExperimentConfig) -> Result<Vec<EvolutionRow>> {
    cfg.validate().stage("config")?;
    let graphs = series.load_graphs(cfg.directed, cfg.default_weight).stage("load")?;
    evolution_on_graphs(
        &graphs,
        &series.snapshots.iter().map(|s| s.timestamp).collect::<Vec<_>>(),
        train_on,
        cfg,
    )
}

pub fn evolution_on_graphs(
    graphs: &[Graph],
    timestamps: &[i64],
    train_on: &[usize],
    cfg: &ExperimentConfig,
) -> Result<Vec<EvolutionRow>> {
    let last = graphs.last().ok_or_else(|| Error::Config("no snapshots".into()))?;
    if let Some(&k) = cfg.k.iter().find(|&&k| k > last.n()) {
        return Err(Error::BudgetTooLarge { k, n: last.n() });
    }
    if let Some(&i) = train_on.iter().find(|&&i| i >= graphs.len()) {
        return Err(Error::Config(format!("training snapshot index {i} out of range")));
    }
    let train_cfg = cfg.train_config(substream_seed(cfg.rng_seed, "train"));
    let eval_seed = substream_seed(cfg.rng_seed, "eval");
    let sim = Simulator::new(last, cfg.model).stage("evaluate")?;
    let mut rows = Vec::new();
    for &i in train_on {
        let theta = train(std::slice::from_ref(&graphs[i]), &train_cfg)
            .stage(&format!("train snapshot {}", timestamps[i]))?
            .theta;
        for &k in &cfg.k {
            let seeds = select_topk(last, &theta, k, &train_cfg.embed).stage("select")?;
            let est = sim.estimate(&seeds.nodes, cfg.eval_runs, eval_seed).stage("evaluate")?;
            rows.push(EvolutionRow {
                train_snapshot: timestamps[i],
                k,
                spread_mean: est.mean,
                spread_stderr: est.stderr,
            });
        }
    }
    Ok(rows)
}

pub fn evolution_csv(rows: &[EvolutionRow], hash: &str) -> String {
    let mut s = format!("{EVOLUTION_HEADER}\n");
    for r in rows {
        writeln!(s, "{},{},{},{},{hash}", r.train_snapshot, r.k, r.spread_mean, r.spread_stderr).unwrap();
    }
    s
}
