use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use disco::config::ExperimentConfig;
use disco::diffusion::{exact_spread, Simulator};
use disco::dqn::train;
use disco::generate::{erdos_renyi, preferential_attachment};
use disco::graph::{Graph, NodeId};
use disco::model::{self, Model};
use disco::pipeline::{
    compare, draw_samples, evolution_csv, run_evolution, run_pipeline, select, stability_csv, training_log_csv,
    SnapshotSeries, COMPARE_HEADER, EVOLUTION_HEADER, SEEDS_HEADER, STABILITY_HEADER, TRAINING_LOG_HEADER,
};
use disco::rng::substream_seed;
use disco::sampling::{clustering_d_statistic, degree_d_statistic, sample_subgraph, SampleSpec};
use disco::selection::{stability_report, Method, StabilityConfig};

const SELECT_HEADER: &str = "node,q,rank,config_hash";
const EVALUATE_HEADER: &str = "seeds,mean,stderr,runs,wall_time,config_hash";
const ORACLE_HEADER: &str = "seeds,spread,config_hash";

#[derive(Parser)]
#[command(name = "disco", version, about = "Learning-based influence maximization")]
struct Cli {
    /// Print the columns of every CSV the tool writes and exit.
    #[arg(long)]
    help_formats: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

/// Settings shared by every subcommand. Values come from the config file,
/// then `--set` overrides, then `--graph`.
#[derive(Args, Clone, Default)]
struct Common {
    /// Flat key = value config file.
    #[arg(long, short)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set episodes=0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Target graph edge list.
    #[arg(long, short)]
    graph: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.overrides {
            let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{kv}`"))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(g) = &self.graph {
            cfg.graph = g.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_graph(cfg: &ExperimentConfig) -> Result<Graph> {
    if cfg.graph.as_os_str().is_empty() {
        bail!("no graph given (use --graph or `graph =` in the config)");
    }
    Graph::read_file(&cfg.graph, cfg.directed, cfg.default_weight)
        .with_context(|| format!("loading {}", cfg.graph.display()))
}

#[derive(Subcommand)]
enum Command {
    /// Draw one sampled subgraph and report its D-statistic against the parent.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Sample index; selects substream `sample/<index>`.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Train a model on sampled subgraphs or on every edge list in a directory.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory of training graphs; replaces sampling from the target graph.
        #[arg(long)]
        graphs: Option<PathBuf>,
        #[arg(long, short)]
        model: PathBuf,
        /// Training log CSV.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Choose k seeds with one method.
    Select {
        #[command(flatten)]
        common: Common,
        #[arg(long, short)]
        model: Option<PathBuf>,
        #[arg(long, short)]
        k: usize,
        #[arg(long, default_value = "topk")]
        method: Method,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo spread of a seed list.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated node ids as they appear in the graph file.
        #[arg(long, short)]
        seeds: String,
        /// Simulations; defaults to `eval_runs`.
        #[arg(long, short)]
        runs: Option<usize>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Exact spread by live-edge enumeration (tiny graphs only).
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, short)]
        seeds: String,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Compare one-shot top-k against iterative re-embedding for every k.
    Stability {
        #[command(flatten)]
        common: Common,
        #[arg(long, short)]
        model: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Spread and selection time for every method and k.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, short)]
        model: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Train on chosen snapshots of an evolving network and evaluate on the last one.
    Evolve {
        #[command(flatten)]
        common: Common,
        /// Series file: lines `<timestamp> <path>`, optional `monotone = true`.
        #[arg(long)]
        series: PathBuf,
        /// Comma-separated snapshot indices to train on; defaults to all.
        #[arg(long)]
        train_on: Option<String>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Full pipeline: sample, train, select, evaluate, stability.
    Run {
        #[command(flatten)]
        common: Common,
        /// Output directory; overrides `output` from the config.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic graph.
    Generate {
        #[arg(long, default_value = "pa")]
        kind: GraphKind,
        #[arg(long, short)]
        n: usize,
        /// Edges per arriving node (pa).
        #[arg(long, default_value_t = 2)]
        attach: usize,
        /// Edge probability (er).
        #[arg(long, default_value_t = 0.01)]
        p: f64,
        #[arg(long)]
        directed: bool,
        #[arg(long, short, default_value_t = 0.1)]
        weight: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum GraphKind {
    Pa,
    Er,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.help_formats {
        print!("{}", formats());
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("no subcommand given; see `disco --help`");
        return ExitCode::from(2);
    };
    match run(command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn formats() -> String {
    let mut s = String::new();
    let mut put = |name: &str, header: &str, note: &str| {
        writeln!(s, "{name}\n  columns: {header}\n  {note}\n").unwrap();
    };
    put("training log (train, run: training_log.csv)", TRAINING_LOG_HEADER,
        "one row per episode; loss is empty when no update ran; step is the global selection count");
    put("seeds (run: seeds.csv)", SEEDS_HEADER, "rank starts at 1; node is the id from the graph file");
    put("select", SELECT_HEADER, "q is the method's score for the node (Q value, marginal gain, or 0 for random)");
    put("evaluate", EVALUATE_HEADER, "seeds are ';'-separated graph-file ids; stderr is the standard error of the mean");
    put("oracle", ORACLE_HEADER, "spread is exact (live-edge enumeration)");
    put("compare (compare, run: compare.csv)", COMPARE_HEADER, "wall_time is selection time in seconds, 0 when wall_time = false");
    put("stability (stability, run: stability.csv)", STABILITY_HEADER,
        "within_claim is the fraction of insertions whose mean gap is below claim_bound");
    put("evolution (evolve)", EVOLUTION_HEADER, "train_snapshot is the timestamp of the training snapshot");
    s.push_str("Every row ends with the 16-hex-digit hash of the effective configuration.\n");
    s
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_seeds(g: &Graph, list: &str) -> Result<Vec<NodeId>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let id: u64 = s.parse().with_context(|| format!("bad node id `{s}`"))?;
            g.node_of(id).ok_or_else(|| anyhow!("node {id} not in graph"))
        })
        .collect()
}

fn seed_label(g: &Graph, seeds: &[NodeId]) -> String {
    seeds.iter().map(|&v| g.external_id(v).to_string()).collect::<Vec<_>>().join(";")
}

fn load_model(path: &Path) -> Result<Model> {
    model::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn graphs_in(dir: &Path, cfg: &ExperimentConfig) -> Result<Vec<Graph>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.is_file());
    paths.sort();
    if paths.is_empty() {
        bail!("no graphs in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| Graph::read_file(p, cfg.directed, cfg.default_weight).with_context(|| format!("loading {}", p.display())))
        .collect()
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Sample { common, index, out } => {
            let cfg = common.resolve()?;
            let g = load_graph(&cfg)?;
            let seed = substream_seed(cfg.rng_seed, &format!("sample/{index}"));
            let s = sample_subgraph(&g, &SampleSpec::new(cfg.sampler, cfg.sample_fraction, seed))?;
            let mut text = Vec::new();
            disco::graph::write_edge_list(&s, &mut text)?;
            let mut text = String::from_utf8(text)?;
            let clustering = clustering_d_statistic(&g, &s).map_or("nan".to_string(), |d| d.to_string());
            writeln!(text, "# d_statistic degree={} clustering={clustering}", degree_d_statistic(&g, &s)?)?;
            fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Train { common, graphs, model: model_path, log } => {
            let cfg = common.resolve()?;
            let training = match graphs {
                Some(dir) => graphs_in(&dir, &cfg)?,
                None => {
                    let g = load_graph(&cfg)?;
                    let samples = draw_samples(&g, &cfg)?;
                    if samples.is_empty() {
                        vec![g]
                    } else {
                        samples
                    }
                }
            };
            let outcome = train(&training, &cfg.train_config(substream_seed(cfg.rng_seed, "train")))?;
            let trained = Model {
                theta: outcome.theta,
                embed: cfg.embed(),
            };
            model::save(&trained, &model_path).with_context(|| format!("writing {}", model_path.display()))?;
            if let Some(log) = log {
                emit(Some(&log), &training_log_csv(&outcome.log, &cfg.hash(), cfg.wall_time))?;
            }
        }
        Command::Select { common, model, k, method, out } => {
            let cfg = common.resolve()?;
            let g = load_graph(&cfg)?;
            let m = model.as_deref().map(load_model).transpose()?;
            let rng_seed = match method {
                Method::Random => substream_seed(cfg.rng_seed, &format!("random/{k}")),
                _ => substream_seed(cfg.rng_seed, "celf"),
            };
            let set = select(&g, method, k, m.as_ref(), cfg.model, cfg.celf_runs, rng_seed)?;
            let hash = cfg.hash();
            let mut csv = format!("{SELECT_HEADER}\n");
            for (rank, (v, q)) in set.nodes.iter().zip(&set.scores).enumerate() {
                writeln!(csv, "{},{q},{},{hash}", g.external_id(*v), rank + 1)?;
            }
            emit(out.as_deref(), &csv)?;
        }
        Command::Evaluate { common, seeds, runs, out } => {
            let cfg = common.resolve()?;
            let g = load_graph(&cfg)?;
            let seeds = parse_seeds(&g, &seeds)?;
            let runs = runs.unwrap_or(cfg.eval_runs);
            let start = Instant::now();
            let est = Simulator::new(&g, cfg.model)?.estimate(&seeds, runs, substream_seed(cfg.rng_seed, "eval"))?;
            let wall = if cfg.wall_time { start.elapsed().as_secs_f64() } else { 0.0 };
            let csv = format!(
                "{EVALUATE_HEADER}\n{},{},{},{},{wall},{}\n",
                seed_label(&g, &seeds),
                est.mean,
                est.stderr,
                est.runs,
                cfg.hash()
            );
            emit(out.as_deref(), &csv)?;
        }
        Command::Oracle { common, seeds, out } => {
            let cfg = common.resolve()?;
            let g = load_graph(&cfg)?;
            let seeds = parse_seeds(&g, &seeds)?;
            let spread = exact_spread(&g, cfg.model, &seeds)?;
            let csv = format!("{ORACLE_HEADER}\n{},{spread},{}\n", seed_label(&g, &seeds), cfg.hash());
            emit(out.as_deref(), &csv)?;
        }
        Command::Stability { common, model, out } => {
            let cfg = common.resolve()?;
            let g = load_graph(&cfg)?;
            let m = load_model(&model)?;
            let stab = StabilityConfig {
                pair_sample: cfg.pair_sample,
                eval_runs: cfg.eval_runs,
                model: cfg.model,
                rng_seed: substream_seed(cfg.rng_seed, "stability"),
                ..StabilityConfig::default()
            };
            let reports = cfg
                .k
                .iter()
                .map(|&k| stability_report(&g, &m.theta, k, &m.embed, &stab))
                .collect::<disco::error::Result<Vec<_>>>()?;
            emit(out.as_deref(), &stability_csv(&reports, &cfg.hash()))?;
        }
        Command::Compare { common, model, out } => {
            let cfg = common.resolve()?;
            let g = load_graph(&cfg)?;
            let m = model.as_deref().map(load_model).transpose()?;
            let (csv, _) = compare(&g, m.as_ref(), &cfg, &cfg.hash())?;
            emit(out.as_deref(), &csv)?;
        }
        Command::Evolve { common, series, train_on, out } => {
            let cfg = common.resolve()?;
            let series = SnapshotSeries::load(&series).with_context(|| format!("reading {}", series.display()))?;
            let train_on = match train_on {
                Some(list) => list
                    .split(',')
                    .map(|s| s.trim().parse::<usize>().with_context(|| format!("bad snapshot index `{s}`")))
                    .collect::<Result<Vec<_>>>()?,
                None => (0..series.snapshots.len()).collect(),
            };
            let rows = run_evolution(&series, &train_on, &cfg)?;
            emit(out.as_deref(), &evolution_csv(&rows, &cfg.hash()))?;
        }
        Command::Run { common, out } => {
            let mut cfg = common.resolve()?;
            if let Some(out) = out {
                cfg.output = out;
            }
            let result = run_pipeline(&cfg)?;
            println!("config_hash {}", result.config_hash);
            for f in &result.files {
                println!("{}", result.dir.join(f).display());
            }
        }
        Command::Generate { kind, n, attach, p, directed, weight, seed, out } => {
            let g = match kind {
                GraphKind::Pa => preferential_attachment(n, attach, weight, seed)?,
                GraphKind::Er => erdos_renyi(n, p, directed, weight, seed)?,
            };
            g.write_file(&out).with_context(|| format!("writing {}", out.display()))?;
        }
    }
    Ok(())
}
