use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use carbon_mec::experiment::{
    evaluate_checkpoint, export_trajectories, run_experiment, ExperimentError, RunManifest, SummaryRow,
};
use carbon_mec::learner::{Algorithm, LearnerConfig, Variant};
use carbon_mec::nn::Checkpoint;
use carbon_mec::retrieval::{
    parse_triplets, Corpus, Extractors, IndexFile, QueryMode, QueryParams, RetrievalError, RetrievalIndex, SynonymDictionary,
};
use carbon_mec::scenario::{default_scenario, load_scenario, Scenario};
use carbon_mec::Exec;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Carbon-aware multi-UAV edge computing experiments.
#[derive(Parser)]
#[command(name = "carbon-mec", version)]
struct Cli {
    /// Run independent jobs one after another instead of on the thread pool.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train algorithms over seeds and write metrics, checkpoints and a summary.
    Train(TrainArgs),
    /// Train the four regularizer/pruning variants.
    Ablate(RunArgs),
    /// Evaluate a checkpoint greedily.
    Eval(EvalArgs),
    /// Write per-slot UAV positions from a checkpoint's policy.
    ExportTraj(ExportArgs),
    /// Build or query a hybrid retrieval index.
    Retrieval {
        #[command(subcommand)]
        command: RetrievalCommand,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file; the built-in default when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Learner config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured episode count.
    #[arg(long)]
    episodes: Option<usize>,
    /// Assumed device power for the training-energy estimate.
    #[arg(long)]
    power_w: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Run manifest (TOML); replaces every other option.
    #[arg(long, conflicts_with_all = ["scenario", "config", "out", "algorithms", "episodes", "power_w"])]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',', default_value = "R2DSAC,SAC,Random")]
    algorithms: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 5)]
    episodes: usize,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 1)]
    episodes: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum RetrievalCommand {
    /// Parse a document directory and a triplet file into an index file.
    Ingest {
        #[arg(long)]
        docs: PathBuf,
        #[arg(long)]
        triplets: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one query against an index file.
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Hybrid)]
        mode: Mode,
        #[arg(long)]
        query: String,
        /// Tab-separated synonym dictionary.
        #[arg(long)]
        synonyms: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        g_top: usize,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[arg(long, default_value_t = 3)]
        top_k: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Keyword,
    Graph,
    Vector,
    Hybrid,
}

impl From<Mode> for QueryMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Keyword => QueryMode::Keyword,
            Mode::Graph => QueryMode::Graph,
            Mode::Vector => QueryMode::Vector,
            Mode::Hybrid => QueryMode::Hybrid,
        }
    }
}

/// Failure split by exit status.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

fn config(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn experiment(e: ExperimentError) -> Failure {
    if e.is_config_error() {
        config(e)
    } else {
        runtime(e)
    }
}

/// Unreadable or malformed inputs are configuration problems.
fn retrieval_input(e: RetrievalError) -> Failure {
    config(e)
}

fn load_config(path: Option<&Path>) -> Result<LearnerConfig, Failure> {
    match path {
        Some(p) => LearnerConfig::load(p).with_context(|| format!("loading {}", p.display())).map_err(config),
        None => Ok(LearnerConfig::default()),
    }
}

fn resolve_scenario(path: Option<&Path>) -> Result<Scenario, Failure> {
    match path {
        Some(p) => load_scenario(p).with_context(|| format!("loading {}", p.display())).map_err(config),
        None => Ok(default_scenario()),
    }
}

fn manifest_from(run: &RunArgs, algorithms: Vec<Algorithm>) -> Result<RunManifest, Failure> {
    let mut learner = load_config(run.config.as_deref())?;
    if let Some(e) = run.episodes {
        learner.episodes = e;
    }
    let out = run.out.clone().ok_or_else(|| config(anyhow!("--out is required")))?;
    let mut m = RunManifest::new(learner, run.seeds.clone(), algorithms, out);
    m.scenario = run.scenario.clone();
    if let Some(p) = run.power_w {
        m.device_power_w = p;
    }
    Ok(m)
}

fn print_summary(hash: &str, rows: &[SummaryRow]) {
    println!("manifest hash {hash}");
    println!("{:<8} {:>24} {:>26} {:>20}", "algo", "reward", "carbon kg", "penalty");
    for r in rows {
        println!(
            "{:<8} {:>11.4} ± {:<10.4} {:>11.4e} ± {:<11.3e} {:>8.3} ± {:<8.3}",
            r.algorithm.label(),
            r.reward_mean,
            r.reward_std,
            r.carbon_mean,
            r.carbon_std,
            r.penalty_mean,
            r.penalty_std
        );
    }
}

fn run(m: &RunManifest, exec: Exec) -> Result<(), Failure> {
    let report = run_experiment(m, exec).map_err(experiment)?;
    print_summary(&report.hash, &report.summary);
    let total: f64 = report.runs.iter().map(|r| r.energy.carbon_kg).sum();
    println!("estimated training emissions {total:.6e} kg CO2 (see train_energy.json)");
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    Checkpoint::load(path).with_context(|| format!("loading {}", path.display())).map_err(config)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match cli.command {
        Command::Train(args) => {
            let m = match &args.manifest {
                Some(p) => RunManifest::load(p).map_err(config)?,
                None => {
                    let algs = args
                        .algorithms
                        .iter()
                        .map(|a| Algorithm::parse(a).ok_or_else(|| config(anyhow!("unknown algorithm `{a}`"))))
                        .collect::<Result<Vec<_>, _>>()?;
                    manifest_from(&args.run, algs)?
                }
            };
            run(&m, exec)
        }
        Command::Ablate(args) => run(&manifest_from(&args, Variant::ALL.map(Algorithm::Diffusion).to_vec())?, exec),
        Command::Eval(args) => {
            let scenario = resolve_scenario(args.scenario.as_deref())?;
            let ck = load_checkpoint(&args.checkpoint)?;
            let rows = evaluate_checkpoint(&ck, &scenario, &args.seeds, args.episodes, exec).map_err(experiment)?;
            let mut text = String::from("seed,episode,reward,carbon_kg,energy_j,penalty\n");
            for r in &rows {
                text.push_str(&format!("{},{},{},{},{},{}\n", r.seed, r.episode, r.reward, r.carbon_kg, r.energy_j, r.penalty));
            }
            match &args.out {
                Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())).map_err(runtime),
                None => std::io::stdout().write_all(text.as_bytes()).map_err(runtime),
            }
        }
        Command::ExportTraj(args) => {
            let scenario = resolve_scenario(args.scenario.as_deref())?;
            let ck = load_checkpoint(&args.checkpoint)?;
            for p in export_trajectories(&ck, &scenario, &args.seeds, args.episodes, &args.out).map_err(experiment)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Retrieval { command } => retrieval(command, exec),
    }
}

fn retrieval(command: RetrievalCommand, exec: Exec) -> Result<(), Failure> {
    match command {
        RetrievalCommand::Ingest { docs, triplets, out } => {
            let corpus = Corpus::ingest_dir(&docs).map_err(retrieval_input)?;
            let triplets = match &triplets {
                Some(p) => {
                    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(config)?;
                    parse_triplets(&text).with_context(|| p.display().to_string()).map_err(config)?
                }
                None => Vec::new(),
            };
            let file = IndexFile { corpus, triplets };
            let index = RetrievalIndex::from_file(file.clone());
            let stats = index.graph.stats();
            file.save(&out).map_err(runtime)?;
            println!(
                "blocks {} keywords {} nodes {} edges {} duplicate triplets {}",
                index.corpus.len(),
                index.keyword_index().len(),
                stats.nodes,
                stats.edges,
                stats.duplicates_dropped
            );
            Ok(())
        }
        RetrievalCommand::Query { index, mode, query, synonyms, g_top, depth, top_k } => {
            let mut idx = RetrievalIndex::from_file(IndexFile::load(&index).map_err(retrieval_input)?);
            idx.exec = exec;
            let extractors = match &synonyms {
                Some(p) => {
                    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(config)?;
                    Extractors::with_synonyms(SynonymDictionary::parse(&text).with_context(|| p.display().to_string()).map_err(config)?)
                }
                None => Extractors::default(),
            };
            let r = idx.query(&query, mode.into(), QueryParams { g_top, depth, top_k }, &extractors);
            if r.vector_no_match {
                eprintln!("note: no document shares vocabulary with the query");
            }
            for item in &r.items {
                let tags: Vec<String> = item.sources.iter().map(|s| format!("{s:?}").to_lowercase()).collect();
                println!("[{}] {}", tags.join(","), item.text.replace('\n', " "));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
