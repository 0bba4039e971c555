//! Experiment orchestration: manifests, multi-seed training runs, summary
//! tables, training-energy estimates and trajectory export.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::energy::carbon;
use crate::exec::{derive_seed, Exec};
use crate::kinematics::{write_trajectory_csv, TrajectoryPoint};
use crate::learner::{
    build_agent, evaluate_episode, read_metrics_csv, train, write_metrics_csv, Agent, Algorithm, EpisodeMetrics, LearnerConfig,
    LearnerError,
};
use crate::nn::{Checkpoint, NnError};
use crate::scenario::{default_scenario, load_scenario, CarbonParams, Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Checkpoint(#[from] NnError),
    #[error("{path}: {msg}")]
    Data { path: String, msg: String },
}

impl ExperimentError {
    /// True for problems with the user's inputs rather than the run itself.
    pub fn is_config_error(&self) -> bool {
        matches!(self, ExperimentError::Manifest(_) | ExperimentError::Scenario(_) | ExperimentError::Learner(LearnerError::Config(_)))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.display().to_string(), source }
}

fn default_power() -> f64 {
    65.0
}

fn default_window() -> usize {
    20
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    /// Scenario file; the built-in default scenario when absent.
    #[serde(default)]
    pub scenario: Option<PathBuf>,
    #[serde(default)]
    pub learner: LearnerConfig,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<Algorithm>,
    pub out_dir: PathBuf,
    /// Assumed device draw for the training-energy estimate.
    #[serde(default = "default_power")]
    pub device_power_w: f64,
    /// Trailing episodes averaged into each seed's final score.
    #[serde(default = "default_window")]
    pub summary_window: usize,
}

impl RunManifest {
    pub fn new(learner: LearnerConfig, seeds: Vec<u64>, algorithms: Vec<Algorithm>, out_dir: impl Into<PathBuf>) -> Self {
        RunManifest {
            scenario: None,
            learner,
            seeds,
            algorithms,
            out_dir: out_dir.into(),
            device_power_w: default_power(),
            summary_window: default_window(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Manifest(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest fields are all TOML-representable")
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut m = Self::from_toml(&text)?;
        // Scenario paths are relative to the manifest.
        if let (Some(s), Some(dir)) = (&m.scenario, path.parent()) {
            if s.is_relative() {
                m.scenario = Some(dir.join(s));
            }
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.seeds.is_empty() {
            return Err(ExperimentError::Manifest("no seeds".into()));
        }
        if self.algorithms.is_empty() {
            return Err(ExperimentError::Manifest("no algorithms".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        if !self.seeds.iter().all(|s| seen.insert(*s)) {
            return Err(ExperimentError::Manifest("duplicate seed".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        if !self.algorithms.iter().all(|a| seen.insert(a.label())) {
            return Err(ExperimentError::Manifest("duplicate algorithm".into()));
        }
        if !(self.device_power_w.is_finite() && self.device_power_w >= 0.0) {
            return Err(ExperimentError::Manifest("device_power_w must be non-negative".into()));
        }
        if self.summary_window == 0 {
            return Err(ExperimentError::Manifest("summary_window must be positive".into()));
        }
        self.learner.validate()?;
        Ok(())
    }

    pub fn resolve_scenario(&self) -> Result<Scenario, ExperimentError> {
        match &self.scenario {
            Some(p) => Ok(load_scenario(p)?),
            None => Ok(default_scenario()),
        }
    }

    /// SHA-256 over the resolved scenario, learner config, seeds, algorithms
    /// and reporting settings. Paths do not enter the hash.
    pub fn content_hash(&self) -> Result<String, ExperimentError> {
        let scenario = self.resolve_scenario()?;
        let mut canon = String::new();
        writeln!(canon, "[scenario]\n{}", scenario.to_text()).expect("write to String");
        writeln!(canon, "[learner]\n{}", self.learner.to_toml()).expect("write to String");
        writeln!(canon, "seeds = {:?}", self.seeds).expect("write to String");
        let algs: Vec<&str> = self.algorithms.iter().map(|a| a.label()).collect();
        writeln!(canon, "algorithms = {algs:?}").expect("write to String");
        writeln!(canon, "device_power_w = {:?}\nsummary_window = {}", self.device_power_w, self.summary_window).expect("write to String");
        let mut h = Sha256::new();
        h.update(format!("manifest {}\0", canon.len()));
        h.update(canon.as_bytes());
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// Estimated energy and emissions of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainEnergyEstimate {
    pub wall_clock_s: f64,
    pub power_w: f64,
    pub energy_j: f64,
    pub carbon_kg: f64,
}

/// `energy = power · time`, converted to CO₂ with the scenario's grid factors.
pub fn estimate_train_carbon(wall_clock_s: f64, power_w: f64, params: &CarbonParams) -> Result<TrainEnergyEstimate, ExperimentError> {
    if !(wall_clock_s.is_finite() && wall_clock_s >= 0.0 && power_w.is_finite() && power_w >= 0.0) {
        return Err(ExperimentError::Manifest("wall-clock time and power must be non-negative".into()));
    }
    let energy_j = power_w * wall_clock_s;
    Ok(TrainEnergyEstimate { wall_clock_s, power_w, energy_j, carbon_kg: carbon(energy_j, params) })
}

/// What a checkpoint's `meta` string records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub algorithm: Algorithm,
    pub seed: u64,
    /// Episodes completed when the checkpoint was taken.
    pub episodes: usize,
    pub learner: LearnerConfig,
}

impl CheckpointMeta {
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("meta serializes")
    }

    pub fn decode(meta: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(meta).map_err(|e| ExperimentError::Manifest(format!("checkpoint metadata: {e}")))
    }
}

/// Rebuild an agent, with its trained parameters, from a checkpoint.
pub fn load_agent(ck: &Checkpoint, scenario: &Scenario) -> Result<(Box<dyn Agent + Send + Sync>, CheckpointMeta), ExperimentError> {
    let meta = CheckpointMeta::decode(&ck.meta)?;
    let mut agent = build_agent(meta.algorithm, scenario, &meta.learner, meta.seed)?;
    agent.restore(ck)?;
    Ok((agent, meta))
}

/// Per-algorithm aggregate over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub seeds: usize,
    pub reward_mean: f64,
    pub reward_std: f64,
    pub carbon_mean: f64,
    pub carbon_std: f64,
    pub penalty_mean: f64,
    pub penalty_std: f64,
}

pub const SUMMARY_HEADER: &str =
    "algorithm,action_entropy,diffusion_reg,pruning,seeds,reward_mean,reward_std,carbon_kg_mean,carbon_kg_std,penalty_mean,penalty_std";

/// Mean and sample standard deviation; the deviation of one value is zero.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean of the trailing `window` rows of one field.
pub fn tail_mean(rows: &[EpisodeMetrics], window: usize, field: fn(&EpisodeMetrics) -> f64) -> f64 {
    let tail = &rows[rows.len().saturating_sub(window)..];
    tail.iter().map(field).sum::<f64>() / tail.len() as f64
}

/// Aggregate per-seed metric series of one algorithm.
pub fn summarize(algorithm: Algorithm, runs: &[Vec<EpisodeMetrics>], window: usize) -> SummaryRow {
    let runs: Vec<&Vec<EpisodeMetrics>> = runs.iter().filter(|r| !r.is_empty()).collect();
    let stat = |f: fn(&EpisodeMetrics) -> f64| mean_std(&runs.iter().map(|r| tail_mean(r, window, f)).collect::<Vec<_>>());
    let (reward_mean, reward_std) = stat(|m| m.test_reward);
    let (carbon_mean, carbon_std) = stat(|m| m.carbon_kg);
    let (penalty_mean, penalty_std) = stat(|m| m.penalty);
    SummaryRow { algorithm, seeds: runs.len(), reward_mean, reward_std, carbon_mean, carbon_std, penalty_mean, penalty_std }
}

fn flag_cells(a: Algorithm) -> [&'static str; 3] {
    match a {
        Algorithm::Diffusion(v) => {
            let (e, d, p) = v.flags();
            let s = |b: bool| if b { "on" } else { "off" };
            [s(e), s(d), s(p)]
        }
        _ => ["-", "-", "-"],
    }
}

pub fn write_summary_csv<W: Write>(mut w: W, rows: &[SummaryRow]) -> std::io::Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for r in rows {
        let [e, d, p] = flag_cells(r.algorithm);
        writeln!(
            w,
            "{},{e},{d},{p},{},{},{},{},{},{},{}",
            r.algorithm.label(),
            r.seeds,
            r.reward_mean,
            r.reward_std,
            r.carbon_mean,
            r.carbon_std,
            r.penalty_mean,
            r.penalty_std
        )?;
    }
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |msg: String| ExperimentError::Data { path: path.display().to_string(), msg };
    let mut lines = text.lines();
    if lines.next() != Some(SUMMARY_HEADER) {
        return Err(bad("missing summary header".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 11 {
                return Err(bad(format!("line {}: expected 11 fields", i + 2)));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("line {}: {e}", i + 2)));
            Ok(SummaryRow {
                algorithm: Algorithm::parse(f[0]).ok_or_else(|| bad(format!("line {}: unknown algorithm", i + 2)))?,
                seeds: f[4].parse().map_err(|e| bad(format!("line {}: {e}", i + 2)))?,
                reward_mean: num(f[5])?,
                reward_std: num(f[6])?,
                carbon_mean: num(f[7])?,
                carbon_std: num(f[8])?,
                penalty_mean: num(f[9])?,
                penalty_std: num(f[10])?,
            })
        })
        .collect()
}

pub fn metrics_path(out_dir: &Path, algorithm: Algorithm, seed: u64) -> PathBuf {
    out_dir.join("metrics").join(format!("{}_seed{seed}.csv", algorithm.label()))
}

pub fn checkpoint_path(out_dir: &Path, algorithm: Algorithm, seed: u64) -> PathBuf {
    out_dir.join("checkpoints").join(format!("{}_seed{seed}.ckpt", algorithm.label()))
}

/// Result of one (algorithm, seed) training job.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub metrics: Vec<EpisodeMetrics>,
    pub energy: TrainEnergyEstimate,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub hash: String,
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

#[derive(Serialize)]
struct EnergyEntry<'a> {
    algorithm: &'a str,
    seed: u64,
    #[serde(flatten)]
    estimate: TrainEnergyEstimate,
}

fn run_one(m: &RunManifest, scenario: &Scenario, algorithm: Algorithm, seed: u64) -> Result<RunRecord, ExperimentError> {
    let start = Instant::now();
    let cfg = &m.learner;
    let meta = |episodes| CheckpointMeta { algorithm, seed, episodes, learner: cfg.clone() }.encode();
    let mut agent = build_agent(algorithm, scenario, cfg, seed)?;
    let ck_dir = m.out_dir.join("checkpoints");
    let metrics = train(agent.as_mut(), scenario, cfg, seed, |row, agent| {
        let done = row.episode + 1;
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.episodes {
            let p = ck_dir.join(format!("{}_seed{seed}_ep{done}.ckpt", algorithm.label()));
            agent.checkpoint(meta(done)).save(&p).map_err(|e| LearnerError::Hook(e.to_string()))?;
        }
        Ok(())
    })?;
    agent.checkpoint(meta(metrics.len())).save(&checkpoint_path(&m.out_dir, algorithm, seed))?;

    let path = metrics_path(&m.out_dir, algorithm, seed);
    let file = File::create(&path).map_err(io_err(&path))?;
    write_metrics_csv(BufWriter::new(file), &metrics).map_err(io_err(&path))?;
    let energy = estimate_train_carbon(start.elapsed().as_secs_f64(), m.device_power_w, &scenario.carbon)?;
    Ok(RunRecord { algorithm, seed, metrics, energy })
}

/// Train every (algorithm, seed) pair and write metrics, checkpoints,
/// `summary.csv`, `train_energy.json` and `manifest.toml` under `out_dir`.
/// Only the energy file depends on wall-clock time.
pub fn run_experiment(m: &RunManifest, exec: Exec) -> Result<ExperimentReport, ExperimentError> {
    m.validate()?;
    let scenario = m.resolve_scenario()?;
    let hash = m.content_hash()?;
    for sub in ["metrics", "checkpoints"] {
        let d = m.out_dir.join(sub);
        fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    let manifest_path = m.out_dir.join("manifest.toml");
    fs::write(&manifest_path, format!("# content hash {hash}\n{}", m.to_toml())).map_err(io_err(&manifest_path))?;

    let jobs: Vec<(Algorithm, u64)> = m.algorithms.iter().flat_map(|&a| m.seeds.iter().map(move |&s| (a, s))).collect();
    let runs = exec.map(&jobs, |&(a, s)| run_one(m, &scenario, a, s)).into_iter().collect::<Result<Vec<_>, _>>()?;

    let summary: Vec<SummaryRow> = m
        .algorithms
        .iter()
        .map(|&a| {
            let series: Vec<Vec<EpisodeMetrics>> = runs.iter().filter(|r| r.algorithm == a).map(|r| r.metrics.clone()).collect();
            summarize(a, &series, m.summary_window)
        })
        .collect();
    let path = m.out_dir.join("summary.csv");
    let file = File::create(&path).map_err(io_err(&path))?;
    write_summary_csv(BufWriter::new(file), &summary).map_err(io_err(&path))?;

    let entries: Vec<EnergyEntry> = runs.iter().map(|r| EnergyEntry { algorithm: r.algorithm.label(), seed: r.seed, estimate: r.energy }).collect();
    let path = m.out_dir.join("train_energy.json");
    fs::write(&path, serde_json::to_string_pretty(&entries).expect("serializes")).map_err(io_err(&path))?;

    Ok(ExperimentReport { hash, runs, summary })
}

/// Rebuild the summary table from the metrics CSVs in `out_dir`.
pub fn recompute_summary(m: &RunManifest) -> Result<Vec<SummaryRow>, ExperimentError> {
    m.algorithms
        .iter()
        .map(|&a| {
            let series = m
                .seeds
                .iter()
                .map(|&s| {
                    let p = metrics_path(&m.out_dir, a, s);
                    let f = File::open(&p).map_err(io_err(&p))?;
                    read_metrics_csv(BufReader::new(f)).map_err(|msg| ExperimentError::Data { path: p.display().to_string(), msg })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(summarize(a, &series, m.summary_window))
        })
        .collect()
}

/// Greedy evaluation episode of a restored agent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub seed: u64,
    pub episode: usize,
    pub reward: f64,
    pub carbon_kg: f64,
    pub energy_j: f64,
    pub penalty: f64,
}

fn eval_seeds(ep_seed: u64, e: usize) -> (u64, u64) {
    (derive_seed(ep_seed, "eval-episode", e as u64), derive_seed(ep_seed, "eval-policy", e as u64))
}

/// `episodes` evaluation episodes per seed.
pub fn evaluate_checkpoint(
    ck: &Checkpoint,
    scenario: &Scenario,
    seeds: &[u64],
    episodes: usize,
    exec: Exec,
) -> Result<Vec<EvalRow>, ExperimentError> {
    let (agent, meta) = load_agent(ck, scenario)?;
    let jobs: Vec<(u64, usize)> = seeds.iter().flat_map(|&s| (0..episodes).map(move |e| (s, e))).collect();
    exec.map(&jobs, |&(seed, e)| {
        let (env, pol) = eval_seeds(seed, e);
        let s = evaluate_episode(agent.as_ref(), scenario, &meta.learner.penalties, env, pol, e)?;
        Ok(EvalRow { seed, episode: e, reward: s.reward, carbon_kg: s.carbon_kg, energy_j: s.energy_j, penalty: s.penalty })
    })
    .into_iter()
    .collect()
}

/// Write `trajectories_seed{seed}.csv` per seed with one row per UAV per
/// slot per episode. Returns the written paths.
pub fn export_trajectories(
    ck: &Checkpoint,
    scenario: &Scenario,
    seeds: &[u64],
    episodes: usize,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ExperimentError> {
    let (agent, meta) = load_agent(ck, scenario)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();
    for &seed in seeds {
        let mut points: Vec<TrajectoryPoint> = Vec::new();
        for e in 0..episodes {
            let (env, pol) = eval_seeds(seed, e);
            points.extend(evaluate_episode(agent.as_ref(), scenario, &meta.learner.penalties, env, pol, e)?.trajectory);
        }
        let p = out_dir.join(format!("trajectories_seed{seed}.csv"));
        let f = File::create(&p).map_err(io_err(&p))?;
        write_trajectory_csv(BufWriter::new(f), &points).map_err(io_err(&p))?;
        written.push(p);
    }
    Ok(written)
}
