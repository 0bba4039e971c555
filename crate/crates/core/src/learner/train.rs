use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Agent, DiffusionAgent, GaussianSac, LearnerConfig, LearnerError, RandomPolicy, UpdateMode, UpdateStats, Variant};
use crate::exec::derive_seed;
use crate::kinematics::TrajectoryPoint;
use crate::mdp::{action_dim, state_dim, CarbonEnv, PenaltyWeights, ReplayBuffer, Transition};
use crate::scenario::Scenario;

/// Every algorithm the runner can train. Serialized as its label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Algorithm {
    Diffusion(Variant),
    Sac,
    Random,
}

impl Algorithm {
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Diffusion(v) => v.label(),
            Algorithm::Sac => "SAC",
            Algorithm::Random => "Random",
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        let all = Variant::ALL.map(Algorithm::Diffusion);
        all.into_iter().chain([Algorithm::Sac, Algorithm::Random]).find(|a| a.label().eq_ignore_ascii_case(label))
    }
}

impl TryFrom<String> for Algorithm {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        Algorithm::parse(&s).ok_or_else(|| format!("unknown algorithm `{s}`"))
    }
}

impl From<Algorithm> for String {
    fn from(a: Algorithm) -> String {
        a.label().to_string()
    }
}

/// Fresh agent for `algorithm`, initialized from `seed`. Diffusion variants
/// sharing a seed start from identical networks.
pub fn build_agent(
    algorithm: Algorithm,
    scenario: &Scenario,
    cfg: &LearnerConfig,
    seed: u64,
) -> Result<Box<dyn Agent + Send + Sync>, LearnerError> {
    let (m, k) = (scenario.config.num_uavs, scenario.config.num_users);
    let (sd, ad) = (state_dim(m, k), action_dim(m, k));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "init", 0));
    Ok(match algorithm {
        Algorithm::Diffusion(v) => Box::new(DiffusionAgent::new(v.label(), sd, ad, &cfg.with_variant(v), &mut rng)?),
        Algorithm::Sac => Box::new(GaussianSac::new(sd, ad, cfg, &mut rng)?),
        Algorithm::Random => Box::new(RandomPolicy { action_dim: ad }),
    })
}

/// One evaluation or training episode, summed over slots.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeSummary {
    pub reward: f64,
    pub carbon_kg: f64,
    pub energy_j: f64,
    /// Weighted constraint penalty before reward scaling.
    pub penalty: f64,
    pub trajectory: Vec<TrajectoryPoint>,
}

/// Greedy episode on world `env_seed`; policy noise comes from `policy_seed`.
pub fn evaluate_episode(
    agent: &dyn Agent,
    scenario: &Scenario,
    weights: &PenaltyWeights,
    env_seed: u64,
    policy_seed: u64,
    episode: usize,
) -> Result<EpisodeSummary, LearnerError> {
    let mut env = CarbonEnv::new(scenario.clone(), *weights);
    let mut rng = ChaCha8Rng::seed_from_u64(policy_seed);
    let (mut world, mut state) = env.reset(env_seed);
    let mut out = EpisodeSummary::default();
    loop {
        for (i, p) in world.uav_pos.iter().enumerate() {
            out.trajectory.push(TrajectoryPoint { episode, slot: world.slot, uav_id: i, x: p.x, y: p.y });
        }
        let a = agent.act(&state, &mut rng, false)?;
        let step = env.step(&a)?;
        out.reward += step.reward;
        out.carbon_kg += step.energy.carbon;
        out.energy_j += step.energy.total;
        out.penalty += step.violations.penalty(weights);
        world = step.next_world;
        state = step.next_state;
        if step.done {
            return Ok(out);
        }
    }
}

/// Per-episode training record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub test_reward: f64,
    pub carbon_kg: f64,
    pub penalty: f64,
    /// Means over the episode's updates; `None` when no update ran.
    pub l_act: Option<f64>,
    pub l_diff: Option<f64>,
    pub critic_loss: Option<f64>,
    pub masked_neurons: Vec<usize>,
}

pub const METRICS_HEADER: &str = "episode,test_reward,carbon_kg,penalty,l_act,l_diff,critic_loss,masked_neurons";

/// Train `agent` for `cfg.episodes` episodes. `on_episode` sees every
/// metrics row as it is produced.
pub fn train(
    agent: &mut dyn Agent,
    scenario: &Scenario,
    cfg: &LearnerConfig,
    seed: u64,
    mut on_episode: impl FnMut(&EpisodeMetrics, &dyn Agent) -> Result<(), LearnerError>,
) -> Result<Vec<EpisodeMetrics>, LearnerError> {
    cfg.validate()?;
    let mut env = CarbonEnv::new(scenario.clone(), cfg.penalties);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "train", 0));
    let mut metrics = Vec::with_capacity(cfg.episodes);

    for episode in 0..cfg.episodes {
        if cfg.prune_at_episode_start {
            agent.prune(episode)?;
        }
        let mut stats: Vec<UpdateStats> = Vec::new();
        let (_, mut state) = env.reset(derive_seed(seed, "train-episode", episode as u64));
        loop {
            let action = agent.act(&state, &mut rng, true)?;
            let step = env.step(&action)?;
            buffer.push(Transition { state, action, reward: step.reward, next_state: step.next_state.clone(), done: step.done });
            if cfg.update_mode == UpdateMode::PerSlot {
                for _ in 0..cfg.updates_per_step {
                    stats.extend(agent.update(&buffer, &mut rng)?);
                }
            }
            state = step.next_state;
            if step.done {
                break;
            }
        }
        if !cfg.prune_at_episode_start {
            agent.prune(episode)?;
        }
        if cfg.update_mode == UpdateMode::PerEpisode {
            for _ in 0..cfg.updates_per_step {
                stats.extend(agent.update(&buffer, &mut rng)?);
            }
        }

        let test = evaluate_episode(
            agent,
            scenario,
            &cfg.penalties,
            derive_seed(seed, "test-episode", episode as u64),
            derive_seed(seed, "test-policy", episode as u64),
            episode,
        )?;
        let mean = |f: fn(&UpdateStats) -> f64| (!stats.is_empty()).then(|| stats.iter().map(f).sum::<f64>() / stats.len() as f64);
        let row = EpisodeMetrics {
            episode,
            test_reward: test.reward,
            carbon_kg: test.carbon_kg,
            penalty: test.penalty,
            l_act: mean(|s| s.l_act),
            l_diff: mean(|s| s.l_diff),
            critic_loss: mean(|s| s.critic_loss),
            masked_neurons: agent.masked_neurons(),
        };
        on_episode(&row, agent)?;
        metrics.push(row);
    }
    Ok(metrics)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_metrics_csv<W: Write>(mut w: W, rows: &[EpisodeMetrics]) -> std::io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        let masked: Vec<String> = r.masked_neurons.iter().map(|c| c.to_string()).collect();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.episode,
            r.test_reward,
            r.carbon_kg,
            r.penalty,
            opt(r.l_act),
            opt(r.l_diff),
            opt(r.critic_loss),
            masked.join(";")
        )?;
    }
    Ok(())
}

/// Inverse of [`write_metrics_csv`].
pub fn read_metrics_csv<R: BufRead>(r: R) -> Result<Vec<EpisodeMetrics>, String> {
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h == METRICS_HEADER => {}
        _ => return Err("missing metrics header".into()),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(format!("line {}: expected 8 fields", i + 2));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {e}", i + 2));
        let maybe = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
        rows.push(EpisodeMetrics {
            episode: f[0].parse().map_err(|e| format!("line {}: {e}", i + 2))?,
            test_reward: num(f[1])?,
            carbon_kg: num(f[2])?,
            penalty: num(f[3])?,
            l_act: maybe(f[4])?,
            l_diff: maybe(f[5])?,
            critic_loss: maybe(f[6])?,
            masked_neurons: if f[7].is_empty() {
                Vec::new()
            } else {
                f[7].split(';').map(|c| c.parse().map_err(|e| format!("line {}: {e}", i + 2))).collect::<Result<_, _>>()?
            },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::default_scenario;

    fn tiny() -> (Scenario, LearnerConfig) {
        let s = default_scenario().with_dims(2, 3, 5);
        let cfg = LearnerConfig { episodes: 3, hidden: vec![8], batch_size: 4, buffer_capacity: 64, update_mode: UpdateMode::PerSlot, ..LearnerConfig::default() };
        (s, cfg)
    }

    #[test]
    fn zero_episodes_means_no_metrics() {
        let (s, cfg) = tiny();
        let cfg = LearnerConfig { episodes: 0, ..cfg };
        let mut agent = build_agent(Algorithm::Diffusion(Variant::R2dsac), &s, &cfg, 1).unwrap();
        let before = agent.actor_params();
        assert!(train(agent.as_mut(), &s, &cfg, 1, |_, _| Ok(())).unwrap().is_empty());
        assert_eq!(agent.actor_params(), before);
    }

    #[test]
    fn training_is_deterministic() {
        let (s, cfg) = tiny();
        let run = |alg| {
            let mut agent = build_agent(alg, &s, &cfg, 7).unwrap();
            let rows = train(agent.as_mut(), &s, &cfg, 7, |_, _| Ok(())).unwrap();
            let mut buf = Vec::new();
            write_metrics_csv(&mut buf, &rows).unwrap();
            buf
        };
        for alg in [Algorithm::Diffusion(Variant::R2dsac), Algorithm::Sac, Algorithm::Random] {
            let a = run(alg);
            assert_eq!(a, run(alg));
            assert_eq!(String::from_utf8(a).unwrap().lines().count(), 4);
        }
    }

    #[test]
    fn metrics_round_trip() {
        let rows = vec![
            EpisodeMetrics { episode: 0, test_reward: -1.25, carbon_kg: 1e-3, penalty: 0.5, l_act: None, l_diff: None, critic_loss: None, masked_neurons: vec![] },
            EpisodeMetrics { episode: 1, test_reward: -0.1, carbon_kg: 2e-3, penalty: 0.0, l_act: Some(0.3), l_diff: Some(1.5), critic_loss: Some(2.0), masked_neurons: vec![6, 6] },
        ];
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &rows).unwrap();
        assert_eq!(read_metrics_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn algorithm_labels_parse() {
        for a in [Algorithm::Diffusion(Variant::Bcdsac), Algorithm::Sac, Algorithm::Random] {
            assert_eq!(Algorithm::parse(a.label()), Some(a));
        }
        assert_eq!(Algorithm::parse("r2dsac"), Some(Algorithm::Diffusion(Variant::R2dsac)));
        assert_eq!(Algorithm::parse("ppo"), None);
    }
}
