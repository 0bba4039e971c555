use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LearnerError;
use crate::mdp::PenaltyWeights;
use crate::nn::Activation;

/// When gradient updates happen relative to environment steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// One update after each episode's rollout.
    #[default]
    PerEpisode,
    /// One update after every environment step.
    PerSlot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub gamma: f64,
    /// Entropy temperature.
    pub beta: f64,
    /// Split between the action-entropy and denoising losses.
    pub rho: f64,
    /// Overrides `rho` for the action-entropy loss weight.
    pub lambda_act: Option<f64>,
    /// Overrides `1 − rho` for the denoising loss weight.
    pub lambda_diff: Option<f64>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub soft_update_rate: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub episodes: usize,
    pub action_entropy_on: bool,
    pub diffusion_reg_on: bool,
    pub pruning_on: bool,
    pub q_weight_normalize: bool,
    pub prune_rate: f64,
    /// Prune before the rollout instead of between rollout and update.
    pub prune_at_episode_start: bool,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub time_embed_dim: usize,
    pub diffusion_steps: usize,
    pub psi_min: f64,
    pub psi_max: f64,
    pub log_prob_var_floor: f64,
    pub update_mode: UpdateMode,
    pub updates_per_step: usize,
    /// Episodes between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub penalties: PenaltyWeights,
}

/// False for negative values and NaN.
fn non_negative(v: f64) -> bool {
    v >= 0.0
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            beta: 0.05,
            rho: 0.9,
            lambda_act: None,
            lambda_diff: None,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            soft_update_rate: 0.005,
            batch_size: 256,
            buffer_capacity: 100_000,
            episodes: 1000,
            action_entropy_on: true,
            diffusion_reg_on: true,
            pruning_on: true,
            q_weight_normalize: true,
            prune_rate: 0.1,
            prune_at_episode_start: false,
            hidden: vec![256, 256],
            activation: Activation::Mish,
            time_embed_dim: 16,
            diffusion_steps: 3,
            psi_min: 0.1,
            psi_max: 10.0,
            log_prob_var_floor: 1e-2,
            update_mode: UpdateMode::PerEpisode,
            updates_per_step: 1,
            checkpoint_every: 0,
            penalties: PenaltyWeights::default(),
        }
    }
}

/// The four regularizer/pruning combinations compared in ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    R2dsac,
    Bcdsac,
    Tdsac,
    Dsac,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::R2dsac, Variant::Bcdsac, Variant::Tdsac, Variant::Dsac];

    pub fn label(self) -> &'static str {
        match self {
            Variant::R2dsac => "R2DSAC",
            Variant::Bcdsac => "BCDSAC",
            Variant::Tdsac => "TDSAC",
            Variant::Dsac => "DSAC",
        }
    }

    /// `(action_entropy_on, diffusion_reg_on, pruning_on)`.
    pub fn flags(self) -> (bool, bool, bool) {
        match self {
            Variant::R2dsac => (true, true, true),
            Variant::Bcdsac => (true, true, false),
            Variant::Tdsac => (false, false, true),
            Variant::Dsac => (false, false, false),
        }
    }
}

impl LearnerConfig {
    pub fn act_weight(&self) -> f64 {
        self.lambda_act.unwrap_or(self.rho)
    }

    pub fn diff_weight(&self) -> f64 {
        self.lambda_diff.unwrap_or(1.0 - self.rho)
    }

    pub fn with_variant(&self, v: Variant) -> Self {
        let (a, d, p) = v.flags();
        Self { action_entropy_on: a, diffusion_reg_on: d, pruning_on: p, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |msg: &str| Err(LearnerError::Config(msg.to_string()));
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !non_negative(self.beta) {
            return bad("beta must be ≥ 0");
        }
        if !unit(self.rho) {
            return bad("rho must lie in [0, 1]");
        }
        if self.lambda_act.is_some_and(|v| !non_negative(v)) || self.lambda_diff.is_some_and(|v| !non_negative(v)) {
            return bad("lambda_act and lambda_diff must be ≥ 0");
        }
        if !(self.actor_lr > 0.0 && self.actor_lr <= 1.0 && self.critic_lr > 0.0 && self.critic_lr <= 1.0) {
            return bad("learning rates must lie in (0, 1]");
        }
        if !(self.soft_update_rate > 0.0 && self.soft_update_rate <= 1.0) {
            return bad("soft_update_rate must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("batch_size must be positive and no larger than buffer_capacity");
        }
        if !(0.0..1.0).contains(&self.prune_rate) {
            return bad("prune_rate must lie in [0, 1)");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden must list at least one positive width");
        }
        if self.time_embed_dim < 2 || !self.time_embed_dim.is_multiple_of(2) {
            return bad("time_embed_dim must be even and ≥ 2");
        }
        if self.diffusion_steps == 0 || !(self.psi_min > 0.0 && self.psi_min < self.psi_max) {
            return bad("diffusion schedule needs steps ≥ 1 and 0 < psi_min < psi_max");
        }
        if self.log_prob_var_floor.is_nan() || self.log_prob_var_floor <= 0.0 {
            return bad("log_prob_var_floor must be positive");
        }
        if self.updates_per_step == 0 {
            return bad("updates_per_step must be ≥ 1");
        }
        let p = &self.penalties;
        if [p.area, p.collision, p.coverage, p.capacity, p.reward_scale].iter().any(|&v| !non_negative(v)) {
            return bad("penalty weights and reward_scale must be ≥ 0");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, LearnerError> {
        let cfg: Self = toml::from_str(text).map_err(|e| LearnerError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, LearnerError> {
        let text = std::fs::read_to_string(path).map_err(|e| LearnerError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = LearnerConfig::default();
        c.validate().unwrap();
        assert_eq!(LearnerConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!((c.act_weight(), c.diff_weight()), (0.9, 1.0 - 0.9));
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let c = LearnerConfig::from_toml("episodes = 5\nupdate_mode = \"per_slot\"\n[penalties]\narea = 2.0\ncollision = 1.0\ncoverage = 1.0\ncapacity = 1.0\nreward_scale = 1.0\n").unwrap();
        assert_eq!(c.episodes, 5);
        assert_eq!(c.update_mode, UpdateMode::PerSlot);
        assert_eq!(c.penalties.area, 2.0);
        assert_eq!(c.gamma, 0.95);
    }

    #[test]
    fn bad_values_rejected() {
        assert!(LearnerConfig::from_toml("gamma = 1.5").is_err());
        assert!(LearnerConfig::from_toml("prune_rate = 1.0").is_err());
        assert!(LearnerConfig::from_toml("no_such_key = 1").is_err());
    }

    #[test]
    fn variant_flags() {
        let c = LearnerConfig::default().with_variant(Variant::Tdsac);
        assert_eq!((c.action_entropy_on, c.diffusion_reg_on, c.pruning_on), (false, false, true));
        assert_eq!(Variant::ALL.map(|v| v.label()), ["R2DSAC", "BCDSAC", "TDSAC", "DSAC"]);
    }
}
