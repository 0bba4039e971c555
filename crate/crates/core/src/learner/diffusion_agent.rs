use ndarray::{Array2, ArrayView2};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::critic::{td_targets, Batch, CriticPair, TargetPolicy, TwinQ};
use super::{restore_net, restore_optimizer, Agent, LearnerConfig, LearnerError, UpdateStats};
use crate::diffusion::{DiffusionPolicy, DiffusionSchedule};
use crate::mdp::{ReplayBuffer, StateVec};
use crate::nn::{AdamState, Checkpoint, NetGrads};
use crate::pruning::{apply_mask, PruneMask};

/// Zero-mean, unit-variance copy of `w`; constant input maps to zeros.
pub fn standardize(w: &[f64]) -> Vec<f64> {
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var <= 1e-24 {
        return vec![0.0; w.len()];
    }
    let sd = var.sqrt();
    w.iter().map(|v| (v - mean) / sd).collect()
}

fn normal_matrix(rows: usize, cols: usize, rng: &mut dyn RngCore) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample::<f64, _>(StandardNormal))
}

/// Policy-loss terms and the actor gradient of the weighted total.
#[derive(Debug, Clone)]
pub struct PolicyLoss {
    pub total: f64,
    pub l_act: f64,
    pub l_diff: f64,
    /// Critic weights actually applied to each `log π` term.
    pub weights: Vec<f64>,
    /// `None` when both terms are disabled.
    pub grads: Option<NetGrads>,
}

/// `ρ_act·L_act + ρ_diff·L_diff` with
/// `L_act = β·mean log π(a_π|s) − mean w·log π(a_π|s)` and
/// `L_diff = mean ‖ε − ε_θ(noised buffer action, s, t)‖²`.
pub fn policy_loss<C: TwinQ + ?Sized>(
    batch: &Batch,
    actor: &DiffusionPolicy,
    critics: &C,
    cfg: &LearnerConfig,
    rng: &mut dyn RngCore,
) -> Result<PolicyLoss, LearnerError> {
    if batch.is_empty() {
        return Err(LearnerError::EmptyBatch);
    }
    let b = batch.len();
    let a_dim = actor.action_dim;
    let mut grads: Option<NetGrads> = None;
    let mut accumulate = |g: NetGrads, k: f64| {
        let mut g = g;
        g.scale(k);
        match &mut grads {
            Some(acc) => acc.add_assign(&g),
            None => grads = Some(g),
        }
    };

    let (mut l_act, mut weights) = (0.0, Vec::new());
    if cfg.action_entropy_on {
        let a_pi = actor.sample_batch(batch.states.view(), rng)?;
        let (q1, q2) = critics.twin_q(batch.states.view(), a_pi.view())?;
        let q: Vec<f64> = q1.iter().zip(&q2).map(|(a, b)| a.min(*b)).collect();
        weights = if cfg.q_weight_normalize { standardize(&q) } else { q };
        let coef: Vec<f64> = weights.iter().map(|w| (cfg.beta - w) / b as f64).collect();
        let noise = normal_matrix(b, a_dim, rng);
        let (logp, g) = actor.log_prob_grad(a_pi.view(), batch.states.view(), noise.view(), cfg.log_prob_var_floor, &coef)?;
        l_act = logp.iter().zip(&coef).map(|(l, c)| l * c).sum();
        accumulate(g, cfg.act_weight());
    }

    let mut l_diff = 0.0;
    if cfg.diffusion_reg_on {
        let steps: Vec<usize> = (0..b).map(|_| rng.random_range(1..=actor.schedule.steps)).collect();
        let noise = normal_matrix(b, a_dim, rng);
        let (loss, g) = actor.denoising_loss_grad(batch.actions.view(), batch.states.view(), &steps, noise.view())?;
        l_diff = loss;
        accumulate(g, cfg.diff_weight());
    }

    let total = cfg.act_weight() * l_act + cfg.diff_weight() * l_diff;
    Ok(PolicyLoss { total, l_act, l_diff, weights, grads })
}

/// Diffusion actor with twin critics and optional dynamic pruning.
#[derive(Debug, Clone)]
pub struct DiffusionAgent {
    pub cfg: LearnerConfig,
    pub actor: DiffusionPolicy,
    pub target_actor: DiffusionPolicy,
    pub critics: CriticPair,
    pub actor_opt: AdamState,
    label: String,
    masks: Option<(PruneMask, PruneMask)>,
}

struct DiffusionTarget<'a> {
    policy: &'a DiffusionPolicy,
    var_floor: f64,
}

impl TargetPolicy for DiffusionTarget<'_> {
    fn sample_with_log_prob(&self, states: ArrayView2<f64>, rng: &mut dyn RngCore) -> Result<(Array2<f64>, Vec<f64>), LearnerError> {
        let a = self.policy.sample_batch(states, rng)?;
        let noise = normal_matrix(a.nrows(), a.ncols(), rng);
        let zeros = vec![0.0; a.nrows()];
        let (logp, _) = self.policy.log_prob_grad(a.view(), states, noise.view(), self.var_floor, &zeros)?;
        Ok((a, logp))
    }
}

impl DiffusionAgent {
    pub fn new(label: &str, state_dim: usize, action_dim: usize, cfg: &LearnerConfig, rng: &mut dyn RngCore) -> Result<Self, LearnerError> {
        cfg.validate()?;
        let schedule = DiffusionSchedule::new(cfg.diffusion_steps, cfg.psi_min, cfg.psi_max)?;
        let actor = DiffusionPolicy::new(state_dim, action_dim, &cfg.hidden, cfg.activation, cfg.time_embed_dim, schedule, rng);
        let critics = CriticPair::new(state_dim, action_dim, &cfg.hidden, cfg.activation, cfg.critic_lr, rng);
        Ok(Self {
            actor_opt: AdamState::for_net(&actor.net, cfg.actor_lr),
            target_actor: actor.clone(),
            actor,
            critics,
            cfg: cfg.clone(),
            label: label.to_string(),
            masks: None,
        })
    }

    /// Rebuild the acting policy from a checkpoint written by [`Agent::checkpoint`].
    pub fn policy_from_checkpoint(ck: &Checkpoint, cfg: &LearnerConfig, state_dim: usize, action_dim: usize) -> Result<DiffusionPolicy, LearnerError> {
        let net = ck.net("actor").ok_or_else(|| LearnerError::Config("checkpoint has no actor".into()))?.clone();
        let schedule = DiffusionSchedule::new(cfg.diffusion_steps, cfg.psi_min, cfg.psi_max)?;
        Ok(DiffusionPolicy::from_net(net, schedule, state_dim, action_dim)?)
    }

    fn prune_now(&mut self, episode: usize) -> Result<(), LearnerError> {
        let a = apply_mask(&mut self.actor.net, self.cfg.prune_rate, episode)?;
        let t = apply_mask(&mut self.target_actor.net, self.cfg.prune_rate, episode)?;
        self.masks = Some((a, t));
        Ok(())
    }

    fn update_once(&mut self, buffer: &ReplayBuffer, rng: &mut dyn RngCore) -> Result<UpdateStats, LearnerError> {
        let sample = buffer.sample(rng, self.cfg.batch_size)?;
        let batch = Batch::from_transitions(&sample);
        let target = DiffusionTarget { policy: &self.target_actor, var_floor: self.cfg.log_prob_var_floor };
        let y = td_targets(&batch, &self.critics.targets(), &target, self.cfg.gamma, self.cfg.beta, rng)?;
        let critic_loss = self.critics.update(batch.states.view(), batch.actions.view(), &y)?;
        let pl = policy_loss(&batch, &self.actor, &self.critics, &self.cfg, rng)?;
        if let Some(g) = &pl.grads {
            self.actor_opt.step_net(&mut self.actor.net, g)?;
        }
        self.critics.soft_update_targets(self.cfg.soft_update_rate)?;
        crate::nn::soft_update(&mut self.target_actor.net, &self.actor.net, self.cfg.soft_update_rate)?;
        Ok(UpdateStats { critic_loss, l_act: pl.l_act, l_diff: pl.l_diff })
    }
}

impl Agent for DiffusionAgent {
    fn name(&self) -> &str {
        &self.label
    }

    fn act(&self, state: &StateVec, rng: &mut dyn RngCore, _explore: bool) -> Result<Vec<f64>, LearnerError> {
        Ok(self.actor.reverse_sample(&state.normalized, rng)?.0)
    }

    fn act_batch(&self, states: ArrayView2<f64>, rng: &mut dyn RngCore, _explore: bool) -> Result<Array2<f64>, LearnerError> {
        Ok(self.actor.sample_batch(states, rng)?)
    }

    fn prune(&mut self, episode: usize) -> Result<(), LearnerError> {
        if self.cfg.pruning_on {
            self.prune_now(episode)?;
        }
        Ok(())
    }

    fn update(&mut self, buffer: &ReplayBuffer, rng: &mut dyn RngCore) -> Result<Option<UpdateStats>, LearnerError> {
        if buffer.len() < self.cfg.batch_size {
            return Ok(None);
        }
        self.update_once(buffer, rng).map(Some)
    }

    fn actor_params(&self) -> Vec<f64> {
        self.actor.net.params_flat()
    }

    fn masked_neurons(&self) -> Vec<usize> {
        match &self.masks {
            Some((a, _)) => a.masked_per_layer(),
            None => vec![0; self.cfg.hidden.len()],
        }
    }

    fn checkpoint(&self, meta: String) -> Checkpoint {
        Checkpoint {
            meta,
            nets: vec![
                ("actor".into(), self.actor.net.clone()),
                ("target_actor".into(), self.target_actor.net.clone()),
                ("q1".into(), self.critics.q1.clone()),
                ("q2".into(), self.critics.q2.clone()),
                ("target_q1".into(), self.critics.target1.clone()),
                ("target_q2".into(), self.critics.target2.clone()),
            ],
            optimizers: vec![
                ("actor".into(), self.actor_opt.clone()),
                ("q1".into(), self.critics.opt1.clone()),
                ("q2".into(), self.critics.opt2.clone()),
            ],
        }
    }

    fn restore(&mut self, ck: &Checkpoint) -> Result<(), LearnerError> {
        restore_net(ck, "actor", &mut self.actor.net)?;
        restore_net(ck, "target_actor", &mut self.target_actor.net)?;
        restore_optimizer(ck, "actor", &mut self.actor_opt)?;
        self.critics.restore(ck)
    }
}
