//! Gaussian-policy SAC and a uniform-random policy.

use ndarray::{s, Array2, ArrayView2};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::critic::{td_targets, Batch, CriticPair, TargetPolicy};
use super::{restore_net, restore_optimizer, Agent, LearnerConfig, LearnerError, UpdateStats};
use crate::mdp::{ReplayBuffer, StateVec};
use crate::nn::{AdamState, Checkpoint, DenseNet, NetGrads};

const LOG_STD_MIN: f64 = -5.0;
const LOG_STD_MAX: f64 = 2.0;
const SQUASH_EPS: f64 = 1e-6;

/// Tanh-squashed diagonal Gaussian over a net emitting `[mean, log_std]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianActor {
    pub net: DenseNet,
    pub action_dim: usize,
}

/// Reparameterized draw with everything the policy gradient needs.
struct Draw {
    actions: Array2<f64>,
    log_prob: Vec<f64>,
    noise: Array2<f64>,
    log_std: Array2<f64>,
    clamped: Array2<bool>,
    cache: crate::nn::ForwardCache,
}

impl GaussianActor {
    pub fn new(state_dim: usize, action_dim: usize, hidden: &[usize], activation: crate::nn::Activation, rng: &mut dyn RngCore) -> Self {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * action_dim);
        Self { net: DenseNet::new(&sizes, activation, crate::nn::Activation::Identity, rng), action_dim }
    }

    /// `tanh(mean)`.
    pub fn deterministic(&self, states: ArrayView2<f64>) -> Result<Array2<f64>, LearnerError> {
        let out = self.net.predict(states)?;
        Ok(out.slice(s![.., ..self.action_dim]).mapv(f64::tanh))
    }

    fn draw(&self, states: ArrayView2<f64>, rng: &mut dyn RngCore) -> Result<Draw, LearnerError> {
        let (out, cache) = self.net.forward(states)?;
        let (b, a) = (states.nrows(), self.action_dim);
        let noise = Array2::from_shape_simple_fn((b, a), || rng.sample::<f64, _>(StandardNormal));
        let raw_ls = out.slice(s![.., a..]).to_owned();
        let clamped = raw_ls.mapv(|v| !(LOG_STD_MIN..=LOG_STD_MAX).contains(&v));
        let log_std = raw_ls.mapv(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
        let mut actions = Array2::zeros((b, a));
        let mut log_prob = vec![0.0; b];
        let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        for i in 0..b {
            for j in 0..a {
                let u = out[[i, j]] + log_std[[i, j]].exp() * noise[[i, j]];
                let t = u.tanh();
                actions[[i, j]] = t;
                log_prob[i] += -0.5 * noise[[i, j]].powi(2) - log_std[[i, j]] - half_log_2pi - (1.0 - t * t + SQUASH_EPS).ln();
            }
        }
        Ok(Draw { actions, log_prob, noise, log_std, clamped, cache })
    }
}

impl TargetPolicy for GaussianActor {
    fn sample_with_log_prob(&self, states: ArrayView2<f64>, rng: &mut dyn RngCore) -> Result<(Array2<f64>, Vec<f64>), LearnerError> {
        let d = self.draw(states, rng)?;
        Ok((d.actions, d.log_prob))
    }
}

/// Soft actor-critic with a Gaussian actor, evaluated at its mean action.
#[derive(Debug, Clone)]
pub struct GaussianSac {
    pub cfg: LearnerConfig,
    pub actor: GaussianActor,
    pub critics: CriticPair,
    pub actor_opt: AdamState,
}

impl GaussianSac {
    pub fn new(state_dim: usize, action_dim: usize, cfg: &LearnerConfig, rng: &mut dyn RngCore) -> Result<Self, LearnerError> {
        cfg.validate()?;
        let actor = GaussianActor::new(state_dim, action_dim, &cfg.hidden, cfg.activation, rng);
        let critics = CriticPair::new(state_dim, action_dim, &cfg.hidden, cfg.activation, cfg.critic_lr, rng);
        Ok(Self { actor_opt: AdamState::for_net(&actor.net, cfg.actor_lr), actor, critics, cfg: cfg.clone() })
    }

    /// `mean(β·log π(a|s) − min Q(s, a))` with `a` reparameterized, and its
    /// actor gradient.
    fn actor_loss_grad(&self, batch: &Batch, rng: &mut dyn RngCore) -> Result<(f64, NetGrads), LearnerError> {
        let d = self.actor.draw(batch.states.view(), rng)?;
        let (q, dq) = self.critics.min_q_action_grad(batch.states.view(), d.actions.view())?;
        let (b, a) = (batch.len(), self.actor.action_dim);
        let beta = self.cfg.beta;
        let mut g = Array2::zeros((b, 2 * a));
        let mut loss = 0.0;
        for i in 0..b {
            loss += (beta * d.log_prob[i] - q[i]) / b as f64;
            for j in 0..a {
                let t = d.actions[[i, j]];
                let sech2 = 1.0 - t * t;
                // d/du of −log(1 − tanh²u + eps).
                let dsquash = 2.0 * t * sech2 / (sech2 + SQUASH_EPS);
                let du = beta * dsquash - dq[[i, j]] * sech2;
                let sigma_xi = d.log_std[[i, j]].exp() * d.noise[[i, j]];
                g[[i, j]] = du / b as f64;
                g[[i, a + j]] = if d.clamped[[i, j]] { 0.0 } else { (du * sigma_xi - beta) / b as f64 };
            }
        }
        let (grads, _) = self.actor.net.backward(&d.cache, g.view())?;
        Ok((loss, grads))
    }

    fn actor_step(&mut self, batch: &Batch, rng: &mut dyn RngCore) -> Result<f64, LearnerError> {
        let (loss, grads) = self.actor_loss_grad(batch, rng)?;
        self.actor_opt.step_net(&mut self.actor.net, &grads)?;
        Ok(loss)
    }
}

impl Agent for GaussianSac {
    fn name(&self) -> &str {
        "SAC"
    }

    fn act(&self, state: &StateVec, rng: &mut dyn RngCore, explore: bool) -> Result<Vec<f64>, LearnerError> {
        let view = ArrayView2::from_shape((1, state.normalized.len()), &state.normalized).expect("row");
        Ok(self.act_batch(view, rng, explore)?.into_raw_vec_and_offset().0)
    }

    fn act_batch(&self, states: ArrayView2<f64>, rng: &mut dyn RngCore, explore: bool) -> Result<Array2<f64>, LearnerError> {
        if explore {
            Ok(self.actor.draw(states, rng)?.actions)
        } else {
            self.actor.deterministic(states)
        }
    }

    fn update(&mut self, buffer: &ReplayBuffer, rng: &mut dyn RngCore) -> Result<Option<UpdateStats>, LearnerError> {
        if buffer.len() < self.cfg.batch_size {
            return Ok(None);
        }
        let sample = buffer.sample(rng, self.cfg.batch_size)?;
        let batch = Batch::from_transitions(&sample);
        let y = td_targets(&batch, &self.critics.targets(), &self.actor, self.cfg.gamma, self.cfg.beta, rng)?;
        let critic_loss = self.critics.update(batch.states.view(), batch.actions.view(), &y)?;
        let l_act = self.actor_step(&batch, rng)?;
        self.critics.soft_update_targets(self.cfg.soft_update_rate)?;
        Ok(Some(UpdateStats { critic_loss, l_act, l_diff: 0.0 }))
    }

    fn actor_params(&self) -> Vec<f64> {
        self.actor.net.params_flat()
    }

    fn checkpoint(&self, meta: String) -> Checkpoint {
        Checkpoint {
            meta,
            nets: vec![
                ("actor".into(), self.actor.net.clone()),
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
        restore_optimizer(ck, "actor", &mut self.actor_opt)?;
        self.critics.restore(ck)
    }
}

/// Uniform actions on `[-1, 1]^dim`.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    pub action_dim: usize,
}

impl Agent for RandomPolicy {
    fn name(&self) -> &str {
        "Random"
    }

    fn act(&self, _state: &StateVec, rng: &mut dyn RngCore, _explore: bool) -> Result<Vec<f64>, LearnerError> {
        Ok((0..self.action_dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
    }

    fn act_batch(&self, states: ArrayView2<f64>, rng: &mut dyn RngCore, _explore: bool) -> Result<Array2<f64>, LearnerError> {
        Ok(Array2::from_shape_simple_fn((states.nrows(), self.action_dim), || rng.random_range(-1.0..=1.0)))
    }

    fn update(&mut self, _: &ReplayBuffer, _: &mut dyn RngCore) -> Result<Option<UpdateStats>, LearnerError> {
        Ok(None)
    }

    fn actor_params(&self) -> Vec<f64> {
        Vec::new()
    }

    fn checkpoint(&self, meta: String) -> Checkpoint {
        Checkpoint { meta, ..Checkpoint::default() }
    }

    fn restore(&mut self, _ck: &Checkpoint) -> Result<(), LearnerError> {
        Ok(())
    }
}
