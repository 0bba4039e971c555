//! Actor-critic learners: the diffusion agent with its ablations, Gaussian
//! SAC, a random baseline, and the episode loop that trains any of them.

mod baselines;
mod config;
mod critic;
mod diffusion_agent;
mod train;

pub use baselines::{GaussianActor, GaussianSac, RandomPolicy};
pub use config::{LearnerConfig, UpdateMode, Variant};
pub use critic::{td_targets, Batch, CriticPair, TargetPolicy, TwinQ};
pub use diffusion_agent::{policy_loss, standardize, DiffusionAgent, PolicyLoss};
pub use train::{
    build_agent, evaluate_episode, read_metrics_csv, train, write_metrics_csv, Algorithm, EpisodeMetrics, EpisodeSummary,
    METRICS_HEADER,
};

use ndarray::{Array2, ArrayView2};
use rand::RngCore;
use thiserror::Error;

use crate::diffusion::DiffusionError;
use crate::mdp::{MdpError, ReplayBuffer, StateVec};
use crate::nn::{AdamState, Checkpoint, DenseNet, NnError};
use crate::pruning::PruningError;

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("invalid learner config: {0}")]
    Config(String),
    #[error("empty minibatch")]
    EmptyBatch,
    #[error(transparent)]
    Net(#[from] NnError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Pruning(#[from] PruningError),
    #[error("{0}")]
    Hook(String),
}

/// Losses from one gradient update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub l_act: f64,
    pub l_diff: f64,
}

/// Anything the episode loop can train and evaluate.
pub trait Agent {
    fn name(&self) -> &str;

    /// Raw action in `[-1, 1]^dim` for one state.
    fn act(&self, state: &StateVec, rng: &mut dyn RngCore, explore: bool) -> Result<Vec<f64>, LearnerError>;

    /// Row-wise actions over normalized states.
    fn act_batch(&self, states: ArrayView2<f64>, rng: &mut dyn RngCore, explore: bool) -> Result<Array2<f64>, LearnerError>;

    /// Recompute pruning masks; a no-op for agents without pruning.
    fn prune(&mut self, _episode: usize) -> Result<(), LearnerError> {
        Ok(())
    }

    /// One gradient update, or `None` while the buffer is too small.
    fn update(&mut self, buffer: &ReplayBuffer, rng: &mut dyn RngCore) -> Result<Option<UpdateStats>, LearnerError>;

    fn actor_params(&self) -> Vec<f64>;

    /// Masked units per hidden layer of the actor.
    fn masked_neurons(&self) -> Vec<usize> {
        Vec::new()
    }

    fn checkpoint(&self, meta: String) -> Checkpoint;

    /// Load networks and optimizer state written by [`Agent::checkpoint`].
    fn restore(&mut self, ck: &Checkpoint) -> Result<(), LearnerError>;
}

pub(crate) fn restore_net(ck: &Checkpoint, name: &str, into: &mut DenseNet) -> Result<(), LearnerError> {
    let net = ck.net(name).ok_or_else(|| LearnerError::Config(format!("checkpoint has no `{name}` network")))?;
    if !net.same_architecture(into) {
        return Err(LearnerError::Config(format!("checkpoint network `{name}` has a different architecture")));
    }
    *into = net.clone();
    Ok(())
}

pub(crate) fn restore_optimizer(ck: &Checkpoint, name: &str, into: &mut AdamState) -> Result<(), LearnerError> {
    let opt = ck.optimizer(name).ok_or_else(|| LearnerError::Config(format!("checkpoint has no `{name}` optimizer")))?;
    if opt.moments().0.len() != into.moments().0.len() {
        return Err(LearnerError::Config(format!("checkpoint optimizer `{name}` has the wrong size")));
    }
    *into = opt.clone();
    Ok(())
}
