//! Carbon-aware multi-UAV edge computing: simulator, diffusion-policy
//! learner with dynamic pruning, and a deterministic hybrid retrieval core.

pub mod channel;
pub mod diffusion;
pub mod energy;
pub mod exec;
pub mod experiment;
pub mod kinematics;
pub mod learner;
pub mod mdp;
pub mod nn;
pub mod pruning;
pub mod retrieval;
pub mod scenario;

pub use exec::{derive_seed, Exec};
