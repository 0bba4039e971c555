//! Dense networks with reverse-mode gradients, Adam, time embeddings and
//! checkpoints.

mod adam;
mod checkpoint;
mod dense;
mod embed;

pub use adam::AdamState;
pub use checkpoint::Checkpoint;
pub use dense::{soft_update, Activation, DenseLayer, DenseNet, ForwardCache, NetGrads};
pub use embed::{time_embed, TimeEmbedding};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("backward called with a cache from a different parameter state")]
    StaleCache,
    #[error("architecture: {0}")]
    Architecture(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PartialEq for NnError {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::Dimension { expected: a, got: b }, Self::Dimension { expected: c, got: d }) => a == c && b == d,
            (Self::StaleCache, Self::StaleCache) => true,
            (Self::Architecture(a), Self::Architecture(b)) | (Self::Checkpoint(a), Self::Checkpoint(b)) => a == b,
            (Self::Io(a), Self::Io(b)) => a.kind() == b.kind(),
            _ => false,
        }
    }
}
