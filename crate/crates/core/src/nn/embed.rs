use serde::{Deserialize, Serialize};

/// Sinusoidal embedding of a diffusion step index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeEmbedding {
    pub dim: usize,
    pub base: f64,
}

impl TimeEmbedding {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 2 && dim.is_multiple_of(2), "time embedding dimension must be even");
        Self { dim, base: 10_000.0 }
    }

    /// Interleaved `(sin(t·ω_i), cos(t·ω_i))` with `ω_i = base^(−i/(dim/2))`.
    pub fn embed(&self, t: usize) -> Vec<f64> {
        let half = self.dim / 2;
        let mut out = Vec::with_capacity(self.dim);
        for i in 0..half {
            let freq = self.base.powf(-(i as f64) / half as f64);
            let angle = t as f64 * freq;
            out.push(angle.sin());
            out.push(angle.cos());
        }
        out
    }
}

pub fn time_embed(t: usize, dim: usize) -> Vec<f64> {
    TimeEmbedding::new(dim).embed(t)
}
