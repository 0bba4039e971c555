//! Dynamic neuron masking of hidden layers by weight magnitude.

use ndarray::Array2;
use serde::Serialize;
use thiserror::Error;

use crate::nn::{DenseNet, NnError};

#[derive(Debug, Error, PartialEq)]
pub enum PruningError {
    #[error("pruning rate must lie in [0, 1), got {0}")]
    InvalidRate(f64),
    #[error(transparent)]
    Net(#[from] NnError),
}

/// Live-unit flags for every hidden layer of one net.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneMask {
    pub rate: f64,
    pub episode: usize,
    /// `layers[l][j]` is false when unit `j` of hidden layer `l` is masked.
    pub layers: Vec<Vec<bool>>,
}

impl PruneMask {
    pub fn masked_per_layer(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.iter().filter(|&&live| !live).count()).collect()
    }

    pub fn total_masked(&self) -> usize {
        self.masked_per_layer().iter().sum()
    }
}

/// L1 norm of each unit's weight row.
pub fn importance_scores(weight: &Array2<f64>) -> Vec<f64> {
    weight.rows().into_iter().map(|r| r.iter().map(|w| w.abs()).sum()).collect()
}

/// Indices of the `count` lowest scores, ties to the lower index.
pub fn lowest_units(scores: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order.truncate(count);
    order.sort_unstable();
    order
}

pub fn masked_count(units: usize, rate: f64) -> usize {
    (units as f64 * rate).floor() as usize
}

/// Score every hidden layer on its stored (unmasked) weights.
pub fn compute_mask(net: &DenseNet, rate: f64, episode: usize) -> Result<PruneMask, PruningError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(PruningError::InvalidRate(rate));
    }
    let hidden = &net.layers()[..net.layers().len() - 1];
    let layers = hidden
        .iter()
        .map(|l| {
            let scores = importance_scores(&l.weight);
            let mut live = vec![true; scores.len()];
            for j in lowest_units(&scores, masked_count(scores.len(), rate)) {
                live[j] = false;
            }
            live
        })
        .collect();
    Ok(PruneMask { rate, episode, layers })
}

/// Recompute and install unit masks on every hidden layer.
pub fn apply_mask(net: &mut DenseNet, rate: f64, episode: usize) -> Result<PruneMask, PruningError> {
    let mask = compute_mask(net, rate, episode)?;
    for (i, live) in mask.layers.iter().enumerate() {
        let m = if live.iter().all(|&b| b) { None } else { Some(live.clone()) };
        net.set_unit_mask(i, m)?;
    }
    Ok(mask)
}

pub fn clear_masks(net: &mut DenseNet) {
    for i in 0..net.layers().len() {
        net.set_unit_mask(i, None).expect("clearing a mask cannot fail");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn l1_row_scores() {
        let w = array![[1.0, 1.0], [0.0, 0.0], [3.0, -3.0]];
        assert_eq!(importance_scores(&w), vec![2.0, 0.0, 6.0]);
        assert_eq!(importance_scores(&w.mapv(|v: f64| -v)), vec![2.0, 0.0, 6.0]);
    }

    #[test]
    fn ties_mask_lowest_index() {
        assert_eq!(lowest_units(&[0.0; 5], 2), vec![0, 1]);
        assert_eq!(lowest_units(&[3.0, 1.0, 1.0, 0.5], 2), vec![1, 3]);
    }

    #[test]
    fn cardinality() {
        assert_eq!(masked_count(10, 0.25), 2);
        assert_eq!(masked_count(10, 0.1), 1);
        assert_eq!(masked_count(7, 0.0), 0);
        let mut net = DenseNet::new(&[3, 10, 6, 2], Activation::Mish, Activation::Identity, &mut ChaCha8Rng::seed_from_u64(1));
        let m = apply_mask(&mut net, 0.5, 0).unwrap();
        assert_eq!(m.masked_per_layer(), vec![5, 3]);
        assert!(net.layers()[2].unit_mask().is_none());
    }

    #[test]
    fn rate_range_checked() {
        let mut net = DenseNet::new(&[2, 4, 1], Activation::Relu, Activation::Identity, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(apply_mask(&mut net, 1.0, 0), Err(PruningError::InvalidRate(1.0)));
        assert!(apply_mask(&mut net, -0.1, 0).is_err());
    }

    #[test]
    fn zero_rate_is_identity() {
        let mut net = DenseNet::new(&[3, 8, 2], Activation::Mish, Activation::Identity, &mut ChaCha8Rng::seed_from_u64(2));
        let before = net.predict_one(&[0.1, -0.4, 0.9]).unwrap();
        apply_mask(&mut net, 0.0, 0).unwrap();
        assert_eq!(net.predict_one(&[0.1, -0.4, 0.9]).unwrap(), before);
    }
}
