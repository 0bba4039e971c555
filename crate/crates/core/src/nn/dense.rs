use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NnError;

/// Every parameter or mask mutation draws a fresh stamp, so a cache taken
/// from one net state can never validate against another.
static VERSION: AtomicU64 = AtomicU64::new(1);

fn next_version() -> u64 {
    VERSION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Mish,
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Mish => z * softplus(z).tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Mish => {
                let t = softplus(z).tanh();
                let sigmoid = 1.0 / (1.0 + (-z).exp());
                t + z * (1.0 - t * t) * sigmoid
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Mish => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
            Activation::Identity => 3,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => Activation::Mish,
            1 => Activation::Relu,
            2 => Activation::Tanh,
            3 => Activation::Identity,
            _ => return None,
        })
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Affine map followed by an activation. Weights are `out × in`.
///
/// A weight mask hides individual weights; a unit mask forces whole output
/// units to zero after the activation. Both leave the stored parameters
/// untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
    weight_mask: Option<Array2<f64>>,
    unit_mask: Option<Vec<bool>>,
}

impl DenseLayer {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Self {
        assert_eq!(weight.nrows(), bias.len(), "bias length must equal output width");
        Self { weight, bias, activation, weight_mask: None, unit_mask: None }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn weight_mask(&self) -> Option<&Array2<f64>> {
        self.weight_mask.as_ref()
    }

    /// `true` marks a live unit.
    pub fn unit_mask(&self) -> Option<&[bool]> {
        self.unit_mask.as_deref()
    }

    fn effective_weight(&self) -> Array2<f64> {
        match &self.weight_mask {
            Some(m) => &self.weight * m,
            None => self.weight.clone(),
        }
    }
}

/// Reverse-mode state recorded by [`DenseNet::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

/// Per-layer parameter gradients, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl NetGrads {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weight.raw_dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &NetGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.weights.iter_mut().for_each(|w| *w *= k);
        self.biases.iter_mut().for_each(|b| *b *= k);
    }

    /// Same ordering as [`DenseNet::params_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<DenseLayer>,
    version: u64,
}

impl DenseNet {
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::Architecture("a network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(NnError::Architecture(format!(
                    "layer {i} emits {} values but layer {} takes {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        Ok(Self { layers, version: next_version() })
    }

    /// Fully connected net over `sizes` (input, hidden..., output) with
    /// uniform fan-in initialization.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                let weight = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..=bound));
                let bias = Array1::from_shape_fn(fan_out, |_| rng.random_range(-bound..=bound));
                DenseLayer::new(weight, bias, if i + 1 == n { output } else { hidden })
            })
            .collect();
        Self::from_layers(layers).expect("sizes chain by construction")
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    /// Widths of every layer boundary, input first.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.layers.iter().map(|l| l.outputs())).collect()
    }

    pub fn same_architecture(&self, other: &DenseNet) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.activation == b.activation)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<(), NnError> {
        if flat.len() != self.param_count() {
            return Err(NnError::Dimension { expected: self.param_count(), got: flat.len() });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        self.version = next_version();
        Ok(())
    }

    /// Mutate layer parameters in place.
    pub fn update_layers(&mut self, f: impl FnOnce(&mut [DenseLayer])) {
        f(&mut self.layers);
        self.version = next_version();
    }

    pub fn set_weight_mask(&mut self, layer: usize, mask: Option<Array2<bool>>) -> Result<(), NnError> {
        let l = &mut self.layers[layer];
        if let Some(m) = &mask {
            if m.dim() != l.weight.dim() {
                return Err(NnError::Dimension { expected: l.weight.len(), got: m.len() });
            }
        }
        l.weight_mask = mask.map(|m| m.mapv(|keep| if keep { 1.0 } else { 0.0 }));
        self.version = next_version();
        Ok(())
    }

    pub fn set_unit_mask(&mut self, layer: usize, mask: Option<Vec<bool>>) -> Result<(), NnError> {
        let l = &mut self.layers[layer];
        if let Some(m) = &mask {
            if m.len() != l.outputs() {
                return Err(NnError::Dimension { expected: l.outputs(), got: m.len() });
            }
        }
        l.unit_mask = mask;
        self.version = next_version();
        Ok(())
    }

    pub(crate) fn restore_masks(&mut self, layer: usize, weight_mask: Option<Array2<f64>>, unit_mask: Option<Vec<bool>>) {
        self.layers[layer].weight_mask = weight_mask;
        self.layers[layer].unit_mask = unit_mask;
        self.version = next_version();
    }

    /// Batched forward pass; rows are samples.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache), NnError> {
        self.check_input(x.ncols())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for l in &self.layers {
            let z = h.dot(&l.effective_weight().t()) + &l.bias;
            let a = activate(l, &z);
            inputs.push(h);
            pre_activations.push(z);
            h = a;
        }
        Ok((h, ForwardCache { version: self.version, inputs, pre_activations }))
    }

    /// Forward pass without recording a cache.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(x.ncols())?;
        let mut h = x.to_owned();
        for l in &self.layers {
            let z = h.dot(&l.effective_weight().t()) + &l.bias;
            h = activate(l, &z);
        }
        Ok(h)
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    /// Gradients of `Σ grad_out ⊙ output` w.r.t. parameters and input.
    pub fn backward(&self, cache: &ForwardCache, grad_out: ArrayView2<f64>) -> Result<(NetGrads, Array2<f64>), NnError> {
        if cache.version != self.version {
            return Err(NnError::StaleCache);
        }
        let batch = cache.inputs[0].nrows();
        if grad_out.dim() != (batch, self.output_dim()) {
            return Err(NnError::Dimension { expected: batch * self.output_dim(), got: grad_out.len() });
        }
        let n = self.layers.len();
        let mut weights = vec![Array2::zeros((0, 0)); n];
        let mut biases = vec![Array1::zeros(0); n];
        let mut g = grad_out.to_owned();
        for i in (0..n).rev() {
            let l = &self.layers[i];
            if let Some(mask) = &l.unit_mask {
                zero_dead_columns(&mut g, mask);
            }
            let z = &cache.pre_activations[i];
            let act = l.activation;
            let dz = &g * &z.mapv(|v| act.derivative(v));
            let mut dw = dz.t().dot(&cache.inputs[i]);
            if let Some(m) = &l.weight_mask {
                dw *= m;
            }
            biases[i] = dz.sum_axis(Axis(0));
            weights[i] = dw;
            g = dz.dot(&l.effective_weight());
        }
        Ok((NetGrads { weights, biases }, g))
    }

    fn check_input(&self, got: usize) -> Result<(), NnError> {
        if got != self.input_dim() {
            return Err(NnError::Dimension { expected: self.input_dim(), got });
        }
        Ok(())
    }
}

fn activate(l: &DenseLayer, z: &Array2<f64>) -> Array2<f64> {
    let act = l.activation;
    let mut a = z.mapv(|v| act.apply(v));
    if let Some(mask) = &l.unit_mask {
        zero_dead_columns(&mut a, mask);
    }
    a
}

fn zero_dead_columns(a: &mut Array2<f64>, live: &[bool]) {
    for (j, &keep) in live.iter().enumerate() {
        if !keep {
            a.column_mut(j).fill(0.0);
        }
    }
}

/// `target ← ξ·online + (1 − ξ)·target`, element-wise.
pub fn soft_update(target: &mut DenseNet, online: &DenseNet, rate: f64) -> Result<(), NnError> {
    if !target.same_architecture(online) {
        return Err(NnError::Architecture("soft update between different architectures".into()));
    }
    target.update_layers(|layers| {
        for (t, o) in layers.iter_mut().zip(&online.layers) {
            t.weight.zip_mut_with(&o.weight, |a, &b| *a = rate * b + (1.0 - rate) * *a);
            t.bias.zip_mut_with(&o.bias, |a, &b| *a = rate * b + (1.0 - rate) * *a);
        }
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(sizes: &[usize], seed: u64) -> DenseNet {
        DenseNet::new(sizes, Activation::Mish, Activation::Identity, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn identity_layer_passes_input() {
        let l = DenseLayer::new(Array2::eye(3), Array1::zeros(3), Activation::Identity);
        let n = DenseNet::from_layers(vec![l]).unwrap();
        assert_eq!(n.predict_one(&[1.0, -2.0, 3.5]).unwrap(), vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn fully_masked_layer_yields_activation_of_bias() {
        let l = DenseLayer::new(array![[2.0, 3.0], [1.0, -1.0]], array![0.5, -0.25], Activation::Tanh);
        let mut n = DenseNet::from_layers(vec![l]).unwrap();
        n.set_weight_mask(0, Some(Array2::from_elem((2, 2), false))).unwrap();
        assert_eq!(n.predict_one(&[7.0, 9.0]).unwrap(), vec![0.5f64.tanh(), (-0.25f64).tanh()]);
    }

    #[test]
    fn forward_is_pure() {
        let n = net(&[4, 8, 3], 1);
        let x = array![[0.1, 0.2, -0.3, 0.4]];
        assert_eq!(n.predict(x.view()).unwrap(), n.predict(x.view()).unwrap());
        assert_eq!(n.forward(x.view()).unwrap().0, n.predict(x.view()).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let n = net(&[4, 3], 1);
        assert_eq!(n.predict_one(&[1.0]).unwrap_err(), NnError::Dimension { expected: 4, got: 1 });
        assert!(DenseNet::from_layers(vec![
            DenseLayer::new(Array2::zeros((3, 2)), Array1::zeros(3), Activation::Relu),
            DenseLayer::new(Array2::zeros((1, 4)), Array1::zeros(1), Activation::Relu),
        ])
        .is_err());
    }

    #[test]
    fn square_has_gradient_six_at_three() {
        // f(x) = x² through a relu layer with unit weight feeding a fixed square.
        let l = DenseLayer::new(array![[1.0]], array![0.0], Activation::Identity);
        let n = DenseNet::from_layers(vec![l]).unwrap();
        let x = array![[3.0]];
        let (y, cache) = n.forward(x.view()).unwrap();
        let (_, gx) = n.backward(&cache, (2.0 * &y).view()).unwrap();
        assert_eq!(gx[[0, 0]], 6.0);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut n = net(&[2, 2], 3);
        let (_, cache) = n.forward(array![[1.0, 2.0]].view()).unwrap();
        let p = n.params_flat();
        n.set_params_flat(&p).unwrap();
        assert_eq!(n.backward(&cache, array![[1.0, 1.0]].view()).unwrap_err(), NnError::StaleCache);
    }

    #[test]
    fn masked_weight_gets_zero_gradient() {
        let mut n = net(&[3, 4, 2], 5);
        let mut mask = Array2::from_elem((4, 3), true);
        mask[[1, 2]] = false;
        n.set_weight_mask(0, Some(mask)).unwrap();
        let (_, cache) = n.forward(array![[0.3, -0.7, 1.1]].view()).unwrap();
        let (g, _) = n.backward(&cache, array![[1.0, -2.0]].view()).unwrap();
        assert_eq!(g.weights[0][[1, 2]], 0.0);
        assert_ne!(g.weights[0][[1, 1]], 0.0);
    }

    #[test]
    fn dead_unit_emits_no_gradient() {
        let mut n = net(&[3, 4, 2], 6);
        n.set_unit_mask(0, Some(vec![true, false, true, true])).unwrap();
        let (_, cache) = n.forward(array![[0.3, -0.7, 1.1]].view()).unwrap();
        let (g, _) = n.backward(&cache, array![[1.0, -2.0]].view()).unwrap();
        assert!(g.weights[0].row(1).iter().all(|&v| v == 0.0));
        assert_eq!(g.biases[0][1], 0.0);
        assert!(g.weights[1].column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn soft_update_rates() {
        let online = net(&[2, 3, 1], 1);
        let mut t = net(&[2, 3, 1], 2);
        let before = t.clone();
        soft_update(&mut t, &online, 0.0).unwrap();
        assert_eq!(t.params_flat(), before.params_flat());
        soft_update(&mut t, &online, 1.0).unwrap();
        assert_eq!(t.params_flat(), online.params_flat());

        let scalar = |v: f64| DenseNet::from_layers(vec![DenseLayer::new(array![[v]], array![v], Activation::Identity)]).unwrap();
        let mut a = scalar(2.0);
        soft_update(&mut a, &scalar(4.0), 0.5).unwrap();
        assert_eq!(a.params_flat(), vec![3.0, 3.0]);
        assert!(soft_update(&mut a, &online, 0.5).is_err());
    }

    #[test]
    fn mish_matches_definition() {
        for z in [-30.0, -2.0, 0.0, 0.7, 25.0] {
            let exact = z * ((1.0f64 + f64::exp(z)).ln()).tanh();
            assert!((Activation::Mish.apply(z) - exact).abs() < 1e-12);
        }
    }
}
