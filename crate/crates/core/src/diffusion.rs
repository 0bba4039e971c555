//! Diffusion policy: variance schedule, forward noising, state-conditioned
//! reverse sampler and a one-step Gaussian log-density surrogate.

use std::io::Write;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::nn::{Activation, DenseNet, NetGrads, NnError, TimeEmbedding};

#[derive(Debug, Error, PartialEq)]
pub enum DiffusionError {
    #[error("schedule needs at least one step")]
    NoSteps,
    #[error("need 0 < psi_min < psi_max, got {min} and {max}")]
    InvalidRange { min: f64, max: f64 },
    #[error("step {t} outside 1..={steps}")]
    StepOutOfRange { t: usize, steps: usize },
    #[error("vector has length {got}, expected {expected}")]
    Length { got: usize, expected: usize },
    #[error(transparent)]
    Net(#[from] NnError),
}

/// Per-step noise levels `ψ_t`, their complements `φ_t = 1 − ψ_t` and the
/// running products `φ̄_t`, for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    pub steps: usize,
    pub psi_min: f64,
    pub psi_max: f64,
    psi: Vec<f64>,
    phi_bar: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn new(steps: usize, psi_min: f64, psi_max: f64) -> Result<Self, DiffusionError> {
        if steps == 0 {
            return Err(DiffusionError::NoSteps);
        }
        if !(psi_min > 0.0 && psi_min < psi_max && psi_max.is_finite()) {
            return Err(DiffusionError::InvalidRange { min: psi_min, max: psi_max });
        }
        let tf = steps as f64;
        let psi: Vec<f64> = (1..=steps)
            .map(|t| {
                let expo = psi_min / tf + (2.0 * t as f64 - 1.0) / (2.0 * tf * tf) * (psi_max - psi_min);
                -(-expo).exp_m1()
            })
            .collect();
        let mut phi_bar = Vec::with_capacity(steps);
        let mut acc = 1.0;
        for p in &psi {
            acc *= 1.0 - p;
            phi_bar.push(acc);
        }
        Ok(Self { steps, psi_min, psi_max, psi, phi_bar })
    }

    fn check(&self, t: usize) -> Result<(), DiffusionError> {
        if t == 0 || t > self.steps {
            return Err(DiffusionError::StepOutOfRange { t, steps: self.steps });
        }
        Ok(())
    }

    pub fn psi(&self, t: usize) -> f64 {
        self.psi[t - 1]
    }

    pub fn phi(&self, t: usize) -> f64 {
        1.0 - self.psi[t - 1]
    }

    /// `φ̄_t`, with `φ̄_0 = 1`.
    pub fn phi_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.phi_bar[t - 1]
        }
    }

    /// Reverse-step variance `ψ_t(1 − φ̄_{t−1})/(1 − φ̄_t)`; zero at `t = 1`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        self.psi(t) * (1.0 - self.phi_bar(t - 1)) / (1.0 - self.phi_bar(t))
    }

    /// Coefficient on `tanh(ε_θ)` inside the reverse mean.
    fn noise_coef(&self, t: usize) -> f64 {
        self.psi(t) / (1.0 - self.phi_bar(t)).sqrt()
    }

    /// `μ = (a_t − ψ_t·tanh(ε)/sqrt(1 − φ̄_t)) / sqrt(φ_t)`.
    pub fn reverse_mean(&self, a_t: f64, eps: f64, t: usize) -> f64 {
        (a_t - self.noise_coef(t) * eps.tanh()) / self.phi(t).sqrt()
    }
}

/// `a_t = sqrt(φ̄_t)·a_0 + sqrt(1 − φ̄_t)·noise`.
pub fn forward_noise(a0: &[f64], t: usize, schedule: &DiffusionSchedule, noise: &[f64]) -> Result<Vec<f64>, DiffusionError> {
    schedule.check(t)?;
    if noise.len() != a0.len() {
        return Err(DiffusionError::Length { got: noise.len(), expected: a0.len() });
    }
    let (keep, mix) = (schedule.phi_bar(t).sqrt(), (1.0 - schedule.phi_bar(t)).sqrt());
    Ok(a0.iter().zip(noise).map(|(a, n)| keep * a + mix * n).collect())
}

/// Log-density of `x` under `N(mean, var·I)`.
pub fn gaussian_log_density(x: &[f64], mean: &[f64], var: f64) -> f64 {
    let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * x.len() as f64 * (2.0 * std::f64::consts::PI * var).ln() - sq / (2.0 * var)
}

/// One recorded reverse step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub t: usize,
    pub input: Vec<f64>,
    pub predicted_noise: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: f64,
    pub output: Vec<f64>,
}

pub fn write_trace<W: Write>(mut w: W, steps: &[TraceStep]) -> std::io::Result<()> {
    for s in steps {
        serde_json::to_writer(&mut w, s)?;
        writeln!(w)?;
    }
    Ok(())
}

/// State-conditioned denoiser `ε_θ(a_t, s, t)` with its schedule.
///
/// Network input is `[a_t, s, emb(t)]`; output has the action dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionPolicy {
    pub net: DenseNet,
    pub schedule: DiffusionSchedule,
    pub embedding: TimeEmbedding,
    pub action_dim: usize,
    pub state_dim: usize,
}

impl DiffusionPolicy {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        activation: Activation,
        embed_dim: usize,
        schedule: DiffusionSchedule,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![action_dim + state_dim + embed_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        let net = DenseNet::new(&sizes, activation, Activation::Identity, rng);
        Self { net, schedule, embedding: TimeEmbedding::new(embed_dim), action_dim, state_dim }
    }

    /// Wrap an existing net, checking its widths.
    pub fn from_net(net: DenseNet, schedule: DiffusionSchedule, state_dim: usize, action_dim: usize) -> Result<Self, DiffusionError> {
        let embed_dim = net.input_dim().saturating_sub(state_dim + action_dim);
        if embed_dim < 2 || !embed_dim.is_multiple_of(2) || net.output_dim() != action_dim {
            return Err(DiffusionError::Length { got: net.input_dim(), expected: state_dim + action_dim + 2 });
        }
        Ok(Self { net, schedule, embedding: TimeEmbedding::new(embed_dim), action_dim, state_dim })
    }

    /// Stack `[a_t, s, emb(t_i)]` row-wise.
    pub fn denoiser_input(&self, a_t: ArrayView2<f64>, states: ArrayView2<f64>, steps: &[usize]) -> Array2<f64> {
        let (b, a, s) = (a_t.nrows(), self.action_dim, self.state_dim);
        let mut x = Array2::zeros((b, a + s + self.embedding.dim));
        x.slice_mut(s![.., ..a]).assign(&a_t);
        x.slice_mut(s![.., a..a + s]).assign(&states);
        for (i, &t) in steps.iter().enumerate() {
            let e = Array1::from(self.embedding.embed(t));
            x.slice_mut(s![i, a + s..]).assign(&e);
        }
        x
    }

    /// Batched reverse chain from `a_T ~ N(0, I)`; rows are states.
    pub fn sample_batch<R: Rng + ?Sized>(&self, states: ArrayView2<f64>, rng: &mut R) -> Result<Array2<f64>, DiffusionError> {
        self.sample_inner(states, rng, None)
    }

    /// Single reverse sample with its per-step trace.
    pub fn reverse_sample<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<(Vec<f64>, Vec<TraceStep>), DiffusionError> {
        let view = ArrayView2::from_shape((1, state.len()), state).map_err(|_| DiffusionError::Length { got: state.len(), expected: self.state_dim })?;
        let mut trace = Vec::with_capacity(self.schedule.steps);
        let a = self.sample_inner(view, rng, Some(&mut trace))?;
        Ok((a.into_raw_vec_and_offset().0, trace))
    }

    fn sample_inner<R: Rng + ?Sized>(
        &self,
        states: ArrayView2<f64>,
        rng: &mut R,
        mut trace: Option<&mut Vec<TraceStep>>,
    ) -> Result<Array2<f64>, DiffusionError> {
        if states.ncols() != self.state_dim {
            return Err(DiffusionError::Length { got: states.ncols(), expected: self.state_dim });
        }
        let b = states.nrows();
        let mut a = Array2::from_shape_simple_fn((b, self.action_dim), || rng.sample::<f64, _>(StandardNormal));
        for t in (1..=self.schedule.steps).rev() {
            let x = self.denoiser_input(a.view(), states, &vec![t; b]);
            let eps = self.net.predict(x.view())?;
            let mut next = Array2::zeros(a.raw_dim());
            ndarray::Zip::from(&mut next).and(&a).and(&eps).for_each(|n, &at, &e| *n = self.schedule.reverse_mean(at, e, t));
            let variance = self.schedule.posterior_variance(t);
            let mean = trace.as_ref().map(|_| next.row(0).to_vec());
            if t > 1 {
                let sd = variance.sqrt();
                next.mapv_inplace(|m| m + sd * rng.sample::<f64, _>(StandardNormal));
            }
            if t == 1 {
                next.mapv_inplace(|v| v.clamp(-1.0, 1.0));
            }
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(TraceStep {
                    t,
                    input: a.row(0).to_vec(),
                    predicted_noise: eps.row(0).to_vec(),
                    mean: mean.unwrap_or_default(),
                    variance,
                    output: next.row(0).to_vec(),
                });
            }
            a = next;
        }
        Ok(a)
    }

    /// Mean of the final reverse transition given `a_1`.
    pub fn final_step_mean(&self, a1: ArrayView2<f64>, states: ArrayView2<f64>) -> Result<Array2<f64>, DiffusionError> {
        let x = self.denoiser_input(a1, states, &vec![1; a1.nrows()]);
        let eps = self.net.predict(x.view())?;
        let mut mu = Array2::zeros(a1.raw_dim());
        ndarray::Zip::from(&mut mu).and(&a1).and(&eps).for_each(|m, &a, &e| *m = self.schedule.reverse_mean(a, e, 1));
        Ok(mu)
    }

    /// Surrogate `log π(a_0 | s)`: density of `a_0` under `N(μ_θ(a_1, s, 1), var_floor·I)`
    /// with `a_1` the one-step forward noising of `a_0` by `noise`.
    pub fn approx_log_prob(&self, a0: &[f64], state: &[f64], noise: &[f64], var_floor: f64) -> Result<f64, DiffusionError> {
        let a1 = forward_noise(a0, 1, &self.schedule, noise)?;
        let a1v = ArrayView2::from_shape((1, a1.len()), &a1).expect("row");
        let sv = ArrayView2::from_shape((1, state.len()), state).map_err(|_| DiffusionError::Length { got: state.len(), expected: self.state_dim })?;
        let mu = self.final_step_mean(a1v, sv)?;
        Ok(gaussian_log_density(a0, mu.as_slice().expect("contiguous"), var_floor))
    }

    /// Batched surrogate log-densities and the parameter gradient of
    /// `Σ_i weights[i]·log π_i`.
    pub fn log_prob_grad(
        &self,
        a0: ArrayView2<f64>,
        states: ArrayView2<f64>,
        noise: ArrayView2<f64>,
        var_floor: f64,
        weights: &[f64],
    ) -> Result<(Vec<f64>, NetGrads), DiffusionError> {
        let sch = &self.schedule;
        let a1 = a0.mapv(|v| v * sch.phi_bar(1).sqrt()) + noise.mapv(|v| v * (1.0 - sch.phi_bar(1)).sqrt());
        let x = self.denoiser_input(a1.view(), states, &vec![1; a0.nrows()]);
        let (eps, cache) = self.net.forward(x.view())?;
        let coef = sch.noise_coef(1) / sch.phi(1).sqrt();
        let dim = self.action_dim as f64;
        let norm = -0.5 * dim * (2.0 * std::f64::consts::PI * var_floor).ln();
        let mut logp = Vec::with_capacity(a0.nrows());
        let mut grad = Array2::zeros(eps.raw_dim());
        for i in 0..a0.nrows() {
            let mut sq = 0.0;
            for j in 0..self.action_dim {
                let th = eps[[i, j]].tanh();
                let mu = (a1[[i, j]] - sch.noise_coef(1) * th) / sch.phi(1).sqrt();
                let diff = a0[[i, j]] - mu;
                sq += diff * diff;
                // d logπ/dμ = diff/var; dμ/dε = −coef·(1 − tanh²).
                grad[[i, j]] = weights[i] * (diff / var_floor) * (-coef * (1.0 - th * th));
            }
            logp.push(norm - sq / (2.0 * var_floor));
        }
        let (g, _) = self.net.backward(&cache, grad.view())?;
        Ok((logp, g))
    }

    /// Noise-prediction loss `mean_i ‖ε_i − ε_θ(a_{t_i}, s_i, t_i)‖²` and its gradient.
    pub fn denoising_loss_grad(
        &self,
        actions: ArrayView2<f64>,
        states: ArrayView2<f64>,
        steps: &[usize],
        noise: ArrayView2<f64>,
    ) -> Result<(f64, NetGrads), DiffusionError> {
        let b = actions.nrows();
        let mut noisy = Array2::zeros(actions.raw_dim());
        for i in 0..b {
            let t = steps[i];
            self.schedule.check(t)?;
            let (keep, mix) = (self.schedule.phi_bar(t).sqrt(), (1.0 - self.schedule.phi_bar(t)).sqrt());
            for j in 0..self.action_dim {
                noisy[[i, j]] = keep * actions[[i, j]] + mix * noise[[i, j]];
            }
        }
        let x = self.denoiser_input(noisy.view(), states, steps);
        let (pred, cache) = self.net.forward(x.view())?;
        let resid = &noise - &pred;
        let loss = resid.mapv(|r| r * r).sum_axis(Axis(1)).mean().unwrap_or(0.0);
        let grad = resid.mapv(|r| -2.0 * r / b as f64);
        let (g, _) = self.net.backward(&cache, grad.view())?;
        Ok((loss, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_step_schedule() {
        let s = DiffusionSchedule::new(1, 0.1, 10.0).unwrap();
        assert!((s.psi(1) - (1.0 - (-5.05f64).exp())).abs() < 1e-15);
        assert!((s.psi(1) - 0.99360).abs() < 1e-5);
        assert_eq!(s.posterior_variance(1), 0.0);
    }

    #[test]
    fn invalid_schedules() {
        assert_eq!(DiffusionSchedule::new(0, 0.1, 1.0), Err(DiffusionError::NoSteps));
        assert!(DiffusionSchedule::new(3, 0.0, 1.0).is_err());
        assert!(DiffusionSchedule::new(3, 2.0, 1.0).is_err());
    }

    #[test]
    fn noiseless_forward_is_scaled_mean() {
        let s = DiffusionSchedule::new(3, 0.1, 10.0).unwrap();
        let a = forward_noise(&[0.5, -1.0], 2, &s, &[0.0, 0.0]).unwrap();
        let k = s.phi_bar(2).sqrt();
        assert_eq!(a, vec![0.5 * k, -k]);
        assert!(forward_noise(&[0.5], 4, &s, &[0.0]).is_err());
    }

    #[test]
    fn peak_log_density() {
        let lp = gaussian_log_density(&[0.2, 0.3], &[0.2, 0.3], 1e-2);
        assert!((lp + (2.0 * std::f64::consts::PI * 1e-2).ln()).abs() < 1e-12);
        assert!(gaussian_log_density(&[0.4, 0.3], &[0.2, 0.3], 1e-2) < lp);
    }

    #[test]
    fn sampling_is_seeded() {
        let sched = DiffusionSchedule::new(3, 0.1, 10.0).unwrap();
        let p = DiffusionPolicy::new(4, 3, &[8], Activation::Mish, 4, sched, &mut ChaCha8Rng::seed_from_u64(1));
        let s = [0.1, 0.2, 0.3, 0.4];
        let (a, trace) = p.reverse_sample(&s, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let (b, _) = p.reverse_sample(&s, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(trace.iter().map(|t| t.t).collect::<Vec<_>>(), vec![3, 2, 1]);
        let mut buf = Vec::new();
        write_trace(&mut buf, &trace).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }

    #[test]
    fn log_prob_grad_matches_finite_difference() {
        let sched = DiffusionSchedule::new(3, 0.1, 10.0).unwrap();
        let mut p = DiffusionPolicy::new(2, 2, &[5], Activation::Tanh, 4, sched, &mut ChaCha8Rng::seed_from_u64(2));
        let a0 = ndarray::array![[0.3, -0.4], [0.9, 0.1]];
        let st = ndarray::array![[0.5, 0.2], [0.1, 0.7]];
        let nz = ndarray::array![[0.2, -1.0], [0.4, 0.3]];
        let w = [0.7, -1.3];
        let (_, g) = p.log_prob_grad(a0.view(), st.view(), nz.view(), 1e-2, &w).unwrap();
        let g = g.to_flat();
        let f = |p: &DiffusionPolicy| {
            let (lp, _) = p.log_prob_grad(a0.view(), st.view(), nz.view(), 1e-2, &w).unwrap();
            lp.iter().zip(&w).map(|(l, w)| l * w).sum::<f64>()
        };
        let base = p.net.params_flat();
        for k in [0, 3, 11, base.len() - 1] {
            let mut q = base.clone();
            q[k] += 1e-6;
            p.net.set_params_flat(&q).unwrap();
            let up = f(&p);
            q[k] -= 2e-6;
            p.net.set_params_flat(&q).unwrap();
            let down = f(&p);
            let fd = (up - down) / 2e-6;
            assert!((fd - g[k]).abs() <= 1e-4 * fd.abs().max(1.0), "param {k}: {fd} vs {}", g[k]);
        }
    }
}
