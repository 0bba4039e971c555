use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{restore_net, restore_optimizer, LearnerError};
use crate::mdp::Transition;
use crate::nn::{soft_update, Activation, AdamState, Checkpoint, DenseNet};

/// Minibatch as row-stacked matrices; states are the normalized copies.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Array2<f64>,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(ts: &[&Transition]) -> Self {
        let rows = |f: &dyn Fn(&Transition) -> &[f64]| {
            let width = ts.first().map_or(0, |t| f(t).len());
            let flat: Vec<f64> = ts.iter().flat_map(|t| f(t).iter().copied()).collect();
            Array2::from_shape_vec((ts.len(), width), flat).expect("uniform widths")
        };
        Self {
            states: rows(&|t| &t.state.normalized),
            actions: rows(&|t| &t.action),
            rewards: ts.iter().map(|t| t.reward).collect(),
            next_states: rows(&|t| &t.next_state.normalized),
            dones: ts.iter().map(|t| t.done).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// A pair of Q estimates per `(state, action)` row.
pub trait TwinQ {
    fn twin_q(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<(Vec<f64>, Vec<f64>), LearnerError>;
}

/// The policy whose next action and log-density enter the TD target.
pub trait TargetPolicy {
    fn sample_with_log_prob(&self, states: ArrayView2<f64>, rng: &mut dyn rand::RngCore) -> Result<(Array2<f64>, Vec<f64>), LearnerError>;
}

/// `y = r + γ(1 − d)(min(Q̂₁, Q̂₂)(s', a') − β·log π̂(a'|s'))` with `a'` drawn
/// once per row. Plain values; nothing here is differentiated.
pub fn td_targets<Q: TwinQ + ?Sized, P: TargetPolicy + ?Sized>(
    batch: &Batch,
    targets: &Q,
    policy: &P,
    gamma: f64,
    beta: f64,
    rng: &mut dyn rand::RngCore,
) -> Result<Vec<f64>, LearnerError> {
    if batch.is_empty() {
        return Err(LearnerError::EmptyBatch);
    }
    let (next_a, logp) = policy.sample_with_log_prob(batch.next_states.view(), rng)?;
    let (q1, q2) = targets.twin_q(batch.next_states.view(), next_a.view())?;
    Ok((0..batch.len())
        .map(|i| {
            let cont = if batch.dones[i] { 0.0 } else { 1.0 };
            batch.rewards[i] + gamma * cont * (q1[i].min(q2[i]) - beta * logp[i])
        })
        .collect())
}

/// Twin online critics, their targets and optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticPair {
    pub q1: DenseNet,
    pub q2: DenseNet,
    pub target1: DenseNet,
    pub target2: DenseNet,
    pub opt1: AdamState,
    pub opt2: AdamState,
}

struct TargetView<'a>(&'a CriticPair);

impl TwinQ for TargetView<'_> {
    fn twin_q(&self, s: ArrayView2<f64>, a: ArrayView2<f64>) -> Result<(Vec<f64>, Vec<f64>), LearnerError> {
        let x = critic_input(s, a);
        Ok((column(self.0.target1.predict(x.view())?), column(self.0.target2.predict(x.view())?)))
    }
}

impl TwinQ for CriticPair {
    fn twin_q(&self, s: ArrayView2<f64>, a: ArrayView2<f64>) -> Result<(Vec<f64>, Vec<f64>), LearnerError> {
        let x = critic_input(s, a);
        Ok((column(self.q1.predict(x.view())?), column(self.q2.predict(x.view())?)))
    }
}

pub(crate) fn critic_input(s: ArrayView2<f64>, a: ArrayView2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[s, a]).expect("same row count")
}

fn column(m: Array2<f64>) -> Vec<f64> {
    m.into_raw_vec_and_offset().0
}

impl CriticPair {
    pub(crate) fn restore(&mut self, ck: &Checkpoint) -> Result<(), LearnerError> {
        restore_net(ck, "q1", &mut self.q1)?;
        restore_net(ck, "q2", &mut self.q2)?;
        restore_net(ck, "target_q1", &mut self.target1)?;
        restore_net(ck, "target_q2", &mut self.target2)?;
        restore_optimizer(ck, "q1", &mut self.opt1)?;
        restore_optimizer(ck, "q2", &mut self.opt2)
    }

    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, hidden: &[usize], activation: Activation, lr: f64, rng: &mut R) -> Self {
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let q1 = DenseNet::new(&sizes, activation, Activation::Identity, rng);
        let q2 = DenseNet::new(&sizes, activation, Activation::Identity, rng);
        Self {
            opt1: AdamState::for_net(&q1, lr),
            opt2: AdamState::for_net(&q2, lr),
            target1: q1.clone(),
            target2: q2.clone(),
            q1,
            q2,
        }
    }

    pub fn targets(&self) -> impl TwinQ + '_ {
        TargetView(self)
    }

    pub fn min_q(&self, s: ArrayView2<f64>, a: ArrayView2<f64>) -> Result<Vec<f64>, LearnerError> {
        let (q1, q2) = self.twin_q(s, a)?;
        Ok(q1.iter().zip(&q2).map(|(a, b)| a.min(*b)).collect())
    }

    /// Per-row min-critic value and its gradient w.r.t. the action, taken
    /// through whichever critic attains the minimum.
    pub fn min_q_action_grad(&self, s: ArrayView2<f64>, a: ArrayView2<f64>) -> Result<(Vec<f64>, Array2<f64>), LearnerError> {
        let x = critic_input(s, a);
        let ones = Array2::ones((x.nrows(), 1));
        let (o1, c1) = self.q1.forward(x.view())?;
        let (o2, c2) = self.q2.forward(x.view())?;
        let (_, g1) = self.q1.backward(&c1, ones.view())?;
        let (_, g2) = self.q2.backward(&c2, ones.view())?;
        let sd = s.ncols();
        let mut grad = Array2::zeros(a.raw_dim());
        let mut q = Vec::with_capacity(x.nrows());
        for i in 0..x.nrows() {
            let (v, g) = if o1[[i, 0]] <= o2[[i, 0]] { (o1[[i, 0]], &g1) } else { (o2[[i, 0]], &g2) };
            q.push(v);
            grad.row_mut(i).assign(&g.row(i).slice(ndarray::s![sd..]));
        }
        Ok((q, grad))
    }

    /// One Adam step per critic on `mean(y − q₁)² + mean(y − q₂)²`; returns
    /// the loss before the step.
    pub fn update(&mut self, s: ArrayView2<f64>, a: ArrayView2<f64>, y: &[f64]) -> Result<f64, LearnerError> {
        let x = critic_input(s, a);
        let b = y.len() as f64;
        let mut loss = 0.0;
        for (net, opt) in [(&mut self.q1, &mut self.opt1), (&mut self.q2, &mut self.opt2)] {
            let (q, cache) = net.forward(x.view())?;
            let mut g = Array2::zeros(q.raw_dim());
            for i in 0..y.len() {
                let r = y[i] - q[[i, 0]];
                loss += r * r / b;
                g[[i, 0]] = -2.0 * r / b;
            }
            let (grads, _) = net.backward(&cache, g.view())?;
            opt.step_net(net, &grads)?;
        }
        Ok(loss)
    }

    pub fn soft_update_targets(&mut self, rate: f64) -> Result<(), LearnerError> {
        soft_update(&mut self.target1, &self.q1, rate)?;
        soft_update(&mut self.target2, &self.q2, rate)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::StateVec;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct ConstQ(f64, f64);
    impl TwinQ for ConstQ {
        fn twin_q(&self, s: ArrayView2<f64>, _: ArrayView2<f64>) -> Result<(Vec<f64>, Vec<f64>), LearnerError> {
            Ok((vec![self.0; s.nrows()], vec![self.1; s.nrows()]))
        }
    }

    struct ZeroPolicy(f64);
    impl TargetPolicy for ZeroPolicy {
        fn sample_with_log_prob(&self, s: ArrayView2<f64>, _: &mut dyn rand::RngCore) -> Result<(Array2<f64>, Vec<f64>), LearnerError> {
            Ok((Array2::zeros((s.nrows(), 1)), vec![self.0; s.nrows()]))
        }
    }

    fn batch(rewards: &[f64], dones: &[bool]) -> Batch {
        let n = rewards.len();
        Batch {
            states: Array2::zeros((n, 2)),
            actions: Array2::zeros((n, 1)),
            rewards: rewards.to_vec(),
            next_states: Array2::zeros((n, 2)),
            dones: dones.to_vec(),
        }
    }

    #[test]
    fn td_target_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = batch(&[1.0, 1.0], &[false, true]);
        let y = td_targets(&b, &ConstQ(2.0, 3.0), &ZeroPolicy(0.7), 0.9, 0.0, &mut rng).unwrap();
        assert!((y[0] - 2.8).abs() < 1e-12);
        assert_eq!(y[1], 1.0);
        let y = td_targets(&b, &ConstQ(2.0, 3.0), &ZeroPolicy(0.7), 0.0, 0.5, &mut rng).unwrap();
        assert_eq!(y, vec![1.0, 1.0]);
        let y = td_targets(&b, &ConstQ(2.0, 3.0), &ZeroPolicy(0.5), 1.0, 0.2, &mut rng).unwrap();
        assert!((y[0] - (1.0 + 2.0 - 0.1)).abs() < 1e-12);
        assert_eq!(td_targets(&batch(&[], &[]), &ConstQ(0.0, 0.0), &ZeroPolicy(0.0), 0.9, 0.0, &mut rng), Err(LearnerError::EmptyBatch));
    }

    #[test]
    fn single_sample_loss_definition() {
        let mut c = CriticPair::new(2, 1, &[4], Activation::Relu, 1e-3, &mut ChaCha8Rng::seed_from_u64(1));
        let (s, a) = (array![[0.2, 0.4]], array![[0.5]]);
        let (q1, q2) = c.twin_q(s.view(), a.view()).unwrap();
        let loss = c.update(s.view(), a.view(), &[1.5]).unwrap();
        assert!((loss - ((1.5 - q1[0]).powi(2) + (1.5 - q2[0]).powi(2))).abs() < 1e-12);
    }

    #[test]
    fn loss_descends_on_frozen_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut c = CriticPair::new(3, 2, &[16, 16], Activation::Mish, 1e-2, &mut rng);
        let s = Array2::from_shape_fn((16, 3), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin());
        let a = Array2::from_shape_fn((16, 2), |(i, j)| ((i + 5 * j) as f64 * 0.11).cos());
        let y: Vec<f64> = (0..16).map(|i| (i as f64 * 0.3).sin()).collect();
        let first = c.update(s.view(), a.view(), &y).unwrap();
        let mut last = first;
        for _ in 0..50 {
            last = c.update(s.view(), a.view(), &y).unwrap();
        }
        assert!(last <= first, "{last} > {first}");
    }

    #[test]
    fn batch_stacks_normalized_states() {
        let st = StateVec { raw: vec![10.0, 20.0], normalized: vec![0.1, 0.2] };
        let t = Transition { state: st.clone(), action: vec![0.5], reward: 2.0, next_state: st, done: true };
        let b = Batch::from_transitions(&[&t, &t]);
        assert_eq!(b.states, array![[0.1, 0.2], [0.1, 0.2]]);
        assert_eq!(b.dones, vec![true, true]);
    }

    #[test]
    fn action_gradient_matches_finite_difference() {
        let c = CriticPair::new(2, 2, &[8], Activation::Tanh, 1e-3, &mut ChaCha8Rng::seed_from_u64(4));
        let s = array![[0.3, -0.2]];
        let a = array![[0.1, 0.6]];
        let (_, g) = c.min_q_action_grad(s.view(), a.view()).unwrap();
        for j in 0..2 {
            let mut up = a.clone();
            up[[0, j]] += 1e-6;
            let mut dn = a.clone();
            dn[[0, j]] -= 1e-6;
            let fd = (c.min_q(s.view(), up.view()).unwrap()[0] - c.min_q(s.view(), dn.view()).unwrap()[0]) / 2e-6;
            assert!((fd - g[[0, j]]).abs() < 1e-6);
        }
    }
}
