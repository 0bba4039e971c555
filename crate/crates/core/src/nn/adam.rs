use super::{DenseNet, NetGrads, NnError};

/// Bias-corrected Adam over a network's flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub(crate) m: Vec<f64>,
    pub(crate) v: Vec<f64>,
}

impl AdamState {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; param_count], v: vec![0.0; param_count] }
    }

    pub fn for_net(net: &DenseNet, lr: f64) -> Self {
        Self::new(net.param_count(), lr)
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// Update `params` in place from `grads`.
    pub fn step_flat(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::Dimension { expected: self.m.len(), got: params.len().min(grads.len()) });
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }

    pub fn step_net(&mut self, net: &mut DenseNet, grads: &NetGrads) -> Result<(), NnError> {
        let mut p = net.params_flat();
        self.step_flat(&mut p, &grads.to_flat())?;
        net.set_params_flat(&p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut a = AdamState::new(3, 1e-3);
        let mut p = vec![1.0, -2.0, 0.5];
        a.step_flat(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        let mut a = AdamState::new(2, 0.01);
        let mut p = vec![0.0, 0.0];
        a.step_flat(&mut p, &[3.0, -0.5]).unwrap();
        // m̂ = g, v̂ = g², so Δ = −σ·g/(|g| + ε).
        assert!((p[0] + 0.01 * 3.0 / (3.0 + 1e-8)).abs() < 1e-15);
        assert!((p[1] - 0.01 * 0.5 / (0.5 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn identical_runs_agree() {
        let run = || {
            let mut a = AdamState::new(2, 0.05);
            let mut p = vec![1.0, 2.0];
            for k in 0..20 {
                let g = [p[0] - k as f64 * 0.1, p[1] * 0.5];
                a.step_flat(&mut p, &g).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
