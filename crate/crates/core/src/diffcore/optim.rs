use serde::{Deserialize, Serialize};

use super::ParamStore;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    /// Plain gradient descent, `θ ← θ − lr·g`.
    Sgd,
}

/// First-order optimizer over a [`ParamStore`].
///
/// Adam uses β1 = 0.9, β2 = 0.999, ε = 1e-8 with bias correction.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        Self {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn adam(lr: f64, params: &ParamStore) -> Self {
        Self::new(OptimizerKind::Adam, lr, params)
    }

    pub fn sgd(lr: f64, params: &ParamStore) -> Self {
        Self::new(OptimizerKind::Sgd, lr, params)
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. `grads[i]` belongs to the i-th tensor of `params`;
    /// tensors with `frozen[i] == true` or no gradient are left untouched
    /// (their moment estimates are not advanced either).
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Option<Vec<f64>>], frozen: &[bool]) {
        assert_eq!(grads.len(), params.len(), "one gradient slot per parameter");
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, tensor) in params.tensors_mut().iter_mut().enumerate() {
            if frozen.get(i).copied().unwrap_or(false) {
                continue;
            }
            let Some(g) = &grads[i] else { continue };
            let data = tensor.data_mut();
            match self.kind {
                OptimizerKind::Sgd => {
                    for (p, g) in data.iter_mut().zip(g) {
                        *p -= self.lr * g;
                    }
                }
                OptimizerKind::Adam => {
                    let (m, v) = (&mut self.m[i], &mut self.v[i]);
                    for j in 0..data.len() {
                        m[j] = flush(self.beta1 * m[j] + (1.0 - self.beta1) * g[j]);
                        v[j] = flush(self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j]);
                        let m_hat = m[j] / bc1;
                        let v_hat = v[j] / bc2;
                        data[j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                    }
                }
            }
        }
    }
}

/// Zeroes subnormals. Moments of weights whose gradient stays exactly zero
/// (inputs from silent neurons) decay into subnormal range, where every
/// multiply is an order of magnitude slower.
fn flush(x: f64) -> f64 {
    if x.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tensor;

    #[test]
    fn silent_weights_do_not_leave_subnormal_moments() {
        let mut params = ParamStore::new();
        params.push("w", Tensor::vector(vec![0.5, 0.5]));
        let mut opt = Optimizer::new(OptimizerKind::Adam, 1e-3, &params);
        opt.step(&mut params, &[Some(vec![1.0, 1.0])], &[]);
        for _ in 0..8000 {
            opt.step(&mut params, &[Some(vec![0.0, 1.0])], &[]);
        }
        assert_eq!(opt.m[0][0], 0.0);
        assert!(opt.m[0].iter().chain(&opt.v[0]).all(|x| !x.is_subnormal()));
    }
}
