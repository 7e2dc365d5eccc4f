//! Adam with bias correction, operating on flat parameter arrays.

use crate::error::{Error, Result};

use super::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update on a single flat tensor. `t` is the 1-based step count.
pub fn adam_step_tensor<T: Scalar>(
    param: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    t: u64,
    cfg: &AdamConfig,
) -> Result<()> {
    if grad.len() != param.len() || m.len() != param.len() || v.len() != param.len() {
        return Err(Error::Shape {
            op: "adam_step",
            lhs: vec![param.len()],
            rhs: vec![grad.len()],
        });
    }
    let b1 = T::from_f64c(cfg.beta1);
    let b2 = T::from_f64c(cfg.beta2);
    let lr = T::from_f64c(cfg.lr);
    let eps = T::from_f64c(cfg.eps);
    let one = T::one();
    let bc1 = one - b1.powi(t as i32);
    let bc2 = one - b2.powi(t as i32);
    for i in 0..param.len() {
        m[i] = b1 * m[i] + (one - b1) * grad[i];
        v[i] = b2 * v[i] + (one - b2) * grad[i] * grad[i];
        let mhat = m[i] / bc1;
        let vhat = v[i] / bc2;
        param[i] -= lr * mhat / (vhat.sqrt() + eps);
    }
    Ok(())
}

/// Optimizer state for a fixed list of parameter tensors.
pub struct Adam<T: Scalar> {
    cfg: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: AdamConfig, sizes: &[usize]) -> Self {
        Adam {
            cfg,
            m: sizes.iter().map(|&s| vec![T::zero(); s]).collect(),
            v: sizes.iter().map(|&s| vec![T::zero(); s]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one update across all tensors. `params` and `grads` must be
    /// index-aligned with the sizes given at construction.
    pub fn step<'a, P>(&mut self, params: P, grads: &[Vec<T>]) -> Result<()>
    where
        P: IntoIterator<Item = &'a mut [T]>,
    {
        self.t += 1;
        let mut count = 0;
        for (i, param) in params.into_iter().enumerate() {
            adam_step_tensor(
                param,
                &grads[i],
                &mut self.m[i],
                &mut self.v[i],
                self.t,
                &self.cfg,
            )?;
            count += 1;
        }
        if count != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Invalid(format!(
                "adam step over {count} tensors, expected {}",
                self.m.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = vec![1.0f64, -2.0];
        let g = vec![0.0, 0.0];
        let mut m = vec![0.0; 2];
        let mut v = vec![0.0; 2];
        adam_step_tensor(&mut p, &g, &mut m, &mut v, 1, &AdamConfig::default()).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_lr_against_gradient_sign() {
        let cfg = AdamConfig {
            lr: 0.1,
            ..Default::default()
        };
        let mut p = vec![0.0f64, 0.0];
        let g = vec![3.0, -0.5];
        let mut m = vec![0.0; 2];
        let mut v = vec![0.0; 2];
        adam_step_tensor(&mut p, &g, &mut m, &mut v, 1, &cfg).unwrap();
        // bias-corrected first step has magnitude ~= lr regardless of |g|
        assert!((p[0] + 0.1).abs() < 1e-6);
        assert!((p[1] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn descends_scalar_quadratic() {
        // f(w) = (w - 3)^2 from w = 0, lr = 0.1, 100 steps
        let cfg = AdamConfig {
            lr: 0.1,
            ..Default::default()
        };
        let mut w = vec![0.0f64];
        let mut m = vec![0.0];
        let mut v = vec![0.0];
        for t in 1..=100 {
            let g = vec![2.0 * (w[0] - 3.0)];
            adam_step_tensor(&mut w, &g, &mut m, &mut v, t, &cfg).unwrap();
        }
        assert!((w[0] - 3.0).abs() < 0.2, "w = {}", w[0]);
    }
}
