//! Adam with coupled (L2) weight decay.

use crate::error::{Error, Result};
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-5 }
    }
}

/// A named, mutable slice of parameters together with its gradient.
pub struct ParamBlock<'a, T> {
    pub name: &'a str,
    pub values: &'a mut [T],
    pub grad: &'a [T],
}

/// First and second moment buffers, one pair per parameter block.
#[derive(Clone, Debug, Default)]
pub struct AdamState<T> {
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new() -> Self {
        AdamState { step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to every block. Gradients are validated before any
    /// parameter is touched, so a non-finite gradient leaves everything as it
    /// was.
    pub fn step(&mut self, blocks: &mut [ParamBlock<'_, T>], hyper: &AdamConfig) -> Result<()> {
        for b in blocks.iter() {
            if b.values.len() != b.grad.len() {
                return Err(Error::shape(format!(
                    "parameter block `{}` has {} values but {} gradients",
                    b.name,
                    b.values.len(),
                    b.grad.len()
                )));
            }
            if let Some((i, g)) = b.grad.iter().enumerate().find(|(_, g)| !g.is_finite()) {
                return Err(Error::NonFinite {
                    block: b.name.to_string(),
                    detail: format!("gradient[{i}] = {g}"),
                });
            }
        }
        if self.first.is_empty() {
            self.first = blocks.iter().map(|b| vec![T::zero(); b.values.len()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != blocks.len()
            || self.first.iter().zip(blocks.iter()).any(|(m, b)| m.len() != b.values.len())
        {
            return Err(Error::shape("optimizer state does not match parameter blocks"));
        }

        self.step += 1;
        let t = self.step as i32;
        let b1 = T::lit(hyper.beta1);
        let b2 = T::lit(hyper.beta2);
        let one = T::one();
        let wd = T::lit(hyper.weight_decay);
        let eps = T::lit(hyper.eps);
        let lr = T::lit(hyper.lr);
        let c1 = one - T::lit(hyper.beta1.powi(t));
        let c2 = one - T::lit(hyper.beta2.powi(t));

        for ((b, m), v) in blocks.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            for i in 0..b.values.len() {
                let g = b.grad[i] + wd * b.values[i];
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                b.values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
