use super::{Real, Tensor};
use crate::{HoodError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamaxConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamaxConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First moments, infinity norms and step count for a fixed parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamaxState<T> {
    pub config: AdamaxConfig,
    pub m: Vec<Tensor<T>>,
    pub u: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Real> AdamaxState<T> {
    /// Zero state shaped like `shapes`.
    pub fn new(config: AdamaxConfig, shapes: &[&[usize]]) -> Self {
        Self {
            config,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            u: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            t: 0,
        }
    }

    /// One update of every parameter from its gradient.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(HoodError::Shape(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            p.expect_shape(m.shape())?;
            g.expect_shape(m.shape())?;
        }
        self.t += 1;
        let c = self.config;
        let (b1, b2, eps) = (T::from_f64_lossy(c.beta1), T::from_f64_lossy(c.beta2), T::from_f64_lossy(c.eps));
        let rate = T::from_f64_lossy(c.lr / (1.0 - c.beta1.powf(self.t as f64)));
        for (i, p) in params.iter_mut().enumerate() {
            let (m, u) = (self.m[i].data_mut(), self.u[i].data_mut());
            for (((theta, &g), m), u) in p.data_mut().iter_mut().zip(grads[i].data()).zip(m).zip(u) {
                *m = b1 * *m + (T::one() - b1) * g;
                *u = (b2 * *u).max(g.abs());
                let denom = *u + eps;
                if denom > T::zero() {
                    *theta -= rate * *m / denom;
                }
            }
        }
        Ok(())
    }
}
