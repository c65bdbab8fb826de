use ndarray::{Array2, Zip};

use super::head::LinearHead;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdadeltaConfig {
    pub rho: f64,
    pub eps: f64,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        AdadeltaConfig { rho: 0.9, eps: 1e-6 }
    }
}

impl AdadeltaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::invalid(format!("adadelta rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid(format!("adadelta eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Adadelta with decoupled weight decay.
///
/// ```text
/// E[g²]  ← ρ E[g²] + (1−ρ) g²
/// Δ      = −sqrt(E[Δ²] + ε) / sqrt(E[g²] + ε) · g
/// E[Δ²]  ← ρ E[Δ²] + (1−ρ) Δ²
/// θ      ← θ + lr·Δ
/// θ      ← θ − lr·wd·θ
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Adadelta {
    config: AdadeltaConfig,
    sq_grad: Array2<f64>,
    sq_delta: Array2<f64>,
}

impl Adadelta {
    pub fn new(dim: usize, config: AdadeltaConfig) -> Result<Self> {
        config.validate()?;
        Ok(Adadelta { config, sq_grad: Array2::zeros((dim, dim)), sq_delta: Array2::zeros((dim, dim)) })
    }

    pub fn sq_grad(&self) -> &Array2<f64> {
        &self.sq_grad
    }

    pub fn sq_delta(&self) -> &Array2<f64> {
        &self.sq_delta
    }

    pub fn step(&mut self, head: &mut LinearHead, grad: &Array2<f64>, lr: f64, weight_decay: f64) -> Result<()> {
        if grad.raw_dim() != self.sq_grad.raw_dim() || head.theta().raw_dim() != self.sq_grad.raw_dim() {
            return Err(Error::DimensionMismatch { expected: self.sq_grad.nrows(), found: grad.nrows() });
        }
        let AdadeltaConfig { rho, eps } = self.config;
        Zip::from(head.theta_mut()).and(&mut self.sq_grad).and(&mut self.sq_delta).and(grad).for_each(
            |theta, eg2, ed2, &g| {
                *eg2 = rho * *eg2 + (1.0 - rho) * g * g;
                let delta = -((*ed2 + eps).sqrt() / (*eg2 + eps).sqrt()) * g;
                *ed2 = rho * *ed2 + (1.0 - rho) * delta * delta;
                *theta += lr * delta;
                *theta -= lr * weight_decay * *theta;
            },
        );
        Ok(())
    }
}
