//! Head adaptation: the linear head, the nearest-centroid baseline, the
//! dependence objective with its gradient, Adadelta, and the episode loop.

mod episode;
mod head;
mod ncc;
mod objective;
mod optim;

use std::fmt;
use std::str::FromStr;

pub use episode::{run_episode, EpisodeResult};
pub use head::{transform, LinearHead};
pub use ncc::{ncc_loss, ncc_loss_and_gradient, ncc_predict, prototypes};
pub use objective::{mokd_gradient, mokd_loss, mokd_loss_and_gradient, MokdTerms};
pub use optim::{Adadelta, AdadeltaConfig};

use crate::error::{Error, Result};
use crate::hsic::BandwidthGrid;
use crate::kernels::KernelFamily;

/// Objective minimized during adaptation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    /// `-HSIC(Z, Y) + γ·HSIC(Z, Z)` with test-power-selected bandwidths.
    #[default]
    Mokd,
    /// Cross-entropy over cosine similarities to class prototypes.
    Ncc,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Mokd => "mokd",
            LossKind::Ncc => "ncc",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mokd" => Ok(LossKind::Mokd),
            "ncc" => Ok(LossKind::Ncc),
            other => Err(Error::invalid(format!("unknown loss '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptConfig {
    pub loss: LossKind,
    /// Weight of the HSIC(Z, Z) term.
    pub gamma: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub weight_decay: f64,
    /// Bandwidth coefficients and the power-ratio ε.
    pub grid: BandwidthGrid,
    pub kernel_family: KernelFamily,
    /// Reuse the HSIC(Z, Y) coefficient for HSIC(Z, Z) instead of a second search.
    pub share_zz_coefficient: bool,
    pub normalize_features: bool,
    pub optimizer: AdadeltaConfig,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            loss: LossKind::Mokd,
            gamma: 3.0,
            learning_rate: 0.25,
            steps: 40,
            weight_decay: 0.0,
            grid: BandwidthGrid::default(),
            kernel_family: KernelFamily::Gaussian,
            share_zz_coefficient: true,
            normalize_features: true,
            optimizer: AdadeltaConfig::default(),
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid(format!("weight decay must be non-negative, got {}", self.weight_decay)));
        }
        self.optimizer.validate()
    }
}
