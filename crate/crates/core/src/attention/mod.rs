//! Fastidious attention.
//!
//! [`fastidious_excite`] scales, per channel, only the pixels above a
//! threshold: `x' = s·x` where `x > g`, `x' = x` elsewhere. The thresholds
//! `G` and activations `S` come from one of two heads:
//!
//! * [`Fsam`] derives them from the excited feature map itself (global
//!   average pooling followed by two bias-free bottleneck FC branches).
//! * [`Fiam`] derives them for every decoder level at once from the deepest
//!   encoder feature, through a strided conv and two chained FC sequences.
//!
//! [`SeBlock`] is the squeeze-and-excitation baseline used in replacement
//! studies: a sigmoid gate applied to every pixel, no threshold.

mod excite;
mod fiam;
mod fsam;
mod se;

use serde::{Deserialize, Serialize};

pub use excite::fastidious_excite;
pub use fiam::{Fiam, FiamConfig};
pub use fsam::{Fsam, FsamConfig};
pub use se::SeBlock;

use crate::error::{dim_err, Result};
use crate::tensor::{Scalar, Tensor};

/// How gradients cross the threshold indicator of the excitation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GradMode {
    /// The indicator is a constant: no gradient reaches the thresholds.
    Hard,
    /// Backward uses `σ((x - g)/τ)` in place of the indicator, so thresholds
    /// train. Forward values are unchanged.
    #[default]
    Surrogate,
}

pub const DEFAULT_TAU: f64 = 0.1;

/// Per-sample activations `S` and thresholds `G`, both `[N,C]`.
#[derive(Clone, Debug)]
pub struct ExcitationParams<T: Scalar> {
    pub s: Tensor<T>,
    pub g: Tensor<T>,
}

impl<T: Scalar> ExcitationParams<T> {
    pub fn new(s: Tensor<T>, g: Tensor<T>) -> Result<Self> {
        if s.shape().len() != 2 || s.shape() != g.shape() {
            return Err(dim_err(
                "excitation_params",
                format!("S {:?} and G {:?} must both be [N,C]", s.shape(), g.shape()),
            ));
        }
        Ok(ExcitationParams { s, g })
    }

    pub fn batch(&self) -> usize {
        self.s.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.s.shape()[1]
    }
}
