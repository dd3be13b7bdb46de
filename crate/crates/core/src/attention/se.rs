use super::fsam::Branch;
use crate::error::{dim_err, Result};
use crate::ops;
use crate::tensor::{Parameter, Scalar, Tensor};

/// Squeeze-and-excitation: `x · σ(W2·δ(W1·GAP(x)))` on every pixel.
#[derive(Clone, Debug)]
pub struct SeBlock<T: Scalar> {
    pub channels: usize,
    branch: Branch<T>,
}

impl<T: Scalar> SeBlock<T> {
    /// Registers `{prefix}.w1` and `{prefix}.w2`; bottleneck `max(1, ⌊C/r⌋)`.
    pub fn new(seed: u64, prefix: &str, channels: usize, reduction: usize, bias: bool) -> Result<Self> {
        let hidden = (channels / reduction.max(1)).max(1);
        Ok(SeBlock {
            channels,
            branch: Branch::new(seed, prefix, "", channels, hidden, bias)?,
        })
    }

    /// Channel gate `S: [N,C]`.
    pub fn gate(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.shape().len() != 4 || x.shape()[1] != self.channels {
            return Err(dim_err(
                "se_forward",
                format!("expected {} channels, got shape {:?}", self.channels, x.shape()),
            ));
        }
        self.branch.forward(&ops::global_avg_pool(x)?)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let s = self.gate(x)?;
        ops::scale_channels(x, &s)
    }

    pub fn parameters(&self) -> Vec<Parameter<T>> {
        self.branch.parameters()
    }
}
