use super::ExcitationParams;
use crate::error::{dim_err, Result};
use crate::init;
use crate::ops;
use crate::tensor::{Parameter, Scalar, Tensor};

/// Shape of a fastidious self-attention head.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FsamConfig {
    pub channels: usize,
    pub reduction: usize,
    pub bias: bool,
}

impl FsamConfig {
    /// Bottleneck width `max(1, ⌊C/r⌋)`.
    pub fn hidden(&self) -> usize {
        (self.channels / self.reduction.max(1)).max(1)
    }
}

/// One fully connected branch `σ(W2·δ(W1·z))`.
#[derive(Clone, Debug)]
pub(crate) struct Branch<T: Scalar> {
    pub w1: Parameter<T>,
    pub b1: Option<Parameter<T>>,
    pub w2: Parameter<T>,
    pub b2: Option<Parameter<T>>,
}

impl<T: Scalar> Branch<T> {
    pub fn new(seed: u64, prefix: &str, tag: &str, channels: usize, hidden: usize, bias: bool) -> Result<Self> {
        let w1 = init::kaiming_uniform(seed, &format!("{prefix}.w1{tag}"), &[hidden, channels], channels)?;
        let w2 = init::kaiming_uniform(seed, &format!("{prefix}.w2{tag}"), &[channels, hidden], hidden)?;
        let (b1, b2) = if bias {
            (
                Some(init::constant(&format!("{prefix}.b1{tag}"), &[hidden], 0.0)?),
                Some(init::constant(&format!("{prefix}.b2{tag}"), &[channels], 0.0)?),
            )
        } else {
            (None, None)
        };
        Ok(Branch { w1, b1, w2, b2 })
    }

    pub fn forward(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        let h = ops::relu(&ops::linear(z, &self.w1.tensor, self.b1.as_ref().map(|p| &p.tensor))?);
        Ok(ops::sigmoid(&ops::linear(&h, &self.w2.tensor, self.b2.as_ref().map(|p| &p.tensor))?))
    }

    pub fn parameters(&self) -> Vec<Parameter<T>> {
        let mut out = vec![self.w1.clone()];
        out.extend(self.b1.clone());
        out.push(self.w2.clone());
        out.extend(self.b2.clone());
        out
    }
}

/// Fastidious self-attention: activations and thresholds for a feature map
/// computed from that same map.
#[derive(Clone, Debug)]
pub struct Fsam<T: Scalar> {
    pub config: FsamConfig,
    pub(crate) s_branch: Branch<T>,
    pub(crate) g_branch: Branch<T>,
}

impl<T: Scalar> Fsam<T> {
    /// Registers `{prefix}.w1s`, `{prefix}.w2s`, `{prefix}.w1g`, `{prefix}.w2g`.
    pub fn new(seed: u64, prefix: &str, config: FsamConfig) -> Result<Self> {
        let hidden = config.hidden();
        Ok(Fsam {
            config,
            s_branch: Branch::new(seed, prefix, "s", config.channels, hidden, config.bias)?,
            g_branch: Branch::new(seed, prefix, "g", config.channels, hidden, config.bias)?,
        })
    }

    /// Global average pooling of `x` to `Z: [N,C]`.
    pub fn squeeze(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let c = x.shape().get(1).copied().unwrap_or(0);
        if x.shape().len() != 4 || c != self.config.channels {
            return Err(dim_err(
                "fsam_forward",
                format!("expected {} channels, got shape {:?}", self.config.channels, x.shape()),
            ));
        }
        ops::global_avg_pool(x)
    }

    /// `S = σ(W2s·δ(W1s·Z))`, `G = σ(W2g·δ(W1g·Z))` per batch element.
    pub fn forward(&self, x: &Tensor<T>) -> Result<ExcitationParams<T>> {
        let z = self.squeeze(x)?;
        ExcitationParams::new(self.s_branch.forward(&z)?, self.g_branch.forward(&z)?)
    }

    pub fn parameters(&self) -> Vec<Parameter<T>> {
        let mut out = self.s_branch.parameters();
        out.extend(self.g_branch.parameters());
        out
    }

    /// Threshold-branch weights only.
    pub fn threshold_parameters(&self) -> Vec<Parameter<T>> {
        self.g_branch.parameters()
    }
}
