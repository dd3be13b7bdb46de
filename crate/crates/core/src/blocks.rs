//! U-Net building blocks: In-Conv, Down-Conv, Up-Conv, Merge-Conv, Out-Conv
//! and the skip concatenation.
//!
//! Convolutions followed by batch norm carry no bias (the norm's `beta`
//! subsumes it). Weights use Kaiming-uniform fan-in initialization; norm
//! `gamma`/`beta` start at one/zero.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};
use crate::init;
use crate::ops::{self, BatchNormState, Mode};
use crate::tensor::{Parameter, Scalar, Tensor};

/// Named non-trainable state, e.g. batch-norm running statistics.
pub type Buffer<T> = (String, Tensor<T>);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    In,
    Down,
    Up,
    Merge,
    Out,
}

/// Which excitations are attached to a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExcitationSlots {
    None,
    Fiam,
    Fsam,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub slots: ExcitationSlots,
}

impl BlockSpec {
    pub fn kernel(&self) -> usize {
        match self.kind {
            BlockKind::Out => 1,
            _ => 3,
        }
    }
}

/// 3×3 conv (pad 1, stride 1) → batch norm → ReLU.
#[derive(Clone, Debug)]
pub struct ConvBnRelu<T: Scalar> {
    pub weight: Parameter<T>,
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
    pub state: BatchNormState<T>,
    prefix: String,
}

impl<T: Scalar> ConvBnRelu<T> {
    pub fn new(seed: u64, prefix: &str, c_in: usize, c_out: usize) -> Result<Self> {
        Ok(ConvBnRelu {
            weight: init::kaiming_uniform(seed, &format!("{prefix}.conv.w"), &[c_out, c_in, 3, 3], c_in * 9)?,
            gamma: init::constant(&format!("{prefix}.bn.gamma"), &[c_out], 1.0)?,
            beta: init::constant(&format!("{prefix}.bn.beta"), &[c_out], 0.0)?,
            state: BatchNormState::new(c_out),
            prefix: prefix.to_string(),
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.tensor.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.tensor.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let y = ops::conv2d(x, &self.weight.tensor, None, 1, 1)?;
        let y = ops::batchnorm2d(&y, &self.gamma.tensor, &self.beta.tensor, &self.state, mode)?;
        Ok(ops::relu(&y))
    }

    pub fn parameters(&self) -> Vec<Parameter<T>> {
        vec![self.weight.clone(), self.gamma.clone(), self.beta.clone()]
    }

    pub fn buffers(&self) -> Vec<Buffer<T>> {
        vec![
            (format!("{}.bn.running_mean", self.prefix), self.state.running_mean.clone()),
            (format!("{}.bn.running_var", self.prefix), self.state.running_var.clone()),
        ]
    }
}

/// Two successive conv-bn-relu stages. Serves as In-Conv, as the body of
/// Down-Conv, and as Merge-Conv.
#[derive(Clone, Debug)]
pub struct DoubleConv<T: Scalar> {
    pub stage1: ConvBnRelu<T>,
    pub stage2: ConvBnRelu<T>,
}

impl<T: Scalar> DoubleConv<T> {
    /// Both stages output `c_out` channels.
    pub fn new(seed: u64, prefix: &str, c_in: usize, c_out: usize) -> Result<Self> {
        Ok(DoubleConv {
            stage1: ConvBnRelu::new(seed, &format!("{prefix}.conv1"), c_in, c_out)?,
            stage2: ConvBnRelu::new(seed, &format!("{prefix}.conv2"), c_out, c_out)?,
        })
    }

    fn check(&self, op: &'static str, x: &Tensor<T>) -> Result<()> {
        if x.shape().len() != 4 || x.shape()[1] != self.stage1.in_channels() {
            return Err(dim_err(
                op,
                format!(
                    "expected {} input channels, got shape {:?}",
                    self.stage1.in_channels(),
                    x.shape()
                ),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.forward_attached(x, mode, Ok, Ok)
    }

    /// Runs both stages, passing the intermediate feature through
    /// `after_stage1` before stage two and the output through `after_stage2`.
    /// These are the two excitation attachment points of Merge-Conv.
    pub fn forward_attached(
        &self,
        x: &Tensor<T>,
        mode: Mode,
        after_stage1: impl FnOnce(Tensor<T>) -> Result<Tensor<T>>,
        after_stage2: impl FnOnce(Tensor<T>) -> Result<Tensor<T>>,
    ) -> Result<Tensor<T>> {
        self.check("double_conv", x)?;
        let mid = after_stage1(self.stage1.forward(x, mode)?)?;
        after_stage2(self.stage2.forward(&mid, mode)?)
    }

    pub fn out_channels(&self) -> usize {
        self.stage2.out_channels()
    }

    pub fn parameters(&self) -> Vec<Parameter<T>> {
        let mut p = self.stage1.parameters();
        p.extend(self.stage2.parameters());
        p
    }

    pub fn buffers(&self) -> Vec<Buffer<T>> {
        let mut b = self.stage1.buffers();
        b.extend(self.stage2.buffers());
        b
    }
}

/// 2×2 max pooling, then a double conv. Halves the extent.
#[derive(Clone, Debug)]
pub struct DownConv<T: Scalar> {
    pub body: DoubleConv<T>,
}

impl<T: Scalar> DownConv<T> {
    pub fn new(seed: u64, prefix: &str, c_in: usize, c_out: usize) -> Result<Self> {
        Ok(DownConv {
            body: DoubleConv::new(seed, prefix, c_in, c_out)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.body.forward(&ops::maxpool2d(x)?, mode)
    }

    pub fn parameters(&self) -> Vec<Parameter<T>> {
        self.body.parameters()
    }

    pub fn buffers(&self) -> Vec<Buffer<T>> {
        self.body.buffers()
    }
}

/// Bilinear ×2 upsampling, then one conv-bn-relu stage. Doubles the extent.
#[derive(Clone, Debug)]
pub struct UpConv<T: Scalar> {
    pub stage: ConvBnRelu<T>,
}

impl<T: Scalar> UpConv<T> {
    pub fn new(seed: u64, prefix: &str, c_in: usize, c_out: usize) -> Result<Self> {
        Ok(UpConv {
            stage: ConvBnRelu::new(seed, &format!("{prefix}.conv"), c_in, c_out)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.stage.forward(&ops::upsample_bilinear(x, 2)?, mode)
    }

    pub fn parameters(&self) -> Vec<Parameter<T>> {
        self.stage.parameters()
    }

    pub fn buffers(&self) -> Vec<Buffer<T>> {
        self.stage.buffers()
    }
}

/// 1×1 conv to class logits; no norm, no activation.
#[derive(Clone, Debug)]
pub struct OutConv<T: Scalar> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
}

impl<T: Scalar> OutConv<T> {
    pub fn new(seed: u64, prefix: &str, c_in: usize, classes: usize) -> Result<Self> {
        Ok(OutConv {
            weight: init::kaiming_uniform(seed, &format!("{prefix}.w"), &[classes, c_in, 1, 1], c_in)?,
            bias: init::constant(&format!("{prefix}.b"), &[classes], 0.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        ops::conv2d(x, &self.weight.tensor, Some(&self.bias.tensor), 1, 0)
    }

    pub fn parameters(&self) -> Vec<Parameter<T>> {
        vec![self.weight.clone(), self.bias.clone()]
    }
}

/// Channel concatenation of a decoder feature with its encoder skip; the
/// decoder channels come first.
pub fn skip_concat<T: Scalar>(decoder: &Tensor<T>, encoder: &Tensor<T>) -> Result<Tensor<T>> {
    let (d, e) = (decoder.shape(), encoder.shape());
    if d.len() != 4 || e.len() != 4 || d[2..] != e[2..] || d[0] != e[0] {
        return Err(dim_err(
            "skip_concat",
            format!("decoder {d:?} and encoder {e:?} differ in batch or extent"),
        ));
    }
    ops::concat_channels(decoder, encoder)
}
