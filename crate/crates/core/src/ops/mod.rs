//! Differentiable primitives composed by every higher-level module.

mod conv;
mod elementwise;
mod linear;
mod loss;
mod norm;
mod pool;
mod upsample;

pub use conv::{conv2d, conv_output_extent};
pub use elementwise::{
    add, concat_channels, mean, mul, relu, scale, scale_channels, sigmoid, sub, sum,
};
pub use linear::{linear, matmul, matvec};
pub use loss::softmax_cross_entropy;
pub use norm::{batchnorm2d, BatchNormState, Mode};
pub use pool::{global_avg_pool, maxpool2d};
pub use upsample::upsample_bilinear;

use crate::error::{dim_err, Result};
use crate::tensor::{GradFn, Scalar, Tensor};

/// Backward rule backed by a closure over whatever the forward pass saved.
struct ClosureGrad<T: Scalar, F> {
    name: &'static str,
    inputs: Vec<Tensor<T>>,
    f: F,
}

impl<T, F> GradFn<T> for ClosureGrad<T, F>
where
    T: Scalar,
    F: Fn(&Tensor<T>, &[T]) -> Vec<Option<Vec<T>>> + Send + Sync,
{
    fn name(&self) -> &'static str {
        self.name
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        self.inputs.clone()
    }
    fn backward(&self, out: &Tensor<T>, grad: &[T]) -> Vec<Option<Vec<T>>> {
        (self.f)(out, grad)
    }
}

/// Builds an op result whose backward rule is `f`.
pub fn record<T, F>(
    name: &'static str,
    shape: Vec<usize>,
    data: Vec<T>,
    inputs: Vec<Tensor<T>>,
    f: F,
) -> Tensor<T>
where
    T: Scalar,
    F: Fn(&Tensor<T>, &[T]) -> Vec<Option<Vec<T>>> + Send + Sync + 'static,
{
    Tensor::from_op(shape, data, Box::new(ClosureGrad { name, inputs, f }))
}

pub(crate) fn expect_rank<T: Scalar>(op: &'static str, x: &Tensor<T>, rank: usize) -> Result<()> {
    if x.shape().len() != rank {
        return Err(dim_err(
            op,
            format!("expected rank {rank}, got shape {:?}", x.shape()),
        ));
    }
    Ok(())
}

pub(crate) fn nchw<T: Scalar>(op: &'static str, x: &Tensor<T>) -> Result<[usize; 4]> {
    expect_rank(op, x, 4)?;
    let s = x.shape();
    Ok([s[0], s[1], s[2], s[3]])
}
