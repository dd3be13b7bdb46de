use std::f64::consts::PI;

use crate::error::{dim_err, Error, Result};
use crate::tensor::{Parameter, Scalar};

/// One momentum-SGD update with coupled weight decay:
/// `g' = grad + wd·θ`, `v ← μ·v + g'`, `θ ← θ − lr·v`.
pub fn sgd_step<T: Scalar>(
    param: &mut [T],
    grad: &[T],
    velocity: &mut [T],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if param.len() != grad.len() || param.len() != velocity.len() {
        return Err(dim_err(
            "sgd_step",
            format!(
                "parameter has {} values, gradient {}, velocity {}",
                param.len(),
                grad.len(),
                velocity.len()
            ),
        ));
    }
    let (lr, mu, wd) = (T::of(lr), T::of(momentum), T::of(weight_decay));
    for ((p, &g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = mu * *v + (g + wd * *p);
        *p -= lr * *v;
    }
    Ok(())
}

/// Cosine annealing from `lr0` at `t = 0` to 0 at `t = total`.
pub fn cosine_lr(t: usize, total: usize, lr0: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::Config("cosine schedule needs at least one step".into()));
    }
    if t > total {
        return Err(Error::Config(format!("step {t} is past the schedule end {total}")));
    }
    Ok((0.5 * lr0 * (1.0 + (PI * t as f64 / total as f64).cos())).max(0.0))
}

/// Momentum SGD over a fixed parameter list, velocities zero-initialized.
/// Weight decay applies to every parameter.
#[derive(Debug)]
pub struct Sgd<T: Scalar> {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(params: &[Parameter<T>], momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity: params.iter().map(|p| vec![T::zero(); p.tensor.numel()]).collect(),
        }
    }

    /// Applies one update from the accumulated gradients; a parameter without
    /// a gradient is treated as having a zero gradient.
    pub fn step(&mut self, params: &[Parameter<T>], lr: f64) -> Result<()> {
        if params.len() != self.velocity.len() {
            return Err(dim_err(
                "sgd",
                format!("optimizer tracks {} parameters, got {}", self.velocity.len(), params.len()),
            ));
        }
        for (p, v) in params.iter().zip(self.velocity.iter_mut()) {
            let grad = p.tensor.grad().unwrap_or_else(|| vec![T::zero(); p.tensor.numel()]);
            let mut data = p.tensor.data_mut();
            sgd_step(&mut data, &grad, v, lr, self.momentum, self.weight_decay)?;
        }
        Ok(())
    }
}
