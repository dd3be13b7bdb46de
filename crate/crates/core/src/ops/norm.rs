use serde::{Deserialize, Serialize};

use super::{nchw, record};
use crate::error::{dim_err, Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Whether normalization layers use batch or running statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Running mean/variance of a batch-norm layer. Both are plain
/// (non-differentiable) tensors so they checkpoint like parameters.
#[derive(Clone, Debug)]
pub struct BatchNormState<T: Scalar> {
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
}

impl<T: Scalar> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
        }
    }
}

/// Per-channel normalization over N, H, W followed by the affine map
/// `gamma · x̂ + beta`. In train mode the running statistics are updated with
/// momentum 0.1 (unbiased variance); eval mode reads them. Epsilon is 1e-5.
pub fn batchnorm2d<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    state: &BatchNormState<T>,
    mode: Mode,
) -> Result<Tensor<T>> {
    let [n, c, h, w] = nchw("batchnorm2d", x)?;
    if gamma.shape() != [c] || beta.shape() != [c] || state.running_mean.shape() != [c] {
        return Err(dim_err(
            "batchnorm2d",
            format!(
                "input {:?} with gamma {:?}, beta {:?}",
                x.shape(),
                gamma.shape(),
                beta.shape()
            ),
        ));
    }
    let hw = h * w;
    let m = n * hw;
    let eps = T::of(BN_EPS);
    let (mean, var) = match mode {
        Mode::Train => {
            if m < 2 {
                return Err(Error::DegenerateStatistics {
                    op: "batchnorm2d",
                    detail: format!("train mode needs N·H·W >= 2, got shape {:?}", x.shape()),
                });
            }
            let xd = x.data();
            let mut mean = vec![0.0f64; c];
            let mut var = vec![0.0f64; c];
            for (idx, plane) in xd.chunks(hw).enumerate() {
                mean[idx % c] += plane.iter().map(|v| v.as_f64()).sum::<f64>();
            }
            mean.iter_mut().for_each(|v| *v /= m as f64);
            for (idx, plane) in xd.chunks(hw).enumerate() {
                let mu = mean[idx % c];
                var[idx % c] += plane.iter().map(|v| (v.as_f64() - mu).powi(2)).sum::<f64>();
            }
            var.iter_mut().for_each(|v| *v /= m as f64);
            {
                let mut rm = state.running_mean.data_mut();
                let mut rv = state.running_var.data_mut();
                let unbias = m as f64 / (m as f64 - 1.0);
                for ch in 0..c {
                    rm[ch] = T::of((1.0 - BN_MOMENTUM) * rm[ch].as_f64() + BN_MOMENTUM * mean[ch]);
                    rv[ch] = T::of(
                        (1.0 - BN_MOMENTUM) * rv[ch].as_f64() + BN_MOMENTUM * var[ch] * unbias,
                    );
                }
            }
            (
                mean.into_iter().map(T::of).collect::<Vec<T>>(),
                var.into_iter().map(T::of).collect::<Vec<T>>(),
            )
        }
        Mode::Eval => (state.running_mean.to_vec(), state.running_var.to_vec()),
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = Vec::with_capacity(x.numel());
    let mut out = Vec::with_capacity(x.numel());
    {
        let (xd, gd, bd) = (x.data(), gamma.data(), beta.data());
        for (idx, plane) in xd.chunks(hw).enumerate() {
            let ch = idx % c;
            for &v in plane {
                let xh = (v - mean[ch]) * inv_std[ch];
                xhat.push(xh);
                out.push(gd[ch] * xh + bd[ch]);
            }
        }
    }
    let (sx, sg, sb) = (x.clone(), gamma.clone(), beta.clone());
    Ok(record(
        "batchnorm2d",
        x.shape().to_vec(),
        out,
        vec![x.clone(), gamma.clone(), beta.clone()],
        move |_, g| {
            let mut sum_g = vec![T::zero(); c];
            let mut sum_gx = vec![T::zero(); c];
            for (idx, (gp, xp)) in g.chunks(hw).zip(xhat.chunks(hw)).enumerate() {
                let ch = idx % c;
                for (&gv, &xh) in gp.iter().zip(xp) {
                    sum_g[ch] += gv;
                    sum_gx[ch] += gv * xh;
                }
            }
            let gamma = sg.data();
            let gx = sx.requires_grad().then(|| {
                let mut dx = Vec::with_capacity(g.len());
                let mf = T::of(m as f64);
                for (idx, (gp, xp)) in g.chunks(hw).zip(xhat.chunks(hw)).enumerate() {
                    let ch = idx % c;
                    match mode {
                        Mode::Train => {
                            let k = gamma[ch] * inv_std[ch] / mf;
                            dx.extend(
                                gp.iter()
                                    .zip(xp)
                                    .map(|(&gv, &xh)| k * (mf * gv - sum_g[ch] - xh * sum_gx[ch])),
                            );
                        }
                        Mode::Eval => {
                            let k = gamma[ch] * inv_std[ch];
                            dx.extend(gp.iter().map(|&gv| k * gv));
                        }
                    }
                }
                dx
            });
            let gg = sg.requires_grad().then(|| sum_gx.clone());
            let gb = sb.requires_grad().then(|| sum_g.clone());
            vec![gx, gg, gb]
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn channel_moments(v: &[f64], c: usize, hw: usize, ch: usize) -> (f64, f64) {
        let vals: Vec<f64> = v
            .chunks(hw)
            .enumerate()
            .filter(|(i, _)| i % c == ch)
            .flat_map(|(_, p)| p.iter().copied())
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        (mean, var.sqrt())
    }

    #[test]
    fn train_output_has_beta_mean_and_gamma_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let vals: Vec<f64> = (0..2 * 3 * 16).map(|_| rng.gen_range(-3.0..5.0)).collect();
        let x = Tensor::from_vec(&[2, 3, 4, 4], vals).unwrap();
        let gamma = Tensor::from_vec(&[3], vec![2.0, -0.5, 1.0]).unwrap();
        let beta = Tensor::from_vec(&[3], vec![0.3, -1.0, 0.0]).unwrap();
        let state = BatchNormState::new(3);
        let y = batchnorm2d(&x, &gamma, &beta, &state, Mode::Train).unwrap().to_vec();
        for (ch, (&gm, &bt)) in [2.0f64, -0.5, 1.0].iter().zip(&[0.3, -1.0, 0.0]).enumerate() {
            let (mean, std) = channel_moments(&y, 3, 16, ch);
            assert!((mean - bt).abs() < 1e-5);
            // the 1e-5 epsilon shrinks the std by a relative ~eps/(2 var)
            assert!((std - gm.abs()).abs() < 1e-5 * gm.abs().max(1.0) * 10.0, "{std} vs {gm}");
        }
    }

    #[test]
    fn standardized_input_passes_through() {
        // per-channel values with zero mean and unit (biased) variance
        let x = Tensor::<f64>::from_vec(&[1, 1, 2, 2], vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let y = batchnorm2d(
            &x,
            &Tensor::full(&[1], 1.0),
            &Tensor::zeros(&[1]),
            &BatchNormState::new(1),
            Mode::Train,
        )
        .unwrap();
        for (a, b) in y.to_vec().iter().zip(x.to_vec()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn running_stats_update_with_momentum() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 1, 2], vec![1.0, 3.0]).unwrap();
        let state = BatchNormState::new(1);
        batchnorm2d(&x, &Tensor::full(&[1], 1.0), &Tensor::zeros(&[1]), &state, Mode::Train).unwrap();
        assert!((state.running_mean.item() - 0.2).abs() < 1e-12);
        // unbiased variance of {1, 3} is 2
        assert!((state.running_var.item() - (0.9 + 0.2)).abs() < 1e-12);
    }

    #[test]
    fn single_element_train_is_degenerate() {
        let x = Tensor::<f64>::zeros(&[1, 2, 1, 1]);
        let r = batchnorm2d(
            &x,
            &Tensor::full(&[2], 1.0),
            &Tensor::zeros(&[2]),
            &BatchNormState::new(2),
            Mode::Train,
        );
        assert!(matches!(r, Err(Error::DegenerateStatistics { .. })));
    }

    #[test]
    fn eval_uses_running_stats() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 1, 1], vec![2.0]).unwrap();
        let state = BatchNormState::new(1);
        *state.running_mean.data_mut() = vec![1.0];
        *state.running_var.data_mut() = vec![4.0 - BN_EPS];
        let y = batchnorm2d(&x, &Tensor::full(&[1], 1.0), &Tensor::zeros(&[1]), &state, Mode::Eval).unwrap();
        assert!((y.item() - 0.5).abs() < 1e-12);
    }
}
