use super::{nchw, record};
use crate::error::{dim_err, Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Mean per-pixel cross-entropy of class logits `[N,K,H,W]` against a class-id
/// map of `N·H·W` entries.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, targets: &[usize]) -> Result<Tensor<T>> {
    let [n, k, h, w] = nchw("softmax_cross_entropy", logits)?;
    let hw = h * w;
    if targets.len() != n * hw {
        return Err(dim_err(
            "softmax_cross_entropy",
            format!("{} targets for logits {:?}", targets.len(), logits.shape()),
        ));
    }
    if let Some((pos, &t)) = targets.iter().enumerate().find(|(_, &t)| t >= k) {
        return Err(Error::Label(format!(
            "target class {t} at position {pos} is out of range for {k} classes"
        )));
    }
    let count = n * hw;
    let mut probs = vec![T::zero(); logits.numel()];
    let mut total = 0.0f64;
    {
        let ld = logits.data();
        let mut col = vec![T::zero(); k];
        for b in 0..n {
            for p in 0..hw {
                for (cls, slot) in col.iter_mut().enumerate() {
                    *slot = ld[(b * k + cls) * hw + p];
                }
                let max = col.iter().copied().fold(T::neg_infinity(), T::max);
                let mut denom = T::zero();
                for v in col.iter_mut() {
                    *v = (*v - max).exp();
                    denom += *v;
                }
                let t = targets[b * hw + p];
                let log_z = denom.ln() + max;
                total += (log_z - ld[(b * k + t) * hw + p]).as_f64();
                for (cls, &e) in col.iter().enumerate() {
                    probs[(b * k + cls) * hw + p] = e / denom;
                }
            }
        }
    }
    let loss = T::of(total / count as f64);
    let targets = targets.to_vec();
    Ok(record(
        "softmax_cross_entropy",
        Vec::new(),
        vec![loss],
        vec![logits.clone()],
        move |_, g| {
            let scale = g[0] / T::of(count as f64);
            let mut d: Vec<T> = probs.iter().map(|&p| p * scale).collect();
            for b in 0..n {
                for p in 0..hw {
                    d[(b * k + targets[b * hw + p]) * hw + p] -= scale;
                }
            }
            vec![Some(d)]
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_give_ln_k() {
        let logits = Tensor::<f64>::zeros(&[1, 5, 2, 2]);
        let loss = softmax_cross_entropy(&logits, &[0, 1, 2, 4]).unwrap();
        assert!((loss.item() - 5f64.ln()).abs() < 1e-12);
        assert!((loss.item() - 1.60944).abs() < 1e-5);
    }

    #[test]
    fn confident_logits_give_zero() {
        let mut v = vec![0.0; 5];
        v[3] = 1000.0;
        let logits = Tensor::<f64>::from_vec(&[1, 5, 1, 1], v).unwrap();
        assert!(softmax_cross_entropy(&logits, &[3]).unwrap().item().abs() < 1e-12);
    }

    #[test]
    fn matches_direct_log_sum_exp() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (n, k, hw) = (2, 5, 6);
        let vals: Vec<f64> = (0..n * k * hw).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let targets: Vec<usize> = (0..n * hw).map(|_| rng.gen_range(0..k)).collect();
        let mut want = 0.0;
        for b in 0..n {
            for p in 0..hw {
                let lse = (0..k).map(|c| vals[(b * k + c) * hw + p].exp()).sum::<f64>().ln();
                want += lse - vals[(b * k + targets[b * hw + p]) * hw + p];
            }
        }
        want /= (n * hw) as f64;
        let logits = Tensor::from_vec(&[n, k, 2, 3], vals).unwrap();
        let got = softmax_cross_entropy(&logits, &targets).unwrap().item();
        assert!((got - want).abs() < 1e-6);
    }

    #[test]
    fn out_of_range_target_is_label_error() {
        let logits = Tensor::<f64>::zeros(&[1, 3, 1, 1]);
        assert!(matches!(softmax_cross_entropy(&logits, &[3]), Err(Error::Label(_))));
    }
}
