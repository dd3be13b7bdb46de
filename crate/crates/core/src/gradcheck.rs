//! Central finite-difference verification of backward rules.
//!
//! Always double precision: single-precision differences are too noisy to
//! say anything about a 1e-5 relative error.

use crate::error::{Error, Result};
use crate::tensor::{no_grad, Tensor};

pub const DEFAULT_EPS: f64 = 1e-4;
/// Coordinates whose analytic and numeric gradients differ by less than this
/// count as exact.
pub const ABS_FLOOR: f64 = 1e-8;

/// Outcome of comparing backward() against central differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Flat index of the worst coordinate.
    pub worst: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradCheck {
    pub fn passes(&self, rtol: f64) -> bool {
        self.max_rel_error < rtol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= ABS_FLOOR {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs())
}

fn summarize(analytic: Vec<f64>, numeric: Vec<f64>) -> GradCheck {
    let mut out = GradCheck {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: 0,
        analytic,
        numeric,
    };
    for (i, (&a, &n)) in out.analytic.iter().zip(&out.numeric).enumerate() {
        let rel = relative_error(a, n);
        out.max_abs_error = out.max_abs_error.max((a - n).abs());
        if rel > out.max_rel_error {
            out.max_rel_error = rel;
            out.worst = i;
        }
    }
    out
}

/// Checks the gradient of the scalar function `f` at `x`.
///
/// `x` is used as the leaf to differentiate; a fresh leaf with its values is
/// created so the caller's tensor is left untouched.
pub fn finite_diff_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<GradCheck>
where
    F: Fn(&Tensor<f64>) -> Result<Tensor<f64>>,
{
    let leaf = Tensor::leaf(x.shape(), x.to_vec())?;
    let indices: Vec<usize> = (0..leaf.numel()).collect();
    check_wrt(|| f(&leaf), &leaf, eps, &indices)
}

/// Checks `d loss / d wrt` at the listed flat coordinates of `wrt`, which must
/// be a leaf that requires gradients (typically a model parameter). `wrt` is
/// perturbed in place and restored.
pub fn check_wrt<F>(loss: F, wrt: &Tensor<f64>, eps: f64, indices: &[usize]) -> Result<GradCheck>
where
    F: Fn() -> Result<Tensor<f64>>,
{
    if !wrt.requires_grad() || !wrt.is_leaf() {
        return Err(Error::Usage(
            "finite-difference target must be a leaf that requires grad".into(),
        ));
    }
    wrt.zero_grad();
    let root = loss()?;
    if root.numel() != 1 {
        return Err(Error::Usage(format!(
            "finite-difference check needs a scalar function, got shape {:?}",
            root.shape()
        )));
    }
    if root.requires_grad() {
        root.backward()?;
    }
    let full = wrt.grad().unwrap_or_else(|| vec![0.0; wrt.numel()]);
    wrt.zero_grad();
    let analytic: Vec<f64> = indices.iter().map(|&i| full[i]).collect();
    let mut numeric = Vec::with_capacity(indices.len());
    for &i in indices {
        let orig = wrt.data()[i];
        wrt.data_mut()[i] = orig + eps;
        let plus = no_grad(&loss)?.item();
        wrt.data_mut()[i] = orig - eps;
        let minus = no_grad(&loss)?.item();
        wrt.data_mut()[i] = orig;
        numeric.push((plus - minus) / (2.0 * eps));
    }
    Ok(summarize(analytic, numeric))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops;

    #[test]
    fn sum_is_exact() {
        let x = Tensor::from_vec(&[5], vec![0.1, -0.4, 2.0, 1.5, -1.9]).unwrap();
        let r = finite_diff_check(|t| Ok(ops::sum(t)), &x, DEFAULT_EPS).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert!(r.analytic.iter().all(|&g| g == 1.0));
    }

    #[test]
    fn sigmoid_sum_is_tight() {
        let x = Tensor::from_vec(&[4], vec![-1.7, -0.2, 0.6, 1.9]).unwrap();
        let r = finite_diff_check(|t| Ok(ops::sum(&ops::sigmoid(t))), &x, DEFAULT_EPS).unwrap();
        assert!(r.max_rel_error < 1e-6, "{}", r.max_rel_error);
    }

    #[test]
    fn detects_a_wrong_rule() {
        // relu at exactly zero: analytic 0, but the check itself should still run
        let x = Tensor::from_vec(&[2], vec![1.0, -1.0]).unwrap();
        let r = finite_diff_check(|t| Ok(ops::sum(&ops::scale(&ops::relu(t), 3.0))), &x, 1e-6).unwrap();
        assert_eq!(r.analytic, vec![3.0, 0.0]);
        assert!(r.max_rel_error < 1e-8);
    }

    #[test]
    fn rejects_non_scalar() {
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        assert!(finite_diff_check(|t| Ok(ops::relu(t)), &x, 1e-4).is_err());
    }
}
