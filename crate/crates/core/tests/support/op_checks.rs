//! Finite-difference checks of the primitive ops, shared by the op and
//! acceptance test crates.

use fanet::gradcheck::{check_wrt, finite_diff_check};
use fanet::ops::{self, BatchNormState, Mode};
use fanet::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRIALS: u64 = 20;
const RTOL: f64 = 1e-5;
const EPS: f64 = 1e-6;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::leaf(shape, (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

/// A fixed random projection so the loss is not a plain sum.
fn weighted_sum(t: &Tensor<f64>, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Tensor::from_vec(
        t.shape(),
        (0..t.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    ops::sum(&ops::mul(t, &w).unwrap())
}

fn all(t: &Tensor<f64>) -> Vec<usize> {
    (0..t.numel()).collect()
}

fn assert_ok(name: &str, trial: u64, rel: f64) {
    assert!(rel < RTOL, "{name} trial {trial}: max relative error {rel:.3e}");
}

/// Distance from `v` to the nearest kink of relu.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let vals = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.05..2.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::leaf(shape, vals).unwrap()
}

pub fn binary_elementwise_ops() {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let a = rand_tensor(&mut rng, &[2, 3, 2]);
        let b = rand_tensor(&mut rng, &[2, 3, 2]);
        for (name, f) in [
            ("add", ops::add as fn(&Tensor<f64>, &Tensor<f64>) -> fanet::Result<Tensor<f64>>),
            ("sub", ops::sub),
            ("mul", ops::mul),
        ] {
            let ra = check_wrt(|| Ok(weighted_sum(&f(&a, &b)?, trial)), &a, EPS, &all(&a)).unwrap();
            let rb = check_wrt(|| Ok(weighted_sum(&f(&a, &b)?, trial)), &b, EPS, &all(&b)).unwrap();
            assert_ok(name, trial, ra.max_rel_error.max(rb.max_rel_error));
        }
    }
}

pub fn unary_ops() {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
        let x = away_from_zero(&mut rng, &[3, 4]);
        let relu = finite_diff_check(|t| Ok(weighted_sum(&ops::relu(t), trial)), &x, EPS).unwrap();
        assert_ok("relu", trial, relu.max_rel_error);
        let sig = finite_diff_check(|t| Ok(weighted_sum(&ops::sigmoid(t), trial)), &x, EPS).unwrap();
        assert_ok("sigmoid", trial, sig.max_rel_error);
        let sc = finite_diff_check(|t| Ok(weighted_sum(&ops::scale(t, -1.7), trial)), &x, EPS).unwrap();
        assert_ok("scale", trial, sc.max_rel_error);
        let mean = finite_diff_check(|t| Ok(ops::mean(&ops::mul(t, t)?)), &x, EPS).unwrap();
        assert_ok("mean", trial, mean.max_rel_error);
        let rs = finite_diff_check(|t| Ok(weighted_sum(&t.reshape(&[2, 6])?, trial)), &x, EPS).unwrap();
        assert_ok("reshape", trial, rs.max_rel_error);
    }
}

pub fn linear_family() {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + trial);
        let a = rand_tensor(&mut rng, &[3, 4]);
        let b = rand_tensor(&mut rng, &[4, 2]);
        let v = rand_tensor(&mut rng, &[4]);
        let bias = rand_tensor(&mut rng, &[3]);
        let x = rand_tensor(&mut rng, &[2, 4]);
        let f_mm = || Ok(weighted_sum(&ops::matmul(&a, &b)?, trial));
        let f_mv = || Ok(weighted_sum(&ops::matvec(&a, &v)?, trial));
        let f_lin = || Ok(weighted_sum(&ops::linear(&x, &a, Some(&bias))?, trial));
        let mut worst: f64 = 0.0;
        for (f, wrt) in [(&f_mm as &dyn Fn() -> fanet::Result<Tensor<f64>>, &a), (&f_mm, &b)] {
            worst = worst.max(check_wrt(f, wrt, EPS, &all(wrt)).unwrap().max_rel_error);
        }
        worst = worst.max(check_wrt(f_mv, &a, EPS, &all(&a)).unwrap().max_rel_error);
        worst = worst.max(check_wrt(f_mv, &v, EPS, &all(&v)).unwrap().max_rel_error);
        for wrt in [&x, &a, &bias] {
            worst = worst.max(check_wrt(f_lin, wrt, EPS, &all(wrt)).unwrap().max_rel_error);
        }
        assert_ok("matmul/matvec/linear", trial, worst);
    }
}

pub fn channel_ops() {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + trial);
        let a = rand_tensor(&mut rng, &[2, 2, 3, 3]);
        let b = rand_tensor(&mut rng, &[2, 3, 3, 3]);
        let s = rand_tensor(&mut rng, &[2, 2]);
        let cat = || Ok(weighted_sum(&ops::concat_channels(&a, &b)?, trial));
        let sc = || Ok(weighted_sum(&ops::scale_channels(&a, &s)?, trial));
        let mut worst: f64 = 0.0;
        for (f, wrt) in [
            (&cat as &dyn Fn() -> fanet::Result<Tensor<f64>>, &a),
            (&cat, &b),
            (&sc, &a),
            (&sc, &s),
        ] {
            worst = worst.max(check_wrt(f, wrt, EPS, &all(wrt)).unwrap().max_rel_error);
        }
        assert_ok("concat/scale_channels", trial, worst);
    }
}

pub fn conv2d_all_inputs() {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + trial);
        let (stride, pad, k) = [(1, 1, 3), (2, 1, 3), (1, 0, 1), (1, 0, 3)][trial as usize % 4];
        let x = rand_tensor(&mut rng, &[2, 2, 5, 5]);
        let w = rand_tensor(&mut rng, &[3, 2, k, k]);
        let b = rand_tensor(&mut rng, &[3]);
        let f = || Ok(weighted_sum(&ops::conv2d(&x, &w, Some(&b), stride, pad)?, trial));
        let mut worst: f64 = 0.0;
        for wrt in [&x, &w, &b] {
            worst = worst.max(check_wrt(f, wrt, EPS, &all(wrt)).unwrap().max_rel_error);
        }
        assert_ok("conv2d", trial, worst);
    }
}

pub fn pooling_and_upsampling() {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + trial);
        // distinct values so the argmax is stable under ±eps
        let n = 2 * 2 * 4 * 6;
        let mut vals: Vec<f64> = (0..n).map(|i| -2.0 + 4.0 * i as f64 / n as f64).collect();
        for i in (1..n).rev() {
            vals.swap(i, rng.gen_range(0..=i));
        }
        let x = Tensor::leaf(&[2, 2, 4, 6], vals).unwrap();
        let mp = finite_diff_check(|t| Ok(weighted_sum(&ops::maxpool2d(t)?, trial)), &x, EPS).unwrap();
        assert_ok("maxpool2d", trial, mp.max_rel_error);
        let gap = finite_diff_check(|t| Ok(weighted_sum(&ops::global_avg_pool(t)?, trial)), &x, EPS).unwrap();
        assert_ok("global_avg_pool", trial, gap.max_rel_error);
        let up = finite_diff_check(|t| Ok(weighted_sum(&ops::upsample_bilinear(t, 2)?, trial)), &x, EPS)
            .unwrap();
        assert_ok("upsample_bilinear", trial, up.max_rel_error);
    }
}

pub fn batchnorm_both_modes() {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + trial);
        let x = rand_tensor(&mut rng, &[2, 3, 3, 3]);
        let gamma = rand_tensor(&mut rng, &[3]);
        let beta = rand_tensor(&mut rng, &[3]);
        let state = BatchNormState::new(3);
        *state.running_var.data_mut() = vec![0.5, 1.5, 2.0];
        *state.running_mean.data_mut() = vec![0.1, -0.2, 0.3];
        let mut worst: f64 = 0.0;
        for mode in [Mode::Train, Mode::Eval] {
            let f = || {
                // eval reads running stats; keep them fixed across probes
                let st = BatchNormState {
                    running_mean: state.running_mean.detach(),
                    running_var: state.running_var.detach(),
                };
                Ok(weighted_sum(&ops::batchnorm2d(&x, &gamma, &beta, &st, mode)?, trial))
            };
            for wrt in [&x, &gamma, &beta] {
                worst = worst.max(check_wrt(f, wrt, EPS, &all(wrt)).unwrap().max_rel_error);
            }
        }
        assert_ok("batchnorm2d", trial, worst);
    }
}

pub fn cross_entropy() {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + trial);
        let logits = rand_tensor(&mut rng, &[2, 5, 2, 3]);
        let targets: Vec<usize> = (0..12).map(|_| rng.gen_range(0..5)).collect();
        let r = finite_diff_check(|t| ops::softmax_cross_entropy(t, &targets), &logits, EPS).unwrap();
        assert_ok("softmax_cross_entropy", trial, r.max_rel_error);
    }
}

pub fn composite_conv_relu_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(800);
    let x = rand_tensor(&mut rng, &[1, 2, 6, 6]);
    let w = rand_tensor(&mut rng, &[3, 2, 3, 3]);
    let r = finite_diff_check(
        |t| Ok(ops::sum(&ops::relu(&ops::conv2d(t, &w, None, 1, 1)?))),
        &x,
        EPS,
    )
    .unwrap();
    assert!(r.max_rel_error < 1e-5, "{}", r.max_rel_error);
}

/// Every check with its name, in run order.
#[allow(dead_code)]
pub const ALL: &[(&str, fn())] = &[
    ("binary_elementwise_ops", binary_elementwise_ops),
    ("unary_ops", unary_ops),
    ("linear_family", linear_family),
    ("channel_ops", channel_ops),
    ("conv2d_all_inputs", conv2d_all_inputs),
    ("pooling_and_upsampling", pooling_and_upsampling),
    ("batchnorm_both_modes", batchnorm_both_modes),
    ("cross_entropy", cross_entropy),
    ("composite_conv_relu_sum", composite_conv_relu_sum),
];
