//! Finite-difference checks of the heads, blocks and a tiny end-to-end
//! model, shared by the model and acceptance test crates.

use fanet::arch::{ArchitectureSpec, Model, Variant};
use fanet::attention::{fastidious_excite, ExcitationParams, Fiam, FiamConfig, Fsam, FsamConfig, GradMode, SeBlock};
use fanet::blocks::{skip_concat, ConvBnRelu, DoubleConv, DownConv, OutConv, UpConv};
use fanet::gradcheck::{check_wrt, finite_diff_check, GradCheck};
use fanet::ops::{self, Mode};
use fanet::{Parameter, Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RTOL: f64 = 1e-3;
const EPS: f64 = 1e-6;

fn rand_tensor(seed: u64, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::leaf(shape, (0..shape.iter().product()).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

fn projection(t: &Tensor<f64>, seed: u64) -> Result<Tensor<f64>> {
    let w = rand_tensor(seed, t.shape(), -1.0, 1.0).detach();
    Ok(ops::sum(&ops::mul(t, &w)?))
}

/// Up to `per_param` evenly spread coordinates of every parameter.
fn check_parameters<F>(name: &str, params: &[Parameter<f64>], per_param: usize, loss: F)
where
    F: Fn() -> Result<Tensor<f64>>,
{
    for p in params {
        let n = p.tensor.numel();
        let step = (n / per_param.max(1)).max(1);
        let idx: Vec<usize> = (0..n).step_by(step).take(per_param).collect();
        let r = check_wrt(&loss, &p.tensor, EPS, &idx).unwrap();
        report(&format!("{name}/{}", p.name), &r);
    }
}

fn report(name: &str, r: &GradCheck) {
    assert!(
        r.passes(RTOL),
        "{name}: max relative error {:.3e} at {} (analytic {:?}, numeric {:?})",
        r.max_rel_error,
        r.worst,
        r.analytic.get(r.worst),
        r.numeric.get(r.worst)
    );
}

pub fn fsam_gradients() {
    let f = Fsam::<f64>::new(3, "fsam1", FsamConfig { channels: 6, reduction: 3, bias: true }).unwrap();
    let x = rand_tensor(1, &[2, 6, 3, 3], -2.0, 2.0);
    let loss = |x: &Tensor<f64>| -> Result<Tensor<f64>> {
        let p = f.forward(x)?;
        ops::add(&projection(&p.s, 7)?, &projection(&p.g, 8)?)
    };
    report("fsam/x", &finite_diff_check(loss, &x, EPS).unwrap());
    check_parameters("fsam", &f.parameters(), 8, || loss(&x));
}

pub fn fiam_gradients() {
    let cfg = FiamConfig { in_channels: 4, factor: 1.2, level_dims: vec![3, 2], bias: true };
    let f = Fiam::<f64>::new(4, "fiam", cfg).unwrap();
    let x = rand_tensor(2, &[2, 4, 4, 4], -2.0, 2.0);
    let loss = |x: &Tensor<f64>| -> Result<Tensor<f64>> {
        let mut acc = Tensor::scalar(0.0);
        for (n, p) in f.forward(x)?.into_iter().enumerate() {
            acc = ops::add(&acc, &projection(&p.s, 10 + n as u64)?)?;
            acc = ops::add(&acc, &projection(&p.g, 20 + n as u64)?)?;
        }
        Ok(acc)
    };
    report("fiam/x", &finite_diff_check(loss, &x, EPS).unwrap());
    check_parameters("fiam", &f.parameters(), 8, || loss(&x));
}

pub fn se_gradients() {
    let se = SeBlock::<f64>::new(5, "se1", 6, 3, false).unwrap();
    let x = rand_tensor(3, &[2, 6, 3, 3], -2.0, 2.0);
    let loss = |x: &Tensor<f64>| projection(&se.forward(x)?, 9);
    report("se/x", &finite_diff_check(loss, &x, EPS).unwrap());
    check_parameters("se", &se.parameters(), 8, || loss(&x));
}

pub fn excitation_gradients_away_from_threshold() {
    // Inputs at least 0.05 from the threshold so no mask entry flips.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = vec![0.1, -0.3, 0.4, 0.0];
    let x: Vec<f64> = (0..2 * 2 * 9)
        .map(|i| {
            let gc = g[i / 9];
            let d = rng.gen_range(0.05..1.5);
            if rng.gen_bool(0.5) { gc + d } else { gc - d }
        })
        .collect();
    let x = Tensor::leaf(&[2, 2, 3, 3], x).unwrap();
    let s = rand_tensor(5, &[2, 2], 0.05, 0.95);
    let gt = Tensor::leaf(&[2, 2], g).unwrap();
    let loss = || {
        let p = ExcitationParams::new(s.clone(), gt.clone())?;
        projection(&fastidious_excite(&x, &p, GradMode::Hard, 0.1)?, 6)
    };
    for (name, t) in [("x", &x), ("s", &s), ("g", &gt)] {
        let idx: Vec<usize> = (0..t.numel()).collect();
        report(&format!("excite/{name}"), &check_wrt(loss, t, EPS, &idx).unwrap());
    }
}

pub fn block_gradients() {
    let x = rand_tensor(6, &[2, 3, 6, 6], -2.0, 2.0);

    let cbr = ConvBnRelu::<f64>::new(1, "cbr", 3, 4).unwrap();
    let loss = |x: &Tensor<f64>| projection(&cbr.forward(x, Mode::Train)?, 1);
    report("conv_bn_relu/x", &finite_diff_check(loss, &x, EPS).unwrap());
    check_parameters("conv_bn_relu", &cbr.parameters(), 6, || loss(&x));

    let dc = DoubleConv::<f64>::new(1, "inc", 3, 4).unwrap();
    let loss = |x: &Tensor<f64>| projection(&dc.forward(x, Mode::Train)?, 2);
    report("double_conv/x", &finite_diff_check(loss, &x, EPS).unwrap());
    check_parameters("double_conv", &dc.parameters(), 6, || loss(&x));

    let down = DownConv::<f64>::new(1, "down1", 3, 4).unwrap();
    let loss = |x: &Tensor<f64>| projection(&down.forward(x, Mode::Train)?, 3);
    report("down/x", &finite_diff_check(loss, &x, EPS).unwrap());
    check_parameters("down", &down.parameters(), 6, || loss(&x));

    let up = UpConv::<f64>::new(1, "up1", 3, 2).unwrap();
    let small = rand_tensor(7, &[2, 3, 3, 3], -2.0, 2.0);
    let loss = |x: &Tensor<f64>| projection(&up.forward(x, Mode::Train)?, 4);
    report("up/x", &finite_diff_check(loss, &small, EPS).unwrap());
    check_parameters("up", &up.parameters(), 6, || loss(&small));

    let out = OutConv::<f64>::new(1, "outc", 3, 5).unwrap();
    let loss = |x: &Tensor<f64>| projection(&out.forward(x)?, 5);
    report("out/x", &finite_diff_check(loss, &x, EPS).unwrap());
    check_parameters("out", &out.parameters(), 6, || loss(&x));

    let enc = rand_tensor(8, &[2, 2, 6, 6], -2.0, 2.0);
    let loss = |d: &Tensor<f64>| projection(&skip_concat(d, &enc)?, 6);
    report("skip_concat/x", &finite_diff_check(loss, &x, EPS).unwrap());
}

fn tiny(variant: Variant) -> ArchitectureSpec {
    ArchitectureSpec {
        base_width: 2,
        input_size: 16,
        grad_mode: GradMode::Hard,
        ..ArchitectureSpec::full_scale(variant)
    }
}

/// Smallest |x − g| over every excited activation of one forward pass.
fn threshold_margin(model: &Model<f64>, x: &Tensor<f64>) -> f64 {
    let (_, records) = model.forward_traced(x, Mode::Train).unwrap();
    let mut margin = f64::INFINITY;
    for r in records {
        let shape = r.input.shape().to_vec();
        let hw = shape[2] * shape[3];
        let (xs, gs) = (r.input.to_vec(), r.params.g.to_vec());
        for (i, v) in xs.iter().enumerate() {
            margin = margin.min((v - gs[i / hw]).abs());
        }
    }
    margin
}

pub fn tiny_fanet_end_to_end() {
    // Hard excitation is discontinuous at x = g, so the step must stay far
    // below the smallest threshold margin of this batch.
    const E2E_EPS: f64 = 1e-7;
    let model = Model::<f64>::build(&tiny(Variant::Fanet), 12).unwrap();
    let x = rand_tensor(9, &[2, 3, 16, 16], -2.0, 2.0);
    let margin = threshold_margin(&model, &x);
    assert!(margin > 1e3 * E2E_EPS, "threshold margin {margin:e} too small");
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let targets: Vec<usize> = (0..2 * 16 * 16).map(|_| rng.gen_range(0..5)).collect();
    let loss = || ops::softmax_cross_entropy(&model.forward(&x, Mode::Train)?, &targets);
    for p in model.parameters() {
        let n = p.tensor.numel();
        let idx: Vec<usize> = (0..n).step_by((n / 4).max(1)).take(4).collect();
        report(&format!("fanet/{}", p.name), &check_wrt(loss, &p.tensor, E2E_EPS, &idx).unwrap());
    }
    let idx: Vec<usize> = (0..x.numel()).step_by(37).collect();
    report("fanet/x", &check_wrt(loss, &x, E2E_EPS, &idx).unwrap());
}

pub fn tiny_unet_se_end_to_end() {
    let model = Model::<f64>::build(&tiny(Variant::UnetSe), 12).unwrap();
    let x = rand_tensor(11, &[2, 3, 16, 16], -2.0, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let targets: Vec<usize> = (0..2 * 16 * 16).map(|_| rng.gen_range(0..5)).collect();
    check_parameters("unet-se", &model.parameters(), 3, || {
        ops::softmax_cross_entropy(&model.forward(&x, Mode::Train)?, &targets)
    });
}

/// Every check with its name, in run order.
#[allow(dead_code)]
pub const ALL: &[(&str, fn())] = &[
    ("fsam_gradients", fsam_gradients),
    ("fiam_gradients", fiam_gradients),
    ("se_gradients", se_gradients),
    ("excitation_gradients_away_from_threshold", excitation_gradients_away_from_threshold),
    ("block_gradients", block_gradients),
    ("tiny_fanet_end_to_end", tiny_fanet_end_to_end),
    ("tiny_unet_se_end_to_end", tiny_unet_se_end_to_end),
];
