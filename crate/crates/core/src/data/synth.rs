use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SegmentationSample;
use crate::error::{Error, Result};
use crate::init;

/// Parameters of the procedural dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub count: usize,
    pub size: usize,
}

impl SynthConfig {
    pub fn generate(&self) -> Result<Vec<SegmentationSample>> {
        synth_orange(self.seed, self.count, self.size)
    }
}

/// Irregular blob: radius modulated by a few random harmonics.
struct Blob {
    cx: f64,
    cy: f64,
    radius: f64,
    harmonics: Vec<(f64, f64, f64)>,
}

impl Blob {
    fn random(rng: &mut ChaCha8Rng, cx: f64, cy: f64, radius: f64, roughness: f64) -> Self {
        let harmonics = (2..5)
            .map(|k| (k as f64, rng.gen_range(0.0..roughness), rng.gen_range(0.0..TAU)))
            .collect();
        Blob { cx, cy, radius, harmonics }
    }

    /// Signed inside measure: `< 1` inside, scaled by the local radius.
    fn level(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let theta = dy.atan2(dx);
        let r = self.radius
            * (1.0
                + self
                    .harmonics
                    .iter()
                    .map(|&(k, a, ph)| a * (k * theta + ph).sin())
                    .sum::<f64>());
        (dx * dx + dy * dy).sqrt() / r.max(1e-9)
    }
}

fn random_point_in_disk(rng: &mut ChaCha8Rng, cx: f64, cy: f64, max_r: f64) -> (f64, f64) {
    let r = max_r * rng.gen::<f64>().sqrt();
    let a = rng.gen_range(0.0..TAU);
    (cx + r * a.cos(), cy + r * a.sin())
}

/// Orange-like images with five classes: background (including the peel),
/// blossom end (1), stem end (2), low-contrast flaws (3) and high-contrast
/// ulcers (4). Every image shows exactly one of the two ends, painted last.
/// Output depends only on `(seed, index, size)`.
pub fn synth_orange(seed: u64, count: usize, size: usize) -> Result<Vec<SegmentationSample>> {
    if size < 16 || !size.is_multiple_of(16) {
        return Err(Error::Config(format!(
            "synthetic image size must be a positive multiple of 16, got {size}"
        )));
    }
    (0..count).map(|i| synth_one(seed, i, size)).collect()
}

fn synth_one(seed: u64, index: usize, size: usize) -> Result<SegmentationSample> {
    let mut rng = init::stream(seed, &format!("synth/{index}"));
    let s = size as f64;
    let n = size * size;

    let bg: [f64; 3] = [rng.gen_range(0.04..0.12), rng.gen_range(0.04..0.12), rng.gen_range(0.05..0.14)];
    let fc = (
        s / 2.0 + rng.gen_range(-0.06..0.06) * s,
        s / 2.0 + rng.gen_range(-0.06..0.06) * s,
    );
    let fr = rng.gen_range(0.32..0.42) * s;
    let fruit = Blob::random(&mut rng, fc.0, fc.1, fr, 0.03);
    let peel: [f64; 3] = [
        rng.gen_range(0.85..0.98),
        rng.gen_range(0.45..0.62),
        rng.gen_range(0.05..0.15),
    ];
    let light = (rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4));
    let dimple_phase = (rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU));

    let mut image = vec![0f32; n * 3];
    let mut mask = vec![0u8; n];
    let mut inside = vec![false; n];

    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64, y as f64);
            let k = y * size + x;
            let lvl = fruit.level(px, py);
            let noise = rng.gen_range(-0.02..0.02);
            let rgb = if lvl < 1.0 {
                inside[k] = true;
                let (nx, ny) = ((px - fc.0) / fr, (py - fc.1) / fr);
                let shade = (1.0 - 0.35 * lvl * lvl + 0.15 * (nx * light.0 + ny * light.1)).clamp(0.3, 1.1);
                let dimples = 0.03
                    * ((px * 1.7 + dimple_phase.0).sin() * (py * 1.9 + dimple_phase.1).sin());
                let tex = rng.gen_range(-0.04..0.04);
                [
                    peel[0] * shade + dimples + tex,
                    peel[1] * shade + dimples + tex,
                    peel[2] * shade + 0.5 * tex,
                ]
            } else {
                [bg[0] + noise, bg[1] + noise, bg[2] + noise]
            };
            for c in 0..3 {
                image[k * 3 + c] = rgb[c] as f32;
            }
        }
    }

    let paint = |blob: &Blob, class: u8, color: &dyn Fn(f64, f64) -> [f64; 3], image: &mut [f32], mask: &mut [u8]| {
        let reach = blob.radius * 1.3 + 1.0;
        let (x0, x1) = ((blob.cx - reach).floor().max(0.0) as usize, ((blob.cx + reach).ceil().max(0.0) as usize).min(size - 1));
        let (y0, y1) = ((blob.cy - reach).floor().max(0.0) as usize, ((blob.cy + reach).ceil().max(0.0) as usize).min(size - 1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                let k = y * size + x;
                let l = blob.level(x as f64, y as f64);
                if l < 1.0 && inside[k] {
                    let theta = (y as f64 - blob.cy).atan2(x as f64 - blob.cx);
                    let rgb = color(l, theta);
                    for c in 0..3 {
                        image[k * 3 + c] = rgb[c] as f32;
                    }
                    mask[k] = class;
                }
            }
        }
    };

    let blossom = rng.gen_bool(0.5);
    let (px, py) = random_point_in_disk(&mut rng, fc.0, fc.1, 0.45 * fr);
    let pole = if blossom {
        let r = rng.gen_range(0.22..0.28) * fr;
        Blob::random(&mut rng, px, py, r, 0.08)
    } else {
        let r = rng.gen_range(0.16..0.21) * fr;
        Blob::random(&mut rng, px, py, r, 0.25)
    };

    for _ in 0..rng.gen_range(0..=3) {
        let (cx, cy) = random_point_in_disk(&mut rng, fc.0, fc.1, 0.8 * fr);
        let r = rng.gen_range(0.08..0.13) * fr;
        let blob = Blob::random(&mut rng, cx, cy, r, 0.2);
        let dim = rng.gen_range(0.78..0.88);
        let tint = [peel[0] * dim, peel[1] * dim * 0.9, peel[2] + 0.04];
        paint(&blob, 3, &|_, _| tint, &mut image, &mut mask);
    }
    for _ in 0..rng.gen_range(0..=2) {
        let (cx, cy) = random_point_in_disk(&mut rng, fc.0, fc.1, 0.8 * fr);
        let r = rng.gen_range(0.10..0.16) * fr;
        let blob = Blob::random(&mut rng, cx, cy, r, 0.15);
        let dark = rng.gen_bool(0.7);
        paint(
            &blob,
            4,
            &|l, _| {
                if dark {
                    [0.22 + 0.1 * l, 0.13 + 0.05 * l, 0.05]
                } else {
                    [0.78 + 0.1 * l, 0.76 + 0.1 * l, 0.66]
                }
            },
            &mut image,
            &mut mask,
        );
    }

    if blossom {
        let base = [peel[0] * 0.75, peel[1] * 0.6, peel[2] * 0.8 + 0.05];
        paint(
            &pole,
            1,
            &|l, _| {
                let ring = if l > 0.55 { 0.18 } else { -0.12 };
                [base[0] + ring, base[1] + ring * 0.8, base[2] + ring * 0.3]
            },
            &mut image,
            &mut mask,
        );
    } else {
        paint(
            &pole,
            2,
            &|l, theta| {
                let star = 0.08 * (5.0 * theta).cos();
                if l < 0.35 {
                    [0.22, 0.24, 0.06]
                } else {
                    [0.42 + star, 0.52 + star, 0.14]
                }
            },
            &mut image,
            &mut mask,
        );
    }

    for v in image.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    SegmentationSample::new(format!("synth_{index:05}"), size, size, image, mask)
}
