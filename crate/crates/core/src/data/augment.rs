use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SegmentationSample;
use crate::error::{Error, Result};

fn default_p() -> f64 {
    0.6
}
fn default_rotation() -> f64 {
    180.0
}
fn default_crop() -> usize {
    100
}
fn default_padding() -> usize {
    10
}

/// Online augmentation settings. Each operation fires independently with
/// probability `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    #[serde(default = "default_p")]
    pub p: f64,
    /// Rotation angle is drawn uniformly from `[-rotation_deg, rotation_deg]`.
    #[serde(default = "default_rotation")]
    pub rotation_deg: f64,
    #[serde(default = "default_crop")]
    pub crop_size: usize,
    #[serde(default = "default_padding")]
    pub crop_padding: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            p: default_p(),
            rotation_deg: default_rotation(),
            crop_size: default_crop(),
            crop_padding: default_padding(),
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Config(format!("augment p must be in [0,1], got {}", self.p)));
        }
        if !self.rotation_deg.is_finite() || self.rotation_deg < 0.0 {
            return Err(Error::Config(format!(
                "rotation_deg must be finite and non-negative, got {}",
                self.rotation_deg
            )));
        }
        if self.crop_size == 0 {
            return Err(Error::Config("crop_size must be positive".into()));
        }
        Ok(())
    }
}

/// One geometric operation, in application order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum GeomOp {
    MirrorH,
    MirrorV,
    /// Counter-clockwise about the image center.
    Rotate { degrees: f64 },
    /// Crop of `size` at `(x0, y0)` in the zero-padded image, resized back.
    Crop { x0: usize, y0: usize, size: usize, padding: usize },
}

/// The operations drawn for one sample and the frame they act in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentRecord {
    pub width: usize,
    pub height: usize,
    pub ops: Vec<GeomOp>,
}

impl AugmentRecord {
    /// Maps an output pixel coordinate to the source coordinate it samples.
    pub fn source_of(&self, x: f64, y: f64) -> (f64, f64) {
        let (w, h) = (self.width as f64, self.height as f64);
        let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
        self.ops.iter().rev().fold((x, y), |(x, y), op| match *op {
            GeomOp::MirrorH => (w - 1.0 - x, y),
            GeomOp::MirrorV => (x, h - 1.0 - y),
            GeomOp::Rotate { degrees } => {
                let (s, c) = degrees.to_radians().sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                (cx + c * dx - s * dy, cy + s * dx + c * dy)
            }
            GeomOp::Crop { x0, y0, size, padding } => {
                let p = padding as f64;
                (
                    x0 as f64 - p + (x + 0.5) * size as f64 / w - 0.5,
                    y0 as f64 - p + (y + 0.5) * size as f64 / h - 0.5,
                )
            }
        })
    }
}

/// Resamples through an inverse map: bilinear image, nearest mask, zero
/// outside the source.
pub(crate) fn warp(
    src: &SegmentationSample,
    width: usize,
    height: usize,
    map: impl Fn(f64, f64) -> (f64, f64),
) -> SegmentationSample {
    let (sw, sh) = (src.width as i64, src.height as i64);
    let pixel = |x: i64, y: i64, c: usize| -> f32 {
        if x < 0 || y < 0 || x >= sw || y >= sh {
            0.0
        } else {
            src.image[((y * sw + x) as usize) * 3 + c]
        }
    };
    let mut image = Vec::with_capacity(width * height * 3);
    let mut mask = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (fx, fy) = map(x as f64, y as f64);
            let (x0, y0) = (fx.floor(), fy.floor());
            let (ax, ay) = ((fx - x0) as f32, (fy - y0) as f32);
            let (x0, y0) = (x0 as i64, y0 as i64);
            for c in 0..3 {
                let top = pixel(x0, y0, c) * (1.0 - ax) + pixel(x0 + 1, y0, c) * ax;
                let bot = pixel(x0, y0 + 1, c) * (1.0 - ax) + pixel(x0 + 1, y0 + 1, c) * ax;
                image.push(top * (1.0 - ay) + bot * ay);
            }
            let (nx, ny) = ((fx + 0.5).floor() as i64, (fy + 0.5).floor() as i64);
            mask.push(if nx < 0 || ny < 0 || nx >= sw || ny >= sh {
                0
            } else {
                src.mask[(ny * sw + nx) as usize]
            });
        }
    }
    SegmentationSample {
        id: src.id.clone(),
        width,
        height,
        image,
        mask,
    }
}

/// Draws mirrors, rotation and padded crop, then resamples once through the
/// composed map so image and mask stay aligned.
pub fn augment_recorded<R: Rng + ?Sized>(
    sample: &SegmentationSample,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<(SegmentationSample, AugmentRecord)> {
    cfg.validate()?;
    let (w, h) = (sample.width, sample.height);
    let padded = (w + 2 * cfg.crop_padding, h + 2 * cfg.crop_padding);
    if cfg.crop_size > padded.0 || cfg.crop_size > padded.1 {
        return Err(Error::Config(format!(
            "crop_size {} exceeds padded image {}x{}",
            cfg.crop_size, padded.0, padded.1
        )));
    }
    let mut ops = Vec::new();
    if rng.gen_bool(cfg.p) {
        ops.push(GeomOp::MirrorH);
    }
    if rng.gen_bool(cfg.p) {
        ops.push(GeomOp::MirrorV);
    }
    if rng.gen_bool(cfg.p) {
        let degrees = if cfg.rotation_deg > 0.0 {
            rng.gen_range(-cfg.rotation_deg..=cfg.rotation_deg)
        } else {
            0.0
        };
        ops.push(GeomOp::Rotate { degrees });
    }
    if rng.gen_bool(cfg.p) {
        ops.push(GeomOp::Crop {
            x0: rng.gen_range(0..=padded.0 - cfg.crop_size),
            y0: rng.gen_range(0..=padded.1 - cfg.crop_size),
            size: cfg.crop_size,
            padding: cfg.crop_padding,
        });
    }
    let record = AugmentRecord { width: w, height: h, ops };
    let out = if record.ops.is_empty() {
        sample.clone()
    } else {
        warp(sample, w, h, |x, y| record.source_of(x, y))
    };
    Ok((out, record))
}

pub fn augment<R: Rng + ?Sized>(
    sample: &SegmentationSample,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<SegmentationSample> {
    augment_recorded(sample, cfg, rng).map(|(s, _)| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(w: usize, h: usize) -> SegmentationSample {
        let mut image = Vec::new();
        let mut mask = Vec::new();
        for y in 0..h {
            for x in 0..w {
                image.extend([x as f32, y as f32, 1.0]);
                mask.push(((x + 3 * y) % 5) as u8);
            }
        }
        SegmentationSample::new("r", w, h, image, mask).unwrap()
    }

    #[test]
    fn mirror_is_exact() {
        let s = ramp(4, 3);
        let rec = AugmentRecord { width: 4, height: 3, ops: vec![GeomOp::MirrorH] };
        let out = warp(&s, 4, 3, |x, y| rec.source_of(x, y));
        assert_eq!(out.mask[0], s.mask[3]);
        assert_eq!(out.image[0], 3.0);
    }

    #[test]
    fn quarter_turn_moves_corner() {
        let s = ramp(5, 5);
        let rec = AugmentRecord { width: 5, height: 5, ops: vec![GeomOp::Rotate { degrees: 90.0 }] };
        let (sx, sy) = rec.source_of(0.0, 0.0);
        assert!((sx - 4.0).abs() < 1e-12 && sy.abs() < 1e-12);
        let out = warp(&s, 5, 5, |x, y| rec.source_of(x, y));
        assert_eq!(out.mask[0], s.mask[4]);
    }

    #[test]
    fn oversized_crop_rejected() {
        let cfg = AugmentConfig { crop_size: 200, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(augment(&ramp(20, 20), &cfg, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn p_zero_is_identity() {
        let cfg = AugmentConfig { p: 0.0, crop_size: 10, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = ramp(8, 8);
        assert_eq!(augment(&s, &cfg, &mut rng).unwrap(), s);
    }

    #[test]
    fn full_size_crop_without_padding_is_identity() {
        let s = ramp(6, 6);
        let rec = AugmentRecord {
            width: 6,
            height: 6,
            ops: vec![GeomOp::Crop { x0: 0, y0: 0, size: 6, padding: 0 }],
        };
        assert_eq!(warp(&s, 6, 6, |x, y| rec.source_of(x, y)), s);
    }
}
