//! Segmentation samples: VOC-style loading and saving, geometric
//! augmentation, and a procedural orange-like dataset.

mod augment;
mod synth;
mod voc;

use serde::{Deserialize, Serialize};

pub use augment::{augment, augment_recorded, AugmentConfig, AugmentRecord, GeomOp};
pub use synth::{synth_orange, SynthConfig};
pub use voc::{load_voc_dir, save_voc_dir};

use crate::error::{dim_err, Result};
use crate::tensor::{Scalar, Tensor};

/// Class names of the five-class grading task, by id.
pub const CLASS_NAMES: [&str; 5] = ["background", "blossom end", "stem end", "flaw", "ulcer"];

/// RGB image in `[0,1]` (row-major, interleaved) plus a class-id mask.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationSample {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub image: Vec<f32>,
    pub mask: Vec<u8>,
}

impl SegmentationSample {
    pub fn new(id: impl Into<String>, width: usize, height: usize, image: Vec<f32>, mask: Vec<u8>) -> Result<Self> {
        if image.len() != width * height * 3 || mask.len() != width * height {
            return Err(dim_err(
                "segmentation_sample",
                format!(
                    "{width}x{height} needs {} image and {} mask values, got {} and {}",
                    width * height * 3,
                    width * height,
                    image.len(),
                    mask.len()
                ),
            ));
        }
        Ok(SegmentationSample {
            id: id.into(),
            width,
            height,
            image,
            mask,
        })
    }

    /// Pixel count per class id.
    pub fn class_histogram(&self, num_classes: usize) -> Vec<usize> {
        let mut h = vec![0; num_classes.max(1)];
        for &m in &self.mask {
            if (m as usize) < h.len() {
                h[m as usize] += 1;
            }
        }
        h
    }

    /// Resamples to `size × size` (bilinear image, nearest mask).
    pub fn resized(&self, size: usize) -> SegmentationSample {
        if self.width == size && self.height == size {
            return self.clone();
        }
        let (sx, sy) = (self.width as f64 / size as f64, self.height as f64 / size as f64);
        augment::warp(self, size, size, |x, y| ((x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5))
    }
}

/// Color → class mapping used for mask files; index = class id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Palette(pub Vec<[u8; 3]>);

impl Default for Palette {
    /// The first five entries of the Pascal VOC color map.
    fn default() -> Self {
        Palette(vec![
            [0, 0, 0],
            [128, 0, 0],
            [0, 128, 0],
            [128, 128, 0],
            [0, 0, 128],
        ])
    }
}

impl Palette {
    pub fn class_of(&self, rgb: [u8; 3]) -> Option<u8> {
        self.0.iter().position(|&c| c == rgb).map(|i| i as u8)
    }
}

/// Stacks samples into network input `[N,3,H,W]` and flat targets.
pub fn to_batch<T: Scalar>(samples: &[&SegmentationSample]) -> Result<(Tensor<T>, Vec<usize>)> {
    let first = samples
        .first()
        .ok_or_else(|| dim_err("to_batch", "empty batch"))?;
    let (w, h) = (first.width, first.height);
    let mut data = Vec::with_capacity(samples.len() * 3 * w * h);
    let mut targets = Vec::with_capacity(samples.len() * w * h);
    for s in samples {
        if (s.width, s.height) != (w, h) {
            return Err(dim_err(
                "to_batch",
                format!("sample {} is {}x{}, batch is {w}x{h}", s.id, s.width, s.height),
            ));
        }
        for c in 0..3 {
            data.extend(s.image.iter().skip(c).step_by(3).map(|&v| T::of(f64::from(v))));
        }
        targets.extend(s.mask.iter().map(|&m| m as usize));
    }
    Ok((Tensor::from_vec(&[samples.len(), 3, h, w], data)?, targets))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_is_planar() {
        let s = SegmentationSample::new("a", 2, 1, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6], vec![0, 1]).unwrap();
        let (x, t) = to_batch::<f32>(&[&s]).unwrap();
        assert_eq!(x.shape(), &[1, 3, 1, 2]);
        assert_eq!(x.to_vec(), vec![0.1, 0.4, 0.2, 0.5, 0.3, 0.6]);
        assert_eq!(t, vec![0, 1]);
    }

    #[test]
    fn sample_shape_checked() {
        assert!(SegmentationSample::new("a", 2, 2, vec![0.0; 11], vec![0; 4]).is_err());
    }

    #[test]
    fn resize_identity_and_nearest_mask() {
        let s = SegmentationSample::new("a", 2, 2, vec![0.5; 12], vec![0, 1, 2, 3]).unwrap();
        assert_eq!(s.resized(2), s);
        let big = s.resized(4);
        assert_eq!(big.mask, vec![0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 3, 3, 2, 2, 3, 3]);
    }
}
