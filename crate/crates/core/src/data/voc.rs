use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::{Palette, SegmentationSample};
use crate::error::{dim_err, Error, Result};

const IMAGE_EXTS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

fn files_by_stem(dir: &Path, exts: &[&str]) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    if !dir.exists() {
        return Ok(out);
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if !path.is_file() {
            continue;
        }
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        let stem = path.file_stem().and_then(|s| s.to_str()).map(str::to_string);
        if let (Some(ext), Some(stem)) = (ext, stem) {
            if exts.contains(&ext.as_str()) {
                out.insert(stem, path);
            }
        }
    }
    Ok(out)
}

/// Loads `images_dir/<stem>.{png,jpg,...}` paired with `masks_dir/<stem>.png`,
/// sorted by stem. Mask colors are mapped to class ids through `palette`.
pub fn load_voc_dir(images_dir: &Path, masks_dir: &Path, palette: &Palette) -> Result<Vec<SegmentationSample>> {
    let images = files_by_stem(images_dir, &IMAGE_EXTS)?;
    let masks = files_by_stem(masks_dir, &["png"])?;
    if let Some(stem) = masks.keys().find(|k| !images.contains_key(*k)) {
        return Err(Error::Pairing {
            stem: stem.clone(),
            dir: images_dir.to_path_buf(),
        });
    }
    let mut out = Vec::with_capacity(images.len());
    for (stem, image_path) in &images {
        let mask_path = masks.get(stem).ok_or_else(|| Error::Pairing {
            stem: stem.clone(),
            dir: masks_dir.to_path_buf(),
        })?;
        let rgb = image::open(image_path)?.to_rgb8();
        let mask_rgb = image::open(mask_path)?.to_rgb8();
        if rgb.dimensions() != mask_rgb.dimensions() {
            return Err(dim_err(
                "load_voc_dir",
                format!(
                    "{stem}: image is {:?}, mask is {:?}",
                    rgb.dimensions(),
                    mask_rgb.dimensions()
                ),
            ));
        }
        let (w, h) = rgb.dimensions();
        let mut mask = Vec::with_capacity((w * h) as usize);
        for (x, y, p) in mask_rgb.enumerate_pixels() {
            mask.push(palette.class_of(p.0).ok_or_else(|| Error::UnknownColor {
                path: mask_path.clone(),
                x,
                y,
                color: p.0,
            })?);
        }
        let image = rgb.as_raw().iter().map(|&v| f32::from(v) / 255.0).collect();
        out.push(SegmentationSample::new(stem.clone(), w as usize, h as usize, image, mask)?);
    }
    Ok(out)
}

/// Writes RGB images and indexed-color masks that [`load_voc_dir`] reads back.
pub fn save_voc_dir(samples: &[SegmentationSample], images_dir: &Path, masks_dir: &Path, palette: &Palette) -> Result<()> {
    fs::create_dir_all(images_dir)?;
    fs::create_dir_all(masks_dir)?;
    for s in samples {
        if let Some(&m) = s.mask.iter().find(|&&m| m as usize >= palette.0.len()) {
            return Err(Error::Label(format!(
                "{}: class {m} has no palette color ({} colors)",
                s.id,
                palette.0.len()
            )));
        }
        let bytes: Vec<u8> = s
            .image
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        image::RgbImage::from_raw(s.width as u32, s.height as u32, bytes)
            .ok_or_else(|| dim_err("save_voc_dir", format!("{}: bad image buffer", s.id)))?
            .save(images_dir.join(format!("{}.png", s.id)))?;

        let file = fs::File::create(masks_dir.join(format!("{}.png", s.id)))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), s.width as u32, s.height as u32);
        enc.set_color(png::ColorType::Indexed);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_palette(palette.0.iter().flatten().copied().collect::<Vec<u8>>());
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        writer
            .write_image_data(&s.mask)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str) -> SegmentationSample {
        SegmentationSample::new(id, 3, 2, (0..18).map(|i| i as f32 / 17.0).collect(), vec![0, 1, 2, 3, 4, 0]).unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (im, ma) = (dir.path().join("img"), dir.path().join("mask"));
        let pal = Palette::default();
        save_voc_dir(&[sample("b"), sample("a")], &im, &ma, &pal).unwrap();
        let back = load_voc_dir(&im, &ma, &pal).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].id, "a");
        assert_eq!(back[0].mask, sample("a").mask);
        for (a, b) in back[0].image.iter().zip(&sample("a").image) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn missing_mask_is_pairing_error() {
        let dir = tempfile::tempdir().unwrap();
        let (im, ma) = (dir.path().join("img"), dir.path().join("mask"));
        save_voc_dir(&[sample("a")], &im, &ma, &Palette::default()).unwrap();
        fs::remove_file(ma.join("a.png")).unwrap();
        let err = load_voc_dir(&im, &ma, &Palette::default()).unwrap_err();
        assert!(matches!(err, Error::Pairing { ref stem, .. } if stem == "a"));
    }

    #[test]
    fn unknown_color_reports_pixel() {
        let dir = tempfile::tempdir().unwrap();
        let (im, ma) = (dir.path().join("img"), dir.path().join("mask"));
        save_voc_dir(&[sample("a")], &im, &ma, &Palette::default()).unwrap();
        let mut rgb = image::RgbImage::new(3, 2);
        rgb.put_pixel(2, 1, image::Rgb([7, 7, 7]));
        rgb.save(ma.join("a.png")).unwrap();
        match load_voc_dir(&im, &ma, &Palette::default()).unwrap_err() {
            Error::UnknownColor { x, y, color, .. } => assert_eq!((x, y, color), (2, 1, [7, 7, 7])),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn empty_dir_gives_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_voc_dir(dir.path(), dir.path(), &Palette::default()).unwrap().is_empty());
    }
}
