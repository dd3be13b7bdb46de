use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arch::Model;
use crate::data::{to_batch, SegmentationSample};
use crate::error::{Error, Result};
use crate::ops::Mode;
use crate::tensor::{no_grad, Scalar};

/// Below this magnitude the input is treated as zero and the ratio is 1.
pub const RATIO_EPS: f64 = 1e-12;

/// Input, output, difference and ratio of one channel at one site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelMap {
    pub site: String,
    pub channel: usize,
    pub s: f64,
    pub g: f64,
    pub width: usize,
    pub height: usize,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    pub difference: Vec<f64>,
    pub ratio: Vec<f64>,
}

pub fn ratio_map(input: &[f64], output: &[f64]) -> Vec<f64> {
    input
        .iter()
        .zip(output)
        .map(|(&i, &o)| if i.abs() > RATIO_EPS { o / i } else { 1.0 })
        .collect()
}

/// Runs `sample` through the model and extracts the requested channels at
/// the site matching `module_id` (a label like `FSAM4_64` or `fsam4`).
/// An empty `channels` selects every channel.
pub fn excitation_maps<T: Scalar>(
    model: &Model<T>,
    sample: &SegmentationSample,
    module_id: &str,
    channels: &[usize],
) -> Result<Vec<ChannelMap>> {
    let site = model
        .sites()
        .into_iter()
        .find(|s| s.matches(module_id))
        .ok_or_else(|| {
            let known: Vec<String> = model.sites().iter().map(|s| s.label()).collect();
            Error::Config(format!("unknown module {module_id:?}; sites are {known:?}"))
        })?;
    let all: Vec<usize>;
    let channels = if channels.is_empty() {
        all = (0..site.channels).collect();
        &all
    } else {
        channels
    };
    if let Some(&c) = channels.iter().find(|&&c| c >= site.channels) {
        return Err(Error::Config(format!(
            "channel {c} out of range for {} ({} channels)",
            site.label(),
            site.channels
        )));
    }
    let resized = sample.resized(model.spec.input_size);
    let (x, _) = to_batch::<T>(&[&resized])?;
    let (_, records) = no_grad(|| model.forward_traced(&x, Mode::Eval))?;
    let rec = records
        .into_iter()
        .find(|r| r.site == site)
        .expect("site appears in the trace");
    let shape = rec.input.shape().to_vec();
    let (h, w) = (shape[2], shape[3]);
    let input = rec.input.to_f64_vec();
    let output = rec.output.to_f64_vec();
    let (s, g) = (rec.params.s.to_f64_vec(), rec.params.g.to_f64_vec());
    Ok(channels
        .iter()
        .map(|&c| {
            let range = c * h * w..(c + 1) * h * w;
            let (i, o) = (input[range.clone()].to_vec(), output[range].to_vec());
            ChannelMap {
                site: site.label(),
                channel: c,
                s: s[c],
                g: g[c],
                width: w,
                height: h,
                difference: o.iter().zip(&i).map(|(o, i)| o - i).collect(),
                ratio: ratio_map(&i, &o),
                input: i,
                output: o,
            }
        })
        .collect())
}

fn write_gray(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let bytes = values
        .iter()
        .map(|&v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 128 })
        .collect();
    image::GrayImage::from_raw(width as u32, height as u32, bytes)
        .expect("buffer matches extent")
        .save(path)?;
    Ok(())
}

/// Writes four normalized grayscale PNGs and one CSV dump per channel.
/// Returns the written paths.
pub fn write_excitation_maps(maps: &[ChannelMap], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for m in maps {
        let stem = format!("{}_ch{}", m.site, m.channel);
        for (kind, vals) in [
            ("input", &m.input),
            ("output", &m.output),
            ("difference", &m.difference),
            ("ratio", &m.ratio),
        ] {
            let p = dir.join(format!("{stem}_{kind}.png"));
            write_gray(&p, m.width, m.height, vals)?;
            written.push(p);
        }
        let mut csv = format!("# site={} channel={} g={} s={}\nx,y,input,output,difference,ratio\n", m.site, m.channel, m.g, m.s);
        for k in 0..m.input.len() {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                k % m.width,
                k / m.width,
                m.input[k],
                m.output[k],
                m.difference[k],
                m.ratio[k]
            );
        }
        let p = dir.join(format!("{stem}.csv"));
        fs::write(&p, csv)?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_guards_zero() {
        assert_eq!(ratio_map(&[0.0, 2.0, -1e-13], &[0.0, 1.0, 5.0]), vec![1.0, 0.5, 1.0]);
    }
}
