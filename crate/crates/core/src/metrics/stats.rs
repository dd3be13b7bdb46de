use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::arch::{Model, SiteId};
use crate::data::{to_batch, SegmentationSample};
use crate::error::{Error, Result};
use crate::ops::Mode;
use crate::tensor::{no_grad, Scalar};

/// Quantile levels reported per channel, in percent.
pub const QUANTILES: [f64; 5] = [5.0, 25.0, 50.0, 75.0, 95.0];

/// Streaming mean/variance/extrema (Welford).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Welford {
    pub count: usize,
    mean: f64,
    m2: f64,
    min: f64,
    max: f64,
}

impl Welford {
    pub fn push(&mut self, v: f64) {
        if self.count == 0 {
            self.min = v;
            self.max = v;
        } else {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
        self.count += 1;
        let d = v - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (v - self.mean);
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0).sqrt()
        }
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }
}

/// Linear-interpolation quantile of sorted values, `q` in percent.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// At [`QUANTILES`].
    pub quantiles: [f64; 5],
}

#[derive(Clone, Debug, Default)]
struct ChannelAccumulator {
    welford: Welford,
    values: Vec<f64>,
}

impl ChannelAccumulator {
    fn push(&mut self, v: f64) {
        self.welford.push(v);
        self.values.push(v);
    }

    fn summary(&self) -> ChannelSummary {
        let mut sorted = self.values.clone();
        sorted.sort_by(f64::total_cmp);
        ChannelSummary {
            count: self.welford.count,
            mean: self.welford.mean(),
            std: self.welford.std(),
            min: self.welford.min(),
            max: self.welford.max(),
            quantiles: QUANTILES.map(|q| quantile(&sorted, q)),
        }
    }
}

/// Per-channel statistics of the activation `s` and threshold `g` at one
/// excitation site, with the raw per-sample values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteStats {
    pub site: SiteId,
    pub label: String,
    pub s: Vec<ChannelSummary>,
    pub g: Vec<ChannelSummary>,
    /// `raw_s[c][i]`: value for channel `c` on sample `i`.
    pub raw_s: Vec<Vec<f64>>,
    pub raw_g: Vec<Vec<f64>>,
}

/// Runs the model in eval mode over `samples` and summarizes every `s_c` and
/// `g_c` per site, in forward order. Empty for variants without excitation
/// sites.
pub fn collect_attention_stats<T: Scalar>(
    model: &Model<T>,
    samples: &[SegmentationSample],
    batch_size: usize,
) -> Result<Vec<SiteStats>> {
    let sites = model.sites();
    if sites.is_empty() {
        return Ok(Vec::new());
    }
    if samples.is_empty() {
        return Err(Error::Empty("no samples for attention statistics".into()));
    }
    let size = model.spec.input_size;
    let mut acc: HashMap<SiteId, (Vec<ChannelAccumulator>, Vec<ChannelAccumulator>)> = sites
        .iter()
        .map(|s| {
            (
                s.clone(),
                (vec![ChannelAccumulator::default(); s.channels], vec![ChannelAccumulator::default(); s.channels]),
            )
        })
        .collect();
    let resized: Vec<SegmentationSample> = samples.iter().map(|s| s.resized(size)).collect();
    for chunk in resized.chunks(batch_size.max(1)) {
        let refs: Vec<&SegmentationSample> = chunk.iter().collect();
        let (x, _) = to_batch::<T>(&refs)?;
        let (_, records) = no_grad(|| model.forward_traced(&x, Mode::Eval))?;
        for r in records {
            let (sa, ga) = acc.get_mut(&r.site).expect("traced site is registered");
            let c = r.params.channels();
            for (vals, accs) in [(r.params.s.to_f64_vec(), &mut *sa), (r.params.g.to_f64_vec(), &mut *ga)] {
                for (i, v) in vals.into_iter().enumerate() {
                    accs[i % c].push(v);
                }
            }
        }
    }
    Ok(sites
        .into_iter()
        .map(|site| {
            let (sa, ga) = acc.remove(&site).expect("registered");
            SiteStats {
                label: site.label(),
                site,
                s: sa.iter().map(ChannelAccumulator::summary).collect(),
                g: ga.iter().map(ChannelAccumulator::summary).collect(),
                raw_s: sa.into_iter().map(|a| a.values).collect(),
                raw_g: ga.into_iter().map(|a| a.values).collect(),
            }
        })
        .collect())
}
