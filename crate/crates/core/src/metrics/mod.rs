//! Segmentation metrics, precision/recall/F1 matrices, attention-parameter
//! statistics and excitation-map export.

mod confusion;
mod maps;
mod report;
mod stats;

pub use confusion::{compute_metrics, f1_score, prf_matrices, ConfusionMatrix, PrfMatrices, SegMetrics};
pub use maps::{excitation_maps, ratio_map, write_excitation_maps, ChannelMap, RATIO_EPS};
pub use report::{matrix_csv, metrics_table, raw_stats_csv, stats_csv, write_text};
pub use stats::{collect_attention_stats, quantile, ChannelSummary, SiteStats, Welford, QUANTILES};

use crate::arch::Model;
use crate::data::{to_batch, SegmentationSample};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// Confusion matrix of the model's predictions over `samples`.
pub fn evaluate<T: Scalar>(model: &Model<T>, samples: &[SegmentationSample], batch_size: usize) -> Result<ConfusionMatrix> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation dataset has no samples".into()));
    }
    let size = model.spec.input_size;
    let mut cm = ConfusionMatrix::new(model.spec.num_classes);
    let resized: Vec<SegmentationSample> = samples.iter().map(|s| s.resized(size)).collect();
    for chunk in resized.chunks(batch_size.max(1)) {
        let refs: Vec<&SegmentationSample> = chunk.iter().collect();
        let (x, _) = to_batch::<T>(&refs)?;
        let pred = model.predict(&x)?;
        let gt: Vec<u8> = chunk.iter().flat_map(|s| s.mask.iter().copied()).collect();
        cm.accumulate(&pred, &gt)?;
    }
    Ok(cm)
}

/// Confusion matrix of predicting background everywhere.
pub fn all_background_baseline(samples: &[SegmentationSample], num_classes: usize) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(num_classes);
    for s in samples {
        cm.accumulate(&vec![0; s.mask.len()], &s.mask)?;
    }
    Ok(cm)
}
