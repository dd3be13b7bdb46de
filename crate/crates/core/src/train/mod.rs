//! Momentum SGD with cosine annealing, the training loop and its log.

mod sgd;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use sgd::{cosine_lr, sgd_step, Sgd};

use crate::arch::{Checkpoint, Model};
use crate::data::{augment, to_batch, AugmentConfig, SegmentationSample};
use crate::error::{Error, Result};
use crate::init;
use crate::metrics::{compute_metrics, evaluate, SegMetrics};
use crate::ops::{softmax_cross_entropy, Mode};
use crate::tensor::{Precision, Scalar};

/// Trailing window used for the smoothed loss.
pub const SMOOTHING_WINDOW: usize = 20;

fn default_eval_every() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
    /// Evaluate every this many epochs; 0 disables evaluation.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Stop after this many optimizer steps; the schedule spans
    /// `min(max_steps, epochs · steps_per_epoch)`.
    #[serde(default)]
    pub max_steps: Option<usize>,
}

impl TrainConfig {
    /// lr 0.3, momentum 0.99, weight decay 5e-4, batch 4, 300 epochs.
    pub fn full_scale() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 4,
            lr0: 0.3,
            momentum: 0.99,
            weight_decay: 5e-4,
            seed: 0,
            precision: Precision::Single,
            eval_every: 1,
            max_steps: None,
        }
    }

    /// CPU-scale defaults: 20 epochs, lr 0.05, momentum 0.9.
    pub fn desk() -> Self {
        TrainConfig {
            epochs: 20,
            lr0: 0.05,
            momentum: 0.9,
            ..Self::full_scale()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return Err(Error::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0,1), got {}", self.momentum)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, samples: usize) -> usize {
        samples.div_ceil(self.batch_size.max(1))
    }

    pub fn total_steps(&self, samples: usize) -> usize {
        let full = self.epochs * self.steps_per_epoch(samples);
        self.max_steps.map_or(full, |m| m.min(full))
    }
}

/// One optimizer step as it appears in the log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

impl fmt::Display for StepRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch={} step={} lr={:e} loss={:e}", self.epoch, self.step, self.lr, self.loss)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub metrics: Option<SegMetrics>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
    pub checkpoints: Vec<PathBuf>,
    /// `(epoch, mean IU)` of the best evaluation.
    pub best: Option<(usize, f64)>,
}

impl TrainReport {
    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }

    /// Mean of the last [`SMOOTHING_WINDOW`] step losses.
    pub fn final_smoothed_loss(&self) -> Option<f64> {
        smoothed(&self.losses(), SMOOTHING_WINDOW).last().copied()
    }

    pub fn log_text(&self) -> String {
        self.steps.iter().map(|s| format!("{s}\n")).collect()
    }
}

/// Trailing moving average; entry `i` averages losses `i+1-w ..= i`
/// (fewer at the start).
pub fn smoothed(losses: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..losses.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            losses[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// Where and what to train on.
#[derive(Clone, Debug, Default)]
pub struct TrainSetup<'a> {
    pub train: &'a [SegmentationSample],
    /// Evaluated for checkpoint selection; the training set when absent.
    pub val: Option<&'a [SegmentationSample]>,
    /// Online augmentation; none when absent.
    pub augment: Option<&'a AugmentConfig>,
    /// Checkpoints and `train.log` go here when set.
    pub out_dir: Option<&'a Path>,
}

fn save(model: &Model<impl Scalar>, dir: Option<&Path>, name: &str, report: &mut TrainReport) -> Result<()> {
    if let Some(dir) = dir {
        let p = dir.join(name);
        Checkpoint::from_model(model).save(&p)?;
        if !report.checkpoints.contains(&p) {
            report.checkpoints.push(p);
        }
    }
    Ok(())
}

/// Trains `model` in place. Shuffling and augmentation draw from streams of
/// `cfg.seed`, so a fixed seed reproduces the run exactly.
pub fn train<T: Scalar>(model: &Model<T>, setup: &TrainSetup<'_>, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if setup.train.is_empty() {
        return Err(Error::Empty("training dataset has no samples".into()));
    }
    if let Some(a) = setup.augment {
        a.validate()?;
    }
    let size = model.spec.input_size;
    let train: Vec<SegmentationSample> = setup.train.iter().map(|s| s.resized(size)).collect();
    let val = setup.val.unwrap_or(setup.train);
    if let Some(dir) = setup.out_dir {
        fs::create_dir_all(dir)?;
    }
    let mut log = match setup.out_dir {
        Some(dir) => Some(fs::File::create(dir.join("train.log"))?),
        None => None,
    };

    let mut report = TrainReport::default();
    let total = cfg.total_steps(train.len());
    if total == 0 {
        save(model, setup.out_dir, "final.ckpt", &mut report)?;
        return Ok(report);
    }

    let params = model.parameters();
    let mut opt = Sgd::new(&params, cfg.momentum, cfg.weight_decay);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut init::stream(cfg.seed, &format!("shuffle/{epoch}")));
        let mut epoch_loss = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            if step >= total {
                break;
            }
            let lr = cosine_lr(step, total, cfg.lr0)?;
            let samples: Vec<SegmentationSample> = match setup.augment {
                Some(a) => batch
                    .iter()
                    .map(|&i| {
                        let mut rng = init::stream(cfg.seed ^ init::mix64(a.seed), &format!("augment/{epoch}/{i}"));
                        augment(&train[i], a, &mut rng)
                    })
                    .collect::<Result<_>>()?,
                None => batch.iter().map(|&i| train[i].clone()).collect(),
            };
            let refs: Vec<&SegmentationSample> = samples.iter().collect();
            let (x, targets) = to_batch::<T>(&refs)?;
            model.zero_grad();
            let logits = model.forward(&x, Mode::Train)?;
            let loss = softmax_cross_entropy(&logits, &targets)?;
            let value = loss.item().as_f64();
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, step, lr });
            }
            loss.backward()?;
            opt.step(&params, lr)?;
            let rec = StepRecord { epoch, step, lr, loss: value };
            if let Some(f) = log.as_mut() {
                writeln!(f, "{rec}")?;
            }
            report.steps.push(rec);
            epoch_loss.0 += value;
            epoch_loss.1 += 1;
            step += 1;
        }
        let metrics = if cfg.eval_every > 0 && ((epoch + 1) % cfg.eval_every == 0 || step >= total) {
            let m = compute_metrics(&evaluate(model, val, cfg.batch_size)?)?;
            if report.best.is_none_or(|(_, b)| m.mean_iu > b) {
                report.best = Some((epoch, m.mean_iu));
                save(model, setup.out_dir, "best.ckpt", &mut report)?;
            }
            Some(m)
        } else {
            None
        };
        report.epochs.push(EpochRecord {
            epoch,
            mean_loss: epoch_loss.0 / epoch_loss.1.max(1) as f64,
            metrics,
        });
        if step >= total {
            break;
        }
    }
    save(model, setup.out_dir, "final.ckpt", &mut report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_window() {
        assert_eq!(smoothed(&[4.0, 2.0, 0.0], 2), vec![4.0, 3.0, 1.0]);
    }

    #[test]
    fn total_steps_respects_cap() {
        let cfg = TrainConfig { max_steps: Some(5), ..TrainConfig::desk() };
        assert_eq!(cfg.steps_per_epoch(9), 3);
        assert_eq!(cfg.total_steps(9), 5);
        assert_eq!(TrainConfig::desk().total_steps(9), 60);
    }

    #[test]
    fn invalid_momentum() {
        let cfg = TrainConfig { momentum: 1.0, ..TrainConfig::desk() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn log_line_format() {
        let r = StepRecord { epoch: 1, step: 7, lr: 0.05, loss: 1.25 };
        assert_eq!(r.to_string(), "epoch=1 step=7 lr=5e-2 loss=1.25e0");
    }
}
