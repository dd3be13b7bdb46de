use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

/// `counts[i·K + j]` = pixels of ground-truth class `i` predicted as `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(dim_err(
                "confusion_matrix",
                format!("{classes} classes need {} counts, got {}", classes * classes, counts.len()),
            ));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `t_i`: pixels whose ground truth is `i`.
    pub fn row_total(&self, i: usize) -> u64 {
        self.counts[i * self.classes..(i + 1) * self.classes].iter().sum()
    }

    /// Pixels predicted as `j`.
    pub fn col_total(&self, j: usize) -> u64 {
        (0..self.classes).map(|i| self.get(i, j)).sum()
    }

    pub fn accumulate(&mut self, pred: &[u8], gt: &[u8]) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(dim_err(
                "accumulate",
                format!("prediction has {} pixels, ground truth {}", pred.len(), gt.len()),
            ));
        }
        let k = self.classes;
        if let Some((&p, &g)) = pred.iter().zip(gt).find(|(&p, &g)| p as usize >= k || g as usize >= k) {
            return Err(Error::Label(format!(
                "class id {} out of range for {k} classes",
                if p as usize >= k { p } else { g }
            )));
        }
        for (&p, &g) in pred.iter().zip(gt) {
            self.counts[g as usize * k + p as usize] += 1;
        }
        Ok(())
    }

    /// Adds another shard's counts.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(dim_err(
                "merge",
                format!("{} classes vs {}", self.classes, other.classes),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

/// Summary metrics as fractions in `[0,1]`. `per_class_iu[i]` is `None`
/// for classes absent from both ground truth and prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegMetrics {
    pub pixel_acc: f64,
    pub mean_acc: f64,
    pub mean_iu: f64,
    pub fw_iu: f64,
    pub per_class_iu: Vec<Option<f64>>,
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<SegMetrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Empty("confusion matrix has no pixels".into()));
    }
    let k = cm.classes();
    let mut diag = 0u64;
    let (mut acc_sum, mut acc_n) = (0.0, 0usize);
    let (mut iu_sum, mut iu_n) = (0.0, 0usize);
    let mut fw = 0.0;
    let mut per_class_iu = Vec::with_capacity(k);
    for i in 0..k {
        let nii = cm.get(i, i);
        let ti = cm.row_total(i);
        let union = ti + cm.col_total(i) - nii;
        diag += nii;
        if ti > 0 {
            acc_sum += nii as f64 / ti as f64;
            acc_n += 1;
        }
        if union > 0 {
            let iu = nii as f64 / union as f64;
            iu_sum += iu;
            iu_n += 1;
            fw += ti as f64 * iu;
            per_class_iu.push(Some(iu));
        } else {
            per_class_iu.push(None);
        }
    }
    Ok(SegMetrics {
        pixel_acc: diag as f64 / total as f64,
        mean_acc: acc_sum / acc_n as f64,
        mean_iu: iu_sum / iu_n as f64,
        fw_iu: fw / total as f64,
        per_class_iu,
    })
}

/// Precision, recall and F1 matrices in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrfMatrices {
    /// Column-normalized.
    pub precision: Vec<Vec<f64>>,
    /// Row-normalized.
    pub recall: Vec<Vec<f64>>,
    pub f1: Vec<Vec<f64>>,
    /// Classes never predicted; their precision column is all zero.
    pub empty_columns: Vec<usize>,
    /// Classes absent from ground truth; their recall row is all zero.
    pub empty_rows: Vec<usize>,
}

/// Elementwise harmonic mean of two percentages, 0 when both are 0.
pub fn f1_score(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn prf_matrices(cm: &ConfusionMatrix) -> Result<PrfMatrices> {
    if cm.total() == 0 {
        return Err(Error::Empty("confusion matrix has no pixels".into()));
    }
    let k = cm.classes();
    let rows: Vec<u64> = (0..k).map(|i| cm.row_total(i)).collect();
    let cols: Vec<u64> = (0..k).map(|j| cm.col_total(j)).collect();
    let pct = |n: u64, d: u64| if d == 0 { 0.0 } else { 100.0 * n as f64 / d as f64 };
    let precision: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| pct(cm.get(i, j), cols[j])).collect())
        .collect();
    let recall: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| pct(cm.get(i, j), rows[i])).collect())
        .collect();
    let f1 = (0..k)
        .map(|i| (0..k).map(|j| f1_score(precision[i][j], recall[i][j])).collect())
        .collect();
    Ok(PrfMatrices {
        precision,
        recall,
        f1,
        empty_columns: (0..k).filter(|&j| cols[j] == 0).collect(),
        empty_rows: (0..k).filter(|&i| rows[i] == 0).collect(),
    })
}
