//! Evaluation metrics: ranking quality for the classifier, error and
//! variance-explained measures for the regressor.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Area under the ROC curve by the Mann-Whitney statistic.
///
/// Scores are ranked ascending with ties receiving their average rank;
/// the AUC is the normalized rank sum of the positive class. Equivalent
/// to the probability that a random positive outscores a random negative,
/// counting ties as one half. Errors when either class is absent.
pub fn roc_auc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    assert_eq!(labels.len(), scores.len());
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Data(
            "ROC AUC needs both classes present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .expect("finite scores")
    });

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; the tied block [i, j] shares the average rank.
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }

    let n_pos_f = n_pos as f64;
    let u = rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0;
    Ok(u / (n_pos_f * n_neg as f64))
}

pub fn mae(y_true: &[f64], y_pred: &[f64]) -> f64 {
    assert_eq!(y_true.len(), y_pred.len());
    assert!(!y_true.is_empty());
    y_true
        .iter()
        .zip(y_pred)
        .map(|(t, p)| (t - p).abs())
        .sum::<f64>()
        / y_true.len() as f64
}

/// Coefficient of determination, 1 - SS_res / SS_tot. Negative when the
/// model underperforms the constant mean. Errors on a constant target.
pub fn r2(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    assert_eq!(y_true.len(), y_pred.len());
    assert!(!y_true.is_empty());
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Data(
            "R^2 is undefined for a constant target".into(),
        ));
    }
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(t, p)| (t - p).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    assert!(!a.is_empty());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// One calibration bin: rows grouped by true-value rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub mean_true: f64,
    pub mean_pred: f64,
    pub count: usize,
}

/// Splits rows into `bins` nearly equal-count groups by ascending true
/// value and reports each group's mean true and predicted values.
pub fn binned_means(y_true: &[f64], y_pred: &[f64], bins: usize) -> Vec<CalibrationBin> {
    assert_eq!(y_true.len(), y_pred.len());
    assert!(bins > 0);
    let n = y_true.len();
    if n == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        y_true[a]
            .partial_cmp(&y_true[b])
            .expect("finite targets")
            .then(a.cmp(&b))
    });
    let bins = bins.min(n);
    let base = n / bins;
    let extra = n % bins;
    let mut out = Vec::with_capacity(bins);
    let mut start = 0;
    for b in 0..bins {
        let size = base + usize::from(b < extra);
        let slice = &order[start..start + size];
        let mt = slice.iter().map(|&i| y_true[i]).sum::<f64>() / size as f64;
        let mp = slice.iter().map(|&i| y_pred[i]).sum::<f64>() / size as f64;
        out.push(CalibrationBin {
            mean_true: mt,
            mean_pred: mp,
            count: size,
        });
        start += size;
    }
    out
}

/// Median by the midpoint-of-middle-two convention.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}
