//! Model explanation: exact Shapley attributions, importance aggregation,
//! beeswarm exports, and the ablation experiments built on top of them.

pub mod ablate;
pub mod treeshap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureGroup, FeatureManifest};
use crate::learner::ModelKind;
use crate::matrix::DenseMatrix;
pub use treeshap::{shap_for_row, ShapRow};

/// Per-sample, per-feature Shapley values for one fitted model.
///
/// `base_value` is the expected model output over the training
/// distribution; every row satisfies local accuracy, meaning the row's
/// attributions plus the base value reproduce the model's raw output for
/// that sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributionMatrix {
    pub feature_names: Vec<String>,
    pub base_value: f64,
    pub phi: DenseMatrix,
    pub outputs: Vec<f64>,
}

/// Computes Shapley attributions for every row of `features`.
///
/// The column names must match the model's training columns exactly; a
/// mismatch is a data error. Classifier attributions live in margin space
/// and sum across trees; forest attributions are scaled by the reciprocal
/// tree count because the forest predicts the tree mean.
pub fn attributions(
    model: &ModelKind,
    features: &DenseMatrix,
    names: &[String],
) -> Result<AttributionMatrix> {
    if model.feature_names() != names {
        return Err(Error::Data(format!(
            "attribution columns do not match the model's training columns \
             ({} given, {} expected)",
            names.len(),
            model.feature_names().len()
        )));
    }
    let (trees, bias, scale) = match model {
        ModelKind::BoostedClassifier(m) => (&m.trees, m.base_margin, 1.0),
        ModelKind::ForestRegressor(m) => {
            let scale = if m.trees.is_empty() {
                1.0
            } else {
                1.0 / m.trees.len() as f64
            };
            (&m.trees, 0.0, scale)
        }
    };
    let n_features = names.len();
    let rows: Vec<ShapRow> = (0..features.rows())
        .into_par_iter()
        .map(|i| shap_for_row(trees, bias, scale, features.row(i), n_features))
        .collect();
    let base_value = rows
        .first()
        .map(|r| r.baseline)
        .unwrap_or_else(|| bias + trees.iter().map(|t| scale * t.expected_value()).sum::<f64>());
    let mut phi = DenseMatrix::zeros(features.rows(), n_features);
    let mut outputs = Vec::with_capacity(rows.len());
    for (i, row) in rows.into_iter().enumerate() {
        phi.row_mut(i).copy_from_slice(&row.phi);
        outputs.push(row.output);
    }
    Ok(AttributionMatrix {
        feature_names: names.to_vec(),
        base_value,
        phi,
        outputs,
    })
}

/// One entry of the ranked importance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub group: String,
    pub mean_abs_phi: f64,
}

/// Share of total importance carried by one feature group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupShare {
    pub group: String,
    pub share: f64,
}

/// Ranked per-feature importances with per-group aggregate shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub ranking: Vec<FeatureImportance>,
    pub group_shares: Vec<GroupShare>,
    /// True when every attribution was zero, in which case the group shares
    /// fall back to a uniform split over the groups present.
    pub degenerate: bool,
}

impl ImportanceReport {
    pub fn ranked_features(&self) -> Vec<String> {
        self.ranking.iter().map(|f| f.feature.clone()).collect()
    }
}

/// Aggregates attributions into mean absolute importances and group shares.
///
/// Importance is the mean over samples of the absolute Shapley value. The
/// ranking sorts descending with ties broken by manifest order; group
/// shares divide each group's summed importance by the grand total, or
/// fall back to a uniform split with the degeneracy flag raised when the
/// total is zero.
pub fn aggregate_importance(
    attr: &AttributionMatrix,
    manifest: &FeatureManifest,
) -> ImportanceReport {
    let n = attr.phi.rows();
    let p = attr.feature_names.len();
    let mut mean_abs = vec![0.0f64; p];
    if n > 0 {
        for i in 0..n {
            let row = attr.phi.row(i);
            for (j, v) in row.iter().enumerate() {
                mean_abs[j] += v.abs();
            }
        }
        for v in mean_abs.iter_mut() {
            *v /= n as f64;
        }
    }

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        mean_abs[b]
            .partial_cmp(&mean_abs[a])
            .expect("importances are finite")
            .then_with(|| {
                let pa = manifest.position(&attr.feature_names[a]).unwrap_or(usize::MAX);
                let pb = manifest.position(&attr.feature_names[b]).unwrap_or(usize::MAX);
                pa.cmp(&pb).then(a.cmp(&b))
            })
    });

    let group_label = |name: &str| -> String {
        manifest
            .group_of(name)
            .map(|g| g.as_str().to_string())
            .unwrap_or_else(|| "other".to_string())
    };

    let ranking: Vec<FeatureImportance> = order
        .iter()
        .map(|&j| FeatureImportance {
            feature: attr.feature_names[j].clone(),
            group: group_label(&attr.feature_names[j]),
            mean_abs_phi: mean_abs[j],
        })
        .collect();

    let mut group_sums: Vec<(String, f64, bool)> = FeatureGroup::ALL
        .iter()
        .map(|g| (g.as_str().to_string(), 0.0, false))
        .collect();
    group_sums.push(("other".to_string(), 0.0, false));
    for (j, name) in attr.feature_names.iter().enumerate() {
        let label = group_label(name);
        let slot = group_sums
            .iter_mut()
            .find(|(g, _, _)| *g == label)
            .expect("every label maps to a slot");
        slot.1 += mean_abs[j];
        slot.2 = true;
    }
    group_sums.retain(|(_, _, present)| *present);

    let total: f64 = group_sums.iter().map(|(_, s, _)| s).sum();
    let degenerate = total <= 0.0;
    let group_shares: Vec<GroupShare> = if degenerate {
        let k = group_sums.len().max(1) as f64;
        group_sums
            .iter()
            .map(|(g, _, _)| GroupShare {
                group: g.clone(),
                share: 1.0 / k,
            })
            .collect()
    } else {
        group_sums
            .iter()
            .map(|(g, s, _)| GroupShare {
                group: g.clone(),
                share: s / total,
            })
            .collect()
    };

    ImportanceReport {
        ranking,
        group_shares,
        degenerate,
    }
}

/// One plot-ready point of a beeswarm table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeeswarmRow {
    pub feature: String,
    pub user: String,
    pub phi: f64,
    pub value: f64,
    /// Mid-rank fraction of samples at or below this value, in [0, 1].
    pub percentile: f64,
}

/// Exports per-sample attribution points for the `top_n` features by mean
/// absolute Shapley value.
///
/// Each selected feature contributes one row per sample carrying the
/// attribution, the raw feature value, and that value's mid-rank
/// percentile within the column. Ties in mean importance break toward the
/// earlier column, which follows manifest order for matrices built from
/// the standard pipeline. A `top_n` of zero yields an empty table and any
/// `top_n` at or above the column count includes every feature.
pub fn beeswarm_export(
    attr: &AttributionMatrix,
    features: &DenseMatrix,
    users: &[String],
    top_n: usize,
) -> Vec<BeeswarmRow> {
    let n = attr.phi.rows();
    let p = attr.feature_names.len();
    let mut mean_abs = vec![0.0f64; p];
    if n > 0 {
        for i in 0..n {
            for (j, v) in attr.phi.row(i).iter().enumerate() {
                mean_abs[j] += v.abs();
            }
        }
        for v in mean_abs.iter_mut() {
            *v /= n as f64;
        }
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        mean_abs[b]
            .partial_cmp(&mean_abs[a])
            .expect("importances are finite")
            .then(a.cmp(&b))
    });
    order.truncate(top_n.min(p));

    let mut rows = Vec::with_capacity(order.len() * n);
    for &j in &order {
        let column = features.column(j);
        let percentiles = midrank_percentiles(&column);
        for i in 0..n {
            rows.push(BeeswarmRow {
                feature: attr.feature_names[j].clone(),
                user: users[i].clone(),
                phi: attr.phi.get(i, j),
                value: column[i],
                percentile: percentiles[i],
            });
        }
    }
    rows
}

/// Mid-rank percentile of each value within the slice: the fraction of
/// values strictly below plus half the tied mass, so a column of constants
/// sits at 0.5 and distinct sorted values spread evenly over (0, 1).
fn midrank_percentiles(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut out = vec![0.0f64; n];
    let mut start = 0usize;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let midrank = (start as f64 + 0.5 * (end - start) as f64) / n as f64;
        for &idx in &order[start..end] {
            out[idx] = midrank;
        }
        start = end;
    }
    out
}
