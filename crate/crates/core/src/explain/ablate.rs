//! Feature-ablation experiments: retrain the classifier on restricted
//! column sets and compare cross-validated AUCs against the full model.
//!
//! Two families are supported. Group ablations restrict the columns to one
//! feature group at a time (or to everything except that group), which
//! shows where the predictive signal lives. Best/worst ablations restrict
//! the columns to the top or bottom n features of an importance ranking,
//! which shows how quickly performance saturates or collapses. Every cell
//! reuses the same cross-validation seed, so comparisons across cells are
//! paired: they share resamples, folds, and model seeds, and differ only
//! in the columns offered to the learner.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureGroup, FeatureManifest};
use crate::labeling::LabeledDataset;
use crate::learner::boost::BoostParams;
use crate::learner::cv::{cross_validate, CvParams};

/// Which side of the group restriction to train on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    OnlyGroup,
    AllButGroup,
}

impl AblationMode {
    pub const ALL: [AblationMode; 2] = [AblationMode::OnlyGroup, AblationMode::AllButGroup];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::OnlyGroup => "only_group",
            AblationMode::AllButGroup => "all_but_group",
        }
    }
}

/// Cross-validated AUC for one group restriction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCell {
    pub group: String,
    pub n_features: usize,
    pub mean_auc: f64,
    pub std_auc: f64,
}

/// Group-ablation results for one labeled dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAblation {
    pub definition: String,
    pub quantile: f64,
    pub mode: AblationMode,
    pub baseline_n_features: usize,
    pub baseline_mean_auc: f64,
    pub baseline_std_auc: f64,
    pub cells: Vec<GroupCell>,
}

/// Trains per-group restricted classifiers and the all-features baseline.
///
/// Groups that contribute no columns to the dataset are skipped rather
/// than trained on an empty matrix. All cells share the cross-validation
/// seed, so their AUCs are paired with the baseline.
pub fn ablate_groups(
    dataset: &LabeledDataset,
    manifest: &FeatureManifest,
    boost: &BoostParams,
    cv: &CvParams,
    mode: AblationMode,
) -> Result<GroupAblation> {
    let baseline = cross_validate(&dataset.features, &dataset.labels, boost, cv)?;
    let mut cells = Vec::new();
    for group in FeatureGroup::ALL {
        let keep: Vec<usize> = dataset
            .feature_names
            .iter()
            .enumerate()
            .filter(|(_, name)| {
                let member = manifest.group_of(name) == Some(group);
                match mode {
                    AblationMode::OnlyGroup => member,
                    AblationMode::AllButGroup => !member,
                }
            })
            .map(|(i, _)| i)
            .collect();
        if keep.is_empty() {
            continue;
        }
        let restricted = dataset.features.select_cols(&keep);
        let outcome = cross_validate(&restricted, &dataset.labels, boost, cv)?;
        cells.push(GroupCell {
            group: group.as_str().to_string(),
            n_features: keep.len(),
            mean_auc: outcome.mean_auc,
            std_auc: outcome.std_auc,
        });
    }
    Ok(GroupAblation {
        definition: dataset.definition.as_str().to_string(),
        quantile: dataset.quantile,
        mode,
        baseline_n_features: dataset.feature_names.len(),
        baseline_mean_auc: baseline.mean_auc,
        baseline_std_auc: baseline.std_auc,
        cells,
    })
}

/// Cross-validated AUCs for one best-n / worst-n pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestWorstCell {
    pub n: usize,
    pub top_mean_auc: f64,
    pub top_std_auc: f64,
    pub bottom_mean_auc: f64,
    pub bottom_std_auc: f64,
}

/// Best/worst ablation results for one labeled dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestWorstReport {
    pub definition: String,
    pub quantile: f64,
    pub baseline_mean_auc: f64,
    pub baseline_std_auc: f64,
    pub cells: Vec<BestWorstCell>,
}

/// Retrains on the top-n and bottom-n features of `ranking` for each n.
///
/// The ranking must cover every dataset column, most importantly the
/// importance ranking computed on the same dataset. Selected columns keep
/// their dataset order, so n equal to the column count reproduces the
/// baseline on both sides. Each AUC averages the same seeded
/// cross-validation runs, making top, bottom, and baseline paired.
pub fn ablate_best_worst(
    dataset: &LabeledDataset,
    ranking: &[String],
    n_grid: &[usize],
    boost: &BoostParams,
    cv: &CvParams,
) -> Result<BestWorstReport> {
    let p = dataset.feature_names.len();
    let mut ranked_indices = Vec::with_capacity(p);
    for name in ranking {
        if let Some(idx) = dataset.feature_names.iter().position(|n| n == name) {
            ranked_indices.push(idx);
        }
    }
    if ranked_indices.len() != p {
        return Err(Error::Config(format!(
            "importance ranking covers {} of {} dataset columns",
            ranked_indices.len(),
            p
        )));
    }
    for &n in n_grid {
        if n == 0 || n > p {
            return Err(Error::Config(format!(
                "ablation size {n} is outside the valid range 1..={p}"
            )));
        }
    }

    let baseline = cross_validate(&dataset.features, &dataset.labels, boost, cv)?;
    let mut cells = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let mut top: Vec<usize> = ranked_indices[..n].to_vec();
        let mut bottom: Vec<usize> = ranked_indices[p - n..].to_vec();
        top.sort_unstable();
        bottom.sort_unstable();

        let top_data = dataset.features.select_cols(&top);
        let top_outcome = cross_validate(&top_data, &dataset.labels, boost, cv)?;
        let bottom_data = dataset.features.select_cols(&bottom);
        let bottom_outcome = cross_validate(&bottom_data, &dataset.labels, boost, cv)?;
        cells.push(BestWorstCell {
            n,
            top_mean_auc: top_outcome.mean_auc,
            top_std_auc: top_outcome.std_auc,
            bottom_mean_auc: bottom_outcome.mean_auc,
            bottom_std_auc: bottom_outcome.std_auc,
        });
    }
    Ok(BestWorstReport {
        definition: dataset.definition.as_str().to_string(),
        quantile: dataset.quantile,
        baseline_mean_auc: baseline.mean_auc,
        baseline_std_auc: baseline.std_auc,
        cells,
    })
}
