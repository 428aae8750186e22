//! Target construction and quantile-threshold labeling.
//!
//! The target is how often a user was blocked inside the window, in two
//! definitions: the raw count, and the count normalized by the user's
//! posts. A labeling run fixes a definition and a quantile q, computes the
//! empirical q-quantile of the target over the selected users, and labels
//! a user positive when their target strictly exceeds that threshold.
//!
//! The raw blocked count is also exported as the `times_blocked` feature,
//! so that column (and only that column) is dropped from training inputs;
//! leaving it in would let the model read the answer off its own input.
//! Class balance is restored by undersampling the majority class.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::ingest::{EventAction, EventKind, EventLog};
use crate::matrix::DenseMatrix;

/// Feature columns excluded from training inputs because they restate the
/// target.
pub const LEAKAGE_EXCLUDED: [&str; 1] = ["times_blocked"];

/// The quantiles swept by a full run.
pub const DEFAULT_QUANTILE_GRID: [f64; 13] = [
    0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 0.995, 0.9995,
];

/// How the blocked count is scaled before thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetDefinition {
    /// Number of times the user was blocked.
    Raw,
    /// Blocked count divided by the user's created posts and replies.
    Norm,
}

impl TargetDefinition {
    pub const ALL: [TargetDefinition; 2] = [TargetDefinition::Raw, TargetDefinition::Norm];

    pub fn as_str(self) -> &'static str {
        match self {
            TargetDefinition::Raw => "raw",
            TargetDefinition::Norm => "norm",
        }
    }

    pub fn parse(s: &str) -> Option<TargetDefinition> {
        TargetDefinition::ALL.into_iter().find(|d| d.as_str() == s)
    }
}

/// Per-user target values under both definitions, aligned with `users`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub users: Vec<String>,
    pub raw: Vec<f64>,
    pub norm: Vec<f64>,
}

impl Targets {
    pub fn values(&self, definition: TargetDefinition) -> &[f64] {
        match definition {
            TargetDefinition::Raw => &self.raw,
            TargetDefinition::Norm => &self.norm,
        }
    }

    /// Recounts block and post events from the log for the given users.
    ///
    /// The normalized target divides by the user's created posts and
    /// replies, with a floor of one so users without posts keep a defined
    /// value.
    pub fn from_log(log: &EventLog, users: &[String]) -> Targets {
        use std::collections::HashMap;
        let mut blocked: HashMap<&str, u64> = HashMap::new();
        let mut posts: HashMap<&str, u64> = HashMap::new();
        for e in log.events() {
            if e.action != EventAction::Create {
                continue;
            }
            if e.kind == EventKind::Block {
                if let Some(subject) = &e.subject {
                    *blocked.entry(subject.as_str()).or_default() += 1;
                }
            } else if e.is_original_post() {
                *posts.entry(e.actor.as_str()).or_default() += 1;
            }
        }
        let raw: Vec<f64> = users
            .iter()
            .map(|u| blocked.get(u.as_str()).copied().unwrap_or(0) as f64)
            .collect();
        let norm: Vec<f64> = users
            .iter()
            .zip(&raw)
            .map(|(u, &b)| b / posts.get(u.as_str()).copied().unwrap_or(0).max(1) as f64)
            .collect();
        Targets {
            users: users.to_vec(),
            raw,
            norm,
        }
    }
}

/// Empirical q-quantile as an order statistic: the k-th smallest value
/// with k = ceil(q * n), clamped to [1, n]. The small slack keeps exact
/// products like 0.2 * 5 from rounding up through float error.
pub fn quantile_threshold(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite target values"));
    let n = sorted.len();
    let k = ((q * n as f64) - 1e-9).ceil() as i64;
    let k = k.clamp(1, n as i64) as usize;
    sorted[k - 1]
}

/// Positive when the value strictly exceeds the threshold.
pub fn threshold_labels(values: &[f64], threshold: f64) -> Vec<u8> {
    values.iter().map(|&v| u8::from(v > threshold)).collect()
}

/// Feature rows with binary labels for one (definition, quantile) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub users: Vec<String>,
    pub feature_names: Vec<String>,
    pub features: DenseMatrix,
    pub labels: Vec<u8>,
    pub definition: TargetDefinition,
    pub quantile: f64,
    pub threshold: f64,
}

impl LabeledDataset {
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.labels.len() - self.positives()
    }
}

/// Labels the matrix at one quantile, dropping leakage columns.
///
/// Errors with a degenerate-threshold data error when no user exceeds the
/// threshold, which happens when the quantile lands on the maximum value.
pub fn label_dataset(
    matrix: &FeatureMatrix,
    targets: &Targets,
    definition: TargetDefinition,
    quantile: f64,
) -> Result<LabeledDataset> {
    if !(0.0..1.0).contains(&quantile) || quantile <= 0.0 {
        return Err(Error::Config(format!(
            "quantile must lie strictly between 0 and 1, got {quantile}"
        )));
    }
    if matrix.users != targets.users {
        return Err(Error::Data(
            "feature matrix and targets cover different users".into(),
        ));
    }
    let values = targets.values(definition);
    let threshold = quantile_threshold(values, quantile);
    let labels = threshold_labels(values, threshold);
    if !labels.contains(&1) {
        return Err(Error::DegenerateThreshold {
            definition: definition.as_str().to_string(),
            quantile,
            threshold,
        });
    }

    let kept: Vec<usize> = matrix
        .names
        .iter()
        .enumerate()
        .filter(|(_, n)| !LEAKAGE_EXCLUDED.contains(&n.as_str()))
        .map(|(i, _)| i)
        .collect();
    let feature_names: Vec<String> = kept.iter().map(|&i| matrix.names[i].clone()).collect();
    let features = matrix.values.select_cols(&kept);

    Ok(LabeledDataset {
        users: matrix.users.clone(),
        feature_names,
        features,
        labels,
        definition,
        quantile,
        threshold,
    })
}

/// Indices (in original row order) of a class-balanced subsample.
///
/// Every minority-class row is kept; the majority class is shuffled with a
/// seeded generator and trimmed to the minority count.
pub fn undersample_balance(labels: &[u8], seed: u64) -> Vec<usize> {
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    let (minority, majority) = if pos.len() <= neg.len() {
        (pos, neg)
    } else {
        (neg, pos)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = majority;
    shuffled.shuffle(&mut rng);
    shuffled.truncate(minority.len());
    let mut kept = minority;
    kept.extend(shuffled);
    kept.sort_unstable();
    kept
}

/// Points of the empirical CDF: one `(value, fraction_at_or_below)` pair
/// per distinct value, ascending.
pub fn ecdf_points(values: &[f64]) -> Vec<(f64, f64)> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, v) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *v => last.1 = frac,
            _ => out.push((*v, frac)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_matrix, FeatureManifest, UserFilter};
    use crate::features::domains::DomainLookup;
    use crate::features::toxicity::ToxicityMode;
    use crate::graph;
    use crate::ingest::parse_replay;
    use std::io::Cursor;

    #[test]
    fn quantile_matches_order_statistic_on_1_to_100() {
        let values: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(quantile_threshold(&values, 0.5), 50.0);
        assert_eq!(quantile_threshold(&values, 0.9), 90.0);
        assert_eq!(quantile_threshold(&values, 0.95), 95.0);
        assert_eq!(quantile_threshold(&values, 0.99), 99.0);
        assert_eq!(quantile_threshold(&values, 0.995), 100.0);
        assert_eq!(quantile_threshold(&values, 0.01), 1.0);
    }

    #[test]
    fn quantile_is_exact_on_round_products() {
        let values = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        // 0.2 * 5 = 1 exactly: the first order statistic, not the second.
        assert_eq!(quantile_threshold(&values, 0.2), 1.0);
        assert_eq!(quantile_threshold(&values, 0.4), 2.0);
        assert_eq!(quantile_threshold(&values, 0.8), 4.0);
    }

    #[test]
    fn labels_are_strictly_greater_than_threshold() {
        let values = vec![0.0, 0.0, 0.0, 1.0];
        let t = quantile_threshold(&values, 0.5);
        assert_eq!(t, 0.0);
        assert_eq!(threshold_labels(&values, t), vec![0, 0, 0, 1]);
    }

    fn tiny_matrix(users: &[&str]) -> FeatureMatrix {
        FeatureMatrix {
            users: users.iter().map(|s| s.to_string()).collect(),
            names: vec!["x".into(), "times_blocked".into(), "y".into()],
            values: DenseMatrix::from_rows(
                &users
                    .iter()
                    .enumerate()
                    .map(|(i, _)| vec![i as f64, (i * 10) as f64, 1.0])
                    .collect::<Vec<_>>(),
            ),
        }
    }

    fn tiny_targets(users: &[&str], raw: &[f64]) -> Targets {
        Targets {
            users: users.iter().map(|s| s.to_string()).collect(),
            raw: raw.to_vec(),
            norm: raw.iter().map(|v| v / 10.0).collect(),
        }
    }

    #[test]
    fn label_dataset_drops_leakage_column() {
        let users = ["a", "b", "c", "d"];
        let m = tiny_matrix(&users);
        let t = tiny_targets(&users, &[0.0, 1.0, 2.0, 3.0]);
        let ds = label_dataset(&m, &t, TargetDefinition::Raw, 0.5).unwrap();
        assert_eq!(ds.feature_names, vec!["x", "y"]);
        assert_eq!(ds.features.cols(), 2);
        assert_eq!(ds.features.get(2, 0), 2.0);
        assert_eq!(ds.labels, vec![0, 0, 1, 1]);
        assert_eq!(ds.threshold, 1.0);
    }

    #[test]
    fn degenerate_quantile_is_an_error() {
        let users = ["a", "b", "c"];
        let m = tiny_matrix(&users);
        let t = tiny_targets(&users, &[5.0, 5.0, 5.0]);
        let err = label_dataset(&m, &t, TargetDefinition::Raw, 0.5).unwrap_err();
        assert!(matches!(err, Error::DegenerateThreshold { .. }), "{err}");
    }

    #[test]
    fn quantile_outside_unit_interval_is_config_error() {
        let users = ["a", "b"];
        let m = tiny_matrix(&users);
        let t = tiny_targets(&users, &[0.0, 1.0]);
        for q in [0.0, 1.0, -0.2, 1.5] {
            let err = label_dataset(&m, &t, TargetDefinition::Raw, q).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "q={q}: {err}");
        }
    }

    #[test]
    fn mismatched_users_are_rejected() {
        let m = tiny_matrix(&["a", "b"]);
        let t = tiny_targets(&["a", "z"], &[0.0, 1.0]);
        let err = label_dataset(&m, &t, TargetDefinition::Raw, 0.5).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn targets_recount_blocks_and_normalize_by_posts() {
        let mut lines = Vec::new();
        for i in 0..5 {
            lines.push(format!(
                r#"{{"id":"p{i}","kind":"post","action":"create","actor":"alice","ts":"2025-01-01T00:00:{i:02}Z","text":"hi","langs":["en"]}}"#
            ));
        }
        for i in 0..10 {
            lines.push(format!(
                r#"{{"id":"b{i}","kind":"block","action":"create","actor":"u{i}","subject":"alice","ts":"2025-01-01T01:00:{i:02}Z"}}"#
            ));
        }
        lines.push(
            r#"{"id":"bd","kind":"block","action":"delete","actor":"u0","subject":"alice","ts":"2025-01-01T02:00:00Z"}"#.to_string(),
        );
        let log = parse_replay(Cursor::new(lines.join("\n")), None).unwrap().log;
        let users = vec!["alice".to_string(), "nobody".to_string()];
        let t = Targets::from_log(&log, &users);
        assert_eq!(t.raw, vec![10.0, 0.0]);
        assert_eq!(t.norm, vec![2.0, 0.0]);
    }

    #[test]
    fn targets_match_times_blocked_feature_column() {
        let mut lines = Vec::new();
        for user in ["alice", "bob"] {
            for i in 0..10 {
                lines.push(format!(
                    r#"{{"id":"{user}p{i}","kind":"post","action":"create","actor":"{user}","ts":"2025-01-01T00:00:{i:02}Z","text":"hi","langs":["en"]}}"#
                ));
            }
        }
        for i in 0..3 {
            lines.push(format!(
                r#"{{"id":"b{i}","kind":"block","action":"create","actor":"z{i}","subject":"bob","ts":"2025-01-01T01:00:{i:02}Z"}}"#
            ));
        }
        let log = parse_replay(Cursor::new(lines.join("\n")), None).unwrap().log;
        let m = build_matrix(
            &log,
            &UserFilter::default(),
            &DomainLookup::empty(),
            &graph::centralities(&log),
            &FeatureManifest::default(),
            &ToxicityMode::lexicon(),
        )
        .unwrap();
        let t = Targets::from_log(&log, &m.users);
        assert_eq!(m.column("times_blocked").unwrap(), t.raw);
    }

    #[test]
    fn undersample_keeps_all_minority_and_balances() {
        let mut labels = vec![0u8; 90];
        labels.extend(vec![1u8; 10]);
        let kept = undersample_balance(&labels, 7);
        assert_eq!(kept.len(), 20);
        let pos_kept = kept.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(pos_kept, 10);
        let mut sorted = kept.clone();
        sorted.sort_unstable();
        assert_eq!(kept, sorted, "kept indices preserve row order");
        assert_eq!(undersample_balance(&labels, 7), kept, "same seed, same rows");
        assert_ne!(
            undersample_balance(&labels, 8),
            kept,
            "different seed draws a different majority subset"
        );
    }

    #[test]
    fn ecdf_is_monotone_and_ends_at_one() {
        let values = vec![2.0, 1.0, 2.0, 5.0];
        let pts = ecdf_points(&values);
        assert_eq!(pts, vec![(1.0, 0.25), (2.0, 0.75), (5.0, 1.0)]);
    }
}
