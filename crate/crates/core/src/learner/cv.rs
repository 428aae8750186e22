//! Repeated stratified cross-validation with per-run undersampling.
//!
//! One run = rebalance the classes with a fresh seeded undersample, deal
//! the remaining rows into stratified folds, train on each fold complement,
//! and score the pooled out-of-fold margins with ROC AUC. Runs repeat with
//! independent seeds; the summary is the mean and population standard
//! deviation of the per-run AUCs. Runs execute in parallel and collect in
//! run order, so thread count never changes the result.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::boost::{BoostParams, BoostedClassifier};
use super::derive_seed;
use super::metrics::roc_auc;
use crate::error::{Error, Result};
use crate::labeling::undersample_balance;
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvParams {
    pub runs: usize,
    pub folds: usize,
    pub seed: u64,
    pub undersample: bool,
}

impl Default for CvParams {
    fn default() -> Self {
        CvParams {
            runs: 10,
            folds: 10,
            seed: 0,
            undersample: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub run_aucs: Vec<f64>,
    pub mean_auc: f64,
    pub std_auc: f64,
}

fn single_run(
    features: &DenseMatrix,
    labels: &[u8],
    boost: &BoostParams,
    cv: &CvParams,
    run: usize,
) -> Result<f64> {
    let run_seed = derive_seed(cv.seed, run as u64);
    let rows: Vec<usize> = if cv.undersample {
        undersample_balance(labels, run_seed)
    } else {
        (0..labels.len()).collect()
    };
    let sub = features.select_rows(&rows);
    let sub_labels: Vec<u8> = rows.iter().map(|&i| labels[i]).collect();

    let pos: Vec<usize> = (0..sub_labels.len()).filter(|&i| sub_labels[i] == 1).collect();
    let neg: Vec<usize> = (0..sub_labels.len()).filter(|&i| sub_labels[i] == 0).collect();
    if pos.len() < cv.folds || neg.len() < cv.folds {
        return Err(Error::Data(format!(
            "stratified {}-fold split needs at least {} rows per class, have {} positive and {} negative",
            cv.folds, cv.folds, pos.len(), neg.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(run_seed, 1));
    let mut fold_of = vec![0usize; sub_labels.len()];
    for class in [pos, neg] {
        let mut shuffled = class;
        shuffled.shuffle(&mut rng);
        for (pos_in_class, row) in shuffled.into_iter().enumerate() {
            fold_of[row] = pos_in_class % cv.folds;
        }
    }

    let names: Vec<String> = (0..sub.cols()).map(|c| format!("f{c}")).collect();
    let mut oof = vec![0.0f64; sub_labels.len()];
    for fold in 0..cv.folds {
        let train_rows: Vec<usize> = (0..sub_labels.len()).filter(|&i| fold_of[i] != fold).collect();
        let test_rows: Vec<usize> = (0..sub_labels.len()).filter(|&i| fold_of[i] == fold).collect();
        let train_x = sub.select_rows(&train_rows);
        let train_y: Vec<u8> = train_rows.iter().map(|&i| sub_labels[i]).collect();
        let params = BoostParams {
            seed: derive_seed(run_seed, 100 + fold as u64),
            ..*boost
        };
        let model = BoostedClassifier::fit(&train_x, &train_y, names.clone(), params);
        for &i in &test_rows {
            oof[i] = model.predict_margin_row(sub.row(i));
        }
    }
    roc_auc(&sub_labels, &oof)
}

/// Runs the full repeated-CV protocol and summarizes per-run AUCs.
pub fn cross_validate(
    features: &DenseMatrix,
    labels: &[u8],
    boost: &BoostParams,
    cv: &CvParams,
) -> Result<CvOutcome> {
    if cv.runs == 0 || cv.folds < 2 {
        return Err(Error::Config(
            "cross-validation needs at least 1 run and 2 folds".into(),
        ));
    }
    let run_aucs: Vec<f64> = (0..cv.runs)
        .into_par_iter()
        .map(|run| single_run(features, labels, boost, cv, run))
        .collect::<Result<Vec<f64>>>()?;
    let mean = run_aucs.iter().sum::<f64>() / run_aucs.len() as f64;
    let var = run_aucs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / run_aucs.len() as f64;
    Ok(CvOutcome {
        run_aucs,
        mean_auc: mean,
        std_auc: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn dataset(informative: bool, n: usize, seed: u64) -> (DenseMatrix, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let y = u8::from(i % 3 == 0);
            let signal = if informative { y as f64 * 2.0 } else { 0.0 };
            rows.push(vec![
                signal + rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ]);
            labels.push(y);
        }
        (DenseMatrix::from_rows(&rows), labels)
    }

    fn quick_boost() -> BoostParams {
        BoostParams {
            n_estimators: 20,
            max_depth: 2,
            ..BoostParams::default()
        }
    }

    fn quick_cv() -> CvParams {
        CvParams {
            runs: 3,
            folds: 3,
            seed: 0,
            undersample: true,
        }
    }

    #[test]
    fn informative_signal_scores_high_noise_scores_near_half() {
        let (x, y) = dataset(true, 150, 1);
        let out = cross_validate(&x, &y, &quick_boost(), &quick_cv()).unwrap();
        assert!(out.mean_auc > 0.85, "signal AUC {}", out.mean_auc);
        assert_eq!(out.run_aucs.len(), 3);

        let (x, y) = dataset(false, 150, 2);
        let out = cross_validate(&x, &y, &quick_boost(), &quick_cv()).unwrap();
        assert!(
            (out.mean_auc - 0.5).abs() < 0.18,
            "noise AUC {}",
            out.mean_auc
        );
    }

    #[test]
    fn repeated_evaluation_is_bitwise_deterministic() {
        let (x, y) = dataset(true, 90, 3);
        let a = cross_validate(&x, &y, &quick_boost(), &quick_cv()).unwrap();
        let b = cross_validate(&x, &y, &quick_boost(), &quick_cv()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cv_seed_changes_the_result() {
        let (x, y) = dataset(true, 90, 3);
        let a = cross_validate(&x, &y, &quick_boost(), &quick_cv()).unwrap();
        let b = cross_validate(
            &x,
            &y,
            &quick_boost(),
            &CvParams { seed: 99, ..quick_cv() },
        )
        .unwrap();
        assert_ne!(a.run_aucs, b.run_aucs);
    }

    #[test]
    fn too_few_minority_rows_is_a_data_error() {
        let (x, mut y) = dataset(true, 60, 4);
        for l in y.iter_mut() {
            *l = 0;
        }
        y[0] = 1;
        y[1] = 1;
        let err = cross_validate(&x, &y, &quick_boost(), &quick_cv()).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
    }

    #[test]
    fn zero_runs_or_single_fold_is_config_error() {
        let (x, y) = dataset(true, 60, 5);
        for bad in [
            CvParams { runs: 0, ..quick_cv() },
            CvParams { folds: 1, ..quick_cv() },
        ] {
            let err = cross_validate(&x, &y, &quick_boost(), &bad).unwrap_err();
            assert!(matches!(err, Error::Config(_)));
        }
    }

    #[test]
    fn std_is_population_over_runs() {
        let (x, y) = dataset(true, 120, 6);
        let out = cross_validate(&x, &y, &quick_boost(), &quick_cv()).unwrap();
        let mean = out.run_aucs.iter().sum::<f64>() / out.run_aucs.len() as f64;
        let var = out
            .run_aucs
            .iter()
            .map(|a| (a - mean).powi(2))
            .sum::<f64>()
            / out.run_aucs.len() as f64;
        assert!((out.std_auc - var.sqrt()).abs() < 1e-15);
        assert!((out.mean_auc - mean).abs() < 1e-15);
    }
}
