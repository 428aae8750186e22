//! Regression evaluation under a single seeded 80:20 train-test split.
//!
//! The forest trains on the shuffled front of the split and is scored on
//! the held-out tail with R-squared, mean absolute error, and the Pearson
//! correlation between truth and prediction. For plotting, test rows are
//! grouped into equal-count percentile bins of the true target and each
//! bin reports its mean true and mean predicted value.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forest::{ForestParams, ForestRegressor};
use super::metrics::{binned_means, mae, median, pearson, r2, CalibrationBin};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionParams {
    pub forest: ForestParams,
    /// Fraction of rows used for training.
    pub split_ratio: f64,
    pub split_seed: u64,
    /// Number of equal-count percentile bins on the true test target.
    pub bins: usize,
}

impl Default for RegressionParams {
    fn default() -> Self {
        RegressionParams {
            forest: ForestParams::default(),
            split_ratio: 0.8,
            split_seed: 0,
            bins: 20,
        }
    }
}

/// Held-out metrics and plot-ready calibration bins for one regression run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub n_train: usize,
    pub n_test: usize,
    pub r2: f64,
    pub mae: f64,
    pub pearson: f64,
    /// Median of the true target over the held-out rows.
    pub median_true: f64,
    pub bins: Vec<CalibrationBin>,
}

/// Trains a forest on a seeded shuffle split and scores the held-out rows.
pub fn evaluate_regression(
    features: &DenseMatrix,
    targets: &[f64],
    feature_names: &[String],
    params: &RegressionParams,
) -> Result<RegressionReport> {
    let n = targets.len();
    if features.rows() != n {
        return Err(Error::Data(format!(
            "feature matrix has {} rows but {} targets were given",
            features.rows(),
            n
        )));
    }
    if !(0.0..1.0).contains(&params.split_ratio) || params.split_ratio <= 0.0 {
        return Err(Error::Config(format!(
            "split ratio must lie strictly between 0 and 1, got {}",
            params.split_ratio
        )));
    }
    let n_train = ((n as f64) * params.split_ratio).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Data(format!(
            "{n} rows cannot be split {}:{} with both sides non-empty",
            params.split_ratio,
            1.0 - params.split_ratio
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.split_seed);
    order.shuffle(&mut rng);
    let (train_rows, test_rows) = order.split_at(n_train);

    let train_x = features.select_rows(train_rows);
    let train_y: Vec<f64> = train_rows.iter().map(|&i| targets[i]).collect();
    let test_x = features.select_rows(test_rows);
    let test_y: Vec<f64> = test_rows.iter().map(|&i| targets[i]).collect();

    let model = ForestRegressor::fit(&train_x, &train_y, feature_names.to_vec(), params.forest);
    let predicted = model.predict(&test_x);

    Ok(RegressionReport {
        n_train,
        n_test: n - n_train,
        r2: r2(&test_y, &predicted)?,
        mae: mae(&test_y, &predicted),
        pearson: pearson(&test_y, &predicted),
        median_true: median(&test_y),
        bins: binned_means(&test_y, &predicted, params.bins),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Independent reference: plain bagged regression trees grown by direct
    /// variance reduction, sharing no code with the production grower.
    mod reference {
        use rand::Rng;
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;

        use crate::matrix::DenseMatrix;

        pub struct SimpleTree {
            pub feature: Option<usize>,
            pub threshold: f64,
            pub left: Option<Box<SimpleTree>>,
            pub right: Option<Box<SimpleTree>>,
            pub value: f64,
        }

        fn sse_of(ys: &[f64]) -> f64 {
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            ys.iter().map(|y| (y - mean).powi(2)).sum()
        }

        pub fn grow(
            data: &DenseMatrix,
            targets: &[f64],
            rows: &[usize],
            depth: usize,
            min_leaf: usize,
        ) -> SimpleTree {
            let ys: Vec<f64> = rows.iter().map(|&i| targets[i]).collect();
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            if depth == 0 || rows.len() < 2 * min_leaf {
                return SimpleTree {
                    feature: None,
                    threshold: 0.0,
                    left: None,
                    right: None,
                    value: mean,
                };
            }
            let parent_sse = sse_of(&ys);
            let mut best: Option<(f64, usize, f64)> = None;
            for c in 0..data.cols() {
                let mut vals: Vec<f64> = rows.iter().map(|&i| data.get(i, c)).collect();
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                vals.dedup();
                for pair in vals.windows(2) {
                    let thr = (pair[0] + pair[1]) / 2.0;
                    let left: Vec<f64> = rows
                        .iter()
                        .filter(|&&i| data.get(i, c) <= thr)
                        .map(|&i| targets[i])
                        .collect();
                    let right: Vec<f64> = rows
                        .iter()
                        .filter(|&&i| data.get(i, c) > thr)
                        .map(|&i| targets[i])
                        .collect();
                    if left.len() < min_leaf || right.len() < min_leaf {
                        continue;
                    }
                    let reduction = parent_sse - sse_of(&left) - sse_of(&right);
                    if best.map_or(true, |(g, _, _)| reduction > g) {
                        best = Some((reduction, c, thr));
                    }
                }
            }
            match best {
                Some((gain, c, thr)) if gain > 1e-12 => {
                    let left_rows: Vec<usize> = rows
                        .iter()
                        .copied()
                        .filter(|&i| data.get(i, c) <= thr)
                        .collect();
                    let right_rows: Vec<usize> = rows
                        .iter()
                        .copied()
                        .filter(|&i| data.get(i, c) > thr)
                        .collect();
                    SimpleTree {
                        feature: Some(c),
                        threshold: thr,
                        left: Some(Box::new(grow(data, targets, &left_rows, depth - 1, min_leaf))),
                        right: Some(Box::new(grow(
                            data,
                            targets,
                            &right_rows,
                            depth - 1,
                            min_leaf,
                        ))),
                        value: mean,
                    }
                }
                _ => SimpleTree {
                    feature: None,
                    threshold: 0.0,
                    left: None,
                    right: None,
                    value: mean,
                },
            }
        }

        pub fn predict(tree: &SimpleTree, row: &[f64]) -> f64 {
            match tree.feature {
                None => tree.value,
                Some(c) => {
                    if row[c] <= tree.threshold {
                        predict(tree.left.as_ref().unwrap(), row)
                    } else {
                        predict(tree.right.as_ref().unwrap(), row)
                    }
                }
            }
        }

        pub fn bagged_predictions(
            train_x: &DenseMatrix,
            train_y: &[f64],
            test_x: &DenseMatrix,
            n_trees: usize,
            depth: usize,
            seed: u64,
        ) -> Vec<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut sums = vec![0.0f64; test_x.rows()];
            for _ in 0..n_trees {
                let rows: Vec<usize> = (0..train_y.len())
                    .map(|_| rng.gen_range(0..train_y.len()))
                    .collect();
                let tree = grow(train_x, train_y, &rows, depth, 2);
                for (i, sum) in sums.iter_mut().enumerate() {
                    *sum += predict(&tree, test_x.row(i));
                }
            }
            sums.iter().map(|s| s / n_trees as f64).collect()
        }
    }

    fn noisy_monotone(n: usize, seed: u64) -> (DenseMatrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let x0: f64 = rng.gen_range(0.0..4.0);
            let x1: f64 = rng.gen_range(-1.0..1.0);
            let x2: f64 = rng.gen_range(-1.0..1.0);
            let y = 2.0 * x0 + x0.powi(2) * 0.3 + rng.gen_range(-0.8..0.8);
            rows.push(vec![x0, x1, x2]);
            targets.push(y);
        }
        (DenseMatrix::from_rows(&rows), targets)
    }

    fn names() -> Vec<String> {
        vec!["x0".into(), "x1".into(), "x2".into()]
    }

    #[test]
    fn split_is_deterministic_and_sized_right() {
        let (data, targets) = noisy_monotone(100, 3);
        let params = RegressionParams {
            forest: ForestParams {
                n_trees: 30,
                max_depth: 8,
                ..ForestParams::default()
            },
            ..RegressionParams::default()
        };
        let a = evaluate_regression(&data, &targets, &names(), &params).unwrap();
        let b = evaluate_regression(&data, &targets, &names(), &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_train, 80);
        assert_eq!(a.n_test, 20);
    }

    #[test]
    fn strong_signal_gives_high_test_r2() {
        let (data, targets) = noisy_monotone(400, 4);
        let params = RegressionParams {
            forest: ForestParams {
                n_trees: 60,
                max_depth: 10,
                ..ForestParams::default()
            },
            ..RegressionParams::default()
        };
        let report = evaluate_regression(&data, &targets, &names(), &params).unwrap();
        assert!(report.r2 > 0.8, "expected strong fit, got R2 {}", report.r2);
        assert!(report.pearson > 0.9);
    }

    #[test]
    fn test_r2_matches_independent_bagged_oracle() {
        let (data, targets) = noisy_monotone(300, 5);
        let params = RegressionParams {
            forest: ForestParams {
                n_trees: 50,
                max_depth: 8,
                ..ForestParams::default()
            },
            ..RegressionParams::default()
        };
        let report = evaluate_regression(&data, &targets, &names(), &params).unwrap();

        let n_train = 240;
        let mut order: Vec<usize> = (0..300).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(params.split_seed);
        order.shuffle(&mut rng);
        let (train_rows, test_rows) = order.split_at(n_train);
        let train_x = data.select_rows(train_rows);
        let train_y: Vec<f64> = train_rows.iter().map(|&i| targets[i]).collect();
        let test_x = data.select_rows(test_rows);
        let test_y: Vec<f64> = test_rows.iter().map(|&i| targets[i]).collect();
        let oracle_pred =
            reference::bagged_predictions(&train_x, &train_y, &test_x, 50, 8, 999);
        let oracle_r2 = r2(&test_y, &oracle_pred).unwrap();

        assert!(
            (report.r2 - oracle_r2).abs() < 0.1,
            "production R2 {} vs reference bagged-tree R2 {}",
            report.r2,
            oracle_r2
        );
    }

    #[test]
    fn bins_partition_the_test_set() {
        let (data, targets) = noisy_monotone(200, 6);
        let params = RegressionParams {
            forest: ForestParams {
                n_trees: 20,
                max_depth: 6,
                ..ForestParams::default()
            },
            bins: 10,
            ..RegressionParams::default()
        };
        let report = evaluate_regression(&data, &targets, &names(), &params).unwrap();
        let total: usize = report.bins.iter().map(|b| b.count).sum();
        assert_eq!(total, report.n_test);
        for pair in report.bins.windows(2) {
            assert!(pair[0].mean_true <= pair[1].mean_true);
        }
    }

    #[test]
    fn degenerate_splits_are_rejected() {
        let (data, targets) = noisy_monotone(10, 7);
        let mut params = RegressionParams::default();
        params.split_ratio = 0.05;
        let err = evaluate_regression(&data, &targets, &names(), &params).unwrap_err();
        assert!(matches!(err, Error::Data(_)));

        let mut params = RegressionParams::default();
        params.split_ratio = 1.5;
        let err = evaluate_regression(&data, &targets, &names(), &params).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
