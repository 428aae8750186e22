//! Gradient-boosted trees with logistic loss for binary classification.
//!
//! Boosting runs in margin (log-odds) space from a zero base margin. Each
//! round fits one regression tree to the first- and second-order gradients
//! of the logistic loss at the current margins (g = p - y, h = p(1 - p)),
//! then adds the tree's (learning-rate-scaled) leaf values to the margins.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::derive_seed;
use super::tree::{grow, Presorted, Tree, TreeParams};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Fraction of rows drawn (without replacement) per tree.
    pub subsample: f64,
    pub lambda: f64,
    pub min_child_weight: f64,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_estimators: 500,
            learning_rate: 0.1,
            max_depth: 6,
            subsample: 1.0,
            lambda: 1.0,
            min_child_weight: 1.0,
            seed: 0,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedClassifier {
    pub params: BoostParams,
    pub feature_names: Vec<String>,
    pub base_margin: f64,
    pub trees: Vec<Tree>,
}

impl BoostedClassifier {
    pub fn fit(
        data: &DenseMatrix,
        labels: &[u8],
        feature_names: Vec<String>,
        params: BoostParams,
    ) -> Self {
        let n = data.rows();
        assert_eq!(labels.len(), n);
        assert!(n > 0, "cannot fit on an empty matrix");
        assert_eq!(feature_names.len(), data.cols());

        let presorted = Presorted::build(data);
        let base_margin = 0.0;
        let mut margins = vec![base_margin; n];
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        let mut weight = vec![1.0; n];
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_child_weight: params.min_child_weight,
            lambda: params.lambda,
            leaf_scale: params.learning_rate,
        };

        let mut trees = Vec::with_capacity(params.n_estimators);
        for t in 0..params.n_estimators {
            if params.subsample < 1.0 {
                let keep = ((n as f64 * params.subsample).round() as usize).clamp(1, n);
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, t as u64));
                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(&mut rng);
                weight.iter_mut().for_each(|w| *w = 0.0);
                for &i in &idx[..keep] {
                    weight[i] = 1.0;
                }
            }
            for i in 0..n {
                let p = sigmoid(margins[i]);
                let w = weight[i];
                grad[i] = w * (p - labels[i] as f64);
                hess[i] = w * (p * (1.0 - p));
            }
            let tree = grow(data, &presorted, &grad, &hess, &weight, &tree_params, None);
            for i in 0..n {
                margins[i] += tree.predict_row(data.row(i));
            }
            trees.push(tree);
        }

        BoostedClassifier {
            params,
            feature_names,
            base_margin,
            trees,
        }
    }

    pub fn predict_margin_row(&self, row: &[f64]) -> f64 {
        self.base_margin
            + self
                .trees
                .iter()
                .map(|t| t.predict_row(row))
                .sum::<f64>()
    }

    pub fn predict_margin(&self, data: &DenseMatrix) -> Vec<f64> {
        (0..data.rows())
            .map(|i| self.predict_margin_row(data.row(i)))
            .collect()
    }

    pub fn predict_proba_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.predict_margin_row(row))
    }

    pub fn predict_proba(&self, data: &DenseMatrix) -> Vec<f64> {
        self.predict_margin(data).into_iter().map(sigmoid).collect()
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }
}
