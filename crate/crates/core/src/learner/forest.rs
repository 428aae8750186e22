//! Bagged random forest for regression.
//!
//! Each tree trains on a bootstrap resample (drawn as per-row counts) and
//! considers a random subset of sqrt(p) features at every node. With
//! gradient -w*y and hessian w, the shared grower's leaf value reduces to
//! the weighted mean of the leaf's targets. The forest predicts the
//! unweighted mean over trees.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::derive_seed;
use super::tree::{grow, ColumnSampler, Presorted, Tree, TreeParams};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Minimum bootstrap weight per child, the analogue of a minimum
    /// samples-per-leaf rule.
    pub min_child_weight: f64,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            max_depth: 14,
            min_child_weight: 2.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestRegressor {
    pub params: ForestParams,
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
}

impl ForestRegressor {
    pub fn fit(
        data: &DenseMatrix,
        targets: &[f64],
        feature_names: Vec<String>,
        params: ForestParams,
    ) -> Self {
        let n = data.rows();
        let p = data.cols();
        assert_eq!(targets.len(), n);
        assert!(n > 0, "cannot fit on an empty matrix");
        assert_eq!(feature_names.len(), p);

        let presorted = Presorted::build(data);
        let columns_per_node = ((p as f64).sqrt().floor() as usize).max(1);
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_child_weight: params.min_child_weight,
            lambda: 0.0,
            leaf_scale: 1.0,
        };

        let mut trees = Vec::with_capacity(params.n_trees);
        for t in 0..params.n_trees {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, t as u64));
            let mut weight = vec![0.0f64; n];
            for _ in 0..n {
                weight[rng.gen_range(0..n)] += 1.0;
            }
            let grad: Vec<f64> = (0..n).map(|i| -weight[i] * targets[i]).collect();
            let hess = weight.clone();
            let tree = grow(
                data,
                &presorted,
                &grad,
                &hess,
                &weight,
                &tree_params,
                Some(ColumnSampler {
                    columns_per_node,
                    rng: &mut rng,
                }),
            );
            trees.push(tree);
        }

        ForestRegressor {
            params,
            feature_names,
            trees,
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict(&self, data: &DenseMatrix) -> Vec<f64> {
        (0..data.rows()).map(|i| self.predict_row(data.row(i))).collect()
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }
}
