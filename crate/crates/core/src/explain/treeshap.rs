//! Exact path-dependent Shapley attribution for tree ensembles.
//!
//! This is the polynomial-time tree attribution algorithm: for one example
//! it walks every root-to-leaf path once while maintaining a compressed
//! record of the features encountered so far, each with the proportion of
//! background paths that flow through when the feature is out of the
//! coalition (its zero fraction, taken from training cover counts) and the
//! indicator of the example's own branch direction (its one fraction). The
//! bookkeeping yields, at every leaf, the exact sum of factorial-weighted
//! coalition differences that defines the Shapley value, so the result
//! equals brute-force enumeration over all feature subsets while costing
//! only O(leaves * depth^2) per tree.
//!
//! The background distribution is the one implied by the recorded node
//! covers, so no explicit background matrix is consulted at attribution
//! time. Attributions are additive across trees; ensembles that average
//! rather than sum their trees scale each tree's contribution by the
//! reciprocal of the tree count.

use crate::learner::tree::Tree;

/// Attribution of one prediction: `output = baseline + phi.iter().sum()`.
#[derive(Debug, Clone)]
pub struct ShapRow {
    pub baseline: f64,
    pub output: f64,
    pub phi: Vec<f64>,
}

/// Computes per-feature Shapley values for one example.
///
/// `bias` is the ensemble's additive offset (a classifier's base margin)
/// and `scale` multiplies every tree's output, so a summed ensemble passes
/// 1.0 and a tree-averaging ensemble passes 1/n_trees. The returned
/// baseline is the expected ensemble output under the training
/// distribution and the output is baseline plus the sum of attributions,
/// which matches the ensemble's raw prediction for the row.
pub fn shap_for_row(
    trees: &[Tree],
    bias: f64,
    scale: f64,
    row: &[f64],
    n_features: usize,
) -> ShapRow {
    let mut baseline = bias;
    for tree in trees {
        baseline += scale * tree.expected_value();
    }
    let mut phi = vec![0.0f64; n_features];
    for tree in trees {
        tree_shap(tree, row, &mut phi);
    }
    if scale != 1.0 {
        for p in phi.iter_mut() {
            *p *= scale;
        }
    }
    let output = baseline + phi.iter().sum::<f64>();
    ShapRow {
        baseline,
        output,
        phi,
    }
}

#[derive(Debug, Clone)]
struct PathItem {
    feature_index: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

impl PathItem {
    fn new() -> PathItem {
        PathItem {
            feature_index: None,
            zero_fraction: 0.0,
            one_fraction: 0.0,
            pweight: 0.0,
        }
    }
}

fn tree_shap(tree: &Tree, row: &[f64], phi: &mut [f64]) {
    let bound = tree.max_depth() + 2;
    let mut unique_path = vec![PathItem::new(); bound * (bound + 1) / 2];
    tree_shap_recursive(RecursiveOptions {
        phi,
        row,
        tree,
        node_index: 0,
        unique_path: unique_path.as_mut_slice(),
        unique_depth: 0,
        parent_zero_fraction: 1.0,
        parent_one_fraction: 1.0,
        parent_feature_index: None,
    });
}

struct RecursiveOptions<'a> {
    phi: &'a mut [f64],
    row: &'a [f64],
    tree: &'a Tree,
    node_index: usize,
    unique_path: &'a mut [PathItem],
    unique_depth: usize,
    parent_zero_fraction: f64,
    parent_one_fraction: f64,
    parent_feature_index: Option<usize>,
}

fn tree_shap_recursive(options: RecursiveOptions) {
    let RecursiveOptions {
        phi,
        row,
        tree,
        node_index,
        unique_path,
        unique_depth,
        parent_zero_fraction,
        parent_one_fraction,
        parent_feature_index,
    } = options;
    extend_path(
        unique_path,
        unique_depth,
        parent_zero_fraction,
        parent_one_fraction,
        parent_feature_index,
    );
    let mut unique_depth = unique_depth;
    let node = &tree.nodes[node_index];
    if node.is_leaf() {
        for path_index in 1..=unique_depth {
            let weight = unwound_path_sum(unique_path, unique_depth, path_index);
            let item = &unique_path[path_index];
            let direction_gap = item.one_fraction - item.zero_fraction;
            phi[item.feature_index.expect("interior path items track a feature")] +=
                weight * direction_gap * node.value;
        }
        return;
    }

    let feature = node.feature as usize;
    let (hot_index, cold_index) = if row[feature] <= node.threshold {
        (node.left as usize, node.right as usize)
    } else {
        (node.right as usize, node.left as usize)
    };
    let hot_zero_fraction = tree.nodes[hot_index].cover / node.cover;
    let cold_zero_fraction = tree.nodes[cold_index].cover / node.cover;
    let mut incoming_zero_fraction = 1.0;
    let mut incoming_one_fraction = 1.0;
    if let Some(path_index) =
        (1..=unique_depth).find(|&i| unique_path[i].feature_index == Some(feature))
    {
        incoming_zero_fraction = unique_path[path_index].zero_fraction;
        incoming_one_fraction = unique_path[path_index].one_fraction;
        unwind_path(unique_path, unique_depth, path_index);
        unique_depth -= 1;
    }
    let (parent_path, child_path) = unique_path.split_at_mut(unique_depth + 1);
    child_path[0..parent_path.len()].clone_from_slice(parent_path);
    tree_shap_recursive(RecursiveOptions {
        phi,
        row,
        tree,
        node_index: hot_index,
        unique_path: child_path,
        unique_depth: unique_depth + 1,
        parent_zero_fraction: hot_zero_fraction * incoming_zero_fraction,
        parent_one_fraction: incoming_one_fraction,
        parent_feature_index: Some(feature),
    });
    child_path[0..parent_path.len()].clone_from_slice(parent_path);
    tree_shap_recursive(RecursiveOptions {
        phi,
        row,
        tree,
        node_index: cold_index,
        unique_path: child_path,
        unique_depth: unique_depth + 1,
        parent_zero_fraction: cold_zero_fraction * incoming_zero_fraction,
        parent_one_fraction: 0.0,
        parent_feature_index: Some(feature),
    });
}

fn extend_path(
    unique_path: &mut [PathItem],
    unique_depth: usize,
    zero_fraction: f64,
    one_fraction: f64,
    feature_index: Option<usize>,
) {
    unique_path[unique_depth] = PathItem {
        feature_index,
        zero_fraction,
        one_fraction,
        pweight: if unique_depth == 0 { 1.0 } else { 0.0 },
    };
    if unique_depth == 0 {
        return;
    }
    for i in (0..unique_depth).rev() {
        unique_path[i + 1].pweight +=
            one_fraction * unique_path[i].pweight * (i + 1) as f64 / (unique_depth + 1) as f64;
        unique_path[i].pweight =
            zero_fraction * unique_path[i].pweight * (unique_depth - i) as f64
                / (unique_depth + 1) as f64;
    }
}

fn unwind_path(unique_path: &mut [PathItem], unique_depth: usize, path_index: usize) {
    let one_fraction = unique_path[path_index].one_fraction;
    let zero_fraction = unique_path[path_index].zero_fraction;
    let mut next_one_portion = unique_path[unique_depth].pweight;
    for i in (0..unique_depth).rev() {
        if one_fraction != 0.0 {
            let tmp = unique_path[i].pweight;
            unique_path[i].pweight =
                next_one_portion * (unique_depth + 1) as f64 / ((i + 1) as f64 * one_fraction);
            next_one_portion = tmp
                - unique_path[i].pweight * zero_fraction * (unique_depth - i) as f64
                    / (unique_depth + 1) as f64;
        } else {
            unique_path[i].pweight = unique_path[i].pweight * (unique_depth + 1) as f64
                / (zero_fraction * (unique_depth - i) as f64);
        }
    }
    for i in path_index..unique_depth {
        unique_path[i].feature_index = unique_path[i + 1].feature_index;
        unique_path[i].zero_fraction = unique_path[i + 1].zero_fraction;
        unique_path[i].one_fraction = unique_path[i + 1].one_fraction;
    }
}

fn unwound_path_sum(unique_path: &[PathItem], unique_depth: usize, path_index: usize) -> f64 {
    let one_fraction = unique_path[path_index].one_fraction;
    let zero_fraction = unique_path[path_index].zero_fraction;
    let mut next_one_portion = unique_path[unique_depth].pweight;
    let mut total = 0.0;
    if one_fraction != 0.0 {
        for i in (0..unique_depth).rev() {
            let tmp = next_one_portion / ((i + 1) as f64 * one_fraction);
            total += tmp;
            next_one_portion =
                unique_path[i].pweight - tmp * zero_fraction * (unique_depth - i) as f64;
        }
    } else {
        for i in (0..unique_depth).rev() {
            total += unique_path[i].pweight / (zero_fraction * (unique_depth - i) as f64);
        }
    }
    total * (unique_depth + 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::boost::{BoostParams, BoostedClassifier};
    use crate::learner::forest::{ForestParams, ForestRegressor};
    use crate::learner::tree::Node;
    use crate::matrix::DenseMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn leaf(value: f64, cover: f64) -> Node {
        Node {
            feature: -1,
            threshold: 0.0,
            left: 0,
            right: 0,
            value,
            cover,
        }
    }

    fn branch(feature: i32, threshold: f64, left: u32, right: u32, cover: f64) -> Node {
        Node {
            feature,
            threshold,
            left,
            right,
            value: 0.0,
            cover,
        }
    }

    /// Conditional expectation of one tree given that features in `coalition`
    /// are fixed to the row's values and the rest follow the cover
    /// distribution.
    fn expectation_given(tree: &Tree, row: &[f64], coalition: &[bool], at: usize) -> f64 {
        let node = &tree.nodes[at];
        if node.is_leaf() {
            return node.value;
        }
        let feature = node.feature as usize;
        if coalition[feature] {
            let next = if row[feature] <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
            return expectation_given(tree, row, coalition, next);
        }
        let left = node.left as usize;
        let right = node.right as usize;
        (tree.nodes[left].cover / node.cover) * expectation_given(tree, row, coalition, left)
            + (tree.nodes[right].cover / node.cover)
                * expectation_given(tree, row, coalition, right)
    }

    fn ensemble_expectation(trees: &[Tree], row: &[f64], coalition: &[bool]) -> f64 {
        trees
            .iter()
            .map(|t| expectation_given(t, row, coalition, 0))
            .sum()
    }

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// Exponential-time Shapley values over all feature coalitions, using the
    /// same cover-implied background as the fast path.
    fn brute_force_shapley(trees: &[Tree], row: &[f64], n_features: usize) -> Vec<f64> {
        let m = n_features;
        let mut phi = vec![0.0f64; m];
        for i in 0..m {
            for mask in 0..(1u32 << m) {
                if mask & (1 << i) != 0 {
                    continue;
                }
                let mut coalition = vec![false; m];
                let mut size = 0usize;
                for (j, slot) in coalition.iter_mut().enumerate() {
                    if mask & (1 << j) != 0 {
                        *slot = true;
                        size += 1;
                    }
                }
                let without = ensemble_expectation(trees, row, &coalition);
                coalition[i] = true;
                let with = ensemble_expectation(trees, row, &coalition);
                let weight = factorial(size) * factorial(m - size - 1) / factorial(m);
                phi[i] += weight * (with - without);
            }
        }
        phi
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_rows(
            &(0..rows)
                .map(|_| (0..cols).map(|_| rng.gen_range(-3.0..3.0)).collect())
                .collect::<Vec<Vec<f64>>>(),
        )
    }

    #[test]
    fn constant_model_attributes_nothing() {
        let tree = Tree {
            nodes: vec![leaf(0.7, 10.0)],
        };
        let out = shap_for_row(&[tree], 0.25, 1.0, &[1.0, 2.0, 3.0], 3);
        assert_eq!(out.phi, vec![0.0, 0.0, 0.0]);
        assert!((out.baseline - 0.95).abs() < 1e-12);
        assert!((out.output - 0.95).abs() < 1e-12);
    }

    #[test]
    fn unused_features_get_zero_attribution() {
        let tree = Tree {
            nodes: vec![
                branch(3, 0.5, 1, 2, 10.0),
                leaf(-1.0, 6.0),
                leaf(2.0, 4.0),
            ],
        };
        for row in [
            vec![9.0, -9.0, 4.0, 0.2],
            vec![0.0, 0.0, 0.0, 0.9],
            vec![-5.0, 5.0, 1.0, 0.5],
        ] {
            let out = shap_for_row(&[tree.clone()], 0.0, 1.0, &row, 4);
            assert_eq!(out.phi[0], 0.0);
            assert_eq!(out.phi[1], 0.0);
            assert_eq!(out.phi[2], 0.0);
            assert!(out.phi[3].abs() > 1e-9);
            let predicted = tree.predict_row(&row);
            assert!((out.output - predicted).abs() < 1e-12);
        }
    }

    #[test]
    fn single_split_matches_closed_form() {
        let tree = Tree {
            nodes: vec![
                branch(0, 0.0, 1, 2, 10.0),
                leaf(-1.0, 4.0),
                leaf(1.0, 6.0),
            ],
        };
        let expected_value = -1.0 * 0.4 + 1.0 * 0.6;
        let out = shap_for_row(&[tree], 0.0, 1.0, &[-1.0, 0.0], 2);
        assert!((out.baseline - expected_value).abs() < 1e-12);
        assert!((out.phi[0] - (-1.0 - expected_value)).abs() < 1e-12);
        assert_eq!(out.phi[1], 0.0);
    }

    #[test]
    fn depth_two_tree_matches_coalition_enumeration() {
        let tree = Tree {
            nodes: vec![
                branch(0, 0.5, 1, 2, 8.0),
                branch(1, 0.5, 3, 4, 5.0),
                branch(2, 0.5, 5, 6, 3.0),
                leaf(1.0, 2.0),
                leaf(4.0, 3.0),
                leaf(-2.0, 1.0),
                leaf(0.5, 2.0),
            ],
        };
        let trees = vec![tree];
        for row in [
            vec![0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0],
            vec![1.0, 1.0, 1.0],
            vec![0.3, 0.9, 0.1],
        ] {
            let fast = shap_for_row(&trees, 0.0, 1.0, &row, 3);
            let slow = brute_force_shapley(&trees, &row, 3);
            for j in 0..3 {
                assert!(
                    (fast.phi[j] - slow[j]).abs() < 1e-8,
                    "feature {j}: fast {} vs brute force {}",
                    fast.phi[j],
                    slow[j]
                );
            }
        }
    }

    #[test]
    fn grown_ensemble_matches_coalition_enumeration() {
        let data = random_matrix(60, 4, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let labels: Vec<u8> = (0..60)
            .map(|i| {
                let x = data.row(i);
                u8::from(x[0] + 0.5 * x[2] + 0.1 * rng.gen_range(-1.0..1.0) > 0.0)
            })
            .collect();
        let names = (0..4).map(|c| format!("f{c}")).collect::<Vec<_>>();
        let params = BoostParams {
            n_estimators: 5,
            learning_rate: 0.3,
            max_depth: 3,
            ..BoostParams::default()
        };
        let model = BoostedClassifier::fit(&data, &labels, names, params);
        for i in [0, 7, 23, 59] {
            let row = data.row(i);
            let fast = shap_for_row(&model.trees, model.base_margin, 1.0, row, 4);
            let slow = brute_force_shapley(&model.trees, row, 4);
            for j in 0..4 {
                assert!(
                    (fast.phi[j] - slow[j]).abs() < 1e-8,
                    "row {i} feature {j}: fast {} vs brute force {}",
                    fast.phi[j],
                    slow[j]
                );
            }
        }
    }

    #[test]
    fn repeated_feature_along_path_matches_enumeration() {
        let tree = Tree {
            nodes: vec![
                branch(0, 0.5, 1, 2, 12.0),
                branch(1, 0.5, 3, 4, 7.0),
                leaf(3.0, 5.0),
                branch(0, -0.5, 5, 6, 4.0),
                leaf(-1.0, 3.0),
                leaf(2.0, 1.0),
                leaf(-4.0, 3.0),
            ],
        };
        let trees = vec![tree];
        for row in [
            vec![-1.0, 0.0],
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ] {
            let fast = shap_for_row(&trees, 0.0, 1.0, &row, 2);
            let slow = brute_force_shapley(&trees, &row, 2);
            for j in 0..2 {
                assert!(
                    (fast.phi[j] - slow[j]).abs() < 1e-8,
                    "row {row:?} feature {j}: fast {} vs brute force {}",
                    fast.phi[j],
                    slow[j]
                );
            }
        }
    }

    #[test]
    fn classifier_local_accuracy_holds() {
        let data = random_matrix(120, 6, 21);
        let labels: Vec<u8> = (0..120)
            .map(|i| {
                let x = data.row(i);
                u8::from(x[1] - x[4] + 0.3 * x[2] > 0.2)
            })
            .collect();
        let names = (0..6).map(|c| format!("f{c}")).collect::<Vec<_>>();
        let params = BoostParams {
            n_estimators: 40,
            max_depth: 4,
            ..BoostParams::default()
        };
        let model = BoostedClassifier::fit(&data, &labels, names, params);
        for i in 0..120 {
            let row = data.row(i);
            let out = shap_for_row(&model.trees, model.base_margin, 1.0, row, 6);
            let margin = model.predict_margin_row(row);
            assert!(
                (out.output - margin).abs() < 1e-6,
                "row {i}: attribution total {} vs margin {}",
                out.output,
                margin
            );
        }
    }

    #[test]
    fn forest_local_accuracy_holds_with_mean_scaling() {
        let data = random_matrix(100, 5, 31);
        let targets: Vec<f64> = (0..100)
            .map(|i| {
                let x = data.row(i);
                2.0 * x[0] - x[3] + 0.5
            })
            .collect();
        let names = (0..5).map(|c| format!("f{c}")).collect::<Vec<_>>();
        let params = ForestParams {
            n_trees: 30,
            max_depth: 6,
            ..ForestParams::default()
        };
        let model = ForestRegressor::fit(&data, &targets, names, params);
        let scale = 1.0 / model.trees.len() as f64;
        for i in 0..100 {
            let row = data.row(i);
            let out = shap_for_row(&model.trees, 0.0, scale, row, 5);
            let predicted = model.predict_row(row);
            assert!(
                (out.output - predicted).abs() < 1e-6,
                "row {i}: attribution total {} vs prediction {}",
                out.output,
                predicted
            );
        }
    }

    #[test]
    fn duplicated_columns_share_importance() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let x: f64 = rng.gen_range(-2.0..2.0);
                vec![x, x]
            })
            .collect();
        let data = DenseMatrix::from_rows(&rows);
        let targets: Vec<f64> = (0..data.rows()).map(|i| data.get(i, 0) * 1.5).collect();
        let params = ForestParams {
            n_trees: 400,
            max_depth: 3,
            seed: 7,
            ..ForestParams::default()
        };
        let model = ForestRegressor::fit(
            &data,
            &targets,
            vec!["a".into(), "b".into()],
            params,
        );
        let scale = 1.0 / model.trees.len() as f64;
        let mut mean_abs = [0.0f64; 2];
        for i in 0..data.rows() {
            let out = shap_for_row(&model.trees, 0.0, scale, data.row(i), 2);
            mean_abs[0] += out.phi[0].abs();
            mean_abs[1] += out.phi[1].abs();
        }
        let ratio = mean_abs[0] / mean_abs[1];
        assert!(
            (0.95..=1.05).contains(&ratio),
            "duplicated columns should carry equal importance, ratio {ratio}"
        );
    }
}
