//! Regression tree grower shared by boosting and bagged forests.
//!
//! Trees are grown level by level with presorted feature columns and exact
//! greedy split search. Each tree minimizes a second-order loss expansion:
//! given per-sample gradients g and hessians h, a leaf's optimal value is
//! -G / (H + lambda) over the samples it holds, and a split's gain is the
//! usual difference of leaf objectives
//!
//! ```text
//! gain = 1/2 * ( GL^2/(HL+l) + GR^2/(HR+l) - (GL+GR)^2/(HL+HR+l) )
//! ```
//!
//! Candidate thresholds sit at midpoints between consecutive distinct
//! values of samples in the node; rows with `x <= threshold` go left. Ties
//! in gain resolve to the lowest feature index, then the lowest threshold,
//! by scanning features and values in ascending order and accepting only
//! strictly better gains. Every node records the sum of instance weights
//! that reached it (its cover), which downstream attribution uses as the
//! empirical branching distribution.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::DenseMatrix;

/// One node of a fitted tree. `feature < 0` marks a leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub feature: i32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    pub value: f64,
    pub cover: f64,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.feature < 0
    }
}

/// A fitted regression tree in array form; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            let node = &self.nodes[at];
            if node.is_leaf() {
                return node.value;
            }
            at = if row[node.feature as usize] <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }

    /// Cover-weighted mean leaf value: the tree's output expectation under
    /// the training distribution.
    pub fn expected_value(&self) -> f64 {
        let root_cover = self.nodes[0].cover;
        if root_cover <= 0.0 {
            return 0.0;
        }
        self.nodes
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| n.value * n.cover / root_cover)
            .sum()
    }

    pub fn max_depth(&self) -> usize {
        fn depth(nodes: &[Node], at: usize) -> usize {
            let n = &nodes[at];
            if n.is_leaf() {
                0
            } else {
                1 + depth(nodes, n.left as usize).max(depth(nodes, n.right as usize))
            }
        }
        depth(&self.nodes, 0)
    }
}

/// Growth limits and regularization for one tree.
#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub lambda: f64,
    /// Multiplied into every leaf value (the boosting learning rate).
    pub leaf_scale: f64,
}

/// Feature columns presorted by value, built once per training set and
/// shared by every tree grown on it.
pub struct Presorted {
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn build(data: &DenseMatrix) -> Presorted {
        let order = (0..data.cols())
            .map(|c| {
                let mut idx: Vec<u32> = (0..data.rows() as u32).collect();
                idx.sort_by(|&a, &b| {
                    data.get(a as usize, c)
                        .partial_cmp(&data.get(b as usize, c))
                        .expect("finite feature values")
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect();
        Presorted { order }
    }
}

/// Optional per-node feature subsampling.
pub struct ColumnSampler<'a> {
    pub columns_per_node: usize,
    pub rng: &'a mut ChaCha8Rng,
}

#[derive(Clone, Copy, Default)]
struct ScanState {
    gl: f64,
    hl: f64,
    wl: f64,
    prev: Option<f64>,
}

#[derive(Clone, Copy)]
struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
    gl: f64,
    hl: f64,
    wl: f64,
}

struct ActiveNode {
    id: usize,
    g: f64,
    h: f64,
    w: f64,
}

fn leaf_objective(g: f64, h: f64, lambda: f64) -> f64 {
    let denom = h + lambda;
    if denom <= 0.0 {
        0.0
    } else {
        g * g / denom
    }
}

/// Grows one tree on the weighted second-order statistics.
///
/// `grad` and `hess` must already include the instance weights; `weight`
/// itself only drives covers and inclusion (zero-weight rows are ignored).
pub fn grow(
    data: &DenseMatrix,
    presorted: &Presorted,
    grad: &[f64],
    hess: &[f64],
    weight: &[f64],
    params: &TreeParams,
    mut column_sampler: Option<ColumnSampler<'_>>,
) -> Tree {
    let n = data.rows();
    let p = data.cols();
    assert_eq!(grad.len(), n);
    assert_eq!(hess.len(), n);
    assert_eq!(weight.len(), n);

    let mut nodes: Vec<Node> = Vec::new();
    let (mut g0, mut h0, mut w0) = (0.0, 0.0, 0.0);
    for i in 0..n {
        if weight[i] > 0.0 {
            g0 += grad[i];
            h0 += hess[i];
            w0 += weight[i];
        }
    }
    nodes.push(Node {
        feature: -1,
        threshold: 0.0,
        left: 0,
        right: 0,
        value: 0.0,
        cover: w0,
    });
    let mut node_stats: Vec<(f64, f64)> = vec![(g0, h0)];

    let mut leaf_of: Vec<u32> = vec![0; n];
    let mut active: Vec<ActiveNode> = vec![ActiveNode {
        id: 0,
        g: g0,
        h: h0,
        w: w0,
    }];

    for _depth in 0..params.max_depth {
        if active.is_empty() {
            break;
        }
        let slots = active.len();

        // Which columns each active node considers.
        let col_allowed: Vec<Option<Vec<bool>>> = match &mut column_sampler {
            None => vec![None; slots],
            Some(sampler) => (0..slots)
                .map(|_| {
                    let mut mask = vec![false; p];
                    let k = sampler.columns_per_node.clamp(1, p);
                    for c in rand::seq::index::sample(sampler.rng, p, k) {
                        mask[c] = true;
                    }
                    Some(mask)
                })
                .collect(),
        };

        let mut slot_of = vec![usize::MAX; nodes.len()];
        for (s, a) in active.iter().enumerate() {
            slot_of[a.id] = s;
        }

        let mut best: Vec<Option<BestSplit>> = vec![None; slots];
        let mut scan: Vec<ScanState> = vec![ScanState::default(); slots];

        for c in 0..p {
            for state in scan.iter_mut() {
                *state = ScanState::default();
            }
            for &i32idx in &presorted.order[c] {
                let i = i32idx as usize;
                if weight[i] <= 0.0 {
                    continue;
                }
                let slot = slot_of[leaf_of[i] as usize];
                if slot == usize::MAX {
                    continue;
                }
                if let Some(mask) = &col_allowed[slot] {
                    if !mask[c] {
                        continue;
                    }
                }
                let v = data.get(i, c);
                let node = &active[slot];
                let state = &mut scan[slot];
                if let Some(prev) = state.prev {
                    if v > prev {
                        let (gl, hl, wl) = (state.gl, state.hl, state.wl);
                        let (gr, hr, wr) = (node.g - gl, node.h - hl, node.w - wl);
                        if hl >= params.min_child_weight
                            && hr >= params.min_child_weight
                            && wl > 0.0
                            && wr > 0.0
                        {
                            let gain = 0.5
                                * (leaf_objective(gl, hl, params.lambda)
                                    + leaf_objective(gr, hr, params.lambda)
                                    - leaf_objective(node.g, node.h, params.lambda));
                            let improves = match &best[slot] {
                                None => gain > 0.0,
                                Some(b) => gain > b.gain,
                            };
                            if improves {
                                let mut threshold = prev + (v - prev) / 2.0;
                                if threshold >= v || threshold < prev {
                                    threshold = prev;
                                }
                                best[slot] = Some(BestSplit {
                                    gain,
                                    feature: c,
                                    threshold,
                                    gl,
                                    hl,
                                    wl,
                                });
                            }
                        }
                    }
                }
                state.gl += grad[i];
                state.hl += hess[i];
                state.wl += weight[i];
                state.prev = Some(v);
            }
        }

        // Materialize the accepted splits and stage the next level.
        let mut next_active: Vec<ActiveNode> = Vec::new();
        let mut split_feature: Vec<Option<(usize, f64)>> = vec![None; nodes.len()];
        for (slot, found) in best.iter().enumerate() {
            let Some(split) = found else { continue };
            let parent = &active[slot];
            let parent_id = parent.id;
            let left_id = nodes.len();
            let right_id = nodes.len() + 1;
            let (gl, hl, wl) = (split.gl, split.hl, split.wl);
            let (gr, hr, wr) = (parent.g - gl, parent.h - hl, parent.w - wl);
            nodes.push(Node {
                feature: -1,
                threshold: 0.0,
                left: 0,
                right: 0,
                value: 0.0,
                cover: wl,
            });
            nodes.push(Node {
                feature: -1,
                threshold: 0.0,
                left: 0,
                right: 0,
                value: 0.0,
                cover: wr,
            });
            node_stats.push((gl, hl));
            node_stats.push((gr, hr));
            let parent_node = &mut nodes[parent_id];
            parent_node.feature = split.feature as i32;
            parent_node.threshold = split.threshold;
            parent_node.left = left_id as u32;
            parent_node.right = right_id as u32;
            split_feature[parent_id] = Some((split.feature, split.threshold));
            next_active.push(ActiveNode {
                id: left_id,
                g: gl,
                h: hl,
                w: wl,
            });
            next_active.push(ActiveNode {
                id: right_id,
                g: gr,
                h: hr,
                w: wr,
            });
        }

        if next_active.is_empty() {
            break;
        }

        for i in 0..n {
            if weight[i] <= 0.0 {
                continue;
            }
            let nd = leaf_of[i] as usize;
            if let Some((feature, threshold)) = split_feature[nd] {
                let node = &nodes[nd];
                leaf_of[i] = if data.get(i, feature) <= threshold {
                    node.left
                } else {
                    node.right
                };
            }
        }

        active = next_active;
    }

    for (id, node) in nodes.iter_mut().enumerate() {
        if node.is_leaf() {
            let (g, h) = node_stats[id];
            let denom = h + params.lambda;
            node.value = if denom > 0.0 {
                -g / denom * params.leaf_scale
            } else {
                0.0
            };
        }
    }

    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn matrix(rows: &[Vec<f64>]) -> DenseMatrix {
        DenseMatrix::from_rows(rows)
    }

    fn grow_plain(data: &DenseMatrix, grad: &[f64], hess: &[f64], params: &TreeParams) -> Tree {
        let presorted = Presorted::build(data);
        let weight = vec![1.0; data.rows()];
        grow(data, &presorted, grad, hess, &weight, params, None)
    }

    fn regression_setup(y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (y.iter().map(|v| -v).collect(), vec![1.0; y.len()])
    }

    const MEAN_PARAMS: TreeParams = TreeParams {
        max_depth: 3,
        min_child_weight: 1.0,
        lambda: 0.0,
        leaf_scale: 1.0,
    };

    /// Independent recursive walker used as a prediction oracle.
    fn walk(tree: &Tree, at: usize, row: &[f64]) -> f64 {
        let n = &tree.nodes[at];
        if n.is_leaf() {
            n.value
        } else if row[n.feature as usize] <= n.threshold {
            walk(tree, n.left as usize, row)
        } else {
            walk(tree, n.right as usize, row)
        }
    }

    #[test]
    fn depth_zero_leaf_is_weighted_mean() {
        let data = matrix(&[vec![1.0], vec![2.0], vec![3.0]]);
        let y = [2.0, 4.0, 9.0];
        let (g, h) = regression_setup(&y);
        let tree = grow_plain(&data, &g, &h, &TreeParams { max_depth: 0, ..MEAN_PARAMS });
        assert_eq!(tree.nodes.len(), 1);
        assert!((tree.nodes[0].value - 5.0).abs() < 1e-12);
        assert_eq!(tree.nodes[0].cover, 3.0);
    }

    #[test]
    fn single_split_recovers_step_function() {
        let data = matrix(&[vec![1.0], vec![2.0], vec![10.0], vec![11.0]]);
        let y = [0.0, 0.0, 8.0, 8.0];
        let (g, h) = regression_setup(&y);
        let tree = grow_plain(&data, &g, &h, &MEAN_PARAMS);
        assert!((tree.predict_row(&[1.5]) - 0.0).abs() < 1e-12);
        assert!((tree.predict_row(&[10.5]) - 8.0).abs() < 1e-12);
        let root = &tree.nodes[0];
        assert_eq!(root.feature, 0);
        assert!((root.threshold - 6.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_sends_equal_values_left() {
        let data = matrix(&[vec![1.0], vec![1.0], vec![2.0]]);
        let y = [0.0, 0.0, 3.0];
        let (g, h) = regression_setup(&y);
        let tree = grow_plain(&data, &g, &h, &MEAN_PARAMS);
        let root = &tree.nodes[0];
        assert!(root.threshold >= 1.0 && root.threshold < 2.0);
        assert_eq!(tree.predict_row(&[1.0]), 0.0);
        assert_eq!(tree.predict_row(&[2.0]), 3.0);
    }

    #[test]
    fn ties_resolve_to_lowest_feature_index() {
        // Second column duplicates the first; the split must cite column 0.
        let data = matrix(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0], vec![4.0, 4.0]]);
        let y = [0.0, 0.0, 5.0, 5.0];
        let (g, h) = regression_setup(&y);
        let tree = grow_plain(&data, &g, &h, &MEAN_PARAMS);
        assert_eq!(tree.nodes[0].feature, 0);
    }

    #[test]
    fn min_child_weight_blocks_lopsided_splits() {
        let data = matrix(&[vec![1.0], vec![2.0], vec![3.0], vec![100.0]]);
        let y = [1.0, 1.0, 1.0, 50.0];
        let (g, h) = regression_setup(&y);
        let params = TreeParams {
            min_child_weight: 2.0,
            ..MEAN_PARAMS
        };
        let tree = grow_plain(&data, &g, &h, &params);
        // The profitable split isolates the outlier; with the weight floor
        // the only legal split is 2 vs 2.
        let root = &tree.nodes[0];
        if !root.is_leaf() {
            assert!(root.threshold > 2.0 && root.threshold < 3.0);
        }
    }

    #[test]
    fn constant_target_grows_no_split() {
        let data = matrix(&[vec![1.0], vec![2.0], vec![3.0]]);
        let y = [4.0, 4.0, 4.0];
        let (g, h) = regression_setup(&y);
        let tree = grow_plain(&data, &g, &h, &MEAN_PARAMS);
        assert_eq!(tree.nodes.len(), 1);
        assert!((tree.nodes[0].value - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_rows_are_invisible()
    {
        let data = matrix(&[vec![1.0], vec![2.0], vec![3.0], vec![999.0]]);
        let presorted = Presorted::build(&data);
        let y = [1.0, 2.0, 3.0, 1000.0];
        let grad: Vec<f64> = y.iter().map(|v| -v).collect();
        let hess = vec![1.0; 4];
        let mut weight = vec![1.0; 4];
        weight[3] = 0.0;
        let masked: Vec<f64> = grad
            .iter()
            .zip(&weight)
            .map(|(g, w)| g * w)
            .collect();
        let hess_masked: Vec<f64> = hess.iter().zip(&weight).map(|(h, w)| h * w).collect();
        let tree = grow(
            &data,
            &presorted,
            &masked,
            &hess_masked,
            &weight,
            &TreeParams { max_depth: 0, ..MEAN_PARAMS },
            None,
        );
        assert!((tree.nodes[0].value - 2.0).abs() < 1e-12);
        assert_eq!(tree.nodes[0].cover, 3.0);
    }

    #[test]
    fn covers_sum_down_the_tree() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..64)
            .map(|_| (0..3).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] * 3.0 + r[1]).collect();
        let data = matrix(&rows);
        let (g, h) = regression_setup(&y);
        let tree = grow_plain(&data, &g, &h, &TreeParams { max_depth: 4, ..MEAN_PARAMS });
        for node in &tree.nodes {
            if !node.is_leaf() {
                let l = &tree.nodes[node.left as usize];
                let r = &tree.nodes[node.right as usize];
                assert!((l.cover + r.cover - node.cover).abs() < 1e-9);
            }
        }
        let leaf_cover: f64 = tree
            .nodes
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| n.cover)
            .sum();
        assert!((leaf_cover - 64.0).abs() < 1e-9);
    }

    #[test]
    fn predict_matches_independent_walker_on_random_data() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| r[0].signum() + r[2] * 0.5 + rng.gen_range(-0.1..0.1))
            .collect();
        let data = matrix(&rows);
        let (g, h) = regression_setup(&y);
        let tree = grow_plain(&data, &g, &h, &TreeParams { max_depth: 5, ..MEAN_PARAMS });
        assert!(tree.max_depth() <= 5);
        for row in rows.iter().take(50) {
            assert_eq!(tree.predict_row(row), walk(&tree, 0, row));
        }
    }

    #[test]
    fn expected_value_matches_cover_weighted_training_mean() {
        let data = matrix(&[vec![1.0], vec![2.0], vec![10.0], vec![11.0]]);
        let y = [0.0, 2.0, 8.0, 10.0];
        let (g, h) = regression_setup(&y);
        let tree = grow_plain(&data, &g, &h, &MEAN_PARAMS);
        let mean_pred: f64 = (0..4).map(|i| tree.predict_row(data.row(i))).sum::<f64>() / 4.0;
        assert!((tree.expected_value() - mean_pred).abs() < 1e-12);
    }

    #[test]
    fn lambda_shrinks_leaves_toward_zero() {
        let data = matrix(&[vec![0.0], vec![1.0]]);
        let y = [4.0, 4.0];
        let (g, h) = regression_setup(&y);
        let tree = grow_plain(
            &data,
            &g,
            &h,
            &TreeParams {
                max_depth: 0,
                lambda: 2.0,
                ..MEAN_PARAMS
            },
        );
        // -(-8) / (2 + 2) = 2 rather than the unregularized mean 4.
        assert!((tree.nodes[0].value - 2.0).abs() < 1e-12);
    }
}
