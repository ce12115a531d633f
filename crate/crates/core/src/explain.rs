//! Surrogate-forest explanation of the composite risk score.
//!
//! A small bagged forest of axis-aligned regression trees is fit to predict
//! the composite score from (is_vague, log_value, log_weight). Attributions
//! are exact interventional Shapley values: with three features the 2^3
//! coalitions are enumerated outright, so the usual sampling error of
//! approximate explainers never enters the tests.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SURROGATE_FEATURES: [&str; 3] = ["is_vague", "log_value", "log_weight"];
pub const MAX_SHAPLEY_FEATURES: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        prediction: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RegressionTree {
    nodes: Vec<TreeNode>,
}

impl RegressionTree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                TreeNode::Leaf { prediction } => return *prediction,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if row[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    fn splits_on(&self, feature: usize) -> bool {
        self.nodes
            .iter()
            .any(|n| matches!(n, TreeNode::Split { feature: f, .. } if *f == feature))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// None means unbounded depth.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 20,
            max_depth: Some(6),
            min_leaf: 5,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateForest {
    pub params: ForestParams,
    pub n_features: usize,
    pub seed: u64,
    trees: Vec<RegressionTree>,
}

struct SplitCandidate {
    reduction: f64,
    feature: usize,
    threshold: f64,
}

fn sse(sum: f64, sum_sq: f64, n: f64) -> f64 {
    (sum_sq - sum * sum / n).max(0.0)
}

/// Greedy best split by squared-error reduction. Candidate thresholds are
/// midpoints between consecutive distinct feature values; both children must
/// hold at least `min_leaf` rows. Ties resolve to the lower feature index,
/// then the lower threshold.
fn best_split(
    rows: &[Vec<f64>],
    targets: &[f64],
    idxs: &[u32],
    n_features: usize,
    min_leaf: usize,
) -> Option<SplitCandidate> {
    let n = idxs.len();
    if n < 2 * min_leaf {
        return None;
    }
    let total_sum: f64 = idxs.iter().map(|&i| targets[i as usize]).sum();
    let total_sq: f64 = idxs.iter().map(|&i| targets[i as usize].powi(2)).sum();
    let parent_sse = sse(total_sum, total_sq, n as f64);

    let mut best: Option<SplitCandidate> = None;
    let mut order: Vec<u32> = idxs.to_vec();
    for feature in 0..n_features {
        order.sort_by(|&a, &b| {
            rows[a as usize][feature]
                .partial_cmp(&rows[b as usize][feature])
                .unwrap()
        });
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for split_at in 1..n {
            let prev = order[split_at - 1] as usize;
            let y = targets[prev];
            left_sum += y;
            left_sq += y * y;
            if split_at < min_leaf || n - split_at < min_leaf {
                continue;
            }
            let lo = rows[prev][feature];
            let hi = rows[order[split_at] as usize][feature];
            if !(hi > lo) {
                continue;
            }
            let right_sum = total_sum - left_sum;
            let right_sq = total_sq - left_sq;
            let reduction = parent_sse
                - sse(left_sum, left_sq, split_at as f64)
                - sse(right_sum, right_sq, (n - split_at) as f64);
            let threshold = lo + (hi - lo) / 2.0;
            let better = match &best {
                None => reduction > 1e-12,
                Some(b) => reduction > b.reduction + 1e-12,
            };
            if better {
                best = Some(SplitCandidate {
                    reduction,
                    feature,
                    threshold,
                });
            }
        }
    }
    best
}

fn build_tree_node(
    rows: &[Vec<f64>],
    targets: &[f64],
    idxs: &mut [u32],
    depth: usize,
    params: &ForestParams,
    n_features: usize,
    nodes: &mut Vec<TreeNode>,
) -> u32 {
    let n = idxs.len();
    let mean = idxs.iter().map(|&i| targets[i as usize]).sum::<f64>() / n as f64;

    let at_depth_limit = params.max_depth.is_some_and(|d| depth >= d);
    let candidate = if at_depth_limit {
        None
    } else {
        best_split(rows, targets, idxs, n_features, params.min_leaf)
    };

    let Some(split) = candidate else {
        nodes.push(TreeNode::Leaf { prediction: mean });
        return (nodes.len() - 1) as u32;
    };

    let mut mid = 0;
    for i in 0..n {
        if rows[idxs[i] as usize][split.feature] <= split.threshold {
            idxs.swap(i, mid);
            mid += 1;
        }
    }
    let slot = nodes.len();
    nodes.push(TreeNode::Leaf { prediction: mean }); // placeholder
    let (left_idxs, right_idxs) = idxs.split_at_mut(mid);
    let left = build_tree_node(rows, targets, left_idxs, depth + 1, params, n_features, nodes);
    let right = build_tree_node(rows, targets, right_idxs, depth + 1, params, n_features, nodes);
    nodes[slot] = TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left,
        right,
    };
    slot as u32
}

/// Fit bagged regression trees on bootstrap resamples; deterministic for a
/// fixed seed.
pub fn fit_surrogate_forest(
    rows: &[Vec<f64>],
    targets: &[f64],
    params: ForestParams,
    seed: u64,
) -> Result<SurrogateForest> {
    if rows.len() < 10 {
        return Err(Error::parameter(format!(
            "surrogate forest needs at least 10 rows, got {}",
            rows.len()
        )));
    }
    if rows.len() != targets.len() {
        return Err(Error::parameter("rows and targets must align"));
    }
    let n_features = rows[0].len();
    if n_features == 0 || rows.iter().any(|r| r.len() != n_features) {
        return Err(Error::parameter("feature rows must share a nonzero width"));
    }
    if params.n_trees == 0 || params.min_leaf == 0 {
        return Err(Error::parameter("n_trees and min_leaf must be positive"));
    }

    let n = rows.len();
    let trees = (0..params.n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let mut idxs: Vec<u32> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n) as u32).collect()
            } else {
                (0..n as u32).collect()
            };
            let mut nodes = Vec::new();
            build_tree_node(rows, targets, &mut idxs, 0, &params, n_features, &mut nodes);
            RegressionTree { nodes }
        })
        .collect();

    Ok(SurrogateForest {
        params,
        n_features,
        seed,
        trees,
    })
}

impl SurrogateForest {
    /// Average prediction over trees.
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }

    /// True when no tree in the forest splits on `feature`.
    pub fn ignores_feature(&self, feature: usize) -> bool {
        !self.trees.iter().any(|t| t.splits_on(feature))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub record_id: u64,
    /// Mean model prediction over the background sample (v of the empty set).
    pub baseline: f64,
    pub phi: Vec<f64>,
}

/// Exact interventional Shapley values.
///
/// `v(S)` is the mean prediction over background rows with the features in S
/// taken from `x`; `phi_i` sums the weighted marginal contributions of
/// feature i over all coalitions. Efficiency (`baseline + sum(phi) =
/// prediction at x`) holds to float precision by construction.
pub fn shapley_values(
    model: &SurrogateForest,
    record_id: u64,
    x: &[f64],
    background: &[Vec<f64>],
) -> Result<ShapExplanation> {
    let f = model.n_features;
    if x.len() != f {
        return Err(Error::parameter("row width does not match the model"));
    }
    if background.is_empty() {
        return Err(Error::parameter("background sample must be non-empty"));
    }
    if f > MAX_SHAPLEY_FEATURES {
        return Err(Error::parameter(format!(
            "{f} features would need 2^{f} coalitions; refusing above {MAX_SHAPLEY_FEATURES}"
        )));
    }

    // v(S) for every coalition mask
    let mut v = vec![0.0f64; 1 << f];
    let mut hybrid = vec![0.0f64; f];
    for (mask, slot) in v.iter_mut().enumerate() {
        let mut acc = 0.0;
        for b in background {
            for i in 0..f {
                hybrid[i] = if mask & (1 << i) != 0 { x[i] } else { b[i] };
            }
            acc += model.predict(&hybrid);
        }
        *slot = acc / background.len() as f64;
    }

    let mut factorial = vec![1.0f64; f + 1];
    for i in 1..=f {
        factorial[i] = factorial[i - 1] * i as f64;
    }

    let mut phi = vec![0.0f64; f];
    for (i, phi_i) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for mask in 0..(1usize << f) {
            if mask & bit != 0 {
                continue;
            }
            let s = (mask as u32).count_ones() as usize;
            let weight = factorial[s] * factorial[f - s - 1] / factorial[f];
            *phi_i += weight * (v[mask | bit] - v[mask]);
        }
    }

    Ok(ShapExplanation {
        record_id,
        baseline: v[0],
        phi,
    })
}

/// Features ranked by mean absolute attribution, descending; ties keep
/// feature-index order.
pub fn mean_abs_shap_report(
    explanations: &[ShapExplanation],
    feature_names: &[String],
) -> Vec<(String, f64)> {
    if explanations.is_empty() {
        return Vec::new();
    }
    let f = explanations[0].phi.len();
    let mut means: Vec<(String, f64)> = (0..f)
        .map(|i| {
            let mean = explanations.iter().map(|e| e.phi[i].abs()).sum::<f64>()
                / explanations.len() as f64;
            let name = feature_names
                .get(i)
                .cloned()
                .unwrap_or_else(|| format!("feature_{i}"));
            (name, mean)
        })
        .collect();
    means.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    means
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_rows() -> (Vec<Vec<f64>>, Vec<f64>) {
        // full factorial grid so every interventional hybrid is a grid point
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for a in 0..2 {
            for b in 0..5 {
                for c in 0..5 {
                    let row = vec![a as f64, b as f64, c as f64];
                    targets.push(2.0 * row[0] + 0.5 * row[1] - 1.5 * row[2] + 3.0);
                    rows.push(row);
                }
            }
        }
        (rows, targets)
    }

    #[test]
    fn constant_target_yields_single_leaf_trees() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let targets = vec![0.42; 20];
        let forest = fit_surrogate_forest(&rows, &targets, ForestParams::default(), 1).unwrap();
        for tree in &forest.trees {
            assert_eq!(tree.nodes.len(), 1);
        }
        assert!((forest.predict(&[99.0, 0.0]) - 0.42).abs() < 1e-12);
    }

    #[test]
    fn step_function_of_flag_fits_exactly() {
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for i in 0..40 {
            let vague = (i % 2) as f64;
            rows.push(vec![vague, (i % 7) as f64, (i % 5) as f64]);
            targets.push(vague);
        }
        let params = ForestParams {
            max_depth: None,
            ..ForestParams::default()
        };
        let forest = fit_surrogate_forest(&rows, &targets, params, 3).unwrap();
        let sse: f64 = rows
            .iter()
            .zip(&targets)
            .map(|(r, t)| (forest.predict(r) - t).powi(2))
            .sum();
        assert!(sse < 1e-18, "training residual {sse}");
    }

    #[test]
    fn fixed_seed_reproduces_forest() {
        let (rows, targets) = grid_rows();
        let a = fit_surrogate_forest(&rows, &targets, ForestParams::default(), 77).unwrap();
        let b = fit_surrogate_forest(&rows, &targets, ForestParams::default(), 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_rows_is_parameter_error() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let targets = vec![1.0; 5];
        assert!(fit_surrogate_forest(&rows, &targets, ForestParams::default(), 0).is_err());
    }

    #[test]
    fn shapley_efficiency_holds() {
        let (rows, targets) = grid_rows();
        let forest = fit_surrogate_forest(&rows, &targets, ForestParams::default(), 5).unwrap();
        for x in rows.iter().take(24) {
            let ex = shapley_values(&forest, 0, x, &rows).unwrap();
            let total = ex.baseline + ex.phi.iter().sum::<f64>();
            assert!((total - forest.predict(x)).abs() <= 1e-9);
        }
    }

    #[test]
    fn dummy_feature_gets_exact_zero() {
        // target ignores feature 2 entirely
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..2 {
                    rows.push(vec![a as f64, b as f64, c as f64]);
                    targets.push(3.0 * a as f64 - b as f64);
                }
            }
        }
        let params = ForestParams {
            max_depth: None,
            min_leaf: 1,
            bootstrap: false,
            n_trees: 5,
        };
        let forest = fit_surrogate_forest(&rows, &targets, params, 9).unwrap();
        assert!(forest.ignores_feature(2));
        let ex = shapley_values(&forest, 0, &rows[7], &rows).unwrap();
        assert_eq!(ex.phi[2], 0.0);
    }

    #[test]
    fn linear_model_matches_closed_form() {
        let (rows, targets) = grid_rows();
        let params = ForestParams {
            n_trees: 5,
            max_depth: None,
            min_leaf: 1,
            bootstrap: false,
        };
        let forest = fit_surrogate_forest(&rows, &targets, params, 2).unwrap();
        // trees memorize the grid exactly
        for (r, t) in rows.iter().zip(&targets) {
            assert!((forest.predict(r) - t).abs() < 1e-12);
        }
        let coef = [2.0, 0.5, -1.5];
        let means: Vec<f64> = (0..3)
            .map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / rows.len() as f64)
            .collect();
        let x = vec![1.0, 4.0, 2.0];
        let ex = shapley_values(&forest, 0, &x, &rows).unwrap();
        for i in 0..3 {
            let expected = coef[i] * (x[i] - means[i]);
            let rel = (ex.phi[i] - expected).abs() / expected.abs().max(1e-12);
            assert!(rel < 1e-6, "phi[{i}] = {} expected {expected}", ex.phi[i]);
        }
    }

    #[test]
    fn symmetric_features_get_equal_attributions() {
        // target and grid are symmetric in features 0 and 1
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..2 {
                    rows.push(vec![a as f64, b as f64, c as f64]);
                    targets.push((a + b) as f64);
                }
            }
        }
        let params = ForestParams {
            n_trees: 8,
            max_depth: None,
            min_leaf: 1,
            bootstrap: false,
        };
        let forest = fit_surrogate_forest(&rows, &targets, params, 4).unwrap();
        let x = vec![2.0, 2.0, 1.0];
        let ex = shapley_values(&forest, 0, &x, &rows).unwrap();
        assert!(
            (ex.phi[0] - ex.phi[1]).abs() < 1e-9,
            "symmetric features diverge: {:?}",
            ex.phi
        );
    }

    #[test]
    fn refuses_combinatorial_feature_counts() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64; 13]).collect();
        let targets: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let forest = fit_surrogate_forest(&rows, &targets, ForestParams::default(), 0).unwrap();
        let x = vec![0.0; 13];
        assert!(shapley_values(&forest, 0, &x, &rows).is_err());
    }

    #[test]
    fn mean_abs_report_ranks_and_averages() {
        let names: Vec<String> = SURROGATE_FEATURES.iter().map(|s| s.to_string()).collect();
        let explanations = vec![
            ShapExplanation {
                record_id: 0,
                baseline: 0.0,
                phi: vec![0.5, -1.0, 0.0],
            },
            ShapExplanation {
                record_id: 1,
                baseline: 0.0,
                phi: vec![-0.5, 2.0, 0.0],
            },
        ];
        let report = mean_abs_shap_report(&explanations, &names);
        assert_eq!(report[0], ("log_value".to_string(), 1.5));
        assert_eq!(report[1], ("is_vague".to_string(), 0.5));
        assert_eq!(report[2], ("log_weight".to_string(), 0.0));

        // all-zero attributions keep feature-index order
        let zeros = vec![ShapExplanation {
            record_id: 0,
            baseline: 0.0,
            phi: vec![0.0, 0.0, 0.0],
        }];
        let report = mean_abs_shap_report(&zeros, &names);
        let order: Vec<&str> = report.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(order, vec!["is_vague", "log_value", "log_weight"]);
    }
}
