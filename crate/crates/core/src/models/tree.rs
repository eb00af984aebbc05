//! CART classification trees with Gini impurity.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TreeParams;
use crate::matrix::Matrix;

/// Gini impurity of a class-count vector.
pub fn gini(counts: &[u32]) -> f64 {
    let n: u64 = counts.iter().map(|&c| c as u64).sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    /// `value <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// `n·gini(node) − n_l·gini(left) − n_r·gini(right)`, in samples.
        gain: f64,
    },
    Leaf { counts: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
    pub n_classes: usize,
    pub n_features: usize,
}

/// Split quality as the exact fraction `(S_l·n_r + S_r·n_l) / (n_l·n_r)`
/// where `S = Σ count²`; larger is better (lower weighted child Gini).
#[derive(Clone, Copy)]
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn new(left: &[u32], right: &[u32]) -> Self {
        let sq = |c: &[u32]| c.iter().map(|&v| (v as u128) * (v as u128)).sum::<u128>();
        let nl: u128 = left.iter().map(|&v| v as u128).sum();
        let nr: u128 = right.iter().map(|&v| v as u128).sum();
        Score {
            num: sq(left) * nr + sq(right) * nl,
            den: nl * nr,
        }
    }

    fn beats(&self, other: &Score) -> bool {
        self.num * other.den > other.num * self.den
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: Score,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a / 2.0 + b / 2.0;
    if m >= a && m < b {
        m
    } else {
        a
    }
}

fn counts_of(y: &[usize], rows: &[usize], n_classes: usize) -> Vec<u32> {
    let mut counts = vec![0u32; n_classes];
    for &r in rows {
        counts[y[r]] += 1;
    }
    counts
}

/// Best threshold on one feature, or `None` when no admissible split exists.
fn best_split_on(
    x: &Matrix,
    y: &[usize],
    rows: &[usize],
    feature: usize,
    parent: &[u32],
    min_leaf: usize,
    sorted: &mut Vec<(f64, usize)>,
) -> Option<Candidate> {
    sorted.clear();
    sorted.extend(rows.iter().map(|&r| (x.get(r, feature), y[r])));
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let n = sorted.len();
    let mut left = vec![0u32; parent.len()];
    let mut right = parent.to_vec();
    let mut best: Option<Candidate> = None;
    for p in 0..n - 1 {
        let (v, c) = sorted[p];
        left[c] += 1;
        right[c] -= 1;
        let next = sorted[p + 1].0;
        if v.total_cmp(&next) != Ordering::Less {
            continue;
        }
        let n_left = p + 1;
        if n_left < min_leaf || n - n_left < min_leaf {
            continue;
        }
        let score = Score::new(&left, &right);
        if best.as_ref().is_none_or(|b| score.beats(&b.score)) {
            best = Some(Candidate {
                feature,
                threshold: midpoint(v, next),
                score,
            });
        }
    }
    best
}

impl DecisionTree {
    /// Grows a tree on the given rows (duplicates allowed, as in a bootstrap
    /// sample). `rng` is only drawn from when `params.mtry < n_features`.
    pub fn fit(
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        rows: &[usize],
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> DecisionTree {
        let d = x.cols();
        let mtry = params.mtry.map_or(d, |m| m.min(d));
        let min_leaf = params.min_samples_leaf.max(1);
        let mut nodes: Vec<TreeNode> = Vec::new();
        let mut features: Vec<usize> = (0..d).collect();
        let mut sorted = Vec::with_capacity(rows.len());

        // (node slot, rows, depth)
        nodes.push(TreeNode::Leaf { counts: Vec::new() });
        let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, rows.to_vec(), 0)];
        while let Some((slot, node_rows, depth)) = stack.pop() {
            let counts = counts_of(y, &node_rows, n_classes);
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let depth_capped = params.max_depth.is_some_and(|m| depth >= m);
            if pure || depth_capped || node_rows.len() < 2 * min_leaf {
                nodes[slot] = TreeNode::Leaf { counts };
                continue;
            }

            let mut best: Option<Candidate> = None;
            let consider = |batch: &[usize], best: &mut Option<Candidate>, sorted: &mut Vec<(f64, usize)>| {
                for &f in batch {
                    if let Some(c) = best_split_on(x, y, &node_rows, f, &counts, min_leaf, sorted) {
                        if best.as_ref().is_none_or(|b| c.score.beats(&b.score)) {
                            *best = Some(c);
                        }
                    }
                }
            };
            if mtry >= d {
                consider(&features, &mut best, &mut sorted);
            } else {
                features.shuffle(rng);
                let mut batch = features[..mtry].to_vec();
                batch.sort_unstable();
                consider(&batch, &mut best, &mut sorted);
                // Keep drawing past mtry until some feature admits a split.
                for &f in &features[mtry..] {
                    if best.is_some() {
                        break;
                    }
                    consider(&[f], &mut best, &mut sorted);
                }
            }

            let Some(split) = best else {
                nodes[slot] = TreeNode::Leaf { counts };
                continue;
            };
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = node_rows
                .iter()
                .partition(|&&r| x.get(r, split.feature) <= split.threshold);
            let n = node_rows.len() as f64;
            let gain = n * gini(&counts)
                - left_rows.len() as f64 * gini(&counts_of(y, &left_rows, n_classes))
                - right_rows.len() as f64 * gini(&counts_of(y, &right_rows, n_classes));
            let left = nodes.len();
            nodes.push(TreeNode::Leaf { counts: Vec::new() });
            let right = nodes.len();
            nodes.push(TreeNode::Leaf { counts: Vec::new() });
            nodes[slot] = TreeNode::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right,
                gain: gain.max(0.0),
            };
            // Right first so the left subtree is grown first.
            stack.push((right, right_rows, depth + 1));
            stack.push((left, left_rows, depth + 1));
        }
        DecisionTree {
            nodes,
            n_classes,
            n_features: d,
        }
    }

    pub fn leaf_counts(&self, row: &[f64]) -> &[u32] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[*feature] <= *threshold { *left } else { *right },
                TreeNode::Leaf { counts } => return counts,
            }
        }
    }

    /// Leaf class frequencies.
    pub fn proba(&self, row: &[f64]) -> Vec<f64> {
        let counts = self.leaf_counts(row);
        let total: u32 = counts.iter().sum();
        counts.iter().map(|&c| c as f64 / total as f64).collect()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    /// Accumulated split gain per feature (unnormalized).
    pub fn raw_importance(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for node in &self.nodes {
            if let TreeNode::Split { feature, gain, .. } = node {
                imp[*feature] += gain;
            }
        }
        imp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{fit, ClassifierSpec, ModelState};
    use proptest::prelude::*;

    fn grow(x: &Matrix, y: &[usize], params: &TreeParams) -> DecisionTree {
        let rows: Vec<usize> = (0..x.rows()).collect();
        DecisionTree::fit(x, y, 2, &rows, params, &mut crate::seed::rng(0))
    }

    #[test]
    fn gini_of_balanced_binary_node() {
        assert_eq!(gini(&[5, 5]), 0.5);
        assert_eq!(gini(&[4, 0]), 0.0);
    }

    #[test]
    fn pure_labels_give_single_leaf() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0]]);
        let t = grow(&x, &[1, 1, 1], &TreeParams::default());
        assert_eq!(t.nodes, vec![TreeNode::Leaf { counts: vec![0, 3] }]);
    }

    /// Enumerates every midpoint of x = [1,2,3,4], y = [A,A,B,B] and returns
    /// the one with the largest Gini decrease.
    fn brute_force_best_threshold() -> f64 {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [0usize, 0, 1, 1];
        let parent = gini(&[2, 2]);
        let mut best = (f64::MIN, 0.0);
        for w in xs.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let mut l = [0u32; 2];
            let mut r = [0u32; 2];
            for (x, &y) in xs.iter().zip(&ys) {
                if *x <= t { l[y] += 1 } else { r[y] += 1 }
            }
            let nl = (l[0] + l[1]) as f64;
            let nr = (r[0] + r[1]) as f64;
            let dec = parent - (nl * gini(&l) + nr * gini(&r)) / 4.0;
            if dec > best.0 {
                best = (dec, t);
            }
        }
        best.1
    }

    #[test]
    fn root_split_matches_enumeration() {
        assert_eq!(brute_force_best_threshold(), 2.5);
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0]]);
        let y = [0, 0, 1, 1];
        let t = grow(&x, &y, &TreeParams::default());
        match &t.nodes[0] {
            TreeNode::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 2.5);
            }
            other => panic!("expected split, got {other:?}"),
        }
        for r in 0..4 {
            assert_eq!(super::super::argmax(&t.proba(x.row(r))), y[r]);
        }
    }

    #[test]
    fn ties_prefer_lowest_feature_then_threshold() {
        // Features 0 and 1 are identical; every split on either is equally good.
        let x = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]]);
        let t = grow(&x, &[0, 1, 0, 1], &TreeParams { max_depth: Some(1), ..Default::default() });
        match &t.nodes[0] {
            TreeNode::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 1.5);
            }
            other => panic!("expected split, got {other:?}"),
        }
    }

    #[test]
    fn xor_needs_zero_gain_split_and_is_fit_exactly() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]);
        let y = [0, 1, 1, 0];
        let t = grow(&x, &y, &TreeParams::default());
        for r in 0..4 {
            assert_eq!(super::super::argmax(&t.proba(x.row(r))), y[r]);
        }
    }

    #[test]
    fn max_depth_and_min_leaf_respected() {
        let x = Matrix::from_rows(&(0..32).map(|i| [i as f64]).collect::<Vec<_>>());
        let y: Vec<usize> = (0..32).map(|i| i % 2).collect();
        let t = grow(&x, &y, &TreeParams { max_depth: Some(3), ..Default::default() });
        assert!(t.depth() <= 3);
        let t = grow(&x, &y, &TreeParams { min_samples_leaf: 5, ..Default::default() });
        for node in &t.nodes {
            if let TreeNode::Leaf { counts } = node {
                assert!(counts.iter().sum::<u32>() >= 5);
            }
        }
    }

    #[test]
    fn single_split_importance_is_concentrated() {
        let rows: Vec<[f64; 5]> = (0..10)
            .map(|i| [0.0, 1.0, 2.0, i as f64, 5.0])
            .collect();
        let y: Vec<usize> = (0..10).map(|i| usize::from(i >= 5)).collect();
        let m = fit(&ClassifierSpec::decision_tree(TreeParams::default()), &Matrix::from_rows(&rows), &y, 2).unwrap();
        let imp = crate::models::impurity_importance(&m).unwrap();
        assert_eq!(imp, vec![0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(matches!(m.state, ModelState::DecisionTree(_)));
    }

    fn consistent_dataset() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
        (2usize..40, 1usize..4).prop_flat_map(|(n, d)| {
            (
                proptest::collection::vec(proptest::collection::vec(-5i32..5, d), n),
                proptest::collection::vec(0usize..3, n),
            )
                .prop_map(|(rows, ys)| {
                    // Deduplicate x so the data is consistent.
                    let mut seen = std::collections::HashSet::new();
                    let mut xs = Vec::new();
                    let mut out_y = Vec::new();
                    for (r, y) in rows.into_iter().zip(ys) {
                        if seen.insert(r.clone()) {
                            xs.push(r.into_iter().map(f64::from).collect());
                            out_y.push(y);
                        }
                    }
                    (xs, out_y)
                })
        })
    }

    proptest! {
        #[test]
        fn unbounded_tree_fits_consistent_data((xs, ys) in consistent_dataset()) {
            let x = Matrix::from_rows(&xs);
            let rows: Vec<usize> = (0..x.rows()).collect();
            let t = DecisionTree::fit(&x, &ys, 3, &rows, &TreeParams::default(), &mut crate::seed::rng(1));
            for r in 0..x.rows() {
                prop_assert_eq!(super::super::argmax(&t.proba(x.row(r))), ys[r]);
            }
        }

        #[test]
        fn monotone_transform_leaves_training_predictions_unchanged(
            (xs, ys) in consistent_dataset(),
            depth in proptest::option::of(1usize..4),
        ) {
            let x = Matrix::from_rows(&xs);
            let transformed: Vec<Vec<f64>> = xs
                .iter()
                .map(|r| r.iter().enumerate().map(|(j, v)| if j == 0 { v.powi(3) + 2.0 * v } else { (v / 3.0).exp() }).collect())
                .collect();
            let xt = Matrix::from_rows(&transformed);
            let params = TreeParams { max_depth: depth, ..Default::default() };
            let rows: Vec<usize> = (0..x.rows()).collect();
            let a = DecisionTree::fit(&x, &ys, 3, &rows, &params, &mut crate::seed::rng(1));
            let b = DecisionTree::fit(&xt, &ys, 3, &rows, &params, &mut crate::seed::rng(1));
            for r in 0..x.rows() {
                prop_assert_eq!(a.proba(x.row(r)), b.proba(xt.row(r)));
            }
        }
    }
}
