//! Random forest of CART trees with Gini splits.
//!
//! A split sends `x[feature] <= threshold` left. Thresholds are training
//! values, so predictions depend on feature ranks only.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::features::{ActivityLabel, FeatureRow, N_FEATURES};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate features per node; 0 means ceil(sqrt(16)).
    pub max_features: usize,
    /// Nodes with fewer samples than this become leaves.
    pub min_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_features: 0,
            min_leaf: 2,
        }
    }
}

impl ForestParams {
    pub fn resolved_max_features(&self) -> usize {
        if self.max_features == 0 {
            (N_FEATURES as f64).sqrt().ceil() as usize
        } else {
            self.max_features.min(N_FEATURES)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// Left child is the next node; `right` is the index of the right child.
    Split { feature: usize, threshold: f64, right: usize },
    /// Training counts `[reading, video_watching]`.
    Leaf { counts: [usize; 2] },
}

/// Nodes in preorder; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

fn majority(counts: [usize; 2]) -> ActivityLabel {
    if counts[1] > counts[0] {
        ActivityLabel::VideoWatching
    } else {
        ActivityLabel::Reading
    }
}

impl Tree {
    pub fn leaf_counts(&self, x: &FeatureRow) -> [usize; 2] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return *counts,
                Node::Split { feature, threshold, right } => {
                    i = if x[*feature] <= *threshold { i + 1 } else { *right };
                }
            }
        }
    }

    /// Majority class of the reached leaf; ties go to Reading.
    pub fn predict(&self, x: &FeatureRow) -> ActivityLabel {
        majority(self.leaf_counts(x))
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { right, .. } => 1 + go(nodes, i + 1).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub(crate) fn check(&self) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            match n {
                Node::Split { feature, threshold, right } => {
                    if *feature >= N_FEATURES || !threshold.is_finite() || *right <= i + 1 || *right >= self.nodes.len() {
                        return Err(Error::Training(format!("malformed split at node {i}")));
                    }
                }
                Node::Leaf { counts } => {
                    if counts[0] + counts[1] == 0 {
                        return Err(Error::Training(format!("empty leaf at node {i}")));
                    }
                }
            }
        }
        if self.nodes.is_empty() {
            return Err(Error::Training("tree with no nodes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub params: ForestParams,
    pub seed: u64,
    /// Out-of-bag accuracy over samples left out by at least one tree.
    pub oob_accuracy: Option<f64>,
}

impl ForestModel {
    /// Majority vote with the winning share; a tie goes to Reading.
    pub fn predict_votes(&self, x: &FeatureRow) -> (ActivityLabel, f64) {
        let video = self.trees.iter().filter(|t| t.predict(x) == ActivityLabel::VideoWatching).count();
        let n = self.trees.len();
        let label = majority([n - video, video]);
        let won = if label == ActivityLabel::VideoWatching { video } else { n - video };
        (label, won as f64 / n as f64)
    }

    /// Share of trees voting video watching.
    pub fn video_share(&self, x: &FeatureRow) -> f64 {
        let video = self.trees.iter().filter(|t| t.predict(x) == ActivityLabel::VideoWatching).count();
        video as f64 / self.trees.len() as f64
    }
}

struct Builder<'a> {
    x: &'a [FeatureRow],
    y: &'a [usize],
    max_features: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
}

fn gini(c: [usize; 2]) -> f64 {
    let n = (c[0] + c[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = c[0] as f64 / n;
    2.0 * p * (1.0 - p)
}

struct Split {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> [usize; 2] {
        let mut c = [0, 0];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    /// Best split on one feature by weighted child Gini, or `None` when the
    /// feature is constant over the node.
    fn best_on(&self, idx: &[usize], feature: usize, total: [usize; 2], buf: &mut Vec<(f64, usize)>) -> Option<Split> {
        buf.clear();
        buf.extend(idx.iter().map(|&i| (self.x[i][feature], self.y[i])));
        buf.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = buf.len();
        let mut left = [0usize; 2];
        let mut best: Option<Split> = None;
        for k in 0..n - 1 {
            left[buf[k].1] += 1;
            if buf[k].0 == buf[k + 1].0 {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let nl = (k + 1) as f64;
            let score = nl * gini(left) + (n as f64 - nl) * gini(right);
            if best.as_ref().is_none_or(|b| score < b.score) {
                best = Some(Split { feature, threshold: buf[k].0, score });
            }
        }
        best
    }

    fn grow(&mut self, idx: &mut [usize], rng: &mut seed::Rng) {
        let counts = self.counts(idx);
        if counts[0] == 0 || counts[1] == 0 || idx.len() < self.min_leaf {
            self.nodes.push(Node::Leaf { counts });
            return;
        }
        let mut order: Vec<usize> = (0..N_FEATURES).collect();
        order.shuffle(rng);
        let mut buf = Vec::with_capacity(idx.len());
        let mut best: Option<Split> = None;
        // Draw max_features candidates; if all are constant here, keep
        // drawing until some feature can split the node.
        for (tried, &f) in order.iter().enumerate() {
            if tried >= self.max_features && best.is_some() {
                break;
            }
            if let Some(s) = self.best_on(idx, f, counts, &mut buf) {
                if best.as_ref().is_none_or(|b| s.score < b.score) {
                    best = Some(s);
                }
            }
        }
        let Some(split) = best else {
            self.nodes.push(Node::Leaf { counts });
            return;
        };
        let at = self.nodes.len();
        self.nodes.push(Node::Split { feature: split.feature, threshold: split.threshold, right: 0 });
        let x = self.x;
        let mut k = 0;
        for j in 0..idx.len() {
            if x[idx[j]][split.feature] <= split.threshold {
                idx.swap(j, k);
                k += 1;
            }
        }
        let (l, r) = idx.split_at_mut(k);
        self.grow(l, rng);
        let right = self.nodes.len();
        if let Node::Split { right: slot, .. } = &mut self.nodes[at] {
            *slot = right;
        }
        self.grow(r, rng);
    }
}

fn check_training_set(x: &[FeatureRow], y: &[ActivityLabel]) -> Result<Vec<usize>> {
    if x.len() != y.len() {
        return Err(Error::Training(format!("{} rows but {} labels", x.len(), y.len())));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Training("non-finite feature value".into()));
    }
    let y: Vec<usize> = y.iter().map(|l| l.index()).collect();
    let video = y.iter().sum::<usize>();
    if video == 0 || video == y.len() {
        return Err(Error::Training("training set has a single class".into()));
    }
    Ok(y)
}

/// Train one tree on a bootstrap sample. Returns the tree and the in-bag mask.
fn train_tree(x: &[FeatureRow], y: &[usize], params: &ForestParams, tree_seed: u64) -> (Tree, Vec<bool>) {
    let mut rng = seed::rng(tree_seed);
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mut in_bag = vec![false; n];
    for &i in &idx {
        in_bag[i] = true;
    }
    let mut b = Builder {
        x,
        y,
        max_features: params.resolved_max_features(),
        min_leaf: params.min_leaf.max(1),
        nodes: Vec::new(),
    };
    b.grow(&mut idx, &mut rng);
    (Tree { nodes: b.nodes }, in_bag)
}

pub fn train_forest(
    x: &[FeatureRow],
    y: &[ActivityLabel],
    params: &ForestParams,
    seed: u64,
    exec: Exec,
) -> Result<ForestModel> {
    let yi = check_training_set(x, y)?;
    if params.n_trees == 0 {
        return Err(Error::Config("forest with zero trees".into()));
    }
    let grown = exec.map_range(params.n_trees, |t| train_tree(x, &yi, params, seed::derive(seed, "tree", t as u64)));
    let mut votes = vec![[0usize; 2]; x.len()];
    for (tree, in_bag) in &grown {
        for (i, row) in x.iter().enumerate() {
            if !in_bag[i] {
                votes[i][tree.predict(row).index()] += 1;
            }
        }
    }
    let (mut seen, mut right) = (0usize, 0usize);
    for (v, &truth) in votes.iter().zip(&yi) {
        if v[0] + v[1] > 0 {
            seen += 1;
            if majority(*v).index() == truth {
                right += 1;
            }
        }
    }
    Ok(ForestModel {
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        params: params.clone(),
        seed,
        oob_accuracy: (seen > 0).then(|| right as f64 / seen as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn blobs(n: usize, sep: f64, seed: u64) -> (Vec<FeatureRow>, Vec<ActivityLabel>) {
        let mut rng = seed::rng(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = if i % 2 == 0 { ActivityLabel::Reading } else { ActivityLabel::VideoWatching };
            let shift = if label == ActivityLabel::VideoWatching { sep } else { 0.0 };
            x.push(std::array::from_fn(|j| noise.sample(&mut rng) + if j == 2 { shift } else { 0.0 }));
            y.push(label);
        }
        (x, y)
    }

    fn accuracy(m: &ForestModel, x: &[FeatureRow], y: &[ActivityLabel]) -> f64 {
        x.iter().zip(y).filter(|(r, l)| m.predict_votes(r).0 == **l).count() as f64 / x.len() as f64
    }

    #[test]
    fn single_tree_memorizes_separable_clusters() {
        // separated along every feature, so any candidate split works
        let (mut x, y) = blobs(60, 0.0, 1);
        for (r, l) in x.iter_mut().zip(&y) {
            if *l == ActivityLabel::VideoWatching {
                r.iter_mut().for_each(|v| *v += 20.0);
            }
        }
        let p = ForestParams { n_trees: 1, ..ForestParams::default() };
        let m = train_forest(&x, &y, &p, 4, Exec::Sequential).unwrap();
        assert_eq!(accuracy(&m, &x, &y), 1.0);
        m.trees[0].check().unwrap();
    }

    #[test]
    fn same_seed_same_forest_in_both_modes() {
        let (x, y) = blobs(80, 1.0, 2);
        let p = ForestParams { n_trees: 15, ..ForestParams::default() };
        let a = train_forest(&x, &y, &p, 5, Exec::Sequential).unwrap();
        let b = train_forest(&x, &y, &p, 5, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        let c = train_forest(&x, &y, &p, 6, Exec::Sequential).unwrap();
        assert_ne!(a.trees, c.trees);
    }

    #[test]
    fn single_class_is_rejected() {
        let (x, _) = blobs(10, 1.0, 3);
        let y = vec![ActivityLabel::Reading; 10];
        assert!(matches!(train_forest(&x, &y, &ForestParams::default(), 1, Exec::Sequential), Err(Error::Training(_))));
    }

    #[test]
    fn vote_ties_go_to_reading() {
        let leaf = |c| Tree { nodes: vec![Node::Leaf { counts: c }] };
        let m = ForestModel {
            trees: vec![leaf([3, 0]), leaf([0, 3])],
            params: ForestParams::default(),
            seed: 0,
            oob_accuracy: None,
        };
        assert_eq!(m.predict_votes(&[0.0; N_FEATURES]), (ActivityLabel::Reading, 0.5));
        let m = ForestModel { trees: vec![leaf([0, 2]), leaf([1, 4])], ..m };
        assert_eq!(m.predict_votes(&[0.0; N_FEATURES]), (ActivityLabel::VideoWatching, 1.0));
        assert_eq!(leaf([2, 2]).predict(&[0.0; N_FEATURES]), ActivityLabel::Reading);
    }

    #[test]
    fn monotone_feature_transform_keeps_predictions() {
        let (x, y) = blobs(120, 1.0, 7);
        let (probe, _) = blobs(60, 1.0, 8);
        let warp = |r: &FeatureRow| -> FeatureRow { std::array::from_fn(|j| if j % 2 == 0 { r[j].exp() } else { 3.0 * r[j] - 7.0 }) };
        let p = ForestParams { n_trees: 25, ..ForestParams::default() };
        let a = train_forest(&x, &y, &p, 11, Exec::Sequential).unwrap();
        let xw: Vec<FeatureRow> = x.iter().map(warp).collect();
        let b = train_forest(&xw, &y, &p, 11, Exec::Sequential).unwrap();
        for r in &probe {
            assert_eq!(a.predict_votes(r), b.predict_votes(&warp(r)));
        }
    }

    #[test]
    fn oob_accuracy_tracks_holdout() {
        let (x, y) = blobs(400, 1.2, 12);
        let (hx, hy) = blobs(2000, 1.2, 13);
        let p = ForestParams { n_trees: 101, ..ForestParams::default() };
        let m = train_forest(&x, &y, &p, 3, Exec::default()).unwrap();
        let oob = m.oob_accuracy.unwrap();
        let held = accuracy(&m, &hx, &hy);
        assert!((oob - held).abs() <= 0.05, "oob {oob} held-out {held}");
    }
}
