//! Binary gradient-boosted decision trees on logistic loss, plus the
//! single-feature threshold rule used in deployment.
//!
//! Each round fits one tree to the gradients `g = p - y` and hessians
//! `h = p(1 - p)`. Trees grow leaf-wise: the leaf whose best split has the
//! highest gain is expanded until `max_leaves` is reached or no split gains
//! more than `min_gain`. Splits are exact, enumerated over midpoints
//! between consecutive distinct feature values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::scorers::{FeatureRegistry, FeatureVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub num_trees: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub min_samples_leaf: usize,
    pub l2_lambda: f64,
    pub min_gain: f64,
    /// Recorded with sweep results; training itself draws no random numbers.
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            num_trees: 100,
            learning_rate: 0.1,
            max_leaves: 31,
            min_samples_leaf: 20,
            l2_lambda: 1.0,
            min_gain: 0.0,
            seed: 0,
        }
    }
}

impl TrainParams {
    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.max_leaves < 1 {
            return bad("max_leaves must be at least 1");
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf must be at least 1");
        }
        if !(self.l2_lambda >= 0.0) || !(self.min_gain >= 0.0) {
            return bad("l2_lambda and min_gain must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature_index: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

/// Node arena; the root is `nodes[0]`. Rows with `x[feature] <= threshold`
/// go left.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(weight: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { weight }],
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { weight } => return weight,
                Node::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => at = if row[feature_index] <= threshold { left } else { right },
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes[0] {
            Node::Split {
                feature_index,
                threshold,
                ..
            } => Some((feature_index, threshold)),
            Node::Leaf { .. } => None,
        }
    }

    fn to_json(&self, at: usize) -> NodeJson {
        match self.nodes[at] {
            Node::Leaf { weight } => NodeJson::Leaf { weight },
            Node::Split {
                feature_index,
                threshold,
                left,
                right,
            } => NodeJson::Split {
                feature_index,
                threshold,
                left: Box::new(self.to_json(left)),
                right: Box::new(self.to_json(right)),
            },
        }
    }

    fn from_json(json: &NodeJson) -> Self {
        fn push(nodes: &mut Vec<Node>, json: &NodeJson) -> usize {
            let at = nodes.len();
            match json {
                NodeJson::Leaf { weight } => nodes.push(Node::Leaf { weight: *weight }),
                NodeJson::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => {
                    nodes.push(Node::Leaf { weight: 0.0 });
                    let l = push(nodes, left);
                    let r = push(nodes, right);
                    nodes[at] = Node::Split {
                        feature_index: *feature_index,
                        threshold: *threshold,
                        left: l,
                        right: r,
                    };
                }
            }
            at
        }
        let mut nodes = Vec::new();
        push(&mut nodes, json);
        Self { nodes }
    }
}

/// Nested JSON form of a tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum NodeJson {
    Split {
        feature_index: usize,
        threshold: f64,
        left: Box<NodeJson>,
        right: Box<NodeJson>,
    },
    Leaf {
        weight: f64,
    },
}

impl Serialize for Tree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json(0).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Tree {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Tree::from_json(&NodeJson::deserialize(d)?))
    }
}

/// `sigmoid(base_score + learning_rate * sum(tree outputs))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub registry: FeatureRegistry,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl Ensemble {
    pub fn raw_score(&self, row: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    /// Probability for a row laid out by `self.registry`. Always in (0, 1)
    /// for finite input, though it may round to an endpoint in f64.
    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.registry.len() {
            return Err(Error::DimensionMismatch {
                expected: self.registry.len(),
                got: row.len(),
            });
        }
        Ok(sigmoid(self.raw_score(row)))
    }

    pub fn predict_dataset(&self, ds: &FeatureDataset) -> Result<Vec<f64>> {
        (0..ds.len()).map(|i| self.predict_row(ds.row(i))).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Ensemble = serde_json::from_str(&text)?;
        for tree in &model.trees {
            for node in &tree.nodes {
                if let Node::Split { feature_index, .. } = node {
                    if *feature_index >= model.registry.len() {
                        return Err(Error::InvalidArgument(format!(
                            "feature_index {feature_index} outside registry of {}",
                            model.registry.len()
                        )));
                    }
                }
            }
        }
        Ok(model)
    }
}

/// Probability for a feature vector; its registry must equal the model's.
pub fn predict(ensemble: &Ensemble, fv: &FeatureVector) -> Result<f64> {
    if *fv.registry != ensemble.registry {
        return Err(Error::DimensionMismatch {
            expected: ensemble.registry.len(),
            got: fv.len(),
        });
    }
    ensemble.predict_row(&fv.values)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Mean logistic loss of raw scores against labels.
pub fn logistic_loss(raw: &[f64], labels: &[Label]) -> f64 {
    let total: f64 = raw
        .iter()
        .zip(labels)
        .map(|(&f, l)| {
            // log(1 + e^f) - y f, computed stably
            let softplus = if f > 0.0 {
                f + (-f).exp().ln_1p()
            } else {
                f.exp().ln_1p()
            };
            softplus - if l.is_positive() { f } else { 0.0 }
        })
        .sum();
    total / raw.len() as f64
}

/// Respond iff `toxicity >= theta`; both must lie in [0, 1].
pub fn threshold_decide(toxicity: f64, theta: f64) -> Result<bool> {
    for (what, v) in [("toxicity", toxicity), ("theta", theta)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange {
                what,
                value: v,
                lo: 0.0,
                hi: 1.0,
            });
        }
    }
    Ok(toxicity >= theta)
}

/// Best split found for one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature_index: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Split gain `0.5 * (GL²/(HL+λ) + GR²/(HR+λ) - G²/(H+λ))`.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr))
}

/// Leaf weight `-G / (H + λ)`.
pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    let w = -g / (h + lambda);
    if w.is_finite() {
        w
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training loss at the prior and after each round.
    pub losses: Vec<f64>,
}

pub fn train(ds: &FeatureDataset, params: &TrainParams) -> Result<Ensemble> {
    train_with_report(ds, params).map(|(m, _)| m)
}

pub fn train_with_report(ds: &FeatureDataset, params: &TrainParams) -> Result<(Ensemble, TrainReport)> {
    params.validate()?;
    let n = ds.len();
    let d = ds.n_features();
    let pos = ds.count(Label::Hateful);
    if pos == 0 {
        return Err(Error::SingleClass(Label::NotHateful.as_str()));
    }
    if pos == n {
        return Err(Error::SingleClass(Label::Hateful.as_str()));
    }
    if let Some(i) = (0..n).find(|&i| ds.row(i).iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite(i));
    }

    let prior = pos as f64 / n as f64;
    let base_score = (prior / (1.0 - prior)).ln();
    let y: Vec<f64> = ds
        .labels()
        .iter()
        .map(|l| if l.is_positive() { 1.0 } else { 0.0 })
        .collect();
    let mut raw = vec![base_score; n];
    let mut losses = vec![logistic_loss(&raw, ds.labels())];

    let presorted: Vec<Vec<u32>> = (0..d)
        .map(|f| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| ds.row(a as usize)[f].total_cmp(&ds.row(b as usize)[f]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.num_trees);
    for _ in 0..params.num_trees {
        for i in 0..n {
            let p = sigmoid(raw[i]);
            grad[i] = p - y[i];
            hess[i] = p * (1.0 - p);
        }
        let tree = grow_tree(ds, &presorted, &grad, &hess, params);
        for (i, r) in raw.iter_mut().enumerate() {
            *r += params.learning_rate * tree.predict(ds.row(i));
        }
        losses.push(logistic_loss(&raw, ds.labels()));
        trees.push(tree);
    }

    Ok((
        Ensemble {
            registry: (**ds.registry()).clone(),
            base_score,
            learning_rate: params.learning_rate,
            trees,
        },
        TrainReport { losses },
    ))
}

struct GrowingLeaf {
    node: usize,
    /// Member rows sorted by each feature.
    sorted: Vec<Vec<u32>>,
    g: f64,
    h: f64,
    best: Option<SplitCandidate>,
}

/// Gains this close count as equal, so that a split choice never hinges on
/// floating-point summation order. Earlier features and lower thresholds win
/// ties.
pub const GAIN_TIE_TOLERANCE: f64 = 1e-10;

fn beats(gain: f64, incumbent: f64) -> bool {
    gain > incumbent + GAIN_TIE_TOLERANCE * incumbent.abs().max(1e-4)
}

/// Best split of the rows in `sorted` (each list ordered by its feature).
fn find_best_split(
    ds: &FeatureDataset,
    sorted: &[Vec<u32>],
    grad: &[f64],
    hess: &[f64],
    g_total: f64,
    h_total: f64,
    params: &TrainParams,
) -> Option<SplitCandidate> {
    let mut best: Option<SplitCandidate> = None;
    for (f, rows) in sorted.iter().enumerate() {
        let n = rows.len();
        if n < 2 * params.min_samples_leaf {
            continue;
        }
        let (mut gl, mut hl) = (0.0, 0.0);
        for p in 0..n - 1 {
            let r = rows[p] as usize;
            gl += grad[r];
            hl += hess[r];
            let left_n = p + 1;
            if left_n < params.min_samples_leaf || n - left_n < params.min_samples_leaf {
                continue;
            }
            let here = ds.row(r)[f];
            let next = ds.row(rows[p + 1] as usize)[f];
            if next <= here {
                continue;
            }
            let gain = split_gain(gl, hl, g_total - gl, h_total - hl, params.l2_lambda);
            if best.is_none_or(|b| beats(gain, b.gain)) {
                let mut threshold = 0.5 * (here + next);
                if threshold >= next {
                    threshold = here;
                }
                best = Some(SplitCandidate {
                    feature_index: f,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

/// Best root split for the given gradients, as the tree grower would pick it.
pub fn best_root_split(
    ds: &FeatureDataset,
    grad: &[f64],
    hess: &[f64],
    params: &TrainParams,
) -> Option<SplitCandidate> {
    let sorted: Vec<Vec<u32>> = (0..ds.n_features())
        .map(|f| {
            let mut idx: Vec<u32> = (0..ds.len() as u32).collect();
            idx.sort_by(|&a, &b| ds.row(a as usize)[f].total_cmp(&ds.row(b as usize)[f]).then(a.cmp(&b)));
            idx
        })
        .collect();
    find_best_split(ds, &sorted, grad, hess, grad.iter().sum(), hess.iter().sum(), params)
}

fn grow_tree(ds: &FeatureDataset, presorted: &[Vec<u32>], grad: &[f64], hess: &[f64], params: &TrainParams) -> Tree {
    let g: f64 = grad.iter().sum();
    let h: f64 = hess.iter().sum();
    let sorted = presorted.to_vec();
    let best = find_best_split(ds, &sorted, grad, hess, g, h, params);
    let mut nodes = vec![Node::Leaf { weight: 0.0 }];
    let mut leaves = vec![GrowingLeaf {
        node: 0,
        sorted,
        g,
        h,
        best,
    }];
    let mut goes_left = vec![false; ds.len()];

    while leaves.len() < params.max_leaves {
        let pick = leaves
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.best.filter(|b| b.gain > params.min_gain).map(|b| (i, b.gain)))
            .fold(None::<(usize, f64)>, |acc, (i, gain)| match acc {
                Some((_, g)) if g >= gain => acc,
                _ => Some((i, gain)),
            });
        let Some((i, _)) = pick else { break };
        let leaf = leaves.remove(i);
        let split = leaf.best.expect("picked leaf has a split");

        for &r in &leaf.sorted[0] {
            goes_left[r as usize] = ds.row(r as usize)[split.feature_index] <= split.threshold;
        }
        let mut left_sorted = Vec::with_capacity(leaf.sorted.len());
        let mut right_sorted = Vec::with_capacity(leaf.sorted.len());
        for rows in &leaf.sorted {
            let (l, r): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&r| goes_left[r as usize]);
            left_sorted.push(l);
            right_sorted.push(r);
        }
        let sums = |rows: &[u32]| {
            rows.iter()
                .fold((0.0, 0.0), |(g, h), &r| (g + grad[r as usize], h + hess[r as usize]))
        };
        let (gl, hl) = sums(&left_sorted[0]);
        let (gr, hr) = (leaf.g - gl, leaf.h - hl);

        let left_node = nodes.len();
        nodes.push(Node::Leaf { weight: 0.0 });
        nodes.push(Node::Leaf { weight: 0.0 });
        nodes[leaf.node] = Node::Split {
            feature_index: split.feature_index,
            threshold: split.threshold,
            left: left_node,
            right: left_node + 1,
        };
        let lb = find_best_split(ds, &left_sorted, grad, hess, gl, hl, params);
        let rb = find_best_split(ds, &right_sorted, grad, hess, gr, hr, params);
        // children take the parent's place so equal gains resolve left to right
        leaves.insert(
            i,
            GrowingLeaf {
                node: left_node + 1,
                sorted: right_sorted,
                g: gr,
                h: hr,
                best: rb,
            },
        );
        leaves.insert(
            i,
            GrowingLeaf {
                node: left_node,
                sorted: left_sorted,
                g: gl,
                h: hl,
                best: lb,
            },
        );
    }

    for leaf in leaves {
        nodes[leaf.node] = Node::Leaf {
            weight: leaf_weight(leaf.g, leaf.h, params.l2_lambda),
        };
    }
    Tree { nodes }
}
