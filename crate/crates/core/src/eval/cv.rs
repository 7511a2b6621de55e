use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::balance::{self, BalancerConfig};
use crate::corpus::Label;
use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::gbdt::{self, TrainParams};
use crate::par::{self, ExecMode};

use super::auc::auc;

/// Something that can be fitted on one dataset and score another.
pub trait Learner: Send + Sync {
    fn id(&self) -> String;

    /// Scores for each row of `test`, higher meaning more likely hateful.
    fn fit_predict(&self, train: &FeatureDataset, test: &FeatureDataset, seed: u64) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GbdtLearner {
    pub params: TrainParams,
}

impl Learner for GbdtLearner {
    fn id(&self) -> String {
        let p = &self.params;
        format!(
            "gbdt(trees={},lr={},leaves={})",
            p.num_trees, p.learning_rate, p.max_leaves
        )
    }

    fn fit_predict(&self, train: &FeatureDataset, test: &FeatureDataset, _seed: u64) -> Result<Vec<f64>> {
        gbdt::train(train, &self.params)?.predict_dataset(test)
    }
}

/// Predicts hateful with probability equal to the training prior,
/// ignoring features.
#[derive(Debug, Clone, Copy, Default)]
pub struct StratifiedRandomLearner;

impl Learner for StratifiedRandomLearner {
    fn id(&self) -> String {
        "stratified_random".to_string()
    }

    fn fit_predict(&self, train: &FeatureDataset, test: &FeatureDataset, seed: u64) -> Result<Vec<f64>> {
        if train.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        let prior = train.count(Label::Hateful) as f64 / train.len() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..test.len())
            .map(|_| if rng.random::<f64>() < prior { 1.0 } else { 0.0 })
            .collect())
    }
}

/// Fold assignment for every row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Folds {
    pub k: usize,
    pub assignment: Vec<usize>,
}

impl Folds {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }
}

/// Shuffle each class with the seed, then deal its rows round-robin over
/// the folds, so per-class fold sizes differ by at most one.
pub fn stratified_folds(labels: &[Label], k: usize, seed: u64) -> Result<Folds> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut offset = 0;
    for class in [Label::NotHateful, Label::Hateful] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::ClassSmallerThanK {
                class: class.as_str(),
                count: members.len(),
                k,
            });
        }
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            assignment[i] = (j + offset) % k;
        }
        // continue the deal where the previous class stopped, keeping totals even
        offset = (offset + members.len()) % k;
    }
    Ok(Folds { k, assignment })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
    /// Resampling of each training portion; `None` trains on it as is.
    pub balance: Option<BalancerConfig>,
    pub mode: ExecMode,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k: 10,
            seed: 0,
            balance: Some(BalancerConfig::default()),
            mode: ExecMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub model: String,
    pub feature_set: String,
    pub fold_aucs: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation of `fold_aucs`.
    pub std: f64,
}

impl CvReport {
    pub fn from_folds(model: impl Into<String>, feature_set: impl Into<String>, fold_aucs: Vec<f64>) -> Self {
        let n = fold_aucs.len() as f64;
        let mean = fold_aucs.iter().sum::<f64>() / n;
        let std = if fold_aucs.len() > 1 {
            (fold_aucs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            model: model.into(),
            feature_set: feature_set.into(),
            fold_aucs,
            mean,
            std,
        }
    }
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn kfold_cv(ds: &FeatureDataset, config: &CvConfig, learner: &dyn Learner, feature_set: &str) -> Result<CvReport> {
    let folds = stratified_folds(ds.labels(), config.k, config.seed)?;
    cv_on_folds(ds, &folds, config, learner, feature_set)
}

/// Cross-validate on a given fold assignment. Folds run concurrently in
/// parallel mode; results are identical either way.
pub fn cv_on_folds(
    ds: &FeatureDataset,
    folds: &Folds,
    config: &CvConfig,
    learner: &dyn Learner,
    feature_set: &str,
) -> Result<CvReport> {
    if folds.assignment.len() != ds.len() {
        return Err(Error::DimensionMismatch {
            expected: ds.len(),
            got: folds.assignment.len(),
        });
    }
    let aucs = par::map_indices(config.mode, folds.k, |fold| -> Result<f64> {
        let seed = fold_seed(config.seed, fold);
        let test = ds.subset(&folds.test_indices(fold));
        let mut train = ds.subset(&folds.train_indices(fold));
        if let Some(b) = config.balance {
            let b = BalancerConfig {
                seed,
                mode: config.mode,
                ..b
            };
            train = balance::adasyn(&train, &b)?.dataset;
        }
        let scores = learner.fit_predict(&train, &test, seed)?;
        let pairs: Vec<(f64, Label)> = scores.into_iter().zip(test.labels().iter().copied()).collect();
        auc(&pairs)
    });
    let aucs = aucs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(CvReport::from_folds(learner.id(), feature_set, aucs))
}

pub const FOLD_CSV_HEADER: [&str; 4] = ["model", "feature_set", "fold", "auc"];
pub const SUMMARY_CSV_HEADER: [&str; 5] = ["model", "feature_set", "k", "mean_auc", "std_auc"];

/// One row per (report, fold).
pub fn write_fold_csv<W: Write>(reports: &[CvReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(FOLD_CSV_HEADER)?;
    for r in reports {
        for (i, a) in r.fold_aucs.iter().enumerate() {
            w.write_record([r.model.as_str(), r.feature_set.as_str(), &i.to_string(), &a.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// One row per report.
pub fn write_summary_csv<W: Write>(reports: &[CvReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_CSV_HEADER)?;
    for r in reports {
        w.write_record([
            r.model.as_str(),
            r.feature_set.as_str(),
            &r.fold_aucs.len().to_string(),
            &r.mean.to_string(),
            &r.std.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}
