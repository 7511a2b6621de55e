//! Three-class hate / offensive / neither scorer: multinomial logistic
//! regression over L2-normalised TF-IDF unigrams of cleaned text.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ScorerError};
use crate::textprep::clean;

static TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[a-z0-9']+").unwrap());

const DEMO_CORPUS: &str = include_str!("../../data/hate_demo.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HateClass {
    Hate,
    Offensive,
    Neither,
}

impl HateClass {
    pub const ALL: [HateClass; 3] = [HateClass::Hate, HateClass::Offensive, HateClass::Neither];

    fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for HateClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "hate" => Ok(HateClass::Hate),
            "offensive" => Ok(HateClass::Offensive),
            "neither" => Ok(HateClass::Neither),
            other => Err(Error::InvalidArgument(format!("unknown hate class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HateClassScores {
    pub hate: f64,
    pub offensive: f64,
    pub neither: f64,
    /// Set when the scores came from an untrained model (uniform prior).
    #[serde(default)]
    pub untrained: bool,
}

impl HateClassScores {
    pub fn as_array(&self) -> [f64; 3] {
        [self.hate, self.offensive, self.neither]
    }

    pub fn argmax(&self) -> HateClass {
        let a = self.as_array();
        let mut best = 0;
        for k in 1..3 {
            if a[k] > a[best] {
                best = k;
            }
        }
        HateClass::ALL[best]
    }
}

/// Anything that produces three-class hate scores for a cleaned text.
pub trait HateScorer: Send + Sync {
    fn score(&self, clean_text: &str) -> HateClassScores;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HateTrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for HateTrainParams {
    fn default() -> Self {
        Self {
            epochs: 400,
            learning_rate: 2.0,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HateExample {
    pub text: String,
    pub class: HateClass,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HateModel {
    vocabulary: BTreeMap<String, usize>,
    idf: Vec<f64>,
    /// One row of weights per class, `vocabulary.len()` columns each.
    weights: Vec<Vec<f64>>,
    bias: [f64; 3],
    trained: bool,
}

type SparseVec = Vec<(usize, f64)>;

fn tokens(clean_text: &str) -> impl Iterator<Item = String> + '_ {
    TOKEN.find_iter(clean_text).map(|m| m.as_str().to_string())
}

impl HateModel {
    /// A model with no weights; scores every text uniformly.
    pub fn untrained() -> Self {
        Self::default()
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn vocabulary_len(&self) -> usize {
        self.vocabulary.len()
    }

    /// Model trained on the small demonstration corpus shipped in `data/`.
    pub fn demo() -> Self {
        let examples = parse_hate_corpus(DEMO_CORPUS).expect("bundled demo corpus parses");
        train_hate_scorer(&examples, &HateTrainParams::default()).expect("demo corpus trains")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    fn vectorize(&self, clean_text: &str) -> SparseVec {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for tok in tokens(clean_text) {
            if let Some(&j) = self.vocabulary.get(&tok) {
                *counts.entry(j).or_default() += 1.0;
            }
        }
        let mut v: SparseVec = counts.into_iter().map(|(j, tf)| (j, tf * self.idf[j])).collect();
        v.sort_by_key(|&(j, _)| j);
        let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, x) in &mut v {
                *x /= norm;
            }
        }
        v
    }

    fn probabilities(&self, x: &SparseVec) -> [f64; 3] {
        let mut logits = self.bias;
        for (k, logit) in logits.iter_mut().enumerate() {
            *logit += x.iter().map(|&(j, v)| self.weights[k][j] * v).sum::<f64>();
        }
        softmax(logits)
    }
}

impl HateScorer for HateModel {
    fn score(&self, clean_text: &str) -> HateClassScores {
        if !self.trained {
            tracing::warn!("scoring with an untrained hate model; returning uniform scores");
            return HateClassScores {
                hate: 1.0 / 3.0,
                offensive: 1.0 / 3.0,
                neither: 1.0 / 3.0,
                untrained: true,
            };
        }
        let [hate, offensive, neither] = self.probabilities(&self.vectorize(clean_text));
        HateClassScores {
            hate,
            offensive,
            neither,
            untrained: false,
        }
    }
}

fn softmax(logits: [f64; 3]) -> [f64; 3] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.map(|l| (l - max).exp());
    let total: f64 = exps.iter().sum();
    exps.map(|e| e / total)
}

/// Full-batch gradient descent on softmax cross-entropy with L2 penalty.
/// Texts are cleaned before tokenization.
pub fn train_hate_scorer(examples: &[HateExample], params: &HateTrainParams) -> Result<HateModel> {
    for class in HateClass::ALL {
        if !examples.iter().any(|e| e.class == class) {
            return Err(Error::Scorer {
                family: "hate",
                source: ScorerError::Training(format!("no examples of class {class:?}")),
            });
        }
    }
    let cleaned: Vec<String> = examples.iter().map(|e| clean(&e.text).into_string()).collect();

    let mut vocabulary = BTreeMap::new();
    let mut df: Vec<f64> = Vec::new();
    for text in &cleaned {
        let mut seen = std::collections::HashSet::new();
        for tok in tokens(text) {
            let next = vocabulary.len();
            let j = *vocabulary.entry(tok).or_insert(next);
            if j == df.len() {
                df.push(0.0);
            }
            if seen.insert(j) {
                df[j] += 1.0;
            }
        }
    }
    let n = examples.len() as f64;
    let idf: Vec<f64> = df.iter().map(|d| ((1.0 + n) / (1.0 + d)).ln() + 1.0).collect();

    let mut model = HateModel {
        weights: vec![vec![0.0; vocabulary.len()]; 3],
        vocabulary,
        idf,
        bias: [0.0; 3],
        trained: true,
    };
    let xs: Vec<SparseVec> = cleaned.iter().map(|t| model.vectorize(t)).collect();

    for _ in 0..params.epochs {
        let mut grad_w = vec![vec![0.0; model.vocabulary.len()]; 3];
        let mut grad_b = [0.0; 3];
        for (x, ex) in xs.iter().zip(examples) {
            let p = model.probabilities(x);
            for k in 0..3 {
                let err = p[k] - if ex.class.index() == k { 1.0 } else { 0.0 };
                grad_b[k] += err;
                for &(j, v) in x {
                    grad_w[k][j] += err * v;
                }
            }
        }
        for k in 0..3 {
            model.bias[k] -= params.learning_rate * grad_b[k] / n;
            for j in 0..model.vocabulary.len() {
                let g = grad_w[k][j] / n + params.l2 * model.weights[k][j];
                model.weights[k][j] -= params.learning_rate * g;
            }
        }
    }
    Ok(model)
}

/// Parses `text,class` CSV with class in {hate, offensive, neither}.
pub fn parse_hate_corpus(csv_text: &str) -> Result<Vec<HateExample>> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let class = record.get(1).unwrap_or("").parse().map_err(|e: Error| Error::BadRow {
            row: i + 2,
            message: e.to_string(),
        })?;
        out.push(HateExample {
            text: record.get(0).unwrap_or("").to_string(),
            class,
        });
    }
    Ok(out)
}

pub fn load_hate_corpus(path: impl AsRef<Path>) -> Result<Vec<HateExample>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_hate_corpus(&text)
}
