//! Feature extraction: three scorer families assembled into one vector in
//! registry order.

pub mod hate;
pub mod registry;
pub mod sentiment;
pub mod toxicity;

use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;

use crate::error::{Error, Result, ScorerError};
use crate::textprep::CleanText;

pub use hate::{
    load_hate_corpus, parse_hate_corpus, train_hate_scorer, HateClass, HateClassScores, HateExample, HateModel,
    HateScorer, HateTrainParams,
};
pub use registry::{Family, FeatureRegistry, HATE_FEATURES, SENTIMENT_FEATURES, TOXICITY_ATTRIBUTES, TRIGGER_FEATURE};
pub use sentiment::{score_sentiment, SentimentAnalyzer, SentimentScores};
pub use toxicity::{
    score_toxicity, AttributeScores, HttpToxicityClient, MockRule, MockRules, RetryPolicy, RuleToxicityScorer,
    ScoreRequest, ScoreResponse, ToxicityScorer, API_KEY_HEADER, SCORE_PATH,
};

pub const DEFAULT_FAMILY_TIMEOUT: Duration = Duration::from_secs(2);

/// Feature values laid out by `registry`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    #[serde(skip)]
    pub registry: Arc<FeatureRegistry>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, registry: Arc<FeatureRegistry>) -> Result<Self> {
        if values.len() != registry.len() {
            return Err(Error::DimensionMismatch {
                expected: registry.len(),
                got: values.len(),
            });
        }
        for (name, &v) in registry.names().iter().zip(&values) {
            let (lo, hi) = FeatureRegistry::range_of(name);
            if !(lo..=hi).contains(&v) {
                return Err(Error::OutOfRange {
                    what: "feature value",
                    value: v,
                    lo,
                    hi,
                });
            }
        }
        Ok(Self { values, registry })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.registry.index_of(name).map(|i| self.values[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// The scorers available for featurization. Families the registry does not
/// use may be left out.
#[derive(Clone)]
pub struct ScorerSet {
    pub toxicity: Option<Arc<dyn ToxicityScorer>>,
    pub hate: Option<Arc<dyn HateScorer>>,
    pub sentiment: Arc<SentimentAnalyzer>,
    pub timeout: Duration,
}

impl ScorerSet {
    pub fn new(toxicity: Option<Arc<dyn ToxicityScorer>>, hate: Option<Arc<dyn HateScorer>>) -> Self {
        Self {
            toxicity,
            hate,
            sentiment: Arc::new(SentimentAnalyzer::bundled()),
            timeout: DEFAULT_FAMILY_TIMEOUT,
        }
    }
}

fn family_error(family: Family, source: ScorerError) -> Error {
    Error::Scorer {
        family: family.as_str(),
        source,
    }
}

async fn with_timeout<T>(
    family: Family,
    limit: Duration,
    fut: impl std::future::Future<Output = std::result::Result<T, ScorerError>>,
) -> Result<T> {
    match tokio::time::timeout(limit, fut).await {
        Ok(r) => r.map_err(|e| family_error(family, e)),
        Err(_) => Err(family_error(family, ScorerError::Timeout(limit))),
    }
}

/// Scores `text` with every family the registry needs, concurrently, and
/// lays the results out in registry order. Only text is accepted: author and
/// account fields never reach the feature vector.
pub async fn featurize(
    text: &CleanText,
    registry: &Arc<FeatureRegistry>,
    scorers: &ScorerSet,
) -> Result<FeatureVector> {
    let need_tox = registry.contains_family(Family::Toxicity);
    let need_hate = registry.contains_family(Family::Hate);
    let need_sent = registry.contains_family(Family::Sentiment);
    let limit = scorers.timeout;

    let tox = async {
        if !need_tox {
            return Ok(None);
        }
        let scorer = scorers.toxicity.as_ref().ok_or_else(|| {
            family_error(
                Family::Toxicity,
                ScorerError::Malformed("no toxicity scorer configured".into()),
            )
        })?;
        let attrs = registry.toxicity_attributes();
        with_timeout(Family::Toxicity, limit, score_toxicity(scorer.as_ref(), text, &attrs))
            .await
            .map(Some)
    };
    let hate = async {
        if !need_hate {
            return Ok(None);
        }
        let scorer = scorers
            .hate
            .as_ref()
            .ok_or_else(|| family_error(Family::Hate, ScorerError::Training("no hate scorer configured".into())))?;
        with_timeout(Family::Hate, limit, async { Ok(scorer.score(text.as_str())) })
            .await
            .map(Some)
    };
    let sent = async {
        if !need_sent {
            return Ok(None);
        }
        with_timeout(Family::Sentiment, limit, async {
            Ok(scorers.sentiment.polarity_scores(text.as_str()))
        })
        .await
        .map(Some)
    };
    let (tox, hate, sent) = tokio::join!(tox, hate, sent);
    let (tox, hate, sent) = (tox?, hate?, sent?);

    let values = registry
        .names()
        .iter()
        .map(|name| match Family::of(name) {
            Family::Toxicity => tox.as_ref().expect("scored")[name],
            Family::Hate => {
                let h = hate.expect("scored");
                match name.as_str() {
                    "sonar_hate_speech" => h.hate,
                    "sonar_offensive_language" => h.offensive,
                    _ => h.neither,
                }
            }
            Family::Sentiment => {
                let s = sent.expect("scored");
                match name.as_str() {
                    "vader_neg" => s.neg,
                    "vader_neu" => s.neu,
                    "vader_pos" => s.pos,
                    _ => s.compound,
                }
            }
        })
        .collect();
    FeatureVector::new(values, registry.clone())
}
