//! Client side of the toxicity scoring protocol plus a rule-driven scorer
//! used as a deterministic stand-in for the remote service.
//!
//! Wire format: `POST /v1/score` with `{"text", "attributes"}`, answered by
//! `{"scores": {attribute: probability}}`. A 200 is only sent for complete
//! score sets.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use async_trait::async_trait;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ScorerError};
use crate::textprep::CleanText;

pub const SCORE_PATH: &str = "/v1/score";
pub const API_KEY_HEADER: &str = "x-api-key";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub text: String,
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: BTreeMap<String, f64>,
}

/// One probability per requested attribute.
pub type AttributeScores = BTreeMap<String, f64>;

#[async_trait]
pub trait ToxicityScorer: Send + Sync {
    /// Raw scores as returned by the backend; validation happens in
    /// [`score_toxicity`].
    async fn score(&self, text: &str, attributes: &[String]) -> std::result::Result<AttributeScores, ScorerError>;
}

/// Scores `text` and checks that the result is a complete set of
/// probabilities for `attributes`. Extra attributes in the reply are dropped.
pub async fn score_toxicity(
    scorer: &dyn ToxicityScorer,
    text: &CleanText,
    attributes: &[String],
) -> std::result::Result<AttributeScores, ScorerError> {
    if text.as_str().trim().is_empty() {
        return Err(ScorerError::EmptyText);
    }
    let raw = scorer.score(text.as_str(), attributes).await?;
    let mut out = AttributeScores::new();
    for attr in attributes {
        let value = *raw
            .get(attr)
            .ok_or_else(|| ScorerError::MissingAttribute(attr.clone()))?;
        if !(0.0..=1.0).contains(&value) {
            return Err(ScorerError::OutOfRange {
                attribute: attr.clone(),
                value,
            });
        }
        out.insert(attr.clone(), value);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(100),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based): base * 2^(attempt-1).
    pub fn backoff(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt.saturating_sub(1))
    }
}

/// HTTP client for the scoring endpoint. Cheap to clone; clones share one
/// bounded connection pool.
#[derive(Debug, Clone)]
pub struct HttpToxicityClient {
    client: reqwest::Client,
    url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl HttpToxicityClient {
    /// `base_url` is the service root, e.g. `http://127.0.0.1:8081`.
    pub fn new(base_url: &str, api_key: Option<String>) -> Result<Self> {
        let client = reqwest::Client::builder()
            .pool_max_idle_per_host(16)
            .timeout(Duration::from_secs(10))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("http client: {e}")))?;
        Ok(Self {
            client,
            url: format!("{}{}", base_url.trim_end_matches('/'), SCORE_PATH),
            api_key,
            retry: RetryPolicy::default(),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    async fn attempt(&self, body: &ScoreRequest) -> std::result::Result<AttributeScores, Attempt> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.header(API_KEY_HEADER, key);
        }
        let resp = req.send().await.map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS {
            return Err(Attempt::Retry(format!("status {status}")));
        }
        let bytes = resp.bytes().await.map_err(|e| Attempt::Retry(e.to_string()))?;
        if !status.is_success() {
            return Err(Attempt::Fatal(ScorerError::Malformed(format!(
                "status {status}: {}",
                String::from_utf8_lossy(&bytes)
            ))));
        }
        let parsed: ScoreResponse =
            serde_json::from_slice(&bytes).map_err(|e| Attempt::Fatal(ScorerError::Malformed(e.to_string())))?;
        Ok(parsed.scores)
    }
}

enum Attempt {
    Retry(String),
    Fatal(ScorerError),
}

#[async_trait]
impl ToxicityScorer for HttpToxicityClient {
    async fn score(&self, text: &str, attributes: &[String]) -> std::result::Result<AttributeScores, ScorerError> {
        let body = ScoreRequest {
            text: text.to_string(),
            attributes: attributes.to_vec(),
        };
        let mut last = String::new();
        for attempt in 1..=self.retry.max_attempts {
            match self.attempt(&body).await {
                Ok(scores) => return Ok(scores),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    tracing::debug!(attempt, error = %msg, "toxicity request failed");
                    last = msg;
                    if attempt < self.retry.max_attempts {
                        tokio::time::sleep(self.retry.backoff(attempt)).await;
                    }
                }
            }
        }
        Err(ScorerError::Transport {
            attempts: self.retry.max_attempts,
            message: last,
        })
    }
}

/// Rules file for the deterministic scorer: the first rule whose pattern
/// matches the text supplies its scores, and any attribute a rule omits
/// falls back to `default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRules {
    pub default: BTreeMap<String, f64>,
    #[serde(default)]
    pub rules: Vec<MockRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    pub pattern: String,
    pub scores: BTreeMap<String, f64>,
}

impl MockRules {
    /// Every default attribute at `value`, no rules.
    pub fn uniform(attributes: &[String], value: f64) -> Self {
        Self {
            default: attributes.iter().map(|a| (a.clone(), value)).collect(),
            rules: Vec::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct RuleToxicityScorer {
    default: BTreeMap<String, f64>,
    rules: Vec<(Regex, BTreeMap<String, f64>)>,
}

impl RuleToxicityScorer {
    pub fn new(rules: MockRules) -> Result<Self> {
        let compiled = rules
            .rules
            .into_iter()
            .map(|r| {
                Regex::new(&r.pattern)
                    .map(|re| (re, r.scores))
                    .map_err(|e| Error::InvalidArgument(format!("bad pattern `{}`: {e}", r.pattern)))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            default: rules.default,
            rules: compiled,
        })
    }

    /// Scores for `text`, or the first requested attribute it cannot supply.
    pub fn evaluate(&self, text: &str, attributes: &[String]) -> std::result::Result<AttributeScores, String> {
        let rule = self.rules.iter().find(|(re, _)| re.is_match(text)).map(|(_, s)| s);
        attributes
            .iter()
            .map(|a| {
                rule.and_then(|s| s.get(a))
                    .or_else(|| self.default.get(a))
                    .map(|v| (a.clone(), *v))
                    .ok_or_else(|| a.clone())
            })
            .collect()
    }
}

#[async_trait]
impl ToxicityScorer for RuleToxicityScorer {
    async fn score(&self, text: &str, attributes: &[String]) -> std::result::Result<AttributeScores, ScorerError> {
        self.evaluate(text, attributes).map_err(ScorerError::MissingAttribute)
    }
}
