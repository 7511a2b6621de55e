use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Toxicity attributes requested from the scoring endpoint, in default order.
pub const TOXICITY_ATTRIBUTES: [&str; 15] = [
    "IDENTITY_ATTACK",
    "INCOHERENT",
    "TOXICITY_FAST",
    "THREAT",
    "INSULT",
    "LIKELY_TO_REJECT",
    "TOXICITY",
    "PROFANITY",
    "SEXUALLY_EXPLICIT",
    "ATTACK_ON_AUTHOR",
    "SPAM",
    "ATTACK_ON_COMMENTER",
    "OBSCENE",
    "SEVERE_TOXICITY",
    "INFLAMMATORY",
];

pub const HATE_FEATURES: [&str; 3] = ["sonar_hate_speech", "sonar_offensive_language", "sonar_neither"];

pub const SENTIMENT_FEATURES: [&str; 4] = ["vader_neg", "vader_neu", "vader_pos", "vader_compound"];

/// The deployed decision feature.
pub const TRIGGER_FEATURE: &str = "TOXICITY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Toxicity,
    Hate,
    Sentiment,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Toxicity, Family::Hate, Family::Sentiment];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Toxicity => "toxicity",
            Family::Hate => "hate",
            Family::Sentiment => "sentiment",
        }
    }

    /// Any name outside the hate and sentiment lists is a toxicity
    /// attribute, so extra endpoint attributes can be added by configuration.
    pub fn of(name: &str) -> Family {
        if HATE_FEATURES.contains(&name) {
            Family::Hate
        } else if SENTIMENT_FEATURES.contains(&name) {
            Family::Sentiment
        } else {
            Family::Toxicity
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ordered feature layout shared by featurization, datasets and models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct FeatureRegistry {
    names: Vec<String>,
}

impl Default for FeatureRegistry {
    fn default() -> Self {
        let names = TOXICITY_ATTRIBUTES
            .iter()
            .chain(HATE_FEATURES.iter())
            .chain(SENTIMENT_FEATURES.iter())
            .map(|s| s.to_string())
            .collect();
        Self { names }
    }
}

impl TryFrom<Vec<String>> for FeatureRegistry {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<FeatureRegistry> for Vec<String> {
    fn from(r: FeatureRegistry) -> Self {
        r.names
    }
}

impl FeatureRegistry {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::InvalidArgument("feature registry is empty".into()));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if n.is_empty() {
                return Err(Error::InvalidArgument("empty feature name".into()));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate feature `{n}`")));
            }
        }
        Ok(Self { names })
    }

    /// Default registry restricted to the given families, order preserved.
    pub fn with_families(families: &[Family]) -> Result<Self> {
        Self::new(
            Self::default()
                .names
                .into_iter()
                .filter(|n| families.contains(&Family::of(n))),
        )
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn contains_family(&self, family: Family) -> bool {
        self.names.iter().any(|n| Family::of(n) == family)
    }

    /// Column indices belonging to `family`.
    pub fn family_columns(&self, family: Family) -> Vec<usize> {
        self.names
            .iter()
            .enumerate()
            .filter(|(_, n)| Family::of(n) == family)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn toxicity_attributes(&self) -> Vec<String> {
        self.names
            .iter()
            .filter(|n| Family::of(n) == Family::Toxicity)
            .cloned()
            .collect()
    }

    /// Closed range each feature's values must fall in.
    pub fn range_of(name: &str) -> (f64, f64) {
        if name == "vader_compound" {
            (-1.0, 1.0)
        } else {
            (0.0, 1.0)
        }
    }

    /// Sub-registry over the given column indices.
    pub fn select(&self, columns: &[usize]) -> Result<Self> {
        Self::new(columns.iter().map(|&c| self.names[c].clone()))
    }
}
