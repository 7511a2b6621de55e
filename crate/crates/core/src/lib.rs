//! Scoring, resampling, boosting and validation for abusive-tweet
//! detection aimed at tracked political candidates.

pub mod balance;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod gbdt;
pub mod par;
pub mod scorers;
pub mod synth;
pub mod textprep;

pub use corpus::{Label, Tweet};
pub use dataset::FeatureDataset;
pub use error::{Error, Result, ScorerError};
pub use par::ExecMode;
pub use scorers::{featurize, FeatureRegistry, FeatureVector};
pub use textprep::{clean, CleanText};
