//! Moderation pipeline: stream admission, scoring, threshold decisions,
//! rate-limited positivitweet responses, curation and reporting.

pub mod admission;
pub mod clock;
pub mod curation;
pub mod engine;
pub mod error;
pub mod fixture;
pub mod library;
pub mod limiter;
pub mod replay;
pub mod report;
pub mod server;
pub mod store;

pub use engine::{Engine, EngineConfig, OperatorConfig, Stats};
pub use error::{PipelineError, Result};
