//! Fixture replay: a JSON Lines tweet file fed through the engine as if it
//! arrived on the stream.
//!
//! Lines are handled in chunks. Each chunk is admitted in one transaction,
//! scored concurrently, then committed and answered in file order in a
//! second transaction. With a manual clock every step runs at the tweet's
//! own timestamp, so a replay is reproducible.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::time::Duration;

use chrono::{DateTime, Utc};
use counterpoint_core::corpus::Tweet;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::engine::{Admission, Committed, Engine};
use crate::error::{PipelineError, Result};
use crate::store::ResponseOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayOptions {
    /// Tweets per second; 0 replays as fast as possible.
    pub rate: f64,
    pub chunk: usize,
    /// Tweets scored at once within a chunk.
    pub concurrency: usize,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self {
            rate: 0.0,
            chunk: 2048,
            concurrency: 64,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub lines: u64,
    pub malformed: u64,
    pub admitted: u64,
    pub filtered: BTreeMap<String, u64>,
    pub scored: u64,
    pub failed: u64,
    pub decided: u64,
    pub sent: u64,
    pub suppressed: u64,
    pub no_library: u64,
}

/// Timestamp of the first parseable tweet, for starting a manual clock.
pub fn first_timestamp<R: BufRead>(reader: R) -> Result<Option<DateTime<Utc>>> {
    for line in reader.lines() {
        let line = line.map_err(|e| PipelineError::io("<fixture>", e))?;
        if let Ok(t) = serde_json::from_str::<Tweet>(&line) {
            return Ok(Some(t.timestamp));
        }
    }
    Ok(None)
}

pub async fn replay<R: BufRead>(engine: &Engine, reader: R, opts: &ReplayOptions) -> Result<ReplaySummary> {
    if !(opts.rate >= 0.0 && opts.rate.is_finite()) {
        return Err(PipelineError::Config(format!(
            "replay rate {} must be finite and >= 0",
            opts.rate
        )));
    }
    let paced = opts.rate > 0.0;
    // a paced replay should not hold tweets back waiting for a chunk to fill
    let chunk_size = if paced { 1 } else { opts.chunk.max(1) };
    let started = tokio::time::Instant::now();
    let mut summary = ReplaySummary::default();
    let mut lines = reader.lines();
    let mut chunk: Vec<Tweet> = Vec::with_capacity(chunk_size);

    loop {
        chunk.clear();
        while chunk.len() < chunk_size {
            let Some(line) = lines.next() else { break };
            let line = line.map_err(|e| PipelineError::io("<fixture>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            summary.lines += 1;
            match serde_json::from_str::<Tweet>(&line) {
                Ok(t) => chunk.push(t),
                Err(e) => {
                    summary.malformed += 1;
                    tracing::debug!(line = summary.lines, error = %e, "skipping malformed fixture line");
                }
            }
        }
        if chunk.is_empty() {
            break;
        }
        if paced {
            let due = started + Duration::from_secs_f64((summary.lines - 1) as f64 / opts.rate);
            tokio::time::sleep_until(due).await;
        }

        let admitted = engine.in_transaction(|conn| {
            let mut admitted = Vec::new();
            for tweet in &chunk {
                engine.clock().set(tweet.timestamp);
                match engine.admit_on(conn, tweet)? {
                    Admission::Admitted { received_at } => admitted.push((tweet, received_at)),
                    Admission::Filtered(reason) => {
                        *summary.filtered.entry(reason.as_str().to_string()).or_default() += 1;
                    }
                }
            }
            Ok(admitted)
        })?;
        summary.admitted += admitted.len() as u64;

        let scored: Vec<_> = stream::iter(admitted)
            .map(|(tweet, received_at)| async move { (engine.score(tweet, received_at).await, tweet.timestamp) })
            .buffered(opts.concurrency.max(1))
            .collect()
            .await;

        for (committed, outcome) in engine.commit_and_respond_batch(&scored)? {
            match committed {
                Committed::Decision(r) => {
                    summary.scored += 1;
                    summary.decided += r.decided as u64;
                }
                Committed::Failed { .. } => summary.failed += 1,
            }
            match outcome {
                Some(ResponseOutcome::Sent) => summary.sent += 1,
                Some(ResponseOutcome::Suppressed) => summary.suppressed += 1,
                Some(ResponseOutcome::NoLibrary) => summary.no_library += 1,
                None => {}
            }
        }
    }
    Ok(summary)
}
