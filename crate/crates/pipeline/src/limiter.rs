//! Response rate limiting: at most `daily_cap` responses per UTC day and at
//! least `min_interval` between any two responses.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Bound;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateLimitConfig {
    pub daily_cap: u32,
    pub min_interval_secs: u32,
}

impl Default for RateLimitConfig {
    fn default() -> Self {
        Self {
            daily_cap: 100,
            min_interval_secs: 30,
        }
    }
}

/// Tracks every granted slot, so requests that arrive out of time order
/// (late retries, unsorted fixtures) are still checked against both
/// neighbours.
#[derive(Debug, Clone)]
pub struct RateLimiter {
    config: RateLimitConfig,
    sent: BTreeSet<DateTime<Utc>>,
    per_day: BTreeMap<NaiveDate, u32>,
}

impl RateLimiter {
    pub fn new(config: RateLimitConfig) -> Self {
        Self {
            config,
            sent: BTreeSet::new(),
            per_day: BTreeMap::new(),
        }
    }

    /// A limiter that already accounts for `history`.
    pub fn restore(config: RateLimitConfig, history: impl IntoIterator<Item = DateTime<Utc>>) -> Self {
        let mut limiter = Self::new(config);
        for t in history {
            limiter.record(t);
        }
        limiter
    }

    pub fn config(&self) -> RateLimitConfig {
        self.config
    }

    fn min_interval(&self) -> Duration {
        Duration::seconds(self.config.min_interval_secs as i64)
    }

    /// Whether a response at `now` would keep both invariants.
    pub fn permits(&self, now: DateTime<Utc>) -> bool {
        if self.per_day.get(&now.date_naive()).copied().unwrap_or(0) >= self.config.daily_cap {
            return false;
        }
        let gap = self.min_interval();
        let before = self.sent.range(..=now).next_back();
        let after = self.sent.range((Bound::Excluded(now), Bound::Unbounded)).next();
        before.is_none_or(|&b| now - b >= gap) && after.is_none_or(|&a| a - now >= gap)
    }

    pub fn record(&mut self, now: DateTime<Utc>) {
        self.sent.insert(now);
        *self.per_day.entry(now.date_naive()).or_insert(0) += 1;
    }

    /// Checks and, if permitted, records a response at `now`.
    pub fn try_acquire(&mut self, now: DateTime<Utc>) -> bool {
        let ok = self.permits(now);
        if ok {
            self.record(now);
        }
        ok
    }

    pub fn sent_on(&self, day: NaiveDate) -> u32 {
        self.per_day.get(&day).copied().unwrap_or(0)
    }
}
