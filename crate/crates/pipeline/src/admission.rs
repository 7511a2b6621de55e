//! Which stream items enter the pipeline.

use std::collections::BTreeSet;

use counterpoint_core::corpus::{Roster, Tweet};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamFilterConfig {
    /// Lowercased, without `@`.
    pub tracked_handles: BTreeSet<String>,
    pub required_lang: String,
    pub exclude_retweets: bool,
    pub self_handle: String,
}

impl StreamFilterConfig {
    pub fn new(tracked: impl IntoIterator<Item = impl AsRef<str>>, self_handle: &str) -> Self {
        Self {
            tracked_handles: tracked.into_iter().map(|h| normalize_handle(h.as_ref())).collect(),
            required_lang: "en".to_string(),
            exclude_retweets: true,
            self_handle: normalize_handle(self_handle),
        }
    }

    pub fn from_roster(roster: &Roster, self_handle: &str) -> Self {
        Self::new(roster.tracked_handles(), self_handle)
    }
}

/// Handles compare case-insensitively and without the leading `@`.
pub fn normalize_handle(h: &str) -> String {
    h.trim().trim_start_matches('@').to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterReason {
    Retweet,
    NotEnglish,
    SelfAuthored,
    NoTrackedMention,
    Duplicate,
}

impl FilterReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterReason::Retweet => "retweet",
            FilterReason::NotEnglish => "not_english",
            FilterReason::SelfAuthored => "self_authored",
            FilterReason::NoTrackedMention => "no_tracked_mention",
            FilterReason::Duplicate => "duplicate",
        }
    }
}

/// `Ok(())` when the tweet should be scored, else the first failing check.
/// Duplicate detection needs the store and happens later.
pub fn check(tweet: &Tweet, cfg: &StreamFilterConfig) -> Result<(), FilterReason> {
    if cfg.exclude_retweets && tweet.is_retweet {
        return Err(FilterReason::Retweet);
    }
    if !tweet.lang.eq_ignore_ascii_case(&cfg.required_lang) {
        return Err(FilterReason::NotEnglish);
    }
    if normalize_handle(&tweet.author_handle) == cfg.self_handle {
        return Err(FilterReason::SelfAuthored);
    }
    let tracked = tweet
        .mentioned_handles
        .iter()
        .any(|h| cfg.tracked_handles.contains(&normalize_handle(h)));
    if !tracked {
        return Err(FilterReason::NoTrackedMention);
    }
    Ok(())
}

pub fn admit(tweet: &Tweet, cfg: &StreamFilterConfig) -> bool {
    check(tweet, cfg).is_ok()
}
