#![allow(dead_code)]

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use async_trait::async_trait;
use chrono::{DateTime, Duration, TimeZone, Utc};
use counterpoint::admission::StreamFilterConfig;
use counterpoint::clock::Clock;
use counterpoint::curation::ReviewAction;
use counterpoint::engine::{Engine, EngineConfig};
use counterpoint::fixture;
use counterpoint::limiter::RateLimitConfig;
use counterpoint::store::Store;
use counterpoint_core::corpus::Tweet;
use counterpoint_core::error::ScorerError;
use counterpoint_core::scorers::{
    AttributeScores, FeatureRegistry, HateModel, MockRule, RuleToxicityScorer, ScorerSet, ToxicityScorer,
    TOXICITY_ATTRIBUTES,
};

pub const MID_MARKER: &str = "zzmidzz";

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2019, 10, 1, 0, 0, 0).unwrap()
}

pub fn at(secs: i64) -> DateTime<Utc> {
    t0() + Duration::seconds(secs)
}

pub fn tweet(id: &str, text: &str, when: DateTime<Utc>) -> Tweet {
    Tweet {
        id: id.into(),
        text: format!("@cand_alice {text}"),
        lang: "en".into(),
        author_handle: "someone".into(),
        mentioned_handles: vec!["cand_alice".into()],
        is_retweet: false,
        timestamp: when,
    }
}

pub fn abusive(id: &str, when: DateTime<Utc>) -> Tweet {
    tweet(id, &format!("you are a disgrace {}", fixture::ABUSIVE_MARKER), when)
}

pub fn benign(id: &str, when: DateTime<Utc>) -> Tweet {
    tweet(id, "thanks for the town hall", when)
}

/// Fixture rules plus a 0.85 TOXICITY marker.
pub fn rules_scorer() -> RuleToxicityScorer {
    let mut rules = fixture::mock_rules();
    rules.rules.push(MockRule {
        pattern: format!(r"\b{MID_MARKER}\b"),
        scores: TOXICITY_ATTRIBUTES.iter().map(|a| (a.to_string(), 0.85)).collect(),
    });
    RuleToxicityScorer::new(rules).unwrap()
}

/// Rule scorer that can be switched off to simulate an outage.
pub struct Switchable {
    pub down: AtomicBool,
    inner: RuleToxicityScorer,
}

impl Switchable {
    pub fn new() -> Arc<Self> {
        Arc::new(Self {
            down: AtomicBool::new(false),
            inner: rules_scorer(),
        })
    }

    pub fn set_down(&self, down: bool) {
        self.down.store(down, Ordering::SeqCst);
    }
}

#[async_trait]
impl ToxicityScorer for Switchable {
    async fn score(&self, text: &str, attributes: &[String]) -> Result<AttributeScores, ScorerError> {
        if self.down.load(Ordering::SeqCst) {
            return Err(ScorerError::Transport {
                attempts: 1,
                message: "connection refused".into(),
            });
        }
        self.inner.score(text, attributes).await
    }
}

pub fn config(theta: f64, daily_cap: u32, min_interval_secs: u32) -> EngineConfig {
    let mut cfg = EngineConfig::new(StreamFilterConfig::new(fixture::default_handles(), "paritybot"));
    cfg.theta = theta;
    cfg.rate = RateLimitConfig {
        daily_cap,
        min_interval_secs,
    };
    cfg
}

pub fn engine_with(tox: Arc<dyn ToxicityScorer>, cfg: EngineConfig, clock: Clock) -> Engine {
    let scorers = ScorerSet::new(Some(tox), Some(Arc::new(HateModel::demo())));
    Engine::new(
        Store::in_memory().unwrap(),
        scorers,
        Arc::new(FeatureRegistry::default()),
        cfg,
        clock,
    )
    .unwrap()
}

pub fn engine(cfg: EngineConfig) -> Engine {
    engine_with(Arc::new(rules_scorer()), cfg, Clock::manual(t0()))
}

/// Submits and approves `n` entries, returning their ids.
pub fn approve_library(engine: &Engine, n: usize) -> Vec<i64> {
    (0..n)
        .map(|i| {
            let e = engine
                .submit_positivitweet(&format!("You are appreciated, number {i}."), None)
                .unwrap();
            engine.review(e.id, &ReviewAction::Approve, "curator").unwrap().id
        })
        .collect()
}
