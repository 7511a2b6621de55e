//! The live pipeline: admission, scoring, threshold decisions and the
//! rate-limited responder, over one store.
//!
//! Lock order is θ, then responder, then store. Scoring holds no lock.

use std::sync::atomic::{AtomicBool, AtomicI64, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use chrono::{DateTime, Utc};
use counterpoint_core::corpus::Tweet;
use counterpoint_core::gbdt::threshold_decide;
use counterpoint_core::scorers::{featurize, FeatureRegistry, ScorerSet, TRIGGER_FEATURE};
use counterpoint_core::textprep::clean;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rusqlite::Connection;
use serde::{Deserialize, Serialize};

use crate::admission::{check, FilterReason, StreamFilterConfig};
use crate::clock::Clock;
use crate::curation::{self, EntryState, PositivitweetEntry, ReviewAction};
use crate::error::{PipelineError, Result};
use crate::library::LibraryCycle;
use crate::limiter::{RateLimitConfig, RateLimiter};
use crate::store::{self, ConfigChange, ResponseOutcome, ScoreRecord, Store};

pub const THETA_KEY: &str = "theta";
pub const DAILY_CAP_KEY: &str = "daily_cap";
pub const MIN_INTERVAL_KEY: &str = "min_interval_secs";
pub const DEFAULT_THETA: f64 = 0.5;
pub const DEFAULT_MAX_ATTEMPTS: u32 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub filter: StreamFilterConfig,
    pub rate: RateLimitConfig,
    pub theta: f64,
    /// Seeds positivitweet selection.
    pub seed: u64,
    /// A failed tweet is retried until it has failed this many times.
    pub max_attempts: u32,
}

impl EngineConfig {
    pub fn new(filter: StreamFilterConfig) -> Self {
        Self {
            filter,
            rate: RateLimitConfig::default(),
            theta: DEFAULT_THETA,
            seed: 0,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(PipelineError::ThetaOutOfRange(theta))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub theta: f64,
    pub daily_cap: u32,
    pub min_interval_secs: u32,
    pub history: Vec<ConfigChange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub analysed: u64,
    pub abusive: u64,
    pub sent: u64,
    pub suppressed: u64,
    pub failed: u64,
    pub approved_library_size: u64,
    pub current_theta: f64,
    pub last_response_at: Option<DateTime<Utc>>,
    pub library_alert: bool,
}

const NO_TIME: i64 = i64::MIN;

#[derive(Debug, Default)]
struct LiveStats {
    analysed: AtomicU64,
    abusive: AtomicU64,
    sent: AtomicU64,
    suppressed: AtomicU64,
    failed: AtomicU64,
    approved: AtomicU64,
    theta_bits: AtomicU64,
    last_response_micros: AtomicI64,
}

struct Responder {
    limiter: RateLimiter,
    cycle: LibraryCycle,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Admission {
    Admitted { received_at: DateTime<Utc> },
    Filtered(FilterReason),
}

/// Output of the lock-free scoring step.
#[derive(Debug, Clone)]
pub struct Scored {
    pub tweet_id: String,
    pub received_at: DateTime<Utc>,
    pub clean_text: String,
    pub features: std::result::Result<Vec<f64>, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Committed {
    Decision(ScoreRecord),
    Failed { tweet_id: String, error: String },
}

impl Committed {
    pub fn decided(&self) -> bool {
        matches!(self, Committed::Decision(r) if r.decided)
    }

    pub fn tweet_id(&self) -> &str {
        match self {
            Committed::Decision(r) => &r.tweet_id,
            Committed::Failed { tweet_id, .. } => tweet_id,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrySummary {
    pub attempted: usize,
    pub scored: usize,
    pub failed: usize,
}

pub struct Engine {
    store: Mutex<Store>,
    scorers: ScorerSet,
    registry: Arc<FeatureRegistry>,
    trigger: usize,
    config: EngineConfig,
    theta: RwLock<f64>,
    responder: Mutex<Responder>,
    clock: Clock,
    stats: LiveStats,
    library_alert: AtomicBool,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Engine {
    /// Opens the engine over `store`, restoring counters and the rate
    /// limiter from persisted rows. Startup settings that differ from the
    /// last recorded values are appended to the config history.
    pub fn new(
        store: Store,
        scorers: ScorerSet,
        registry: Arc<FeatureRegistry>,
        config: EngineConfig,
        clock: Clock,
    ) -> Result<Self> {
        check_theta(config.theta)?;
        if config.filter.tracked_handles.is_empty() {
            return Err(PipelineError::Config("no tracked handles".into()));
        }
        let trigger = registry
            .index_of(TRIGGER_FEATURE)
            .ok_or_else(|| PipelineError::Config(format!("registry lacks trigger feature {TRIGGER_FEATURE}")))?;

        let conn = store.conn();
        let now = clock.now();
        for (key, value) in [
            (THETA_KEY, config.theta),
            (DAILY_CAP_KEY, config.rate.daily_cap as f64),
            (MIN_INTERVAL_KEY, config.rate.min_interval_secs as f64),
        ] {
            if store::latest_config(conn, key)? != Some(value) {
                store::insert_config(conn, key, value, now, "startup")?;
            }
        }

        let counts = store::counts(conn, &store::Period::all())?;
        let stats = LiveStats::default();
        stats.analysed.store(counts.analysed, Ordering::SeqCst);
        stats.abusive.store(counts.abusive, Ordering::SeqCst);
        stats.sent.store(counts.sent, Ordering::SeqCst);
        stats.suppressed.store(counts.suppressed, Ordering::SeqCst);
        stats.failed.store(counts.failed, Ordering::SeqCst);
        stats
            .approved
            .store(curation::approved_ids(conn)?.len() as u64, Ordering::SeqCst);
        stats.theta_bits.store(config.theta.to_bits(), Ordering::SeqCst);
        stats.last_response_micros.store(
            store::last_response_at(conn)?.map_or(NO_TIME, |t| t.timestamp_micros()),
            Ordering::SeqCst,
        );

        let responder = Responder {
            limiter: RateLimiter::restore(config.rate, store::sent_times(conn)?),
            cycle: LibraryCycle::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        };
        Ok(Self {
            store: Mutex::new(store),
            scorers,
            registry,
            trigger,
            theta: RwLock::new(config.theta),
            config,
            responder: Mutex::new(responder),
            clock,
            stats,
            library_alert: AtomicBool::new(false),
        })
    }

    pub fn clock(&self) -> &Clock {
        &self.clock
    }

    pub fn registry(&self) -> &Arc<FeatureRegistry> {
        &self.registry
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// Runs `f` on the store connection.
    pub fn with_conn<T>(&self, f: impl FnOnce(&Connection) -> Result<T>) -> Result<T> {
        f(lock(&self.store).conn())
    }

    /// Runs `f` inside one store transaction, rolling back on error.
    pub fn in_transaction<T>(&self, f: impl FnOnce(&Connection) -> Result<T>) -> Result<T> {
        let mut store = lock(&self.store);
        let tx = store.transaction()?;
        let out = f(&tx)?;
        tx.commit()?;
        Ok(out)
    }

    /// Filters `tweet` and stores it if admitted. Rejected tweets leave no
    /// trace in the store.
    pub fn admit(&self, tweet: &Tweet) -> Result<Admission> {
        self.with_conn(|conn| self.admit_on(conn, tweet))
    }

    pub fn admit_on(&self, conn: &Connection, tweet: &Tweet) -> Result<Admission> {
        if let Err(reason) = check(tweet, &self.config.filter) {
            return Ok(Admission::Filtered(reason));
        }
        let mut tweet = tweet.clone();
        tweet.normalize_mentions();
        let received_at = self.clock.now();
        if store::insert_tweet(conn, &tweet, received_at)? {
            Ok(Admission::Admitted { received_at })
        } else {
            Ok(Admission::Filtered(FilterReason::Duplicate))
        }
    }

    /// Cleans and featurizes. Touches no shared state, so any number of
    /// these may run at once.
    pub async fn score(&self, tweet: &Tweet, received_at: DateTime<Utc>) -> Scored {
        let text = clean(&tweet.text);
        let features = featurize(&text, &self.registry, &self.scorers)
            .await
            .map(|fv| fv.values)
            .map_err(|e| e.to_string());
        Scored {
            tweet_id: tweet.id.clone(),
            received_at,
            clean_text: text.into_string(),
            features,
        }
    }

    /// Persists a scoring outcome and decides it against the current θ.
    pub fn commit(&self, scored: &Scored) -> Result<Committed> {
        let theta = self.theta.read().unwrap_or_else(|p| p.into_inner());
        let store = lock(&self.store);
        self.commit_on(store.conn(), *theta, scored)
    }

    fn commit_on(&self, conn: &Connection, theta: f64, scored: &Scored) -> Result<Committed> {
        let now = self.clock.now();
        match &scored.features {
            Ok(values) => {
                let toxicity = values[self.trigger];
                let decided = threshold_decide(toxicity, theta)?;
                let record = ScoreRecord {
                    tweet_id: scored.tweet_id.clone(),
                    clean_text: scored.clean_text.clone(),
                    features: values.clone(),
                    toxicity,
                    decided,
                    theta_at_decision: theta,
                    received_at: scored.received_at,
                    scored_at: now,
                };
                let was_queued = store::pending_retry_exists(conn, &scored.tweet_id)?;
                store::insert_score(conn, &record)?;
                if was_queued {
                    store::dequeue_retry(conn, &scored.tweet_id)?;
                    self.stats.failed.fetch_sub(1, Ordering::SeqCst);
                }
                // increments run analysed → abusive → sent; get_stats reads
                // in reverse so a snapshot never shows sent > abusive > analysed
                self.stats.analysed.fetch_add(1, Ordering::SeqCst);
                if decided {
                    self.stats.abusive.fetch_add(1, Ordering::SeqCst);
                }
                Ok(Committed::Decision(record))
            }
            Err(error) => {
                let first_failure = !store::pending_retry_exists(conn, &scored.tweet_id)?;
                store::insert_failure(
                    conn,
                    &scored.tweet_id,
                    &scored.clean_text,
                    error,
                    scored.received_at,
                    now,
                )?;
                if first_failure {
                    self.stats.failed.fetch_add(1, Ordering::SeqCst);
                }
                tracing::warn!(tweet_id = %scored.tweet_id, %error, "scoring failed; queued for retry");
                Ok(Committed::Failed {
                    tweet_id: scored.tweet_id.clone(),
                    error: error.clone(),
                })
            }
        }
    }

    /// Commits a batch in order inside one transaction, responding to each
    /// decided record right after it is stored. With a manual clock, time
    /// is moved to each item's timestamp first.
    pub fn commit_and_respond_batch(
        &self,
        items: &[(Scored, DateTime<Utc>)],
    ) -> Result<Vec<(Committed, Option<ResponseOutcome>)>> {
        let theta = self.theta.read().unwrap_or_else(|p| p.into_inner());
        let mut responder = lock(&self.responder);
        let mut store = lock(&self.store);
        let tx = store.transaction()?;
        let mut out = Vec::with_capacity(items.len());
        for (scored, at) in items {
            self.clock.set(*at);
            let committed = self.commit_on(&tx, *theta, scored)?;
            let outcome = if committed.decided() {
                Some(self.respond_on(&tx, &mut responder, committed.tweet_id())?)
            } else {
                None
            };
            out.push((committed, outcome));
        }
        tx.commit()?;
        Ok(out)
    }

    /// The responder step for one decided-true tweet.
    pub fn respond(&self, tweet_id: &str) -> Result<ResponseOutcome> {
        let mut responder = lock(&self.responder);
        let store = lock(&self.store);
        self.respond_on(store.conn(), &mut responder, tweet_id)
    }

    fn respond_on(&self, conn: &Connection, responder: &mut Responder, tweet_id: &str) -> Result<ResponseOutcome> {
        let now = self.clock.now();
        let approved = curation::approved_ids(conn)?;
        let Responder { limiter, cycle, rng } = responder;
        let (outcome, pick) = if approved.is_empty() {
            if !self.library_alert.swap(true, Ordering::SeqCst) {
                tracing::error!("approved positivitweet library is empty; responses are not being sent");
            }
            (ResponseOutcome::NoLibrary, None)
        } else if !limiter.permits(now) {
            (ResponseOutcome::Suppressed, None)
        } else {
            let pick = cycle.draw(&approved, rng);
            limiter.record(now);
            (ResponseOutcome::Sent, pick)
        };
        store::insert_response(conn, tweet_id, outcome, pick, now)?;
        match outcome {
            ResponseOutcome::Sent => {
                self.library_alert.store(false, Ordering::SeqCst);
                self.stats.sent.fetch_add(1, Ordering::SeqCst);
                self.stats
                    .last_response_micros
                    .fetch_max(now.timestamp_micros(), Ordering::SeqCst);
            }
            ResponseOutcome::Suppressed => {
                self.stats.suppressed.fetch_add(1, Ordering::SeqCst);
            }
            ResponseOutcome::NoLibrary => {}
        }
        Ok(outcome)
    }

    /// Admit, score, commit and respond for one tweet. Returns `None` when
    /// the tweet was filtered.
    pub async fn process(&self, tweet: &Tweet) -> Result<Option<(Committed, Option<ResponseOutcome>)>> {
        let received_at = match self.admit(tweet)? {
            Admission::Filtered(_) => return Ok(None),
            Admission::Admitted { received_at } => received_at,
        };
        let scored = self.score(tweet, received_at).await;
        let committed = self.commit(&scored)?;
        let outcome = if committed.decided() {
            Some(self.respond(committed.tweet_id())?)
        } else {
            None
        };
        Ok(Some((committed, outcome)))
    }

    /// Rescores queued failures, oldest first.
    pub async fn retry_failed(&self) -> Result<RetrySummary> {
        let pending = self.with_conn(|c| store::pending_retries(c, self.config.max_attempts))?;
        let mut summary = RetrySummary::default();
        for entry in pending {
            let Some((tweet, received_at)) = self.with_conn(|c| store::get_tweet(c, &entry.tweet_id))? else {
                continue;
            };
            summary.attempted += 1;
            let scored = self.score(&tweet, received_at).await;
            let committed = self.commit(&scored)?;
            match &committed {
                Committed::Decision(r) => {
                    summary.scored += 1;
                    if r.decided {
                        self.respond(&r.tweet_id)?;
                    }
                }
                Committed::Failed { .. } => summary.failed += 1,
            }
        }
        Ok(summary)
    }

    pub fn theta(&self) -> f64 {
        f64::from_bits(self.stats.theta_bits.load(Ordering::SeqCst))
    }

    /// Applies to every decision committed after this returns. The change
    /// is recorded even when `theta` equals the current value.
    pub fn set_threshold(&self, theta: f64, operator: &str) -> Result<OperatorConfig> {
        check_theta(theta)?;
        let mut current = self.theta.write().unwrap_or_else(|p| p.into_inner());
        let store = lock(&self.store);
        store::insert_config(store.conn(), THETA_KEY, theta, self.clock.now(), operator)?;
        *current = theta;
        self.stats.theta_bits.store(theta.to_bits(), Ordering::SeqCst);
        self.operator_config_on(store.conn(), theta)
    }

    pub fn operator_config(&self) -> Result<OperatorConfig> {
        let theta = self.theta.read().unwrap_or_else(|p| p.into_inner());
        let store = lock(&self.store);
        self.operator_config_on(store.conn(), *theta)
    }

    fn operator_config_on(&self, conn: &Connection, theta: f64) -> Result<OperatorConfig> {
        let history = store::config_history(conn, None)?;
        Ok(OperatorConfig {
            theta,
            daily_cap: self.config.rate.daily_cap,
            min_interval_secs: self.config.rate.min_interval_secs,
            history,
        })
    }

    /// Snapshot of the live counters, read without taking any lock.
    pub fn get_stats(&self) -> Stats {
        let last = self.stats.last_response_micros.load(Ordering::SeqCst);
        let sent = self.stats.sent.load(Ordering::SeqCst);
        let abusive = self.stats.abusive.load(Ordering::SeqCst);
        let analysed = self.stats.analysed.load(Ordering::SeqCst);
        Stats {
            analysed,
            abusive,
            sent,
            suppressed: self.stats.suppressed.load(Ordering::SeqCst),
            failed: self.stats.failed.load(Ordering::SeqCst),
            approved_library_size: self.stats.approved.load(Ordering::SeqCst),
            current_theta: self.theta(),
            last_response_at: (last != NO_TIME).then(|| DateTime::from_timestamp_micros(last).expect("stored micros")),
            library_alert: self.library_alert.load(Ordering::SeqCst),
        }
    }

    fn refresh_library_size(&self, conn: &Connection) -> Result<()> {
        let n = curation::approved_ids(conn)?.len() as u64;
        self.stats.approved.store(n, Ordering::SeqCst);
        if n > 0 {
            self.library_alert.store(false, Ordering::SeqCst);
        }
        Ok(())
    }

    pub fn submit_positivitweet(&self, text: &str, credit_handle: Option<&str>) -> Result<PositivitweetEntry> {
        self.with_conn(|c| curation::submit(c, text, credit_handle, self.clock.now()))
    }

    pub fn review(&self, id: i64, action: &ReviewAction, operator: &str) -> Result<PositivitweetEntry> {
        self.in_transaction(|c| {
            let entry = curation::review(c, id, action, operator, self.clock.now())?;
            self.refresh_library_size(c)?;
            Ok(entry)
        })
    }

    pub fn list_curation(&self, state: Option<EntryState>) -> Result<Vec<PositivitweetEntry>> {
        self.with_conn(|c| curation::list(c, state))
    }

    pub fn import_library<R: std::io::BufRead>(&self, reader: R) -> Result<usize> {
        self.in_transaction(|c| {
            let n = curation::import_jsonl(c, reader)?;
            self.refresh_library_size(c)?;
            Ok(n)
        })
    }
}
