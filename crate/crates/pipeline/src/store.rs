//! Single-file SQLite persistence.
//!
//! Tables:
//! - `tweets`: admitted stream items, keyed by tweet id.
//! - `scores`: one row per scoring attempt; `status` is `scored` or
//!   `failed`, and a successful retry appends a new row.
//! - `responses`: one row per decided-true record reaching the responder;
//!   `outcome` is `sent`, `suppressed` (rate limit) or `no_library`.
//! - `config_history`: every operator setting change, append-only.
//! - `positivitweets` and `positivitweet_revisions`: the curation library.
//! - `retry_queue`: tweets whose last scoring attempt failed.
//!
//! Timestamps are stored as fixed-width RFC 3339 strings in UTC with
//! microseconds, so string order is time order.

use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use counterpoint_core::corpus::Tweet;
use rusqlite::{params, Connection, OptionalExtension, Transaction};
use serde::{Deserialize, Serialize};

use crate::error::Result;

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS tweets (
    id TEXT PRIMARY KEY,
    text TEXT NOT NULL,
    lang TEXT NOT NULL,
    author_handle TEXT NOT NULL,
    mentioned_handles TEXT NOT NULL,
    is_retweet INTEGER NOT NULL,
    created_at TEXT NOT NULL,
    received_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS scores (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    tweet_id TEXT NOT NULL REFERENCES tweets(id),
    status TEXT NOT NULL CHECK (status IN ('scored', 'failed')),
    clean_text TEXT NOT NULL,
    features TEXT,
    toxicity REAL,
    decided INTEGER,
    theta REAL,
    received_at TEXT NOT NULL,
    scored_at TEXT NOT NULL,
    error TEXT
);
CREATE INDEX IF NOT EXISTS scores_by_tweet ON scores(tweet_id);
CREATE INDEX IF NOT EXISTS scores_by_time ON scores(scored_at);
CREATE TABLE IF NOT EXISTS responses (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    tweet_id TEXT NOT NULL REFERENCES tweets(id),
    outcome TEXT NOT NULL CHECK (outcome IN ('sent', 'suppressed', 'no_library')),
    positivitweet_id INTEGER REFERENCES positivitweets(id),
    at TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS responses_by_time ON responses(at);
CREATE TABLE IF NOT EXISTS config_history (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    key TEXT NOT NULL,
    value REAL NOT NULL,
    changed_at TEXT NOT NULL,
    operator TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS positivitweets (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    text TEXT NOT NULL,
    credit_handle TEXT,
    state TEXT NOT NULL CHECK (state IN ('submitted', 'approved', 'rejected')),
    submitted_at TEXT NOT NULL,
    reviewed_by TEXT,
    reviewed_at TEXT
);
CREATE TABLE IF NOT EXISTS positivitweet_revisions (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    entry_id INTEGER NOT NULL REFERENCES positivitweets(id),
    editor TEXT NOT NULL,
    old_text TEXT NOT NULL,
    at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS retry_queue (
    tweet_id TEXT PRIMARY KEY REFERENCES tweets(id),
    attempts INTEGER NOT NULL,
    last_error TEXT NOT NULL,
    enqueued_at TEXT NOT NULL
);
";

pub fn ts(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Micros, true)
}

/// Inverse of [`ts`]. Rows are only ever written by [`ts`], so a parse
/// failure means a corrupted file.
pub fn parse_ts(s: &str) -> DateTime<Utc> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .unwrap_or_else(|e| panic!("corrupt timestamp {s:?} in store: {e}"))
}

pub struct Store {
    conn: Connection,
}

impl Store {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let conn = Connection::open(path)?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.pragma_update(None, "synchronous", "NORMAL")?;
        Self::init(conn)
    }

    pub fn in_memory() -> Result<Self> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self> {
        conn.pragma_update(None, "foreign_keys", "ON")?;
        conn.execute_batch(SCHEMA)?;
        Ok(Self { conn })
    }

    pub fn conn(&self) -> &Connection {
        &self.conn
    }

    pub fn transaction(&mut self) -> Result<Transaction<'_>> {
        Ok(self.conn.transaction()?)
    }
}

/// Inserts an admitted tweet; `false` if the id is already stored.
pub fn insert_tweet(conn: &Connection, tweet: &Tweet, received_at: DateTime<Utc>) -> Result<bool> {
    let mut stmt = conn.prepare_cached(
        "INSERT OR IGNORE INTO tweets
         (id, text, lang, author_handle, mentioned_handles, is_retweet, created_at, received_at)
         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
    )?;
    let n = stmt.execute(params![
        tweet.id,
        tweet.text,
        tweet.lang,
        tweet.author_handle,
        serde_json::to_string(&tweet.mentioned_handles)?,
        tweet.is_retweet,
        ts(tweet.timestamp),
        ts(received_at),
    ])?;
    Ok(n == 1)
}

pub fn tweet_exists(conn: &Connection, id: &str) -> Result<bool> {
    let mut stmt = conn.prepare_cached("SELECT 1 FROM tweets WHERE id = ?1")?;
    Ok(stmt.exists([id])?)
}

pub fn get_tweet(conn: &Connection, id: &str) -> Result<Option<(Tweet, DateTime<Utc>)>> {
    let mut stmt = conn.prepare_cached(
        "SELECT id, text, lang, author_handle, mentioned_handles, is_retweet, created_at, received_at
         FROM tweets WHERE id = ?1",
    )?;
    let row = stmt
        .query_row([id], |r| {
            Ok((
                r.get::<_, String>(0)?,
                r.get::<_, String>(1)?,
                r.get::<_, String>(2)?,
                r.get::<_, String>(3)?,
                r.get::<_, String>(4)?,
                r.get::<_, bool>(5)?,
                r.get::<_, String>(6)?,
                r.get::<_, String>(7)?,
            ))
        })
        .optional()?;
    let Some((id, text, lang, author_handle, mentions, is_retweet, created, received)) = row else {
        return Ok(None);
    };
    let tweet = Tweet {
        id,
        text,
        lang,
        author_handle,
        mentioned_handles: serde_json::from_str(&mentions)?,
        is_retweet,
        timestamp: parse_ts(&created),
    };
    Ok(Some((tweet, parse_ts(&received))))
}

/// A persisted successful scoring with its threshold decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub tweet_id: String,
    pub clean_text: String,
    pub features: Vec<f64>,
    pub toxicity: f64,
    pub decided: bool,
    pub theta_at_decision: f64,
    pub received_at: DateTime<Utc>,
    pub scored_at: DateTime<Utc>,
}

pub fn insert_score(conn: &Connection, r: &ScoreRecord) -> Result<()> {
    let mut stmt = conn.prepare_cached(
        "INSERT INTO scores
         (tweet_id, status, clean_text, features, toxicity, decided, theta, received_at, scored_at)
         VALUES (?1, 'scored', ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
    )?;
    stmt.execute(params![
        r.tweet_id,
        r.clean_text,
        serde_json::to_string(&r.features)?,
        r.toxicity,
        r.decided,
        r.theta_at_decision,
        ts(r.received_at),
        ts(r.scored_at),
    ])?;
    Ok(())
}

pub fn insert_failure(
    conn: &Connection,
    tweet_id: &str,
    clean_text: &str,
    error: &str,
    received_at: DateTime<Utc>,
    at: DateTime<Utc>,
) -> Result<()> {
    conn.prepare_cached(
        "INSERT INTO scores (tweet_id, status, clean_text, received_at, scored_at, error)
         VALUES (?1, 'failed', ?2, ?3, ?4, ?5)",
    )?
    .execute(params![tweet_id, clean_text, ts(received_at), ts(at), error])?;
    conn.prepare_cached(
        "INSERT INTO retry_queue (tweet_id, attempts, last_error, enqueued_at) VALUES (?1, 1, ?2, ?3)
         ON CONFLICT(tweet_id) DO UPDATE SET attempts = attempts + 1, last_error = excluded.last_error",
    )?
    .execute(params![tweet_id, error, ts(at)])?;
    Ok(())
}

pub fn pending_retry_exists(conn: &Connection, tweet_id: &str) -> Result<bool> {
    Ok(conn
        .prepare_cached("SELECT 1 FROM retry_queue WHERE tweet_id = ?1")?
        .exists([tweet_id])?)
}

pub fn dequeue_retry(conn: &Connection, tweet_id: &str) -> Result<()> {
    conn.prepare_cached("DELETE FROM retry_queue WHERE tweet_id = ?1")?
        .execute([tweet_id])?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryEntry {
    pub tweet_id: String,
    pub attempts: u32,
    pub last_error: String,
}

/// Queued retries, oldest first, skipping any that reached `max_attempts`.
pub fn pending_retries(conn: &Connection, max_attempts: u32) -> Result<Vec<RetryEntry>> {
    let mut stmt = conn.prepare_cached(
        "SELECT tweet_id, attempts, last_error FROM retry_queue WHERE attempts < ?1 ORDER BY enqueued_at, tweet_id",
    )?;
    let rows = stmt
        .query_map([max_attempts], |r| {
            Ok(RetryEntry {
                tweet_id: r.get(0)?,
                attempts: r.get(1)?,
                last_error: r.get(2)?,
            })
        })?
        .collect::<rusqlite::Result<_>>()?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseOutcome {
    Sent,
    Suppressed,
    NoLibrary,
}

impl ResponseOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            ResponseOutcome::Sent => "sent",
            ResponseOutcome::Suppressed => "suppressed",
            ResponseOutcome::NoLibrary => "no_library",
        }
    }
}

/// A sent positivitweet. Holds no text or author of the triggering tweet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseEvent {
    pub response_id: i64,
    pub tweet_id: String,
    pub positivitweet_id: i64,
    pub sent_at: DateTime<Utc>,
}

pub fn insert_response(
    conn: &Connection,
    tweet_id: &str,
    outcome: ResponseOutcome,
    positivitweet_id: Option<i64>,
    at: DateTime<Utc>,
) -> Result<i64> {
    conn.prepare_cached("INSERT INTO responses (tweet_id, outcome, positivitweet_id, at) VALUES (?1, ?2, ?3, ?4)")?
        .execute(params![tweet_id, outcome.as_str(), positivitweet_id, ts(at)])?;
    Ok(conn.last_insert_rowid())
}

pub fn sent_responses(conn: &Connection) -> Result<Vec<ResponseEvent>> {
    let mut stmt = conn.prepare_cached(
        "SELECT id, tweet_id, positivitweet_id, at FROM responses WHERE outcome = 'sent' ORDER BY id",
    )?;
    let rows = stmt
        .query_map([], |r| {
            Ok(ResponseEvent {
                response_id: r.get(0)?,
                tweet_id: r.get(1)?,
                positivitweet_id: r.get(2)?,
                sent_at: parse_ts(&r.get::<_, String>(3)?),
            })
        })?
        .collect::<rusqlite::Result<_>>()?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigChange {
    pub key: String,
    pub value: f64,
    pub changed_at: DateTime<Utc>,
    pub operator: String,
}

pub fn insert_config(conn: &Connection, key: &str, value: f64, at: DateTime<Utc>, operator: &str) -> Result<()> {
    conn.prepare_cached("INSERT INTO config_history (key, value, changed_at, operator) VALUES (?1, ?2, ?3, ?4)")?
        .execute(params![key, value, ts(at), operator])?;
    Ok(())
}

/// Changes to `key`, or to every key if `None`, in recording order.
pub fn config_history(conn: &Connection, key: Option<&str>) -> Result<Vec<ConfigChange>> {
    let mut stmt = conn.prepare_cached(
        "SELECT key, value, changed_at, operator FROM config_history WHERE ?1 IS NULL OR key = ?1 ORDER BY id",
    )?;
    let rows = stmt
        .query_map([key], |r| {
            Ok(ConfigChange {
                key: r.get(0)?,
                value: r.get(1)?,
                changed_at: parse_ts(&r.get::<_, String>(2)?),
                operator: r.get(3)?,
            })
        })?
        .collect::<rusqlite::Result<_>>()?;
    Ok(rows)
}

pub fn latest_config(conn: &Connection, key: &str) -> Result<Option<f64>> {
    Ok(conn
        .prepare_cached("SELECT value FROM config_history WHERE key = ?1 ORDER BY id DESC LIMIT 1")?
        .query_row([key], |r| r.get(0))
        .optional()?)
}

/// Half-open reporting window; `None` bounds are open.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub from: Option<DateTime<Utc>>,
    pub to: Option<DateTime<Utc>>,
}

impl Period {
    pub fn all() -> Self {
        Self::default()
    }

    fn bounds(&self) -> (String, String) {
        (
            self.from.map(ts).unwrap_or_default(),
            // sorts after any stored timestamp
            self.to.map(ts).unwrap_or_else(|| "~".to_string()),
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub analysed: u64,
    pub abusive: u64,
    pub failed: u64,
    pub sent: u64,
    pub suppressed: u64,
    pub no_library: u64,
}

/// Counts from persisted rows. Analysed counts tweets with a successful
/// score in the period; tweets whose scoring only ever failed are excluded.
pub fn counts(conn: &Connection, period: &Period) -> Result<Counts> {
    let (from, to) = period.bounds();
    let (analysed, abusive): (u64, u64) = conn
        .prepare_cached(
            "SELECT COUNT(DISTINCT tweet_id), COUNT(DISTINCT CASE WHEN decided = 1 THEN tweet_id END)
             FROM scores WHERE status = 'scored' AND scored_at >= ?1 AND scored_at < ?2",
        )?
        .query_row([&from, &to], |r| Ok((r.get(0)?, r.get(1)?)))?;
    let failed: u64 = conn
        .prepare_cached(
            "SELECT COUNT(DISTINCT f.tweet_id) FROM scores f
             WHERE f.status = 'failed' AND f.scored_at >= ?1 AND f.scored_at < ?2
             AND NOT EXISTS (SELECT 1 FROM scores s WHERE s.tweet_id = f.tweet_id AND s.status = 'scored')",
        )?
        .query_row([&from, &to], |r| r.get(0))?;
    let mut c = Counts {
        analysed,
        abusive,
        failed,
        ..Counts::default()
    };
    let mut stmt =
        conn.prepare_cached("SELECT outcome, COUNT(*) FROM responses WHERE at >= ?1 AND at < ?2 GROUP BY outcome")?;
    let rows = stmt.query_map([&from, &to], |r| Ok((r.get::<_, String>(0)?, r.get::<_, u64>(1)?)))?;
    for row in rows {
        let (outcome, n) = row?;
        match outcome.as_str() {
            "sent" => c.sent = n,
            "suppressed" => c.suppressed = n,
            _ => c.no_library = n,
        }
    }
    Ok(c)
}

pub fn last_response_at(conn: &Connection) -> Result<Option<DateTime<Utc>>> {
    let at: Option<String> = conn
        .prepare_cached("SELECT MAX(at) FROM responses WHERE outcome = 'sent'")?
        .query_row([], |r| r.get(0))?;
    Ok(at.as_deref().map(parse_ts))
}

/// Times of every sent response, for rebuilding the rate limiter.
pub fn sent_times(conn: &Connection) -> Result<Vec<DateTime<Utc>>> {
    Ok(sent_responses(conn)?.into_iter().map(|e| e.sent_at).collect())
}

/// Successful score records, in insertion order.
pub fn score_records(conn: &Connection) -> Result<Vec<ScoreRecord>> {
    let mut stmt = conn.prepare_cached(
        "SELECT tweet_id, clean_text, features, toxicity, decided, theta, received_at, scored_at
         FROM scores WHERE status = 'scored' ORDER BY id",
    )?;
    let rows = stmt
        .query_map([], |r| {
            Ok((
                r.get::<_, String>(0)?,
                r.get::<_, String>(1)?,
                r.get::<_, String>(2)?,
                r.get::<_, f64>(3)?,
                r.get::<_, bool>(4)?,
                r.get::<_, f64>(5)?,
                r.get::<_, String>(6)?,
                r.get::<_, String>(7)?,
            ))
        })?
        .collect::<rusqlite::Result<Vec<_>>>()?;
    rows.into_iter()
        .map(
            |(tweet_id, clean_text, features, toxicity, decided, theta, received, scored)| {
                Ok(ScoreRecord {
                    tweet_id,
                    clean_text,
                    features: serde_json::from_str(&features)?,
                    toxicity,
                    decided,
                    theta_at_decision: theta,
                    received_at: parse_ts(&received),
                    scored_at: parse_ts(&scored),
                })
            },
        )
        .collect()
}
