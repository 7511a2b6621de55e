//! Acceptance suite for the live pipeline. Prints one line per criterion
//! and exits non-zero if any fails.
//!
//! Run with `cargo test -p counterpoint --test acceptance`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use counterpoint::admission::StreamFilterConfig;
use counterpoint::clock::Clock;
use counterpoint::engine::{Engine, EngineConfig};
use counterpoint::fixture::{self, FixtureSpec};
use counterpoint::limiter::{RateLimitConfig, RateLimiter};
use counterpoint::replay::{first_timestamp, replay, ReplayOptions, ReplaySummary};
use counterpoint::report::{report, ElectionReport};
use counterpoint::store::{self, Period, Store};
use counterpoint::Stats;
use counterpoint_core::corpus::{load_roster, NameTable};
use counterpoint_core::scorers::{FeatureRegistry, HateModel, MockRules, RuleToxicityScorer, ScorerSet};

enum Outcome {
    Pass(String),
    Fail(String),
}

struct Suite {
    failed: usize,
}

impl Suite {
    fn run(&mut self, name: &str, criterion: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = criterion();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                self.failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {name} ({secs:.2}s): {detail}");
    }
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

struct Run {
    summary: ReplaySummary,
    report: ElectionReport,
    report_json: String,
    stats: Stats,
    sent_at: Vec<DateTime<Utc>>,
}

/// Replays the bundle in `dir` into a fresh file store, as the CLI does.
fn replay_bundle(dir: &Path, store_name: &str, theta: f64, rate: RateLimitConfig, seed: u64) -> Run {
    let roster = load_roster(dir.join("roster.csv"), &NameTable::bundled()).unwrap();
    let mut cfg = EngineConfig::new(StreamFilterConfig::from_roster(&roster, "paritybot"));
    cfg.theta = theta;
    cfg.rate = rate;
    cfg.seed = seed;
    let tox = RuleToxicityScorer::new(MockRules::load(dir.join("rules.json")).unwrap()).unwrap();
    let scorers = ScorerSet::new(Some(Arc::new(tox)), Some(Arc::new(HateModel::demo())));
    let fixture_path = dir.join("tweets.jsonl");
    let start = first_timestamp(BufReader::new(File::open(&fixture_path).unwrap()))
        .unwrap()
        .unwrap();
    let engine = Engine::new(
        Store::open(dir.join(store_name)).unwrap(),
        scorers,
        Arc::new(FeatureRegistry::default()),
        cfg,
        Clock::manual(start),
    )
    .unwrap();
    engine
        .import_library(BufReader::new(File::open(dir.join("library.jsonl")).unwrap()))
        .unwrap();
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .unwrap();
    let summary = rt
        .block_on(replay(
            &engine,
            BufReader::new(File::open(&fixture_path).unwrap()),
            &ReplayOptions::default(),
        ))
        .unwrap();
    let report = engine.with_conn(|c| report(c, &Period::all())).unwrap();
    Run {
        summary,
        report_json: report.to_json().unwrap(),
        report,
        stats: engine.get_stats(),
        sent_at: engine.with_conn(store::sent_times).unwrap(),
    }
}

/// Scans a sent_at sequence for cap or spacing violations.
fn violations(sent_at: &[DateTime<Utc>], rate: RateLimitConfig) -> usize {
    let mut sorted = sent_at.to_vec();
    sorted.sort();
    let mut per_day: BTreeMap<_, u32> = BTreeMap::new();
    for t in &sorted {
        *per_day.entry(t.date_naive()).or_default() += 1;
    }
    let over_cap = per_day.values().filter(|&&n| n > rate.daily_cap).count();
    let too_close = sorted
        .windows(2)
        .filter(|w| (w[1] - w[0]).num_seconds() < rate.min_interval_secs as i64)
        .count();
    over_cap + too_close
}

fn replay_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    fixture::write_bundle(&FixtureSpec::new(1000, 100), dir.path()).unwrap();
    let rate = RateLimitConfig {
        daily_cap: 50,
        min_interval_secs: 30,
    };
    let a = replay_bundle(dir.path(), "a.db", 0.9, rate, 7);
    let b = replay_bundle(dir.path(), "b.db", 0.9, rate, 7);
    let r = &a.report;
    let counts = (r.total_analysed, r.total_abusive, r.total_sent);
    let s = &a.stats;
    let stats = (s.analysed, s.abusive, s.sent, s.suppressed);
    let identical = a.report_json == b.report_json && a.sent_at == b.sent_at && a.summary == b.summary;
    let bad = violations(&a.sent_at, rate);
    verdict(
        counts == (1000, 100, 50) && stats == (1000, 100, 50, 50) && identical && bad == 0,
        format!(
            "report {{analysed, abusive, sent}} = {counts:?}; stats {{analysed, abusive, sent, suppressed}} = {stats:?}; \
             two seeded runs byte-identical: {identical} ({} bytes); limiter violations {bad}",
            a.report_json.len()
        ),
    )
}

fn federal_scale_replay() -> Outcome {
    const TOTAL: usize = 228_255;
    const ABUSIVE: usize = 9_987;
    let dir = tempfile::tempdir().unwrap();
    let spec = FixtureSpec {
        spacing_secs: 10,
        ..FixtureSpec::new(TOTAL, ABUSIVE)
    };
    fixture::write_bundle(&spec, dir.path()).unwrap();
    let rate = RateLimitConfig::default();
    let start = Instant::now();
    let run = replay_bundle(dir.path(), "federal.db", 0.9, rate, 0);
    let elapsed = start.elapsed();
    let r = &run.report;
    let bad = violations(&run.sent_at, rate);
    let rendered = format!("{:.2}%", 100.0 * r.abusive_rate);
    verdict(
        r.total_analysed == TOTAL as u64
            && r.total_abusive == ABUSIVE as u64
            && run.summary.malformed == 0
            && bad == 0
            && rendered == "4.38%"
            && elapsed < Duration::from_secs(600),
        format!(
            "{} lines in {:.1}s ({:.0} tweets/s); analysed {}, abusive {} ({rendered}), sent {}, suppressed {}; \
             limiter violations {bad}",
            run.summary.lines,
            elapsed.as_secs_f64(),
            TOTAL as f64 / elapsed.as_secs_f64(),
            r.total_analysed,
            r.total_abusive,
            r.total_sent,
            r.total_suppressed
        ),
    )
}

/// Percentage of `n / d` to two decimals with round-half-up, in integers.
fn percent_oracle(n: u64, d: u64) -> String {
    let hundredths = (2 * n * 10_000 + d) / (2 * d);
    format!("{}.{:02}%", hundredths / 100, hundredths % 100)
}

fn report_math() -> Outcome {
    let federal = ElectionReport::from_counts(Period::all(), 228_255, 9_987, 0, 0, vec![]).unwrap();
    let alberta = ElectionReport::from_counts(Period::all(), 12_726, 1_468, 973, 495, vec![]).unwrap();
    let (ft, at) = (federal.to_text(), alberta.to_text());
    let line = |label: &str, text: &str| {
        text.lines()
            .find(|l| l.starts_with(label))
            .map(|l| l[label.len()..].trim().to_string())
            .unwrap_or_default()
    };
    let got = [
        line("abusive rate", &ft),
        line("abusive rate", &at),
        line("sent rate", &at),
    ];
    let oracle = [
        percent_oracle(9_987, 228_255),
        percent_oracle(1_468, 12_726),
        percent_oracle(973, 12_726),
    ];
    let published = ["4.38%", "11.54%", "7.65%"];
    let json: serde_json::Value = serde_json::from_str(&alberta.to_json().unwrap()).unwrap();
    let both_fields =
        json.get("abusive_rate").is_some_and(|v| v.is_f64()) && json.get("sent_rate").is_some_and(|v| v.is_f64());
    let full_precision = json["sent_rate"].as_f64() == Some(973.0 / 12_726.0);
    verdict(
        got == oracle && got == published && both_fields && full_precision,
        format!("rendered {got:?}, integer oracle {oracle:?}, published {published:?}; JSON has both rates at full precision: {}", both_fields && full_precision),
    )
}

fn rate_limit_fuzz() -> Outcome {
    const DECISIONS: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2019);
    let base = Utc.with_ymd_and_hms(2019, 9, 11, 0, 0, 0).unwrap();

    // direct limiter: bursty, partly out-of-order request times
    let mut limiter_bad = 0;
    let mut granted_total = 0;
    for _ in 0..20 {
        let rate = RateLimitConfig {
            daily_cap: rng.random_range(1..=150),
            min_interval_secs: rng.random_range(0..=900),
        };
        let mut limiter = RateLimiter::new(rate);
        let mut t = base;
        let mut granted = Vec::new();
        for _ in 0..DECISIONS {
            let step = if rng.random_bool(0.7) {
                rng.random_range(0..20)
            } else {
                rng.random_range(0..4000)
            };
            t += chrono::Duration::seconds(step);
            let at = if rng.random_bool(0.1) {
                t - chrono::Duration::seconds(rng.random_range(0..3600))
            } else {
                t
            };
            if limiter.try_acquire(at) {
                granted.push(at);
            }
        }
        granted_total += granted.len();
        limiter_bad += violations(&granted, rate);
    }

    // end to end: 10,000 decided tweets replayed through the engine
    let dir = tempfile::tempdir().unwrap();
    let rate = RateLimitConfig {
        daily_cap: 37,
        min_interval_secs: 240,
    };
    let mut spec = FixtureSpec::new(DECISIONS, DECISIONS);
    spec.seed = 3;
    let mut tweets = fixture::generate(&spec).unwrap();
    let mut t = base;
    for tw in &mut tweets {
        t += chrono::Duration::seconds(if rng.random_bool(0.8) {
            rng.random_range(0..60)
        } else {
            rng.random_range(0..7200)
        });
        tw.timestamp = t;
    }
    fixture::write_bundle(&spec, dir.path()).unwrap();
    fixture::write_jsonl(&tweets, &dir.path().join("tweets.jsonl")).unwrap();
    let run = replay_bundle(dir.path(), "fuzz.db", 0.5, rate, 11);
    let engine_bad = violations(&run.sent_at, rate);
    verdict(
        limiter_bad == 0 && engine_bad == 0 && run.summary.decided == DECISIONS as u64 && run.stats.sent > 0,
        format!(
            "limiter: 20 random configs x {DECISIONS} requests, {granted_total} granted, {limiter_bad} violations; \
             engine: {} decisions, {} sent, {} suppressed, {engine_bad} violations",
            run.summary.decided, run.stats.sent, run.stats.suppressed
        ),
    )
}

fn main() -> ExitCode {
    let mut suite = Suite { failed: 0 };
    suite.run("replay determinism and arithmetic (1000/100/50)", replay_determinism);
    suite.run("federal-scale replay (228,255 tweets)", federal_scale_replay);
    suite.run("report math", report_math);
    suite.run("rate-limit invariants fuzz", rate_limit_fuzz);
    if suite.failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria failed", suite.failed);
        ExitCode::FAILURE
    }
}
