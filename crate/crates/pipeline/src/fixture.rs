//! Synthetic replay fixtures with a known number of abusive tweets.
//!
//! Abusive tweets carry [`ABUSIVE_MARKER`]; the companion mock-scorer rules
//! give that token a high TOXICITY and everything else a low one, so the
//! count above any θ in (LOW, HIGH] is exact.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use counterpoint_core::corpus::{Candidate, GenderCategory, Roster, Tweet};
use counterpoint_core::scorers::{MockRule, MockRules, TOXICITY_ATTRIBUTES};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curation::{EntryState, PositivitweetEntry};
use crate::error::{PipelineError, Result};

pub const ABUSIVE_MARKER: &str = "zzabusivezz";
pub const HIGH_SCORE: f64 = 0.95;
pub const LOW_SCORE: f64 = 0.10;

const BENIGN: [&str; 8] = [
    "thanks for coming to the town hall last night",
    "what is your plan for transit in the north end?",
    "great debate performance, proud to support you",
    "can you clarify the position on housing costs",
    "saw your sign on my street this morning",
    "will there be an all candidates forum downtown",
    "how do i volunteer for the campaign",
    "the platform on childcare is really promising",
];

const ABUSIVE: [&str; 4] = [
    "you are a disgrace {m}",
    "{m} nobody wants you here",
    "get out of politics {m}",
    "{m} go back to where you came from",
];

const LIBRARY: [&str; 6] = [
    "Thank you to every candidate who puts their name forward. Democracy needs you.",
    "Women in politics make our institutions stronger. Keep going!",
    "Running for office takes courage. We see you and we appreciate you.",
    "Diverse voices lead to better decisions for everyone.",
    "Here's to all the candidates knocking on doors in the rain this week.",
    "Public service is hard work. Thank you for stepping up.",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub total: usize,
    pub abusive: usize,
    pub start: DateTime<Utc>,
    pub spacing_secs: i64,
    pub seed: u64,
    pub handles: Vec<String>,
}

impl FixtureSpec {
    pub fn new(total: usize, abusive: usize) -> Self {
        Self {
            total,
            abusive,
            start: Utc.with_ymd_and_hms(2019, 10, 1, 0, 0, 0).unwrap(),
            spacing_secs: 60,
            seed: 0,
            handles: default_handles(),
        }
    }
}

pub fn default_handles() -> Vec<String> {
    ["cand_alice", "cand_bea", "cand_chen", "cand_dana", "cand_erin"]
        .map(String::from)
        .to_vec()
}

/// Tweets spaced `spacing_secs` apart, exactly `abusive` of them marked,
/// all admissible under a filter tracking `handles`.
pub fn generate(spec: &FixtureSpec) -> Result<Vec<Tweet>> {
    if spec.abusive > spec.total {
        return Err(PipelineError::Config(format!(
            "{} abusive tweets requested out of {}",
            spec.abusive, spec.total
        )));
    }
    if spec.handles.is_empty() {
        return Err(PipelineError::Config("fixture needs at least one handle".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut marked = vec![false; spec.total];
    for i in sample(&mut rng, spec.total, spec.abusive) {
        marked[i] = true;
    }
    Ok((0..spec.total)
        .map(|i| {
            let handle = &spec.handles[rng.random_range(0..spec.handles.len())];
            let mention = format!("@{handle}");
            let text = if marked[i] {
                let t = ABUSIVE[rng.random_range(0..ABUSIVE.len())].replace("{m}", &mention);
                format!("{t} {ABUSIVE_MARKER}")
            } else {
                format!("{mention} {}", BENIGN[rng.random_range(0..BENIGN.len())])
            };
            Tweet {
                id: format!("{:09}", i + 1),
                text,
                lang: "en".into(),
                author_handle: format!("user{}", rng.random_range(0..5000u32)),
                mentioned_handles: vec![handle.clone()],
                is_retweet: false,
                timestamp: spec.start + Duration::seconds(spec.spacing_secs * i as i64),
            }
        })
        .collect())
}

/// Every toxicity attribute at [`LOW_SCORE`], raised to [`HIGH_SCORE`] for
/// texts containing the marker.
pub fn mock_rules() -> MockRules {
    let attrs: Vec<String> = TOXICITY_ATTRIBUTES.iter().map(|s| s.to_string()).collect();
    let mut rules = MockRules::uniform(&attrs, LOW_SCORE);
    rules.rules.push(MockRule {
        pattern: format!(r"\b{ABUSIVE_MARKER}\b"),
        scores: attrs.iter().map(|a| (a.clone(), HIGH_SCORE)).collect(),
    });
    rules
}

pub fn roster(handles: &[String]) -> Roster {
    Roster {
        candidates: handles
            .iter()
            .map(|h| Candidate {
                handle: h.clone(),
                display_name: h.replace('_', " "),
                first_name: h.trim_start_matches("cand_").to_string(),
                gender_declared: Some(GenderCategory::Female),
                gender_predicted: GenderCategory::Unknown,
                party: "independent".into(),
                tracked: true,
            })
            .collect(),
    }
}

/// A small approved library for demos and tests.
pub fn library(at: DateTime<Utc>) -> Vec<PositivitweetEntry> {
    LIBRARY
        .iter()
        .enumerate()
        .map(|(i, text)| PositivitweetEntry {
            id: i as i64 + 1,
            text: text.to_string(),
            credit_handle: None,
            state: EntryState::Approved,
            submitted_at: at,
            reviewed_by: Some("fixture".into()),
            reviewed_at: Some(at),
            history: vec![],
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| PipelineError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| PipelineError::io(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

/// Writes `tweets.jsonl`, `roster.csv`, `rules.json` and `library.jsonl`
/// into `dir`.
pub fn write_bundle(spec: &FixtureSpec, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    write_jsonl(&generate(spec)?, &dir.join("tweets.jsonl"))?;
    roster(&spec.handles).write_csv(dir.join("roster.csv"))?;
    let rules = dir.join("rules.json");
    std::fs::write(&rules, serde_json::to_string_pretty(&mock_rules())?).map_err(|e| PipelineError::io(&rules, e))?;
    write_jsonl(&library(spec.start), &dir.join("library.jsonl"))
}
