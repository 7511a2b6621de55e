//! Positivitweet submission and review. Entries move from `submitted` to
//! `approved` or `rejected`, and both of those are final. Only approved
//! entries are ever drawn by the responder.

use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};
use rusqlite::{params, Connection, OptionalExtension, Row};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{PipelineError, Result};
use crate::store::{parse_ts, ts};

pub const MAX_CHARS: usize = 280;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryState {
    Submitted,
    Approved,
    Rejected,
}

impl EntryState {
    pub fn as_str(self) -> &'static str {
        match self {
            EntryState::Submitted => "submitted",
            EntryState::Approved => "approved",
            EntryState::Rejected => "rejected",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "submitted" => Some(EntryState::Submitted),
            "approved" => Some(EntryState::Approved),
            "rejected" => Some(EntryState::Rejected),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Revision {
    pub editor: String,
    pub old_text: String,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivitweetEntry {
    pub id: i64,
    pub text: String,
    #[serde(default)]
    pub credit_handle: Option<String>,
    pub state: EntryState,
    pub submitted_at: DateTime<Utc>,
    #[serde(default)]
    pub reviewed_by: Option<String>,
    #[serde(default)]
    pub reviewed_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub history: Vec<Revision>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReviewAction {
    Approve,
    EditAndApprove { new_text: String },
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CurationError {
    #[error("text is empty")]
    EmptyText,
    #[error("text has {chars} characters, more than {MAX_CHARS}")]
    TooLong { chars: usize },
    #[error("no positivitweet with id {0}")]
    NotFound(i64),
    #[error("positivitweet {id} is already {state} and cannot be reviewed again")]
    Terminal { id: i64, state: &'static str },
}

impl CurationError {
    /// Stable machine-readable code for API clients.
    pub fn code(&self) -> &'static str {
        match self {
            CurationError::EmptyText => "empty_text",
            CurationError::TooLong { .. } => "text_too_long",
            CurationError::NotFound(_) => "not_found",
            CurationError::Terminal { .. } => "terminal_state",
        }
    }
}

pub fn validate_text(text: &str) -> std::result::Result<(), CurationError> {
    if text.trim().is_empty() {
        return Err(CurationError::EmptyText);
    }
    let chars = text.chars().count();
    if chars > MAX_CHARS {
        return Err(CurationError::TooLong { chars });
    }
    Ok(())
}

const ENTRY_COLUMNS: &str = "id, text, credit_handle, state, submitted_at, reviewed_by, reviewed_at";

fn entry_from_row(row: &Row<'_>) -> rusqlite::Result<PositivitweetEntry> {
    let state: String = row.get(3)?;
    let reviewed_at: Option<String> = row.get(6)?;
    Ok(PositivitweetEntry {
        id: row.get(0)?,
        text: row.get(1)?,
        credit_handle: row.get(2)?,
        state: EntryState::parse(&state).unwrap_or(EntryState::Submitted),
        submitted_at: parse_ts(&row.get::<_, String>(4)?),
        reviewed_by: row.get(5)?,
        reviewed_at: reviewed_at.as_deref().map(parse_ts),
        history: Vec::new(),
    })
}

fn load_history(conn: &Connection, entry: &mut PositivitweetEntry) -> Result<()> {
    let mut stmt = conn
        .prepare_cached("SELECT editor, old_text, at FROM positivitweet_revisions WHERE entry_id = ?1 ORDER BY id")?;
    entry.history = stmt
        .query_map([entry.id], |r| {
            Ok(Revision {
                editor: r.get(0)?,
                old_text: r.get(1)?,
                at: parse_ts(&r.get::<_, String>(2)?),
            })
        })?
        .collect::<rusqlite::Result<_>>()?;
    Ok(())
}

pub fn get(conn: &Connection, id: i64) -> Result<PositivitweetEntry> {
    let mut entry = conn
        .query_row(
            &format!("SELECT {ENTRY_COLUMNS} FROM positivitweets WHERE id = ?1"),
            [id],
            entry_from_row,
        )
        .optional()?
        .ok_or(CurationError::NotFound(id))?;
    load_history(conn, &mut entry)?;
    Ok(entry)
}

pub fn list(conn: &Connection, state: Option<EntryState>) -> Result<Vec<PositivitweetEntry>> {
    let mut stmt = conn.prepare_cached(&format!(
        "SELECT {ENTRY_COLUMNS} FROM positivitweets WHERE ?1 IS NULL OR state = ?1 ORDER BY id"
    ))?;
    let mut entries: Vec<PositivitweetEntry> = stmt
        .query_map([state.map(EntryState::as_str)], entry_from_row)?
        .collect::<rusqlite::Result<_>>()?;
    for e in &mut entries {
        load_history(conn, e)?;
    }
    Ok(entries)
}

/// Ids of approved entries, ascending.
pub fn approved_ids(conn: &Connection) -> Result<Vec<i64>> {
    let mut stmt = conn.prepare_cached("SELECT id FROM positivitweets WHERE state = 'approved' ORDER BY id")?;
    let ids = stmt.query_map([], |r| r.get(0))?.collect::<rusqlite::Result<_>>()?;
    Ok(ids)
}

pub fn submit(
    conn: &Connection,
    text: &str,
    credit_handle: Option<&str>,
    now: DateTime<Utc>,
) -> Result<PositivitweetEntry> {
    validate_text(text)?;
    conn.execute(
        "INSERT INTO positivitweets (text, credit_handle, state, submitted_at) VALUES (?1, ?2, 'submitted', ?3)",
        params![text, credit_handle, ts(now)],
    )?;
    get(conn, conn.last_insert_rowid())
}

pub fn review(
    conn: &Connection,
    id: i64,
    action: &ReviewAction,
    operator: &str,
    now: DateTime<Utc>,
) -> Result<PositivitweetEntry> {
    let entry = get(conn, id)?;
    if entry.state != EntryState::Submitted {
        return Err(CurationError::Terminal {
            id,
            state: entry.state.as_str(),
        }
        .into());
    }
    let new_state = match action {
        ReviewAction::Approve => EntryState::Approved,
        ReviewAction::Reject => EntryState::Rejected,
        ReviewAction::EditAndApprove { new_text } => {
            validate_text(new_text)?;
            conn.execute(
                "INSERT INTO positivitweet_revisions (entry_id, editor, old_text, at) VALUES (?1, ?2, ?3, ?4)",
                params![id, operator, entry.text, ts(now)],
            )?;
            conn.execute(
                "UPDATE positivitweets SET text = ?1 WHERE id = ?2",
                params![new_text, id],
            )?;
            EntryState::Approved
        }
    };
    conn.execute(
        "UPDATE positivitweets SET state = ?1, reviewed_by = ?2, reviewed_at = ?3 WHERE id = ?4",
        params![new_state.as_str(), operator, ts(now), id],
    )?;
    get(conn, id)
}

/// Inserts every entry of a JSON Lines export as a new row, keeping state,
/// review fields and history but assigning fresh ids.
pub fn import_jsonl<R: BufRead>(conn: &Connection, reader: R) -> Result<usize> {
    let mut n = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| PipelineError::io("<library>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: PositivitweetEntry = serde_json::from_str(&line)
            .map_err(|err| PipelineError::Config(format!("library line {}: {err}", i + 1)))?;
        validate_text(&e.text)?;
        conn.execute(
            "INSERT INTO positivitweets (text, credit_handle, state, submitted_at, reviewed_by, reviewed_at)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
            params![
                e.text,
                e.credit_handle,
                e.state.as_str(),
                ts(e.submitted_at),
                e.reviewed_by,
                e.reviewed_at.map(ts)
            ],
        )?;
        let id = conn.last_insert_rowid();
        for r in &e.history {
            conn.execute(
                "INSERT INTO positivitweet_revisions (entry_id, editor, old_text, at) VALUES (?1, ?2, ?3, ?4)",
                params![id, r.editor, r.old_text, ts(r.at)],
            )?;
        }
        n += 1;
    }
    Ok(n)
}

pub fn export_jsonl<W: Write>(conn: &Connection, mut writer: W) -> Result<usize> {
    let entries = list(conn, None)?;
    for e in &entries {
        serde_json::to_writer(&mut writer, e)?;
        writer
            .write_all(b"\n")
            .map_err(|err| PipelineError::io("<library>", err))?;
    }
    Ok(entries.len())
}
