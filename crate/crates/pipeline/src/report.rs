//! Election-period rollup of persisted outcomes.

use std::fmt::Write as _;

use rusqlite::Connection;
use serde::{Deserialize, Serialize};

use crate::engine::THETA_KEY;
use crate::error::{PipelineError, Result};
use crate::store::{self, ConfigChange, Period};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectionReport {
    pub period: Period,
    pub total_analysed: u64,
    pub total_abusive: u64,
    pub total_sent: u64,
    pub total_suppressed: u64,
    /// total_abusive / total_analysed, as a fraction.
    pub abusive_rate: f64,
    /// total_sent / total_analysed, as a fraction.
    pub sent_rate: f64,
    /// The θ in force when the period opens, then every change inside it.
    pub theta_history: Vec<ConfigChange>,
    pub empty: bool,
}

impl ElectionReport {
    pub fn from_counts(
        period: Period,
        analysed: u64,
        abusive: u64,
        sent: u64,
        suppressed: u64,
        theta_history: Vec<ConfigChange>,
    ) -> Result<Self> {
        if abusive > analysed || sent > abusive {
            return Err(PipelineError::Config(format!(
                "inconsistent counts: sent {sent}, abusive {abusive}, analysed {analysed}"
            )));
        }
        let rate = |n: u64| if analysed == 0 { 0.0 } else { n as f64 / analysed as f64 };
        Ok(Self {
            period,
            total_analysed: analysed,
            total_abusive: abusive,
            total_sent: sent,
            total_suppressed: suppressed,
            abusive_rate: rate(abusive),
            sent_rate: rate(sent),
            theta_history,
            empty: analysed == 0,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_text(&self) -> String {
        let bound = |t: Option<chrono::DateTime<chrono::Utc>>| t.map_or_else(|| "-".to_string(), store::ts);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "period            {} .. {}",
            bound(self.period.from),
            bound(self.period.to)
        );
        let _ = writeln!(out, "tweets analysed   {}", self.total_analysed);
        let _ = writeln!(out, "scored abusive    {}", self.total_abusive);
        let _ = writeln!(out, "positivitweets    {}", self.total_sent);
        let _ = writeln!(out, "suppressed        {}", self.total_suppressed);
        let _ = writeln!(out, "abusive rate      {:.2}%", 100.0 * self.abusive_rate);
        let _ = writeln!(out, "sent rate         {:.2}%", 100.0 * self.sent_rate);
        for c in &self.theta_history {
            let _ = writeln!(
                out,
                "theta {:<11} {} by {}",
                c.value,
                store::ts(c.changed_at),
                c.operator
            );
        }
        if self.empty {
            out.push_str("(no tweets analysed in this period)\n");
        }
        out
    }
}

/// Builds the report for `period` from persisted rows only.
pub fn report(conn: &Connection, period: &Period) -> Result<ElectionReport> {
    let c = store::counts(conn, period)?;
    let history = store::config_history(conn, Some(THETA_KEY))?;
    let opening = period
        .from
        .and_then(|from| history.iter().rev().find(|h| h.changed_at < from).cloned());
    let inside = history.into_iter().filter(|h| {
        period.from.is_none_or(|from| h.changed_at >= from) && period.to.is_none_or(|to| h.changed_at < to)
    });
    let theta_history = opening.into_iter().chain(inside).collect();
    ElectionReport::from_counts(*period, c.analysed, c.abusive, c.sent, c.suppressed, theta_history)
}
