use std::sync::Mutex;

use chrono::{DateTime, Utc};

/// Source of "now" for timestamps and rate limiting. Replays drive a manual
/// clock from fixture timestamps so that runs are reproducible.
#[derive(Debug)]
pub enum Clock {
    System,
    Manual(Mutex<DateTime<Utc>>),
}

impl Clock {
    pub fn manual(start: DateTime<Utc>) -> Self {
        Clock::Manual(Mutex::new(start))
    }

    pub fn now(&self) -> DateTime<Utc> {
        match self {
            Clock::System => Utc::now(),
            Clock::Manual(t) => *t.lock().expect("clock lock"),
        }
    }

    /// Moves a manual clock to `t`; the system clock ignores this.
    pub fn set(&self, t: DateTime<Utc>) {
        if let Clock::Manual(m) = self {
            *m.lock().expect("clock lock") = t;
        }
    }

    pub fn is_manual(&self) -> bool {
        matches!(self, Clock::Manual(_))
    }
}
