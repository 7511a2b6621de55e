//! Selection of positivitweets: uniform draws without repetition until every
//! approved entry has been used once, then a fresh cycle.

use std::collections::BTreeSet;

use rand::Rng;

#[derive(Debug, Clone, Default)]
pub struct LibraryCycle {
    drawn: BTreeSet<i64>,
}

impl LibraryCycle {
    pub fn new() -> Self {
        Self::default()
    }

    /// Picks one of `approved` not yet drawn this cycle. Entries approved
    /// mid-cycle join the current cycle. `None` only when `approved` is empty.
    pub fn draw<R: Rng + ?Sized>(&mut self, approved: &[i64], rng: &mut R) -> Option<i64> {
        if approved.is_empty() {
            return None;
        }
        let mut fresh: Vec<i64> = approved.iter().copied().filter(|id| !self.drawn.contains(id)).collect();
        if fresh.is_empty() {
            self.drawn.clear();
            fresh = approved.to_vec();
        }
        fresh.sort_unstable();
        let pick = fresh[rng.random_range(0..fresh.len())];
        self.drawn.insert(pick);
        Some(pick)
    }

    pub fn drawn_this_cycle(&self) -> usize {
        self.drawn.len()
    }
}
