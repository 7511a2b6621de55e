//! Tweet cleaning.
//!
//! Rules run in a fixed order: lowercase, strip URLs, newlines to spaces,
//! collapse whitespace, then replace `@handle` mentions with the literal tag
//! `MENTION`. The tag is written after lowercasing, so it stays uppercase in
//! the output.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Literal tag substituted for every `@handle`.
pub const MENTION_TAG: &str = "MENTION";

static URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:https?://|www\.)\S*").unwrap());
static WHITESPACE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+").unwrap());
static MENTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@[A-Za-z0-9_]+").unwrap());

/// Output of [`clean`]. Contains no newlines, no doubled spaces, no URL and
/// no `@handle`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CleanText(String);

impl CleanText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<str> for CleanText {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CleanText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn clean(text: &str) -> CleanText {
    let lowered = lowercase_preserving_tag(text);
    let no_urls = URL.replace_all(&lowered, "");
    let no_newlines = no_urls.replace(['\r', '\n'], " ");
    let collapsed = WHITESPACE.replace_all(&no_newlines, " ");
    let mut out = collapsed.trim().to_string();
    // "@@jane" leaves "@MENTION" after one pass
    while MENTION.is_match(&out) {
        out = MENTION.replace_all(&out, MENTION_TAG).into_owned();
    }
    CleanText(out)
}

// An already-substituted tag must survive a second pass unchanged.
fn lowercase_preserving_tag(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for (i, piece) in text.split(MENTION_TAG).enumerate() {
        if i > 0 {
            out.push_str(MENTION_TAG);
        }
        out.push_str(&piece.to_lowercase());
    }
    out
}
