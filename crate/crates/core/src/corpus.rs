//! Candidate rosters, first-name gender lookup, and labeled tweet corpora.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textprep::{clean, CleanText};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenderCategory {
    Female,
    MostlyFemale,
    Male,
    MostlyMale,
    Ambiguous,
    Unknown,
}

impl GenderCategory {
    pub const ALL: [GenderCategory; 6] = [
        GenderCategory::Female,
        GenderCategory::MostlyFemale,
        GenderCategory::Male,
        GenderCategory::MostlyMale,
        GenderCategory::Ambiguous,
        GenderCategory::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GenderCategory::Female => "female",
            GenderCategory::MostlyFemale => "mostly_female",
            GenderCategory::Male => "male",
            GenderCategory::MostlyMale => "mostly_male",
            GenderCategory::Ambiguous => "ambiguous",
            GenderCategory::Unknown => "unknown",
        }
    }
}

impl fmt::Display for GenderCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GenderCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GenderCategory::ALL
            .into_iter()
            .find(|g| g.as_str() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown gender category `{s}`")))
    }
}

/// First-name lookup table loaded from a `name<TAB>category` file.
#[derive(Debug, Clone, Default)]
pub struct NameTable {
    names: HashMap<String, GenderCategory>,
}

const DEFAULT_NAMES: &str = include_str!("../data/names.tsv");

impl NameTable {
    /// The small table bundled with the crate.
    pub fn bundled() -> Self {
        Self::parse(DEFAULT_NAMES).expect("bundled name table parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut names = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, category) = line.split_once('\t').ok_or_else(|| Error::BadRow {
                row: i + 1,
                message: "expected name<TAB>category".into(),
            })?;
            let category = category.parse().map_err(|_| Error::BadRow {
                row: i + 1,
                message: format!("unknown category `{category}`"),
            })?;
            names.insert(name.trim().to_lowercase(), category);
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Case-insensitive exact lookup; names missing from the table are `Unknown`.
pub fn predict_gender(first_name: &str, table: &NameTable) -> GenderCategory {
    table
        .names
        .get(&first_name.trim().to_lowercase())
        .copied()
        .unwrap_or(GenderCategory::Unknown)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub handle: String,
    pub display_name: String,
    pub first_name: String,
    pub gender_declared: Option<GenderCategory>,
    pub gender_predicted: GenderCategory,
    pub party: String,
    pub tracked: bool,
}

impl Candidate {
    /// Declared gender wins over the name-table prediction.
    pub fn effective_gender(&self) -> GenderCategory {
        self.gender_declared.unwrap_or(self.gender_predicted)
    }
}

pub const ROSTER_COLUMNS: [&str; 6] = [
    "handle",
    "display_name",
    "first_name",
    "gender_declared",
    "party",
    "tracked",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Roster {
    pub candidates: Vec<Candidate>,
}

impl Roster {
    pub fn tracked_handles(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().filter(|c| c.tracked).map(|c| c.handle.as_str())
    }

    pub fn get(&self, handle: &str) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.handle == handle)
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(file)
    }

    pub fn write_to<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(ROSTER_COLUMNS)?;
        for c in &self.candidates {
            w.write_record([
                c.handle.as_str(),
                c.display_name.as_str(),
                c.first_name.as_str(),
                c.gender_declared.map(GenderCategory::as_str).unwrap_or(""),
                c.party.as_str(),
                if c.tracked { "true" } else { "false" },
            ])?;
        }
        w.flush().map_err(|e| Error::io("<roster>", e))?;
        Ok(())
    }
}

pub fn load_roster(path: impl AsRef<Path>, names: &NameTable) -> Result<Roster> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_roster(file, names)
}

pub fn read_roster<R: Read>(reader: R, names: &NameTable) -> Result<Roster> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let [handle_i, display_i, first_i, gender_i, party_i, tracked_i] = [
        col("handle")?,
        col("display_name")?,
        col("first_name")?,
        col("gender_declared")?,
        col("party")?,
        col("tracked")?,
    ];

    let mut seen = HashSet::new();
    let mut candidates = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let field = |idx: usize| record.get(idx).unwrap_or("").to_string();
        let handle = field(handle_i).trim_start_matches('@').to_string();
        if handle.is_empty() {
            return Err(Error::BadRow {
                row,
                message: "empty handle".into(),
            });
        }
        if !seen.insert(handle.clone()) {
            return Err(Error::DuplicateHandle(handle));
        }
        let declared = match field(gender_i).as_str() {
            "" => None,
            s => Some(s.parse::<GenderCategory>().map_err(|_| Error::BadRow {
                row,
                message: format!("unknown gender_declared `{s}`"),
            })?),
        };
        let tracked = match field(tracked_i).to_ascii_lowercase().as_str() {
            "" | "true" | "1" | "yes" => true,
            "false" | "0" | "no" => false,
            other => {
                return Err(Error::BadRow {
                    row,
                    message: format!("bad tracked flag `{other}`"),
                })
            }
        };
        let first_name = field(first_i);
        candidates.push(Candidate {
            gender_predicted: predict_gender(&first_name, names),
            handle,
            display_name: field(display_i),
            first_name,
            gender_declared: declared,
            party: field(party_i),
            tracked,
        });
    }
    Ok(Roster { candidates })
}

/// A raw stream item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tweet {
    pub id: String,
    pub text: String,
    pub lang: String,
    pub author_handle: String,
    #[serde(default)]
    pub mentioned_handles: Vec<String>,
    #[serde(default)]
    pub is_retweet: bool,
    pub timestamp: DateTime<Utc>,
}

impl Tweet {
    /// Strips leading `@` and drops repeated handles, keeping first-seen order.
    pub fn normalize_mentions(&mut self) {
        let mut seen = HashSet::new();
        self.mentioned_handles = self
            .mentioned_handles
            .iter()
            .map(|h| h.trim_start_matches('@').to_string())
            .filter(|h| seen.insert(h.to_lowercase()))
            .collect();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    NotHateful,
    Hateful,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Hateful => "hateful",
            Label::NotHateful => "not_hateful",
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Hateful
    }

    pub fn from_positive(positive: bool) -> Self {
        if positive {
            Label::Hateful
        } else {
            Label::NotHateful
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "hateful" => Ok(Label::Hateful),
            "not_hateful" => Ok(Label::NotHateful),
            other => Err(Error::InvalidArgument(format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: String,
    pub raw_text: String,
    pub clean_text: CleanText,
    pub label: Label,
}

impl LabeledExample {
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>, label: Label) -> Self {
        let raw_text = raw_text.into();
        Self {
            id: id.into(),
            clean_text: clean(&raw_text),
            raw_text,
            label,
        }
    }
}

/// Hateful / not-hateful examples. The class balance is always derived from
/// the examples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledCorpus {
    examples: Vec<LabeledExample>,
}

impl LabeledCorpus {
    /// Builds a corpus, dropping examples whose cleaned text repeats an
    /// earlier one. Duplicate ids are rejected.
    pub fn from_examples(examples: impl IntoIterator<Item = LabeledExample>) -> Result<Self> {
        let mut ids = HashSet::new();
        let mut texts = HashSet::new();
        let mut kept = Vec::new();
        for ex in examples {
            if !texts.insert(ex.clean_text.clone()) {
                continue;
            }
            if !ids.insert(ex.id.clone()) {
                return Err(Error::DuplicateId(ex.id));
            }
            kept.push(ex);
        }
        Ok(Self { examples: kept })
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.examples.iter().filter(|e| e.label == label).count()
    }

    /// Fraction hateful; 0 for an empty corpus.
    pub fn class_balance(&self) -> f64 {
        if self.examples.is_empty() {
            0.0
        } else {
            self.count(Label::Hateful) as f64 / self.examples.len() as f64
        }
    }
}

pub const LABELED_COLUMNS: [&str; 3] = ["id", "text", "label"];

pub fn load_labeled_dataset(path: impl AsRef<Path>) -> Result<LabeledCorpus> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_labeled_dataset(file)
}

pub fn read_labeled_dataset<R: Read>(reader: R) -> Result<LabeledCorpus> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = LABELED_COLUMNS
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim() == *name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        })
        .collect::<Result<_>>()?;
    let mut examples = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let label_token = record.get(idx[2]).unwrap_or("");
        let label = label_token.parse::<Label>().map_err(|_| Error::BadRow {
            row,
            message: format!("unknown label `{label_token}`"),
        })?;
        examples.push(LabeledExample::new(
            record.get(idx[0]).unwrap_or("").trim(),
            record.get(idx[1]).unwrap_or(""),
            label,
        ));
    }
    LabeledCorpus::from_examples(examples)
}

/// Loads the public online-harassment corpus in its tab-separated form
/// (`ID`, `Code` with `H`/`N`, `Tweet` columns). Bytes that are not valid
/// UTF-8 are replaced.
pub fn load_harassment_tsv(path: impl AsRef<Path>) -> Result<LabeledCorpus> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8_lossy(&bytes);
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (id_i, code_i, tweet_i) = (find("ID")?, find("Code")?, find("Tweet")?);
    let mut examples = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let label = match record.get(code_i).map(str::trim) {
            Some("H") => Label::Hateful,
            Some("N") => Label::NotHateful,
            other => {
                return Err(Error::BadRow {
                    row,
                    message: format!("unknown code `{}`", other.unwrap_or("")),
                })
            }
        };
        examples.push(LabeledExample::new(
            record.get(id_i).unwrap_or("").trim(),
            record.get(tweet_i).unwrap_or(""),
            label,
        ));
    }
    LabeledCorpus::from_examples(examples)
}

/// Stratified split. Each class contributes `floor(count * train_fraction)`
/// examples to train and the rest to test.
pub fn split_train_test(
    corpus: &LabeledCorpus,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledCorpus, LabeledCorpus)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in [Label::Hateful, Label::NotHateful] {
        let mut members: Vec<&LabeledExample> = corpus.examples.iter().filter(|e| e.label == label).collect();
        if members.is_empty() {
            return Err(Error::EmptyClass(label.as_str()));
        }
        members.shuffle(&mut rng);
        let n_train = stratum_train_count(members.len(), train_fraction);
        train.extend(members[..n_train].iter().map(|e| (*e).clone()));
        test.extend(members[n_train..].iter().map(|e| (*e).clone()));
    }
    Ok((LabeledCorpus { examples: train }, LabeledCorpus { examples: test }))
}

// The epsilon keeps products such as 15065 * 0.8 from flooring one short.
fn stratum_train_count(count: usize, fraction: f64) -> usize {
    ((count as f64 * fraction) + 1e-9).floor() as usize
}
