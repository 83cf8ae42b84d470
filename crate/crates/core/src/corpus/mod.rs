//! Child narrative records, score sets and corpus files.
//!
//! A corpus file is UTF-8 JSON Lines: one [`ChildRecord`] object per line.
//! Optional fields are omitted rather than written as `null`. Transcripts
//! keep one utterance per line (`\n`-separated), which is also the sentence
//! unit used for readability.

mod noise;
mod synth;

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::tokenize;
use crate::util::sha256_hex;

pub use noise::{corrupt_records, corrupt_transcript, levenshtein, measure_cer};
pub use synth::{
    synthesize_corpus, PlantedFeature, PlantedModel, PlantedTerm, SynthSpec, SyntheticCorpus,
};

pub const NS_MAX: f64 = 16.0;
pub const CQ_MAX: f64 = 10.0;
pub const SC_MIN: u8 = 1;
pub const SC_MAX: u8 = 6;
/// SC categories at or below this value require intervention.
pub const SC_INTERVENTION_MAX: u8 = 2;

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::InvalidArgument(format!(
                        concat!("unknown ", stringify!($name), " {:?}"), other
                    ))),
                }
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Afrikaans,
    Isixhosa,
}
string_enum!(Language { Afrikaans => "afrikaans", Isixhosa => "isixhosa" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}
string_enum!(Split { Train => "train", Dev => "dev", Test => "test" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TranscriptVariant {
    Oracle,
    Asr,
}
string_enum!(TranscriptVariant { Oracle => "oracle", Asr => "asr" });

/// The four assessment targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Ns,
    Cq,
    Sc,
    Ri,
}
string_enum!(Task { Ns => "ns", Cq => "cq", Sc => "sc", Ri => "ri" });

impl Task {
    pub fn is_regression(self) -> bool {
        matches!(self, Task::Ns | Task::Cq)
    }

    /// Valid range of a regression target.
    pub fn range(self) -> Option<(f64, f64)> {
        match self {
            Task::Ns => Some((0.0, NS_MAX)),
            Task::Cq => Some((0.0, CQ_MAX)),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Task::Ns => "NS",
            Task::Cq => "CQ",
            Task::Sc => "SC",
            Task::Ri => "RI",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Utterance {
    pub text: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl Utterance {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSet {
    pub ns: f64,
    pub cq: f64,
    pub sc: u8,
    pub ri: bool,
}

pub fn requires_intervention(sc: u8) -> bool {
    sc <= SC_INTERVENTION_MAX
}

impl ScoreSet {
    /// Builds a score set with RI derived from SC.
    pub fn from_scores(ns: f64, cq: f64, sc: u8) -> Self {
        ScoreSet {
            ns,
            cq,
            sc,
            ri: requires_intervention(sc),
        }
    }

    pub fn check_ranges(&self) -> Result<()> {
        check_range("ns", self.ns, 0.0, NS_MAX)?;
        check_range("cq", self.cq, 0.0, CQ_MAX)?;
        check_range("sc", f64::from(self.sc), f64::from(SC_MIN), f64::from(SC_MAX))?;
        Ok(())
    }

    /// Range checks plus the ground-truth rule RI ⇔ SC ≤ 2.
    pub fn check_ground_truth(&self) -> Result<()> {
        self.check_ranges()?;
        if self.ri != requires_intervention(self.sc) {
            return Err(Error::Corpus(format!(
                "ri = {} is inconsistent with sc = {} (ri must equal sc <= {SC_INTERVENTION_MAX})",
                self.ri, self.sc
            )));
        }
        Ok(())
    }

    pub fn value(&self, task: Task) -> f64 {
        match task {
            Task::Ns => self.ns,
            Task::Cq => self.cq,
            Task::Sc => f64::from(self.sc),
            Task::Ri => f64::from(u8::from(self.ri)),
        }
    }
}

fn check_range(field: &'static str, value: f64, min: f64, max: f64) -> Result<()> {
    if !value.is_finite() || value < min || value > max {
        return Err(Error::OutOfRange {
            field,
            value,
            min,
            max,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChildRecord {
    pub child_id: String,
    pub language: Language,
    pub split: Split,
    pub utterances: Vec<Utterance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_oracle: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_asr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<ScoreSet>,
}

impl ChildRecord {
    pub fn transcript(&self, variant: TranscriptVariant) -> Option<&str> {
        match variant {
            TranscriptVariant::Oracle => self.transcript_oracle.as_deref(),
            TranscriptVariant::Asr => self.transcript_asr.as_deref(),
        }
    }

    pub fn require_transcript(&self, variant: TranscriptVariant) -> Result<&str> {
        self.transcript(variant).ok_or_else(|| {
            Error::Corpus(format!(
                "child {} has no {variant} transcript",
                self.child_id
            ))
        })
    }

    /// Checks the per-record invariants.
    pub fn validate(&self) -> Result<()> {
        if self.child_id.trim().is_empty() {
            return Err(Error::Corpus("empty child_id".into()));
        }
        if self.transcript_oracle.is_none() && self.transcript_asr.is_none() {
            return Err(Error::Corpus("no transcript variant present".into()));
        }
        let mut prev_end = f64::NEG_INFINITY;
        for (i, u) in self.utterances.iter().enumerate() {
            if u.text.trim().is_empty() {
                return Err(Error::Corpus(format!("utterance {i} has empty text")));
            }
            if !(u.start_s.is_finite() && u.end_s.is_finite()) || u.start_s < 0.0 {
                return Err(Error::Corpus(format!("utterance {i} has invalid timing")));
            }
            if u.end_s <= u.start_s {
                return Err(Error::Corpus(format!(
                    "utterance {i} ends ({}) before it starts ({})",
                    u.end_s, u.start_s
                )));
            }
            if u.start_s < prev_end {
                return Err(Error::Corpus(format!(
                    "utterance {i} overlaps or precedes the previous utterance"
                )));
            }
            prev_end = u.end_s;
        }
        if let Some(truth) = &self.truth {
            truth.check_ground_truth()?;
        }
        Ok(())
    }
}

/// A validated, language-homogeneous corpus bound to one transcript variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<ChildRecord>,
    language: Language,
    variant: TranscriptVariant,
    vocabulary: Vec<String>,
}

impl Corpus {
    /// Validates `records` and builds the vocabulary from the train split.
    pub fn new(records: Vec<ChildRecord>, variant: TranscriptVariant) -> Result<Self> {
        validate_records(&records)?;
        let language = records
            .first()
            .map(|r| r.language)
            .ok_or_else(|| Error::Corpus("corpus has no records".into()))?;
        for (i, r) in records.iter().enumerate() {
            if r.transcript(variant).is_none() {
                return Err(record_error(i, r, format!("missing {variant} transcript")));
            }
        }
        let vocabulary = build_vocabulary(&records, variant);
        Ok(Corpus {
            records,
            language,
            variant,
            vocabulary,
        })
    }

    pub fn records(&self) -> &[ChildRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<ChildRecord> {
        self.records
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn variant(&self) -> TranscriptVariant {
        self.variant
    }

    /// Sorted word types of the train split.
    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ChildRecord> + '_ {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn get(&self, child_id: &str) -> Option<&ChildRecord> {
        self.records.iter().find(|r| r.child_id == child_id)
    }

    pub fn fingerprint(&self) -> String {
        records_fingerprint(&self.records)
    }
}

/// Word types from the train split only.
pub fn build_vocabulary(records: &[ChildRecord], variant: TranscriptVariant) -> Vec<String> {
    records
        .iter()
        .filter(|r| r.split == Split::Train)
        .filter_map(|r| r.transcript(variant))
        .flat_map(tokenize)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn record_error(index: usize, record: &ChildRecord, message: String) -> Error {
    Error::Record {
        line: index + 1,
        child_id: Some(record.child_id.clone()),
        message,
    }
}

/// Checks record invariants, id uniqueness and language homogeneity.
pub fn validate_records(records: &[ChildRecord]) -> Result<()> {
    let mut seen = HashSet::new();
    let language = records.first().map(|r| r.language);
    for (i, r) in records.iter().enumerate() {
        r.validate()
            .map_err(|e| record_error(i, r, e.to_string()))?;
        if !seen.insert(r.child_id.as_str()) {
            return Err(record_error(i, r, "duplicate child_id".into()));
        }
        if Some(r.language) != language {
            return Err(record_error(
                i,
                r,
                format!("language {} differs from corpus language", r.language),
            ));
        }
    }
    Ok(())
}

/// Parses a corpus file without validating invariants.
pub fn read_records(path: &Path) -> Result<Vec<ChildRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ChildRecord = serde_json::from_str(&line).map_err(|e| Error::Record {
            line: i + 1,
            child_id: serde_json::from_str::<serde_json::Value>(&line)
                .ok()
                .and_then(|v| v.get("child_id")?.as_str().map(str::to_owned)),
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Reads, validates and indexes a corpus file.
pub fn load_corpus(path: &Path, variant: TranscriptVariant) -> Result<Corpus> {
    Corpus::new(read_records(path)?, variant)
}

pub fn records_to_jsonl(records: &[ChildRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_records(path: &Path, records: &[ChildRecord]) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(records_to_jsonl(records).as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn records_fingerprint(records: &[ChildRecord]) -> String {
    sha256_hex(records_to_jsonl(records).as_bytes())
}
