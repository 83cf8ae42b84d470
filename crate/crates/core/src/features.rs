//! Transcript and timing features for the linear scorers.
//!
//! Every record maps to six fixed features followed by one count per
//! vocabulary word type, in vocabulary order.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::{ChildRecord, Corpus, TranscriptVariant};
use crate::error::{Error, Result};

/// Prefix of per-word-type feature names, e.g. `count:ikati`.
pub const WORD_FEATURE_PREFIX: &str = "count:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedFeature {
    DurationTotalS,
    UtteranceLenMeanS,
    UtteranceLenStdS,
    TokenCount,
    TypeCount,
    FleschReadingEase,
}

impl FixedFeature {
    pub const ALL: [FixedFeature; 6] = [
        FixedFeature::DurationTotalS,
        FixedFeature::UtteranceLenMeanS,
        FixedFeature::UtteranceLenStdS,
        FixedFeature::TokenCount,
        FixedFeature::TypeCount,
        FixedFeature::FleschReadingEase,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FixedFeature::DurationTotalS => "duration_total_s",
            FixedFeature::UtteranceLenMeanS => "utterance_len_mean_s",
            FixedFeature::UtteranceLenStdS => "utterance_len_std_s",
            FixedFeature::TokenCount => "token_count",
            FixedFeature::TypeCount => "type_count",
            FixedFeature::FleschReadingEase => "flesch_reading_ease",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&f| f == self).expect("listed in ALL")
    }

    pub fn is_duration(self) -> bool {
        matches!(
            self,
            FixedFeature::DurationTotalS
                | FixedFeature::UtteranceLenMeanS
                | FixedFeature::UtteranceLenStdS
        )
    }
}

pub fn word_feature_name(word: &str) -> String {
    format!("{WORD_FEATURE_PREFIX}{word}")
}

/// Lowercases, strips punctuation and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|raw| {
            raw.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

fn base_vowel(c: char) -> Option<char> {
    let base = match c {
        'a' | 'á' | 'à' | 'â' | 'ä' => 'a',
        'e' | 'é' | 'è' | 'ê' | 'ë' => 'e',
        'i' | 'í' | 'ì' | 'î' | 'ï' => 'i',
        'o' | 'ó' | 'ò' | 'ô' | 'ö' => 'o',
        'u' | 'ú' | 'ù' | 'û' | 'ü' => 'u',
        _ => return None,
    };
    Some(base)
}

/// Number of maximal vowel runs, at least 1.
pub fn count_syllables(word: &str) -> usize {
    let mut groups = 0;
    let mut in_vowel = false;
    for c in word.chars().flat_map(char::to_lowercase) {
        let vowel = base_vowel(c).is_some();
        if vowel && !in_vowel {
            groups += 1;
        }
        in_vowel = vowel;
    }
    groups.max(1)
}

/// Flesch reading ease: 206.835 − 1.015·(words/sentences) − 84.6·(syllables/words).
pub fn flesch_reading_ease<S: AsRef<str>>(sentences: &[Vec<S>]) -> Result<f64> {
    let sentence_count = sentences.len();
    let words: usize = sentences.iter().map(Vec::len).sum();
    if sentence_count == 0 || words == 0 {
        return Err(Error::InvalidArgument(
            "readability needs at least one sentence with one word".into(),
        ));
    }
    let syllables: usize = sentences
        .iter()
        .flatten()
        .map(|w| count_syllables(w.as_ref()))
        .sum();
    let words = words as f64;
    Ok(206.835 - 1.015 * (words / sentence_count as f64) - 84.6 * (syllables as f64 / words))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }
}

/// Feature layout frozen on a train vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    vocabulary: Vec<String>,
    index: HashMap<String, usize>,
    names: Vec<String>,
}

impl FeatureSchema {
    pub fn new(vocabulary: Vec<String>) -> Self {
        let index = vocabulary
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        let names = FixedFeature::ALL
            .iter()
            .map(|f| f.name().to_owned())
            .chain(vocabulary.iter().map(|w| word_feature_name(w)))
            .collect();
        FeatureSchema {
            vocabulary,
            index,
            names,
        }
    }

    pub fn from_corpus(corpus: &Corpus) -> Self {
        Self::new(corpus.vocabulary().to_vec())
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    fn values(&self, record: &ChildRecord, variant: TranscriptVariant) -> Result<Vec<f64>> {
        let transcript = record.require_transcript(variant)?;
        let mut values = vec![0.0; self.len()];

        let durations: Vec<f64> = record.utterances.iter().map(|u| u.duration_s()).collect();
        let total: f64 = durations.iter().sum();
        let (mean, std) = if durations.is_empty() {
            (0.0, 0.0)
        } else {
            let n = durations.len() as f64;
            let mean = total / n;
            let var = durations.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        };

        let sentences: Vec<Vec<String>> = transcript
            .split('\n')
            .map(tokenize)
            .filter(|s| !s.is_empty())
            .collect();
        let tokens: Vec<&str> = sentences.iter().flatten().map(String::as_str).collect();
        let types: HashSet<&str> = tokens.iter().copied().collect();
        // An empty transcript (possible after heavy ASR corruption) scores 0.
        let readability = if tokens.is_empty() {
            0.0
        } else {
            flesch_reading_ease(&sentences)?
        };

        values[FixedFeature::DurationTotalS.index()] = total;
        values[FixedFeature::UtteranceLenMeanS.index()] = mean;
        values[FixedFeature::UtteranceLenStdS.index()] = std;
        values[FixedFeature::TokenCount.index()] = tokens.len() as f64;
        values[FixedFeature::TypeCount.index()] = types.len() as f64;
        values[FixedFeature::FleschReadingEase.index()] = readability;
        let offset = FixedFeature::ALL.len();
        for token in tokens {
            if let Some(&i) = self.index.get(token) {
                values[offset + i] += 1.0;
            }
        }
        Ok(values)
    }
}

pub fn extract_features(
    record: &ChildRecord,
    schema: &FeatureSchema,
    variant: TranscriptVariant,
) -> Result<FeatureVector> {
    Ok(FeatureVector {
        names: schema.names().to_vec(),
        values: schema.values(record, variant)?,
    })
}

/// Rows of features, one per child, sharing a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub child_ids: Vec<String>,
    pub values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn build<'a>(
        records: impl IntoIterator<Item = &'a ChildRecord>,
        schema: &FeatureSchema,
        variant: TranscriptVariant,
    ) -> Result<Self> {
        let mut child_ids = Vec::new();
        let mut flat = Vec::new();
        for record in records {
            flat.extend(schema.values(record, variant)?);
            child_ids.push(record.child_id.clone());
        }
        let values = Array2::from_shape_vec((child_ids.len(), schema.len()), flat)
            .expect("every row has schema length");
        Ok(FeatureMatrix {
            names: schema.names().to_vec(),
            child_ids,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    /// CSV with a header row of feature names and one row per child.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("child_id");
        for name in &self.names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (id, row) in self.child_ids.iter().zip(self.values.rows()) {
            out.push_str(id);
            for v in row {
                write!(out, ",{v}").expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Language, Split, Utterance};
    use approx::assert_abs_diff_eq;

    fn record(utterances: &[(f64, f64, &str)]) -> ChildRecord {
        ChildRecord {
            child_id: "c1".into(),
            language: Language::Isixhosa,
            split: Split::Train,
            utterances: utterances
                .iter()
                .map(|&(start_s, end_s, text)| Utterance {
                    text: text.into(),
                    start_s,
                    end_s,
                })
                .collect(),
            transcript_oracle: Some(
                utterances.iter().map(|u| u.2).collect::<Vec<_>>().join("\n"),
            ),
            transcript_asr: None,
            truth: None,
        }
    }

    #[test]
    fn tokenize_cases() {
        assert_eq!(tokenize("Die kat spring!"), ["die", "kat", "spring"]);
        assert_eq!(
            tokenize("ikati  ifuna ibhabhathane"),
            ["ikati", "ifuna", "ibhabhathane"]
        );
        assert!(tokenize("").is_empty());
        assert!(tokenize(" ... , ").is_empty());
    }

    #[test]
    fn syllable_cases() {
        assert_eq!(count_syllables("kat"), 1);
        assert_eq!(count_syllables("ikati"), 3);
        assert_eq!(count_syllables("spring"), 1);
        assert_eq!(count_syllables("brrr"), 1);
        assert_eq!(count_syllables("reën"), 1);
        assert_eq!(count_syllables("kaïe"), 1);
        assert_eq!(count_syllables("môre"), 2);
    }

    #[test]
    fn flesch_cases() {
        let one = vec![vec!["the", "cat", "sat"]];
        assert_abs_diff_eq!(flesch_reading_ease(&one).unwrap(), 119.19, epsilon = 1e-9);
        let two = vec![one[0].clone(), one[0].clone()];
        assert_abs_diff_eq!(
            flesch_reading_ease(&two).unwrap(),
            flesch_reading_ease(&one).unwrap(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            flesch_reading_ease(&[vec!["ikat"]]).unwrap(),
            36.62,
            epsilon = 1e-9
        );
        assert!(flesch_reading_ease::<&str>(&[]).is_err());
        assert!(flesch_reading_ease::<&str>(&[vec![]]).is_err());
    }

    #[test]
    fn duration_features() {
        let r = record(&[(0.0, 2.0, "a"), (2.0, 5.0, "b")]);
        let f = extract_features(&r, &FeatureSchema::new(vec![]), TranscriptVariant::Oracle).unwrap();
        assert_eq!(f.get("duration_total_s"), Some(5.0));
        assert_eq!(f.get("utterance_len_mean_s"), Some(2.5));
        assert_eq!(f.get("utterance_len_std_s"), Some(0.5));
    }

    #[test]
    fn word_counts_and_oov() {
        let r = record(&[(0.0, 1.0, "ikati ikati ifuna")]);
        let schema = FeatureSchema::new(vec!["ikati".into(), "ifuna".into()]);
        let f = extract_features(&r, &schema, TranscriptVariant::Oracle).unwrap();
        assert_eq!(f.get("count:ikati"), Some(2.0));
        assert_eq!(f.get("count:ifuna"), Some(1.0));
        assert_eq!(f.get("token_count"), Some(3.0));
        assert_eq!(f.get("type_count"), Some(2.0));

        let oov = record(&[(0.0, 1.0, "inja ibaleka")]);
        let f = extract_features(&oov, &schema, TranscriptVariant::Oracle).unwrap();
        assert_eq!(&f.values[6..], &[0.0, 0.0]);
        assert_eq!(f.get("token_count"), Some(2.0));
    }

    #[test]
    fn missing_variant_is_an_error() {
        let r = record(&[(0.0, 1.0, "a")]);
        assert!(extract_features(&r, &FeatureSchema::new(vec![]), TranscriptVariant::Asr).is_err());
    }

    #[test]
    fn csv_has_header_and_one_row_per_child() {
        let r = record(&[(0.0, 1.0, "ikati")]);
        let schema = FeatureSchema::new(vec!["ikati".into()]);
        let m = FeatureMatrix::build([&r], &schema, TranscriptVariant::Oracle).unwrap();
        let csv = m.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0],
            "child_id,duration_total_s,utterance_len_mean_s,utterance_len_std_s,token_count,type_count,flesch_reading_ease,count:ikati"
        );
        assert!(lines[1].starts_with("c1,1,1,0,1,1,"));
    }
}
