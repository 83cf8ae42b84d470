//! Deterministic synthetic corpora with planted linear score models.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    corrupt_records, ChildRecord, Corpus, Language, ScoreSet, Split, TranscriptVariant, Utterance,
    CQ_MAX, NS_MAX, SC_MAX,
};
use crate::error::{Error, Result};
use crate::features::{word_feature_name, FeatureSchema, FixedFeature};
use crate::util::derive_seed;

/// A feature a planted model may weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantedFeature {
    Fixed(FixedFeature),
    /// The i-th word of the generated lexicon, by descending frequency.
    Word(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTerm {
    pub feature: PlantedFeature,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedModel {
    pub intercept: f64,
    pub terms: Vec<PlantedTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub language: Language,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub vocab_size: usize,
    pub mean_utterances: f64,
    pub mean_words_per_utterance: f64,
    /// Zipf exponent of the word distribution.
    pub zipf_exponent: f64,
    pub ns_model: PlantedModel,
    pub cq_model: PlantedModel,
    /// Standard deviation of Gaussian noise added to NS and CQ.
    pub noise_sd: f64,
    /// When set, ASR transcripts are oracle transcripts corrupted to this CER.
    pub asr_cer: Option<f64>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let word = |i, weight| PlantedTerm {
            feature: PlantedFeature::Word(i),
            weight,
        };
        SynthSpec {
            language: Language::Afrikaans,
            train: 200,
            dev: 38,
            test: 28,
            vocab_size: 50,
            mean_utterances: 12.0,
            mean_words_per_utterance: 5.0,
            zipf_exponent: 1.0,
            ns_model: PlantedModel {
                intercept: 2.0,
                terms: vec![word(0, 0.4), word(3, 0.6), word(7, -0.7)],
            },
            cq_model: PlantedModel {
                intercept: 1.0,
                terms: vec![
                    PlantedTerm {
                        feature: PlantedFeature::Fixed(FixedFeature::TypeCount),
                        weight: 0.15,
                    },
                    word(1, 0.4),
                ],
            },
            noise_sd: 0.1,
            asr_cer: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// Planted NS terms resolved to feature names.
    pub ns_terms: Vec<(String, f64)>,
    pub cq_terms: Vec<(String, f64)>,
}

impl SyntheticCorpus {
    pub fn planted_ns_features(&self) -> Vec<&str> {
        self.ns_terms.iter().map(|(n, _)| n.as_str()).collect()
    }
}

const AFRIKAANS_ONSETS: &[&str] = &["b", "d", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "sk", "st", "kr", "gr"];
const AFRIKAANS_NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "aa", "ee", "oe", "ie", "ui", "ê", "ô"];
const XHOSA_ONSETS: &[&str] = &["b", "bh", "c", "d", "f", "g", "h", "k", "kh", "l", "m", "n", "ng", "p", "q", "s", "t", "th", "x", "y", "z"];
const XHOSA_NUCLEI: &[&str] = &["a", "e", "i", "o", "u"];
const XHOSA_PREFIXES: &[&str] = &["i", "u", "ku", "ba", "si", "ndi"];

fn generate_lexicon(language: Language, size: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut words = Vec::with_capacity(size);
    let (onsets, nuclei) = match language {
        Language::Afrikaans => (AFRIKAANS_ONSETS, AFRIKAANS_NUCLEI),
        Language::Isixhosa => (XHOSA_ONSETS, XHOSA_NUCLEI),
    };
    while words.len() < size {
        let syllables = rng.random_range(1..=3);
        let mut word = String::new();
        if language == Language::Isixhosa {
            word.push_str(XHOSA_PREFIXES[rng.random_range(0..XHOSA_PREFIXES.len())]);
        }
        for _ in 0..syllables {
            word.push_str(onsets[rng.random_range(0..onsets.len())]);
            word.push_str(nuclei[rng.random_range(0..nuclei.len())]);
        }
        if language == Language::Afrikaans && rng.random_bool(0.4) {
            word.push_str(onsets[rng.random_range(0..onsets.len())]);
        }
        if seen.insert(word.clone()) {
            words.push(word);
        }
    }
    words
}

fn split_label(split: Split) -> &'static str {
    match split {
        Split::Train => "tr",
        Split::Dev => "dv",
        Split::Test => "te",
    }
}

fn language_label(language: Language) -> &'static str {
    match language {
        Language::Afrikaans => "afr",
        Language::Isixhosa => "xho",
    }
}

fn resolve(model: &PlantedModel, lexicon: &[String], schema: &FeatureSchema) -> Result<Vec<(usize, String, f64)>> {
    model
        .terms
        .iter()
        .map(|term| {
            let name = match &term.feature {
                PlantedFeature::Fixed(f) => f.name().to_owned(),
                PlantedFeature::Word(i) => word_feature_name(lexicon.get(*i).ok_or_else(|| {
                    Error::InvalidArgument(format!("planted word {i} exceeds lexicon size {}", lexicon.len()))
                })?),
            };
            let index = schema.names().iter().position(|n| *n == name).ok_or_else(|| {
                Error::InvalidArgument(format!("planted feature {name} never occurs in the train split"))
            })?;
            Ok((index, name, term.weight))
        })
        .collect()
}

fn sc_from_ns(ns: f64) -> u8 {
    let width = NS_MAX / f64::from(SC_MAX);
    ((ns / width).floor() as u8).min(SC_MAX - 1) + 1
}

/// Generates a corpus whose NS and CQ are planted linear functions of the
/// oracle-transcript features plus Gaussian noise, clamped to range.
///
/// SC bins NS into six equal-width bins over [0, 16]; RI is SC ≤ 2.
pub fn synthesize_corpus(spec: &SynthSpec, seed: u64) -> Result<SyntheticCorpus> {
    if spec.vocab_size == 0 {
        return Err(Error::InvalidArgument("vocabulary size must be positive".into()));
    }
    if spec.train == 0 {
        return Err(Error::InvalidArgument("synthetic corpus needs train records".into()));
    }
    if !(spec.mean_utterances >= 1.0 && spec.mean_words_per_utterance >= 1.0) {
        return Err(Error::InvalidArgument(
            "mean utterances and words per utterance must be at least 1".into(),
        ));
    }
    if !(spec.noise_sd >= 0.0 && spec.noise_sd.is_finite()) {
        return Err(Error::InvalidArgument("noise_sd must be finite and non-negative".into()));
    }

    let mut lex_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "lexicon"));
    let lexicon = generate_lexicon(spec.language, spec.vocab_size, &mut lex_rng);
    let zipf: Vec<f64> = (1..=lexicon.len())
        .map(|r| (r as f64).powf(-spec.zipf_exponent))
        .collect();
    let zipf_total: f64 = zipf.iter().sum();
    let cumulative: Vec<f64> = zipf
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w / zipf_total;
            Some(*acc)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "records"));
    let mut records = Vec::with_capacity(spec.train + spec.dev + spec.test);
    let lang = language_label(spec.language);
    for (split, count) in [(Split::Train, spec.train), (Split::Dev, spec.dev), (Split::Test, spec.test)] {
        for k in 0..count {
            let n_utt = rng
                .random_range((spec.mean_utterances * 0.5)..=(spec.mean_utterances * 1.5))
                .round()
                .max(1.0) as usize;
            let mut t = rng.random_range(0.2..1.0);
            let mut utterances = Vec::with_capacity(n_utt);
            for _ in 0..n_utt {
                let n_words = rng
                    .random_range(1.0..=(2.0 * spec.mean_words_per_utterance - 1.0))
                    .round() as usize;
                let words: Vec<&str> = (0..n_words)
                    .map(|_| {
                        let u: f64 = rng.random();
                        let i = cumulative.partition_point(|&c| c < u).min(lexicon.len() - 1);
                        lexicon[i].as_str()
                    })
                    .collect();
                let duration = 0.35 * n_words as f64 + rng.random_range(0.2..0.8);
                utterances.push(Utterance {
                    text: words.join(" "),
                    start_s: round_ms(t),
                    end_s: round_ms(t + duration),
                });
                t += duration + rng.random_range(0.1..1.5);
            }
            let transcript = utterances
                .iter()
                .map(|u| u.text.as_str())
                .collect::<Vec<_>>()
                .join("\n");
            records.push(ChildRecord {
                child_id: format!("{lang}-{}-{:04}", split_label(split), k + 1),
                language: spec.language,
                split,
                utterances,
                transcript_oracle: Some(transcript),
                transcript_asr: None,
                truth: None,
            });
        }
    }

    let draft = Corpus::new(records, TranscriptVariant::Oracle)?;
    let schema = FeatureSchema::from_corpus(&draft);
    let ns_terms = resolve(&spec.ns_model, &lexicon, &schema)?;
    let cq_terms = resolve(&spec.cq_model, &lexicon, &schema)?;
    let x = crate::features::FeatureMatrix::build(draft.records(), &schema, TranscriptVariant::Oracle)?;

    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "noise"));
    let planted = |terms: &[(usize, String, f64)], intercept: f64, row: usize| {
        intercept + terms.iter().map(|(j, _, w)| w * x.values[[row, *j]]).sum::<f64>()
    };
    let mut records = draft.into_records();
    for (row, record) in records.iter_mut().enumerate() {
        let ns = (planted(&ns_terms, spec.ns_model.intercept, row) + noise.sample(&mut noise_rng))
            .clamp(0.0, NS_MAX);
        let cq = (planted(&cq_terms, spec.cq_model.intercept, row) + noise.sample(&mut noise_rng))
            .clamp(0.0, CQ_MAX);
        record.truth = Some(ScoreSet::from_scores(ns, cq, sc_from_ns(ns)));
    }
    if let Some(cer) = spec.asr_cer {
        records = corrupt_records(&records, cer, derive_seed(seed, "asr"))?;
    }

    let strip = |terms: Vec<(usize, String, f64)>| terms.into_iter().map(|(_, n, w)| (n, w)).collect();
    Ok(SyntheticCorpus {
        corpus: Corpus::new(records, TranscriptVariant::Oracle)?,
        ns_terms: strip(ns_terms),
        cq_terms: strip(cq_terms),
    })
}

fn round_ms(t: f64) -> f64 {
    (t * 1000.0).round() / 1000.0
}
