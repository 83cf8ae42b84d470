//! End-to-end experiment runs and the scorer × transcript comparison grid.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{
    corrupt_records, read_records, synthesize_corpus, ChildRecord, Corpus, Language, ScoreSet, Split, SynthSpec,
    Task, TranscriptVariant,
};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::linear_models::{train_for_task, ModelArtifact, Predictions};
use crate::llm_scoring::{BackendConfig, LlmScorer};
use crate::metrics::{compare_scoresets, percent, EvalReport, TaskMetrics};
use crate::util::{derive_seed, sha256_hex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Linear,
    Llm,
}

impl ScorerKind {
    pub fn label(self) -> &'static str {
        match self {
            ScorerKind::Linear => "Linear",
            ScorerKind::Llm => "LLM",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct LinearSettings {
    /// Explicit α grid; the default grid below α_max is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_grid: Option<Vec<f64>>,
}

/// Everything needed to reproduce one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// JSON Lines corpus file. Mutually exclusive with `synth`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    /// Synthetic corpus generated from the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
    /// Expected corpus language, checked after loading.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<Language>,
    pub variant: TranscriptVariant,
    pub scorer: ScorerKind,
    /// Replace ASR transcripts with oracle transcripts corrupted to this CER.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrupt_cer: Option<f64>,
    #[serde(default)]
    pub linear: LinearSettings,
    #[serde(default)]
    pub llm: BackendConfig,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn parse_override_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Applies `a.b.c=value` to a TOML table; values parse as TOML, else as strings.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::InvalidArgument(format!("override {assignment:?} is not key=value")))?;
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| {
        Error::InvalidArgument(format!("override {assignment:?} has an empty key"))
    })?;
    let mut node = table;
    for part in parts {
        let entry = node
            .entry(part.to_owned())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::InvalidArgument(format!("override key {key:?}: {part} is not a section")))?;
    }
    node.insert(last.to_owned(), parse_override_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse()?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: RunConfig = table.try_into()?;
        config.check()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn check(&self) -> Result<()> {
        match (&self.corpus, &self.synth) {
            (Some(_), Some(_)) => return Err(Error::InvalidArgument("set either corpus or synth, not both".into())),
            (None, None) => return Err(Error::InvalidArgument("config needs corpus or synth".into())),
            _ => {}
        }
        if self.corrupt_cer.is_some() && self.variant != TranscriptVariant::Asr {
            return Err(Error::InvalidArgument("corrupt_cer only applies to variant = asr".into()));
        }
        Ok(())
    }

    /// sha256 of the key-sorted JSON form.
    pub fn digest(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        Ok(sha256_hex(value.to_string().as_bytes()))
    }

    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("{}-{}", self.scorer.label().to_lowercase(), self.variant))
    }
}

/// One line of a predictions file; also the format of human score files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRow {
    pub child_id: String,
    pub ns: f64,
    pub cq: f64,
    pub sc: u8,
    pub ri: bool,
}

impl PredictionRow {
    pub fn scores(&self) -> ScoreSet {
        ScoreSet {
            ns: self.ns,
            cq: self.cq,
            sc: self.sc,
            ri: self.ri,
        }
    }
}

pub fn predictions_to_jsonl(rows: &[PredictionRow]) -> Result<String> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Record {
                line: i + 1,
                child_id: None,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Evaluates predictions against the ground truth of the matching records,
/// in prediction order.
pub fn evaluate_predictions(records: &[ChildRecord], predictions: &[PredictionRow]) -> Result<Vec<EvalReport>> {
    let by_id: HashMap<&str, &ChildRecord> = records.iter().map(|r| (r.child_id.as_str(), r)).collect();
    let mut truth = Vec::with_capacity(predictions.len());
    for p in predictions {
        let record = by_id
            .get(p.child_id.as_str())
            .ok_or_else(|| Error::Metric(format!("prediction for unknown child {}", p.child_id)))?;
        let t = record
            .truth
            .ok_or_else(|| Error::Metric(format!("child {} has no ground truth", p.child_id)))?;
        truth.push((p.child_id.clone(), t));
    }
    let pred: Vec<(String, ScoreSet)> = predictions.iter().map(|p| (p.child_id.clone(), p.scores())).collect();
    compare_scoresets(&truth, &pred)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRef {
    /// Relative to the run's output directory.
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub label: String,
    pub config: RunConfig,
    pub config_digest: String,
    pub corpus_fingerprint: String,
    /// Digest of the test-split ids and ground truth.
    pub truth_fingerprint: String,
    pub language: Language,
    pub artifacts: Vec<ArtifactRef>,
    pub reports: Vec<EvalReport>,
    pub timings_ms: BTreeMap<String, f64>,
    pub dropped_examples: usize,
    pub llm_calls: usize,
    pub cache_hits: usize,
    pub network_calls: usize,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const REPORTS_FILE: &str = "reports.json";

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn report(&self, task: Task) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.task == task)
    }

    /// Checks that every artifact exists under `dir` with its recorded digest.
    pub fn verify_artifacts(&self, dir: &Path) -> Result<()> {
        for a in &self.artifacts {
            let path = dir.join(&a.path);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let digest = sha256_hex(&bytes);
            if digest != a.sha256 {
                return Err(Error::Corpus(format!(
                    "{} digest {digest} does not match manifest {}",
                    path.display(),
                    a.sha256
                )));
            }
        }
        Ok(())
    }
}

/// Loads (or synthesizes) records and applies the configured corruption.
pub fn prepare_records(config: &RunConfig) -> Result<Vec<ChildRecord>> {
    let mut records = match (&config.corpus, &config.synth) {
        (Some(path), _) => read_records(path).map_err(|e| e.at_stage("ingest"))?,
        (None, Some(spec)) => synthesize_corpus(spec, derive_seed(config.seed, "synth"))
            .map_err(|e| e.at_stage("ingest"))?
            .corpus
            .into_records(),
        (None, None) => return Err(Error::InvalidArgument("config needs corpus or synth".into())),
    };
    if let Some(cer) = config.corrupt_cer {
        records = corrupt_records(&records, cer, derive_seed(config.seed, "corrupt")).map_err(|e| e.at_stage("corrupt"))?;
    }
    Ok(records)
}

pub fn truth_fingerprint(corpus: &Corpus) -> Result<String> {
    let truth: Vec<(&str, Option<ScoreSet>)> = corpus
        .split(Split::Test)
        .map(|r| (r.child_id.as_str(), r.truth))
        .collect();
    Ok(sha256_hex(serde_json::to_string(&truth)?.as_bytes()))
}

fn test_truth(corpus: &Corpus) -> Result<Vec<(String, ScoreSet)>> {
    corpus
        .split(Split::Test)
        .map(|r| {
            r.truth
                .map(|t| (r.child_id.clone(), t))
                .ok_or_else(|| Error::Corpus(format!("test child {} has no ground truth", r.child_id)))
        })
        .collect()
}

fn write_artifact(dir: &Path, rel: &str, bytes: &[u8], refs: &mut Vec<ArtifactRef>) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    refs.push(ArtifactRef {
        path: PathBuf::from(rel),
        sha256: sha256_hex(bytes),
    });
    Ok(())
}

struct Timer(BTreeMap<String, f64>);

impl Timer {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f();
        self.0.insert(stage.to_owned(), start.elapsed().as_secs_f64() * 1e3);
        out
    }
}

fn linear_predictions(
    corpus: &Corpus,
    config: &RunConfig,
    timer: &mut Timer,
    artifacts: &mut Vec<ArtifactRef>,
) -> Result<Vec<PredictionRow>> {
    let grid = config.linear.alpha_grid.as_deref();
    let trained: Vec<ModelArtifact> = timer.time("train", || {
        Task::ALL
            .par_iter()
            .map(|&task| train_for_task(corpus, task, grid))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.at_stage("train"))
    })?;
    let test: Vec<&ChildRecord> = corpus.split(Split::Test).collect();
    let outputs = timer.time("predict", || {
        let features = FeatureMatrix::build(test.iter().copied(), &trained[0].schema(), corpus.variant())?;
        trained
            .iter()
            .map(|a| a.model.predict_matrix(&features))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.at_stage("predict"))
    })?;
    for artifact in &trained {
        let json = serde_json::to_string_pretty(artifact)? + "\n";
        write_artifact(
            &config.output_dir,
            &format!("models/{}.json", artifact.model.target()),
            json.as_bytes(),
            artifacts,
        )?;
    }
    let mut rows = Vec::with_capacity(test.len());
    for (i, r) in test.iter().enumerate() {
        let (mut ns, mut cq, mut sc, mut ri) = (0.0, 0.0, 0, false);
        for (artifact, out) in trained.iter().zip(&outputs) {
            match (artifact.model.target(), out) {
                (Task::Ns, Predictions::Scores(v)) => ns = v[i],
                (Task::Cq, Predictions::Scores(v)) => cq = v[i],
                (Task::Sc, Predictions::Categories(v)) => sc = v[i],
                (Task::Ri, Predictions::Flags(v)) => ri = v[i],
                (task, _) => return Err(Error::InvalidArgument(format!("unexpected prediction kind for {task}"))),
            }
        }
        rows.push(PredictionRow {
            child_id: r.child_id.clone(),
            ns,
            cq,
            sc,
            ri,
        });
    }
    Ok(rows)
}

/// Runs one grid cell and writes its artifacts under `config.output_dir`:
/// `predictions.jsonl`, `reports.json`, `manifest.json` and, for the linear
/// scorer, `models/<task>.json`.
pub fn run_experiment(config: &RunConfig) -> Result<RunManifest> {
    config.check()?;
    let mut timer = Timer(BTreeMap::new());
    let records = timer.time("ingest", || prepare_records(config))?;
    let corpus = Corpus::new(records, config.variant).map_err(|e| e.at_stage("ingest"))?;
    if let Some(lang) = config.language {
        if lang != corpus.language() {
            return Err(Error::Corpus(format!("config expects {lang}, corpus is {}", corpus.language())).at_stage("ingest"));
        }
    }
    std::fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
    let mut artifacts = Vec::new();
    let mut stats = crate::llm_scoring::ScorerStats::default();
    let rows = match config.scorer {
        ScorerKind::Linear => linear_predictions(&corpus, config, &mut timer, &mut artifacts)?,
        ScorerKind::Llm => {
            let mut backend = config.llm.clone();
            if backend.cache_dir.is_none() {
                backend.cache_dir = Some(config.output_dir.join("llm_cache"));
            }
            let test: Vec<&ChildRecord> = corpus.split(Split::Test).collect();
            let (scores, s) = timer.time("score", || {
                let scorer = LlmScorer::new(&corpus, config.variant, &backend)?;
                let scores = scorer.score_all(&test)?;
                Ok((scores, scorer.stats()))
            })
            .map_err(|e| e.at_stage("score"))?;
            stats = s;
            test.iter()
                .zip(scores)
                .map(|(r, s)| PredictionRow {
                    child_id: r.child_id.clone(),
                    ns: s.ns,
                    cq: s.cq,
                    sc: s.sc,
                    ri: s.ri,
                })
                .collect()
        }
    };
    write_artifact(&config.output_dir, PREDICTIONS_FILE, predictions_to_jsonl(&rows)?.as_bytes(), &mut artifacts)?;
    let reports = timer.time("evaluate", || {
        evaluate_predictions(corpus.records(), &rows).map_err(|e| e.at_stage("evaluate"))
    })?;
    let reports_json = serde_json::to_string_pretty(&reports)? + "\n";
    write_artifact(&config.output_dir, REPORTS_FILE, reports_json.as_bytes(), &mut artifacts)?;
    let manifest = RunManifest {
        label: config.label(),
        config: config.clone(),
        config_digest: config.digest()?,
        corpus_fingerprint: corpus.fingerprint(),
        truth_fingerprint: truth_fingerprint(&corpus)?,
        language: corpus.language(),
        artifacts,
        reports,
        timings_ms: timer.0,
        dropped_examples: stats.dropped_examples,
        llm_calls: stats.llm_calls,
        cache_hits: stats.cache_hits,
        network_calls: stats.network_calls,
    };
    let path = config.output_dir.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Recomputes a run's reports from its predictions file and the truth corpus.
pub fn recompute_reports(manifest: &RunManifest) -> Result<Vec<EvalReport>> {
    let records = prepare_records(&manifest.config)?;
    let rows = read_predictions(&manifest.config.output_dir.join(PREDICTIONS_FILE))?;
    evaluate_predictions(&records, &rows)
}

/// Headline and secondary values of one (system, variant) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub ns_r2: f64,
    pub cq_r2: f64,
    pub sc_kappa: f64,
    pub ri_accuracy: f64,
    pub ns_mae: f64,
    pub cq_mae: f64,
    pub ri_recall: f64,
    pub ri_f1: f64,
}

impl CellMetrics {
    pub fn from_reports(reports: &[EvalReport]) -> Result<Self> {
        let mut m = CellMetrics {
            ns_r2: f64::NAN,
            cq_r2: f64::NAN,
            sc_kappa: f64::NAN,
            ri_accuracy: f64::NAN,
            ns_mae: f64::NAN,
            cq_mae: f64::NAN,
            ri_recall: f64::NAN,
            ri_f1: f64::NAN,
        };
        for r in reports {
            match (r.task, &r.metrics) {
                (Task::Ns, TaskMetrics::Regression { r2, mae }) => (m.ns_r2, m.ns_mae) = (*r2, *mae),
                (Task::Cq, TaskMetrics::Regression { r2, mae }) => (m.cq_r2, m.cq_mae) = (*r2, *mae),
                (Task::Sc, TaskMetrics::Ordinal { kappa_linear, .. }) => m.sc_kappa = *kappa_linear,
                (Task::Ri, TaskMetrics::Binary { accuracy, recall, f1, .. }) => {
                    (m.ri_accuracy, m.ri_recall, m.ri_f1) = (*accuracy, *recall, *f1)
                }
                (task, _) => return Err(Error::Metric(format!("unexpected metrics for {task}"))),
            }
        }
        if [m.ns_r2, m.cq_r2, m.sc_kappa, m.ri_accuracy].iter().any(|v| v.is_nan()) {
            return Err(Error::Metric("reports do not cover all four tasks".into()));
        }
        Ok(m)
    }

    /// NS R², CQ R², SC κ and RI accuracy.
    pub fn headline(&self) -> [f64; 4] {
        [self.ns_r2, self.cq_r2, self.sc_kappa, self.ri_accuracy]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub language: Language,
    pub system: String,
    /// Parallel to [`ComparisonTable::variants`].
    pub cells: Vec<Option<CellMetrics>>,
}

impl GridRow {
    pub fn values(&self) -> Vec<f64> {
        self.cells.iter().flatten().flat_map(|c| c.headline()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub variants: Vec<TranscriptVariant>,
    pub rows: Vec<GridRow>,
}

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

impl ComparisonTable {
    pub fn row(&self, language: Language, system: &str) -> Option<&GridRow> {
        self.rows.iter().find(|r| r.language == language && r.system == system)
    }

    pub fn cell(&self, language: Language, system: &str, variant: TranscriptVariant) -> Option<&CellMetrics> {
        let col = self.variants.iter().position(|&v| v == variant)?;
        self.row(language, system)?.cells[col].as_ref()
    }

    fn render(&self, groups: &[&str], cell: impl Fn(&CellMetrics) -> Vec<String>) -> String {
        let mut header = vec!["Language".to_owned(), "System".to_owned()];
        for g in groups {
            for v in &self.variants {
                header.push(format!("{g} {}", if *v == TranscriptVariant::Asr { "ASR" } else { "Oracle" }));
            }
        }
        let mut out = String::new();
        let _ = writeln!(out, "| {} |", header.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
        for row in &self.rows {
            let mut line = vec![row.language.to_string(), row.system.clone()];
            let per_variant: Vec<Option<Vec<String>>> = row.cells.iter().map(|c| c.as_ref().map(&cell)).collect();
            for g in 0..groups.len() {
                for values in &per_variant {
                    line.push(values.as_ref().map_or_else(|| "-".to_owned(), |v| v[g].clone()));
                }
            }
            let _ = writeln!(out, "| {} |", line.join(" | "));
        }
        out
    }

    /// Headline table: NS R², CQ R², SC κ, RI accuracy %, per transcript variant.
    pub fn render_headline(&self) -> String {
        self.render(&["NS R²", "CQ R²", "SC κ", "RI %"], |c| {
            vec![fmt2(c.ns_r2), fmt2(c.cq_r2), fmt2(c.sc_kappa), percent(c.ri_accuracy).to_string()]
        })
    }

    /// Error table: NS and CQ MAE, RI recall % and F1 %.
    pub fn render_errors(&self) -> String {
        self.render(&["MAE NS", "MAE CQ", "RI recall %", "RI F1 %"], |c| {
            vec![
                fmt2(c.ns_mae),
                fmt2(c.cq_mae),
                percent(c.ri_recall).to_string(),
                percent(c.ri_f1).to_string(),
            ]
        })
    }
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub table: ComparisonTable,
    /// In config order.
    pub manifests: Vec<RunManifest>,
}

/// Reorders `scores` to the truth's child order; the id sets must match.
fn align_to_truth(truth: &[(String, ScoreSet)], scores: &[(String, ScoreSet)]) -> Option<Vec<(String, ScoreSet)>> {
    if truth.len() != scores.len() {
        return None;
    }
    let map: HashMap<&str, ScoreSet> = scores.iter().map(|(id, s)| (id.as_str(), *s)).collect();
    truth
        .iter()
        .map(|(id, _)| map.get(id.as_str()).map(|s| (id.clone(), *s)))
        .collect()
}

/// Runs every cell concurrently and assembles the comparison table, with an
/// optional "Human" row from an independent set of human scores.
///
/// Cells of the same language must share test-split ground truth.
pub fn run_grid(configs: &[RunConfig], human: Option<&[(String, ScoreSet)]>) -> Result<GridOutcome> {
    if configs.is_empty() {
        return Err(Error::InvalidArgument("grid has no cells".into()));
    }
    let mut dirs = HashSet::new();
    for c in configs {
        if !dirs.insert(&c.output_dir) {
            return Err(Error::InvalidArgument(format!("output_dir {} used by two cells", c.output_dir.display())));
        }
    }
    let manifests = configs.par_iter().map(run_experiment).collect::<Result<Vec<_>>>()?;

    let mut truth_by_language: BTreeMap<Language, &str> = BTreeMap::new();
    for m in &manifests {
        let fp = truth_by_language.entry(m.language).or_insert(&m.truth_fingerprint);
        if *fp != m.truth_fingerprint {
            return Err(Error::Corpus(format!("cell {} has different test ground truth", m.label)));
        }
    }

    let mut variants: Vec<TranscriptVariant> = manifests.iter().map(|m| m.config.variant).collect();
    variants.sort();
    variants.dedup();
    let mut rows: Vec<GridRow> = Vec::new();
    for m in &manifests {
        let system = m.config.scorer.label().to_owned();
        let idx = match rows.iter().position(|r| r.language == m.language && r.system == system) {
            Some(i) => i,
            None => {
                rows.push(GridRow {
                    language: m.language,
                    system,
                    cells: vec![None; variants.len()],
                });
                rows.len() - 1
            }
        };
        let col = variants.iter().position(|&v| v == m.config.variant).expect("variant collected");
        if rows[idx].cells[col].is_some() {
            return Err(Error::InvalidArgument(format!("two cells for {} {}", rows[idx].system, m.config.variant)));
        }
        rows[idx].cells[col] = Some(CellMetrics::from_reports(&m.reports)?);
    }

    if let Some(human) = human {
        let mut matched = false;
        for &language in truth_by_language.keys() {
            let cfg = &manifests.iter().find(|m| m.language == language).expect("language present").config;
            let corpus = Corpus::new(prepare_records(cfg)?, cfg.variant)?;
            let truth = test_truth(&corpus)?;
            if let Some(aligned) = align_to_truth(&truth, human) {
                let reports = compare_scoresets(&truth, &aligned)?;
                let mut cells = vec![None; variants.len()];
                let col = variants.iter().position(|&v| v == TranscriptVariant::Oracle).unwrap_or(0);
                cells[col] = Some(CellMetrics::from_reports(&reports)?);
                rows.push(GridRow {
                    language,
                    system: "Human".to_owned(),
                    cells,
                });
                matched = true;
            }
        }
        if !matched {
            return Err(Error::Corpus("human scores do not cover any grid test split".into()));
        }
    }
    rows.sort_by_key(|r| (r.language, ["Linear", "LLM", "Human"].iter().position(|s| *s == r.system)));
    Ok(GridOutcome {
        table: ComparisonTable { variants, rows },
        manifests,
    })
}

fn merge_tables(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// A grid file: an optional `[base]` table merged under every `[[cell]]`,
/// and an optional `human` scores path. Overrides apply to every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub cells: Vec<RunConfig>,
    pub human: Option<PathBuf>,
}

impl GridConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse()?;
        let base = match table.remove("base") {
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(Error::InvalidArgument("grid base must be a table".into())),
            None => toml::Table::new(),
        };
        let human = match table.remove("human") {
            Some(toml::Value::String(p)) => Some(PathBuf::from(p)),
            Some(_) => return Err(Error::InvalidArgument("grid human must be a path".into())),
            None => None,
        };
        let cells = match table.remove("cell") {
            Some(toml::Value::Array(cells)) => cells,
            _ => return Err(Error::InvalidArgument("grid needs at least one [[cell]]".into())),
        };
        if let Some(key) = table.keys().next() {
            return Err(Error::InvalidArgument(format!("unknown grid key {key:?}")));
        }
        let cells = cells
            .into_iter()
            .map(|cell| {
                let toml::Value::Table(cell) = cell else {
                    return Err(Error::InvalidArgument("grid cells must be tables".into()));
                };
                let mut merged = base.clone();
                merge_tables(&mut merged, &cell);
                for o in overrides {
                    apply_override(&mut merged, o)?;
                }
                let config: RunConfig = merged.try_into()?;
                config.check()?;
                Ok(config)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GridConfig { cells, human })
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut grid = Self::from_toml(&text, overrides)?;
        if let (Some(h), Some(dir)) = (&grid.human, path.parent()) {
            if h.is_relative() {
                grid.human = Some(dir.join(h));
            }
        }
        Ok(grid)
    }
}

/// Reads a human score file (same format as predictions).
pub fn read_human_scores(path: &Path) -> Result<Vec<(String, ScoreSet)>> {
    Ok(read_predictions(path)?
        .into_iter()
        .map(|r| {
            let s = r.scores();
            (r.child_id, s)
        })
        .collect())
}

/// The {linear, llm} × {oracle, corrupted asr} grid on one synthetic corpus.
pub fn replication_grid(
    spec: &SynthSpec,
    seed: u64,
    asr_cer: f64,
    llm: &BackendConfig,
    output_dir: &Path,
) -> Vec<RunConfig> {
    let mut cells = Vec::new();
    for scorer in [ScorerKind::Linear, ScorerKind::Llm] {
        for variant in [TranscriptVariant::Oracle, TranscriptVariant::Asr] {
            let name = format!("{}-{variant}", scorer.label().to_lowercase());
            cells.push(RunConfig {
                output_dir: output_dir.join(&name),
                name: Some(name),
                corpus: None,
                synth: Some(spec.clone()),
                language: None,
                variant,
                scorer,
                corrupt_cer: (variant == TranscriptVariant::Asr).then_some(asr_cer),
                linear: LinearSettings::default(),
                llm: llm.clone(),
                seed,
            });
        }
    }
    cells
}

/// Config digests keyed by label, for provenance listings.
pub fn config_digests(configs: &[RunConfig]) -> Result<Value> {
    let mut map = serde_json::Map::new();
    for c in configs {
        map.insert(c.label(), Value::String(c.digest()?));
    }
    Ok(Value::Object(map))
}
