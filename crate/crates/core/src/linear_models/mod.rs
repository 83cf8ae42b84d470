//! Lasso regression for NS/CQ and L1-regularized logistic regression for
//! SC/RI, with dev-set α tuning and weight inspection.
//!
//! Features are z-scored on training statistics before fitting, so every
//! weight refers to a standardized feature.

mod design;
mod lasso;
mod logistic;
mod tune;

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Split, Task, TranscriptVariant};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureSchema};

pub use design::{Design, SparseStandardized};
pub use lasso::{fit_lasso, fit_lasso_path, fit_lasso_with, lasso_alpha_max, lasso_objective, LassoModel, LassoSolution, LassoSolver};
pub use logistic::{
    fit_logistic_l1, fit_logistic_l1_with, fit_logistic_path, logistic_alpha_max, logistic_loss, logistic_loss_grad, sigmoid,
    task_classes, BinaryLogit, LogisticModel, LogisticSolver, ABSENT_CLASS_INTERCEPT,
};
pub use tune::{
    alpha_max_for_task, default_alpha_grid, select_alpha, tune_alpha, tune_and_fit, AlphaScore, AlphaTuning, DEFAULT_GRID_SIZE,
    DEV_SCORE_TIE_TOLERANCE,
};

pub fn soft_threshold(value: f64, threshold: f64) -> f64 {
    if value > threshold {
        value - threshold
    } else if value < -threshold {
        value + threshold
    } else {
        0.0
    }
}

fn check_finite(x: ArrayView2<'_, f64>, y: &[f64]) -> Result<()> {
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value in training data".into()));
    }
    Ok(())
}

/// Per-feature z-scoring fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    /// Population standard deviations; 1 for constant features.
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let (means, stds) = x
            .columns()
            .into_iter()
            .map(|c| {
                let mean = c.sum() / n;
                let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let std = var.sqrt();
                let std = if std > 1e-12 * mean.abs().max(1.0) { std } else { 1.0 };
                (mean, std)
            })
            .unzip();
        Standardizer { means, stds }
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = x.to_owned();
        for (j, mut col) in z.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.means[j], self.stds[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoringModel {
    Lasso(LassoModel),
    Logistic(LogisticModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictions {
    /// Regression outputs clamped to the target range.
    Scores(Vec<f64>),
    Categories(Vec<u8>),
    Flags(Vec<bool>),
}

impl ScoringModel {
    pub fn target(&self) -> Task {
        match self {
            ScoringModel::Lasso(m) => m.target,
            ScoringModel::Logistic(m) => m.target,
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            ScoringModel::Lasso(m) => m.alpha,
            ScoringModel::Logistic(m) => m.alpha,
        }
    }

    pub fn feature_names(&self) -> &[String] {
        match self {
            ScoringModel::Lasso(m) => &m.feature_names,
            ScoringModel::Logistic(m) => &m.feature_names,
        }
    }

    /// Predicts for rows laid out exactly as `names`.
    pub fn predict(&self, names: &[String], x: ArrayView2<'_, f64>) -> Result<Predictions> {
        let expected = self.feature_names();
        if names != expected || x.ncols() != expected.len() {
            let first_diff = names
                .iter()
                .zip(expected)
                .position(|(a, b)| a != b)
                .map(|i| format!(", first difference at column {i}"))
                .unwrap_or_default();
            return Err(Error::SchemaMismatch(format!(
                "model expects {} features, got {} names and {} columns{first_diff}",
                expected.len(),
                names.len(),
                x.ncols()
            )));
        }
        Ok(match self {
            ScoringModel::Lasso(m) => {
                let (lo, hi) = m.target.range().expect("lasso targets are regression tasks");
                Predictions::Scores(m.decision(x).iter().map(|v| v.clamp(lo, hi)).collect())
            }
            ScoringModel::Logistic(m) => {
                let classes = m.predict_classes(x);
                match m.target {
                    Task::Ri => Predictions::Flags(classes.into_iter().map(|c| c == 1).collect()),
                    _ => Predictions::Categories(classes),
                }
            }
        })
    }

    pub fn predict_matrix(&self, features: &FeatureMatrix) -> Result<Predictions> {
        self.predict(&features.names, features.values.view())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightReport {
    pub top: Vec<(String, f64)>,
    pub nonzero: usize,
    pub zeroed: usize,
}

/// Nonzero weights by descending magnitude, truncated to `top_k`.
///
/// One-vs-rest models label each weight with its class, e.g. `sc=3:count:ikati`.
pub fn inspect_weights(model: &ScoringModel, top_k: usize) -> WeightReport {
    let mut all: Vec<(String, f64)> = match model {
        ScoringModel::Lasso(m) => m.feature_names.iter().cloned().zip(m.weights.iter().copied()).collect(),
        ScoringModel::Logistic(m) if m.binary.len() == 1 => m
            .feature_names
            .iter()
            .cloned()
            .zip(m.binary[0].weights.iter().copied())
            .collect(),
        ScoringModel::Logistic(m) => m
            .classes
            .iter()
            .zip(&m.binary)
            .flat_map(|(c, b)| {
                m.feature_names
                    .iter()
                    .zip(&b.weights)
                    .map(move |(name, &w)| (format!("{}={c}:{name}", m.target), w))
            })
            .collect(),
    };
    let total = all.len();
    all.retain(|(_, w)| *w != 0.0);
    let nonzero = all.len();
    // Stable sort keeps feature order among equal magnitudes.
    all.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
    all.truncate(top_k);
    WeightReport {
        top: all,
        nonzero,
        zeroed: total - nonzero,
    }
}

/// A trained model plus the provenance needed to reuse it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub model: ScoringModel,
    pub variant: TranscriptVariant,
    pub corpus_fingerprint: String,
    pub vocabulary: Vec<String>,
    pub tuning: AlphaTuning,
}

impl ModelArtifact {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema::new(self.vocabulary.clone())
    }
}

fn split_targets(corpus: &Corpus, split: Split, task: Task) -> Result<Vec<f64>> {
    corpus
        .split(split)
        .map(|r| {
            r.truth.map(|t| t.value(task)).ok_or_else(|| {
                Error::Corpus(format!("{split} child {} has no ground-truth scores", r.child_id))
            })
        })
        .collect()
}

/// Featurizes train/dev, fits the α path on train and keeps the model at the
/// α with the best dev score.
pub fn train_for_task(
    corpus: &Corpus,
    task: Task,
    grid: Option<&[f64]>,
) -> Result<ModelArtifact> {
    let schema = FeatureSchema::from_corpus(corpus);
    let variant = corpus.variant();
    let train_x = FeatureMatrix::build(corpus.split(Split::Train), &schema, variant)?;
    let dev_x = FeatureMatrix::build(corpus.split(Split::Dev), &schema, variant)?;
    let train_y = split_targets(corpus, Split::Train, task)?;
    let dev_y = split_targets(corpus, Split::Dev, task)?;
    let (tuning, model) = tune_and_fit(
        task,
        (train_x.values.view(), &train_y),
        (dev_x.values.view(), &dev_y),
        grid,
        schema.names(),
    )?;
    Ok(ModelArtifact {
        model,
        variant,
        corpus_fingerprint: corpus.fingerprint(),
        vocabulary: schema.vocabulary().to_vec(),
        tuning,
    })
}

/// Warm-started fits for every α, in `alphas` order.
pub fn fit_path_for_task(
    task: Task,
    x: ArrayView2<'_, f64>,
    y: &[f64],
    alphas: &[f64],
    names: &[String],
) -> Result<Vec<ScoringModel>> {
    if task.is_regression() {
        Ok(fit_lasso_path(&LassoSolver::default(), x, y, alphas, task, names)?
            .into_iter()
            .map(ScoringModel::Lasso)
            .collect())
    } else {
        let labels: Vec<u8> = y.iter().map(|&v| v as u8).collect();
        Ok(fit_logistic_path(&LogisticSolver::default(), x, &labels, alphas, task, names)?
            .into_iter()
            .map(ScoringModel::Logistic)
            .collect())
    }
}

/// Fits the model family appropriate for `task`; `y` holds class codes for SC/RI.
pub fn fit_for_task(task: Task, x: ArrayView2<'_, f64>, y: &[f64], alpha: f64, names: &[String]) -> Result<ScoringModel> {
    if task.is_regression() {
        fit_lasso(x, y, alpha, task, names).map(ScoringModel::Lasso)
    } else {
        let labels: Vec<u8> = y.iter().map(|&v| v as u8).collect();
        fit_logistic_l1(x, &labels, alpha, task, names).map(ScoringModel::Logistic)
    }
}
