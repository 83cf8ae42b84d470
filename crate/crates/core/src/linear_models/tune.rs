use ndarray::{Array1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    fit_path_for_task, inspect_weights, lasso_alpha_max, logistic_alpha_max, task_classes, Predictions, ScoringModel,
    SparseStandardized, Standardizer,
};
use crate::corpus::{Task, SC_MAX};
use crate::error::{Error, Result};
use crate::metrics::{binary_report, kappa_linear, r_squared};

pub const DEFAULT_GRID_SIZE: usize = 50;

/// Dev scores within this distance of the best count as tied.
pub const DEV_SCORE_TIE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaScore {
    pub alpha: f64,
    pub dev_score: f64,
    pub nonzero: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaTuning {
    pub best_alpha: f64,
    pub alpha_max: f64,
    /// In grid order.
    pub scores: Vec<AlphaScore>,
}

/// α at which the fitted model is entirely zero, on standardized train data.
pub fn alpha_max_for_task(task: Task, x: ArrayView2<'_, f64>, y: &[f64]) -> Result<f64> {
    let z = SparseStandardized::new(x, &Standardizer::fit(x));
    if task.is_regression() {
        let mean = y.iter().sum::<f64>() / y.len().max(1) as f64;
        let yc: Array1<f64> = y.iter().map(|v| v - mean).collect();
        Ok(lasso_alpha_max(&z, yc.view()))
    } else {
        let labels: Vec<u8> = y.iter().map(|&v| v as u8).collect();
        Ok(logistic_alpha_max(&z, &labels, &task_classes(task)?))
    }
}

/// `size` log-spaced values from `alpha_max` down to `alpha_max · 1e-4`.
pub fn default_alpha_grid(alpha_max: f64, size: usize) -> Vec<f64> {
    if alpha_max <= 0.0 || size == 0 {
        return vec![0.0];
    }
    if size == 1 {
        return vec![alpha_max];
    }
    let (hi, lo) = (alpha_max.ln(), (alpha_max * 1e-4).ln());
    (0..size)
        .map(|i| (hi + (lo - hi) * i as f64 / (size - 1) as f64).exp())
        .collect()
}

fn dev_score(task: Task, predictions: &Predictions, truth: &[f64]) -> Result<f64> {
    match (task, predictions) {
        (Task::Ns | Task::Cq, Predictions::Scores(p)) => r_squared(truth, p),
        (Task::Sc, Predictions::Categories(p)) => {
            let t: Vec<u8> = truth.iter().map(|&v| v as u8).collect();
            kappa_linear(&t, p, usize::from(SC_MAX))
        }
        (Task::Ri, Predictions::Flags(p)) => {
            let t: Vec<bool> = truth.iter().map(|&v| v == 1.0).collect();
            Ok(binary_report(&t, p)?.accuracy)
        }
        _ => Err(Error::InvalidArgument(format!("prediction kind does not match task {task}"))),
    }
}

/// Fits one model per α on train and keeps the α with the best dev score:
/// R² for NS/CQ, linear-weighted κ for SC, accuracy for RI.
///
/// Ties, up to [`DEV_SCORE_TIE_TOLERANCE`], go to the larger (sparser) α. Without a grid, the default grid of
/// [`DEFAULT_GRID_SIZE`] values below the train α_max is used.
pub fn tune_alpha(
    task: Task,
    train: (ArrayView2<'_, f64>, &[f64]),
    dev: (ArrayView2<'_, f64>, &[f64]),
    grid: Option<&[f64]>,
    names: &[String],
) -> Result<AlphaTuning> {
    tune_and_fit(task, train, dev, grid, names).map(|(t, _)| t)
}

/// [`tune_alpha`] that also returns the path model at the selected α.
pub fn tune_and_fit(
    task: Task,
    train: (ArrayView2<'_, f64>, &[f64]),
    dev: (ArrayView2<'_, f64>, &[f64]),
    grid: Option<&[f64]>,
    names: &[String],
) -> Result<(AlphaTuning, ScoringModel)> {
    let (train_x, train_y) = train;
    let (dev_x, dev_y) = dev;
    if dev_y.is_empty() || dev_x.nrows() != dev_y.len() {
        return Err(Error::InvalidArgument("dev split is empty or misshapen".into()));
    }
    if task.is_regression() {
        let first = dev_y[0];
        if dev_y.iter().all(|&v| v == first) {
            return Err(Error::Metric(format!("dev {task} targets have zero variance")));
        }
    }
    let alpha_max = alpha_max_for_task(task, train_x, train_y)?;
    let grid: Vec<f64> = match grid {
        Some([]) => return Err(Error::InvalidArgument("α grid is empty".into())),
        Some(g) => g.to_vec(),
        None => default_alpha_grid(alpha_max, DEFAULT_GRID_SIZE),
    };
    let mut models = fit_path_for_task(task, train_x, train_y, &grid, names)?;
    let scores = models
        .par_iter()
        .map(|model| {
            let predictions = model.predict(names, dev_x)?;
            Ok(AlphaScore {
                alpha: model.alpha(),
                dev_score: dev_score(task, &predictions, dev_y)?,
                nonzero: inspect_weights(model, 0).nonzero,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best_alpha = select_alpha(&scores, DEV_SCORE_TIE_TOLERANCE);
    let best = scores.iter().position(|s| s.alpha == best_alpha).expect("selected α is in the grid");
    let model = models.swap_remove(best);
    Ok((
        AlphaTuning {
            best_alpha,
            alpha_max,
            scores,
        },
        model,
    ))
}

/// Largest α whose dev score is within `tolerance` of the best score.
pub fn select_alpha(scores: &[AlphaScore], tolerance: f64) -> f64 {
    let best = scores.iter().map(|s| s.dev_score).fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .filter(|s| s.dev_score >= best - tolerance)
        .map(|s| s.alpha)
        .fold(f64::NEG_INFINITY, f64::max)
}
