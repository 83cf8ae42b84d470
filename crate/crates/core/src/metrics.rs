//! Evaluation measures: R², MAE, linear-weighted Cohen's κ and binary
//! classification reports, plus per-task score-set comparison.

use serde::{Deserialize, Serialize};

use crate::corpus::{requires_intervention, ScoreSet, Task, SC_MAX, SC_MIN};
use crate::error::{Error, Result};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Metric(format!("length mismatch: {a} truths vs {b} predictions")));
    }
    if a == 0 {
        return Err(Error::Metric("no pairs to evaluate".into()));
    }
    Ok(())
}

/// 1 − SS_res / SS_tot.
pub fn r_squared(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_lengths(truth.len(), pred.len())?;
    if truth.len() < 2 {
        return Err(Error::Metric("R² needs at least two points".into()));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Metric("R² is undefined for zero-variance truth".into()));
    }
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mae(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_lengths(truth.len(), pred.len())?;
    Ok(truth.iter().zip(pred).map(|(t, p)| (t - p).abs()).sum::<f64>() / truth.len() as f64)
}

/// Row = truth category, column = predicted category, both 1-based in `1..=k`.
pub fn confusion_matrix(truth: &[u8], pred: &[u8], k: usize) -> Result<Vec<Vec<usize>>> {
    check_lengths(truth.len(), pred.len())?;
    let mut m = vec![vec![0; k]; k];
    for (&t, &p) in truth.iter().zip(pred) {
        let (ti, pi) = (usize::from(t), usize::from(p));
        if !(1..=k).contains(&ti) || !(1..=k).contains(&pi) {
            return Err(Error::Metric(format!("category pair ({t}, {p}) outside 1..={k}")));
        }
        m[ti - 1][pi - 1] += 1;
    }
    Ok(m)
}

/// Linear-weighted Cohen's κ over the fixed category space `1..=k`.
///
/// κ = 1 − Σ wᵢⱼ Oᵢⱼ / Σ wᵢⱼ Eᵢⱼ with wᵢⱼ = |i − j| / (k − 1).
pub fn kappa_linear(truth: &[u8], pred: &[u8], k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::Metric("κ needs at least two categories".into()));
    }
    let counts = confusion_matrix(truth, pred, k)?;
    let n = truth.len() as f64;
    let row: Vec<f64> = counts.iter().map(|r| r.iter().sum::<usize>() as f64 / n).collect();
    let col: Vec<f64> = (0..k)
        .map(|j| counts.iter().map(|r| r[j]).sum::<usize>() as f64 / n)
        .collect();
    let (mut observed, mut expected) = (0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            let w = i.abs_diff(j) as f64 / (k - 1) as f64;
            observed += w * counts[i][j] as f64 / n;
            expected += w * row[i] * col[j];
        }
    }
    if expected == 0.0 {
        // Both raters constant on the same category.
        return if observed == 0.0 {
            Ok(1.0)
        } else {
            Err(Error::Metric("κ expectation is degenerate".into()))
        };
    }
    Ok(1.0 - observed / expected)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryConfusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl BinaryConfusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryReport {
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub confusion: BinaryConfusion,
}

/// Positive class is "requires intervention".
///
/// Recall is 1.0 when there are no positive truths; precision is 1.0 when
/// nothing is predicted positive; F1 is 0 when precision + recall is 0.
pub fn binary_report(truth: &[bool], pred: &[bool]) -> Result<BinaryReport> {
    check_lengths(truth.len(), pred.len())?;
    let mut c = BinaryConfusion {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (&t, &p) in truth.iter().zip(pred) {
        match (t, p) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    let accuracy = (c.tp + c.tn) as f64 / truth.len() as f64;
    let recall = ratio(c.tp, c.tp + c.fn_);
    let precision = ratio(c.tp, c.tp + c.fp);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(BinaryReport {
        accuracy,
        recall,
        precision,
        f1,
        confusion: c,
    })
}

pub fn derive_ri(sc: &[u8]) -> Result<Vec<bool>> {
    sc.iter()
        .map(|&c| {
            if (SC_MIN..=SC_MAX).contains(&c) {
                Ok(requires_intervention(c))
            } else {
                Err(Error::Metric(format!("SC category {c} outside {SC_MIN}..={SC_MAX}")))
            }
        })
        .collect()
}

/// Rounded half-up integer percentage of a fraction.
pub fn percent(fraction: f64) -> i64 {
    (fraction * 100.0 + 0.5).floor() as i64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskMetrics {
    Regression { r2: f64, mae: f64 },
    Ordinal {
        kappa_linear: f64,
        /// Row = truth SC, column = predicted SC.
        confusion: Vec<Vec<usize>>,
    },
    Binary {
        accuracy: f64,
        recall: f64,
        precision: f64,
        f1: f64,
        accuracy_pct: i64,
        recall_pct: i64,
        f1_pct: i64,
        confusion: BinaryConfusion,
        /// Recall convention applied when no positive truths exist.
        recall_if_no_positives: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub n: usize,
    pub metrics: TaskMetrics,
}

impl EvalReport {
    /// Headline value: R² for NS/CQ, κ for SC, accuracy for RI.
    pub fn headline(&self) -> f64 {
        match &self.metrics {
            TaskMetrics::Regression { r2, .. } => *r2,
            TaskMetrics::Ordinal { kappa_linear, .. } => *kappa_linear,
            TaskMetrics::Binary { accuracy, .. } => *accuracy,
        }
    }
}

pub fn evaluate_task(task: Task, truth: &[ScoreSet], pred: &[ScoreSet]) -> Result<EvalReport> {
    check_lengths(truth.len(), pred.len())?;
    let n = truth.len();
    let metrics = match task {
        Task::Ns | Task::Cq => {
            let t: Vec<f64> = truth.iter().map(|s| s.value(task)).collect();
            let p: Vec<f64> = pred.iter().map(|s| s.value(task)).collect();
            TaskMetrics::Regression {
                r2: r_squared(&t, &p)?,
                mae: mae(&t, &p)?,
            }
        }
        Task::Sc => {
            let t: Vec<u8> = truth.iter().map(|s| s.sc).collect();
            let p: Vec<u8> = pred.iter().map(|s| s.sc).collect();
            let k = usize::from(SC_MAX);
            TaskMetrics::Ordinal {
                kappa_linear: kappa_linear(&t, &p, k)?,
                confusion: confusion_matrix(&t, &p, k)?,
            }
        }
        Task::Ri => {
            let t: Vec<bool> = truth.iter().map(|s| s.ri).collect();
            let p: Vec<bool> = pred.iter().map(|s| s.ri).collect();
            let r = binary_report(&t, &p)?;
            TaskMetrics::Binary {
                accuracy: r.accuracy,
                recall: r.recall,
                precision: r.precision,
                f1: r.f1,
                accuracy_pct: percent(r.accuracy),
                recall_pct: percent(r.recall),
                f1_pct: percent(r.f1),
                confusion: r.confusion,
                recall_if_no_positives: 1.0,
            }
        }
    };
    Ok(EvalReport { task, n, metrics })
}

/// Evaluates all four tasks treating `a` as truth and `b` as prediction.
///
/// Both lists must hold the same child ids in the same order.
pub fn compare_scoresets(a: &[(String, ScoreSet)], b: &[(String, ScoreSet)]) -> Result<Vec<EvalReport>> {
    if a.len() != b.len() {
        return Err(Error::Metric(format!("{} truth records vs {} predictions", a.len(), b.len())));
    }
    if let Some(((ia, _), (ib, _))) = a.iter().zip(b).find(|((ia, _), (ib, _))| ia != ib) {
        return Err(Error::Metric(format!("child ids misaligned: {ia} vs {ib}")));
    }
    let ta: Vec<ScoreSet> = a.iter().map(|(_, s)| *s).collect();
    let tb: Vec<ScoreSet> = b.iter().map(|(_, s)| *s).collect();
    Task::ALL
        .iter()
        .map(|&task| evaluate_task(task, &ta, &tb))
        .collect()
}
