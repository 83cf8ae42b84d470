use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_finite, soft_threshold, Design, SparseStandardized, Standardizer};
use crate::corpus::{Task, SC_MAX, SC_MIN};
use crate::error::{Error, Result};

/// Intercept of the constant-negative model used for classes absent from training.
pub const ABSENT_CLASS_INTERCEPT: f64 = -50.0;

/// Class codes for a classification target, most severe first.
///
/// SC uses its categories 1..=6; RI uses 1 (true) then 0 (false).
pub fn task_classes(task: Task) -> Result<Vec<u8>> {
    match task {
        Task::Sc => Ok((SC_MIN..=SC_MAX).collect()),
        Task::Ri => Ok(vec![1, 0]),
        other => Err(Error::InvalidArgument(format!("{other} is not a classification target"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryLogit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// L1-regularized logistic regression, one-vs-rest for more than two classes.
///
/// With exactly two classes a single binary model scores `classes[0]`
/// against `classes[1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub target: Task,
    pub alpha: f64,
    pub feature_names: Vec<String>,
    /// Most severe first; argmax ties go to the earlier class.
    pub classes: Vec<u8>,
    pub binary: Vec<BinaryLogit>,
    pub standardizer: Standardizer,
}

impl LogisticModel {
    /// Per-class decision values (logits), one row per sample.
    pub fn decision(&self, x: ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
        let z = self.standardizer.transform(x);
        let logits: Vec<Array1<f64>> = self
            .binary
            .iter()
            .map(|m| z.dot(&ArrayView1::from(&m.weights[..])) + m.intercept)
            .collect();
        (0..z.nrows())
            .map(|i| {
                if self.classes.len() == 2 {
                    vec![logits[0][i], -logits[0][i]]
                } else {
                    logits.iter().map(|l| l[i]).collect()
                }
            })
            .collect()
    }

    pub fn predict_classes(&self, x: ArrayView2<'_, f64>) -> Vec<u8> {
        self.decision(x)
            .iter()
            .map(|scores| {
                let mut best = 0;
                for (k, &s) in scores.iter().enumerate().skip(1) {
                    if s > scores[best] {
                        best = k;
                    }
                }
                self.classes[best]
            })
            .collect()
    }
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}

/// Mean log-loss of a binary model.
pub fn logistic_loss<D: Design + ?Sized>(z: &D, y: ArrayView1<'_, f64>, w: ArrayView1<'_, f64>, b: f64) -> f64 {
    let s = z.mul(w) + b;
    s.iter().zip(y).map(|(&si, &yi)| softplus(si) - yi * si).sum::<f64>() / z.nrows() as f64
}

/// Mean log-loss and its gradient with respect to (weights, intercept).
pub fn logistic_loss_grad<D: Design + ?Sized>(
    z: &D,
    y: ArrayView1<'_, f64>,
    w: ArrayView1<'_, f64>,
    b: f64,
) -> (f64, Array1<f64>, f64) {
    let n = z.nrows() as f64;
    let s = z.mul(w) + b;
    let loss = s.iter().zip(y).map(|(&si, &yi)| softplus(si) - yi * si).sum::<f64>() / n;
    let err: Array1<f64> = s.iter().zip(y).map(|(&si, &yi)| sigmoid(si) - yi).collect();
    let grad_w = z.tmul(err.view()) / n;
    let grad_b = err.sum() / n;
    (loss, grad_w, grad_b)
}

/// Accelerated proximal gradient with backtracking for mean log-loss + α‖w‖₁.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticSolver {
    /// Stop when the objective decreases by less than this in one iteration.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for LogisticSolver {
    fn default() -> Self {
        LogisticSolver {
            tol: 1e-8,
            max_iterations: 10_000,
        }
    }
}

impl LogisticSolver {
    pub fn solve<D: Design + ?Sized>(&self, z: &D, y: ArrayView1<'_, f64>, alpha: f64) -> BinaryLogit {
        self.solve_from(z, y, alpha, None)
    }

    /// Solves from `start`; without one, from zero weights and the intercept
    /// matching the positive rate.
    pub fn solve_from<D: Design + ?Sized>(
        &self,
        z: &D,
        y: ArrayView1<'_, f64>,
        alpha: f64,
        start: Option<&BinaryLogit>,
    ) -> BinaryLogit {
        let (n, p) = (z.nrows(), z.ncols());
        let nf = n as f64;
        let rate = (y.sum() / nf).clamp(1e-6, 1.0 - 1e-6);
        let (mut w, mut b) = match start {
            Some(s) if s.weights.len() == p => (Array1::from(s.weights.clone()), s.intercept),
            _ => (Array1::<f64>::zeros(p), (rate / (1.0 - rate)).ln()),
        };
        let l1 = |w: &Array1<f64>| alpha * w.iter().map(|v| v.abs()).sum::<f64>();
        // Lipschitz bound of the smooth part: (‖Z‖²_F + n) / (4n).
        let lipschitz = (z.frobenius_sq() + nf) / (4.0 * nf);
        let mut step = 1.0 / lipschitz.max(1e-12);
        let mut objective = logistic_loss(z, y, w.view(), b) + l1(&w);
        // Extrapolated point and momentum; momentum restarts whenever a step
        // would increase the objective, so accepted iterates are monotone.
        let (mut yw, mut yb) = (w.clone(), b);
        let mut t = 1.0_f64;
        let mut iterations = 0;
        let mut converged = false;
        while iterations < self.max_iterations {
            iterations += 1;
            let (loss, grad_w, grad_b) = logistic_loss_grad(z, y, yw.view(), yb);
            step *= 1.5;
            let (w_next, b_next, loss_next) = loop {
                let w_next: Array1<f64> = yw
                    .iter()
                    .zip(&grad_w)
                    .map(|(wi, gi)| soft_threshold(wi - step * gi, step * alpha))
                    .collect();
                let b_next = yb - step * grad_b;
                let dw = &w_next - &yw;
                let db = b_next - yb;
                let loss_next = logistic_loss(z, y, w_next.view(), b_next);
                let bound = loss + grad_w.dot(&dw) + grad_b * db + (dw.dot(&dw) + db * db) / (2.0 * step);
                if loss_next <= bound + 1e-15 * loss.abs().max(1.0) || step < 1e-20 {
                    break (w_next, b_next, loss_next);
                }
                step *= 0.5;
            };
            let objective_next = loss_next + l1(&w_next);
            if objective_next > objective && t > 1.0 {
                t = 1.0;
                yw = w.clone();
                yb = b;
                continue;
            }
            let decrease = objective - objective_next;
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let momentum = (t - 1.0) / t_next;
            yw = &w_next + &((&w_next - &w) * momentum);
            yb = b_next + momentum * (b_next - b);
            t = t_next;
            w = w_next;
            b = b_next;
            objective = objective_next;
            if decrease < self.tol {
                converged = true;
                break;
            }
        }
        BinaryLogit {
            weights: w.to_vec(),
            intercept: b,
            iterations,
            converged,
        }
    }
}

fn indicator(labels: &[u8], class: u8) -> Array1<f64> {
    labels.iter().map(|&l| f64::from(u8::from(l == class))).collect()
}

/// Largest α that still moves any weight off zero, over all binary subproblems.
pub fn logistic_alpha_max<D: Design + ?Sized>(z: &D, labels: &[u8], classes: &[u8]) -> f64 {
    let n = z.nrows() as f64;
    let subproblems = if classes.len() == 2 { &classes[..1] } else { classes };
    subproblems
        .iter()
        .filter(|&&c| labels.contains(&c))
        .map(|&c| {
            let y = indicator(labels, c);
            let mean = y.sum() / n;
            let centered = y.mapv(|v| v - mean);
            z.tmul(centered.view()).iter().fold(0.0_f64, |m, v| m.max(v.abs() / n))
        })
        .fold(0.0, f64::max)
}

pub fn fit_logistic_l1(
    x: ArrayView2<'_, f64>,
    labels: &[u8],
    alpha: f64,
    target: Task,
    feature_names: &[String],
) -> Result<LogisticModel> {
    fit_logistic_l1_with(&LogisticSolver::default(), x, labels, alpha, target, feature_names)
}

pub fn fit_logistic_l1_with(
    solver: &LogisticSolver,
    x: ArrayView2<'_, f64>,
    labels: &[u8],
    alpha: f64,
    target: Task,
    feature_names: &[String],
) -> Result<LogisticModel> {
    let mut path = fit_logistic_path(solver, x, labels, &[alpha], target, feature_names)?;
    Ok(path.remove(0))
}

/// One model per α, solved from the largest α down with warm starts.
/// Models come back in `alphas` order.
pub fn fit_logistic_path(
    solver: &LogisticSolver,
    x: ArrayView2<'_, f64>,
    labels: &[u8],
    alphas: &[f64],
    target: Task,
    feature_names: &[String],
) -> Result<Vec<LogisticModel>> {
    let (n, p) = x.dim();
    let classes = task_classes(target)?;
    if labels.len() != n || feature_names.len() != p {
        return Err(Error::InvalidArgument(format!(
            "shape mismatch: x is {n}×{p}, {} labels, {} names",
            labels.len(),
            feature_names.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|l| !classes.contains(l)) {
        return Err(Error::InvalidArgument(format!("label {bad} is not a {target} class")));
    }
    let present = classes.iter().filter(|c| labels.contains(c)).count();
    if present < 2 {
        return Err(Error::InvalidArgument(format!(
            "logistic regression needs two distinct classes, found {present}"
        )));
    }
    if let Some(bad) = alphas.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
        return Err(Error::InvalidArgument(format!("alpha must be finite and ≥ 0, got {bad}")));
    }
    let as_f64: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    check_finite(x, &as_f64)?;

    let standardizer = Standardizer::fit(x);
    let z = SparseStandardized::new(x, &standardizer);
    let subproblems = if classes.len() == 2 { &classes[..1] } else { &classes[..] };
    let targets: Vec<Option<Array1<f64>>> = subproblems
        .iter()
        .map(|&c| labels.contains(&c).then(|| indicator(labels, c)))
        .collect();
    let mut order: Vec<usize> = (0..alphas.len()).collect();
    order.sort_by(|&a, &b| alphas[b].total_cmp(&alphas[a]));
    let mut models: Vec<Option<LogisticModel>> = vec![None; alphas.len()];
    let mut warm: Option<Vec<BinaryLogit>> = None;
    for i in order {
        let binary: Vec<BinaryLogit> = targets
            .iter()
            .enumerate()
            .map(|(k, t)| match t {
                Some(y) => solver.solve_from(&z, y.view(), alphas[i], warm.as_ref().map(|w| &w[k])),
                None => BinaryLogit {
                    weights: vec![0.0; p],
                    intercept: ABSENT_CLASS_INTERCEPT,
                    iterations: 0,
                    converged: true,
                },
            })
            .collect();
        warm = Some(binary.clone());
        models[i] = Some(LogisticModel {
            target,
            alpha: alphas[i],
            feature_names: feature_names.to_vec(),
            classes: classes.clone(),
            binary,
            standardizer: standardizer.clone(),
        });
    }
    Ok(models.into_iter().map(|m| m.expect("every α fitted")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("f{j}")).collect()
    }

    fn separable(n: usize, seed: u64) -> (Array2<f64>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::new();
        for i in 0..n {
            let positive = i % 2 == 0;
            let centre = if positive { 2.0 } else { -2.0 };
            x[[i, 0]] = centre + rng.random_range(-1.0..1.0);
            x[[i, 1]] = rng.random_range(-1.0..1.0);
            y.push(u8::from(positive));
        }
        (x, y)
    }

    #[test]
    fn separable_data_is_fit_exactly() {
        let (x, y) = separable(40, 1);
        let m = fit_logistic_l1(x.view(), &y, 0.01, Task::Ri, &names(2)).unwrap();
        assert_eq!(m.predict_classes(x.view()), y);
    }

    #[test]
    fn huge_penalty_predicts_majority_with_severe_ties() {
        let (x, mut y) = separable(40, 2);
        y[1] = 1; // 21 positives vs 19 negatives
        let m = fit_logistic_l1(x.view(), &y, 1e3, Task::Ri, &names(2)).unwrap();
        assert!(m.binary[0].weights.iter().all(|&w| w == 0.0));
        assert!(m.predict_classes(x.view()).iter().all(|&c| c == 1));

        // Balanced multiclass: every class has the same intercept, so the tie goes to SC 1.
        let labels: Vec<u8> = (0..36).map(|i| (i % 6) as u8 + 1).collect();
        let x = Array2::from_shape_fn((36, 2), |(i, j)| ((i * 7 + j * 3) % 5) as f64);
        let m = fit_logistic_l1(x.view(), &labels, 1e3, Task::Sc, &names(2)).unwrap();
        assert!(m.predict_classes(x.view()).iter().all(|&c| c == 1));
    }

    #[test]
    fn absent_classes_get_constant_negative_models() {
        let (x, y) = separable(30, 3);
        let labels: Vec<u8> = y.iter().map(|&v| if v == 1 { 2 } else { 5 }).collect();
        let m = fit_logistic_l1(x.view(), &labels, 0.01, Task::Sc, &names(2)).unwrap();
        assert_eq!(m.binary.len(), 6);
        assert_eq!(m.binary[0].intercept, ABSENT_CLASS_INTERCEPT);
        assert_eq!(m.predict_classes(x.view()), labels);
        for row in m.decision(x.view()) {
            for s in row {
                let p = sigmoid(s);
                assert!(p > 0.0 && p < 1.0);
            }
        }
    }

    #[test]
    fn single_class_input_is_rejected() {
        let x = Array2::zeros((4, 1));
        assert!(fit_logistic_l1(x.view(), &[3, 3, 3, 3], 0.1, Task::Sc, &names(1)).is_err());
        assert!(fit_logistic_l1(x.view(), &[9, 3, 3, 3], 0.1, Task::Sc, &names(1)).is_err());
        assert!(fit_logistic_l1(x.view(), &[1, 0, 1, 0], 0.1, Task::Ns, &names(1)).is_err());
    }

    #[test]
    fn objective_reaches_alpha_max_threshold() {
        let (x, y) = separable(30, 4);
        let z = SparseStandardized::new(x.view(), &Standardizer::fit(x.view()));
        let amax = logistic_alpha_max(&z, &y, &[1, 0]);
        let m = fit_logistic_l1(x.view(), &y, amax * 1.001, Task::Ri, &names(2)).unwrap();
        assert!(m.binary[0].weights.iter().all(|&w| w == 0.0));
        let m = fit_logistic_l1(x.view(), &y, amax * 0.5, Task::Ri, &names(2)).unwrap();
        assert!(m.binary[0].weights.iter().any(|&w| w != 0.0));
    }
}
