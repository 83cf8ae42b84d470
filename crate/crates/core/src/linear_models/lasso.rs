use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_finite, soft_threshold, Design, SparseStandardized, Standardizer};
use crate::corpus::Task;
use crate::error::{Error, Result};

/// Lasso regression fitted in standardized feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub target: Task,
    pub alpha: f64,
    pub feature_names: Vec<String>,
    /// Weights on standardized features.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub standardizer: Standardizer,
    pub cycles: usize,
    pub converged: bool,
}

impl LassoModel {
    /// Unclamped linear output for raw feature rows.
    pub fn decision(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        let z = self.standardizer.transform(x);
        z.dot(&ArrayView1::from(&self.weights[..])) + self.intercept
    }
}

/// Cyclic coordinate descent for (1/2n)‖y − Zw‖² + α‖w‖₁ on centered `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoSolver {
    /// Stop when the largest coefficient change in a cycle is below this.
    pub tol: f64,
    pub max_cycles: usize,
    pub record_objective: bool,
}

impl Default for LassoSolver {
    fn default() -> Self {
        LassoSolver {
            tol: 1e-6,
            max_cycles: 10_000,
            record_objective: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub weights: Array1<f64>,
    pub cycles: usize,
    pub converged: bool,
    /// Objective before the first cycle and after each cycle, when recorded.
    pub objective_trace: Vec<f64>,
}

pub fn lasso_objective<D: Design + ?Sized>(z: &D, y: ArrayView1<'_, f64>, w: ArrayView1<'_, f64>, alpha: f64) -> f64 {
    let n = z.nrows() as f64;
    let r = &y - &z.mul(w);
    r.dot(&r) / (2.0 * n) + alpha * w.iter().map(|v| v.abs()).sum::<f64>()
}

/// Smallest α with an all-zero solution: maxⱼ |zⱼᵀy| / n for centered `y`.
pub fn lasso_alpha_max<D: Design + ?Sized>(z: &D, y: ArrayView1<'_, f64>) -> f64 {
    let n = z.nrows() as f64;
    // Same per-column reduction as the first solver cycle so the threshold is exact.
    let y_sum = y.sum();
    (0..z.ncols()).fold(0.0_f64, |m, j| m.max((z.col_dot(j, y, y_sum) / n).abs()))
}

impl LassoSolver {
    pub fn solve<D: Design + ?Sized>(&self, z: &D, y: ArrayView1<'_, f64>, alpha: f64) -> LassoSolution {
        self.solve_from(z, y, alpha, None)
    }

    /// Coordinate descent from `start` (zeros when absent).
    ///
    /// After each full cycle that changes anything, cycles run over the
    /// nonzero coordinates only until they settle; convergence is declared
    /// only by a full cycle. Every cycle counts toward `max_cycles`.
    pub fn solve_from<D: Design + ?Sized>(
        &self,
        z: &D,
        y: ArrayView1<'_, f64>,
        alpha: f64,
        start: Option<ArrayView1<'_, f64>>,
    ) -> LassoSolution {
        let (n, p) = (z.nrows(), z.ncols());
        let nf = n as f64;
        let col_sq: Vec<f64> = (0..p).map(|j| z.col_sq(j) / nf).collect();
        let mut w = match start {
            Some(s) if s.len() == p => s.to_owned(),
            _ => Array1::<f64>::zeros(p),
        };
        let mut residual = if w.iter().all(|&v| v == 0.0) {
            y.to_owned()
        } else {
            &y - &z.mul(w.view())
        };
        let mut trace = Vec::new();
        if self.record_objective {
            trace.push(lasso_objective(z, y, w.view(), alpha));
        }
        let mut cycle = |coords: &mut dyn Iterator<Item = usize>, w: &mut Array1<f64>| {
            let mut max_delta = 0.0_f64;
            let mut r_sum = residual.sum();
            for j in coords {
                if col_sq[j] == 0.0 {
                    continue;
                }
                let old = w[j];
                let rho = z.col_dot(j, residual.view(), r_sum) / nf + col_sq[j] * old;
                let new = soft_threshold(rho, alpha) / col_sq[j];
                let delta = new - old;
                if delta != 0.0 {
                    r_sum += z.col_axpy(j, -delta, &mut residual);
                    w[j] = new;
                    max_delta = max_delta.max(delta.abs());
                }
            }
            max_delta
        };
        let mut cycles = 0;
        let mut converged = false;
        while cycles < self.max_cycles {
            cycles += 1;
            let full_delta = cycle(&mut (0..p), &mut w);
            if self.record_objective {
                trace.push(lasso_objective(z, y, w.view(), alpha));
            }
            if full_delta < self.tol {
                converged = true;
                break;
            }
            let active: Vec<usize> = (0..p).filter(|&j| w[j] != 0.0).collect();
            while cycles < self.max_cycles {
                cycles += 1;
                let delta = cycle(&mut active.iter().copied(), &mut w);
                if self.record_objective {
                    trace.push(lasso_objective(z, y, w.view(), alpha));
                }
                if delta < self.tol {
                    break;
                }
            }
        }
        LassoSolution {
            weights: w,
            cycles,
            converged,
            objective_trace: trace,
        }
    }
}

/// Fits lasso after z-scoring `x` and centering `y`; the intercept is ȳ.
pub fn fit_lasso(x: ArrayView2<'_, f64>, y: &[f64], alpha: f64, target: Task, feature_names: &[String]) -> Result<LassoModel> {
    fit_lasso_with(&LassoSolver::default(), x, y, alpha, target, feature_names)
}

pub fn fit_lasso_with(
    solver: &LassoSolver,
    x: ArrayView2<'_, f64>,
    y: &[f64],
    alpha: f64,
    target: Task,
    feature_names: &[String],
) -> Result<LassoModel> {
    let mut path = fit_lasso_path(solver, x, y, &[alpha], target, feature_names)?;
    Ok(path.remove(0))
}

/// Fits one model per α, solving from the largest α down and warm-starting
/// each fit from the previous solution. Models come back in `alphas` order.
pub fn fit_lasso_path(
    solver: &LassoSolver,
    x: ArrayView2<'_, f64>,
    y: &[f64],
    alphas: &[f64],
    target: Task,
    feature_names: &[String],
) -> Result<Vec<LassoModel>> {
    let (n, p) = x.dim();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("lasso needs at least 2 rows, got {n}")));
    }
    if y.len() != n || feature_names.len() != p {
        return Err(Error::InvalidArgument(format!(
            "shape mismatch: x is {n}×{p}, {} targets, {} names",
            y.len(),
            feature_names.len()
        )));
    }
    if let Some(bad) = alphas.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
        return Err(Error::InvalidArgument(format!("alpha must be finite and ≥ 0, got {bad}")));
    }
    check_finite(x, y)?;
    let standardizer = Standardizer::fit(x);
    let z = SparseStandardized::new(x, &standardizer);
    let mean = y.iter().sum::<f64>() / n as f64;
    let yc: Array1<f64> = y.iter().map(|v| v - mean).collect();
    let mut order: Vec<usize> = (0..alphas.len()).collect();
    order.sort_by(|&a, &b| alphas[b].total_cmp(&alphas[a]));
    let mut models: Vec<Option<LassoModel>> = vec![None; alphas.len()];
    let mut warm: Option<Array1<f64>> = None;
    for i in order {
        let solution = solver.solve_from(&z, yc.view(), alphas[i], warm.as_ref().map(|w| w.view()));
        models[i] = Some(LassoModel {
            target,
            alpha: alphas[i],
            feature_names: feature_names.to_vec(),
            weights: solution.weights.to_vec(),
            intercept: mean,
            standardizer: standardizer.clone(),
            cycles: solution.cycles,
            converged: solution.converged,
        });
        warm = Some(solution.weights);
    }
    Ok(models.into_iter().map(|m| m.expect("every α fitted")).collect())
}
