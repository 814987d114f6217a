use serde::{Deserialize, Serialize};

use super::softmax;
use crate::dataset::{Dataset, Task};
use crate::{Error, Result, PROB_FLOOR};

/// Stop when the objective changes by less than this fraction between iterations...
pub const REL_TOL: f64 = 1e-7;
/// ...and the proximal gradient mapping is this small.
pub const GRAD_TOL: f64 = 1e-6;
pub const MAX_ITER: usize = 10_000;

/// L1-penalized linear regression (squared error) or multinomial logistic
/// regression (cross-entropy). Intercepts are not penalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub task: Task,
    pub n_features: usize,
    pub l1_penalty: f64,
    /// One row per output: `[intercept, w_1, ..., w_d]`.
    pub coefficients: Vec<Vec<f64>>,
    pub iterations: usize,
}

struct Problem<'a> {
    rows: Vec<&'a [f64]>,
    targets: Vec<f64>,
    task: Task,
    outputs: usize,
    width: usize,
}

impl Problem<'_> {
    /// Mean loss and its gradient at `w`.
    fn value_grad(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let n = self.rows.len() as f64;
        let width = self.width;
        let mut total = 0.0;
        match self.task {
            Task::Regression => {
                for (x, &y) in self.rows.iter().zip(&self.targets) {
                    let r = w[0] + dot(&w[1..], x) - y;
                    total += r * r;
                    let s = 2.0 * r / n;
                    grad[0] += s;
                    for (g, xi) in grad[1..].iter_mut().zip(x.iter()) {
                        *g += s * xi;
                    }
                }
            }
            Task::Classification { .. } => {
                let mut z = vec![0.0; self.outputs];
                for (x, &y) in self.rows.iter().zip(&self.targets) {
                    for (k, zk) in z.iter_mut().enumerate() {
                        let row = &w[k * width..(k + 1) * width];
                        *zk = row[0] + dot(&row[1..], x);
                    }
                    let p = softmax(&z);
                    let c = y as usize;
                    total -= p[c].max(PROB_FLOOR).ln();
                    for (k, pk) in p.iter().enumerate() {
                        let s = (pk - f64::from(u8::from(k == c))) / n;
                        let g = &mut grad[k * width..(k + 1) * width];
                        g[0] += s;
                        for (gj, xi) in g[1..].iter_mut().zip(x.iter()) {
                            *gj += s * xi;
                        }
                    }
                }
            }
        }
        total / n
    }

    fn value(&self, w: &[f64]) -> f64 {
        let mut scratch = vec![0.0; w.len()];
        self.value_grad(w, &mut scratch)
    }

    fn penalty(&self, w: &[f64], l1: f64) -> f64 {
        l1 * w
            .chunks(self.width)
            .flat_map(|row| row[1..].iter())
            .map(|v| v.abs())
            .sum::<f64>()
    }

    fn prox(&self, w: &mut [f64], threshold: f64) {
        for row in w.chunks_mut(self.width) {
            for v in &mut row[1..] {
                *v = v.signum() * (v.abs() - threshold).max(0.0);
            }
        }
    }

    /// Upper estimate of the gradient's Lipschitz constant, from the top
    /// eigenvalue of the (intercept-augmented) Gram matrix.
    fn lipschitz(&self) -> f64 {
        let m = self.width;
        let n = self.rows.len() as f64;
        let mut gram = vec![0.0; m * m];
        let mut aug = vec![1.0; m];
        for x in &self.rows {
            aug[1..].copy_from_slice(x);
            for i in 0..m {
                for j in 0..m {
                    gram[i * m + j] += aug[i] * aug[j] / n;
                }
            }
        }
        let mut v = vec![1.0 / (m as f64).sqrt(); m];
        let mut lambda = 0.0;
        for _ in 0..200 {
            let mut next = vec![0.0; m];
            for i in 0..m {
                next[i] = dot(&gram[i * m..(i + 1) * m], &v);
            }
            let norm = dot(&next, &next).sqrt();
            if norm == 0.0 {
                break;
            }
            lambda = norm;
            v = next.into_iter().map(|e| e / norm).collect();
        }
        let curvature = match self.task {
            Task::Regression => 2.0,
            Task::Classification { .. } => 0.5,
        };
        (1.05 * curvature * lambda).max(1e-12)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LinearModel {
    /// Accelerated proximal gradient (FISTA with backtracking and
    /// function-value restart) on `mean loss + l1 · ‖w‖₁`.
    pub fn fit(train: &Dataset, l1_penalty: f64) -> Result<LinearModel> {
        if !(l1_penalty >= 0.0 && l1_penalty.is_finite()) {
            return Err(Error::invalid(format!(
                "l1_penalty must be non-negative, got {l1_penalty}"
            )));
        }
        if train.is_empty() {
            return Err(Error::invalid("empty training set"));
        }
        let d = train.n_features();
        let outputs = train.task.n_classes().unwrap_or(1);
        let problem = Problem {
            rows: train.observations.iter().map(|o| o.x.as_slice()).collect(),
            targets: train.targets(),
            task: train.task,
            outputs,
            width: d + 1,
        };
        let dim = outputs * (d + 1);

        let mut w = vec![0.0; dim];
        let mut w_prev = w.clone();
        let mut y = w.clone();
        let mut grad = vec![0.0; dim];
        let mut candidate = vec![0.0; dim];
        let mut step = 1.0 / problem.lipschitz();
        let mut momentum = 1.0f64;
        let mut objective = problem.value(&w) + problem.penalty(&w, l1_penalty);
        let mut iterations = 0;

        while iterations < MAX_ITER {
            iterations += 1;
            let fy = problem.value_grad(&y, &mut grad);
            let (f_new, mapping_norm) = loop {
                for i in 0..dim {
                    candidate[i] = y[i] - step * grad[i];
                }
                problem.prox(&mut candidate, step * l1_penalty);
                let f_new = problem.value(&candidate);
                let mut lin = 0.0;
                let mut sq = 0.0;
                for i in 0..dim {
                    let delta = candidate[i] - y[i];
                    lin += grad[i] * delta;
                    sq += delta * delta;
                }
                if !f_new.is_finite() {
                    return Err(Error::NonFiniteObjective { iterations });
                }
                if f_new <= fy + lin + sq / (2.0 * step) + 1e-15 * fy.abs() || step < 1e-20 {
                    break (f_new, sq.sqrt() / step);
                }
                step *= 0.5;
            };
            let new_objective = f_new + problem.penalty(&candidate, l1_penalty);
            if !new_objective.is_finite() {
                return Err(Error::NonFiniteObjective { iterations });
            }

            let restart = new_objective > objective;
            w_prev.copy_from_slice(&w);
            w.copy_from_slice(&candidate);
            let change = (objective - new_objective).abs();
            let converged =
                change <= REL_TOL * objective.abs().max(1e-12) && mapping_norm < GRAD_TOL;
            objective = new_objective;
            if converged {
                break;
            }
            if restart {
                momentum = 1.0;
                y.copy_from_slice(&w);
            } else {
                let next = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
                let beta = (momentum - 1.0) / next;
                for i in 0..dim {
                    y[i] = w[i] + beta * (w[i] - w_prev[i]);
                }
                momentum = next;
            }
        }

        Ok(LinearModel {
            task: train.task,
            n_features: d,
            l1_penalty,
            coefficients: w.chunks(d + 1).map(<[f64]>::to_vec).collect(),
            iterations,
        })
    }

    pub(crate) fn raw(&self, x: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = self
            .coefficients
            .iter()
            .map(|row| row[0] + dot(&row[1..], x))
            .collect();
        match self.task {
            Task::Classification { .. } => softmax(&z),
            Task::Regression => z,
        }
    }

    /// Gradient of the smooth part (mean loss) at the fitted coefficients.
    pub fn loss_gradient(&self, train: &Dataset) -> Vec<f64> {
        let problem = Problem {
            rows: train.observations.iter().map(|o| o.x.as_slice()).collect(),
            targets: train.targets(),
            task: train.task,
            outputs: self.coefficients.len(),
            width: self.n_features + 1,
        };
        let w: Vec<f64> = self.coefficients.concat();
        let mut grad = vec![0.0; w.len()];
        problem.value_grad(&w, &mut grad);
        grad
    }
}
