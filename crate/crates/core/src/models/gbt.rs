use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, Columns, GrowParams, SplitTarget, Tree};
use super::{softmax, Hyper};
use crate::dataset::{Dataset, Task};
use crate::{Error, Result, PROB_FLOOR};

/// Stagewise additive regression trees.
///
/// Regression fits squared error. Classification fits one tree per class
/// and stage on softmax cross-entropy residuals, with Friedman's one-step
/// Newton leaf values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub task: Task,
    pub n_features: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub subsample: f64,
    pub seed: u64,
    /// Initial raw score per output (one for regression, one per class).
    pub base: Vec<f64>,
    /// `stages[m][k]` is the tree for output `k` at stage `m`.
    pub stages: Vec<Vec<Tree>>,
}

impl GbtModel {
    pub fn fit(
        train: &Dataset,
        learning_rate: f64,
        n_estimators: usize,
        max_depth: usize,
        subsample: f64,
        seed: u64,
    ) -> Result<GbtModel> {
        Self::fit_traced(
            train,
            learning_rate,
            n_estimators,
            max_depth,
            subsample,
            seed,
            |_| {},
        )
    }

    /// Like [`fit`](Self::fit), calling `trace` with the mean training loss
    /// before the first stage and after every stage.
    pub fn fit_traced(
        train: &Dataset,
        learning_rate: f64,
        n_estimators: usize,
        max_depth: usize,
        subsample: f64,
        seed: u64,
        mut trace: impl FnMut(f64),
    ) -> Result<GbtModel> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning_rate must be > 0, got {learning_rate}"
            )));
        }
        if !(subsample > 0.0 && subsample <= 1.0) {
            return Err(Error::invalid(format!(
                "subsample must lie in (0, 1], got {subsample}"
            )));
        }
        if max_depth == 0 {
            return Err(Error::invalid("max_depth must be positive"));
        }
        if train.is_empty() {
            return Err(Error::invalid("empty training set"));
        }
        let n = train.len();
        let columns = Columns::from_dataset(train);
        let presorted = columns.presort();
        let params = GrowParams {
            min_split: 2,
            max_leaf: usize::MAX,
            max_depth,
        };
        let n_sub = ((subsample * n as f64).floor() as usize).clamp(1, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut in_sample = vec![true; n];
        let draw = |rng: &mut ChaCha8Rng, in_sample: &mut Vec<bool>| -> Vec<Vec<u32>> {
            if n_sub == n {
                return presorted.clone();
            }
            in_sample.iter_mut().for_each(|b| *b = false);
            for i in sample(rng, n, n_sub) {
                in_sample[i] = true;
            }
            presorted
                .iter()
                .map(|list| {
                    list.iter()
                        .copied()
                        .filter(|&r| in_sample[r as usize])
                        .collect()
                })
                .collect()
        };

        let mut stages = Vec::with_capacity(n_estimators);
        let base;
        match train.task {
            Task::Regression => {
                let y = train.targets();
                let mean = y.iter().sum::<f64>() / n as f64;
                base = vec![mean];
                let mut f = vec![mean; n];
                let mse = |f: &[f64]| {
                    f.iter()
                        .zip(&y)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        / n as f64
                };
                trace(mse(&f));
                let mut residual = vec![0.0; n];
                for _ in 0..n_estimators {
                    for i in 0..n {
                        residual[i] = y[i] - f[i];
                    }
                    let sorted = draw(&mut rng, &mut in_sample);
                    let leaf = |rows: &[u32]| {
                        vec![
                            rows.iter().map(|&r| residual[r as usize]).sum::<f64>()
                                / rows.len().max(1) as f64,
                        ]
                    };
                    let tree = grow(
                        &columns,
                        sorted,
                        &SplitTarget::Values(&residual),
                        params,
                        &leaf,
                    );
                    for (i, obs) in train.observations.iter().enumerate() {
                        f[i] += learning_rate * tree.leaf_value(&obs.x)[0];
                    }
                    trace(mse(&f));
                    stages.push(vec![tree]);
                }
            }
            Task::Classification { n_classes } => {
                let k = n_classes;
                let labels: Vec<usize> = train.observations.iter().map(|o| o.class()).collect();
                let mut prior = vec![0.0; k];
                for &c in &labels {
                    prior[c] += 1.0;
                }
                base = prior
                    .iter()
                    .map(|c| (c / n as f64).max(PROB_FLOOR).ln())
                    .collect();
                let mut f: Vec<Vec<f64>> = vec![base.clone(); n];
                let log_loss = |f: &[Vec<f64>]| {
                    f.iter()
                        .zip(&labels)
                        .map(|(row, &c)| -softmax(row)[c].max(PROB_FLOOR).ln())
                        .sum::<f64>()
                        / n as f64
                };
                trace(log_loss(&f));
                let scale = (k as f64 - 1.0) / k as f64;
                let mut residual = vec![0.0; n];
                for _ in 0..n_estimators {
                    let probs: Vec<Vec<f64>> = f.iter().map(|row| softmax(row)).collect();
                    let sorted = draw(&mut rng, &mut in_sample);
                    let mut stage = Vec::with_capacity(k);
                    for class in 0..k {
                        for ((r, &label), p) in residual.iter_mut().zip(&labels).zip(&probs) {
                            *r = f64::from(u8::from(label == class)) - p[class];
                        }
                        let leaf = |rows: &[u32]| {
                            let (mut num, mut den) = (0.0, 0.0);
                            for &r in rows {
                                let g = residual[r as usize];
                                num += g;
                                den += g.abs() * (1.0 - g.abs());
                            }
                            vec![if den < 1e-12 { 0.0 } else { scale * num / den }]
                        };
                        stage.push(grow(
                            &columns,
                            sorted.clone(),
                            &SplitTarget::Values(&residual),
                            params,
                            &leaf,
                        ));
                    }
                    for (i, obs) in train.observations.iter().enumerate() {
                        for (class, tree) in stage.iter().enumerate() {
                            f[i][class] += learning_rate * tree.leaf_value(&obs.x)[0];
                        }
                    }
                    trace(log_loss(&f));
                    stages.push(stage);
                }
            }
        }
        Ok(GbtModel {
            task: train.task,
            n_features: train.n_features(),
            learning_rate,
            max_depth,
            subsample,
            seed,
            base,
            stages,
        })
    }

    /// Raw additive scores (before softmax for classification).
    pub fn raw_scores(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.base.clone();
        for stage in &self.stages {
            for (o, tree) in out.iter_mut().zip(stage) {
                *o += self.learning_rate * tree.leaf_value(x)[0];
            }
        }
        out
    }

    pub(crate) fn raw(&self, x: &[f64]) -> Vec<f64> {
        let scores = self.raw_scores(x);
        match self.task {
            Task::Classification { .. } => softmax(&scores),
            Task::Regression => scores,
        }
    }

    pub fn hyper(&self) -> Hyper {
        Hyper::Gbt {
            learning_rate: self.learning_rate,
            n_estimators: self.stages.len(),
            max_depth: self.max_depth,
            subsample: self.subsample,
        }
    }
}
