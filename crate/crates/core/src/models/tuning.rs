use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Family, Hyper, Model};
use crate::dataset::Dataset;
use crate::sufficiency::mean_loss;
use crate::{Error, Result};

/// Candidate values per hyperparameter; the grid is their cartesian product
/// in declaration order (last list varies fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum HyperparameterGrid {
    Linear {
        l1_penalty: Vec<f64>,
    },
    Tree {
        min_split: Vec<usize>,
        max_leaf: Vec<usize>,
        max_depth: Vec<usize>,
    },
    Gbt {
        learning_rate: Vec<f64>,
        n_estimators: Vec<usize>,
        max_depth: Vec<usize>,
        subsample: Vec<f64>,
    },
}

impl HyperparameterGrid {
    /// Reduced default grid for a family.
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::Linear => HyperparameterGrid::Linear {
                l1_penalty: (-6..=2).step_by(2).map(|i| 2f64.powi(i)).collect(),
            },
            Family::Tree => HyperparameterGrid::Tree {
                min_split: vec![2, 8, 32],
                max_leaf: vec![8, 64, 512],
                max_depth: vec![2, 4, 8],
            },
            Family::Gbt => HyperparameterGrid::Gbt {
                learning_rate: vec![0.01, 0.1],
                n_estimators: vec![64, 256],
                max_depth: vec![2, 4],
                subsample: vec![0.5, 1.0],
            },
        }
    }

    pub fn family(&self) -> Family {
        match self {
            HyperparameterGrid::Linear { .. } => Family::Linear,
            HyperparameterGrid::Tree { .. } => Family::Tree,
            HyperparameterGrid::Gbt { .. } => Family::Gbt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(format!("{} grid: {what}", self.family())));
        match self {
            HyperparameterGrid::Linear { l1_penalty } => {
                if l1_penalty.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return bad("l1_penalty values must be finite and non-negative");
                }
            }
            HyperparameterGrid::Tree {
                min_split,
                max_leaf,
                max_depth,
            } => {
                if min_split
                    .iter()
                    .chain(max_leaf)
                    .chain(max_depth)
                    .any(|&v| v == 0)
                {
                    return bad("tree constraints must be positive");
                }
            }
            HyperparameterGrid::Gbt {
                learning_rate,
                max_depth,
                subsample,
                ..
            } => {
                if learning_rate.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return bad("learning_rate values must be positive");
                }
                if max_depth.contains(&0) {
                    return bad("max_depth values must be positive");
                }
                if subsample.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
                    return bad("subsample values must lie in (0, 1]");
                }
            }
        }
        if self.points().is_empty() {
            return Err(Error::invalid(format!("{} grid is empty", self.family())));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<Hyper> {
        let mut out = Vec::new();
        match self {
            HyperparameterGrid::Linear { l1_penalty } => {
                out.extend(
                    l1_penalty
                        .iter()
                        .map(|&l1_penalty| Hyper::Linear { l1_penalty }),
                );
            }
            HyperparameterGrid::Tree {
                min_split,
                max_leaf,
                max_depth,
            } => {
                for &min_split in min_split {
                    for &max_leaf in max_leaf {
                        for &max_depth in max_depth {
                            out.push(Hyper::Tree {
                                min_split,
                                max_leaf,
                                max_depth,
                            });
                        }
                    }
                }
            }
            HyperparameterGrid::Gbt {
                learning_rate,
                n_estimators,
                max_depth,
                subsample,
            } => {
                for &learning_rate in learning_rate {
                    for &n_estimators in n_estimators {
                        for &max_depth in max_depth {
                            for &subsample in subsample {
                                out.push(Hyper::Gbt {
                                    learning_rate,
                                    n_estimators,
                                    max_depth,
                                    subsample,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Outcome of a grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub chosen: Hyper,
    /// Validation loss of the chosen point on each fold.
    pub fold_losses: Vec<f64>,
    /// Mean fold loss of every grid point, in grid order.
    pub grid_mean_losses: Vec<f64>,
    /// Training loss of the model refitted on the full training set.
    pub refit_loss: f64,
}

/// Positions of each fold: seeded shuffle, then contiguous chunks whose
/// sizes differ by at most one.
pub fn kfold_assignments(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for k in 0..folds {
        let len = base + usize::from(k < extra);
        out.push(order[start..start + len].to_vec());
        start += len;
    }
    out
}

/// K-fold cross-validated grid search minimizing mean underlying loss.
///
/// Ties in mean fold loss go to the earliest grid point. The winner is
/// refitted on all of `train`. Grid points run in parallel; the result does
/// not depend on scheduling.
pub fn grid_search(
    grid: &HyperparameterGrid,
    train: &Dataset,
    folds: usize,
    seed: u64,
) -> Result<(Model, FitReport)> {
    grid.validate()?;
    if folds < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if train.len() < folds {
        return Err(Error::invalid(format!(
            "{} observations cannot fill {folds} folds",
            train.len()
        )));
    }
    let assignments = kfold_assignments(train.len(), folds, seed);
    let splits: Vec<(Dataset, Dataset)> = (0..folds)
        .map(|k| {
            let held: Vec<usize> = {
                let mut v = assignments[k].clone();
                v.sort_unstable();
                v
            };
            let mut fit: Vec<usize> = assignments
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .flat_map(|(_, a)| a.iter().copied())
                .collect();
            fit.sort_unstable();
            (train.subset(&fit), train.subset(&held))
        })
        .collect();

    let points = grid.points();
    let per_point: Vec<Vec<f64>> = points
        .par_iter()
        .map(|hyper| {
            splits
                .par_iter()
                .map(|(fit, held)| {
                    let loss = Model::fit(hyper, fit, seed).and_then(|m| mean_loss(&m, held));
                    match loss {
                        Ok(l) if l.is_finite() => Ok(l),
                        Ok(_) | Err(Error::NonFiniteObjective { .. }) => Ok(f64::INFINITY),
                        Err(e) => Err(e),
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let means: Vec<f64> = per_point
        .iter()
        .map(|l| l.iter().sum::<f64>() / folds as f64)
        .collect();
    let mut best = 0;
    for (i, &m) in means.iter().enumerate() {
        if m < means[best] {
            best = i;
        }
    }
    let model = Model::fit(&points[best], train, seed)?;
    let refit_loss = mean_loss(&model, train)?;
    Ok((
        model,
        FitReport {
            chosen: points[best],
            fold_losses: per_point[best].clone(),
            grid_mean_losses: means,
            refit_loss,
        },
    ))
}
