//! Glass-box and black-box prediction models and hyperparameter search.
//!
//! Fitted models are plain data: [`Model`] serializes to JSON with a
//! `family` tag, its hyperparameters and, for tree models, node arrays.

mod gbt;
mod linear;
mod tree;
mod tuning;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use gbt::GbtModel;
pub use linear::LinearModel;
pub use tree::{Node, Tree, TreeModel};
pub use tuning::{grid_search, kfold_assignments, FitReport, HyperparameterGrid};

use crate::dataset::{Dataset, Task};
use crate::{Error, Result};

/// Model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Linear,
    Tree,
    Gbt,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Linear => "linear",
            Family::Tree => "tree",
            Family::Gbt => "gbt",
        })
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Family::Linear),
            "tree" => Ok(Family::Tree),
            "gbt" => Ok(Family::Gbt),
            other => Err(Error::invalid(format!("unknown model family `{other}`"))),
        }
    }
}

/// One point of a hyperparameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Hyper {
    Linear {
        l1_penalty: f64,
    },
    Tree {
        min_split: usize,
        max_leaf: usize,
        max_depth: usize,
    },
    Gbt {
        learning_rate: f64,
        n_estimators: usize,
        max_depth: usize,
        subsample: f64,
    },
}

impl Hyper {
    pub fn family(&self) -> Family {
        match self {
            Hyper::Linear { .. } => Family::Linear,
            Hyper::Tree { .. } => Family::Tree,
            Hyper::Gbt { .. } => Family::Gbt,
        }
    }
}

/// Model output for one observation.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Probabilities(Vec<f64>),
    Value(f64),
}

impl Prediction {
    /// Output as a flat vector (probabilities, or a single value).
    pub fn as_slice(&self) -> &[f64] {
        match self {
            Prediction::Probabilities(p) => p,
            Prediction::Value(v) => std::slice::from_ref(v),
        }
    }

    /// Predicted class (argmax, lowest index on ties) or value.
    pub fn point(&self) -> f64 {
        match self {
            Prediction::Probabilities(p) => argmax(p) as f64,
            Prediction::Value(v) => *v,
        }
    }
}

/// A fitted glass-box or black-box model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Model {
    Linear(LinearModel),
    Tree(TreeModel),
    Gbt(GbtModel),
}

impl Model {
    /// Fits the family named by `hyper` on `train`.
    pub fn fit(hyper: &Hyper, train: &Dataset, seed: u64) -> Result<Model> {
        Ok(match *hyper {
            Hyper::Linear { l1_penalty } => Model::Linear(LinearModel::fit(train, l1_penalty)?),
            Hyper::Tree {
                min_split,
                max_leaf,
                max_depth,
            } => Model::Tree(TreeModel::fit(train, min_split, max_leaf, max_depth)?),
            Hyper::Gbt {
                learning_rate,
                n_estimators,
                max_depth,
                subsample,
            } => Model::Gbt(GbtModel::fit(
                train,
                learning_rate,
                n_estimators,
                max_depth,
                subsample,
                seed,
            )?),
        })
    }

    pub fn family(&self) -> Family {
        match self {
            Model::Linear(_) => Family::Linear,
            Model::Tree(_) => Family::Tree,
            Model::Gbt(_) => Family::Gbt,
        }
    }

    pub fn task(&self) -> Task {
        match self {
            Model::Linear(m) => m.task,
            Model::Tree(m) => m.task,
            Model::Gbt(m) => m.task,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::Linear(m) => m.n_features,
            Model::Tree(m) => m.n_features,
            Model::Gbt(m) => m.n_features,
        }
    }

    pub fn hyper(&self) -> Hyper {
        match self {
            Model::Linear(m) => Hyper::Linear {
                l1_penalty: m.l1_penalty,
            },
            Model::Tree(m) => Hyper::Tree {
                min_split: m.min_split,
                max_leaf: m.max_leaf,
                max_depth: m.max_depth,
            },
            Model::Gbt(m) => m.hyper(),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Probabilities for classification, the value for regression.
    pub fn output(&self, x: &[f64]) -> Result<Prediction> {
        self.check_dim(x)?;
        let raw = match self {
            Model::Linear(m) => m.raw(x),
            Model::Tree(m) => m.raw(x),
            Model::Gbt(m) => m.raw(x),
        };
        Ok(match self.task() {
            Task::Classification { .. } => Prediction::Probabilities(raw),
            Task::Regression => Prediction::Value(raw[0]),
        })
    }

    /// Predicted class index (as `f64`) or regression value.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.output(x)?.point())
    }

    /// Class-probability vector; errors for regression models.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self.output(x)? {
            Prediction::Probabilities(p) => Ok(p),
            Prediction::Value(_) => Err(Error::invalid("predict_proba on a regression model")),
        }
    }

    /// Outputs for every observation of a dataset.
    pub fn outputs(&self, data: &Dataset) -> Result<Vec<Prediction>> {
        data.observations
            .iter()
            .map(|o| self.output(&o.x))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Model> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::gen_complementary_2d;
    use rand::{Rng, SeedableRng};

    #[test]
    fn argmax_ties_go_to_lowest_index() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(Prediction::Probabilities(vec![0.5, 0.5]).point(), 0.0);
    }

    #[test]
    fn constant_model_predicts_constant() {
        let d = gen_complementary_2d(200, 3, 0.0).unwrap();
        let m = Model::fit(
            &Hyper::Tree {
                min_split: 2,
                max_leaf: 1,
                max_depth: 4,
            },
            &d,
            0,
        )
        .unwrap();
        let first = m.predict(&[0.0, 0.0]).unwrap();
        for x in [[0.9, -0.9], [-0.3, 0.2], [1.0, 1.0]] {
            assert_eq!(m.predict(&x).unwrap(), first);
        }
    }

    #[test]
    fn probabilities_sum_to_one_for_every_family() {
        let d = gen_complementary_2d(300, 4, 0.1).unwrap();
        let hypers = [
            Hyper::Linear { l1_penalty: 0.01 },
            Hyper::Tree {
                min_split: 4,
                max_leaf: 16,
                max_depth: 4,
            },
            Hyper::Gbt {
                learning_rate: 0.1,
                n_estimators: 20,
                max_depth: 2,
                subsample: 0.8,
            },
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for h in &hypers {
            let m = Model::fit(h, &d, 1).unwrap();
            for _ in 0..100 {
                let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let p = m.predict_proba(&x).unwrap();
                assert!(p.iter().all(|&v| v >= 0.0));
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert_eq!(m.predict(&x).unwrap(), argmax(&p) as f64);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let d = gen_complementary_2d(100, 3, 0.0).unwrap();
        let m = Model::fit(&Hyper::Linear { l1_penalty: 0.1 }, &d, 0).unwrap();
        assert!(matches!(
            m.predict(&[0.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn json_roundtrip_preserves_predictions() {
        let d = gen_complementary_2d(200, 8, 0.05).unwrap();
        let m = Model::fit(
            &Hyper::Gbt {
                learning_rate: 0.1,
                n_estimators: 10,
                max_depth: 3,
                subsample: 1.0,
            },
            &d,
            0,
        )
        .unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.starts_with("{\"family\":\"gbt\""));
        let back: Model = serde_json::from_str(&text).unwrap();
        for o in &d.observations {
            assert_eq!(m.output(&o.x).unwrap(), back.output(&o.x).unwrap());
        }
    }
}
