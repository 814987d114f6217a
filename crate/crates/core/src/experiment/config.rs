use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::allocation::{AllocatorFeatureSet, QGrid};
use crate::dataset::{SplitRatios, TaskKind};
use crate::error::StageExt;
use crate::models::{Family, HyperparameterGrid};
use crate::{Error, Result};

fn as_config(e: Error) -> Error {
    match e {
        Error::InvalidInput(m) => Error::Config(m),
        Error::Config(m) => Error::Config(m),
        other => Error::Config(other.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SufficiencyMode {
    /// Argmax equality for classification, the ε threshold for regression.
    Auto,
    Always,
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Best validation accuracy (or lowest validation MSE) per role.
    Individual,
    /// Best validation ensemble AUC over all `(g, b)` pairs.
    Combined,
}

/// Flat experiment configuration. Every key is optional in the TOML file;
/// missing keys take the defaults listed in the README.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data_source: DataSource,
    pub csv_path: Option<PathBuf>,
    pub target_column: String,
    pub task: TaskKind,
    pub synthetic_n: usize,
    pub synthetic_noise: f64,
    pub synthetic_seed: u64,

    pub train_ratio: f64,
    pub validation_ratio: f64,
    pub test_ratio: f64,
    pub split_seed: u64,
    pub model_seed: u64,

    pub glass_families: Vec<Family>,
    pub black_families: Vec<Family>,
    pub cv_folds: usize,
    pub linear_l1_penalty: Vec<f64>,
    pub tree_min_split: Vec<usize>,
    pub tree_max_leaf: Vec<usize>,
    pub tree_max_depth: Vec<usize>,
    pub gbt_learning_rate: Vec<f64>,
    pub gbt_n_estimators: Vec<usize>,
    pub gbt_max_depth: Vec<usize>,
    pub gbt_subsample: Vec<f64>,

    pub sufficiency: SufficiencyMode,
    /// Unset means every feature defined for the task.
    pub allocator_features: Option<AllocatorFeatureSet>,
    pub allocator_learning_rate: Vec<f64>,
    pub allocator_n_estimators: Vec<usize>,
    pub allocator_max_depth: Vec<usize>,
    pub allocator_subsample: Vec<f64>,

    pub q_grid: Vec<f64>,
    pub component_selection: SelectionMode,
    pub replicates: usize,
    /// Seeds per replicate; empty means `0..replicates`.
    pub replicate_seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let grid = |f| HyperparameterGrid::default_for(f);
        let HyperparameterGrid::Linear { l1_penalty } = grid(Family::Linear) else {
            unreachable!()
        };
        let HyperparameterGrid::Tree {
            min_split,
            max_leaf,
            max_depth: tree_depth,
        } = grid(Family::Tree)
        else {
            unreachable!()
        };
        let HyperparameterGrid::Gbt {
            learning_rate,
            n_estimators,
            max_depth,
            subsample,
        } = grid(Family::Gbt)
        else {
            unreachable!()
        };
        let ratios = SplitRatios::default();
        ExperimentConfig {
            data_source: DataSource::Synthetic,
            csv_path: None,
            target_column: "y".into(),
            task: TaskKind::Classification,
            synthetic_n: 2000,
            synthetic_noise: 0.0,
            synthetic_seed: 0,
            train_ratio: ratios.train,
            validation_ratio: ratios.validation,
            test_ratio: ratios.test,
            split_seed: 0,
            model_seed: 0,
            glass_families: vec![Family::Linear, Family::Tree],
            black_families: vec![Family::Gbt],
            cv_folds: 4,
            linear_l1_penalty: l1_penalty,
            tree_min_split: min_split,
            tree_max_leaf: max_leaf,
            tree_max_depth: tree_depth,
            gbt_learning_rate: learning_rate,
            gbt_n_estimators: n_estimators,
            gbt_max_depth: max_depth,
            gbt_subsample: subsample,
            sufficiency: SufficiencyMode::Auto,
            allocator_features: None,
            allocator_learning_rate: vec![0.1],
            allocator_n_estimators: vec![16, 64],
            allocator_max_depth: vec![4],
            allocator_subsample: vec![0.75],
            q_grid: QGrid::default().points().to_vec(),
            component_selection: SelectionMode::Individual,
            replicates: 5,
            replicate_seeds: Vec::new(),
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

impl ExperimentConfig {
    /// Reads a TOML file and applies `key=value` overrides. Override values
    /// are parsed as TOML, falling back to a bare string.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
        Self::load_unstaged(path, overrides).stage("config")
    }

    fn load_unstaged(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
            let key = key.trim();
            let value = format!("v = {}", raw.trim())
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
            table.insert(key.to_string(), value);
        }
        let config: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.train_ratio,
            validation: self.validation_ratio,
            test: self.test_ratio,
        }
    }

    pub fn q_grid(&self) -> Result<QGrid> {
        QGrid::new(self.q_grid.clone())
    }

    pub fn grid_for(&self, family: Family) -> HyperparameterGrid {
        match family {
            Family::Linear => HyperparameterGrid::Linear {
                l1_penalty: self.linear_l1_penalty.clone(),
            },
            Family::Tree => HyperparameterGrid::Tree {
                min_split: self.tree_min_split.clone(),
                max_leaf: self.tree_max_leaf.clone(),
                max_depth: self.tree_max_depth.clone(),
            },
            Family::Gbt => HyperparameterGrid::Gbt {
                learning_rate: self.gbt_learning_rate.clone(),
                n_estimators: self.gbt_n_estimators.clone(),
                max_depth: self.gbt_max_depth.clone(),
                subsample: self.gbt_subsample.clone(),
            },
        }
    }

    pub fn allocator_grid(&self) -> HyperparameterGrid {
        HyperparameterGrid::Gbt {
            learning_rate: self.allocator_learning_rate.clone(),
            n_estimators: self.allocator_n_estimators.clone(),
            max_depth: self.allocator_max_depth.clone(),
            subsample: self.allocator_subsample.clone(),
        }
    }

    /// Replicate seeds in aggregation order.
    pub fn feature_set(&self) -> AllocatorFeatureSet {
        match (self.allocator_features, self.task) {
            (Some(set), _) => set,
            (None, TaskKind::Classification) => AllocatorFeatureSet::KITCHEN_SINK,
            (None, TaskKind::Regression) => {
                AllocatorFeatureSet::KITCHEN_SINK.for_task(crate::dataset::Task::Regression)
            }
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        if self.replicate_seeds.is_empty() {
            (0..self.replicates as u64).collect()
        } else {
            self.replicate_seeds.clone()
        }
    }

    /// Checks every field; runs before any computation.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match self.data_source {
            DataSource::Csv if self.csv_path.is_none() => {
                return bad("data_source = \"csv\" needs csv_path".into())
            }
            DataSource::Synthetic if self.task != TaskKind::Classification => {
                return bad("the synthetic generator produces a classification task".into())
            }
            DataSource::Synthetic if self.synthetic_n < 100 => {
                return bad(format!(
                    "synthetic_n must be at least 100, got {}",
                    self.synthetic_n
                ))
            }
            DataSource::Synthetic if !(0.0..=1.0).contains(&self.synthetic_noise) => {
                return bad(format!(
                    "synthetic_noise must lie in [0, 1], got {}",
                    self.synthetic_noise
                ))
            }
            _ => {}
        }
        self.ratios().validate().map_err(as_config)?;
        if self.glass_families.is_empty() || self.black_families.is_empty() {
            return bad("glass_families and black_families must be non-empty".into());
        }
        if self.cv_folds < 2 {
            return bad(format!(
                "cv_folds must be at least 2, got {}",
                self.cv_folds
            ));
        }
        for family in [Family::Linear, Family::Tree, Family::Gbt] {
            let used =
                self.glass_families.contains(&family) || self.black_families.contains(&family);
            if used {
                self.grid_for(family).validate().map_err(as_config)?;
            }
        }
        self.allocator_grid()
            .validate()
            .map_err(|e| Error::Config(format!("allocator {}", as_config(e))))?;
        self.q_grid().map_err(as_config)?;
        if let Some(set) = self.allocator_features {
            if set.d_ce && self.task == TaskKind::Regression {
                return bad("allocator feature d_ce is not defined for regression".into());
            }
        }
        if self.seeds().is_empty() {
            return bad("replicates must be at least 1".into());
        }
        Ok(())
    }
}
