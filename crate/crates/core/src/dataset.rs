//! Tabular datasets: CSV ingestion, seeded splits, `[-1, 1]` scaling and the
//! bundled complementary-expertise generator.
//!
//! # Synthetic task geometry
//!
//! [`gen_complementary_2d`] draws points uniformly on `[-1, 1]²` and labels
//! them by a rule that differs between the two half-planes:
//!
//! - left (`x1 < 0`): class 1 inside the diamond `|x1 + 0.5| / 0.5 + |x2| < 1`,
//!   i.e. the diamond inscribed in the left half-plane, class 0 outside;
//! - right (`x1 >= 0`): with `(r, θ)` the polar coordinates of
//!   `(x1 - 0.5, x2)`, class 1 where `sin(2θ - 3r) > 0` (a two-arm spiral).
//!
//! Each label is then flipped independently with probability `noise`.
//! Axis-aligned trees describe the diamond with a handful of splits while the
//! spiral needs many, so a shallow glass box and a boosted black box end up
//! with different areas of expertise.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kind of the underlying prediction task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Regression,
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TaskKind::Classification => f.write_str("classification"),
            TaskKind::Regression => f.write_str("regression"),
        }
    }
}

/// Task of a concrete dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    Classification { n_classes: usize },
    Regression,
}

impl Task {
    pub fn kind(&self) -> TaskKind {
        match self {
            Task::Classification { .. } => TaskKind::Classification,
            Task::Regression => TaskKind::Regression,
        }
    }

    /// Number of classes, or `None` for regression.
    pub fn n_classes(&self) -> Option<usize> {
        match *self {
            Task::Classification { n_classes } => Some(n_classes),
            Task::Regression => None,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, Task::Classification { .. })
    }
}

/// One row: features, response and a stable id.
///
/// For classification `y` holds the class index as an integer-valued float.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub id: usize,
    pub x: Vec<f64>,
    pub y: f64,
}

impl Observation {
    /// The class index of a classification response.
    pub fn class(&self) -> usize {
        self.y as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub observations: Vec<Observation>,
    pub task: Task,
    pub feature_names: Vec<String>,
    pub target_name: String,
    /// Original label strings in class-index order (classification only).
    pub class_labels: Vec<String>,
}

impl Dataset {
    /// Builds a dataset, checking the row invariants.
    pub fn new(
        observations: Vec<Observation>,
        task: Task,
        feature_names: Vec<String>,
        target_name: impl Into<String>,
        class_labels: Vec<String>,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::invalid("dataset is empty"));
        }
        let dim = feature_names.len();
        if dim == 0 {
            return Err(Error::invalid("dataset has no features"));
        }
        let mut seen = std::collections::HashSet::with_capacity(observations.len());
        for obs in &observations {
            if obs.x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: obs.x.len(),
                });
            }
            if obs.x.iter().any(|v| !v.is_finite()) || !obs.y.is_finite() {
                return Err(Error::invalid(format!(
                    "observation {} is not finite",
                    obs.id
                )));
            }
            if !seen.insert(obs.id) {
                return Err(Error::invalid(format!(
                    "duplicate observation id {}",
                    obs.id
                )));
            }
            if let Task::Classification { n_classes } = task {
                if obs.y < 0.0 || obs.y.fract() != 0.0 || obs.class() >= n_classes {
                    return Err(Error::invalid(format!(
                        "observation {} has label {} outside 0..{n_classes}",
                        obs.id, obs.y
                    )));
                }
            }
        }
        Ok(Dataset {
            observations,
            task,
            feature_names,
            target_name: target_name.into(),
            class_labels,
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.observations.iter().map(|o| o.id).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.y).collect()
    }

    /// Sub-dataset holding the observations at the given positions.
    pub fn subset(&self, positions: &[usize]) -> Dataset {
        Dataset {
            observations: positions
                .iter()
                .map(|&i| self.observations[i].clone())
                .collect(),
            task: self.task,
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            class_labels: self.class_labels.clone(),
        }
    }

    /// Same rows with a different feature matrix (used to build allocator inputs).
    pub fn with_features(
        &self,
        names: Vec<String>,
        rows: Vec<Vec<f64>>,
        task: Task,
        targets: &[f64],
    ) -> Result<Dataset> {
        let observations = self
            .observations
            .iter()
            .zip(rows)
            .zip(targets)
            .map(|((o, x), &y)| Observation { id: o.id, x, y })
            .collect();
        Dataset::new(observations, task, names, "target", Vec::new())
    }

    /// Writes the dataset as CSV (features then target) and a JSON sidecar.
    pub fn write_csv(
        &self,
        csv_path: &Path,
        sidecar_path: &Path,
        scaler: Option<&Scaler>,
    ) -> Result<()> {
        let file = File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        let csv_err = |e: csv::Error| Error::Csv {
            path: csv_path.to_path_buf(),
            message: e.to_string(),
        };
        let mut header = self.feature_names.clone();
        header.push(self.target_name.clone());
        writer.write_record(&header).map_err(csv_err)?;
        for obs in &self.observations {
            let mut record: Vec<String> = obs.x.iter().map(|v| v.to_string()).collect();
            record.push(match self.task {
                Task::Classification { .. } => self
                    .class_labels
                    .get(obs.class())
                    .cloned()
                    .unwrap_or_else(|| obs.class().to_string()),
                Task::Regression => obs.y.to_string(),
            });
            writer.write_record(&record).map_err(csv_err)?;
        }
        writer.flush().map_err(|e| Error::io(csv_path, e))?;

        let sidecar = Sidecar {
            task: self.task.kind(),
            n_classes: self.task.n_classes(),
            target_column: self.target_name.clone(),
            feature_names: self.feature_names.clone(),
            class_labels: self.class_labels.clone(),
            scaler: scaler.cloned(),
        };
        let mut out =
            BufWriter::new(File::create(sidecar_path).map_err(|e| Error::io(sidecar_path, e))?);
        serde_json::to_writer_pretty(&mut out, &sidecar)?;
        out.write_all(b"\n")
            .map_err(|e| Error::io(sidecar_path, e))?;
        Ok(())
    }
}

/// JSON sidecar written next to a persisted dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub task: TaskKind,
    pub n_classes: Option<usize>,
    pub target_column: String,
    pub feature_names: Vec<String>,
    pub class_labels: Vec<String>,
    pub scaler: Option<Scaler>,
}

/// Loads a CSV file with a header row.
///
/// Classification targets are mapped to dense class indices in order of
/// first appearance. Ids follow row order starting at 0.
pub fn load_csv(path: &Path, task: TaskKind, target_column: &str) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let headers: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::Cell {
            path: path.to_path_buf(),
            row: 0,
            column: target_column.to_string(),
            message: "unknown target column".into(),
        })?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut class_index: HashMap<String, usize> = HashMap::new();
    let mut class_labels = Vec::new();
    let mut observations = Vec::new();
    for (row, record) in reader.records().enumerate() {
        // 1-based data row number, header excluded.
        let row = row + 1;
        let record = record.map_err(csv_err)?;
        let cell_err = |column: &str, message: String| Error::Cell {
            path: path.to_path_buf(),
            row,
            column: column.to_string(),
            message,
        };
        let mut x = Vec::with_capacity(feature_names.len());
        let mut y = None;
        for (col, raw) in record.iter().enumerate() {
            let raw = raw.trim();
            if col == target_idx {
                y = Some(match task {
                    TaskKind::Classification => {
                        if raw.is_empty() {
                            return Err(cell_err(&headers[col], "blank target".into()));
                        }
                        let next = class_index.len();
                        let idx = *class_index.entry(raw.to_string()).or_insert_with(|| {
                            class_labels.push(raw.to_string());
                            next
                        });
                        idx as f64
                    }
                    TaskKind::Regression => {
                        parse_real(raw).map_err(|m| cell_err(&headers[col], m))?
                    }
                });
            } else {
                x.push(parse_real(raw).map_err(|m| cell_err(&headers[col], m))?);
            }
        }
        let y = y.ok_or_else(|| cell_err(target_column, "missing target cell".into()))?;
        observations.push(Observation {
            id: observations.len(),
            x,
            y,
        });
    }
    if observations.is_empty() {
        return Err(Error::invalid(format!("{}: empty dataset", path.display())));
    }
    let task = match task {
        TaskKind::Classification => Task::Classification {
            n_classes: class_labels.len(),
        },
        TaskKind::Regression => Task::Regression,
    };
    Dataset::new(
        observations,
        task,
        feature_names,
        target_column,
        class_labels,
    )
}

fn parse_real(raw: &str) -> std::result::Result<f64, String> {
    if raw.is_empty() {
        return Err("blank cell".into());
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(format!("non-finite value `{raw}`")),
        Err(_) => Err(format!("non-numeric value `{raw}`")),
    }
}

/// Train / validation / test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.70,
            validation: 0.09,
            test: 0.21,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::invalid(format!(
                "split ratios must be positive, got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "split ratios sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub seed: u64,
}

/// Seeded shuffle, then cuts at `⌊train·n⌋` and `⌊(train+val)·n⌋`.
///
/// When a floor cut would leave the validation split empty (small `n`), the
/// second cut moves forward by one. Each split is returned in ascending id
/// order.
pub fn split(data: &Dataset, ratios: SplitRatios, seed: u64) -> Result<SplitDataset> {
    ratios.validate()?;
    let n = data.len();
    if n < 10 {
        return Err(Error::invalid(format!(
            "need at least 10 observations to split, got {n}"
        )));
    }
    // Slack absorbs representation error such as 0.7 + 0.09 = 0.78999...
    let cut1 = ((ratios.train * n as f64) + 1e-9).floor() as usize;
    let cut2 = (((ratios.train + ratios.validation) * n as f64) + 1e-9).floor() as usize;
    let cut1 = cut1.max(1);
    let cut2 = cut2.max(cut1 + 1);
    if cut2 >= n {
        return Err(Error::invalid(format!(
            "n = {n} is too small to give every split at least one observation"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let part = |range: &[usize]| {
        let mut positions = range.to_vec();
        positions.sort_by_key(|&p| data.observations[p].id);
        data.subset(&positions)
    };
    Ok(SplitDataset {
        train: part(&order[..cut1]),
        validation: part(&order[cut1..cut2]),
        test: part(&order[cut2..]),
        seed,
    })
}

/// Per-feature min/max scaling onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub feature_min: Vec<f64>,
    pub feature_max: Vec<f64>,
    /// Response range, regression only.
    pub response_min: Option<f64>,
    pub response_max: Option<f64>,
}

fn to_unit(v: f64, min: f64, max: f64) -> f64 {
    if max > min {
        2.0 * (v - min) / (max - min) - 1.0
    } else {
        0.0
    }
}

fn from_unit(v: f64, min: f64, max: f64) -> f64 {
    if max > min {
        (v + 1.0) * (max - min) / 2.0 + min
    } else {
        min
    }
}

impl Scaler {
    /// Fits on the given (training) data.
    pub fn fit(data: &Dataset) -> Scaler {
        let d = data.n_features();
        let mut feature_min = vec![f64::INFINITY; d];
        let mut feature_max = vec![f64::NEG_INFINITY; d];
        for obs in &data.observations {
            for (j, &v) in obs.x.iter().enumerate() {
                feature_min[j] = feature_min[j].min(v);
                feature_max[j] = feature_max[j].max(v);
            }
        }
        let (response_min, response_max) = match data.task {
            Task::Regression => {
                let ys = data.observations.iter().map(|o| o.y);
                (
                    Some(ys.clone().fold(f64::INFINITY, f64::min)),
                    Some(ys.fold(f64::NEG_INFINITY, f64::max)),
                )
            }
            Task::Classification { .. } => (None, None),
        };
        Scaler {
            feature_min,
            feature_max,
            response_min,
            response_max,
        }
    }

    /// Maps features (and regression responses) through the fitted affine map.
    /// Values outside the fitted range are not clamped.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.n_features() != self.feature_min.len() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_min.len(),
                found: data.n_features(),
            });
        }
        let mut out = data.clone();
        for obs in &mut out.observations {
            for (j, v) in obs.x.iter_mut().enumerate() {
                *v = to_unit(*v, self.feature_min[j], self.feature_max[j]);
            }
            if let (Task::Regression, Some(lo), Some(hi)) =
                (data.task, self.response_min, self.response_max)
            {
                obs.y = to_unit(obs.y, lo, hi);
            }
        }
        Ok(out)
    }

    /// Maps a scaled regression response back to original units.
    pub fn inverse_response(&self, y: f64) -> f64 {
        match (self.response_min, self.response_max) {
            (Some(lo), Some(hi)) => from_unit(y, lo, hi),
            _ => y,
        }
    }
}

const DIAMOND_CENTER: f64 = -0.5;
const DIAMOND_HALF_WIDTH: f64 = 0.5;
const SPIRAL_CENTER: f64 = 0.5;
const SPIRAL_ARMS: f64 = 2.0;
const SPIRAL_TWIST: f64 = 3.0;

/// Noise-free label of the complementary task at `(x1, x2)`.
pub fn complementary_label(x1: f64, x2: f64) -> usize {
    if x1 < 0.0 {
        let d = (x1 - DIAMOND_CENTER).abs() / DIAMOND_HALF_WIDTH + x2.abs();
        usize::from(d < 1.0)
    } else {
        let dx = x1 - SPIRAL_CENTER;
        let r = dx.hypot(x2);
        let theta = x2.atan2(dx);
        usize::from((SPIRAL_ARMS * theta - SPIRAL_TWIST * r).sin() > 0.0)
    }
}

/// Two-class task on `[-1, 1]²` with a diamond region and a spiral region.
pub fn gen_complementary_2d(n: usize, seed: u64, noise: f64) -> Result<Dataset> {
    if n < 100 {
        return Err(Error::invalid(format!("generator needs n >= 100, got {n}")));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::invalid(format!(
            "noise must lie in [0, 1], got {noise}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let observations = (0..n)
        .map(|id| {
            let x1: f64 = rng.gen_range(-1.0..=1.0);
            let x2: f64 = rng.gen_range(-1.0..=1.0);
            let mut label = complementary_label(x1, x2);
            // Always draw so the feature stream does not depend on `noise`.
            let flip: f64 = rng.gen();
            if flip < noise {
                label = 1 - label;
            }
            Observation {
                id,
                x: vec![x1, x2],
                y: label as f64,
            }
        })
        .collect();
    Dataset::new(
        observations,
        Task::Classification { n_classes: 2 },
        vec!["x1".into(), "x2".into()],
        "y",
        vec!["0".into(), "1".into()],
    )
}
