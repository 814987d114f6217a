//! Underlying-task losses, sufficiency indicators and the four-way partition.
//!
//! A prediction is *sufficient* when it can be trusted: the predicted class
//! equals the label (classification), or the squared error is strictly below
//! a threshold `ε` (regression). Two constant modes reduce sufficiency-based
//! allocation to plain loss-based allocation.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Task};
use crate::models::{argmax, Model, Prediction};
use crate::{Error, Result, PROB_FLOOR};

/// Cross-entropy `-ln p_y` (floored) or squared error.
pub fn underlying_loss(prediction: &Prediction, y: f64) -> Result<f64> {
    match prediction {
        Prediction::Probabilities(p) => {
            let total: f64 = p.iter().sum();
            if (total - 1.0).abs() > 1e-6 || p.iter().any(|v| *v < 0.0) {
                return Err(Error::invalid(format!(
                    "probability vector sums to {total}"
                )));
            }
            let class = y as usize;
            let p_y = p.get(class).ok_or_else(|| {
                Error::invalid(format!("label {class} outside {} classes", p.len()))
            })?;
            Ok(-p_y.max(PROB_FLOOR).ln())
        }
        Prediction::Value(v) => Ok((v - y) * (v - y)),
    }
}

/// Mean underlying loss of a model over a dataset.
pub fn mean_loss(model: &Model, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("mean loss over an empty dataset"));
    }
    let mut total = 0.0;
    for obs in &data.observations {
        total += underlying_loss(&model.output(&obs.x)?, obs.y)?;
    }
    Ok(total / data.len() as f64)
}

/// How sufficiency is decided.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "epsilon", rename_all = "snake_case")]
pub enum SufficiencyRule {
    /// Argmax prediction equals the label.
    ClassificationEquality,
    /// Squared error strictly below `epsilon`.
    RegressionEpsilon(f64),
    AlwaysSufficient,
    NeverSufficient,
}

impl SufficiencyRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            SufficiencyRule::RegressionEpsilon(eps) if !(eps.is_finite() && *eps >= 0.0) => {
                Err(Error::invalid(format!(
                    "epsilon must be finite and non-negative, got {eps}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Indicator for one prediction with its precomputed loss.
    pub fn indicator(&self, prediction: &Prediction, y: f64, loss: f64) -> bool {
        match *self {
            SufficiencyRule::ClassificationEquality => match prediction {
                Prediction::Probabilities(p) => argmax(p) == y as usize,
                Prediction::Value(v) => *v == y,
            },
            SufficiencyRule::RegressionEpsilon(eps) => loss < eps,
            SufficiencyRule::AlwaysSufficient => true,
            SufficiencyRule::NeverSufficient => false,
        }
    }
}

/// `ε = min(mean validation loss of g, mean validation loss of b)`.
pub fn epsilon_from_validation(g: &Model, b: &Model, validation: &Dataset) -> Result<f64> {
    if validation.task != Task::Regression {
        return Err(Error::invalid(
            "epsilon is only defined for regression tasks",
        ));
    }
    Ok(mean_loss(g, validation)?.min(mean_loss(b, validation)?))
}

/// `ε` from per-observation validation losses of both models.
pub fn epsilon_from_losses(loss_g: &[f64], loss_b: &[f64]) -> Result<f64> {
    if loss_g.is_empty() || loss_g.len() != loss_b.len() {
        return Err(Error::invalid(
            "epsilon needs equally sized, non-empty loss vectors",
        ));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(mean(loss_g).min(mean(loss_b)))
}

/// Sufficiency indicator of `model` on a single observation.
pub fn sufficiency(model: &Model, x: &[f64], y: f64, rule: SufficiencyRule) -> Result<bool> {
    let out = model.output(x)?;
    let loss = underlying_loss(&out, y)?;
    Ok(rule.indicator(&out, y, loss))
}

/// Sufficiency category of one observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    /// Neither model sufficient.
    Z0,
    /// Only the black box sufficient.
    Zb,
    /// Both sufficient.
    Z2,
    /// Only the glass box sufficient.
    Zg,
}

impl Category {
    pub fn from_indicators(s_g: bool, s_b: bool) -> Category {
        match (s_g, s_b) {
            (true, false) => Category::Zg,
            (false, true) => Category::Zb,
            (true, true) => Category::Z2,
            (false, false) => Category::Z0,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Zg => "Zg",
            Category::Zb => "Zb",
            Category::Z2 => "Z2",
            Category::Z0 => "Z0",
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Category counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub n_g: usize,
    pub n_b: usize,
    pub n_2: usize,
    pub n_0: usize,
}

impl CategoryCounts {
    pub fn total(&self) -> usize {
        self.n_g + self.n_b + self.n_2 + self.n_0
    }
}

/// Per-observation sufficiency pairs and their categories.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficiencyPartition {
    pub ids: Vec<usize>,
    pub s_g: Vec<bool>,
    pub s_b: Vec<bool>,
    pub categories: Vec<Category>,
    pub counts: CategoryCounts,
}

impl SufficiencyPartition {
    pub fn from_indicators(ids: Vec<usize>, s_g: Vec<bool>, s_b: Vec<bool>) -> Result<Self> {
        if ids.len() != s_g.len() || s_g.len() != s_b.len() {
            return Err(Error::invalid("indicator vectors differ in length"));
        }
        let categories: Vec<Category> = s_g
            .iter()
            .zip(&s_b)
            .map(|(&g, &b)| Category::from_indicators(g, b))
            .collect();
        let mut counts = CategoryCounts::default();
        for c in &categories {
            match c {
                Category::Zg => counts.n_g += 1,
                Category::Zb => counts.n_b += 1,
                Category::Z2 => counts.n_2 += 1,
                Category::Z0 => counts.n_0 += 1,
            }
        }
        Ok(SufficiencyPartition {
            ids,
            s_g,
            s_b,
            categories,
            counts,
        })
    }

    pub fn len(&self) -> usize {
        self.s_g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_g.is_empty()
    }

    pub fn mean_s_g(&self) -> f64 {
        self.s_g.iter().filter(|&&s| s).count() as f64 / self.len() as f64
    }

    pub fn mean_s_b(&self) -> f64 {
        self.s_b.iter().filter(|&&s| s).count() as f64 / self.len() as f64
    }

    /// Writes `id,s_g,s_b,category` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        let mut body = String::from("id,s_g,s_b,category\n");
        for i in 0..self.len() {
            body.push_str(&format!(
                "{},{},{},{}\n",
                self.ids[i],
                u8::from(self.s_g[i]),
                u8::from(self.s_b[i]),
                self.categories[i]
            ));
        }
        out.write_all(body.as_bytes())
            .map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Outputs, losses and sufficiency of a `(g, b)` pair over one dataset.
#[derive(Debug, Clone)]
pub struct PairEvaluation {
    pub g_out: Vec<Prediction>,
    pub b_out: Vec<Prediction>,
    pub loss_g: Vec<f64>,
    pub loss_b: Vec<f64>,
    pub partition: SufficiencyPartition,
}

/// Evaluates both models on every observation and partitions the data.
pub fn evaluate_pair(
    g: &Model,
    b: &Model,
    data: &Dataset,
    rule: SufficiencyRule,
) -> Result<PairEvaluation> {
    rule.validate()?;
    let g_out = g.outputs(data)?;
    let b_out = b.outputs(data)?;
    let ys = data.targets();
    let losses = |outs: &[Prediction]| -> Result<Vec<f64>> {
        outs.iter()
            .zip(&ys)
            .map(|(o, &y)| underlying_loss(o, y))
            .collect()
    };
    let loss_g = losses(&g_out)?;
    let loss_b = losses(&b_out)?;
    let s_g = (0..data.len())
        .map(|i| rule.indicator(&g_out[i], ys[i], loss_g[i]))
        .collect();
    let s_b = (0..data.len())
        .map(|i| rule.indicator(&b_out[i], ys[i], loss_b[i]))
        .collect();
    let partition = SufficiencyPartition::from_indicators(data.ids(), s_g, s_b)?;
    Ok(PairEvaluation {
        g_out,
        b_out,
        loss_g,
        loss_b,
        partition,
    })
}

/// Sufficiency partition of a dataset under `(g, b)`.
pub fn partition(
    g: &Model,
    b: &Model,
    data: &Dataset,
    rule: SufficiencyRule,
) -> Result<SufficiencyPartition> {
    Ok(evaluate_pair(g, b, data, rule)?.partition)
}
