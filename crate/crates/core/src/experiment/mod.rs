//! Configuration, the end-to-end pipeline, replication and ablations.
//!
//! Pipeline order: load → split → scale (fitted on train) → tune `g` and
//! `b` → select the pair → sufficiency (threshold from validation losses for
//! regression) → train the allocator on training percentiles → choose the
//! allocator per `q` on validation → evaluate on test → metrics.

mod ablation;
mod config;
mod pipeline;
mod replicate;

pub use ablation::{
    run_component_ablation, run_feature_ablation, ComponentAblation, FeatureAblationRow, PairScore,
};
pub use config::{DataSource, ExperimentConfig, SelectionMode, SufficiencyMode};
pub use pipeline::{
    allocate, begin_output, execute, execute_from_models, finish_output, fit_components, load_data,
    run_experiment, run_from_models, split_and_scale, write_artifacts, Allocated, Candidate,
    ComponentSummary, EvaluatedPair, Fitted, PairContext, RunReport, RunResult, INCOMPLETE_MARKER,
};
pub use replicate::{mean_sd, replicate, summarize, MetricSummary, ReplicateReport};

pub(crate) use pipeline::{write_json, write_text};

use std::path::Path;

use crate::Result;

/// Writes `replicates.json` and `summary.csv` under `dir`.
pub fn write_replicates(report: &ReplicateReport, dir: &Path) -> Result<()> {
    begin_output(dir)?;
    write_json(&dir.join("replicates.json"), report)?;
    let mut csv = String::from("metric,mean,sd,n\n");
    for m in &report.summary {
        let fmt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{}\n",
            m.name,
            fmt(m.mean),
            fmt(m.sd),
            m.n
        ));
    }
    write_text(&dir.join("summary.csv"), &csv)?;
    finish_output(dir)
}

/// Writes `ablation_features.json` and `ablation_features.csv` under `dir`.
pub fn write_feature_ablation(rows: &[FeatureAblationRow], dir: &Path) -> Result<()> {
    begin_output(dir)?;
    write_json(&dir.join("ablation_features.json"), &rows)?;
    let mut csv = String::from("feature_set,auc,learned_auc,ppcr,pcfa,skipped\n");
    for r in rows {
        let fmt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.feature_set,
            fmt(r.auc),
            fmt(r.learned_auc),
            fmt(r.ppcr),
            fmt(r.pcfa),
            r.skipped.as_deref().unwrap_or("")
        ));
    }
    write_text(&dir.join("ablation_features.csv"), &csv)?;
    finish_output(dir)
}

/// Writes `ablation_components.json` under `dir`.
pub fn write_component_ablation(result: &ComponentAblation, dir: &Path) -> Result<()> {
    begin_output(dir)?;
    write_json(&dir.join("ablation_components.json"), result)?;
    finish_output(dir)
}
