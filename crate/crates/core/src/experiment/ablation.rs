use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::pipeline::{
    allocate, best_combined, evaluate_all_pairs, fit_components, load_data, split_and_scale,
    PairContext,
};
use crate::allocation::AllocatorFeatureSet;
use crate::error::StageExt;
use crate::models::Hyper;
use crate::{Error, Result};

/// One row of the feature-set ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAblationRow {
    pub feature_set: AllocatorFeatureSet,
    /// `None` when the set is undefined for the task.
    pub skipped: Option<String>,
    /// Test AUC of the ensembled policy.
    pub auc: Option<f64>,
    /// Test AUC of the learned allocator alone.
    pub learned_auc: Option<f64>,
    pub ppcr: Option<f64>,
    pub pcfa: Option<f64>,
}

/// Trains one allocator per feature set on a shared `(g, b)` pair.
///
/// Repeated sets are dropped with a warning. Sets containing `d_ce` are
/// reported as skipped for regression.
pub fn run_feature_ablation(
    config: &ExperimentConfig,
    sets: &[AllocatorFeatureSet],
) -> Result<Vec<FeatureAblationRow>> {
    config.validate().stage("config")?;
    let raw = load_data(config).stage("data")?;
    let (data, _) = split_and_scale(config, &raw)?;
    let fitted = fit_components(config, &data).stage("select-components")?;
    let (gi, bi) = fitted.chosen;
    let ctx = PairContext::new(
        config,
        fitted.glass[gi].model.clone(),
        fitted.black[bi].model.clone(),
        &data,
    )
    .stage("sufficiency")?;

    let mut seen: Vec<AllocatorFeatureSet> = Vec::new();
    let mut rows = Vec::new();
    for &set in sets {
        if seen.contains(&set) {
            log::warn!("feature set {set} listed more than once; keeping the first");
            continue;
        }
        seen.push(set);
        if let Err(e) = set.validate(data.train.task) {
            rows.push(FeatureAblationRow {
                feature_set: set,
                skipped: Some(e.to_string()),
                auc: None,
                learned_auc: None,
                ppcr: None,
                pcfa: None,
            });
            continue;
        }
        let a = allocate(config, &ctx, &data, set, None)?;
        rows.push(FeatureAblationRow {
            feature_set: set,
            skipped: None,
            auc: Some(a.metrics.auc),
            learned_auc: Some(a.learned_curve.auc()?),
            ppcr: a.metrics.ppcr,
            pcfa: Some(a.metrics.pcfa),
        });
    }
    Ok(rows)
}

/// Outcome of comparing individual and combined component selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentAblation {
    pub individual: (Hyper, Hyper),
    pub combined: (Hyper, Hyper),
    pub matched: bool,
    pub individual_auc: f64,
    pub combined_auc: f64,
    /// Test AUC of the combined choice minus that of the individual choice.
    pub delta: f64,
    /// Every evaluated pair with its validation and test ensemble AUC.
    pub pairs: Vec<PairScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub glass: Hyper,
    pub black: Hyper,
    pub validation_auc: f64,
    pub test_auc: f64,
}

/// Evaluates every `(g, b)` pair and contrasts the two selection modes.
pub fn run_component_ablation(config: &ExperimentConfig) -> Result<ComponentAblation> {
    config.validate().stage("config")?;
    let raw = load_data(config).stage("data")?;
    let (data, _) = split_and_scale(config, &raw)?;
    let mut individual_only = config.clone();
    individual_only.component_selection = super::config::SelectionMode::Individual;
    let fitted = fit_components(&individual_only, &data).stage("select-components")?;
    let evaluated = evaluate_all_pairs(config, &fitted, &data)?;
    let individual = fitted.chosen;
    let combined = best_combined(&evaluated);
    let test_auc = |pair: (usize, usize)| {
        evaluated
            .iter()
            .find(|e| e.0 == pair)
            .map(|e| e.2.metrics.auc)
            .ok_or_else(|| Error::invalid("selected pair was not evaluated"))
    };
    let individual_auc = test_auc(individual)?;
    let combined_auc = test_auc(combined)?;
    let hypers =
        |(i, j): (usize, usize)| (fitted.glass[i].model.hyper(), fitted.black[j].model.hyper());
    Ok(ComponentAblation {
        individual: hypers(individual),
        combined: hypers(combined),
        matched: individual == combined,
        individual_auc,
        combined_auc,
        delta: combined_auc - individual_auc,
        pairs: evaluated
            .iter()
            .map(|(pair, _, a)| PairScore {
                glass: hypers(*pair).0,
                black: hypers(*pair).1,
                validation_auc: a.validation_auc,
                test_auc: a.metrics.auc,
            })
            .collect(),
    })
}
