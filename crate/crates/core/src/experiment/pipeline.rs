use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig, SelectionMode, SufficiencyMode};
use crate::allocation::{
    ensemble_allocators, estimate_sufficiency_category, feature_independent_scores, oracle_policy,
    random_expectation_curve, train_learned_allocator, AllocationPolicy, AllocatorFeatureSet,
    AllocatorTag, AllocatorTraining, DesirabilityRanking, LearnedAllocator, QGrid,
};
use crate::dataset::{
    gen_complementary_2d, load_csv, split, Dataset, Scaler, SplitDataset, Task, TaskKind,
};
use crate::error::StageExt;
use crate::metrics::{curve, write_curves_csv, MetricsReport, PerformanceCurve};
use crate::models::{grid_search, FitReport, Hyper, Model};
use crate::sufficiency::{
    epsilon_from_losses, evaluate_pair, mean_loss, Category, CategoryCounts, PairEvaluation,
    SufficiencyRule,
};
use crate::{Error, Result};

/// Marker file present in an output directory while a run is in progress
/// or after it failed.
pub const INCOMPLETE_MARKER: &str = ".incomplete";

/// Independent seed stream derived from a base seed.
pub(crate) fn stream_seed(base: u64, stream: u64) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9))
}

const STREAM_GLASS: u64 = 1;
const STREAM_BLACK: u64 = 2;
const STREAM_ALLOCATOR: u64 = 3;

pub fn load_data(config: &ExperimentConfig) -> Result<Dataset> {
    match config.data_source {
        DataSource::Synthetic => gen_complementary_2d(
            config.synthetic_n,
            config.synthetic_seed,
            config.synthetic_noise,
        ),
        DataSource::Csv => {
            let path = config
                .csv_path
                .as_deref()
                .ok_or_else(|| Error::Config("csv_path is not set".into()))?;
            load_csv(path, config.task, &config.target_column)
        }
    }
}

/// Splits, then scales every part with a scaler fitted on the training part.
pub fn split_and_scale(
    config: &ExperimentConfig,
    data: &Dataset,
) -> Result<(SplitDataset, Scaler)> {
    let parts = split(data, config.ratios(), config.split_seed).stage("split")?;
    let scaler = Scaler::fit(&parts.train);
    let scaled = rescale(&parts, &scaler).stage("scale")?;
    Ok((scaled, scaler))
}

fn rescale(parts: &SplitDataset, scaler: &Scaler) -> Result<SplitDataset> {
    Ok(SplitDataset {
        train: scaler.apply(&parts.train)?,
        validation: scaler.apply(&parts.validation)?,
        test: scaler.apply(&parts.test)?,
        seed: parts.seed,
    })
}

/// A tuned candidate model with its search report.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub model: Model,
    pub report: FitReport,
    /// Validation accuracy, or negated validation MSE for regression.
    pub validation_score: f64,
}

fn validation_score(model: &Model, validation: &Dataset) -> Result<f64> {
    match validation.task {
        Task::Classification { .. } => {
            let mut hits = 0usize;
            for o in &validation.observations {
                hits += usize::from(model.predict(&o.x)? == o.y);
            }
            Ok(hits as f64 / validation.len() as f64)
        }
        Task::Regression => Ok(-mean_loss(model, validation)?),
    }
}

/// Tunes one candidate per family in `families`.
pub fn fit_candidates(
    config: &ExperimentConfig,
    families: &[crate::models::Family],
    data: &SplitDataset,
    stream: u64,
) -> Result<Vec<Candidate>> {
    families
        .iter()
        .enumerate()
        .map(|(i, &family)| {
            let seed = stream_seed(config.model_seed, stream * 64 + i as u64);
            let (model, report) =
                grid_search(&config.grid_for(family), &data.train, config.cv_folds, seed)?;
            let validation_score = validation_score(&model, &data.validation)?;
            Ok(Candidate {
                model,
                report,
                validation_score,
            })
        })
        .collect()
}

/// Index of the best validation score; ties go to the earlier candidate.
fn best_individual(candidates: &[Candidate]) -> usize {
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.validation_score > candidates[best].validation_score {
            best = i;
        }
    }
    best
}

/// A fitted `(g, b)` pair evaluated on all three splits.
#[derive(Debug, Clone)]
pub struct PairContext {
    pub g: Model,
    pub b: Model,
    pub rule: SufficiencyRule,
    pub train: PairEvaluation,
    pub validation: PairEvaluation,
    pub test: PairEvaluation,
}

impl PairContext {
    /// The regression threshold is fixed from validation losses and reused
    /// for every split.
    pub fn new(
        config: &ExperimentConfig,
        g: Model,
        b: Model,
        data: &SplitDataset,
    ) -> Result<PairContext> {
        let rule = match (config.sufficiency, data.train.task) {
            (SufficiencyMode::Always, _) => SufficiencyRule::AlwaysSufficient,
            (SufficiencyMode::Never, _) => SufficiencyRule::NeverSufficient,
            (SufficiencyMode::Auto, Task::Classification { .. }) => {
                SufficiencyRule::ClassificationEquality
            }
            (SufficiencyMode::Auto, Task::Regression) => {
                let probe =
                    evaluate_pair(&g, &b, &data.validation, SufficiencyRule::AlwaysSufficient)?;
                SufficiencyRule::RegressionEpsilon(epsilon_from_losses(
                    &probe.loss_g,
                    &probe.loss_b,
                )?)
            }
        };
        Ok(PairContext {
            train: evaluate_pair(&g, &b, &data.train, rule)?,
            validation: evaluate_pair(&g, &b, &data.validation, rule)?,
            test: evaluate_pair(&g, &b, &data.test, rule)?,
            g,
            b,
            rule,
        })
    }
}

/// Allocator, per-`q` selection and test evaluation for one pair.
#[derive(Debug, Clone)]
pub struct Allocated {
    pub allocator: LearnedAllocator,
    pub selection: Vec<AllocatorTag>,
    /// Validation AUC of the ensembled policy.
    pub validation_auc: f64,
    pub policy: AllocationPolicy,
    /// Batch percentile of the learned scores on the test set.
    pub test_percentiles: Vec<f64>,
    pub estimated: Vec<Category>,
    pub ensemble_curve: PerformanceCurve,
    pub learned_curve: PerformanceCurve,
    pub independent_curve: PerformanceCurve,
    pub oracle_curve: PerformanceCurve,
    pub random_curve: PerformanceCurve,
    pub metrics: MetricsReport,
}

fn allocator_training(config: &ExperimentConfig) -> AllocatorTraining {
    let grid = config.allocator_grid();
    match grid.points().as_slice() {
        [single] => AllocatorTraining::Fixed(*single),
        _ => AllocatorTraining::Tuned {
            grid,
            folds: config.cv_folds,
        },
    }
}

/// Trains (or reuses) the learned allocator, ensembles it with the
/// distance-based allocator on validation, and evaluates on test.
pub fn allocate(
    config: &ExperimentConfig,
    ctx: &PairContext,
    data: &SplitDataset,
    feature_set: AllocatorFeatureSet,
    reuse: Option<LearnedAllocator>,
) -> Result<Allocated> {
    let grid = config.q_grid()?;
    let allocator = match reuse {
        Some(a) => a,
        None => train_learned_allocator(
            &data.train,
            &ctx.train,
            feature_set,
            &allocator_training(config),
            stream_seed(config.model_seed, STREAM_ALLOCATOR),
        )
        .stage("allocator")?,
    };

    let (selection, validation_auc) = (|| {
        let learned = allocator.predict_scores(&data.validation, &ctx.validation)?;
        let independent = feature_independent_scores(&ctx.validation.g_out, &ctx.validation.b_out);
        let selection =
            ensemble_allocators(&learned, &independent, &ctx.validation.partition, &grid)?;
        let policy = AllocationPolicy::ensembled(&learned, &independent, &grid, &selection)?;
        let auc = curve(&policy, &ctx.validation.partition)?.auc()?;
        Ok::<_, Error>((selection, auc))
    })()
    .stage("ensemble")?;

    evaluate_on_test(ctx, data, &grid, allocator, selection, validation_auc).stage("evaluate")
}

fn evaluate_on_test(
    ctx: &PairContext,
    data: &SplitDataset,
    grid: &QGrid,
    allocator: LearnedAllocator,
    selection: Vec<AllocatorTag>,
    validation_auc: f64,
) -> Result<Allocated> {
    let part = &ctx.test.partition;
    let learned = allocator.predict_scores(&data.test, &ctx.test)?;
    let independent = feature_independent_scores(&ctx.test.g_out, &ctx.test.b_out);
    let policy = AllocationPolicy::ensembled(&learned, &independent, grid, &selection)?;

    let ensemble_curve = curve(&policy, part)?;
    let learned_curve = curve(
        &AllocationPolicy::from_scores(&learned, grid, AllocatorTag::FeatureDependent),
        part,
    )?;
    let independent_curve = curve(
        &AllocationPolicy::from_scores(&independent, grid, AllocatorTag::FeatureIndependent),
        part,
    )?;
    let oracle_curve = curve(&oracle_policy(&ctx.test, grid), part)?;
    let mut random_curve = PerformanceCurve::from_values(
        grid.points(),
        random_expectation_curve(part, grid),
        AllocatorTag::RandomExpectation,
    );
    random_curve.t_bar_g = grid.points().iter().map(|q| q * part.mean_s_g()).collect();

    let test_percentiles = DesirabilityRanking::from_scores(&learned).percentiles;
    let estimated = test_percentiles
        .iter()
        .map(|&p| estimate_sufficiency_category(p, &ctx.train.partition.counts))
        .collect::<Result<Vec<_>>>()?;
    let metrics = MetricsReport::compute(
        &ensemble_curve,
        &oracle_curve,
        &random_curve,
        part,
        &estimated,
    )?;
    Ok(Allocated {
        allocator,
        selection,
        validation_auc,
        policy,
        test_percentiles,
        estimated,
        ensemble_curve,
        learned_curve,
        independent_curve,
        oracle_curve,
        random_curve,
        metrics,
    })
}

/// Summary of one fitted component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub hyper: Hyper,
    pub validation_score: f64,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: TaskKind,
    pub split_seed: u64,
    pub model_seed: u64,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub selection_mode: SelectionMode,
    pub glass: ComponentSummary,
    pub black: ComponentSummary,
    pub sufficiency: SufficiencyRule,
    pub allocator_features: AllocatorFeatureSet,
    pub allocator: Hyper,
    pub train_counts: CategoryCounts,
    pub test_counts: CategoryCounts,
    pub validation_auc: f64,
    pub learned_auc: f64,
    pub feature_independent_auc: f64,
    pub metrics: MetricsReport,
}

/// Everything a run produces, before it is written to disk.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub scaler: Scaler,
    pub data: SplitDataset,
    pub ctx: PairContext,
    pub allocated: Allocated,
    /// Grid-search reports of the chosen components, absent when reused.
    pub tuning: Option<(FitReport, FitReport)>,
    pub report: RunReport,
}

fn build_report(
    config: &ExperimentConfig,
    data: &SplitDataset,
    ctx: &PairContext,
    a: &Allocated,
) -> Result<RunReport> {
    Ok(RunReport {
        task: data.train.task.kind(),
        split_seed: config.split_seed,
        model_seed: config.model_seed,
        n_train: data.train.len(),
        n_validation: data.validation.len(),
        n_test: data.test.len(),
        selection_mode: config.component_selection,
        glass: ComponentSummary {
            hyper: ctx.g.hyper(),
            validation_score: validation_score(&ctx.g, &data.validation)?,
        },
        black: ComponentSummary {
            hyper: ctx.b.hyper(),
            validation_score: validation_score(&ctx.b, &data.validation)?,
        },
        sufficiency: ctx.rule,
        allocator_features: a.allocator.feature_set,
        allocator: a.allocator.model.hyper(),
        train_counts: ctx.train.partition.counts,
        test_counts: ctx.test.partition.counts,
        validation_auc: a.validation_auc,
        learned_auc: a.learned_curve.auc()?,
        feature_independent_auc: a.independent_curve.auc()?,
        metrics: a.metrics.clone(),
    })
}

/// A candidate pair `(glass index, black index)` with its evaluation.
pub type EvaluatedPair = ((usize, usize), PairContext, Allocated);

/// Tuned candidates for both roles plus the pair chosen under the
/// configured selection mode.
pub struct Fitted {
    pub glass: Vec<Candidate>,
    pub black: Vec<Candidate>,
    pub chosen: (usize, usize),
    /// Contexts and allocations of every pair, filled in combined mode.
    pub evaluated: Vec<EvaluatedPair>,
}

pub fn fit_components(config: &ExperimentConfig, data: &SplitDataset) -> Result<Fitted> {
    let glass =
        fit_candidates(config, &config.glass_families, data, STREAM_GLASS).stage("fit-glass")?;
    let black =
        fit_candidates(config, &config.black_families, data, STREAM_BLACK).stage("fit-black")?;
    let mut fitted = Fitted {
        chosen: (best_individual(&glass), best_individual(&black)),
        glass,
        black,
        evaluated: Vec::new(),
    };
    if config.component_selection == SelectionMode::Combined {
        fitted.evaluated = evaluate_all_pairs(config, &fitted, data)?;
        fitted.chosen = best_combined(&fitted.evaluated);
    }
    Ok(fitted)
}

pub(crate) fn evaluate_all_pairs(
    config: &ExperimentConfig,
    fitted: &Fitted,
    data: &SplitDataset,
) -> Result<Vec<EvaluatedPair>> {
    let mut out = Vec::new();
    for (i, g) in fitted.glass.iter().enumerate() {
        for (j, b) in fitted.black.iter().enumerate() {
            let ctx = PairContext::new(config, g.model.clone(), b.model.clone(), data)
                .stage("sufficiency")?;
            let a = allocate(config, &ctx, data, config.feature_set(), None)?;
            out.push(((i, j), ctx, a));
        }
    }
    Ok(out)
}

/// Highest validation ensemble AUC; ties go to the earlier pair.
pub(crate) fn best_combined(evaluated: &[EvaluatedPair]) -> (usize, usize) {
    let mut best = 0;
    for (k, e) in evaluated.iter().enumerate() {
        if e.2.validation_auc > evaluated[best].2.validation_auc {
            best = k;
        }
    }
    evaluated[best].0
}

/// Runs the full pipeline without touching the filesystem.
pub fn execute(config: &ExperimentConfig) -> Result<RunResult> {
    config.validate().stage("config")?;
    let raw = load_data(config).stage("data")?;
    let (data, scaler) = split_and_scale(config, &raw)?;
    let mut fitted = fit_components(config, &data).stage("select-components")?;
    let (gi, bi) = fitted.chosen;
    let tuning = Some((
        fitted.glass[gi].report.clone(),
        fitted.black[bi].report.clone(),
    ));

    let position = fitted.evaluated.iter().position(|e| e.0 == (gi, bi));
    let (ctx, allocated) = match position {
        Some(k) => {
            let (_, ctx, a) = fitted.evaluated.swap_remove(k);
            (ctx, a)
        }
        None => {
            let ctx = PairContext::new(
                config,
                fitted.glass[gi].model.clone(),
                fitted.black[bi].model.clone(),
                &data,
            )
            .stage("sufficiency")?;
            let a = allocate(config, &ctx, &data, config.feature_set(), None)?;
            (ctx, a)
        }
    };
    let report = build_report(config, &data, &ctx, &allocated).stage("evaluate")?;
    Ok(RunResult {
        config: config.clone(),
        scaler,
        data,
        ctx,
        allocated,
        tuning,
        report,
    })
}

/// Recomputes every downstream artifact from models persisted by an
/// earlier run in `models_dir`, without fitting anything.
pub fn execute_from_models(config: &ExperimentConfig, models_dir: &Path) -> Result<RunResult> {
    config.validate().stage("config")?;
    let (scaler, g, b, allocator) = load_models(models_dir).stage("load-models")?;
    let raw = load_data(config).stage("data")?;
    let parts = split(&raw, config.ratios(), config.split_seed).stage("split")?;
    let data = rescale(&parts, &scaler).stage("scale")?;
    let ctx = PairContext::new(config, g, b, &data).stage("sufficiency")?;
    let feature_set = allocator.feature_set;
    let allocated = allocate(config, &ctx, &data, feature_set, Some(allocator))?;
    let report = build_report(config, &data, &ctx, &allocated).stage("evaluate")?;
    Ok(RunResult {
        config: config.clone(),
        scaler,
        data,
        ctx,
        allocated,
        tuning: None,
        report,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn load_models(dir: &Path) -> Result<(Scaler, Model, Model, LearnedAllocator)> {
    Ok((
        read_json(&dir.join("scaler.json"))?,
        Model::load(&dir.join("g.json"))?,
        Model::load(&dir.join("b.json"))?,
        read_json(&dir.join("allocator.json"))?,
    ))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

/// Creates `dir` and flags it incomplete until [`finish_output`] runs.
pub fn begin_output(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join(INCOMPLETE_MARKER), "run in progress or failed\n")
}

pub fn finish_output(dir: &Path) -> Result<()> {
    let marker = dir.join(INCOMPLETE_MARKER);
    fs::remove_file(&marker).map_err(|e| Error::io(marker, e))
}

fn policy_csv(result: &RunResult) -> String {
    let a = &result.allocated;
    let ids = &result.ctx.test.partition.ids;
    let mut out =
        String::from("id,q,assigned_model,allocator_tag,predicted_percentile,estimated_category\n");
    for ((q, mask), tag) in a
        .policy
        .grid
        .points()
        .iter()
        .zip(&a.policy.masks)
        .zip(&a.policy.tags)
    {
        for (i, &id) in ids.iter().enumerate() {
            let model = if mask[i] { "g" } else { "b" };
            out.push_str(&format!(
                "{id},{q},{model},{tag},{},{}\n",
                a.test_percentiles[i],
                a.estimated[i].as_str()
            ));
        }
    }
    out
}

#[derive(Serialize)]
struct SufficiencyArtifact<'a> {
    rule: SufficiencyRule,
    train_counts: CategoryCounts,
    validation_counts: CategoryCounts,
    test_counts: CategoryCounts,
    selection: &'a [AllocatorTag],
}

/// Writes all artifacts of a run into `dir`:
/// `report.json`, `curve.csv`, `policy.csv`, `partition.csv`, `config.toml`
/// and `models/{g,b,allocator,scaler,sufficiency}.json` (plus
/// `models/tuning.json` when the components were tuned in this run).
pub fn write_artifacts(result: &RunResult, dir: &Path) -> Result<()> {
    let models = dir.join("models");
    fs::create_dir_all(&models).map_err(|e| Error::io(&models, e))?;
    let a = &result.allocated;
    write_json(&dir.join("report.json"), &result.report)?;
    write_curves_csv(
        &dir.join("curve.csv"),
        &[&a.ensemble_curve, &a.oracle_curve, &a.random_curve],
    )?;
    write_text(&dir.join("policy.csv"), &policy_csv(result))?;
    result
        .ctx
        .test
        .partition
        .write_csv(&dir.join("partition.csv"))?;
    write_text(&dir.join("config.toml"), &result.config.to_toml()?)?;

    result.ctx.g.save(&models.join("g.json"))?;
    result.ctx.b.save(&models.join("b.json"))?;
    write_json(&models.join("allocator.json"), &a.allocator)?;
    write_json(&models.join("scaler.json"), &result.scaler)?;
    write_json(
        &models.join("sufficiency.json"),
        &SufficiencyArtifact {
            rule: result.ctx.rule,
            train_counts: result.ctx.train.partition.counts,
            validation_counts: result.ctx.validation.partition.counts,
            test_counts: result.ctx.test.partition.counts,
            selection: &a.selection,
        },
    )?;
    if let Some((g, b)) = &result.tuning {
        write_json(
            &models.join("tuning.json"),
            &serde_json::json!({ "glass": g, "black": b }),
        )?;
    }
    Ok(())
}

/// Runs the pipeline and writes artifacts under `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunResult> {
    run_into(config, &config.output_dir, || execute(config))
}

/// Like [`run_experiment`], reusing the models persisted in `models_dir`.
pub fn run_from_models(config: &ExperimentConfig, models_dir: &Path) -> Result<RunResult> {
    let models_dir: PathBuf = models_dir.to_path_buf();
    run_into(config, &config.output_dir, || {
        execute_from_models(config, &models_dir)
    })
}

fn run_into(
    config: &ExperimentConfig,
    dir: &Path,
    body: impl FnOnce() -> Result<RunResult>,
) -> Result<RunResult> {
    config.validate().stage("config")?;
    begin_output(dir).stage("write")?;
    let result = body()?;
    write_artifacts(&result, dir).stage("write")?;
    finish_output(dir).stage("write")?;
    Ok(result)
}
