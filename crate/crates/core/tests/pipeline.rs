use std::fs;

use xensemble::allocation::AllocatorFeatureSet;
use xensemble::dataset::{gen_complementary_2d, Dataset, Observation, Task};
use xensemble::experiment::{
    execute, replicate, run_component_ablation, run_experiment, run_feature_ablation,
    run_from_models, ExperimentConfig, INCOMPLETE_MARKER,
};
use xensemble::sufficiency::SufficiencyRule;
use xensemble::Error;

/// Small grids keep each pipeline run well under a second.
fn fast(extra: &[&str]) -> ExperimentConfig {
    let mut o: Vec<String> = [
        "synthetic_n=400",
        "linear_l1_penalty=[0.0625]",
        "tree_min_split=[8]",
        "tree_max_leaf=[16]",
        "tree_max_depth=[4]",
        "gbt_learning_rate=[0.1]",
        "gbt_n_estimators=[40]",
        "gbt_max_depth=[3]",
        "gbt_subsample=[1.0]",
        "allocator_n_estimators=[16]",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    o.extend(extra.iter().map(|s| s.to_string()));
    ExperimentConfig::load(None, &o).unwrap()
}

fn with_output(mut c: ExperimentConfig, dir: &std::path::Path) -> ExperimentConfig {
    c.output_dir = dir.to_path_buf();
    c
}

#[test]
fn run_writes_documented_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let c = with_output(fast(&[]), tmp.path());
    let r = run_experiment(&c).unwrap();
    for f in [
        "report.json",
        "curve.csv",
        "policy.csv",
        "partition.csv",
        "config.toml",
    ] {
        assert!(tmp.path().join(f).is_file(), "{f}");
    }
    for f in [
        "g.json",
        "b.json",
        "allocator.json",
        "scaler.json",
        "sufficiency.json",
        "tuning.json",
    ] {
        assert!(tmp.path().join("models").join(f).is_file(), "{f}");
    }
    assert!(!tmp.path().join(INCOMPLETE_MARKER).exists());
    assert!(r.report.metrics.columns().iter().all(|(_, v)| v.is_some()));
    let policy = fs::read_to_string(tmp.path().join("policy.csv")).unwrap();
    assert_eq!(policy.lines().count(), 1 + 41 * r.report.n_test);
    let echo = ExperimentConfig::load(Some(&tmp.path().join("config.toml")), &[]).unwrap();
    assert_eq!(echo, c);
}

#[test]
fn reusing_persisted_models_reproduces_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let first = with_output(fast(&[]), &tmp.path().join("a"));
    run_experiment(&first).unwrap();
    let second = with_output(fast(&[]), &tmp.path().join("b"));
    run_from_models(&second, &tmp.path().join("a/models")).unwrap();
    for f in ["report.json", "curve.csv", "policy.csv", "partition.csv"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(f)).unwrap(),
            fs::read(tmp.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn failed_run_leaves_incomplete_marker_and_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = fast(&[
        "data_source=\"csv\"",
        "csv_path=\"/definitely/missing.csv\"",
    ]);
    c.output_dir = tmp.path().to_path_buf();
    let err = run_experiment(&c).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "data", .. }), "{err}");
    assert!(tmp.path().join(INCOMPLETE_MARKER).exists());
}

#[test]
fn regression_csv_pipeline_uses_validation_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let obs = (0..300)
        .map(|i| {
            let a = (i as f64 * 0.37).sin();
            let b = (i as f64 * 0.11).cos();
            Observation {
                id: i,
                x: vec![a, b],
                y: if a > 0.0 { a * a } else { (3.0 * b).sin() },
            }
        })
        .collect();
    let d = Dataset::new(
        obs,
        Task::Regression,
        vec!["a".into(), "b".into()],
        "target",
        vec![],
    )
    .unwrap();
    let csv = tmp.path().join("reg.csv");
    d.write_csv(&csv, &tmp.path().join("reg.json"), None)
        .unwrap();
    let c = fast(&[
        "data_source=\"csv\"",
        &format!("csv_path={:?}", csv.display().to_string()),
        "task=\"regression\"",
        "target_column=\"target\"",
    ]);
    let r = execute(&c).unwrap();
    let SufficiencyRule::RegressionEpsilon(eps) = r.ctx.rule else {
        panic!("expected a regression threshold, got {:?}", r.ctx.rule)
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert_eq!(
        eps,
        mean(&r.ctx.validation.loss_g).min(mean(&r.ctx.validation.loss_b))
    );
    assert!(!r.report.allocator_features.d_ce);
    assert!(r.report.metrics.pqom <= r.report.metrics.pqeom);
}

#[test]
fn constant_sufficiency_modes() {
    let r = execute(&fast(&["sufficiency=\"always\""])).unwrap();
    assert_eq!(r.ctx.rule, SufficiencyRule::AlwaysSufficient);
    assert_eq!(r.report.metrics.auc, 1.0);
    assert_eq!(r.report.metrics.ppcr, None);
    let r = execute(&fast(&["sufficiency=\"never\""])).unwrap();
    assert_eq!(r.report.metrics.auc, 0.0);
    assert_eq!(r.report.metrics.max_acc, 0.0);
}

#[test]
fn feature_ablation_dedups_and_matches_main_run() {
    let c = fast(&[]);
    let main = execute(&c).unwrap();
    let sink = AllocatorFeatureSet::KITCHEN_SINK;
    let d_mse: AllocatorFeatureSet = "d_mse".parse().unwrap();
    let rows = run_feature_ablation(&c, &[sink, d_mse, sink]).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].auc, Some(main.report.metrics.auc));
}

#[test]
fn feature_ablation_skips_cross_entropy_for_regression() {
    let tmp = tempfile::tempdir().unwrap();
    let obs = (0..200)
        .map(|i| Observation {
            id: i,
            x: vec![i as f64 / 200.0],
            y: (i as f64 / 20.0).sin(),
        })
        .collect();
    let d = Dataset::new(obs, Task::Regression, vec!["x".into()], "y", vec![]).unwrap();
    let csv = tmp.path().join("r.csv");
    d.write_csv(&csv, &tmp.path().join("r.json"), None).unwrap();
    let c = fast(&[
        "data_source=\"csv\"",
        &format!("csv_path={:?}", csv.display().to_string()),
        "task=\"regression\"",
    ]);
    let rows = run_feature_ablation(&c, &AllocatorFeatureSet::ablation_sets()).unwrap();
    assert_eq!(rows.len(), 12);
    for r in rows {
        assert_eq!(r.skipped.is_some(), r.feature_set.d_ce, "{}", r.feature_set);
        assert_eq!(r.auc.is_some(), !r.feature_set.d_ce);
    }
}

#[test]
fn single_candidates_agree_across_selection_modes() {
    let c = fast(&["glass_families=[\"tree\"]"]);
    let a = run_component_ablation(&c).unwrap();
    assert!(a.matched);
    assert_eq!(a.delta, 0.0);
    assert_eq!(a.pairs.len(), 1);
}

#[test]
fn combined_selection_picks_best_validation_pair() {
    let c = fast(&["component_selection=\"combined\""]);
    let a = run_component_ablation(&c).unwrap();
    assert_eq!(a.pairs.len(), 2);
    let best = a.pairs.iter().fold(&a.pairs[0], |acc, p| {
        if p.validation_auc > acc.validation_auc {
            p
        } else {
            acc
        }
    });
    assert_eq!((best.glass, best.black), a.combined);
    let r = execute(&c).unwrap();
    assert_eq!((r.report.glass.hyper, r.report.black.hyper), a.combined);
}

#[test]
fn replicate_statistics() {
    let one = replicate(&fast(&["replicates=1"])).unwrap();
    assert!(one.summary.iter().all(|m| m.sd == Some(0.0) || m.n == 0));
    let same = replicate(&fast(&["replicate_seeds=[3, 3]"])).unwrap();
    assert_eq!(same.runs[0], same.runs[1]);
    assert!(same.summary.iter().all(|m| m.sd == Some(0.0) || m.n == 0));
    let varied = replicate(&fast(&["replicate_seeds=[1, 2]"])).unwrap();
    assert_ne!(varied.runs[0].split_seed, varied.runs[1].split_seed);
}

#[test]
fn synthetic_generator_reaches_the_pipeline_unchanged() {
    let c = fast(&["synthetic_seed=5"]);
    let r = execute(&c).unwrap();
    let raw = gen_complementary_2d(400, 5, 0.0).unwrap();
    assert_eq!(
        r.report.n_train + r.report.n_validation + r.report.n_test,
        raw.len()
    );
}
