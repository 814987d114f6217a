use proptest::prelude::*;
use xensemble::allocation::{
    allocate_top_q, desirability_score, n_q, oracle_policy, random_expectation_curve,
    AllocationPolicy, AllocatorTag, DesirabilityRanking, QGrid,
};
use xensemble::dataset::{split, Dataset, Observation, Scaler, SplitRatios, Task};
use xensemble::metrics::{auc, curve, max_acc_argmax, pqeom, pqom};
use xensemble::models::Prediction;
use xensemble::sufficiency::{PairEvaluation, SufficiencyPartition};

fn regression_data(rows: &[(f64, f64, f64)]) -> Dataset {
    let obs = rows
        .iter()
        .enumerate()
        .map(|(id, &(a, b, y))| Observation {
            id,
            x: vec![a, b],
            y,
        })
        .collect();
    Dataset::new(
        obs,
        Task::Regression,
        vec!["a".into(), "b".into()],
        "y",
        vec![],
    )
    .unwrap()
}

fn evaluation(cases: &[(bool, bool, f64, f64)]) -> PairEvaluation {
    let n = cases.len();
    PairEvaluation {
        g_out: cases.iter().map(|c| Prediction::Value(c.2)).collect(),
        b_out: cases.iter().map(|c| Prediction::Value(c.3)).collect(),
        loss_g: cases.iter().map(|c| c.2).collect(),
        loss_b: cases.iter().map(|c| c.3).collect(),
        partition: SufficiencyPartition::from_indicators(
            (0..n).collect(),
            cases.iter().map(|c| c.0).collect(),
            cases.iter().map(|c| c.1).collect(),
        )
        .unwrap(),
    }
}

fn case() -> impl Strategy<Value = (bool, bool, f64, f64)> {
    (any::<bool>(), any::<bool>(), 0.0..10.0f64, 0.0..10.0f64)
}

proptest! {
    #[test]
    fn split_partitions_ids(n in 10usize..400, seed in any::<u64>()) {
        let rows: Vec<_> = (0..n).map(|i| (i as f64, 0.0, i as f64)).collect();
        let d = regression_data(&rows);
        let s = split(&d, SplitRatios::default(), seed).unwrap();
        let mut ids: Vec<usize> = s.train.ids();
        ids.extend(s.validation.ids());
        ids.extend(s.test.ids());
        prop_assert!(!s.train.is_empty() && !s.validation.is_empty() && !s.test.is_empty());
        for part in [&s.train, &s.validation, &s.test] {
            prop_assert!(part.ids().windows(2).all(|w| w[0] < w[1]));
        }
        ids.sort_unstable();
        prop_assert_eq!(ids, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn scaled_training_data_spans_unit_box(rows in prop::collection::vec((-1e3..1e3f64, -5.0..5.0f64, -50.0..50.0f64), 2..60)) {
        let d = regression_data(&rows);
        let s = Scaler::fit(&d);
        let scaled = s.apply(&d).unwrap();
        for o in &scaled.observations {
            for &v in o.x.iter().chain(std::iter::once(&o.y)) {
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v));
            }
        }
        for (o, raw) in scaled.observations.iter().zip(&d.observations) {
            prop_assert!((s.inverse_response(o.y) - raw.y).abs() <= 1e-9 * (1.0 + raw.y.abs()));
        }
    }

    #[test]
    fn score_intervals(c in case()) {
        let r = desirability_score(c.0, c.1, c.2, c.3);
        let lo = match (c.0, c.1) {
            (false, true) => -2.0,
            (false, false) => -1.0,
            (true, true) => 0.0,
            (true, false) => 1.0,
        };
        prop_assert!(r > lo && r < lo + 1.0);
    }

    #[test]
    fn masks_are_nested_and_sized(scores in prop::collection::vec(-3.0..3.0f64, 1..120), qs in prop::collection::vec(0.0..=1.0f64, 2..10)) {
        let mut qs = qs;
        qs.sort_by(f64::total_cmp);
        let masks: Vec<Vec<bool>> = qs.iter().map(|&q| allocate_top_q(&scores, q)).collect();
        for (m, &q) in masks.iter().zip(&qs) {
            prop_assert_eq!(m.iter().filter(|&&b| b).count(), n_q(q, scores.len()));
        }
        for w in masks.windows(2) {
            prop_assert!(w[0].iter().zip(&w[1]).all(|(&a, &b)| !a || b));
        }
    }

    #[test]
    fn ranks_are_a_permutation(scores in prop::collection::vec(-2.0..2.0f64, 1..100)) {
        let r = DesirabilityRanking::from_scores(&scores);
        let mut ranks = r.ranks.clone();
        ranks.sort_unstable();
        prop_assert_eq!(ranks, (1..=scores.len()).collect::<Vec<_>>());
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if scores[i] < scores[j] || (scores[i] == scores[j] && i < j) {
                    prop_assert!(r.ranks[i] < r.ranks[j]);
                }
            }
        }
    }

    #[test]
    fn oracle_dominates_and_endpoints_agree(cases in prop::collection::vec(case(), 1..80), other in prop::collection::vec(-1.0..1.0f64, 80)) {
        let eval = evaluation(&cases);
        let grid = QGrid::default();
        let part = &eval.partition;
        let oracle = curve(&oracle_policy(&eval, &grid), part).unwrap();
        let rival = curve(&AllocationPolicy::from_scores(&other[..cases.len()], &grid, AllocatorTag::FeatureDependent), part).unwrap();
        for (o, r) in oracle.t_bar.iter().zip(&rival.t_bar) {
            prop_assert!(o >= r);
        }
        for c in [&oracle, &rival] {
            prop_assert_eq!(c.t_bar[0], part.mean_s_b());
            prop_assert_eq!(*c.t_bar.last().unwrap(), part.mean_s_g());
            prop_assert!((0.0..=1.0).contains(&c.auc().unwrap()));
        }
    }

    #[test]
    fn random_curve_is_linear(cases in prop::collection::vec(case(), 1..80)) {
        let eval = evaluation(&cases);
        let grid = QGrid::default();
        let part = &eval.partition;
        let values = random_expectation_curve(part, &grid);
        let a = auc(grid.points(), &values).unwrap();
        let expected = (part.mean_s_g() + part.mean_s_b()) / 2.0;
        prop_assert!((a - expected).abs() < 1e-12);
        let slope = part.mean_s_g() - part.mean_s_b();
        for (q, v) in grid.points().iter().zip(&values) {
            prop_assert!((v - (part.mean_s_b() + q * slope)).abs() < 1e-12);
        }
    }

    #[test]
    fn strict_count_never_exceeds_inclusive(values in prop::collection::vec(0.0..1.0f64, 2..50), g in 0.0..1.0f64, b in 0.0..1.0f64) {
        prop_assert!(pqom(&values, g, b) <= pqeom(&values, g, b));
        let q: Vec<f64> = (0..values.len()).map(|i| i as f64 / (values.len() - 1) as f64).collect();
        let (max, arg) = max_acc_argmax(&q, &values);
        prop_assert!(q.contains(&arg));
        prop_assert!(values.iter().all(|&v| v <= max));
    }
}
