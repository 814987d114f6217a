//! Explainability/performance curves and their scalar summaries.
//!
//! "Performance" is always sufficient performance: the share of
//! observations whose allocated model is sufficient. For classification
//! this is accuracy; for regression the within-`ε` rate.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::allocation::{AllocationPolicy, AllocatorTag};
use crate::sufficiency::{Category, SufficiencyPartition};
use crate::{Error, Result};

/// `t̄′`: mean sufficiency of the model each observation is allocated to.
pub fn sufficient_performance(mask: &[bool], partition: &SufficiencyPartition) -> f64 {
    let hits = mask
        .iter()
        .zip(partition.s_g.iter().zip(&partition.s_b))
        .filter(|(&glass, (&g, &b))| if glass { g } else { b })
        .count();
    hits as f64 / partition.len() as f64
}

/// `t̄′_g`: share of observations allocated to, and sufficient under, the glass box.
pub fn explainable_performance(mask: &[bool], partition: &SufficiencyPartition) -> f64 {
    let hits = mask
        .iter()
        .zip(&partition.s_g)
        .filter(|(&glass, &g)| glass && g)
        .count();
    hits as f64 / partition.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceCurve {
    pub q: Vec<f64>,
    pub t_bar: Vec<f64>,
    pub t_bar_g: Vec<f64>,
    pub tags: Vec<AllocatorTag>,
}

impl PerformanceCurve {
    /// Curve of a closed-form sequence of values (e.g. the random expectation).
    pub fn from_values(q: &[f64], t_bar: Vec<f64>, tag: AllocatorTag) -> PerformanceCurve {
        PerformanceCurve {
            q: q.to_vec(),
            t_bar_g: vec![f64::NAN; q.len()],
            t_bar,
            tags: vec![tag; q.len()],
        }
    }

    pub fn auc(&self) -> Result<f64> {
        auc(&self.q, &self.t_bar)
    }
}

/// Evaluates a policy against the true sufficiency of the same batch.
pub fn curve(
    policy: &AllocationPolicy,
    partition: &SufficiencyPartition,
) -> Result<PerformanceCurve> {
    if policy.masks.iter().any(|m| m.len() != partition.len()) {
        return Err(Error::invalid(
            "policy and partition cover different observations",
        ));
    }
    Ok(PerformanceCurve {
        q: policy.grid.points().to_vec(),
        t_bar: policy
            .masks
            .iter()
            .map(|m| sufficient_performance(m, partition))
            .collect(),
        t_bar_g: policy
            .masks
            .iter()
            .map(|m| explainable_performance(m, partition))
            .collect(),
        tags: policy.tags.clone(),
    })
}

/// Trapezoidal area under `values` over `q`.
pub fn auc(q: &[f64], values: &[f64]) -> Result<f64> {
    if q.len() < 2 || q.len() != values.len() {
        return Err(Error::invalid("auc needs at least two matching points"));
    }
    Ok(q.windows(2)
        .zip(values.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum())
}

/// Share of the oracle's area above random that an allocator captures.
/// `None` when the oracle does not beat random.
pub fn ppcr(learned_auc: f64, random_auc: f64, oracle_auc: f64) -> Option<f64> {
    let denominator = oracle_auc - random_auc;
    if denominator.abs() < 1e-12 {
        return None;
    }
    Some((learned_auc - random_auc) / denominator)
}

/// Fraction of grid points with `t̄′(q) ≥ max(perf_g, perf_b)`.
pub fn pqeom(t_bar: &[f64], perf_g: f64, perf_b: f64) -> f64 {
    let best = perf_g.max(perf_b);
    fraction(t_bar.iter().map(|&t| t >= best))
}

/// Fraction of grid points with `t̄′(q) > max(perf_g, perf_b)`.
pub fn pqom(t_bar: &[f64], perf_g: f64, perf_b: f64) -> f64 {
    let best = perf_g.max(perf_b);
    fraction(t_bar.iter().map(|&t| t > best))
}

/// Fraction of grid points where the feature-dependent allocator is used.
pub fn pcfa(tags: &[AllocatorTag]) -> f64 {
    fraction(tags.iter().map(|t| *t == AllocatorTag::FeatureDependent))
}

fn fraction(flags: impl Iterator<Item = bool>) -> f64 {
    let (mut hits, mut total) = (0usize, 0usize);
    for f in flags {
        hits += usize::from(f);
        total += 1;
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Largest grid `q` whose performance reaches 95% of the better component; 0 if none.
pub fn tqm95(q: &[f64], t_bar: &[f64], perf_g: f64, perf_b: f64) -> f64 {
    let threshold = 0.95 * perf_g.max(perf_b);
    q.iter()
        .zip(t_bar)
        .filter(|(_, &t)| t >= threshold)
        .map(|(&q, _)| q)
        .fold(0.0, f64::max)
}

/// Maximum performance over the grid and the largest `q` attaining it (within 1e-12).
pub fn max_acc_argmax(q: &[f64], t_bar: &[f64]) -> (f64, f64) {
    let max = t_bar.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let arg = q
        .iter()
        .zip(t_bar)
        .filter(|(_, &t)| t >= max - 1e-12)
        .map(|(&q, _)| q)
        .fold(f64::NEG_INFINITY, f64::max);
    (max, arg)
}

/// Share of exact category matches.
pub fn s_acc(estimated: &[Category], truth: &[Category]) -> Result<f64> {
    if estimated.len() != truth.len() {
        return Err(Error::invalid(format!(
            "category vectors differ in length ({} vs {})",
            estimated.len(),
            truth.len()
        )));
    }
    Ok(fraction(estimated.iter().zip(truth).map(|(a, b)| a == b)))
}

/// The nine summary metrics plus the reference values they derive from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: f64,
    /// `None` when the oracle curve does not rise above the random curve.
    pub ppcr: Option<f64>,
    pub pqeom: f64,
    pub pqom: f64,
    pub pcfa: f64,
    pub tqm95: f64,
    pub max_acc: f64,
    pub argmax_q: f64,
    pub s_acc: f64,
    pub perf_g: f64,
    pub perf_b: f64,
    pub oracle_auc: f64,
    pub random_auc: f64,
}

impl MetricsReport {
    /// Summarizes an allocator's curve against the oracle and random references.
    pub fn compute(
        allocated: &PerformanceCurve,
        oracle: &PerformanceCurve,
        random: &PerformanceCurve,
        partition: &SufficiencyPartition,
        estimated: &[Category],
    ) -> Result<MetricsReport> {
        let perf_g = partition.mean_s_g();
        let perf_b = partition.mean_s_b();
        let auc_value = allocated.auc()?;
        let oracle_auc = oracle.auc()?;
        let random_auc = random.auc()?;
        let (max_acc, argmax_q) = max_acc_argmax(&allocated.q, &allocated.t_bar);
        Ok(MetricsReport {
            auc: auc_value,
            ppcr: ppcr(auc_value, random_auc, oracle_auc),
            pqeom: pqeom(&allocated.t_bar, perf_g, perf_b),
            pqom: pqom(&allocated.t_bar, perf_g, perf_b),
            pcfa: pcfa(&allocated.tags),
            tqm95: tqm95(&allocated.q, &allocated.t_bar, perf_g, perf_b),
            max_acc,
            argmax_q,
            s_acc: s_acc(estimated, &partition.categories)?,
            perf_g,
            perf_b,
            oracle_auc,
            random_auc,
        })
    }

    /// `(name, value)` pairs of the nine summary metrics, in table order.
    pub fn columns(&self) -> [(&'static str, Option<f64>); 9] {
        [
            ("auc", Some(self.auc)),
            ("ppcr", self.ppcr),
            ("pqeom", Some(self.pqeom)),
            ("pqom", Some(self.pqom)),
            ("pcfa", Some(self.pcfa)),
            ("tqm95", Some(self.tqm95)),
            ("max_acc", Some(self.max_acc)),
            ("argmax_q", Some(self.argmax_q)),
            ("s_acc", Some(self.s_acc)),
        ]
    }
}

/// Writes `q,t_bar,t_bar_g,allocator_tag` rows for each curve in turn.
pub fn write_curves_csv(path: &Path, curves: &[&PerformanceCurve]) -> Result<()> {
    let mut body = String::from("q,t_bar,t_bar_g,allocator_tag\n");
    for c in curves {
        for i in 0..c.q.len() {
            let g = if c.t_bar_g[i].is_nan() {
                String::new()
            } else {
                c.t_bar_g[i].to_string()
            };
            body.push_str(&format!("{},{},{},{}\n", c.q[i], c.t_bar[i], g, c.tags[i]));
        }
    }
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    out.write_all(body.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::{oracle_policy, QGrid};
    use crate::models::Prediction;
    use crate::sufficiency::PairEvaluation;

    fn grid41() -> Vec<f64> {
        QGrid::default().points().to_vec()
    }

    #[test]
    fn curve_endpoints_and_hand_case() {
        let part = SufficiencyPartition::from_indicators(
            vec![0, 1, 2, 3],
            vec![true, false, true, false],
            vec![false, true, true, false],
        )
        .unwrap();
        let eval = PairEvaluation {
            g_out: vec![Prediction::Value(0.0); 4],
            b_out: vec![Prediction::Value(0.0); 4],
            loss_g: vec![0.0; 4],
            loss_b: vec![0.0; 4],
            partition: part.clone(),
        };
        let grid = QGrid::new(vec![0.0, 0.5, 1.0]).unwrap();
        let c = curve(&oracle_policy(&eval, &grid), &part).unwrap();
        assert_eq!(c.t_bar[0], part.mean_s_b());
        assert_eq!(c.t_bar_g[0], 0.0);
        // {Zg, Z2} to the glass box: 1 + 1 + (Zb via b) 1 + (Z0) 0 = 3 of 4.
        assert_eq!(c.t_bar[1], 0.75);
        assert_eq!(c.t_bar[2], part.mean_s_g());

        let short = AllocationPolicy {
            grid: grid.clone(),
            masks: vec![vec![false; 3]; 3],
            tags: vec![AllocatorTag::Oracle; 3],
        };
        assert!(curve(&short, &part).is_err());
    }

    #[test]
    fn auc_examples() {
        let q = grid41();
        assert!((auc(&q, &[0.8; 41]).unwrap() - 0.8).abs() < 1e-12);
        assert!((auc(&q, &q).unwrap() - 0.5).abs() < 1e-12);
        assert!((auc(&[0.0, 0.5, 1.0], &[0.0, 1.0, 1.0]).unwrap() - 0.75).abs() < 1e-15);
        assert!(auc(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn ppcr_examples() {
        assert_eq!(ppcr(0.9, 0.7, 0.9), Some(1.0));
        assert_eq!(ppcr(0.7, 0.7, 0.9), Some(0.0));
        assert!(ppcr(0.65, 0.7, 0.9).unwrap() < 0.0);
        assert_eq!(ppcr(0.8, 0.7, 0.7), None);
    }

    #[test]
    fn pqeom_pqom_examples() {
        let flat = [0.9; 41];
        assert_eq!(pqeom(&flat, 0.9, 0.8), 1.0);
        assert_eq!(pqom(&flat, 0.9, 0.8), 0.0);

        let mut above = [0.95; 41];
        above[0] = 0.9;
        above[40] = 0.9;
        assert_eq!(pqom(&above, 0.9, 0.9), 39.0 / 41.0);

        let mut below = [0.5; 41];
        below[0] = 0.9;
        assert_eq!(pqeom(&below, 0.7, 0.9), 1.0 / 41.0);
    }

    #[test]
    fn pcfa_examples() {
        use AllocatorTag::*;
        assert_eq!(pcfa(&[FeatureDependent; 4]), 1.0);
        assert_eq!(pcfa(&[FeatureIndependent; 4]), 0.0);
        assert_eq!(
            pcfa(&[
                FeatureDependent,
                FeatureIndependent,
                FeatureDependent,
                FeatureIndependent
            ]),
            0.5
        );
    }

    #[test]
    fn tqm95_examples() {
        let q = grid41();
        assert_eq!(tqm95(&q, &[0.9; 41], 0.9, 0.8), 1.0);
        // Compliant up to q = 0.7 (index 28), below the threshold after.
        let decaying: Vec<f64> = q
            .iter()
            .map(|&x| if x <= 0.7 + 1e-12 { 0.9 } else { 0.5 })
            .collect();
        assert_eq!(tqm95(&q, &decaying, 0.9, 0.9), q[28]);
        assert_eq!(tqm95(&q, &[0.1; 41], 0.9, 0.9), 0.0);
    }

    #[test]
    fn max_acc_examples() {
        let q = grid41();
        let decreasing: Vec<f64> = q.iter().map(|x| 1.0 - x).collect();
        assert_eq!(max_acc_argmax(&q, &decreasing), (1.0, 0.0));

        let plateau: Vec<f64> = q
            .iter()
            .map(|&x| {
                if (0.6 - 1e-9..=0.9 + 1e-9).contains(&x) {
                    0.95
                } else {
                    0.8
                }
            })
            .collect();
        assert_eq!(max_acc_argmax(&q, &plateau), (0.95, q[36]));

        let peak: Vec<f64> = q.iter().map(|&x| 0.9 - (x - 0.5).abs()).collect();
        let (m, a) = max_acc_argmax(&q, &peak);
        assert_eq!((m, a), (0.9, 0.5));
    }

    #[test]
    fn s_acc_examples() {
        use Category::*;
        assert_eq!(s_acc(&[Zg, Zb], &[Zg, Zb]).unwrap(), 1.0);
        assert_eq!(s_acc(&[Zg, Zb], &[Zb, Zg]).unwrap(), 0.0);
        assert_eq!(s_acc(&[Zg, Zb, Z2, Z0], &[Zg, Zb, Z2, Zg]).unwrap(), 0.75);
        assert!(s_acc(&[Zg], &[Zg, Zb]).is_err());
    }
}
