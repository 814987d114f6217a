use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::pipeline::{execute, RunReport};
use crate::Result;

/// Mean and sample standard deviation of one metric across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub name: String,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    /// Replicates where the metric was defined.
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateReport {
    pub seeds: Vec<u64>,
    pub runs: Vec<RunReport>,
    pub summary: Vec<MetricSummary>,
}

/// Sample mean and standard deviation (`n − 1` denominator, 0 for one value).
pub fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

/// Reruns the pipeline once per seed, varying both the split seed and the
/// model seed, and aggregates the nine summary metrics. Undefined PPCR
/// values are left out of its aggregate.
pub fn replicate(config: &ExperimentConfig) -> Result<ReplicateReport> {
    config.validate()?;
    let seeds = config.seeds();
    let runs: Vec<RunReport> = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = config.clone();
            c.split_seed = seed;
            c.model_seed = seed;
            execute(&c).map(|r| r.report)
        })
        .collect::<Result<_>>()?;
    Ok(ReplicateReport {
        summary: summarize(&runs),
        seeds,
        runs,
    })
}

pub fn summarize(runs: &[RunReport]) -> Vec<MetricSummary> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    first
        .metrics
        .columns()
        .iter()
        .enumerate()
        .map(|(k, (name, _))| {
            let values: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.metrics.columns()[k].1)
                .collect();
            let stats = mean_sd(&values);
            MetricSummary {
                name: (*name).to_string(),
                mean: stats.map(|s| s.0),
                sd: stats.map(|s| s.1),
                n: values.len(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_statistics() {
        assert_eq!(mean_sd(&[]), None);
        assert_eq!(mean_sd(&[0.4]), Some((0.4, 0.0)));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m, 2.5);
        // Σ(v − 2.5)² = 5, divided by 3.
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_sd(&[0.5; 3]).unwrap().1, 0.0);
    }
}
