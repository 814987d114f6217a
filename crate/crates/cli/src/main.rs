use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use xensemble::allocation::AllocatorFeatureSet;
use xensemble::dataset::gen_complementary_2d;
use xensemble::experiment::{self, ExperimentConfig, RunReport};

#[derive(Parser)]
#[command(
    name = "xensemble",
    version,
    about = "Glass-box / black-box ensembles with explainability guarantees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; every key is optional.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set synthetic_n=5000`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set output_dir=DIR`.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(dir) = &self.output {
            overrides.push(format!("output_dir={:?}", dir.display().to_string()));
        }
        Ok(ExperimentConfig::load(self.config.as_deref(), &overrides)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline once and write all artifacts.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Skip fitting and reuse g, b, allocator and scaler from this directory.
        #[arg(long, value_name = "MODELS_DIR")]
        reuse_models: Option<PathBuf>,
    },
    /// Run once per replicate seed and report mean and standard deviation.
    Replicate {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Compare allocator feature sets on a shared (g, b) pair.
    AblateFeatures {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated sets such as `x,g+b,d_mse`; defaults to all twelve.
        #[arg(long, value_delimiter = ',')]
        sets: Vec<AllocatorFeatureSet>,
    },
    /// Compare individual and combined component selection.
    AblateComponents {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write the synthetic two-region classification task as CSV.
    GenData {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Brute-force checks of the allocation guarantees.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn print_report(report: &RunReport) {
    println!(
        "glass {:.4}  black {:.4}  (test sufficient performance)",
        report.metrics.perf_g, report.metrics.perf_b
    );
    for (name, value) in report.metrics.columns() {
        match value {
            Some(v) => println!("{name:>9}  {v:.4}"),
            None => println!("{name:>9}  undefined"),
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            config,
            reuse_models,
        } => {
            let config = config.load()?;
            let result = match reuse_models {
                Some(dir) => experiment::run_from_models(&config, &dir)?,
                None => experiment::run_experiment(&config)?,
            };
            print_report(&result.report);
            println!("artifacts in {}", config.output_dir.display());
        }
        Command::Replicate { config } => {
            let config = config.load()?;
            let report = experiment::replicate(&config)?;
            experiment::write_replicates(&report, &config.output_dir)?;
            println!("{} replicates, seeds {:?}", report.runs.len(), report.seeds);
            for m in &report.summary {
                match (m.mean, m.sd) {
                    (Some(mean), Some(sd)) => {
                        println!("{:>9}  {mean:.4} ± {sd:.4}  (n={})", m.name, m.n)
                    }
                    _ => println!("{:>9}  undefined", m.name),
                }
            }
        }
        Command::AblateFeatures { config, sets } => {
            let config = config.load()?;
            let sets = if sets.is_empty() {
                AllocatorFeatureSet::ablation_sets()
            } else {
                sets
            };
            let rows = experiment::run_feature_ablation(&config, &sets)?;
            experiment::write_feature_ablation(&rows, &config.output_dir)?;
            for r in &rows {
                match (r.auc, &r.skipped) {
                    (Some(auc), _) => println!("{:<20} auc {auc:.4}", r.feature_set.to_string()),
                    (None, Some(why)) => {
                        println!("{:<20} skipped: {why}", r.feature_set.to_string())
                    }
                    _ => {}
                }
            }
        }
        Command::AblateComponents { config } => {
            let config = config.load()?;
            let result = experiment::run_component_ablation(&config)?;
            experiment::write_component_ablation(&result, &config.output_dir)?;
            println!(
                "match: {}  individual auc {:.4}  combined auc {:.4}  delta {:+.4}",
                if result.matched { "yes" } else { "no" },
                result.individual_auc,
                result.combined_auc,
                result.delta
            );
        }
        Command::GenData {
            n,
            seed,
            noise,
            out,
        } => {
            let data = gen_complementary_2d(n, seed, noise)?;
            let sidecar = out.with_extension("json");
            data.write_csv(&out, &sidecar, None)
                .with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} rows to {}", data.len(), out.display());
        }
        Command::Verify { seed } => {
            let results = xensemble::verify::run_all(seed);
            let mut failed = 0;
            for r in &results {
                let status = if r.passed() { "PASS" } else { "FAIL" };
                println!(
                    "{status}  {:<45} {} instances, {} failures",
                    r.name, r.instances, r.failures
                );
                failed += usize::from(!r.passed());
            }
            if failed > 0 {
                bail!("{failed} check(s) failed");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
