use clap::{Args, Parser, Subcommand};
use cup_core::tabular::CampaignConfig;
use cup_harness::ablation::{run_ablation, Variant};
use cup_harness::config::{ExperimentConfig, SourceSpec};
use cup_harness::gradcheck::run_grad_suite;
use cup_harness::train::{median_steps, train_cup, train_source, RunResult};
use cup_harness::verify::{run_verification, write_report};
use cup_harness::HarnessError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cup", about = "Critic-guided policy reuse experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run only this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// key=value, applied after the config file.
    #[arg(long = "override")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Plain SAC training.
    TrainSource(Common),
    /// SAC with critic-guided reuse of the configured sources.
    TrainCup(Common),
    /// CUP over a sweep of weights and/or source sets.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// beta1:beta2 sweep point (repeatable).
        #[arg(long = "weights")]
        weights: Vec<String>,
        /// Comma-separated source list as one variant (repeatable).
        #[arg(long = "source-set")]
        source_sets: Vec<String>,
    },
    /// Tabular bound campaigns.
    Verify {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        mdps: usize,
    },
    /// Finite-difference checks of every loss.
    GradCheck {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 20)]
        batches: usize,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::desk(),
    };
    for o in &c.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(s) = c.seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_runs(runs: &[RunResult]) {
    for r in runs {
        println!(
            "seed {}: env steps {}, final success {:.2}, steps to threshold {}",
            r.seed,
            r.env_steps,
            r.final_success,
            r.steps_to_threshold.map_or("not reached".into(), |s| s.to_string())
        );
    }
    let steps: Vec<_> = runs.iter().map(|r| r.steps_to_threshold).collect();
    println!("median steps to threshold: {}", median_steps(&steps));
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::TrainSource(c) => print_runs(&train_source(&load_config(&c)?)?),
        Command::TrainCup(c) => print_runs(&train_cup(&load_config(&c)?)?),
        Command::Ablate {
            common,
            weights,
            source_sets,
        } => {
            let cfg = load_config(&common)?;
            let mut sweep = weights
                .iter()
                .map(|w| Variant::parse_weights(w))
                .collect::<Result<Vec<_>, _>>()?;
            for (i, set) in source_sets.iter().enumerate() {
                let sources = set
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(SourceSpec::parse)
                    .collect::<Result<_, _>>()?;
                sweep.push(Variant::source_set(&format!("sources{i}"), sources));
            }
            for v in run_ablation(&cfg, &sweep)? {
                println!(
                    "{}: median steps {}, mean final success {:.3} [{:.3}, {:.3}]",
                    v.label,
                    v.median_steps_to_threshold,
                    v.mean_final_success,
                    v.final_success_ci.0,
                    v.final_success_ci.1
                );
            }
        }
        Command::Verify { seed, out, mdps } => {
            let cfg = CampaignConfig {
                n_mdps: mdps,
                seed: seed.unwrap_or(0),
                ..CampaignConfig::default()
            };
            let report = run_verification(&cfg)?;
            write_report(&report, &out.unwrap_or_else(|| PathBuf::from("verify")))?;
            print!("{}", report.to_text());
            if !report.passed() {
                return Err(HarnessError::Verification("a tabular bound was violated".into()));
            }
        }
        Command::GradCheck { seed, batches } => {
            let reports = run_grad_suite(batches, seed.unwrap_or(0))?;
            let mut ok = true;
            for r in &reports {
                println!(
                    "{:<10} batches {:>3}  max rel error {:.3e}  {}",
                    r.loss,
                    r.batches,
                    r.max_rel_error,
                    if r.passed() { "PASS" } else { "FAIL" }
                );
                ok &= r.passed();
            }
            if !ok {
                return Err(HarnessError::Verification("gradient check failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
