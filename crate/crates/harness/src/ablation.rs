//! Sweeps over CUP weights or source sets, aggregated across seeds.

use crate::config::{ExperimentConfig, SourceSpec};
use crate::train::{median_steps, train_cup, RunResult};
use crate::HarnessError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub label: String,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub sources: Option<Vec<SourceSpec>>,
}

impl Variant {
    pub fn weights(beta1: f64, beta2: f64) -> Self {
        Self {
            label: format!("b1_{beta1}_b2_{beta2}"),
            beta1: Some(beta1),
            beta2: Some(beta2),
            sources: None,
        }
    }

    pub fn source_set(label: &str, sources: Vec<SourceSpec>) -> Self {
        Self {
            label: label.to_string(),
            beta1: None,
            beta2: None,
            sources: Some(sources),
        }
    }

    /// `beta1:beta2`.
    pub fn parse_weights(s: &str) -> Result<Self, HarnessError> {
        let bad = || HarnessError::Config(format!("sweep point '{s}' is not beta1:beta2"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        Ok(Self::weights(
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        ))
    }

    pub fn apply(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = base.clone();
        if let Some(b) = self.beta1 {
            cfg.cup.beta1 = b;
        }
        if let Some(b) = self.beta2 {
            cfg.cup.beta2 = b;
        }
        if let Some(s) = &self.sources {
            cfg.sources = s.clone();
        }
        cfg.output_dir = base.output_dir.join(&self.label);
        cfg
    }
}

#[derive(Debug, Clone)]
pub struct VariantSummary {
    pub label: String,
    pub beta1: f64,
    pub beta2: f64,
    pub n_sources: usize,
    pub runs: Vec<RunResult>,
    pub median_steps_to_threshold: f64,
    pub mean_final_success: f64,
    /// 95% bootstrap interval of the mean final success.
    pub final_success_ci: (f64, f64),
}

/// Percentile bootstrap of the mean.
pub fn bootstrap_mean_ci(values: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let at = |q: f64| means[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    (at(0.025), at(0.975))
}

pub fn run_ablation(base: &ExperimentConfig, sweep: &[Variant]) -> Result<Vec<VariantSummary>, HarnessError> {
    if sweep.is_empty() {
        return Err(HarnessError::Config("ablation sweep is empty".into()));
    }
    let mut out = Vec::new();
    for v in sweep {
        let cfg = v.apply(base);
        let runs = train_cup(&cfg)?;
        let steps: Vec<Option<u64>> = runs.iter().map(|r| r.steps_to_threshold).collect();
        let finals: Vec<f64> = runs.iter().map(|r| r.final_success).collect();
        out.push(VariantSummary {
            label: v.label.clone(),
            beta1: cfg.cup.beta1,
            beta2: cfg.cup.beta2,
            n_sources: cfg.sources.len(),
            median_steps_to_threshold: median_steps(&steps),
            mean_final_success: finals.iter().sum::<f64>() / finals.len() as f64,
            final_success_ci: bootstrap_mean_ci(&finals, 1000, 0),
            runs,
        });
    }
    let per_seed = base.output_dir.join("ablation.csv");
    let summary = base.output_dir.join("ablation_summary.csv");
    std::fs::write(&per_seed, per_seed_csv(&out)).map_err(|e| HarnessError::io(&per_seed, e))?;
    std::fs::write(&summary, summary_csv(&out)).map_err(|e| HarnessError::io(&summary, e))?;
    Ok(out)
}

fn steps_field(s: Option<u64>) -> String {
    s.map_or("inf".into(), |x| x.to_string())
}

pub fn per_seed_csv(rows: &[VariantSummary]) -> String {
    let mut s = String::from("variant,beta1,beta2,n_sources,seed,final_success,steps_to_threshold\n");
    for v in rows {
        for r in &v.runs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                v.label,
                v.beta1,
                v.beta2,
                v.n_sources,
                r.seed,
                r.final_success,
                steps_field(r.steps_to_threshold)
            );
        }
    }
    s
}

pub fn summary_csv(rows: &[VariantSummary]) -> String {
    let mut s = String::from(
        "variant,beta1,beta2,n_sources,seeds,median_steps_to_threshold,mean_final_success,final_success_ci_low,final_success_ci_high\n",
    );
    for v in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            v.label,
            v.beta1,
            v.beta2,
            v.n_sources,
            v.runs.len(),
            v.median_steps_to_threshold,
            v.mean_final_success,
            v.final_success_ci.0,
            v.final_success_ci.1
        );
    }
    s
}
