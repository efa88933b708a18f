//! Tabular bound campaigns with a CSV and a plain-text report.

use crate::HarnessError;
use cup_core::tabular::{
    performance_difference_campaign, guidance_campaign, improvement_campaign, CampaignConfig,
};
use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

pub const MARGIN_TOLERANCE: f64 = -1e-9;
pub const IDENTITY_TOLERANCE: f64 = 1e-8;
pub const IDENTITY_TRIPLES: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub bound_id: String,
    pub instances: usize,
    /// Smallest bound slack; for the identity row, minus the worst error.
    pub min_margin: f64,
    pub passed: bool,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub rows: Vec<VerifyRow>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn row(&self, id: &str) -> Option<&VerifyRow> {
        self.rows.iter().find(|r| r.bound_id == id)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bound_id,instances,min_margin,pass\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:e},{}", r.bound_id, r.instances, r.min_margin, r.passed);
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<16} {:>9} {:>14}  result\n", "bound", "instances", "min margin");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<16} {:>9} {:>14.3e}  {}",
                r.bound_id,
                r.instances,
                r.min_margin,
                if r.passed { "PASS" } else { "FAIL" }
            );
        }
        s
    }
}

pub fn run_verification(cfg: &CampaignConfig) -> Result<VerifyReport, HarnessError> {
    let mut rows = Vec::new();
    let t = Instant::now();
    let first = guidance_campaign(cfg)?;
    let e1 = t.elapsed();
    let t = Instant::now();
    let second = improvement_campaign(cfg)?;
    let e2 = t.elapsed();
    for (summaries, elapsed) in [(first, e1), (second, e2)] {
        for s in summaries {
            rows.push(VerifyRow {
                bound_id: s.bound_id.name().to_string(),
                instances: s.instances,
                min_margin: s.min_margin,
                passed: s.holds() && s.min_margin >= MARGIN_TOLERANCE,
                elapsed,
            });
        }
    }
    let t = Instant::now();
    let worst = performance_difference_campaign(cfg, IDENTITY_TRIPLES)?;
    rows.push(VerifyRow {
        bound_id: "perf_difference".into(),
        instances: IDENTITY_TRIPLES,
        min_margin: -worst,
        passed: worst <= IDENTITY_TOLERANCE,
        elapsed: t.elapsed(),
    });
    Ok(VerifyReport { rows })
}

/// Writes `verify.csv` and `verify.txt` into `dir`.
pub fn write_report(report: &VerifyReport, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    for (name, body) in [("verify.csv", report.to_csv()), ("verify.txt", report.to_text())] {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| HarnessError::io(&p, e))?;
    }
    Ok(())
}
