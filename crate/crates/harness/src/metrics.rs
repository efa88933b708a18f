//! Per-evaluation CSV rows.

use crate::HarnessError;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub seed: u64,
    pub env_step: u64,
    pub mean_eval_return: f64,
    pub success_rate: f64,
    pub alpha: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mean_beta_s: f64,
    /// One entry per candidate, target last.
    pub selection: Vec<f64>,
}

pub fn header(n_candidates: usize) -> String {
    let mut h = String::from(
        "seed,env_step,mean_eval_return,success_rate,alpha,critic_loss,actor_loss,mean_beta_s",
    );
    for i in 0..n_candidates {
        if i + 1 == n_candidates {
            h.push_str(",sel_target");
        } else {
            h.push_str(&format!(",sel_source{i}"));
        }
    }
    h
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{},{},{},{}",
            self.seed,
            self.env_step,
            self.mean_eval_return,
            self.success_rate,
            self.alpha,
            self.critic_loss,
            self.actor_loss,
            self.mean_beta_s
        );
        for f in &self.selection {
            s.push(',');
            s.push_str(&f.to_string());
        }
        s
    }
}

/// Header-first CSV writer, flushed after every row.
pub struct MetricsWriter {
    out: BufWriter<File>,
    n_candidates: usize,
    rows: usize,
}

impl MetricsWriter {
    pub fn create(path: &Path, n_candidates: usize) -> Result<Self, HarnessError> {
        let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{}", header(n_candidates)).map_err(|e| HarnessError::io(path, e))?;
        out.flush().map_err(|e| HarnessError::io(path, e))?;
        Ok(Self {
            out,
            n_candidates,
            rows: 0,
        })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<(), HarnessError> {
        if row.selection.len() != self.n_candidates {
            return Err(HarnessError::Runtime(format!(
                "row has {} selection columns, header has {}",
                row.selection.len(),
                self.n_candidates
            )));
        }
        writeln!(self.out, "{}", row.to_csv())
            .and_then(|_| self.out.flush())
            .map_err(|e| HarnessError::Runtime(format!("metrics write failed: {e}")))?;
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

/// Concatenates CSV files sharing one header; returns the data row count.
pub fn merge_csv(inputs: &[&Path], output: &Path) -> Result<usize, HarnessError> {
    let mut out = BufWriter::new(File::create(output).map_err(|e| HarnessError::io(output, e))?);
    let mut header: Option<String> = None;
    let mut rows = 0;
    for path in inputs {
        let reader = BufReader::new(File::open(path).map_err(|e| HarnessError::io(path, e))?);
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| HarnessError::io(path, e))?;
            if i == 0 {
                match &header {
                    None => {
                        writeln!(out, "{line}").map_err(|e| HarnessError::io(output, e))?;
                        header = Some(line);
                    }
                    Some(h) if *h == line => {}
                    Some(_) => {
                        return Err(HarnessError::Runtime(format!(
                            "{} has a different header",
                            path.display()
                        )))
                    }
                }
            } else if !line.is_empty() {
                writeln!(out, "{line}").map_err(|e| HarnessError::io(output, e))?;
                rows += 1;
            }
        }
    }
    out.flush().map_err(|e| HarnessError::io(output, e))?;
    Ok(rows)
}
