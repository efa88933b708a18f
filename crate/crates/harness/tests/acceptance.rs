//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion.
//!
//! Exits non-zero on a failed criterion only when `ACCEPTANCE_STRICT=1`, so
//! `cargo test --workspace` reports the outcome without aborting the run.

use cup_core::envs::TaskKind;
use cup_core::tabular::{performance_difference_campaign, guidance_campaign, improvement_campaign, CampaignConfig};
use cup_harness::config::{ExperimentConfig, SourceSpec};
use cup_harness::gradcheck::run_grad_suite;
use cup_harness::train::{median_steps, train_cup, train_source, RunResult};
use cup_harness::HarnessError;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

const MARGIN: f64 = -1e-9;
const IDENTITY_TOL: f64 = 1e-8;
const GRAD_TOL: f64 = 1e-4;
const BUDGET: u64 = 200_000;

struct Line {
    id: &'static str,
    passed: bool,
    detail: String,
}

fn line(id: &'static str, passed: bool, detail: String) -> Line {
    let l = Line { id, passed, detail };
    println!("[{}] {} {}", if l.passed { "PASS" } else { "FAIL" }, l.id, l.detail);
    l
}

fn errored(id: &'static str, e: HarnessError) -> Line {
    line(id, false, format!("error: {e}"))
}

struct Timed {
    runs: Vec<RunResult>,
    per_seed: Duration,
}

impl Timed {
    fn steps(&self) -> Vec<Option<u64>> {
        self.runs.iter().map(|r| r.steps_to_threshold).collect()
    }

    fn median(&self) -> f64 {
        median_steps(&self.steps())
    }

    fn median_of(&self, n: usize) -> f64 {
        median_steps(&self.steps()[..n])
    }
}

fn fmt_steps(v: &[Option<u64>]) -> String {
    let s: Vec<String> = v
        .iter()
        .map(|x| x.map_or("inf".into(), |s| s.to_string()))
        .collect();
    format!("[{}]", s.join(" "))
}

struct Lab {
    root: PathBuf,
}

impl Lab {
    fn base(&self, task: TaskKind, name: &str) -> ExperimentConfig {
        let mut c = ExperimentConfig::desk();
        c.task = task;
        c.total_env_steps = BUDGET;
        c.stop_at_threshold = true;
        c.output_dir = self.root.join(name);
        c
    }

    fn run(&self, cfg: &ExperimentConfig, cup: bool) -> Result<Timed, HarnessError> {
        let t = Instant::now();
        let runs = if cup { train_cup(cfg)? } else { train_source(cfg)? };
        let per_seed = t.elapsed() / runs.len().max(1) as u32;
        Ok(Timed { runs, per_seed })
    }
}

fn ratio(cup: f64, sac: f64) -> f64 {
    if sac.is_finite() {
        cup / sac
    } else if cup.is_finite() {
        0.0
    } else {
        f64::INFINITY
    }
}

/// `cup <= factor * sac`; with SAC at infinity, CUP must be finite.
fn within(cup: f64, sac: f64, factor: f64) -> bool {
    if sac.is_finite() {
        cup <= factor * sac
    } else {
        cup.is_finite()
    }
}

fn bound_lines(out: &mut Vec<Line>) {
    let cfg = CampaignConfig::default();
    let t = Instant::now();
    match guidance_campaign(&cfg) {
        Ok(s) => {
            let e = t.elapsed();
            let m = s[0].min_margin.min(s[1].min_margin);
            let ok = s.iter().all(|x| x.holds()) && m >= MARGIN && e < Duration::from_secs(30);
            out.push(line(
                "C1",
                ok,
                format!("guidance bound: {} instances, min margin {m:.3e}, {:.2?} (< 30 s)", s[0].instances + s[1].instances, e),
            ));
        }
        Err(e) => out.push(errored("C1", e.into())),
    }
    let t = Instant::now();
    match improvement_campaign(&cfg) {
        Ok(s) => {
            let e = t.elapsed();
            let m = s[0].min_margin.min(s[1].min_margin);
            let ok = s.iter().all(|x| x.holds()) && m >= MARGIN && e < Duration::from_secs(60);
            out.push(line(
                "C2",
                ok,
                format!("improvement bounds: {} instances, min margin {m:.3e}, {:.2?} (< 60 s)", s[0].instances + s[1].instances, e),
            ));
        }
        Err(e) => out.push(errored("C2", e.into())),
    }
    match performance_difference_campaign(&cfg, 50) {
        Ok(worst) => out.push(line(
            "C3",
            worst <= IDENTITY_TOL,
            format!("performance difference identity: 50 triples, max error {worst:.3e} (<= 1e-8)"),
        )),
        Err(e) => out.push(errored("C3", e.into())),
    }
}

fn grad_line(out: &mut Vec<Line>) {
    let t = Instant::now();
    match run_grad_suite(20, 0) {
        Ok(reports) => {
            let e = t.elapsed();
            let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
            let each: Vec<String> = reports
                .iter()
                .map(|r| format!("{} {:.1e}", r.loss, r.max_rel_error))
                .collect();
            let ok = reports.iter().all(|r| r.passed() && r.batches == 20) && worst <= GRAD_TOL && e < Duration::from_secs(60);
            out.push(line("C4", ok, format!("gradient suite on 20 batches: {}, {:.2?} (< 60 s)", each.join(", "), e)));
        }
        Err(e) => out.push(errored("C4", e)),
    }
}

fn identity_line(lab: &Lab, out: &mut Vec<Line>) {
    let run = || -> Result<bool, HarnessError> {
        let mut c = lab.base(TaskKind::Reach, "c8_sac");
        c.total_env_steps = 20_000;
        c.stop_at_threshold = false;
        c.seeds = vec![0, 1];
        let sac = train_source(&c)?;
        c.output_dir = lab.root.join("c8_cup");
        let cup = train_cup(&c)?;
        let mut same = true;
        for (a, b) in sac.iter().zip(&cup) {
            same &= read(&a.metrics_path) == read(&b.metrics_path);
            same &= read(&a.checkpoint_path) == read(&b.checkpoint_path);
        }
        same &= read(&lab.root.join("c8_sac/metrics.csv")) == read(&lab.root.join("c8_cup/metrics.csv"));
        Ok(same)
    };
    match run() {
        Ok(same) => out.push(line("C8", same, "zero-source CUP vs SAC, 2 seeds x 20k steps: metrics and checkpoints byte-identical".into())),
        Err(e) => out.push(errored("C8", e)),
    }
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_default()
}

/// Invariants over every CUP run with sources. Guidance checks and the
/// selection-sum check abort a run on violation, so finished runs passed
/// them on every batch; here the counters confirm nothing was skipped.
fn invariant_problems(runs: &[&RunResult], batch: u64) -> Vec<String> {
    let mut bad = Vec::new();
    for r in runs.iter().filter(|r| r.n_sources > 0) {
        if r.source_forward_calls != r.env_steps * r.n_sources as u64 {
            bad.push(format!(
                "seed {}: {} source passes for {} steps x {} sources",
                r.seed, r.source_forward_calls, r.env_steps, r.n_sources
            ));
        }
        if r.guidance_rows_checked != r.gradient_steps * batch {
            bad.push(format!("seed {}: {} guidance rows checked", r.seed, r.guidance_rows_checked));
        }
        for row in &r.evals {
            let s: f64 = row.selection.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                bad.push(format!("seed {} step {}: fractions sum {s}", r.seed, row.env_step));
            }
        }
    }
    bad
}

fn main() {
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&root);
    let lab = Lab { root };
    let mut out = Vec::new();
    let start = Instant::now();

    bound_lines(&mut out);
    grad_line(&mut out);
    identity_line(&lab, &mut out);

    // SAC baselines; Reach seed 0 doubles as the Reach source
    let sac_reach = lab.run(&lab.base(TaskKind::Reach, "sac_reach"), false);
    match &sac_reach {
        Ok(t) => {
            let m = t.median();
            out.push(line(
                "C5",
                m <= BUDGET as f64 && t.per_seed < Duration::from_secs(600),
                format!("SAC on Reach: steps to 0.9 {} median {m}, {:.1?}/seed (< 10 min)", fmt_steps(&t.steps()), t.per_seed),
            ));
        }
        Err(e) => out.push(line("C5", false, format!("error: {e}"))),
    }
    let push = lab.run(&lab.base(TaskKind::PushBack, "src_push"), false);
    let sac_wall = lab.run(&lab.base(TaskKind::ReachWall, "sac_wall"), false);

    let (sac_reach, push, sac_wall) = match (sac_reach, push, sac_wall) {
        (Ok(a), Ok(b), Ok(c)) => (a, b, c),
        (a, b, c) => {
            for (id, r) in [("C6", &a), ("C7", &b), ("C10", &c)] {
                if let Err(e) = r {
                    println!("[FAIL] {id} baseline error: {e}");
                }
            }
            for id in ["C6", "C7", "C9", "C10"] {
                out.push(line(id, false, "baseline runs failed".into()));
            }
            finish(&out, start);
            return;
        }
    };
    let reach_src = SourceSpec::Checkpoint(sac_reach.runs[0].checkpoint_path.clone());
    let push_src = SourceSpec::Checkpoint(push.runs[0].checkpoint_path.clone());
    let randoms: Vec<SourceSpec> = (101..104).map(SourceSpec::Random).collect();
    println!(
        "       sources: Reach seed 0 at {:?} steps, PushBack seed 0 at {:?} steps",
        sac_reach.runs[0].steps_to_threshold, push.runs[0].steps_to_threshold
    );

    let sac_w = sac_wall.median();
    let mut cup_runs: Vec<Timed> = Vec::new();

    let mut c6 = lab.base(TaskKind::ReachWall, "cup_wall");
    c6.sources = vec![reach_src.clone(), push_src];
    match lab.run(&c6, true) {
        Ok(t) => {
            let m = t.median();
            out.push(line(
                "C6",
                within(m, sac_w, 0.7),
                format!(
                    "ReachWall: CUP {} median {m} vs SAC {} median {sac_w}, ratio {:.2} (<= 0.70)",
                    fmt_steps(&t.steps()),
                    fmt_steps(&sac_wall.steps()),
                    ratio(m, sac_w)
                ),
            ));
            cup_runs.push(t);
        }
        Err(e) => out.push(errored("C6", e)),
    }

    let mut c7a = lab.base(TaskKind::Reach, "cup_reach_random");
    c7a.sources = randoms.clone();
    let mut c7b = lab.base(TaskKind::ReachWall, "cup_wall_random");
    c7b.sources = randoms.iter().cloned().chain([reach_src]).collect();
    match (lab.run(&c7a, true), lab.run(&c7b, true)) {
        (Ok(a), Ok(b)) => {
            let (ma, sa) = (a.median(), sac_reach.median());
            let mb = b.median();
            let ok_a = within(ma, sa, 1.25);
            let ok_b = within(mb, sac_w, 0.85);
            out.push(line(
                "C7",
                ok_a && ok_b,
                format!(
                    "3 random on Reach: {} median {ma} vs SAC {sa}, ratio {:.2} (<= 1.25) {}; 3 random + Reach on ReachWall: {} median {mb}, ratio {:.2} (<= 0.85) {}",
                    fmt_steps(&a.steps()),
                    ratio(ma, sa),
                    if ok_a { "ok" } else { "miss" },
                    fmt_steps(&b.steps()),
                    ratio(mb, sac_w),
                    if ok_b { "ok" } else { "miss" },
                ),
            ));
            cup_runs.push(a);
            cup_runs.push(b);
        }
        (a, b) => {
            let msg: Vec<String> = [a.err(), b.err()].into_iter().flatten().map(|e| e.to_string()).collect();
            out.push(line("C7", false, format!("error: {}", msg.join("; "))));
        }
    }

    // beta1 * beta2 swept at the default beta1 / beta2 ratio
    let ratio_b = c6.cup.beta1 / c6.cup.beta2;
    let default_median = cup_runs.first().filter(|t| t.runs.len() >= 3).map(|t| t.median_of(3));
    let mut sweep_ok = default_median.is_some();
    let mut parts = Vec::new();
    for product in [0.04, 0.2, 1.0] {
        let mut c = c6.clone();
        c.seeds = vec![0, 1, 2];
        c.cup.beta1 = (product * ratio_b).sqrt();
        c.cup.beta2 = (product / ratio_b).sqrt();
        c.output_dir = lab.root.join(format!("sweep_{product}"));
        match lab.run(&c, true) {
            Ok(t) => {
                let m = t.median();
                let ok = default_median.is_some_and(|d| within(m, d, 1.5));
                sweep_ok &= ok;
                parts.push(format!("{product}: {} median {m}{}", fmt_steps(&t.steps()), if ok { "" } else { " (miss)" }));
                cup_runs.push(t);
            }
            Err(e) => {
                sweep_ok = false;
                parts.push(format!("{product}: error {e}"));
            }
        }
    }
    out.push(line(
        "C10",
        sweep_ok,
        format!(
            "beta1*beta2 sweep vs default {} (3 seeds, <= 1.5x): {}",
            default_median.map_or("unavailable".into(), |d| d.to_string()),
            parts.join("; ")
        ),
    ));

    let all: Vec<&RunResult> = cup_runs.iter().flat_map(|t| &t.runs).collect();
    let problems = invariant_problems(&all, c6.batch_size as u64);
    let checked: u64 = all.iter().map(|r| r.guidance_rows_checked).sum();
    out.push(line(
        "C9",
        problems.is_empty() && checked > 0,
        if problems.is_empty() {
            format!("{} CUP runs, {checked} guidance rows checked, one source pass per step per source", all.len())
        } else {
            problems.join("; ")
        },
    ));

    finish(&out, start);
}

fn finish(out: &[Line], start: Instant) {
    let passed = out.iter().filter(|l| l.passed).count();
    println!("acceptance: {passed}/{} passed in {:.1?}", out.len(), start.elapsed());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && passed < out.len() {
        std::process::exit(1);
    }
}
