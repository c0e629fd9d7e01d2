//! Episode × solver matrix driven by a TOML file, with report emission.
//!
//! Layout under the output directory:
//! - `reports/<solver>_ep<k>.jsonl`: one [`StepRecord`] per line.
//! - `summary.json`: per-solver aggregates over feasible episodes.
//! - `histograms/<solver>.csv`: iteration counts of contact-involved steps.
//! - `timeseries/<solver>_ep<k>.csv` and `timing.json`: wall-clock data,
//!   kept apart so the files above are reproducible byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::episode::{simulate_episode, EpisodeConfig, EpisodeReport};
use super::plant::WallConfig;
use super::solver::{SolverContext, SolverRegistry};
use crate::cuts::CutStore;
use crate::error::{Error, Result};
use crate::gbd::GbdConfig;
use crate::mld::CartPoleParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    /// Episode `k` uses seed `seed + k`.
    pub seed: u64,
    pub episodes: usize,
    pub steps: usize,
    pub solvers: Vec<String>,
    /// Failed solves tolerated before the run reports a nonzero exit.
    pub failure_budget: usize,
    pub disturbance_sigma: f64,
    /// Initial state, angles in radians.
    pub x0: [f64; 4],
    pub model: CartPoleParams,
    pub wall: WallConfig,
    pub gbd: GbdConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        let ep = EpisodeConfig::default();
        Self {
            seed: ep.seed,
            episodes: 1,
            steps: ep.steps,
            solvers: vec!["gbd_warm".into(), "gbd_cold".into()],
            failure_budget: 0,
            disturbance_sigma: ep.disturbance_sigma,
            x0: ep.x0,
            model: ep.params,
            wall: ep.wall,
            gbd: GbdConfig::default(),
        }
    }
}

impl SuiteConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.disturbance_sigma.is_nan() || self.disturbance_sigma < 0.0 {
            return Err(Error::Config("disturbance_sigma must be non-negative".into()));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("x0 must be finite".into()));
        }
        self.model.validate()?;
        self.gbd.validate()
    }

    pub fn episode(&self, k: usize) -> EpisodeConfig {
        EpisodeConfig {
            seed: self.seed.wrapping_add(k as u64),
            steps: self.steps,
            params: self.model.clone(),
            disturbance_sigma: self.disturbance_sigma,
            wall: self.wall.clone(),
            x0: self.x0,
        }
    }
}

/// Aggregates for one solver over the episodes kept.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub episodes_run: usize,
    /// Episodes with a proven-infeasible step; excluded from the rest.
    pub episodes_infeasible: usize,
    pub steps: usize,
    pub contact_steps: usize,
    pub failures: usize,
    pub mean_iterations: f64,
    pub mean_iterations_contact: f64,
    /// Share of contact-involved steps solved within five iterations.
    pub contact_within_5: f64,
    pub lp_count: usize,
    pub qp_count: usize,
    /// `histogram[i]` counts contact-involved steps taking `i` iterations.
    pub histogram: Vec<usize>,
    pub final_cuts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub solver: String,
    pub episode: usize,
    pub seed: u64,
    pub infeasible: bool,
    pub failures: usize,
    pub contact_steps: usize,
    pub histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryMeta {
    pub version: String,
    pub config: SuiteConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub meta: SummaryMeta,
    pub solvers: BTreeMap<String, SolverSummary>,
    pub episodes: Vec<EpisodeSummary>,
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub summary: Summary,
    pub failures: usize,
    pub reports: Vec<EpisodeReport>,
    /// Warm store after the last `gbd_warm` episode.
    pub store: Option<CutStore>,
}

impl SuiteOutcome {
    pub fn budget_exceeded(&self) -> bool {
        self.failures > self.summary.meta.config.failure_budget
    }

    pub fn exit_code(&self) -> i32 {
        i32::from(self.budget_exceeded())
    }
}

fn histogram(report: &EpisodeReport) -> Vec<usize> {
    let mut h: Vec<usize> = Vec::new();
    for r in report.records.iter().filter(|r| r.contact_involved) {
        if h.len() <= r.iterations {
            h.resize(r.iterations + 1, 0);
        }
        h[r.iterations] += 1;
    }
    h
}

fn merge(into: &mut Vec<usize>, h: &[usize]) {
    if into.len() < h.len() {
        into.resize(h.len(), 0);
    }
    for (a, b) in into.iter_mut().zip(h) {
        *a += b;
    }
}

fn summarize(reports: &[(usize, EpisodeReport)]) -> SolverSummary {
    let mut s = SolverSummary {
        episodes_run: reports.len(),
        ..Default::default()
    };
    let (mut it_sum, mut it_contact, mut within) = (0usize, 0usize, 0usize);
    for (_, r) in reports {
        s.failures += r.failures();
        if r.infeasible() {
            s.episodes_infeasible += 1;
            continue;
        }
        merge(&mut s.histogram, &histogram(r));
        for rec in &r.records {
            s.steps += 1;
            it_sum += rec.iterations;
            s.lp_count += rec.lp_count;
            s.qp_count += rec.qp_count;
            if rec.contact_involved {
                s.contact_steps += 1;
                it_contact += rec.iterations;
                within += usize::from(rec.iterations <= 5);
            }
        }
        s.final_cuts.push(r.records.last().map_or(0, |rec| rec.cuts_in_store));
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    s.mean_iterations = ratio(it_sum, s.steps);
    s.mean_iterations_contact = ratio(it_contact, s.contact_steps);
    s.contact_within_5 = ratio(within, s.contact_steps);
    s
}

fn create_dir(p: &Path) -> Result<PathBuf> {
    fs::create_dir_all(p)?;
    Ok(p.to_path_buf())
}

fn write_report(path: &Path, report: &EpisodeReport) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for rec in &report.records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn write_histogram(path: &Path, h: &[usize]) -> Result<()> {
    let mut s = String::from("bin_low,bin_high,count\n");
    for (i, c) in h.iter().enumerate().skip(1) {
        s.push_str(&format!("{i},{},{c}\n", i + 1));
    }
    fs::write(path, s)?;
    Ok(())
}

fn write_timeseries(path: &Path, report: &EpisodeReport) -> Result<()> {
    let mut s = String::from("t,hz,cuts\n");
    for (rec, wt) in report.records.iter().zip(&report.wall_times) {
        let hz = if *wt > 0.0 { 1.0 / wt } else { f64::INFINITY };
        s.push_str(&format!("{},{hz},{}\n", rec.time, rec.cuts_in_store));
    }
    fs::write(path, s)?;
    Ok(())
}

#[derive(Serialize)]
struct Timing {
    solver: String,
    episode: usize,
    total_seconds: f64,
    mean_hz: f64,
}

/// Runs every solver on every episode and writes all output files. Each
/// `gbd_warm` episode starts from the store the previous one ended with,
/// the first from `warm_store` when given.
pub fn run_suite(
    cfg: &SuiteConfig,
    out: &Path,
    registry: &SolverRegistry,
    warm_store: Option<CutStore>,
) -> Result<SuiteOutcome> {
    cfg.validate()?;
    if let Some(bad) = cfg.solvers.iter().find(|s| !registry.contains(s)) {
        return Err(Error::UnknownSolver(bad.clone()));
    }
    let problem = cfg.model.problem()?;
    if let Some(s) = &warm_store {
        s.check_problem(&problem)?;
    }
    let reports_dir = create_dir(&out.join("reports"))?;
    let hist_dir = create_dir(&out.join("histograms"))?;
    let ts_dir = create_dir(&out.join("timeseries"))?;

    let mut carried = warm_store;
    let mut by_solver: BTreeMap<String, Vec<(usize, EpisodeReport)>> = BTreeMap::new();
    let mut timing = Vec::new();
    for name in &cfg.solvers {
        let runs = by_solver.entry(name.clone()).or_default();
        for k in 0..cfg.episodes {
            let ep = cfg.episode(k);
            let ctx = SolverContext {
                problem: &problem,
                gbd: &cfg.gbd,
                warm_store: carried.as_ref(),
            };
            let mut solver = registry.create(name, &ctx)?;
            let report = simulate_episode(&ep, &problem, solver.as_mut())?;
            if let Some(s) = solver.store() {
                carried = Some(s.clone());
            }
            if report.infeasible() {
                warn!("{name} episode {k} (seed {}) hit an infeasible step; excluded from aggregates", ep.seed);
            }
            info!("{name} episode {k}: {} failed solves", report.failures());
            write_report(&reports_dir.join(format!("{name}_ep{k}.jsonl")), &report)?;
            write_timeseries(&ts_dir.join(format!("{name}_ep{k}.csv")), &report)?;
            let total: f64 = report.wall_times.iter().sum();
            timing.push(Timing {
                solver: name.clone(),
                episode: k,
                total_seconds: total,
                mean_hz: if total > 0.0 { report.records.len() as f64 / total } else { 0.0 },
            });
            runs.push((k, report));
        }
    }

    let mut summary = Summary {
        meta: SummaryMeta {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
        },
        solvers: BTreeMap::new(),
        episodes: Vec::new(),
    };
    let mut failures = 0;
    for (name, runs) in &by_solver {
        let s = summarize(runs);
        failures += s.failures;
        if s.episodes_infeasible > 0 {
            warn!("{name}: {} of {} episodes excluded as infeasible", s.episodes_infeasible, s.episodes_run);
        }
        write_histogram(&hist_dir.join(format!("{name}.csv")), &s.histogram)?;
        summary.solvers.insert(name.clone(), s);
        for (k, r) in runs {
            summary.episodes.push(EpisodeSummary {
                solver: name.clone(),
                episode: *k,
                seed: r.seed,
                infeasible: r.infeasible(),
                failures: r.failures(),
                contact_steps: r.records.iter().filter(|x| x.contact_involved).count(),
                histogram: histogram(r),
            });
        }
    }
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    fs::write(out.join("timing.json"), serde_json::to_string_pretty(&timing)?)?;

    Ok(SuiteOutcome {
        summary,
        failures,
        reports: by_solver.into_values().flatten().map(|(_, r)| r).collect(),
        store: carried,
    })
}

/// Loads the config at `path` and runs it with the default registry.
pub fn run_benchmark(path: &Path, out: &Path) -> Result<SuiteOutcome> {
    run_suite(&SuiteConfig::load(path)?, out, &SolverRegistry::default(), None)
}
