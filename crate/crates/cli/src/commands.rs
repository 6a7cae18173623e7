//! The subcommands, as library functions returning their results.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use nlpm::barriers::{
    barrier_at, barrier_constant, barrier_envelope, compute_exponents_with, BarrierParams, ExponentSet, FormulaVariant,
};
use nlpm::diagnostics::LedgerTotals;
use nlpm::dynamics::evolve_with;
use nlpm::operators::ModelParams;
use nlpm::theorems::{check_theorem_items_with, CheckVerdict, Status, Suite, SuiteReport, TheoremTolerances};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::output::{self, CSV_SCHEMA_VERSION};

pub const CSV_FILE: &str = "diagnostics.csv";
pub const REPORT_FILE: &str = "report.json";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub platform: String,
    pub wall_time_seconds: f64,
}

impl Provenance {
    fn new(wall_time_seconds: f64) -> Self {
        Provenance {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            platform: format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
            wall_time_seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub time: f64,
    pub file: String,
}

/// Everything `run` leaves in `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub csv_schema_version: u32,
    pub config: RunConfig,
    /// Set when the run stopped before `t_end`; outputs hold the partial run.
    pub run_error: Option<String>,
    pub final_time: f64,
    pub accepted_steps: usize,
    pub rejected_steps: u64,
    pub guard_activations: u64,
    pub ledger: LedgerTotals,
    pub snapshots: Vec<SnapshotEntry>,
    pub verdicts: Vec<CheckVerdict>,
    pub provenance: Provenance,
}

impl RunReport {
    /// The exit-code contract: no run error and no failed or skipped verdict.
    pub fn succeeded(&self) -> bool {
        self.run_error.is_none() && !self.verdicts.iter().any(CheckVerdict::is_failure)
    }
}

/// Runs `config` and writes the CSV, snapshots, echoed config and report
/// into `out`. A run that stops early still writes everything it has.
pub fn cmd_run(config: &RunConfig, out: &Path) -> Result<RunReport> {
    let started = Instant::now();
    let params = config.params()?;
    let initial = config.initial_field()?;
    let options = config.run_options(&params);
    let (run, run_error) =
        match evolve_with(initial, &params, &config.step, config.t_end, &config.snapshot_times, &options) {
            Ok(run) => (run, None),
            Err(failure) => (*failure.partial, Some(failure.error.to_string())),
        };

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join(CONFIG_FILE), config.to_toml())?;
    let csv = fs::File::create(out.join(CSV_FILE))?;
    output::write_csv(std::io::BufWriter::new(csv), &run.records)?;

    let snap_dir = out.join("snapshots");
    if !run.snapshots.is_empty() {
        fs::create_dir_all(&snap_dir)?;
    }
    let mut snapshots = Vec::new();
    for (i, snap) in run.snapshots.iter().enumerate() {
        let name = format!("snapshot_{i:04}.bin");
        output::write_snapshot(&snap_dir.join(&name), &snap.field, snap.time, config)?;
        snapshots.push(SnapshotEntry { time: snap.time, file: format!("snapshots/{name}") });
    }

    let tol = TheoremTolerances { formula_variant: config.formula_variant, ..TheoremTolerances::default() };
    let report = RunReport {
        csv_schema_version: CSV_SCHEMA_VERSION,
        config: config.clone(),
        run_error,
        final_time: run.final_state.time,
        accepted_steps: run.records.len() - 1,
        rejected_steps: run.rejected_steps,
        guard_activations: run.guard_activations,
        ledger: run.records.last().map(|r| r.ledger.clone()).unwrap_or_default(),
        snapshots,
        verdicts: check_theorem_items_with(&run, &params, &tol),
        provenance: Provenance::new(started.elapsed().as_secs_f64()),
    };
    fs::write(out.join(REPORT_FILE), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// Runs every `(name, config)` concurrently into `root/<name>`.
pub fn cmd_sweep(configs: &[(String, RunConfig)], root: &Path) -> Vec<(String, Result<RunReport>)> {
    configs.par_iter().map(|(name, config)| (name.clone(), cmd_run(config, &root.join(name)))).collect()
}

/// Output directory names for a sweep: file stems, made unique by suffix.
pub fn sweep_names(paths: &[PathBuf]) -> Vec<String> {
    let stems: Vec<String> =
        paths.iter().map(|p| p.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned())).collect();
    stems
        .iter()
        .enumerate()
        .map(|(i, s)| if stems.iter().filter(|t| *t == s).count() > 1 { format!("{s}-{i}") } else { s.clone() })
        .collect()
}

/// Runs the lemma suites at their default case counts unless `cases` is set.
pub fn cmd_check(seed: u64, suite: Option<Suite>, cases: Option<usize>) -> Result<Vec<SuiteReport>> {
    let suites: Vec<Suite> = suite.map_or(Suite::ALL.to_vec(), |s| vec![s]);
    suites.into_iter().map(|s| Ok(s.run(seed, cases.unwrap_or_else(|| s.default_cases()))?)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierRow {
    pub time: f64,
    pub barrier: f64,
    pub envelope: f64,
}

/// Barrier parameters for a model, with `C = c_{d,s} c_{d,α}` and `Φ(0) = ε`
/// unless overridden.
pub fn barrier_params(params: &ModelParams, mass: f64, c: Option<f64>, phi0: Option<f64>) -> Result<BarrierParams> {
    let c = c.unwrap_or_else(|| barrier_constant(params));
    let phi0 = phi0.unwrap_or(params.epsilon.min(mass));
    Ok(BarrierParams::new(params.m, mass, c, phi0, params.regime)?)
}

/// `Φ` and its envelope on `points` equispaced times in `(0, t_end]`.
pub fn cmd_barrier(bp: &BarrierParams, t_end: f64, points: usize) -> Result<Vec<BarrierRow>> {
    anyhow::ensure!(t_end.is_finite() && t_end > 0.0, "invalid t_end: need t_end > 0, got {t_end}");
    anyhow::ensure!(points >= 1, "invalid points: need at least one");
    let times: Vec<f64> = (1..=points).map(|i| t_end * i as f64 / points as f64).collect();
    let values = barrier_at(bp, &times);
    Ok(times
        .iter()
        .zip(values)
        .map(|(&time, barrier)| BarrierRow { time, barrier, envelope: barrier_envelope(bp, time) })
        .collect())
}

pub fn cmd_exponents(params: &ModelParams, ps: &[f64], variant: FormulaVariant) -> Result<Vec<ExponentSet>> {
    Ok(ps.iter().map(|&p| compute_exponents_with(params, p, variant)).collect::<Result<Vec<_>, _>>()?)
}

pub fn print_verdicts(w: &mut impl Write, verdicts: &[CheckVerdict]) -> std::io::Result<()> {
    writeln!(w, "{:<30} {:<15} {:>12}", "check", "status", "margin")?;
    for v in verdicts {
        let status = match v.status {
            Status::Passed => "passed",
            Status::Failed => "FAILED",
            Status::Skipped => "skipped",
            Status::NotApplicable => "n/a",
        };
        writeln!(w, "{:<30} {:<15} {:>12.4e}", v.name, status, v.margin)?;
    }
    Ok(())
}

pub fn print_suites(w: &mut impl Write, reports: &[SuiteReport]) -> std::io::Result<()> {
    writeln!(w, "{:<20} {:>8} {:>8} {:>14}  result", "suite", "cases", "passed", "worst margin")?;
    for r in reports {
        let result = if r.all_passed() { "PASS" } else { "FAIL" };
        writeln!(w, "{:<20} {:>8} {:>8} {:>14.4e}  {result}", r.suite, r.cases, r.passed, r.worst_margin)?;
    }
    Ok(())
}

pub fn print_exponents(w: &mut impl Write, sets: &[ExponentSet]) -> std::io::Result<()> {
    writeln!(w, "{:>8} {:>10} {:>10} {:>10} {:>10}", "p", "gamma", "delta_p", "zeta_p", "delta_fd")?;
    for e in sets {
        writeln!(w, "{:>8} {:>10.4} {:>10.4} {:>10.4} {:>10.4}", e.p, e.gamma, e.delta_p, e.zeta_p, e.delta_fd)?;
    }
    Ok(())
}

pub fn print_barrier(w: &mut impl Write, rows: &[BarrierRow]) -> std::io::Result<()> {
    writeln!(w, "{:>14} {:>14} {:>14}", "time", "barrier", "envelope")?;
    for r in rows {
        writeln!(w, "{:>14.6e} {:>14.6e} {:>14.6e}", r.time, r.barrier, r.envelope)?;
    }
    Ok(())
}

/// Writes serializable rows as CSV with a header taken from the field names.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
