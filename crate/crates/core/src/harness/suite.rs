//! Runs scenarios, writes per-run artifacts and builds the comparison table.
//!
//! Layout under the output directory:
//!
//! ```text
//! <scenario>/rep<r>/<agent>/observations.log
//! <scenario>/rep<r>/<agent>/curves.csv
//! <scenario>/rep<r>/<agent>/metrics.csv
//! <scenario>/rep<r>/<agent>/plots/cipg_type<t>.svg   (with plots enabled)
//! <scenario>/rep<r>/<agent>/plots/cilg.svg
//! runs.{csv,json}
//! comparison.{csv,json}
//! ```

use super::config::ScenarioSpec;
use crate::agents::{run_aia, run_oam, AgentError};
use crate::report::{
    compute_metrics, fmt6, metrics_table, render_cilg_svg, render_cipg_svg, serialize, AgentKind,
    Format, RunMetrics, ScanReport, METRICS_HEADER,
};
use crate::world::{generate_world, WorldError};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

/// Scenarios where an agent reaches this mean detection percentage count as
/// "detected".
pub const DETECTED_THRESHOLD_PCT: f64 = 50.0;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("{scenario} rep {repetition}: world generation failed: {source}")]
    World {
        scenario: String,
        repetition: usize,
        source: WorldError,
    },
    #[error("{scenario} rep {repetition} ({agent}): {source}")]
    Agent {
        scenario: String,
        repetition: usize,
        agent: AgentKind,
        source: AgentError,
    },
    #[error("{scenario} rep {repetition}: run panicked: {message}")]
    Panic {
        scenario: String,
        repetition: usize,
        message: String,
    },
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{} of {total} runs failed; first: {first}", .failures)]
    Failed {
        failures: usize,
        total: usize,
        first: Box<SuiteError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentSelection {
    Aiam,
    Oam,
    Both,
}

impl AgentSelection {
    pub fn runs(self, kind: AgentKind) -> bool {
        matches!(
            (self, kind),
            (AgentSelection::Both, _)
                | (AgentSelection::Aiam, AgentKind::Aiam)
                | (AgentSelection::Oam, AgentKind::Oam)
        )
    }
}

impl FromStr for AgentSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "aiam" => Ok(Self::Aiam),
            "oam" => Ok(Self::Oam),
            "both" => Ok(Self::Both),
            other => Err(format!(
                "unknown agent `{other}` (expected aiam, oam or both)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    /// Where artifacts go; `None` runs without touching the filesystem.
    pub out_dir: Option<PathBuf>,
    pub agents: AgentSelection,
    pub format: OutputFormat,
    pub emit_plots: bool,
    /// Run (scenario, repetition) pairs on the rayon pool.
    pub parallel: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            out_dir: None,
            agents: AgentSelection::Both,
            format: OutputFormat::Csv,
            emit_plots: false,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub scenario: String,
    pub repetition: usize,
    pub seed: u64,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Winner {
    #[serde(rename = "AIAM")]
    Aiam,
    #[serde(rename = "OAM")]
    Oam,
    #[serde(rename = "tie")]
    Tie,
}

impl Winner {
    pub fn label(self) -> &'static str {
        match self {
            Winner::Aiam => "AIAM",
            Winner::Oam => "OAM",
            Winner::Tie => "tie",
        }
    }
}

/// One scenario, averaged over its repetitions. Fields for an agent that was
/// not run are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub scenario: String,
    pub known_entities: usize,
    pub unknown_entities: usize,
    pub repetitions: usize,
    pub detected_aiam: Option<bool>,
    pub detected_oam: Option<bool>,
    /// Lower mean step count wins.
    pub metric_b_winner: Option<Winner>,
    /// OAM mean detection percentage.
    pub metric_c: Option<f64>,
    /// AIAM mean detection percentage.
    pub metric_d: Option<f64>,
    pub mean_steps_aiam: Option<f64>,
    pub mean_steps_oam: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub rows: Vec<ComparisonRow>,
    /// Sorted by scenario (file order), repetition, then agent.
    pub runs: Vec<RunRecord>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SuiteError + '_ {
    move |source| SuiteError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), SuiteError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}

fn write_run(dir: &Path, report: &ScanReport, emit_plots: bool) -> Result<(), SuiteError> {
    write_file(
        &dir.join("observations.log"),
        &serialize(report, Format::ObservationLog),
    )?;
    write_file(
        &dir.join("curves.csv"),
        &serialize(report, Format::CurvesTable),
    )?;
    write_file(
        &dir.join("metrics.csv"),
        &serialize(report, Format::MetricsTable),
    )?;
    if emit_plots {
        let plots = dir.join("plots");
        for curve in report.cipg.values() {
            let name = format!("cipg_type{}.svg", curve.type_id);
            write_file(&plots.join(name), render_cipg_svg(curve).as_bytes())?;
        }
        write_file(
            &plots.join("cilg.svg"),
            render_cilg_svg(&report.cilg).as_bytes(),
        )?;
    }
    Ok(())
}

fn run_one(
    spec: &ScenarioSpec,
    repetition: usize,
    opts: &SuiteOptions,
) -> Result<Vec<RunRecord>, SuiteError> {
    let world_spec = spec.world_for(repetition);
    let grid = generate_world(&world_spec).map_err(|source| SuiteError::World {
        scenario: spec.name.clone(),
        repetition,
        source,
    })?;
    let agent_spec = spec.agent_for(repetition);
    let mut records = Vec::new();
    for kind in [AgentKind::Aiam, AgentKind::Oam] {
        if !opts.agents.runs(kind) {
            continue;
        }
        let result = match kind {
            AgentKind::Aiam => run_aia(&grid, &agent_spec),
            AgentKind::Oam => run_oam(&grid, &agent_spec),
        };
        let (mut report, _) = result.map_err(|source| SuiteError::Agent {
            scenario: spec.name.clone(),
            repetition,
            agent: kind,
            source,
        })?;
        let metrics = compute_metrics(&report, &grid);
        report.metrics = Some(metrics.clone());
        if let Some(out) = &opts.out_dir {
            let dir = out
                .join(&spec.name)
                .join(format!("rep{repetition}"))
                .join(kind.label());
            write_run(&dir, &report, opts.emit_plots)?;
        }
        records.push(RunRecord {
            scenario: spec.name.clone(),
            repetition,
            seed: world_spec.seed,
            metrics,
        });
    }
    Ok(records)
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "non-string panic payload".to_string())
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn compare(spec: &ScenarioSpec, runs: &[RunRecord]) -> ComparisonRow {
    let of = |kind: AgentKind| runs.iter().filter(move |r| r.metrics.agent == kind);
    let pct = |kind| mean(of(kind).map(|r| r.metrics.detection_pct));
    let steps = |kind| mean(of(kind).map(|r| r.metrics.step_count as f64));
    let (metric_d, metric_c) = (pct(AgentKind::Aiam), pct(AgentKind::Oam));
    let (mean_steps_aiam, mean_steps_oam) = (steps(AgentKind::Aiam), steps(AgentKind::Oam));
    let metric_b_winner = match (mean_steps_aiam, mean_steps_oam) {
        (Some(a), Some(o)) if a < o => Some(Winner::Aiam),
        (Some(a), Some(o)) if o < a => Some(Winner::Oam),
        (Some(_), Some(_)) => Some(Winner::Tie),
        _ => None,
    };
    ComparisonRow {
        scenario: spec.name.clone(),
        known_entities: spec.known_entities,
        unknown_entities: spec.unknown_entities,
        repetitions: spec.repetitions,
        detected_aiam: metric_d.map(|p| p >= DETECTED_THRESHOLD_PCT),
        detected_oam: metric_c.map(|p| p >= DETECTED_THRESHOLD_PCT),
        metric_b_winner,
        metric_c,
        metric_d,
        mean_steps_aiam,
        mean_steps_oam,
    }
}

pub const COMPARISON_HEADER: &str = "scenario,known_entities,unknown_entities,repetitions,detected_aiam,detected_oam,metric_b_winner,metric_c_oam_pct,metric_d_aiam_pct,mean_steps_aiam,mean_steps_oam";

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let opt = |v: Option<f64>| v.map(fmt6).unwrap_or_else(|| "-".to_string());
    let yes_no = |v: Option<bool>| match v {
        Some(true) => "yes",
        Some(false) => "no",
        None => "-",
    };
    let mut out = format!("{COMPARISON_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.known_entities,
            r.unknown_entities,
            r.repetitions,
            yes_no(r.detected_aiam),
            yes_no(r.detected_oam),
            r.metric_b_winner.map_or("-", Winner::label),
            opt(r.metric_c),
            opt(r.metric_d),
            opt(r.mean_steps_aiam),
            opt(r.mean_steps_oam),
        );
    }
    out
}

pub fn runs_csv(runs: &[RunRecord]) -> String {
    let mut out = format!("scenario,repetition,seed,{METRICS_HEADER}\n");
    for r in runs {
        let table = metrics_table(std::slice::from_ref(&r.metrics));
        for line in table.lines().skip(1) {
            let _ = writeln!(out, "{},{},{},{line}", r.scenario, r.repetition, r.seed);
        }
    }
    out
}

pub fn comparison_json(rows: &[ComparisonRow]) -> String {
    serde_json::to_string_pretty(rows).expect("comparison rows serialize") + "\n"
}

pub fn runs_json(runs: &[RunRecord]) -> String {
    serde_json::to_string_pretty(runs).expect("run records serialize") + "\n"
}

/// Renders the comparison table in the requested format.
pub fn render_comparison(rows: &[ComparisonRow], format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => comparison_csv(rows),
        OutputFormat::Json => comparison_json(rows),
    }
}

/// Runs every repetition of every scenario with both agents on the same
/// world. Per-run artifacts are written as runs finish; the aggregate files
/// are written only when every run succeeded.
pub fn run_suite(specs: &[ScenarioSpec], opts: &SuiteOptions) -> Result<SuiteOutcome, SuiteError> {
    let jobs: Vec<(usize, usize)> = specs
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (0..s.repetitions).map(move |r| (i, r)))
        .collect();
    let job = |&(i, r): &(usize, usize)| {
        let spec = &specs[i];
        catch_unwind(AssertUnwindSafe(|| run_one(spec, r, opts))).unwrap_or_else(|p| {
            Err(SuiteError::Panic {
                scenario: spec.name.clone(),
                repetition: r,
                message: panic_message(p),
            })
        })
    };
    let results: Vec<Result<Vec<RunRecord>, SuiteError>> = if opts.parallel {
        jobs.par_iter().map(job).collect()
    } else {
        jobs.iter().map(job).collect()
    };

    let total = results.len();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(records) => runs.extend(records),
            Err(e) => failures.push(e),
        }
    }
    if !failures.is_empty() {
        let n = failures.len();
        let first = failures.swap_remove(0);
        return Err(SuiteError::Failed {
            failures: n,
            total,
            first: Box::new(first),
        });
    }

    let rows: Vec<ComparisonRow> = specs
        .iter()
        .map(|s| {
            let mine: Vec<RunRecord> = runs
                .iter()
                .filter(|r| r.scenario == s.name)
                .cloned()
                .collect();
            compare(s, &mine)
        })
        .collect();

    if let Some(out) = &opts.out_dir {
        let ext = opts.format.extension();
        let (cmp, run_table) = match opts.format {
            OutputFormat::Csv => (comparison_csv(&rows), runs_csv(&runs)),
            OutputFormat::Json => (comparison_json(&rows), runs_json(&runs)),
        };
        write_file(&out.join(format!("comparison.{ext}")), cmp.as_bytes())?;
        write_file(&out.join(format!("runs.{ext}")), run_table.as_bytes())?;
    }
    Ok(SuiteOutcome { rows, runs })
}
