//! Per-run observation log, CIPG/CILG curves, metrics, and their
//! deterministic text serializations.
//!
//! CIPG curves carry one point per affected scan index. A cell classified as
//! type `k` puts its probability on curve `k` (and on any co-infection curves)
//! and an explicit zero on every other curve that exists at that point. The
//! CILG trait curves are shared by all CIPG curves and cover every observed
//! cell.

use crate::search::Phase;
use crate::sensing::TraitVector;
use crate::world::{CartesianPoint, CellKind, LatticeCoord, TypeId, WorldGrid};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;
use thiserror::Error;

mod plot;

pub use plot::{render_cilg_svg, render_cipg_svg};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("scan index {n} already recorded (last was {last})")]
    DuplicateIndex { n: u64, last: u64 },
    #[error("observation has {found} traits, report expects {expected}")]
    TraitCount { expected: usize, found: usize },
    #[error("unknown output format {0:?}")]
    UnknownFormat(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    Aiam,
    Oam,
}

impl AgentKind {
    pub fn label(self) -> &'static str {
        match self {
            AgentKind::Aiam => "aiam",
            AgentKind::Oam => "oam",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DispenseFlag {
    None,
    Dispensed,
    Withheld,
}

impl DispenseFlag {
    fn label(self) -> &'static str {
        match self {
            DispenseFlag::None => "-",
            DispenseFlag::Dispensed => "dispensed",
            DispenseFlag::Withheld => "withheld",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "-" => Some(DispenseFlag::None),
            "dispensed" => Some(DispenseFlag::Dispensed),
            "withheld" => Some(DispenseFlag::Withheld),
            _ => None,
        }
    }
}

/// One measured cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellObservation {
    pub n: u64,
    pub coord: LatticeCoord,
    pub point: CartesianPoint,
    /// Measured traits on the normalized scale.
    pub traits: TraitVector,
    /// Mean trait level on the 1-10 reporting scale.
    pub avg_l: f64,
    pub cipm_per_type: BTreeMap<TypeId, f64>,
    pub classified_type: Option<TypeId>,
    pub co_types: Vec<TypeId>,
    pub obstacle: bool,
    pub phase: Phase,
    pub dispense: DispenseFlag,
}

impl CellObservation {
    /// `P_n`: the classified type's probability, or the best score when the
    /// cell was not classified.
    pub fn probability(&self) -> f64 {
        match self.classified_type {
            Some(t) => self.cipm_per_type.get(&t).copied().unwrap_or(0.0),
            None => self.cipm_per_type.values().copied().fold(0.0, f64::max),
        }
    }

    pub fn is_affected(&self) -> bool {
        self.classified_type.is_some() && !self.obstacle
    }

    /// Trait levels on the 1-10 scale.
    pub fn levels(&self) -> Vec<f64> {
        self.traits.values().iter().map(|v| 1.0 + 9.0 * v).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CipgCurve {
    pub type_id: TypeId,
    pub points: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CilgCurves {
    /// `traits[m]` holds `(n, L_{n,m})` on the 1-10 scale.
    pub traits: Vec<Vec<(u64, f64)>>,
    pub average: Vec<(u64, f64)>,
}

/// Everything a single agent run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanReport {
    pub agent: AgentKind,
    pub trait_count: usize,
    pub observations: Vec<CellObservation>,
    pub cipg: BTreeMap<TypeId, CipgCurve>,
    pub cilg: CilgCurves,
    pub step_count: u64,
    pub avoidance_steps: u64,
    pub obstacle_encounters: u64,
    pub skipped_cells: u64,
    pub learned_types: usize,
    /// Wall-clock duration; kept out of every serialized artifact.
    pub wall_ms: u128,
    pub metrics: Option<RunMetrics>,
}

impl ScanReport {
    pub fn new(agent: AgentKind, trait_count: usize, initial_types: &[TypeId]) -> Self {
        let cipg = initial_types
            .iter()
            .map(|&t| {
                (
                    t,
                    CipgCurve {
                        type_id: t,
                        points: Vec::new(),
                    },
                )
            })
            .collect();
        Self {
            agent,
            trait_count,
            observations: Vec::new(),
            cipg,
            cilg: CilgCurves {
                traits: vec![Vec::new(); trait_count],
                average: Vec::new(),
            },
            step_count: 0,
            avoidance_steps: 0,
            obstacle_encounters: 0,
            skipped_cells: 0,
            learned_types: 0,
            wall_ms: 0,
            metrics: None,
        }
    }

    /// Appends to the log and updates the curves. A curve that does not yet
    /// exist is started at this point.
    pub fn record_observation(&mut self, obs: CellObservation) -> Result<(), ReportError> {
        if let Some(last) = self.observations.last() {
            if obs.n <= last.n {
                return Err(ReportError::DuplicateIndex {
                    n: obs.n,
                    last: last.n,
                });
            }
        }
        if obs.traits.len() != self.trait_count {
            return Err(ReportError::TraitCount {
                expected: self.trait_count,
                found: obs.traits.len(),
            });
        }
        for (m, level) in obs.levels().into_iter().enumerate() {
            self.cilg.traits[m].push((obs.n, level));
        }
        self.cilg.average.push((obs.n, obs.avg_l));

        if let Some(k) = obs.classified_type {
            let p = obs.probability();
            let mut carriers: HashSet<TypeId> = obs.co_types.iter().copied().collect();
            carriers.insert(k);
            for &t in &carriers {
                self.cipg.entry(t).or_insert_with(|| CipgCurve {
                    type_id: t,
                    points: Vec::new(),
                });
            }
            for (t, curve) in self.cipg.iter_mut() {
                let value = if carriers.contains(t) { p } else { 0.0 };
                curve.points.push((obs.n, value));
            }
        }
        self.observations.push(obs);
        Ok(())
    }

    pub fn observed_cells(&self) -> usize {
        self.observations.len()
    }
}

/// Per-run summary. `wall_ms` is never serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub agent: AgentKind,
    pub observed_cells: usize,
    pub affected_truth_count: usize,
    pub detected_count: usize,
    pub detection_pct: f64,
    /// Set when the world had no affected cells (percentage reported as 100).
    pub vacuous: bool,
    pub step_count: u64,
    pub avoidance_steps: u64,
    #[serde(skip)]
    pub wall_ms: u128,
    pub per_type_counts: BTreeMap<TypeId, usize>,
    pub obstacle_encounters: u64,
    pub skipped_cells: u64,
    pub learned_types: usize,
    pub dispensed: usize,
    pub withheld: usize,
}

/// Detection is counted over ground-truth infected cells that were observed
/// and given any type.
pub fn compute_metrics(report: &ScanReport, grid: &WorldGrid) -> RunMetrics {
    let affected_truth_count = grid.count_kind(|k| matches!(k, CellKind::Infected(_)));
    let mut detected_count = 0;
    let mut per_type_counts = BTreeMap::new();
    let (mut dispensed, mut withheld) = (0, 0);
    for obs in &report.observations {
        if let Some(t) = obs.classified_type {
            *per_type_counts.entry(t).or_insert(0) += 1;
            let truth = grid.ground_truth_at(obs.coord).map(|g| g.kind);
            if !obs.obstacle && matches!(truth, Ok(CellKind::Infected(_))) {
                detected_count += 1;
            }
        }
        match obs.dispense {
            DispenseFlag::Dispensed => dispensed += 1,
            DispenseFlag::Withheld => withheld += 1,
            DispenseFlag::None => {}
        }
    }
    let vacuous = affected_truth_count == 0;
    let detection_pct = if vacuous {
        100.0
    } else {
        100.0 * detected_count as f64 / affected_truth_count as f64
    };
    RunMetrics {
        agent: report.agent,
        observed_cells: report.observed_cells(),
        affected_truth_count,
        detected_count,
        detection_pct,
        vacuous,
        step_count: report.step_count,
        avoidance_steps: report.avoidance_steps,
        wall_ms: report.wall_ms,
        per_type_counts,
        obstacle_encounters: report.obstacle_encounters,
        skipped_cells: report.skipped_cells,
        learned_types: report.learned_types,
        dispensed,
        withheld,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    ObservationLog,
    CurvesTable,
    MetricsTable,
    PlotSvg,
}

impl FromStr for Format {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "observation-log" | "log" => Ok(Format::ObservationLog),
            "curves-table" | "curves" => Ok(Format::CurvesTable),
            "metrics-table" | "metrics" => Ok(Format::MetricsTable),
            "plot-svg" | "svg" => Ok(Format::PlotSvg),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

pub const OBSERVATION_LOG_HEADER: &str = "n,theta,z,x,y,z_cart,traits,avg_L,classified_type,co_types,cipm_per_type,dispensed,obstacle,phase";
pub const CURVES_HEADER: &str = "curve_id,n,value";
pub const METRICS_HEADER: &str = "agent,observed_cells,affected_truth_count,detected_count,detection_pct,vacuous,step_count,avoidance_steps,obstacle_encounters,skipped_cells,learned_types,dispensed,withheld,per_type_counts";

/// Fixed six-decimal rendering used by every table.
pub fn fmt6(v: f64) -> String {
    let s = format!("{v:.6}");
    // Avoid "-0.000000" so tiny negative rounding noise does not leak.
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn join_types(ids: &[TypeId]) -> String {
    ids.iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

pub fn serialize(report: &ScanReport, format: Format) -> Vec<u8> {
    match format {
        Format::ObservationLog => observation_log(report),
        Format::CurvesTable => curves_table(report),
        Format::MetricsTable => metrics_table(report.metrics.as_slice()),
        Format::PlotSvg => plot::render_report_svg(report),
    }
    .into_bytes()
}

fn observation_log(report: &ScanReport) -> String {
    let mut out = String::new();
    out.push_str(OBSERVATION_LOG_HEADER);
    out.push('\n');
    for o in &report.observations {
        let traits = o
            .levels()
            .into_iter()
            .map(fmt6)
            .collect::<Vec<_>>()
            .join(";");
        let cipm = o
            .cipm_per_type
            .iter()
            .map(|(t, p)| format!("{t}:{}", fmt6(*p)))
            .collect::<Vec<_>>()
            .join(";");
        let classified = o.classified_type.map_or("-".to_string(), |t| t.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            o.n,
            o.coord.theta,
            o.coord.z,
            fmt6(o.point.x),
            fmt6(o.point.y),
            fmt6(o.point.z),
            traits,
            fmt6(o.avg_l),
            classified,
            join_types(&o.co_types),
            cipm,
            o.dispense.label(),
            u8::from(o.obstacle),
            o.phase.as_char(),
        );
    }
    out
}

/// Curve identifiers used in the long-format curves table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CurveId {
    Cipg(TypeId),
    CilgTrait(usize),
    CilgAverage,
}

impl fmt::Display for CurveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurveId::Cipg(t) => write!(f, "cipg:{t}"),
            CurveId::CilgTrait(m) => write!(f, "cilg:t{m}"),
            CurveId::CilgAverage => write!(f, "cilg:avg"),
        }
    }
}

impl FromStr for CurveId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(t) = s.strip_prefix("cipg:") {
            return t
                .parse()
                .map(CurveId::Cipg)
                .map_err(|e| format!("{s}: {e}"));
        }
        if s == "cilg:avg" {
            return Ok(CurveId::CilgAverage);
        }
        if let Some(m) = s.strip_prefix("cilg:t") {
            return m
                .parse()
                .map(CurveId::CilgTrait)
                .map_err(|e| format!("{s}: {e}"));
        }
        Err(format!("unknown curve id {s:?}"))
    }
}

fn curves_table(report: &ScanReport) -> String {
    let mut out = String::new();
    out.push_str(CURVES_HEADER);
    out.push('\n');
    let mut row = |id: CurveId, n: u64, v: f64| {
        let _ = writeln!(out, "{id},{n},{}", fmt6(v));
    };
    for curve in report.cipg.values() {
        for &(n, p) in &curve.points {
            row(CurveId::Cipg(curve.type_id), n, p);
        }
    }
    for (m, points) in report.cilg.traits.iter().enumerate() {
        for &(n, l) in points {
            row(CurveId::CilgTrait(m), n, l);
        }
    }
    for &(n, l) in &report.cilg.average {
        row(CurveId::CilgAverage, n, l);
    }
    out
}

pub fn metrics_table(rows: &[RunMetrics]) -> String {
    let mut out = String::new();
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for m in rows {
        let per_type = m
            .per_type_counts
            .iter()
            .map(|(t, c)| format!("{t}:{c}"))
            .collect::<Vec<_>>()
            .join(";");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            m.agent,
            m.observed_cells,
            m.affected_truth_count,
            m.detected_count,
            fmt6(m.detection_pct),
            u8::from(m.vacuous),
            m.step_count,
            m.avoidance_steps,
            m.obstacle_encounters,
            m.skipped_cells,
            m.learned_types,
            m.dispensed,
            m.withheld,
            per_type,
        );
    }
    out
}

/// One row of a parsed curves table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub curve: CurveId,
    pub n: u64,
    pub value: f64,
}

fn parse_err(line: usize, message: impl Into<String>) -> ReportError {
    ReportError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_num<T: FromStr>(field: &str, line: usize, what: &str) -> Result<T, ReportError>
where
    T::Err: fmt::Display,
{
    field
        .parse()
        .map_err(|e| parse_err(line, format!("bad {what} {field:?}: {e}")))
}

pub fn parse_curves_table(text: &str) -> Result<Vec<CurveRow>, ReportError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CURVES_HEADER => {}
        _ => return Err(parse_err(1, "missing curves header")),
    }
    lines
        .map(|(i, line)| {
            let ln = i + 1;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(parse_err(ln, "expected 3 fields"));
            }
            Ok(CurveRow {
                curve: fields[0].parse().map_err(|e: String| parse_err(ln, e))?,
                n: parse_num(fields[1], ln, "index")?,
                value: parse_num(fields[2], ln, "value")?,
            })
        })
        .collect()
}

/// Observation as read back from the log (levels on the 1-10 scale).
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedObservation {
    pub n: u64,
    pub coord: LatticeCoord,
    pub point: (f64, f64, f64),
    pub levels: Vec<f64>,
    pub avg_l: f64,
    pub classified_type: Option<TypeId>,
    pub co_types: Vec<TypeId>,
    pub cipm_per_type: BTreeMap<TypeId, f64>,
    pub dispense: DispenseFlag,
    pub obstacle: bool,
    pub phase: Phase,
}

pub fn parse_observation_log(text: &str) -> Result<Vec<LoggedObservation>, ReportError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == OBSERVATION_LOG_HEADER => {}
        _ => return Err(parse_err(1, "missing observation log header")),
    }
    let list = |s: &str| -> Vec<String> {
        if s.is_empty() {
            Vec::new()
        } else {
            s.split(';').map(str::to_string).collect()
        }
    };
    lines
        .map(|(i, line)| {
            let ln = i + 1;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 14 {
                return Err(parse_err(
                    ln,
                    format!("expected 14 fields, got {}", f.len()),
                ));
            }
            let levels = list(f[6])
                .iter()
                .map(|v| parse_num(v, ln, "trait"))
                .collect::<Result<_, _>>()?;
            let classified_type = match f[8] {
                "-" => None,
                t => Some(parse_num(t, ln, "type")?),
            };
            let co_types = list(f[9])
                .iter()
                .map(|v| parse_num(v, ln, "type"))
                .collect::<Result<_, _>>()?;
            let mut cipm_per_type = BTreeMap::new();
            for entry in list(f[10]) {
                let (t, p) = entry
                    .split_once(':')
                    .ok_or_else(|| parse_err(ln, format!("bad cipm entry {entry:?}")))?;
                cipm_per_type.insert(parse_num(t, ln, "type")?, parse_num(p, ln, "cipm")?);
            }
            let phase = match f[13] {
                "V" => Phase::Vertical,
                "H" => Phase::Horizontal,
                other => return Err(parse_err(ln, format!("bad phase {other:?}"))),
            };
            Ok(LoggedObservation {
                n: parse_num(f[0], ln, "index")?,
                coord: LatticeCoord::new(parse_num(f[1], ln, "theta")?, parse_num(f[2], ln, "z")?),
                point: (
                    parse_num(f[3], ln, "x")?,
                    parse_num(f[4], ln, "y")?,
                    parse_num(f[5], ln, "z")?,
                ),
                levels,
                avg_l: parse_num(f[7], ln, "avg_L")?,
                classified_type,
                co_types,
                cipm_per_type,
                dispense: DispenseFlag::parse(f[11])
                    .ok_or_else(|| parse_err(ln, format!("bad dispense flag {:?}", f[11])))?,
                obstacle: match f[12] {
                    "0" => false,
                    "1" => true,
                    other => return Err(parse_err(ln, format!("bad obstacle flag {other:?}"))),
                },
                phase,
            })
        })
        .collect()
}
