//! The scanning automaton (AIAM) and the obstacle-avoidance baseline (OAM).
//!
//! Both agents see the world only through a [`Sensor`]: an obstacle probe and
//! a one-shot trait measurement at the current target cell.
//!
//! Step accounting: moving to a target costs the wrapped Chebyshev distance
//! from the previous target (the first target costs 1), and each obstacle
//! encounter adds its detour cost on top.

use crate::report::{AgentKind, CellObservation, DispenseFlag, ReportError, ScanReport};
use crate::search::{SearchError, SearchState, TargetVerdict};
use crate::sensing::{
    average_l, cipm, to_scale_1_10, SensingError, Sensor, SignatureLibrary, TraitVector, Verdict,
    DEFAULT_DUAL_MARGIN,
};
use crate::world::{chebyshev_distance, LatticeCoord, TypeId, WorldGrid};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("invalid agent parameters: {0}")]
    InvalidSpec(String),
    #[error("treatment already dispensed at {0}")]
    DoubleDispense(LatticeCoord),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

/// Agent parameters shared by both agents. The OAM ignores the novelty and
/// memory settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub healthy_signature: Vec<f64>,
    pub known_signatures: BTreeMap<TypeId, Vec<f64>>,
    /// Overrides the derived novelty threshold.
    pub novelty_threshold: Option<f64>,
    pub dual_margin: f64,
    pub payload_units: u64,
    pub sensor_noise: f64,
    pub seed: u64,
    /// Detour cost of an unfamiliar obstacle (and of every OAM encounter).
    pub d_avoid: u64,
    /// Detour cost of an obstacle matching one in memory.
    pub d_avoid_known: u64,
    /// Helix cells the OAM passes blind after each obstacle.
    pub s_skip: usize,
    /// Signature distance within which two obstacles count as the same.
    pub match_tolerance: f64,
}

impl AgentSpec {
    pub fn new(healthy_signature: Vec<f64>, known_signatures: BTreeMap<TypeId, Vec<f64>>) -> Self {
        Self {
            healthy_signature,
            known_signatures,
            novelty_threshold: None,
            dual_margin: DEFAULT_DUAL_MARGIN,
            payload_units: 1000,
            sensor_noise: 0.0,
            seed: 0,
            d_avoid: 5,
            d_avoid_known: 1,
            s_skip: 3,
            match_tolerance: 0.05,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.d_avoid_known >= self.d_avoid {
            return Err(AgentError::InvalidSpec(format!(
                "d_avoid_known ({}) must be below d_avoid ({})",
                self.d_avoid_known, self.d_avoid
            )));
        }
        if !(self.match_tolerance.is_finite() && self.match_tolerance > 0.0) {
            return Err(AgentError::InvalidSpec(format!(
                "match_tolerance must be positive, got {}",
                self.match_tolerance
            )));
        }
        if !(self.dual_margin.is_finite() && self.dual_margin >= 0.0) {
            return Err(AgentError::InvalidSpec(format!(
                "dual_margin must be non-negative, got {}",
                self.dual_margin
            )));
        }
        Ok(())
    }

    pub fn library(&self) -> Result<SignatureLibrary, AgentError> {
        let healthy = TraitVector::normalized(self.healthy_signature.clone())?;
        let known = self
            .known_signatures
            .iter()
            .map(|(&id, sig)| Ok((id, TraitVector::normalized(sig.clone())?)))
            .collect::<Result<Vec<_>, SensingError>>()?;
        let mut lib = SignatureLibrary::new(healthy, known)?.with_dual_margin(self.dual_margin);
        if let Some(tau) = self.novelty_threshold {
            lib = lib.with_novelty_threshold(tau)?;
        }
        Ok(lib)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleEntry {
    pub signature: TraitVector,
    pub type_id: TypeId,
    /// Cost of passing this obstacle again.
    pub avoid_cost_steps: u64,
    pub encounters: u64,
}

/// Obstacles met so far, matched by signature distance.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleMemory {
    entries: Vec<ObstacleEntry>,
    match_tolerance: f64,
}

impl ObstacleMemory {
    pub fn new(match_tolerance: f64) -> Self {
        Self {
            entries: Vec::new(),
            match_tolerance,
        }
    }

    pub fn entries(&self) -> &[ObstacleEntry] {
        &self.entries
    }

    /// Closest stored entry within the match tolerance.
    pub fn lookup(&self, signature: &TraitVector) -> Result<Option<usize>, SensingError> {
        let mut best: Option<(usize, f64)> = None;
        for (i, e) in self.entries.iter().enumerate() {
            let d = e.signature.distance(signature)?;
            if d <= self.match_tolerance && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        Ok(best.map(|(i, _)| i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DispenseStatus {
    Dispensed,
    Withheld,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispenseEvent {
    pub coord: LatticeCoord,
    pub type_id: TypeId,
    pub status: DispenseStatus,
}

/// Treatment material carried by the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Payload {
    units_remaining: u64,
    dispense_log: Vec<DispenseEvent>,
    served: HashSet<LatticeCoord>,
}

impl Payload {
    pub fn new(units: u64) -> Self {
        Self {
            units_remaining: units,
            dispense_log: Vec::new(),
            served: HashSet::new(),
        }
    }

    pub fn units_remaining(&self) -> u64 {
        self.units_remaining
    }

    pub fn dispense_log(&self) -> &[DispenseEvent] {
        &self.dispense_log
    }

    /// Passes one unit to the cell at `coord`, or logs a withheld event once
    /// the payload is empty. At most one event per cell.
    pub fn dispense(
        &mut self,
        coord: LatticeCoord,
        type_id: TypeId,
    ) -> Result<DispenseStatus, AgentError> {
        if !self.served.insert(coord) {
            return Err(AgentError::DoubleDispense(coord));
        }
        let status = if self.units_remaining > 0 {
            self.units_remaining -= 1;
            DispenseStatus::Dispensed
        } else {
            DispenseStatus::Withheld
        };
        self.dispense_log.push(DispenseEvent {
            coord,
            type_id,
            status,
        });
        Ok(status)
    }
}

#[derive(Debug, Clone)]
pub struct AgentState {
    pub search: SearchState,
    pub library: SignatureLibrary,
    pub memory: ObstacleMemory,
    pub payload: Payload,
    pub step_count: u64,
    pub avoidance_steps: u64,
    pub obstacle_encounters: u64,
    /// Cells passed over without observation (OAM detours).
    pub skipped: Vec<LatticeCoord>,
    d_avoid: u64,
    d_avoid_known: u64,
    theta_size: usize,
    position: Option<LatticeCoord>,
}

impl AgentState {
    pub fn new(
        search: SearchState,
        library: SignatureLibrary,
        spec: &AgentSpec,
        theta_size: usize,
    ) -> Self {
        Self {
            search,
            library,
            memory: ObstacleMemory::new(spec.match_tolerance),
            payload: Payload::new(spec.payload_units),
            step_count: 0,
            avoidance_steps: 0,
            obstacle_encounters: 0,
            skipped: Vec::new(),
            d_avoid: spec.d_avoid,
            d_avoid_known: spec.d_avoid_known,
            theta_size,
            position: None,
        }
    }

    fn travel_to(&mut self, c: LatticeCoord) {
        self.step_count += match self.position {
            None => 1,
            Some(p) => chebyshev_distance(p, c, self.theta_size).max(1) as u64,
        };
        self.position = Some(c);
    }

    fn add_detour(&mut self, cost: u64) {
        self.avoidance_steps += cost;
        self.step_count += cost;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AvoidanceOutcome {
    pub type_id: TypeId,
    pub cost: u64,
    pub first_encounter: bool,
}

/// Learning obstacle handler. An unfamiliar obstacle costs the full detour
/// and is learned as a new entity type; one matching memory costs the cheaper
/// known detour and reuses the stored type.
pub fn handle_obstacle(
    state: &mut AgentState,
    _coord: LatticeCoord,
    signature: &TraitVector,
) -> Result<AvoidanceOutcome, AgentError> {
    state.obstacle_encounters += 1;
    let outcome = match state.memory.lookup(signature)? {
        Some(i) => {
            let entry = &mut state.memory.entries[i];
            entry.encounters += 1;
            AvoidanceOutcome {
                type_id: entry.type_id,
                cost: entry.avoid_cost_steps,
                first_encounter: false,
            }
        }
        None => {
            let type_id = state.library.learn(signature.clone());
            state.memory.entries.push(ObstacleEntry {
                signature: signature.clone(),
                type_id,
                avoid_cost_steps: state.d_avoid_known,
                encounters: 1,
            });
            AvoidanceOutcome {
                type_id,
                cost: state.d_avoid,
                first_encounter: true,
            }
        }
    };
    state.add_detour(outcome.cost);
    Ok(outcome)
}

fn base_observation(
    sensor: &Sensor<'_>,
    n: u64,
    c: LatticeCoord,
    traits: TraitVector,
    phase: crate::search::Phase,
) -> Result<CellObservation, AgentError> {
    let avg_l = average_l(&to_scale_1_10(&traits)?)?;
    Ok(CellObservation {
        n,
        coord: c,
        point: sensor.point(c),
        traits,
        avg_l,
        cipm_per_type: BTreeMap::new(),
        classified_type: None,
        co_types: Vec::new(),
        obstacle: false,
        phase,
        dispense: DispenseFlag::None,
    })
}

fn dispense_flag(status: DispenseStatus) -> DispenseFlag {
    match status {
        DispenseStatus::Dispensed => DispenseFlag::Dispensed,
        DispenseStatus::Withheld => DispenseFlag::Withheld,
    }
}

fn finish(report: &mut ScanReport, state: &AgentState, started: Instant) {
    report.step_count = state.step_count;
    report.avoidance_steps = state.avoidance_steps;
    report.obstacle_encounters = state.obstacle_encounters;
    report.skipped_cells = state.skipped.len() as u64;
    report.learned_types = state.library.learned().len();
    report.wall_ms = started.elapsed().as_millis();
}

/// Runs the automaton until the search is exhausted.
pub fn run_aia(grid: &WorldGrid, spec: &AgentSpec) -> Result<(ScanReport, AgentState), AgentError> {
    let mut sensor = Sensor::new(grid, spec.sensor_noise, spec.seed)?;
    run_aia_with(&mut sensor, spec)
}

/// [`run_aia`] over a caller-owned sensor, so its access log can be audited.
pub fn run_aia_with(
    sensor: &mut Sensor<'_>,
    spec: &AgentSpec,
) -> Result<(ScanReport, AgentState), AgentError> {
    spec.validate()?;
    let started = Instant::now();
    let (theta_size, z_size) = sensor.grid_dims();
    let library = spec.library()?;
    let trait_count = library.healthy().len();
    let mut report = ScanReport::new(AgentKind::Aiam, trait_count, &library.type_ids());
    let mut state = AgentState::new(
        SearchState::new(theta_size, z_size),
        library,
        spec,
        theta_size,
    );

    let mut last = None;
    while let Some(c) = state.search.next_target(last)? {
        let phase = state.search.phase();
        state.travel_to(c);
        let n = report.observations.len() as u64;
        let obstacle = sensor.is_obstacle(c)?;
        let traits = sensor.measure(c, n)?;
        let mut obs = base_observation(sensor, n, c, traits.clone(), phase)?;

        if obstacle {
            let prior: Vec<TypeId> = state.library.type_ids();
            let outcome = handle_obstacle(&mut state, c, &traits)?;
            obs.cipm_per_type = prior.into_iter().map(|t| (t, 0.0)).collect();
            let own = state
                .library
                .signature(outcome.type_id)
                .expect("obstacle type was just learned or recalled");
            obs.cipm_per_type.insert(
                outcome.type_id,
                cipm(&traits, state.library.healthy(), own)?,
            );
            obs.classified_type = Some(outcome.type_id);
            obs.obstacle = true;
        } else {
            let mut cls = state.library.classify(&traits)?;
            if cls.verdict == Verdict::Novel {
                state.library.register_novel(&traits)?;
                cls = state.library.classify(&traits)?;
            }
            obs.classified_type = cls.classified_type();
            obs.co_types = cls.co_types;
            obs.cipm_per_type = cls.cipm_per_type;
            if let Some(t) = obs.classified_type {
                obs.dispense = dispense_flag(state.payload.dispense(c, t)?);
            }
        }

        let affected = obs.is_affected();
        report.record_observation(obs)?;
        last = Some(TargetVerdict { coord: c, affected });
    }
    finish(&mut report, &state, started);
    Ok((report, state))
}

/// Runs the obstacle-avoidance baseline: helix only, no novelty, no memory,
/// and a blind skip of `s_skip` helix cells after every obstacle.
pub fn run_oam(grid: &WorldGrid, spec: &AgentSpec) -> Result<(ScanReport, AgentState), AgentError> {
    let mut sensor = Sensor::new(grid, spec.sensor_noise, spec.seed)?;
    run_oam_with(&mut sensor, spec)
}

pub fn run_oam_with(
    sensor: &mut Sensor<'_>,
    spec: &AgentSpec,
) -> Result<(ScanReport, AgentState), AgentError> {
    spec.validate()?;
    let started = Instant::now();
    let (theta_size, z_size) = sensor.grid_dims();
    let library = spec.library()?;
    let trait_count = library.healthy().len();
    let mut report = ScanReport::new(AgentKind::Oam, trait_count, &library.type_ids());
    let mut state = AgentState::new(
        SearchState::vertical_only(theta_size, z_size),
        library,
        spec,
        theta_size,
    );

    let mut last = None;
    while let Some(c) = state.search.next_target(last.take())? {
        let phase = state.search.phase();
        state.travel_to(c);
        if sensor.is_obstacle(c)? {
            state.obstacle_encounters += 1;
            state.add_detour(spec.d_avoid);
            state.search.record_verdict(TargetVerdict {
                coord: c,
                affected: false,
            })?;
            let skipped = state.search.skip_helix(spec.s_skip)?;
            state.skipped.extend(skipped);
            continue;
        }
        let n = report.observations.len() as u64;
        let traits = sensor.measure(c, n)?;
        let mut obs = base_observation(sensor, n, c, traits.clone(), phase)?;
        let cls = state.library.classify(&traits)?;
        // Novel-scoring cells stay unclassified: no learning here.
        obs.classified_type = cls.classified_type();
        obs.co_types = cls.co_types;
        obs.cipm_per_type = cls.cipm_per_type;
        if let Some(t) = obs.classified_type {
            obs.dispense = dispense_flag(state.payload.dispense(c, t)?);
        }
        let affected = obs.is_affected();
        report.record_observation(obs)?;
        last = Some(TargetVerdict { coord: c, affected });
    }
    finish(&mut report, &state, started);
    Ok((report, state))
}

/// Distinct type ids an agent assigned during a run.
pub fn assigned_types(report: &ScanReport) -> BTreeSet<TypeId> {
    report
        .observations
        .iter()
        .filter_map(|o| o.classified_type)
        .collect()
}
