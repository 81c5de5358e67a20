//! Trait measurement, the 1-10 reporting scale, infection probability (CIPM)
//! and signature-based classification with novelty registration.

use crate::world::{LatticeCoord, TypeId, WorldError, WorldGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Lower bound applied to the derived novelty threshold.
pub const NOVELTY_THRESHOLD_FLOOR: f64 = 0.1;
/// Default cipm gap within which a second type counts as a co-infection.
pub const DEFAULT_DUAL_MARGIN: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensingError {
    #[error("trait vectors have different lengths ({0} vs {1})")]
    Arity(usize, usize),
    #[error("trait vector is empty")]
    Empty,
    #[error("expected a {expected:?} trait vector, got {found:?}")]
    Scale {
        expected: TraitScale,
        found: TraitScale,
    },
    #[error("trait value {value} is outside the {scale:?} range")]
    Range { value: f64, scale: TraitScale },
    #[error("cell {0} was already measured in this run")]
    AlreadyMeasured(LatticeCoord),
    #[error("type {0} is already present in the library")]
    DuplicateType(TypeId),
    #[error("vector is not novel: {0}")]
    NotNovel(String),
    #[error("novelty threshold must be finite and positive, got {0}")]
    InvalidThreshold(f64),
    #[error("sensor noise must be finite and non-negative, got {0}")]
    InvalidNoise(f64),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraitScale {
    Normalized01,
    Scale1to10,
}

impl TraitScale {
    fn bounds(self) -> (f64, f64) {
        match self {
            TraitScale::Normalized01 => (0.0, 1.0),
            TraitScale::Scale1to10 => (1.0, 10.0),
        }
    }
}

/// Per-cell trait levels tagged with the scale they are expressed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitVector {
    values: Vec<f64>,
    scale: TraitScale,
}

impl TraitVector {
    pub fn new(values: Vec<f64>, scale: TraitScale) -> Result<Self, SensingError> {
        let (lo, hi) = scale.bounds();
        if let Some(&value) = values.iter().find(|v| !(lo..=hi).contains(*v)) {
            return Err(SensingError::Range { value, scale });
        }
        Ok(Self { values, scale })
    }

    pub fn normalized(values: Vec<f64>) -> Result<Self, SensingError> {
        Self::new(values, TraitScale::Normalized01)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scale(&self) -> TraitScale {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn expect_scale(&self, expected: TraitScale) -> Result<(), SensingError> {
        if self.scale != expected {
            return Err(SensingError::Scale {
                expected,
                found: self.scale,
            });
        }
        Ok(())
    }

    /// Euclidean distance; both vectors must share scale and length.
    pub fn distance(&self, other: &TraitVector) -> Result<f64, SensingError> {
        if self.len() != other.len() {
            return Err(SensingError::Arity(self.len(), other.len()));
        }
        other.expect_scale(self.scale)?;
        Ok(euclidean(&self.values, &other.values))
    }

    /// Inverse of [`to_scale_1_10`].
    pub fn to_normalized(&self) -> Result<TraitVector, SensingError> {
        self.expect_scale(TraitScale::Scale1to10)?;
        Ok(TraitVector {
            values: self
                .values
                .iter()
                .map(|s| ((s - 1.0) / 9.0).clamp(0.0, 1.0))
                .collect(),
            scale: TraitScale::Normalized01,
        })
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Maps a normalized vector onto the 1-10 reporting scale (`s = 1 + 9v`).
pub fn to_scale_1_10(t: &TraitVector) -> Result<TraitVector, SensingError> {
    t.expect_scale(TraitScale::Normalized01)?;
    Ok(TraitVector {
        values: t
            .values
            .iter()
            .map(|v| (1.0 + 9.0 * v).clamp(1.0, 10.0))
            .collect(),
        scale: TraitScale::Scale1to10,
    })
}

/// Reported mean levels are rounded to `1 / LEVEL_QUANTA`.
pub const LEVEL_QUANTA: f64 = 1e12;

/// Mean trait level, on whatever scale the vector carries, rounded to
/// `1 / LEVEL_QUANTA` so decimal readings average to decimal results
/// (`(0.7 + 0.6) / 2` reports 0.65, not 0.6499999999999999).
pub fn average_l(t: &TraitVector) -> Result<f64, SensingError> {
    if t.is_empty() {
        return Err(SensingError::Empty);
    }
    let mean = t.values.iter().sum::<f64>() / t.len() as f64;
    Ok((mean * LEVEL_QUANTA).round() / LEVEL_QUANTA)
}

/// Relative-distance infection probability `d_h / (d_h + d_a)`.
///
/// Exactly 0.5 when `t` is equidistant from both samples (including the
/// degenerate case where all three coincide); above 0.5 only when `t` is
/// strictly closer to the affected sample.
pub fn cipm(
    t: &TraitVector,
    healthy: &TraitVector,
    affected: &TraitVector,
) -> Result<f64, SensingError> {
    for v in [t, healthy, affected] {
        v.expect_scale(TraitScale::Normalized01)?;
    }
    let d_h = t.distance(healthy)?;
    let d_a = t.distance(affected)?;
    let total = d_h + d_a;
    if total == 0.0 {
        return Ok(0.5);
    }
    Ok((d_h / total).clamp(0.0, 1.0))
}

/// Outcome of comparing a measurement against the signature library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Healthy,
    Type(TypeId),
    /// Far from healthy tissue and from every known signature.
    Novel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub verdict: Verdict,
    pub cipm_per_type: BTreeMap<TypeId, f64>,
    /// Further types scoring above 0.5 within the dual margin of the winner.
    pub co_types: Vec<TypeId>,
    pub distance_to_healthy: f64,
}

impl Classification {
    pub fn classified_type(&self) -> Option<TypeId> {
        match self.verdict {
            Verdict::Type(t) => Some(t),
            _ => None,
        }
    }

    pub fn max_cipm(&self) -> f64 {
        self.cipm_per_type.values().copied().fold(0.0, f64::max)
    }
}

/// Healthy reference, known infection signatures and learned (novel) ones.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureLibrary {
    healthy: TraitVector,
    known: BTreeMap<TypeId, TraitVector>,
    learned: BTreeMap<TypeId, TraitVector>,
    novelty_threshold: f64,
    dual_margin: f64,
}

impl SignatureLibrary {
    /// Builds a library with the default novelty threshold: half the minimum
    /// pairwise distance among the configured signatures (healthy included),
    /// but never below [`NOVELTY_THRESHOLD_FLOOR`].
    pub fn new(
        healthy: TraitVector,
        known: impl IntoIterator<Item = (TypeId, TraitVector)>,
    ) -> Result<Self, SensingError> {
        healthy.expect_scale(TraitScale::Normalized01)?;
        if healthy.is_empty() {
            return Err(SensingError::Empty);
        }
        let mut map = BTreeMap::new();
        for (id, sig) in known {
            sig.expect_scale(TraitScale::Normalized01)?;
            if sig.len() != healthy.len() {
                return Err(SensingError::Arity(healthy.len(), sig.len()));
            }
            if map.insert(id, sig).is_some() {
                return Err(SensingError::DuplicateType(id));
            }
        }
        let mut all: Vec<&TraitVector> = vec![&healthy];
        all.extend(map.values());
        let mut min_pair = f64::INFINITY;
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                min_pair = min_pair.min(euclidean(&all[i].values, &all[j].values));
            }
        }
        let novelty_threshold = if min_pair.is_finite() {
            (min_pair / 2.0).max(NOVELTY_THRESHOLD_FLOOR)
        } else {
            NOVELTY_THRESHOLD_FLOOR
        };
        Ok(Self {
            healthy,
            known: map,
            learned: BTreeMap::new(),
            novelty_threshold,
            dual_margin: DEFAULT_DUAL_MARGIN,
        })
    }

    pub fn with_novelty_threshold(mut self, tau: f64) -> Result<Self, SensingError> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(SensingError::InvalidThreshold(tau));
        }
        self.novelty_threshold = tau;
        Ok(self)
    }

    pub fn with_dual_margin(mut self, margin: f64) -> Self {
        self.dual_margin = margin.max(0.0);
        self
    }

    pub fn healthy(&self) -> &TraitVector {
        &self.healthy
    }

    pub fn known(&self) -> &BTreeMap<TypeId, TraitVector> {
        &self.known
    }

    pub fn learned(&self) -> &BTreeMap<TypeId, TraitVector> {
        &self.learned
    }

    pub fn novelty_threshold(&self) -> f64 {
        self.novelty_threshold
    }

    pub fn signature(&self, id: TypeId) -> Option<&TraitVector> {
        self.known.get(&id).or_else(|| self.learned.get(&id))
    }

    /// Known and learned type ids in ascending order.
    pub fn type_ids(&self) -> Vec<TypeId> {
        let mut ids: Vec<TypeId> = self
            .known
            .keys()
            .chain(self.learned.keys())
            .copied()
            .collect();
        ids.sort_unstable();
        ids
    }

    pub fn next_type_id(&self) -> TypeId {
        self.known
            .keys()
            .chain(self.learned.keys())
            .max()
            .map_or(0, |m| m + 1)
    }

    pub fn classify(&self, t: &TraitVector) -> Result<Classification, SensingError> {
        let distance_to_healthy = t.distance(&self.healthy)?;
        let mut cipm_per_type = BTreeMap::new();
        for id in self.type_ids() {
            let sig = self.signature(id).expect("listed type");
            cipm_per_type.insert(id, cipm(t, &self.healthy, sig)?);
        }
        // Ascending id order plus strict comparison gives lowest-id tie-break.
        let mut best: Option<(TypeId, f64)> = None;
        for (&id, &p) in &cipm_per_type {
            if p > 0.5 && best.is_none_or(|(_, bp)| p > bp) {
                best = Some((id, p));
            }
        }
        let (verdict, co_types) = match best {
            Some((id, p)) => {
                let co = cipm_per_type
                    .iter()
                    .filter(|&(&other, &q)| other != id && q > 0.5 && p - q <= self.dual_margin)
                    .map(|(&other, _)| other)
                    .collect();
                (Verdict::Type(id), co)
            }
            None if distance_to_healthy > self.novelty_threshold => (Verdict::Novel, Vec::new()),
            None => (Verdict::Healthy, Vec::new()),
        };
        Ok(Classification {
            verdict,
            cipm_per_type,
            co_types,
            distance_to_healthy,
        })
    }

    /// Registers `t` as the signature of a fresh learned type. Fails unless
    /// [`SignatureLibrary::classify`] reports it as novel.
    pub fn register_novel(&mut self, t: &TraitVector) -> Result<TypeId, SensingError> {
        let c = self.classify(t)?;
        if c.verdict != Verdict::Novel {
            return Err(SensingError::NotNovel(format!(
                "classified as {:?}",
                c.verdict
            )));
        }
        Ok(self.learn(t.clone()))
    }

    /// Adds a learned signature without the novelty check (obstacles).
    pub(crate) fn learn(&mut self, t: TraitVector) -> TypeId {
        let id = self.next_type_id();
        self.learned.insert(id, t);
        id
    }
}

/// The agents' only window onto the world: per-cell obstacle probing and
/// trait measurement with optional sensor noise.
///
/// Every touched coordinate is appended to an access log so tests can show
/// that no cell other than the current target is ever read.
#[derive(Debug)]
pub struct Sensor<'w> {
    grid: &'w WorldGrid,
    noise: Option<Normal<f64>>,
    seed: u64,
    measured: Vec<bool>,
    access_log: Vec<LatticeCoord>,
}

impl<'w> Sensor<'w> {
    pub fn new(grid: &'w WorldGrid, noise: f64, seed: u64) -> Result<Self, SensingError> {
        if !(noise.is_finite() && noise >= 0.0) {
            return Err(SensingError::InvalidNoise(noise));
        }
        Ok(Self {
            grid,
            noise: (noise > 0.0).then(|| Normal::new(0.0, noise).expect("checked noise")),
            seed,
            measured: vec![false; grid.cell_count()],
            access_log: Vec::new(),
        })
    }

    pub fn theta_size(&self) -> usize {
        self.grid.theta_size()
    }

    pub fn z_size(&self) -> usize {
        self.grid.z_size()
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (self.grid.theta_size(), self.grid.z_size())
    }

    pub fn point(&self, c: LatticeCoord) -> crate::world::CartesianPoint {
        self.grid.embed_3d(c)
    }

    fn touch(&mut self, c: LatticeCoord) {
        if self.access_log.last() != Some(&c) {
            self.access_log.push(c);
        }
    }

    pub fn is_obstacle(&mut self, c: LatticeCoord) -> Result<bool, SensingError> {
        let kind = self.grid.ground_truth_at(c)?.kind;
        self.touch(c);
        Ok(kind.is_obstacle())
    }

    /// Measures `c` once. Noise for measurement `n` comes from its own
    /// ChaCha stream, so traces depend only on the run seed and `n`.
    pub fn measure(&mut self, c: LatticeCoord, n: u64) -> Result<TraitVector, SensingError> {
        let index = self.grid.index_of(c)?;
        if self.measured[index] {
            return Err(SensingError::AlreadyMeasured(c));
        }
        self.measured[index] = true;
        self.touch(c);
        let truth = &self.grid.ground_truth_at(c)?.true_traits;
        let values = match &self.noise {
            None => truth.clone(),
            Some(dist) => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(n);
                truth
                    .iter()
                    .map(|v| (v + dist.sample(&mut rng)).clamp(0.0, 1.0))
                    .collect()
            }
        };
        TraitVector::normalized(values)
    }

    pub fn access_log(&self) -> &[LatticeCoord] {
        &self.access_log
    }
}

pub fn measure_traits(
    sensor: &mut Sensor<'_>,
    c: LatticeCoord,
    n: u64,
) -> Result<TraitVector, SensingError> {
    sensor.measure(c, n)
}
