//! Cylindrical lumen wall modelled as a wrapped `theta x z` lattice with seeded
//! ground truth (infection clusters and obstacles).
//!
//! Cell index and helix order coincide: `index = z * theta_size + theta`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt;
use thiserror::Error;

/// Identifier of an infection (or learned) entity type.
pub type TypeId = u32;

/// Attempts per cluster before random placement gives up.
const PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("lattice dimensions must be at least 4x4, got {theta_size}x{z_size}")]
    InvalidDimensions { theta_size: usize, z_size: usize },
    #[error("lumen radius must be finite and positive, got {0}")]
    InvalidRadius(f64),
    #[error("trait count must be at least 1")]
    NoTraits,
    #[error("{which} signature has length {found}, expected {expected}")]
    SignatureLength {
        which: String,
        expected: usize,
        found: usize,
    },
    #[error("{which} signature entry {value} is outside [0, 1]")]
    SignatureRange { which: String, value: f64 },
    #[error("trait noise must be finite and non-negative, got {0}")]
    InvalidNoise(f64),
    #[error("cluster references type {0} which has no signature")]
    UnknownType(TypeId),
    #[error("cluster radius {radius} must be below half of min(theta, z) = {limit}")]
    ClusterRadius { radius: usize, limit: usize },
    #[error("cluster radius range {min}..={max} is empty")]
    EmptyRadiusRange { min: usize, max: usize },
    #[error("requested {requested} occupied cells but the lattice only has {available}")]
    Capacity { requested: usize, available: usize },
    #[error("could not place {what} without overlapping occupied cells")]
    Placement { what: String },
    #[error("coordinate ({theta}, {z}) is outside the {theta_size}x{z_size} lattice")]
    OutOfBounds {
        theta: usize,
        z: usize,
        theta_size: usize,
        z_size: usize,
    },
}

/// Position on the unrolled lumen wall. `theta` wraps, `z` does not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticeCoord {
    pub theta: usize,
    pub z: usize,
}

impl LatticeCoord {
    pub const fn new(theta: usize, z: usize) -> Self {
        Self { theta, z }
    }
}

impl fmt::Display for LatticeCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.theta, self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartesianPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Wrapped distance between two angular indices.
pub fn theta_distance(a: usize, b: usize, theta_size: usize) -> usize {
    let d = a.abs_diff(b) % theta_size;
    d.min(theta_size - d)
}

/// Chebyshev distance on the wrapped lattice.
pub fn chebyshev_distance(a: LatticeCoord, b: LatticeCoord, theta_size: usize) -> usize {
    theta_distance(a.theta, b.theta, theta_size).max(a.z.abs_diff(b.z))
}

/// Moore neighbourhood on the wrapped lattice, without duplicates.
pub fn neighbors8(c: LatticeCoord, theta_size: usize, z_size: usize) -> Vec<LatticeCoord> {
    let mut out = Vec::with_capacity(8);
    for dz in -1i64..=1 {
        for dt in -1i64..=1 {
            if dz == 0 && dt == 0 {
                continue;
            }
            let z = c.z as i64 + dz;
            if z < 0 || z >= z_size as i64 {
                continue;
            }
            let theta = wrap_theta(c.theta as i64 + dt, theta_size);
            let n = LatticeCoord::new(theta, z as usize);
            if n != c && !out.contains(&n) {
                out.push(n);
            }
        }
    }
    out
}

pub(crate) fn wrap_theta(theta: i64, theta_size: usize) -> usize {
    theta.rem_euclid(theta_size as i64) as usize
}

/// Signature with `base` everywhere and `peak` at `index`.
pub fn one_hot_signature(trait_count: usize, index: usize, base: f64, peak: f64) -> Vec<f64> {
    let mut v = vec![base; trait_count];
    if index < trait_count {
        v[index] = peak;
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Healthy,
    Infected(TypeId),
    StaticObstacle,
    Pathogen,
}

impl CellKind {
    pub fn is_obstacle(self) -> bool {
        matches!(self, CellKind::StaticObstacle | CellKind::Pathogen)
    }

    pub fn infection_type(self) -> Option<TypeId> {
        match self {
            CellKind::Infected(t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub kind: CellKind,
    pub true_traits: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObstacleKind {
    Static,
    Pathogen,
}

impl ObstacleKind {
    fn cell_kind(self) -> CellKind {
        match self {
            ObstacleKind::Static => CellKind::StaticObstacle,
            ObstacleKind::Pathogen => CellKind::Pathogen,
        }
    }
}

/// `count` randomly placed clusters of one type with radius drawn from
/// `radius_min..=radius_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub type_id: TypeId,
    pub count: usize,
    pub radius_min: usize,
    pub radius_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedCluster {
    pub type_id: TypeId,
    pub center: LatticeCoord,
    pub radius: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedObstacle {
    pub coord: LatticeCoord,
    pub kind: ObstacleKind,
}

/// Everything needed to generate a [`WorldGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub theta_size: usize,
    pub z_size: usize,
    pub radius: f64,
    pub trait_count: usize,
    pub healthy_signature: Vec<f64>,
    /// Indexed by type id.
    pub infection_signatures: Vec<Vec<f64>>,
    pub static_obstacle_signature: Vec<f64>,
    pub pathogen_signature: Vec<f64>,
    pub clusters: Vec<ClusterSpec>,
    /// Clusters at fixed positions, painted before the random ones.
    pub fixed_clusters: Vec<PlacedCluster>,
    pub static_obstacles: usize,
    pub pathogens: usize,
    /// Obstacles at fixed positions, placed before the random ones.
    pub fixed_obstacles: Vec<PlacedObstacle>,
    /// Standard deviation of the per-trait Gaussian noise on tissue cells.
    pub trait_noise: f64,
    pub seed: u64,
}

impl WorldSpec {
    /// Empty (all healthy) world. Obstacle signatures default to all-ones
    /// (static) and alternating ones and zeros (pathogen).
    pub fn new(theta_size: usize, z_size: usize, healthy_signature: Vec<f64>) -> Self {
        let m = healthy_signature.len();
        Self {
            theta_size,
            z_size,
            radius: 1.0,
            trait_count: m,
            healthy_signature,
            infection_signatures: Vec::new(),
            static_obstacle_signature: vec![1.0; m],
            pathogen_signature: (0..m).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect(),
            clusters: Vec::new(),
            fixed_clusters: Vec::new(),
            static_obstacles: 0,
            pathogens: 0,
            fixed_obstacles: Vec::new(),
            trait_noise: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if self.theta_size < 4 || self.z_size < 4 {
            return Err(WorldError::InvalidDimensions {
                theta_size: self.theta_size,
                z_size: self.z_size,
            });
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(WorldError::InvalidRadius(self.radius));
        }
        if self.trait_count == 0 {
            return Err(WorldError::NoTraits);
        }
        if !(self.trait_noise.is_finite() && self.trait_noise >= 0.0) {
            return Err(WorldError::InvalidNoise(self.trait_noise));
        }
        check_signature("healthy", &self.healthy_signature, self.trait_count)?;
        check_signature(
            "static obstacle",
            &self.static_obstacle_signature,
            self.trait_count,
        )?;
        check_signature("pathogen", &self.pathogen_signature, self.trait_count)?;
        for (i, sig) in self.infection_signatures.iter().enumerate() {
            check_signature(&format!("infection type {i}"), sig, self.trait_count)?;
        }

        let limit = self.theta_size.min(self.z_size);
        let check_radius = |radius: usize| {
            if 2 * radius >= limit {
                Err(WorldError::ClusterRadius {
                    radius,
                    limit: limit / 2,
                })
            } else {
                Ok(())
            }
        };
        let mut requested = self.static_obstacles + self.pathogens + self.fixed_obstacles.len();
        for c in &self.clusters {
            if c.type_id as usize >= self.infection_signatures.len() {
                return Err(WorldError::UnknownType(c.type_id));
            }
            if c.radius_min > c.radius_max {
                return Err(WorldError::EmptyRadiusRange {
                    min: c.radius_min,
                    max: c.radius_max,
                });
            }
            check_radius(c.radius_max)?;
            let side = 2 * c.radius_min + 1;
            requested += c.count * side * side;
        }
        for c in &self.fixed_clusters {
            if c.type_id as usize >= self.infection_signatures.len() {
                return Err(WorldError::UnknownType(c.type_id));
            }
            check_radius(c.radius)?;
            self.check_coord(c.center)?;
            requested += disk_cells(c.center, c.radius, self.theta_size, self.z_size).len();
        }
        for o in &self.fixed_obstacles {
            self.check_coord(o.coord)?;
        }
        let available = self.theta_size * self.z_size;
        if requested > available {
            return Err(WorldError::Capacity {
                requested,
                available,
            });
        }
        Ok(())
    }

    fn check_coord(&self, c: LatticeCoord) -> Result<(), WorldError> {
        if c.theta >= self.theta_size || c.z >= self.z_size {
            return Err(WorldError::OutOfBounds {
                theta: c.theta,
                z: c.z,
                theta_size: self.theta_size,
                z_size: self.z_size,
            });
        }
        Ok(())
    }
}

fn check_signature(which: &str, sig: &[f64], expected: usize) -> Result<(), WorldError> {
    if sig.len() != expected {
        return Err(WorldError::SignatureLength {
            which: which.to_string(),
            expected,
            found: sig.len(),
        });
    }
    if let Some(&value) = sig.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(WorldError::SignatureRange {
            which: which.to_string(),
            value,
        });
    }
    Ok(())
}

/// Chebyshev disk on the wrapped lattice; `z` is clipped.
pub fn disk_cells(
    center: LatticeCoord,
    radius: usize,
    theta_size: usize,
    z_size: usize,
) -> Vec<LatticeCoord> {
    let r = radius as i64;
    let mut out = Vec::new();
    for dz in -r..=r {
        let z = center.z as i64 + dz;
        if z < 0 || z >= z_size as i64 {
            continue;
        }
        for dt in -r..=r {
            let c = LatticeCoord::new(wrap_theta(center.theta as i64 + dt, theta_size), z as usize);
            if !out.contains(&c) {
                out.push(c);
            }
        }
    }
    out
}

/// One generated cluster and the cells it painted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub type_id: TypeId,
    pub center: LatticeCoord,
    pub radius: usize,
    pub cells: Vec<LatticeCoord>,
}

/// Generated lumen wall. Immutable once built, except through
/// [`WorldGrid::replace_cell`] which exists for constructing test fixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldGrid {
    theta_size: usize,
    z_size: usize,
    radius: f64,
    trait_count: usize,
    seed: u64,
    cells: Vec<GroundTruth>,
    clusters: Vec<ClusterRecord>,
    obstacles: Vec<PlacedObstacle>,
}

pub fn generate_world(spec: &WorldSpec) -> Result<WorldGrid, WorldError> {
    spec.validate()?;
    let (tsz, zsz) = (spec.theta_size, spec.z_size);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut kinds = vec![CellKind::Healthy; tsz * zsz];
    let index = |c: LatticeCoord| c.z * tsz + c.theta;
    let mut clusters = Vec::new();

    for fixed in &spec.fixed_clusters {
        let cells = disk_cells(fixed.center, fixed.radius, tsz, zsz);
        if cells.iter().any(|&c| kinds[index(c)] != CellKind::Healthy) {
            return Err(WorldError::Placement {
                what: format!("fixed cluster at {}", fixed.center),
            });
        }
        for &c in &cells {
            kinds[index(c)] = CellKind::Infected(fixed.type_id);
        }
        clusters.push(ClusterRecord {
            type_id: fixed.type_id,
            center: fixed.center,
            radius: fixed.radius,
            cells,
        });
    }

    for group in &spec.clusters {
        for k in 0..group.count {
            let radius = rng.random_range(group.radius_min..=group.radius_max);
            let mut placed = false;
            for _ in 0..PLACEMENT_ATTEMPTS {
                // Axial placement keeps the whole disk on the lattice.
                let center = LatticeCoord::new(
                    rng.random_range(0..tsz),
                    rng.random_range(radius..zsz - radius),
                );
                let cells = disk_cells(center, radius, tsz, zsz);
                if cells.iter().all(|&c| kinds[index(c)] == CellKind::Healthy) {
                    for &c in &cells {
                        kinds[index(c)] = CellKind::Infected(group.type_id);
                    }
                    clusters.push(ClusterRecord {
                        type_id: group.type_id,
                        center,
                        radius,
                        cells,
                    });
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(WorldError::Placement {
                    what: format!("cluster {k} of type {}", group.type_id),
                });
            }
        }
    }

    let mut obstacles = Vec::new();
    for fixed in &spec.fixed_obstacles {
        let i = index(fixed.coord);
        if kinds[i] != CellKind::Healthy {
            return Err(WorldError::Placement {
                what: format!("fixed obstacle at {}", fixed.coord),
            });
        }
        kinds[i] = fixed.kind.cell_kind();
        obstacles.push(*fixed);
    }
    let mut free: Vec<usize> = (0..kinds.len())
        .filter(|&i| kinds[i] == CellKind::Healthy)
        .collect();
    let random_obstacles = std::iter::repeat_n(ObstacleKind::Static, spec.static_obstacles)
        .chain(std::iter::repeat_n(ObstacleKind::Pathogen, spec.pathogens));
    for kind in random_obstacles {
        if free.is_empty() {
            return Err(WorldError::Placement {
                what: "obstacle".to_string(),
            });
        }
        let i = free.swap_remove(rng.random_range(0..free.len()));
        kinds[i] = kind.cell_kind();
        obstacles.push(PlacedObstacle {
            coord: LatticeCoord::new(i % tsz, i / tsz),
            kind,
        });
    }

    let noise = if spec.trait_noise > 0.0 {
        Some(Normal::new(0.0, spec.trait_noise).expect("validated noise"))
    } else {
        None
    };
    let cells = kinds
        .into_iter()
        .map(|kind| {
            let (signature, noisy) = match kind {
                CellKind::Healthy => (&spec.healthy_signature, true),
                CellKind::Infected(t) => (&spec.infection_signatures[t as usize], true),
                CellKind::StaticObstacle => (&spec.static_obstacle_signature, false),
                CellKind::Pathogen => (&spec.pathogen_signature, false),
            };
            let true_traits = match (&noise, noisy) {
                (Some(dist), true) => signature
                    .iter()
                    .map(|v| (v + dist.sample(&mut rng)).clamp(0.0, 1.0))
                    .collect(),
                _ => signature.clone(),
            };
            GroundTruth { kind, true_traits }
        })
        .collect();

    Ok(WorldGrid {
        theta_size: tsz,
        z_size: zsz,
        radius: spec.radius,
        trait_count: spec.trait_count,
        seed: spec.seed,
        cells,
        clusters,
        obstacles,
    })
}

impl WorldGrid {
    pub fn theta_size(&self) -> usize {
        self.theta_size
    }

    pub fn z_size(&self) -> usize {
        self.z_size
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn trait_count(&self) -> usize {
        self.trait_count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn contains(&self, c: LatticeCoord) -> bool {
        c.theta < self.theta_size && c.z < self.z_size
    }

    pub fn index_of(&self, c: LatticeCoord) -> Result<usize, WorldError> {
        if !self.contains(c) {
            return Err(WorldError::OutOfBounds {
                theta: c.theta,
                z: c.z,
                theta_size: self.theta_size,
                z_size: self.z_size,
            });
        }
        Ok(c.z * self.theta_size + c.theta)
    }

    pub fn coord_of(&self, index: usize) -> LatticeCoord {
        LatticeCoord::new(index % self.theta_size, index / self.theta_size)
    }

    pub fn coords(&self) -> impl Iterator<Item = LatticeCoord> + '_ {
        (0..self.cells.len()).map(|i| self.coord_of(i))
    }

    /// Oracle access to the hidden state of a cell. Agents only see cells
    /// through [`crate::sensing::Sensor`].
    pub fn ground_truth_at(&self, c: LatticeCoord) -> Result<&GroundTruth, WorldError> {
        Ok(&self.cells[self.index_of(c)?])
    }

    pub fn embed_3d(&self, c: LatticeCoord) -> CartesianPoint {
        let angle = TAU * c.theta as f64 / self.theta_size as f64;
        CartesianPoint {
            x: self.radius * angle.cos(),
            y: self.radius * angle.sin(),
            z: c.z as f64,
        }
    }

    pub fn clusters(&self) -> &[ClusterRecord] {
        &self.clusters
    }

    pub fn obstacles(&self) -> &[PlacedObstacle] {
        &self.obstacles
    }

    pub fn count_kind(&self, pred: impl Fn(CellKind) -> bool) -> usize {
        self.cells.iter().filter(|c| pred(c.kind)).count()
    }

    pub fn replace_cell(
        &mut self,
        c: LatticeCoord,
        truth: GroundTruth,
    ) -> Result<GroundTruth, WorldError> {
        let i = self.index_of(c)?;
        Ok(std::mem::replace(&mut self.cells[i], truth))
    }
}
