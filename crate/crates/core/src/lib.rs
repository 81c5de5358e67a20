//! Simulated lumen-wall scanning: a seeded cylindrical tissue lattice, a
//! signature-based sensor, a helix/ring search, a learning scanning agent
//! with an obstacle-avoidance baseline, and the reporting and experiment
//! harness around them.

pub mod agents;
pub mod harness;
pub mod report;
pub mod search;
pub mod sensing;
pub mod world;

pub use agents::{run_aia, run_oam, AgentError, AgentSpec, AgentState};
pub use report::{compute_metrics, serialize, AgentKind, Format, RunMetrics, ScanReport};
pub use search::{SearchMode, SearchState};
pub use sensing::{cipm, SignatureLibrary, TraitVector};
pub use world::{generate_world, LatticeCoord, WorldGrid, WorldSpec};
