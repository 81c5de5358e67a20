//! Two-mode spiral search over the wrapped lattice.
//!
//! The vertical spiral is a discrete helix (one full turn per axial step)
//! that covers every cell exactly once. When a cell is judged affected the
//! search switches to a horizontal spiral: Chebyshev rings of growing radius
//! around that cell, until a whole ring comes back clear. The helix then
//! resumes where it left off, skipping anything already visited.

use crate::world::{chebyshev_distance, wrap_theta, LatticeCoord};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SearchError {
    #[error("helix index {index} is outside 0..{len}")]
    OutOfRange { index: usize, len: usize },
    #[error("verdict for {0} which is not the pending target")]
    UnexpectedVerdict(LatticeCoord),
    #[error("target {0} is still waiting for a verdict")]
    MissingVerdict(LatticeCoord),
    #[error("cell {0} was already visited")]
    AlreadyVisited(LatticeCoord),
    #[error("cannot skip helix cells while a horizontal spiral is active")]
    SkipDuringHorizontal,
}

/// Position `i` of the helix: `theta = i mod theta_size`, `z = i div theta_size`.
pub fn helix_coord(
    i: usize,
    theta_size: usize,
    z_size: usize,
) -> Result<LatticeCoord, SearchError> {
    let len = theta_size * z_size;
    if i >= len {
        return Err(SearchError::OutOfRange { index: i, len });
    }
    Ok(LatticeCoord::new(i % theta_size, i / theta_size))
}

pub fn helix_index(c: LatticeCoord, theta_size: usize) -> usize {
    c.z * theta_size + c.theta
}

/// The ring of cells at wrapped Chebyshev distance exactly `r` from `center`.
///
/// Enumeration starts at `(center.theta + r, center.z)` and runs
/// counterclockwise on the unrolled wall (theta to the right, z upwards).
/// Cells whose wrapped distance is smaller than `r` (the ring has folded over
/// itself) and cells off the lattice axially are dropped, as are duplicates.
pub fn ring_coords(
    center: LatticeCoord,
    r: usize,
    theta_size: usize,
    z_size: usize,
) -> Vec<LatticeCoord> {
    if r == 0 {
        return vec![center];
    }
    let ri = r as i64;
    let mut offsets = Vec::with_capacity(8 * r);
    // Right edge going up, top edge going left, left edge going down,
    // bottom edge going right, then the rest of the right edge.
    for dz in 0..ri {
        offsets.push((ri, dz));
    }
    for dt in (-ri + 1..=ri).rev() {
        offsets.push((dt, ri));
    }
    for dz in (-ri + 1..=ri).rev() {
        offsets.push((-ri, dz));
    }
    for dt in -ri..ri {
        offsets.push((dt, -ri));
    }
    for dz in -ri..0 {
        offsets.push((ri, dz));
    }

    let mut out: Vec<LatticeCoord> = Vec::with_capacity(offsets.len());
    for (dt, dz) in offsets {
        let z = center.z as i64 + dz;
        if z < 0 || z >= z_size as i64 {
            continue;
        }
        let c = LatticeCoord::new(wrap_theta(center.theta as i64 + dt, theta_size), z as usize);
        if chebyshev_distance(center, c, theta_size) == r && !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

/// Iterator over the full helix.
pub fn helix(theta_size: usize, z_size: usize) -> impl Iterator<Item = LatticeCoord> {
    (0..theta_size * z_size).map(move |i| LatticeCoord::new(i % theta_size, i / theta_size))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchMode {
    VerticalSpiral,
    HorizontalSpiral {
        center: LatticeCoord,
        current_ring: usize,
    },
}

/// Which spiral produced a target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Vertical,
    Horizontal,
}

impl Phase {
    pub fn as_char(self) -> char {
        match self {
            Phase::Vertical => 'V',
            Phase::Horizontal => 'H',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mark {
    Unvisited,
    Pending,
    Clear,
    Affected,
}

/// Visited cells in emission order, with the verdict each one received.
#[derive(Debug, Clone)]
pub struct VisitedSet {
    theta_size: usize,
    marks: Vec<Mark>,
    order: Vec<LatticeCoord>,
}

impl VisitedSet {
    pub fn new(theta_size: usize, z_size: usize) -> Self {
        Self {
            theta_size,
            marks: vec![Mark::Unvisited; theta_size * z_size],
            order: Vec::new(),
        }
    }

    fn mark(&self, c: LatticeCoord) -> Mark {
        self.marks[helix_index(c, self.theta_size)]
    }

    fn insert(&mut self, c: LatticeCoord) -> Result<(), SearchError> {
        let i = helix_index(c, self.theta_size);
        if self.marks[i] != Mark::Unvisited {
            return Err(SearchError::AlreadyVisited(c));
        }
        self.marks[i] = Mark::Pending;
        self.order.push(c);
        Ok(())
    }

    fn settle(&mut self, c: LatticeCoord, affected: bool) {
        self.marks[helix_index(c, self.theta_size)] = if affected {
            Mark::Affected
        } else {
            Mark::Clear
        };
    }

    pub fn contains(&self, c: LatticeCoord) -> bool {
        self.mark(c) != Mark::Unvisited
    }

    /// Stored verdict; `None` if unvisited or still pending.
    pub fn verdict(&self, c: LatticeCoord) -> Option<bool> {
        match self.mark(c) {
            Mark::Affected => Some(true),
            Mark::Clear => Some(false),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[LatticeCoord] {
        &self.order
    }
}

/// Feedback for the most recently emitted target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetVerdict {
    pub coord: LatticeCoord,
    pub affected: bool,
}

/// Mode-switching search state machine. Single owner, one run.
#[derive(Debug, Clone)]
pub struct SearchState {
    theta_size: usize,
    z_size: usize,
    mode: SearchMode,
    helix_cursor: usize,
    pending_resume_cursor: usize,
    visited: VisitedSet,
    ring_queue: VecDeque<LatticeCoord>,
    ring_affected: usize,
    awaiting: Option<LatticeCoord>,
    expand_clusters: bool,
    horizontal_entries: usize,
}

impl SearchState {
    pub fn new(theta_size: usize, z_size: usize) -> Self {
        Self {
            theta_size,
            z_size,
            mode: SearchMode::VerticalSpiral,
            helix_cursor: 0,
            pending_resume_cursor: 0,
            visited: VisitedSet::new(theta_size, z_size),
            ring_queue: VecDeque::new(),
            ring_affected: 0,
            awaiting: None,
            expand_clusters: true,
            horizontal_entries: 0,
        }
    }

    /// Helix only; affected verdicts never open a horizontal spiral.
    pub fn vertical_only(theta_size: usize, z_size: usize) -> Self {
        Self {
            expand_clusters: false,
            ..Self::new(theta_size, z_size)
        }
    }

    pub fn mode(&self) -> SearchMode {
        self.mode
    }

    pub fn phase(&self) -> Phase {
        match self.mode {
            SearchMode::VerticalSpiral => Phase::Vertical,
            SearchMode::HorizontalSpiral { .. } => Phase::Horizontal,
        }
    }

    pub fn helix_cursor(&self) -> usize {
        self.helix_cursor
    }

    pub fn pending_resume_cursor(&self) -> usize {
        self.pending_resume_cursor
    }

    pub fn visited(&self) -> &VisitedSet {
        &self.visited
    }

    /// Number of times the search switched into the horizontal spiral.
    pub fn horizontal_entries(&self) -> usize {
        self.horizontal_entries
    }

    pub fn is_complete(&self) -> bool {
        self.awaiting.is_none()
            && self.mode == SearchMode::VerticalSpiral
            && self.helix_cursor >= self.theta_size * self.z_size
    }

    /// Applies the verdict for the pending target without emitting the next.
    pub fn record_verdict(&mut self, v: TargetVerdict) -> Result<(), SearchError> {
        if self.awaiting != Some(v.coord) {
            return Err(SearchError::UnexpectedVerdict(v.coord));
        }
        self.awaiting = None;
        self.visited.settle(v.coord, v.affected);
        match self.mode {
            SearchMode::VerticalSpiral => {
                if v.affected && self.expand_clusters {
                    self.mode = SearchMode::HorizontalSpiral {
                        center: v.coord,
                        current_ring: 1,
                    };
                    self.ring_queue = ring_coords(v.coord, 1, self.theta_size, self.z_size).into();
                    self.ring_affected = 0;
                    self.pending_resume_cursor = self.helix_cursor;
                    self.horizontal_entries += 1;
                }
            }
            SearchMode::HorizontalSpiral { .. } => {
                if v.affected {
                    self.ring_affected += 1;
                }
            }
        }
        Ok(())
    }

    /// Advances past up to `count` helix positions without visiting them.
    /// Returns the unvisited cells that were passed over.
    pub fn skip_helix(&mut self, count: usize) -> Result<Vec<LatticeCoord>, SearchError> {
        if let Some(c) = self.awaiting {
            return Err(SearchError::MissingVerdict(c));
        }
        if self.mode != SearchMode::VerticalSpiral {
            return Err(SearchError::SkipDuringHorizontal);
        }
        let len = self.theta_size * self.z_size;
        let end = (self.helix_cursor + count).min(len);
        let skipped = (self.helix_cursor..end)
            .map(|i| LatticeCoord::new(i % self.theta_size, i / self.theta_size))
            .filter(|&c| !self.visited.contains(c))
            .collect();
        self.helix_cursor = end;
        self.pending_resume_cursor = end;
        Ok(skipped)
    }

    /// Feeds back the verdict for the previous target (if any) and returns
    /// the next cell to visit, or `None` once the helix is exhausted.
    pub fn next_target(
        &mut self,
        last: Option<TargetVerdict>,
    ) -> Result<Option<LatticeCoord>, SearchError> {
        match (last, self.awaiting) {
            (Some(v), _) => self.record_verdict(v)?,
            (None, Some(c)) => return Err(SearchError::MissingVerdict(c)),
            (None, None) => {}
        }
        let len = self.theta_size * self.z_size;
        loop {
            match self.mode {
                SearchMode::VerticalSpiral => {
                    while self.helix_cursor < len {
                        let c = LatticeCoord::new(
                            self.helix_cursor % self.theta_size,
                            self.helix_cursor / self.theta_size,
                        );
                        if !self.visited.contains(c) {
                            break;
                        }
                        self.helix_cursor += 1;
                    }
                    if self.helix_cursor >= len {
                        self.pending_resume_cursor = self.helix_cursor;
                        return Ok(None);
                    }
                    let c = LatticeCoord::new(
                        self.helix_cursor % self.theta_size,
                        self.helix_cursor / self.theta_size,
                    );
                    self.helix_cursor += 1;
                    self.pending_resume_cursor = self.helix_cursor;
                    return self.emit(c).map(Some);
                }
                SearchMode::HorizontalSpiral {
                    center,
                    current_ring,
                } => {
                    while let Some(c) = self.ring_queue.pop_front() {
                        match self.visited.mark(c) {
                            Mark::Unvisited => return self.emit(c).map(Some),
                            Mark::Affected => self.ring_affected += 1,
                            Mark::Clear => {}
                            Mark::Pending => unreachable!("no target is pending here"),
                        }
                    }
                    if self.ring_affected > 0 {
                        let next = current_ring + 1;
                        self.mode = SearchMode::HorizontalSpiral {
                            center,
                            current_ring: next,
                        };
                        self.ring_queue =
                            ring_coords(center, next, self.theta_size, self.z_size).into();
                        self.ring_affected = 0;
                    } else {
                        self.mode = SearchMode::VerticalSpiral;
                        self.helix_cursor = self.helix_cursor.max(self.pending_resume_cursor);
                    }
                }
            }
        }
    }

    fn emit(&mut self, c: LatticeCoord) -> Result<LatticeCoord, SearchError> {
        self.visited.insert(c)?;
        self.awaiting = Some(c);
        Ok(c)
    }
}
