#![allow(dead_code)]

use lumen_scan::report::ScanReport;
use lumen_scan::search::Phase;
use lumen_scan::world::{neighbors8, CellKind, LatticeCoord, WorldGrid};
use std::collections::{BTreeSet, HashMap, VecDeque};

/// Connected components (8-neighbourhood, wrapped in theta) of infected
/// cells, found by breadth-first flood fill over the ground truth.
pub fn infected_components(grid: &WorldGrid) -> Vec<BTreeSet<LatticeCoord>> {
    let (t, z) = (grid.theta_size(), grid.z_size());
    let infected =
        |c: LatticeCoord| matches!(grid.ground_truth_at(c).unwrap().kind, CellKind::Infected(_));
    let mut seen = BTreeSet::new();
    let mut comps = Vec::new();
    for c in grid.coords() {
        if !infected(c) || seen.contains(&c) {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut queue = VecDeque::from([c]);
        seen.insert(c);
        while let Some(cur) = queue.pop_front() {
            comp.insert(cur);
            for n in neighbors8(cur, t, z) {
                if infected(n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        comps.push(comp);
    }
    comps
}

/// Index of the last observation belonging to the horizontal episode opened
/// at observation `start` (which is `start` itself when no ring follows).
pub fn episode_end(report: &ScanReport, start: usize) -> usize {
    let obs = &report.observations;
    let mut end = start;
    while end + 1 < obs.len() && obs[end + 1].phase == Phase::Horizontal {
        end += 1;
    }
    end
}

/// Checks that every component is fully observed, each cell as affected, and
/// that no cell of a component is observed after the episode opened by the
/// component's first observed cell has ended.
pub fn check_cluster_completeness(grid: &WorldGrid, report: &ScanReport) -> Result<(), String> {
    let index: HashMap<LatticeCoord, usize> = report
        .observations
        .iter()
        .enumerate()
        .map(|(i, o)| (o.coord, i))
        .collect();
    for comp in infected_components(grid) {
        let mut first = usize::MAX;
        for c in &comp {
            let &i = index
                .get(c)
                .ok_or_else(|| format!("component cell {c} never observed"))?;
            if !report.observations[i].is_affected() {
                return Err(format!("component cell {c} not judged affected"));
            }
            first = first.min(i);
        }
        let end = episode_end(report, first);
        for c in &comp {
            if index[c] > end {
                return Err(format!(
                    "component cell {c} observed at {} after its episode ended at {end}",
                    index[c]
                ));
            }
        }
    }
    Ok(())
}
