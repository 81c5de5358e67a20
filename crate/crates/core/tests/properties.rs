mod common;

use lumen_scan::agents::{run_aia, run_oam, AgentSpec};
use lumen_scan::report::{serialize, Format};
use lumen_scan::search::{helix, ring_coords};
use lumen_scan::sensing::{cipm, SignatureLibrary, TraitVector};
use lumen_scan::world::{
    chebyshev_distance, generate_world, one_hot_signature, CellKind, ClusterSpec, GroundTruth,
    LatticeCoord, TypeId, WorldGrid, WorldSpec,
};
use proptest::prelude::*;
use std::collections::{BTreeMap, BTreeSet, HashSet};

const M: usize = 8;

/// A random world with `known + unknown` one-hot types, optional obstacles
/// and noise. The agent spec knows the first `known` types. `None` when the
/// clusters do not fit.
fn scenario(
    theta: usize,
    z: usize,
    known: usize,
    unknown: usize,
    obstacles: usize,
    noise: f64,
    seed: u64,
) -> Option<(WorldGrid, AgentSpec)> {
    let mut w = WorldSpec::new(theta, z, vec![0.1; M]);
    w.infection_signatures = (0..known + unknown)
        .map(|k| one_hot_signature(M, k, 0.1, 0.9))
        .collect();
    for k in 0..known + unknown {
        w.clusters.push(ClusterSpec {
            type_id: k as TypeId,
            count: 1,
            radius_min: 0,
            radius_max: 2,
        });
    }
    w.static_obstacle_signature = one_hot_signature(M, M - 1, 0.1, 0.9);
    w.pathogen_signature = one_hot_signature(M, M - 2, 0.1, 0.9);
    w.static_obstacles = obstacles;
    w.pathogens = obstacles / 2;
    w.trait_noise = noise;
    w.seed = seed;
    let grid = generate_world(&w).ok()?;
    let known_sigs = (0..known)
        .map(|k| (k as TypeId, w.infection_signatures[k].clone()))
        .collect();
    let mut spec = AgentSpec::new(vec![0.1; M], known_sigs);
    spec.seed = seed;
    Some((grid, spec))
}

fn unit_vec(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..=1.0f64, m)
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 128,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn agents_never_revisit(
        theta in 8usize..=20,
        z in 8usize..=24,
        unknown in 0usize..=2,
        obstacles in 0usize..=12,
        seed in any::<u64>(),
    ) {
        let generated = scenario(theta, z, 1, unknown, obstacles, 0.05, seed);
        prop_assume!(generated.is_some());
        let (grid, spec) = generated.unwrap();
        let (aia, state) = run_aia(&grid, &spec).unwrap();
        let coords: Vec<_> = aia.observations.iter().map(|o| o.coord).collect();
        let unique: HashSet<_> = coords.iter().collect();
        prop_assert_eq!(unique.len(), coords.len());
        prop_assert_eq!(coords.len(), theta * z);
        prop_assert!(state.step_count >= coords.len() as u64);

        let (oam, oam_state) = run_oam(&grid, &spec).unwrap();
        let oam_coords: HashSet<_> = oam.observations.iter().map(|o| o.coord).collect();
        prop_assert_eq!(oam_coords.len(), oam.observations.len());
        prop_assert!(oam_coords.iter().all(|c| unique.contains(c)));
        let unseen = theta * z - oam.observations.len();
        prop_assert_eq!(unseen, oam.obstacle_encounters as usize + oam_state.skipped.len());
        prop_assert!(oam_state.step_count >= oam.observations.len() as u64);
    }

    #[test]
    fn cluster_completeness_matches_flood_fill(
        clusters in 1usize..=4,
        seed in any::<u64>(),
    ) {
        let mut w = WorldSpec::new(24, 32, vec![0.1; M]);
        w.infection_signatures = vec![one_hot_signature(M, 0, 0.1, 0.9), one_hot_signature(M, 1, 0.1, 0.9)];
        for i in 0..clusters {
            w.clusters.push(ClusterSpec { type_id: (i % 2) as TypeId, count: 1, radius_min: 0, radius_max: 4 });
        }
        w.seed = seed;
        let grid = generate_world(&w).unwrap();
        let known = (0..2).map(|k| (k as TypeId, w.infection_signatures[k].clone())).collect();
        let (report, _) = run_aia(&grid, &AgentSpec::new(vec![0.1; M], known)).unwrap();
        if let Err(e) = common::check_cluster_completeness(&grid, &report) {
            prop_assert!(false, "{}", e);
        }
    }

    #[test]
    fn cipm_complement(
        (t, h, a) in (1usize..=10).prop_flat_map(|m| (unit_vec(m), unit_vec(m), unit_vec(m))),
    ) {
        let tv = |v: &[f64]| TraitVector::normalized(v.to_vec()).unwrap();
        let p = cipm(&tv(&t), &tv(&h), &tv(&a)).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p + cipm(&tv(&t), &tv(&a), &tv(&h)).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn trait_permutation_invariance(
        (t, h, a, perm) in (1usize..=8).prop_flat_map(|m| (
            unit_vec(m), unit_vec(m), unit_vec(m),
            Just((0..m).collect::<Vec<_>>()).prop_shuffle(),
        )),
    ) {
        let permute = |v: &[f64]| TraitVector::normalized(perm.iter().map(|&i| v[i]).collect()).unwrap();
        let tv = |v: &[f64]| TraitVector::normalized(v.to_vec()).unwrap();
        let p = cipm(&tv(&t), &tv(&h), &tv(&a)).unwrap();
        let q = cipm(&permute(&t), &permute(&h), &permute(&a)).unwrap();
        prop_assert!((p - q).abs() < 1e-12);

        let lib = SignatureLibrary::new(tv(&h), [(0, tv(&a))]);
        let plib = SignatureLibrary::new(permute(&h), [(0, permute(&a))]);
        if let (Ok(lib), Ok(plib)) = (lib, plib) {
            let c = lib.classify(&tv(&t)).unwrap();
            let pc = plib.classify(&permute(&t)).unwrap();
            // Verdicts may only differ when a score sits on a boundary.
            let margin = (c.max_cipm() - 0.5).abs().min((c.distance_to_healthy - lib.novelty_threshold()).abs());
            if margin > 1e-9 {
                prop_assert_eq!(c.verdict, pc.verdict);
            }
        }
    }

    #[test]
    fn rings_are_exact_distance_shells(
        theta in 4usize..=16,
        z in 4usize..=16,
        ct in 0usize..16,
        cz in 0usize..16,
        r in 1usize..=10,
    ) {
        let center = LatticeCoord::new(ct % theta, cz % z);
        let ring = ring_coords(center, r, theta, z);
        let set: BTreeSet<_> = ring.iter().copied().collect();
        prop_assert_eq!(set.len(), ring.len());
        let brute: BTreeSet<_> = helix(theta, z)
            .filter(|&c| chebyshev_distance(c, center, theta) == r)
            .collect();
        prop_assert_eq!(set, brute);
    }

    #[test]
    fn same_seed_same_bytes(seed in any::<u64>(), unknown in 0usize..=2) {
        let generated = scenario(12, 16, 1, unknown, 6, 0.05, seed);
        prop_assume!(generated.is_some());
        let (grid, mut spec) = generated.unwrap();
        spec.sensor_noise = 0.02;
        let a = run_aia(&grid, &spec).unwrap().0;
        let b = run_aia(&grid, &spec).unwrap().0;
        for f in [Format::ObservationLog, Format::CurvesTable, Format::PlotSvg] {
            prop_assert_eq!(serialize(&a, f), serialize(&b, f));
        }
    }
}

#[test]
fn unknown_entities_learned_once_each_at_zero_noise() {
    for seed in 0..40 {
        let (grid, spec) = scenario(20, 24, 1, 3, 0, 0.0, seed).unwrap();
        let (aia, state) = run_aia(&grid, &spec).unwrap();
        let present: BTreeSet<TypeId> = grid
            .clusters()
            .iter()
            .map(|c| c.type_id)
            .filter(|&t| t >= 1)
            .collect();
        assert_eq!(state.library.learned().len(), present.len(), "seed {seed}");
        assert_eq!(state.library.known().len(), 1);

        let (oam, _) = run_oam(&grid, &spec).unwrap();
        let detected_unknown = oam
            .observations
            .iter()
            .filter(|o| o.classified_type.is_some())
            .filter(|o| grid.ground_truth_at(o.coord).unwrap().kind.infection_type() != Some(0))
            .count();
        assert_eq!(detected_unknown, 0, "seed {seed}");
        let infected = grid.count_kind(|k| matches!(k, CellKind::Infected(_)));
        let aia_detected = aia
            .observations
            .iter()
            .filter(|o| o.classified_type.is_some())
            .count();
        assert_eq!(aia_detected, infected, "seed {seed}");
    }
}

#[test]
fn aia_superset_of_oam_without_obstacles() {
    for seed in 0..30 {
        let (grid, spec) = scenario(16, 20, 2, 1, 0, 0.05, seed).unwrap();
        let aia: BTreeSet<_> = run_aia(&grid, &spec)
            .unwrap()
            .0
            .observations
            .iter()
            .map(|o| o.coord)
            .collect();
        let oam: BTreeSet<_> = run_oam(&grid, &spec)
            .unwrap()
            .0
            .observations
            .iter()
            .map(|o| o.coord)
            .collect();
        assert!(oam.is_subset(&aia));
        assert_eq!(oam, aia);
    }
}

/// Cells the OAM never targets can be rewritten freely without changing its
/// report: the agent reads ground truth only at its targets.
#[test]
fn oam_ignores_skipped_cells() {
    for seed in 0..20 {
        let (grid, spec) = scenario(16, 24, 1, 1, 20, 0.05, seed).unwrap();
        let (before, state) = run_oam(&grid, &spec).unwrap();
        assert!(!state.skipped.is_empty());
        let mut corrupted = grid.clone();
        for &c in &state.skipped {
            corrupted
                .replace_cell(
                    c,
                    GroundTruth {
                        kind: CellKind::StaticObstacle,
                        true_traits: vec![1.0; M],
                    },
                )
                .unwrap();
        }
        let (after, _) = run_oam(&corrupted, &spec).unwrap();
        assert_eq!(
            serialize(&before, Format::ObservationLog),
            serialize(&after, Format::ObservationLog),
            "seed {seed}"
        );
    }
}

/// Rewriting one cell cannot change anything the automaton recorded before
/// it reached that cell.
#[test]
fn aia_has_no_lookahead() {
    for seed in 0..20 {
        let (grid, spec) = scenario(16, 24, 1, 1, 4, 0.05, seed).unwrap();
        let (before, _) = run_aia(&grid, &spec).unwrap();
        let target = before.observations[before.observations.len() / 2].coord;
        let mut corrupted = grid.clone();
        corrupted
            .replace_cell(
                target,
                GroundTruth {
                    kind: CellKind::Infected(0),
                    true_traits: one_hot_signature(M, 0, 0.0, 1.0),
                },
            )
            .unwrap();
        let (after, _) = run_aia(&corrupted, &spec).unwrap();
        let cut = before.observations.len() / 2;
        assert_eq!(
            before.observations[..cut],
            after.observations[..cut],
            "seed {seed}"
        );
    }
}

#[test]
fn obstacle_cost_formulas() {
    for k in [1usize, 2, 5, 17] {
        let mut w = WorldSpec::new(16, 16, vec![0.1; M]);
        w.static_obstacle_signature = one_hot_signature(M, M - 1, 0.1, 0.9);
        w.static_obstacles = k;
        w.seed = k as u64;
        let grid = generate_world(&w).unwrap();
        let spec = AgentSpec::new(vec![0.1; M], BTreeMap::new());
        let (aia, state) = run_aia(&grid, &spec).unwrap();
        assert_eq!(aia.obstacle_encounters, k as u64);
        assert_eq!(
            aia.avoidance_steps,
            spec.d_avoid + (k as u64 - 1) * spec.d_avoid_known
        );
        assert_eq!(state.memory.entries().len(), 1);
        assert_eq!(state.memory.entries()[0].encounters, k as u64);
        let (oam, _) = run_oam(&grid, &spec).unwrap();
        assert_eq!(oam.avoidance_steps, oam.obstacle_encounters * spec.d_avoid);
    }
}
