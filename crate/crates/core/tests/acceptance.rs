//! Acceptance checks. Runs as a plain binary and prints one PASS/FAIL line
//! per criterion; exits non-zero if any fails.

mod common;

use lumen_scan::agents::{run_aia, run_oam, AgentSpec};
use lumen_scan::harness::{parse_config, run_suite, SuiteOptions};
use lumen_scan::search::Phase;
use lumen_scan::sensing::{average_l, cipm, to_scale_1_10, TraitVector};
use lumen_scan::world::{
    generate_world, one_hot_signature, ClusterSpec, LatticeCoord, PlacedCluster, TypeId, WorldSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn shipped_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/figure8.cfg")
}

fn worked_example() -> Check {
    let t = TraitVector::normalized(vec![0.7, 0.6]).map_err(|e| e.to_string())?;
    let avg = average_l(&t).map_err(|e| e.to_string())?;
    ensure(avg == 0.65, || {
        format!("average_L = {avg:?}, expected exactly 0.65")
    })?;
    let one = TraitVector::normalized(vec![avg]).map_err(|e| e.to_string())?;
    let s = to_scale_1_10(&one).map_err(|e| e.to_string())?.values()[0];
    ensure((s - 6.85).abs() < 1e-12, || {
        format!("scaled = {s}, expected 6.85")
    })?;
    Ok(format!("average_L = {avg}, scaled = {s}"))
}

fn coverage() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for seed in 0..100u64 {
        let theta = rng.random_range(4..=32);
        let z = rng.random_range(4..=64);
        let mut w = WorldSpec::new(theta, z, vec![0.2, 0.4, 0.6]);
        w.trait_noise = 0.05;
        w.seed = seed;
        let grid = generate_world(&w).map_err(|e| e.to_string())?;
        let mut spec = AgentSpec::new(
            vec![0.2, 0.4, 0.6],
            BTreeMap::from([(0, vec![0.9, 0.1, 0.9])]),
        );
        spec.seed = seed;
        let (report, _) = run_aia(&grid, &spec).map_err(|e| e.to_string())?;
        let seen: BTreeSet<LatticeCoord> = report.observations.iter().map(|o| o.coord).collect();
        let raster: BTreeSet<LatticeCoord> = (0..z)
            .flat_map(|zz| (0..theta).map(move |t| LatticeCoord::new(t, zz)))
            .collect();
        ensure(report.observations.len() == theta * z, || {
            format!(
                "seed {seed}: {} observations on {theta}x{z}",
                report.observations.len()
            )
        })?;
        ensure(seen == raster, || {
            format!("seed {seed}: observed set differs from raster")
        })?;
    }
    Ok("100 healthy worlds, every cell observed exactly once".to_string())
}

fn cluster_completeness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut components = 0;
    for seed in 0..50u64 {
        let m = 6;
        let mut w = WorldSpec::new(32, 64, vec![0.1; m]);
        let types = rng.random_range(1..=2usize);
        w.infection_signatures = (0..types)
            .map(|k| one_hot_signature(m, k, 0.1, 0.9))
            .collect();
        let total = rng.random_range(1..=4usize);
        for i in 0..total {
            w.clusters.push(ClusterSpec {
                type_id: (i % types) as TypeId,
                count: 1,
                radius_min: 0,
                radius_max: 4,
            });
        }
        w.seed = seed;
        let grid = generate_world(&w).map_err(|e| e.to_string())?;
        let known = (0..types)
            .map(|k| (k as TypeId, w.infection_signatures[k].clone()))
            .collect();
        let (report, _) =
            run_aia(&grid, &AgentSpec::new(vec![0.1; m], known)).map_err(|e| e.to_string())?;
        common::check_cluster_completeness(&grid, &report)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        components += common::infected_components(&grid).len();
    }
    Ok(format!(
        "50 worlds, {components} flood-fill components matched"
    ))
}

fn threshold_run(world_level: f64) -> Result<usize, String> {
    let mut w = WorldSpec::new(12, 12, vec![0.0]);
    w.infection_signatures = vec![vec![world_level]];
    w.fixed_clusters.push(PlacedCluster {
        type_id: 0,
        center: LatticeCoord::new(5, 5),
        radius: 1,
    });
    let grid = generate_world(&w).map_err(|e| e.to_string())?;
    let spec = AgentSpec::new(vec![0.0], BTreeMap::from([(0, vec![1.0])]));
    let (report, state) = run_aia(&grid, &spec).map_err(|e| e.to_string())?;
    let has_h = report
        .observations
        .iter()
        .any(|o| o.phase == Phase::Horizontal);
    ensure(has_h == (state.search.horizontal_entries() > 0), || {
        "phase log disagrees".to_string()
    })?;
    Ok(state.search.horizontal_entries())
}

fn threshold() -> Check {
    let at = threshold_run(0.5)?;
    ensure(at == 0, || {
        format!("CIPM exactly 0.5 opened {at} horizontal episodes")
    })?;
    let above = threshold_run(0.5 + 1e-9)?;
    ensure(above > 0, || {
        "CIPM 0.5 + 1e-9 did not open a horizontal episode".to_string()
    })?;
    Ok(format!("P = 0.5 -> 0 episodes, P = 0.5 + 1e-9 -> {above}"))
}

fn zero_convention() -> Check {
    let m = 4;
    let mut w = WorldSpec::new(24, 24, vec![0.1; m]);
    // Type 2 blends both known signatures and is not given to the agent.
    w.infection_signatures = vec![
        one_hot_signature(m, 0, 0.1, 0.9),
        one_hot_signature(m, 1, 0.1, 0.9),
        vec![0.9, 0.9, 0.1, 0.1],
    ];
    for (type_id, theta, z) in [(0, 4, 4), (1, 14, 8), (2, 6, 16), (0, 18, 18)] {
        w.fixed_clusters.push(PlacedCluster {
            type_id,
            center: LatticeCoord::new(theta, z),
            radius: 2,
        });
    }
    let grid = generate_world(&w).map_err(|e| e.to_string())?;
    let known = (0..2)
        .map(|k| (k as TypeId, w.infection_signatures[k].clone()))
        .collect();
    let (report, _) =
        run_aia(&grid, &AgentSpec::new(vec![0.1; m], known)).map_err(|e| e.to_string())?;

    let curve = |t: TypeId| -> Result<BTreeMap<u64, f64>, String> {
        Ok(report
            .cipg
            .get(&t)
            .ok_or_else(|| format!("no CIPG curve for type {t}"))?
            .points
            .iter()
            .copied()
            .collect())
    };
    let (c0, c1) = (curve(0)?, curve(1)?);
    ensure(c0.keys().eq(c1.keys()), || {
        "curves carry different point indices".to_string()
    })?;
    let mut duals = 0;
    let mut zeros = 0;
    for o in &report.observations {
        let (p0, p1) = (c0.get(&o.n), c1.get(&o.n));
        let dual = o.co_types.len() == 1;
        if let (Some(&p0), Some(&p1)) = (p0, p1) {
            if dual {
                duals += 1;
                ensure(p0 == p1 && p0 > 0.5, || {
                    format!("dual cell n={} has {p0} vs {p1}", o.n)
                })?;
            } else if o.classified_type == Some(0) {
                zeros += 1;
                ensure(p1 == 0.0, || {
                    format!("type-0 cell n={} has {p1} on type 1", o.n)
                })?;
            } else if o.classified_type == Some(1) {
                zeros += 1;
                ensure(p0 == 0.0, || {
                    format!("type-1 cell n={} has {p0} on type 0", o.n)
                })?;
            }
        }
    }
    ensure(duals == 25, || {
        format!("expected 25 dual cells, saw {duals}")
    })?;
    Ok(format!(
        "{} points per curve, {duals} dual cells, {zeros} zero-filled",
        c0.len()
    ))
}

fn suite_direction() -> Check {
    let started = Instant::now();
    let specs = parse_config(&shipped_config()).map_err(|e| e.to_string())?;
    ensure(
        specs
            .iter()
            .all(|s| s.repetitions == 10 && s.base_seed == 0),
        || "shipped config is not at R=10, seed 0".to_string(),
    )?;
    let out = run_suite(&specs, &SuiteOptions::default()).map_err(|e| e.to_string())?;
    let mut ke_gap: f64 = 0.0;
    let mut summary = Vec::new();
    for r in &out.rows {
        let (c, d) = (r.metric_c.unwrap(), r.metric_d.unwrap());
        ensure(d >= c, || format!("{}: D {d:.1} < C {c:.1}", r.scenario))?;
        if r.unknown_entities == 0 {
            ke_gap = ke_gap.max(d - c);
        }
        summary.push(format!("{} {c:.0}/{d:.0}", r.scenario));
    }
    for r in out.rows.iter().filter(|r| r.unknown_entities > 0) {
        let gap = r.metric_d.unwrap() - r.metric_c.unwrap();
        ensure(gap > ke_gap, || {
            format!("{}: gap {gap:.1} <= KE gap {ke_gap:.1}", r.scenario)
        })?;
    }
    let two = out
        .rows
        .iter()
        .find(|r| r.scenario == "2UKE")
        .ok_or_else(|| "no 2UKE row".to_string())?;
    let (c, d) = (two.metric_c.unwrap(), two.metric_d.unwrap());
    ensure(c < 50.0 && d > 70.0, || format!("2UKE: C {c:.1}, D {d:.1}"))?;
    Ok(format!(
        "C/D {}; max KE gap {ke_gap:.1}; {:.1}s",
        summary.join(", "),
        started.elapsed().as_secs_f64()
    ))
}

fn obstacle_learning() -> Check {
    let m = 6;
    let mut w = WorldSpec::new(32, 64, vec![0.1; m]);
    w.infection_signatures = vec![one_hot_signature(m, 0, 0.1, 0.9)];
    w.clusters.push(ClusterSpec {
        type_id: 0,
        count: 2,
        radius_min: 1,
        radius_max: 3,
    });
    w.static_obstacle_signature = one_hot_signature(m, 5, 0.1, 0.9);
    w.static_obstacles = 300;
    w.trait_noise = 0.05;
    w.seed = 7;
    let grid = generate_world(&w).map_err(|e| e.to_string())?;
    let spec = AgentSpec::new(
        vec![0.1; m],
        BTreeMap::from([(0, w.infection_signatures[0].clone())]),
    );
    let (aia, aia_state) = run_aia(&grid, &spec).map_err(|e| e.to_string())?;
    let (oam, oam_state) = run_oam(&grid, &spec).map_err(|e| e.to_string())?;

    let k = aia.obstacle_encounters;
    let expected_aia = spec.d_avoid + (k - 1) * spec.d_avoid_known;
    ensure(k == 300, || format!("AIA met {k} obstacles, expected 300"))?;
    ensure(aia.avoidance_steps == expected_aia, || {
        format!("AIA avoidance {} != {expected_aia}", aia.avoidance_steps)
    })?;
    ensure(aia_state.library.learned().len() == 1, || {
        "AIA learned more than one type".to_string()
    })?;
    let ko = oam.obstacle_encounters;
    ensure(oam.avoidance_steps == ko * spec.d_avoid, || {
        format!(
            "OAM avoidance {} != {ko} x {}",
            oam.avoidance_steps, spec.d_avoid
        )
    })?;
    ensure(
        oam_state.skipped.len() as u64 <= ko * spec.s_skip as u64,
        || "OAM over-skipped".to_string(),
    )?;
    ensure(aia.step_count < oam.step_count, || {
        format!(
            "AIA steps {} not below OAM {}",
            aia.step_count, oam.step_count
        )
    })?;
    Ok(format!(
        "k={k}: AIA avoid {} / steps {}, OAM k={ko}: avoid {} / steps {}",
        aia.avoidance_steps, aia.step_count, oam.avoidance_steps, oam.step_count
    ))
}

fn collect_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Check {
    let specs = parse_config(&shipped_config()).map_err(|e| e.to_string())?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for (name, parallel) in [("seq", false), ("par", true), ("par2", true)] {
        let dir = tmp.path().join(name);
        let opts = SuiteOptions {
            out_dir: Some(dir.clone()),
            emit_plots: true,
            parallel,
            ..SuiteOptions::default()
        };
        run_suite(&specs, &opts).map_err(|e| e.to_string())?;
        trees.push(collect_files(&dir));
    }
    for t in &trees[1..] {
        ensure(t.keys().eq(trees[0].keys()), || {
            "artifact file sets differ".to_string()
        })?;
        for (path, bytes) in t {
            ensure(&trees[0][path] == bytes, || {
                format!("{} differs", path.display())
            })?;
        }
    }
    Ok(format!(
        "{} artifact files identical across 3 runs",
        trees[0].len()
    ))
}

fn cipm_complement() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let m = rng.random_range(1..=12);
        let mut v = || {
            TraitVector::normalized((0..m).map(|_| rng.random_range(0.0..=1.0)).collect()).unwrap()
        };
        let (t, h, a) = (v(), v(), v());
        let sum = cipm(&t, &h, &a).unwrap() + cipm(&t, &a, &h).unwrap();
        worst = worst.max((sum - 1.0).abs());
    }
    ensure(worst < 1e-9, || format!("worst deviation {worst:e}"))?;
    Ok(format!("10000 triples, worst |sum - 1| = {worst:e}"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 worked example", worked_example),
        ("2 coverage", coverage),
        ("3 cluster completeness", cluster_completeness),
        ("4 threshold semantics", threshold),
        ("5 zero convention", zero_convention),
        ("6 scenario suite direction", suite_direction),
        ("7 obstacle learning", obstacle_learning),
        ("8 determinism", determinism),
        ("9 cipm complement", cipm_complement),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome =
            std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".to_string()));
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
