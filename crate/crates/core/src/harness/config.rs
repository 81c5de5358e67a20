//! Scenario config files.
//!
//! The format is TOML. An optional `[defaults]` table sets values shared by
//! every scenario; each `[[scenario]]` table names one scenario and may
//! override any default. Entity signatures are generated unless a scenario
//! lists them explicitly in `[[scenario.entity]]` tables:
//!
//! ```toml
//! [defaults]
//! theta_size = 32
//! z_size = 64
//! repetitions = 10
//!
//! [[scenario]]
//! name = "1UKE"
//! known_entities = 1
//! unknown_entities = 1
//! static_obstacles = 16
//!
//! [[scenario]]
//! name = "custom"
//! trait_count = 2
//! healthy_signature = [0.1, 0.1]
//! known_entities = 1
//! unknown_entities = 1
//!
//! [[scenario.entity]]
//! signature = [0.9, 0.1]
//! known = true
//!
//! [[scenario.entity]]
//! signature = [0.1, 0.9]
//! known = false
//! clusters = 3
//! ```
//!
//! Known entities get type ids `0..KE` and unknown ones follow. Unknown keys
//! are rejected.

use crate::agents::AgentSpec;
use crate::world::{one_hot_signature, ClusterSpec, TypeId, WorldSpec};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

pub const DEFAULT_THETA_SIZE: usize = 32;
pub const DEFAULT_Z_SIZE: usize = 64;
pub const DEFAULT_TRAIT_COUNT: usize = 16;
pub const DEFAULT_TRAIT_NOISE: f64 = 0.05;
pub const DEFAULT_CLUSTERS_PER_TYPE: usize = 2;
pub const DEFAULT_REPETITIONS: usize = 10;
/// Off-peak and peak levels of the generated one-hot signatures.
pub const SIGNATURE_BASE: f64 = 0.1;
pub const SIGNATURE_PEAK: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}, key `{k}`: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "key `{k}`: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// One fully resolved scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    /// World template; the seed is replaced per repetition.
    pub world: WorldSpec,
    /// Parameters shared by both agents; the seed is replaced per repetition.
    pub agent: AgentSpec,
    pub known_entities: usize,
    pub unknown_entities: usize,
    pub repetitions: usize,
    pub base_seed: u64,
}

impl ScenarioSpec {
    pub fn seed_for(&self, repetition: usize) -> u64 {
        self.base_seed.wrapping_add(repetition as u64)
    }

    pub fn world_for(&self, repetition: usize) -> WorldSpec {
        let mut w = self.world.clone();
        w.seed = self.seed_for(repetition);
        w
    }

    pub fn agent_for(&self, repetition: usize) -> AgentSpec {
        let mut a = self.agent.clone();
        a.seed = self.seed_for(repetition);
        a
    }

    /// Type ids withheld from the agents' starting library.
    pub fn unknown_type_ids(&self) -> Vec<TypeId> {
        (self.known_entities..self.known_entities + self.unknown_entities)
            .map(|t| t as TypeId)
            .collect()
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntity {
    signature: Option<Vec<f64>>,
    known: Option<bool>,
    clusters: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSection {
    name: Option<String>,
    theta_size: Option<usize>,
    z_size: Option<usize>,
    radius: Option<f64>,
    trait_count: Option<usize>,
    trait_noise: Option<f64>,
    healthy_signature: Option<Vec<f64>>,
    static_obstacle_signature: Option<Vec<f64>>,
    pathogen_signature: Option<Vec<f64>>,
    known_entities: Option<usize>,
    unknown_entities: Option<usize>,
    clusters_per_type: Option<usize>,
    cluster_radius_min: Option<usize>,
    cluster_radius_max: Option<usize>,
    static_obstacles: Option<usize>,
    pathogens: Option<usize>,
    repetitions: Option<usize>,
    seed: Option<u64>,
    payload_units: Option<u64>,
    sensor_noise: Option<f64>,
    d_avoid: Option<u64>,
    d_avoid_known: Option<u64>,
    s_skip: Option<usize>,
    match_tolerance: Option<f64>,
    dual_margin: Option<f64>,
    novelty_threshold: Option<f64>,
    entity: Option<Vec<RawEntity>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    defaults: Option<RawSection>,
    #[serde(default)]
    scenario: Vec<RawSection>,
}

macro_rules! merge {
    ($d:expr, $s:expr, $($f:ident),*) => {
        RawSection { $($f: $s.$f.clone().or_else(|| $d.$f.clone()),)* }
    };
}

fn merged(d: &RawSection, s: &RawSection) -> RawSection {
    merge!(
        d,
        s,
        name,
        theta_size,
        z_size,
        radius,
        trait_count,
        trait_noise,
        healthy_signature,
        static_obstacle_signature,
        pathogen_signature,
        known_entities,
        unknown_entities,
        clusters_per_type,
        cluster_radius_min,
        cluster_radius_max,
        static_obstacles,
        pathogens,
        repetitions,
        seed,
        payload_units,
        sensor_noise,
        d_avoid,
        d_avoid_known,
        s_skip,
        match_tolerance,
        dual_margin,
        novelty_threshold,
        entity
    )
}

/// Locates the line (1-based) of `key` inside the `index`-th `[[scenario]]`
/// table, or inside `[defaults]` when `index` is `None`. Falls back to the
/// table header line.
fn locate(src: &str, index: Option<usize>, key: Option<&str>) -> Option<usize> {
    let mut seen = 0usize;
    let mut in_target = false;
    let mut header = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            in_target = match index {
                None => line == "[defaults]",
                Some(target) if line == "[[scenario]]" => {
                    seen += 1;
                    seen == target + 1
                }
                // Sub-tables of a scenario stay inside it.
                Some(_) => in_target && line.starts_with("[[scenario."),
            };
            if in_target && header.is_none() {
                header = Some(i + 1);
            }
            continue;
        }
        if in_target {
            if let Some(k) = key {
                let lhs = line.split('=').next().unwrap_or("").trim();
                if lhs == k {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

struct Ctx<'a> {
    src: &'a str,
    index: usize,
    name: String,
}

impl Ctx<'_> {
    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: locate(self.src, Some(self.index), Some(key)),
            key: Some(key.to_string()),
            message: format!("scenario `{}`: {}", self.name, message.into()),
        }
    }
}

fn positive<T: PartialOrd + Default + Copy + fmt::Display>(
    ctx: &Ctx<'_>,
    key: &str,
    v: T,
) -> Result<T, ConfigError> {
    if v > T::default() {
        Ok(v)
    } else {
        Err(ctx.err(key, format!("must be positive, got {v}")))
    }
}

fn resolve(ctx: &Ctx<'_>, r: &RawSection) -> Result<ScenarioSpec, ConfigError> {
    let theta_size = positive(
        ctx,
        "theta_size",
        r.theta_size.unwrap_or(DEFAULT_THETA_SIZE),
    )?;
    let z_size = positive(ctx, "z_size", r.z_size.unwrap_or(DEFAULT_Z_SIZE))?;
    let radius = r.radius.unwrap_or(1.0);
    if !(radius.is_finite() && radius > 0.0) {
        return Err(ctx.err("radius", format!("must be positive, got {radius}")));
    }
    let repetitions = positive(
        ctx,
        "repetitions",
        r.repetitions.unwrap_or(DEFAULT_REPETITIONS),
    )?;
    let known_entities = r
        .known_entities
        .ok_or_else(|| ctx.err("known_entities", "missing required field"))?;
    let unknown_entities = r.unknown_entities.unwrap_or(0);
    let entity_total = known_entities + unknown_entities;

    let trait_count = match (&r.trait_count, &r.healthy_signature) {
        (Some(m), _) => *m,
        (None, Some(h)) => h.len(),
        (None, None) => DEFAULT_TRAIT_COUNT,
    };
    positive(ctx, "trait_count", trait_count)?;
    let healthy = r
        .healthy_signature
        .clone()
        .unwrap_or_else(|| vec![SIGNATURE_BASE; trait_count]);
    let check_len = |key: &str, v: &[f64]| {
        if v.len() != trait_count {
            return Err(ctx.err(
                key,
                format!("has {} values, expected {trait_count}", v.len()),
            ));
        }
        if let Some(x) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(ctx.err(key, format!("value {x} outside [0, 1]")));
        }
        Ok(())
    };
    check_len("healthy_signature", &healthy)?;

    let clusters_per_type = r.clusters_per_type.unwrap_or(DEFAULT_CLUSTERS_PER_TYPE);
    let radius_min = r.cluster_radius_min.unwrap_or(1);
    let radius_max = r.cluster_radius_max.unwrap_or(3);
    if radius_min > radius_max {
        return Err(ctx.err(
            "cluster_radius_max",
            format!("must be at least cluster_radius_min ({radius_min})"),
        ));
    }

    // (signature, cluster count), known entities first.
    let entities: Vec<(Vec<f64>, usize)> = match &r.entity {
        Some(list) => {
            let mut known = Vec::new();
            let mut unknown = Vec::new();
            for e in list {
                let sig = e
                    .signature
                    .clone()
                    .ok_or_else(|| ctx.err("signature", "entity without a signature"))?;
                check_len("signature", &sig)?;
                let entry = (sig, e.clusters.unwrap_or(clusters_per_type));
                if e.known.unwrap_or(true) {
                    known.push(entry);
                } else {
                    unknown.push(entry);
                }
            }
            if known.len() != known_entities {
                return Err(ctx.err(
                    "known_entities",
                    format!(
                        "is {known_entities} but {} known entity signatures are listed",
                        known.len()
                    ),
                ));
            }
            if unknown.len() != unknown_entities {
                return Err(ctx.err(
                    "unknown_entities",
                    format!(
                        "is {unknown_entities} but {} withheld entity signatures are listed",
                        unknown.len()
                    ),
                ));
            }
            known.into_iter().chain(unknown).collect()
        }
        None => {
            // Two trait slots are reserved for the obstacle signatures.
            if entity_total + 2 > trait_count {
                return Err(ctx.err(
                    "unknown_entities",
                    format!(
                        "{entity_total} generated entity types need trait_count >= {}",
                        entity_total + 2
                    ),
                ));
            }
            (0..entity_total)
                .map(|k| {
                    (
                        one_hot_signature(trait_count, k, SIGNATURE_BASE, SIGNATURE_PEAK),
                        clusters_per_type,
                    )
                })
                .collect()
        }
    };

    let static_sig = match &r.static_obstacle_signature {
        Some(s) => s.clone(),
        None if trait_count >= 2 => (0..trait_count)
            .map(|i| {
                if i + 2 >= trait_count {
                    SIGNATURE_PEAK
                } else {
                    SIGNATURE_BASE
                }
            })
            .collect(),
        None => vec![1.0; trait_count],
    };
    check_len("static_obstacle_signature", &static_sig)?;
    let pathogen_sig = match &r.pathogen_signature {
        Some(s) => s.clone(),
        None => one_hot_signature(trait_count, trait_count - 1, SIGNATURE_BASE, SIGNATURE_PEAK),
    };
    check_len("pathogen_signature", &pathogen_sig)?;

    let base_seed = r.seed.unwrap_or(0);
    let mut world = WorldSpec::new(theta_size, z_size, healthy.clone());
    world.radius = radius;
    world.trait_count = trait_count;
    world.trait_noise = r.trait_noise.unwrap_or(DEFAULT_TRAIT_NOISE);
    world.static_obstacle_signature = static_sig;
    world.pathogen_signature = pathogen_sig;
    world.static_obstacles = r.static_obstacles.unwrap_or(0);
    world.pathogens = r.pathogens.unwrap_or(0);
    world.seed = base_seed;
    for (k, (sig, count)) in entities.iter().enumerate() {
        world.infection_signatures.push(sig.clone());
        if *count > 0 {
            world.clusters.push(ClusterSpec {
                type_id: k as TypeId,
                count: *count,
                radius_min,
                radius_max,
            });
        }
    }
    world
        .validate()
        .map_err(|e| ctx.err("theta_size", format!("world: {e}")))?;

    let known: BTreeMap<TypeId, Vec<f64>> = entities[..known_entities]
        .iter()
        .enumerate()
        .map(|(k, (sig, _))| (k as TypeId, sig.clone()))
        .collect();
    let mut agent = AgentSpec::new(healthy, known);
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = r.$f { agent.$f = v; })* };
    }
    set!(
        payload_units,
        sensor_noise,
        d_avoid,
        d_avoid_known,
        s_skip,
        match_tolerance,
        dual_margin
    );
    agent.novelty_threshold = r.novelty_threshold;
    agent.seed = base_seed;
    if let Err(e) = agent.validate() {
        let key = if agent.d_avoid_known >= agent.d_avoid {
            "d_avoid_known"
        } else if agent.match_tolerance <= 0.0 || !agent.match_tolerance.is_finite() {
            "match_tolerance"
        } else {
            "dual_margin"
        };
        return Err(ctx.err(key, e.to_string()));
    }
    if !(agent.sensor_noise.is_finite() && agent.sensor_noise >= 0.0) {
        return Err(ctx.err("sensor_noise", "must be non-negative"));
    }
    agent
        .library()
        .map_err(|e| ctx.err("known_entities", format!("signature library: {e}")))?;

    Ok(ScenarioSpec {
        name: ctx.name.clone(),
        world,
        agent,
        known_entities,
        unknown_entities,
        repetitions,
        base_seed,
    })
}

/// Parses config text into validated scenarios, in file order.
pub fn parse_config_str(src: &str) -> Result<Vec<ScenarioSpec>, ConfigError> {
    let raw: RawConfig = toml::from_str(src).map_err(|e| {
        let line = e
            .span()
            .map(|s| src[..s.start.min(src.len())].matches('\n').count() + 1);
        ConfigError {
            line,
            key: None,
            message: e.message().trim().to_string(),
        }
    })?;
    let defaults = raw.defaults.unwrap_or_default();
    for (key, present) in [
        ("name", defaults.name.is_some()),
        ("entity", defaults.entity.is_some()),
    ] {
        if present {
            return Err(ConfigError {
                line: locate(src, None, Some(key)),
                key: Some(key.to_string()),
                message: "only allowed inside [[scenario]]".to_string(),
            });
        }
    }
    if raw.scenario.is_empty() {
        return Err(ConfigError {
            line: None,
            key: Some("scenario".to_string()),
            message: "config defines no [[scenario]] tables".to_string(),
        });
    }
    let mut specs: Vec<ScenarioSpec> = Vec::with_capacity(raw.scenario.len());
    for (index, s) in raw.scenario.iter().enumerate() {
        let name = s.name.clone().ok_or_else(|| ConfigError {
            line: locate(src, Some(index), None),
            key: Some("name".to_string()),
            message: format!("scenario #{} is missing required field", index + 1),
        })?;
        let ctx = Ctx { src, index, name };
        if specs.iter().any(|p| p.name == ctx.name) {
            return Err(ctx.err("name", "duplicate scenario name"));
        }
        specs.push(resolve(&ctx, &merged(&defaults, s))?);
    }
    Ok(specs)
}

pub fn parse_config(path: &Path) -> Result<Vec<ScenarioSpec>, ConfigError> {
    let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
        line: None,
        key: None,
        message: if e.kind() == std::io::ErrorKind::NotFound {
            format!("config not found: {}", path.display())
        } else {
            format!("cannot read config {}: {e}", path.display())
        },
    })?;
    parse_config_str(&src)
}
