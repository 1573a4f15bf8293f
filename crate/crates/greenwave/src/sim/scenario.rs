//! Scenario files: the JSON document format, its validation, and the
//! interning step that turns names into dense ids.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::network::{
    Downstream, Intersection, Lane, LaneId, LaneNetwork, Movement, MovementId, PhaseProgram,
    Route, RouteId,
};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported scenario schema_version {0}")]
    UnsupportedVersion(u32),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

/// Physical constants of the car-following model.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConstants {
    /// Simulation step length in seconds.
    pub dt: f64,
    /// Maximum acceleration, m/s^2.
    pub a_max: f64,
    /// Minimum standstill gap kept behind a leader's rear bumper, m.
    pub min_gap: f64,
    /// Vehicle length, m.
    pub vehicle_length: f64,
    /// Speeds strictly below this count as halted, m/s.
    pub halt_threshold: f64,
}

impl Default for SimConstants {
    fn default() -> Self {
        SimConstants {
            dt: 1.0,
            a_max: 2.0,
            min_gap: 2.5,
            vehicle_length: 5.0,
            halt_threshold: 0.1,
        }
    }
}

impl SimConstants {
    /// Meters a spawning or crossing vehicle needs free at the lane start.
    pub fn entry_cell(&self) -> f64 {
        self.min_gap + self.vehicle_length
    }
}

// ---------------------------------------------------------------------------
// Document structs (the on-disk JSON shape)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioDoc {
    pub schema_version: u32,
    #[serde(default)]
    pub constants: SimConstants,
    pub lanes: Vec<LaneDoc>,
    pub intersections: Vec<IntersectionDoc>,
    pub movements: Vec<MovementDoc>,
    #[serde(default)]
    pub conflicts: Vec<[String; 2]>,
    pub routes: Vec<RouteDoc>,
    #[serde(default)]
    pub demand: Vec<DemandDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LaneDoc {
    pub id: String,
    pub length: f64,
    pub speed_limit: f64,
    /// Intersection the lane feeds; omitted when the lane exits the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub downstream: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntersectionDoc {
    pub id: String,
    pub incoming: Vec<String>,
    /// Phases as lists of movement ids.
    pub phases: Vec<Vec<String>>,
    pub yellow_duration: f64,
    pub decision_interval: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MovementDoc {
    pub id: String,
    pub from: String,
    pub to: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RouteDoc {
    pub id: String,
    pub lanes: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DemandDoc {
    pub depart: f64,
    pub route: String,
}

// ---------------------------------------------------------------------------
// Validated scenario
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct DemandEntry {
    pub depart: f64,
    pub route: RouteId,
}

/// A parsed, validated scenario. Cheap to clone; simulations share the
/// network and demand through `Arc`.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub network: Arc<LaneNetwork>,
    pub demand: Arc<Vec<DemandEntry>>,
    pub constants: SimConstants,
}

/// Read and validate a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    let doc: ScenarioDoc = serde_json::from_str(&text)?;
    Scenario::from_doc(&doc)
}

/// Write a scenario document as pretty-printed JSON.
pub fn save_scenario(doc: &ScenarioDoc, path: &Path) -> Result<(), ScenarioError> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

impl Scenario {
    pub fn from_doc(doc: &ScenarioDoc) -> Result<Scenario, ScenarioError> {
        if doc.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(ScenarioError::UnsupportedVersion(doc.schema_version));
        }
        let c = doc.constants;
        if c.dt <= 0.0 || c.a_max <= 0.0 || c.vehicle_length <= 0.0 {
            return Err(invalid("constants dt, a_max, vehicle_length must be positive"));
        }
        if c.min_gap < 0.0 || c.halt_threshold < 0.0 {
            return Err(invalid("constants min_gap and halt_threshold must be non-negative"));
        }

        // Lanes.
        let mut lane_names = HashMap::new();
        for (i, l) in doc.lanes.iter().enumerate() {
            if lane_names.insert(l.id.clone(), LaneId(i)).is_some() {
                return Err(invalid(format!("duplicate lane id '{}'", l.id)));
            }
            if l.length <= 0.0 {
                return Err(invalid(format!("lane '{}' has non-positive length", l.id)));
            }
            if l.speed_limit <= 0.0 {
                return Err(invalid(format!("lane '{}' has non-positive speed limit", l.id)));
            }
        }

        // Intersections (names first so lane downstreams can resolve).
        let mut intersection_names = HashMap::new();
        for (i, x) in doc.intersections.iter().enumerate() {
            if intersection_names.insert(x.id.clone(), super::network::IntersectionId(i)).is_some() {
                return Err(invalid(format!("duplicate intersection id '{}'", x.id)));
            }
        }

        let lanes: Vec<Lane> = doc
            .lanes
            .iter()
            .map(|l| {
                let downstream = match &l.downstream {
                    None => Ok(Downstream::Sink),
                    Some(name) => intersection_names
                        .get(name)
                        .copied()
                        .map(Downstream::Intersection)
                        .ok_or_else(|| {
                            invalid(format!(
                                "lane '{}' references unknown downstream intersection '{}'",
                                l.id, name
                            ))
                        }),
                }?;
                Ok(Lane {
                    name: l.id.clone(),
                    length: l.length,
                    speed_limit: l.speed_limit,
                    downstream,
                })
            })
            .collect::<Result<_, ScenarioError>>()?;

        // Movements.
        let mut movement_names = HashMap::new();
        let mut movements = Vec::with_capacity(doc.movements.len());
        for (i, m) in doc.movements.iter().enumerate() {
            if movement_names.insert(m.id.clone(), MovementId(i)).is_some() {
                return Err(invalid(format!("duplicate movement id '{}'", m.id)));
            }
            let from = *lane_names
                .get(&m.from)
                .ok_or_else(|| invalid(format!("movement '{}' references unknown lane '{}'", m.id, m.from)))?;
            let to = *lane_names
                .get(&m.to)
                .ok_or_else(|| invalid(format!("movement '{}' references unknown lane '{}'", m.id, m.to)))?;
            if from == to {
                return Err(invalid(format!("movement '{}' loops lane '{}' onto itself", m.id, m.from)));
            }
            if !matches!(lanes[from.0].downstream, Downstream::Intersection(_)) {
                return Err(invalid(format!(
                    "movement '{}' starts on lane '{}' which ends at a sink",
                    m.id, m.from
                )));
            }
            movements.push(Movement {
                name: m.id.clone(),
                from,
                to,
            });
        }

        // Conflict table: symmetric set of movement pairs that must never
        // share a phase.
        let mut conflict_set: HashSet<(MovementId, MovementId)> = HashSet::new();
        for pair in &doc.conflicts {
            let a = *movement_names
                .get(&pair[0])
                .ok_or_else(|| invalid(format!("conflict pair references unknown movement '{}'", pair[0])))?;
            let b = *movement_names
                .get(&pair[1])
                .ok_or_else(|| invalid(format!("conflict pair references unknown movement '{}'", pair[1])))?;
            conflict_set.insert((a.min(b), a.max(b)));
        }

        // Intersections: incoming order, phases, timings.
        let mut movement_phase_mask = vec![0u32; movements.len()];
        let mut intersections = Vec::with_capacity(doc.intersections.len());
        for (xi, x) in doc.intersections.iter().enumerate() {
            if x.incoming.is_empty() {
                return Err(invalid(format!("intersection '{}' has no incoming lanes", x.id)));
            }
            if x.phases.len() < 2 {
                return Err(invalid(format!(
                    "intersection '{}' needs at least 2 phases, has {}",
                    x.id,
                    x.phases.len()
                )));
            }
            if x.phases.len() > 32 {
                return Err(invalid(format!("intersection '{}' has more than 32 phases", x.id)));
            }
            if x.yellow_duration < 0.0 {
                return Err(invalid(format!("intersection '{}' has negative yellow_duration", x.id)));
            }
            let steps = x.decision_interval / c.dt;
            if x.decision_interval <= 0.0 || (steps - steps.round()).abs() > 1e-9 || steps.round() < 1.0 {
                return Err(invalid(format!(
                    "intersection '{}' decision_interval must be a positive multiple of dt",
                    x.id
                )));
            }
            let mut incoming = Vec::with_capacity(x.incoming.len());
            let mut seen = HashSet::new();
            for ln in &x.incoming {
                let lid = *lane_names
                    .get(ln)
                    .ok_or_else(|| invalid(format!("intersection '{}' lists unknown incoming lane '{}'", x.id, ln)))?;
                if !seen.insert(lid) {
                    return Err(invalid(format!("intersection '{}' lists lane '{}' twice", x.id, ln)));
                }
                if lanes[lid.0].downstream != Downstream::Intersection(super::network::IntersectionId(xi)) {
                    return Err(invalid(format!(
                        "lane '{}' is listed as incoming to intersection '{}' but does not end there",
                        ln, x.id
                    )));
                }
                incoming.push(lid);
            }
            let mut phases = Vec::with_capacity(x.phases.len());
            for (pi, phase) in x.phases.iter().enumerate() {
                let mut ids = Vec::with_capacity(phase.len());
                for mn in phase {
                    let mid = *movement_names.get(mn).ok_or_else(|| {
                        invalid(format!(
                            "intersection '{}' phase {} references unknown movement '{}'",
                            x.id, pi, mn
                        ))
                    })?;
                    let from = movements[mid.0].from;
                    if lanes[from.0].downstream != Downstream::Intersection(super::network::IntersectionId(xi)) {
                        return Err(invalid(format!(
                            "intersection '{}' phase {} uses movement '{}' that belongs elsewhere",
                            x.id, pi, mn
                        )));
                    }
                    movement_phase_mask[mid.0] |= 1u32 << pi;
                    ids.push(mid);
                }
                // Declared-conflict check inside the phase.
                for (i, &a) in ids.iter().enumerate() {
                    for &b in &ids[i + 1..] {
                        if conflict_set.contains(&(a.min(b), a.max(b))) {
                            return Err(invalid(format!(
                                "intersection '{}' phase {} grants conflicting movements '{}' and '{}'",
                                x.id,
                                pi,
                                movements[a.0].name,
                                movements[b.0].name
                            )));
                        }
                    }
                }
                phases.push(ids);
            }
            intersections.push(Intersection {
                name: x.id.clone(),
                incoming,
                program: PhaseProgram {
                    phases,
                    yellow_duration: x.yellow_duration,
                    decision_interval: x.decision_interval,
                },
            });
        }

        // Every lane feeding an intersection must be in its incoming list.
        for (li, lane) in lanes.iter().enumerate() {
            if let Downstream::Intersection(ii) = lane.downstream {
                if !intersections[ii.0].incoming.contains(&LaneId(li)) {
                    return Err(invalid(format!(
                        "lane '{}' feeds intersection '{}' but is missing from its incoming list",
                        lane.name, intersections[ii.0].name
                    )));
                }
            }
        }

        // Routes: connected paths ending at a sink.
        let movement_by_lanes: HashMap<(LaneId, LaneId), MovementId> = movements
            .iter()
            .enumerate()
            .map(|(i, m)| ((m.from, m.to), MovementId(i)))
            .collect();
        let mut route_names = HashMap::new();
        let mut routes = Vec::with_capacity(doc.routes.len());
        for (ri, r) in doc.routes.iter().enumerate() {
            if route_names.insert(r.id.clone(), RouteId(ri)).is_some() {
                return Err(invalid(format!("duplicate route id '{}'", r.id)));
            }
            if r.lanes.is_empty() {
                return Err(invalid(format!("route '{}' has no lanes", r.id)));
            }
            let mut lane_ids = Vec::with_capacity(r.lanes.len());
            for ln in &r.lanes {
                let lid = *lane_names
                    .get(ln)
                    .ok_or_else(|| invalid(format!("route '{}' references unknown lane '{}'", r.id, ln)))?;
                lane_ids.push(lid);
            }
            let mut hop_movements = Vec::with_capacity(lane_ids.len().saturating_sub(1));
            for pair in lane_ids.windows(2) {
                let mid = movement_by_lanes.get(&(pair[0], pair[1])).ok_or_else(|| {
                    invalid(format!(
                        "route '{}' jumps from lane '{}' to '{}' without a declared movement",
                        r.id, lanes[pair[0].0].name, lanes[pair[1].0].name
                    ))
                })?;
                hop_movements.push(*mid);
            }
            let last = *lane_ids.last().expect("nonempty route");
            if lanes[last.0].downstream != Downstream::Sink {
                return Err(invalid(format!(
                    "route '{}' ends on lane '{}' which does not exit the model",
                    r.id, lanes[last.0].name
                )));
            }
            let expected_travel_time = lane_ids
                .iter()
                .map(|l| lanes[l.0].length / lanes[l.0].speed_limit)
                .sum();
            routes.push(Route {
                name: r.id.clone(),
                lanes: lane_ids,
                movements: hop_movements,
                expected_travel_time,
            });
        }

        // Demand, sorted by departure (stable for equal times).
        let mut demand = Vec::with_capacity(doc.demand.len());
        for (di, d) in doc.demand.iter().enumerate() {
            let route = *route_names
                .get(&d.route)
                .ok_or_else(|| invalid(format!("demand entry {} references unknown route '{}'", di, d.route)))?;
            if d.depart < 0.0 || !d.depart.is_finite() {
                return Err(invalid(format!("demand entry {} has invalid depart time {}", di, d.depart)));
            }
            demand.push(DemandEntry {
                depart: d.depart,
                route,
            });
        }
        demand.sort_by(|a, b| a.depart.partial_cmp(&b.depart).expect("finite departs"));

        let network = LaneNetwork::from_parts(
            lanes,
            intersections,
            movements,
            routes,
            lane_names,
            intersection_names,
            route_names,
            movement_phase_mask,
        );
        Ok(Scenario {
            network: Arc::new(network),
            demand: Arc::new(demand),
            constants: c,
        })
    }
}

// ---------------------------------------------------------------------------
// Random scenarios for property testing and fuzzing
// ---------------------------------------------------------------------------

/// Generate a small random—but always valid—scenario: a chain of one to
/// three intersections with random lanes, phases, routes, and demand.
pub fn random_scenario(seed: u64) -> ScenarioDoc {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_int = rng.gen_range(1..=3usize);
    // One decision cadence per scenario; the episode loop requires it.
    let decision_interval = rng.gen_range(4..=6) as f64;

    let mut lanes: Vec<LaneDoc> = Vec::new();
    let mut movements: Vec<MovementDoc> = Vec::new();
    let mut intersections: Vec<IntersectionDoc> = Vec::new();
    let mut conflicts: Vec<[String; 2]> = Vec::new();
    let mut source_lanes: Vec<String> = Vec::new();
    // Lanes feeding intersection k that were created as exits of k - 1.
    let mut connectors: Vec<String> = Vec::new();

    let mk_lane = |lanes: &mut Vec<LaneDoc>, rng: &mut ChaCha8Rng, prefix: String, downstream: Option<String>| {
        let id = format!("{prefix}_{}", lanes.len());
        lanes.push(LaneDoc {
            id: id.clone(),
            length: rng.gen_range(60.0..150.0_f64).round(),
            speed_limit: rng.gen_range(8.0..14.0_f64).round(),
            downstream,
        });
        id
    };

    for k in 0..n_int {
        let iname = format!("x{k}");
        // Local source lanes plus whatever the previous intersection feeds in.
        let n_src = rng.gen_range(2..=3usize);
        let mut incoming: Vec<String> = Vec::new();
        for _ in 0..n_src {
            let id = mk_lane(&mut lanes, &mut rng, format!("src{k}"), Some(iname.clone()));
            source_lanes.push(id.clone());
            incoming.push(id);
        }
        incoming.extend(connectors.drain(..));

        // Exits: connectors toward the next intersection, the rest sinks.
        let mut exits: Vec<String> = Vec::new();
        if k + 1 < n_int {
            for _ in 0..rng.gen_range(1..=2usize) {
                let id = mk_lane(&mut lanes, &mut rng, format!("link{k}"), Some(format!("x{}", k + 1)));
                connectors.push(id.clone());
                exits.push(id);
            }
        }
        for _ in 0..rng.gen_range(1..=2usize) {
            let id = mk_lane(&mut lanes, &mut rng, format!("out{k}"), None);
            exits.push(id);
        }

        // One or two movements per incoming lane.
        let mut local_movements: Vec<String> = Vec::new();
        for lane in &incoming {
            let n_m = rng.gen_range(1..=2usize.min(exits.len()));
            let mut picked = HashSet::new();
            for _ in 0..n_m {
                let to = &exits[rng.gen_range(0..exits.len())];
                if !picked.insert(to.clone()) {
                    continue;
                }
                let id = format!("m{}_{}", k, movements.len());
                movements.push(MovementDoc {
                    id: id.clone(),
                    from: lane.clone(),
                    to: to.clone(),
                });
                local_movements.push(id);
            }
        }

        // Round-robin the movements into phases; cross-phase pairs conflict.
        let n_phases = rng.gen_range(2..=3usize.min(local_movements.len()).max(2));
        let mut phases: Vec<Vec<String>> = vec![Vec::new(); n_phases];
        for (i, m) in local_movements.iter().enumerate() {
            phases[i % n_phases].push(m.clone());
        }
        for (pi, pa) in phases.iter().enumerate() {
            for pb in phases.iter().skip(pi + 1) {
                for a in pa {
                    for b in pb {
                        conflicts.push([a.clone(), b.clone()]);
                    }
                }
            }
        }
        intersections.push(IntersectionDoc {
            id: iname,
            incoming,
            phases,
            yellow_duration: *[0.0, 2.0, 3.0].get(rng.gen_range(0..3)).unwrap(),
            decision_interval,
        });
    }

    // A route per source lane: walk declared movements until a sink.
    let by_from: HashMap<String, Vec<usize>> = {
        let mut m: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, mv) in movements.iter().enumerate() {
            m.entry(mv.from.clone()).or_default().push(i);
        }
        m
    };
    let lane_sinks: HashMap<String, bool> =
        lanes.iter().map(|l| (l.id.clone(), l.downstream.is_none())).collect();
    let mut routes = Vec::new();
    for (ri, src) in source_lanes.iter().enumerate() {
        let mut path = vec![src.clone()];
        let mut cur = src.clone();
        while !lane_sinks[&cur] {
            let opts = &by_from[&cur];
            let mv = &movements[opts[rng.gen_range(0..opts.len())]];
            path.push(mv.to.clone());
            cur = mv.to.clone();
        }
        routes.push(RouteDoc {
            id: format!("r{ri}"),
            lanes: path,
        });
    }

    let n_veh = rng.gen_range(10..=60usize);
    let mut demand: Vec<DemandDoc> = (0..n_veh)
        .map(|_| DemandDoc {
            depart: rng.gen_range(0.0..240.0_f64).floor(),
            route: routes[rng.gen_range(0..routes.len())].id.clone(),
        })
        .collect();
    demand.sort_by(|a, b| a.depart.partial_cmp(&b.depart).expect("finite"));

    ScenarioDoc {
        schema_version: SCENARIO_SCHEMA_VERSION,
        constants: SimConstants::default(),
        lanes,
        intersections,
        movements,
        conflicts,
        routes,
        demand,
    }
}
