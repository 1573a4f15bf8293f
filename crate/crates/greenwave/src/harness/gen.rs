//! Built-in scenario templates: a four-approach single intersection and a
//! three-intersection arterial, with seeded deterministic demand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dqn::EPISODE_SECONDS;
use crate::sim::{
    DemandDoc, IntersectionDoc, LaneDoc, MovementDoc, RouteDoc, ScenarioDoc, SimConstants,
    SCENARIO_SCHEMA_VERSION,
};
use crate::util::derive_seed;

use super::HarnessError;

pub const LANE_LENGTH: f64 = 200.0;
pub const LINK_LENGTH: f64 = 300.0;
pub const SPEED_LIMIT: f64 = 13.89;
pub const YELLOW_SECONDS: f64 = 3.0;
pub const DECISION_INTERVAL: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Template {
    Single4Way,
    Arterial3,
}

impl std::str::FromStr for Template {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single4way" => Ok(Template::Single4Way),
            "arterial3" => Ok(Template::Arterial3),
            other => Err(format!("unknown template '{other}' (expected single4way|arterial3)")),
        }
    }
}

impl Template {
    pub fn name(self) -> &'static str {
        match self {
            Template::Single4Way => "single4way",
            Template::Arterial3 => "arterial3",
        }
    }
}

/// Expand a template into a full scenario document.
///
/// `demand_level` is vehicles per hour per approach; each approach gets that
/// many departures spread over the hour with seeded jitter, so the mean
/// headway is exactly `3600 / demand_level` while individual gaps vary.
pub fn gen_scenario(template: Template, demand_level: f64, seed: u64) -> Result<ScenarioDoc, HarnessError> {
    if demand_level <= 0.0 {
        return Err(HarnessError::Invalid(format!(
            "demand level must be positive, got {demand_level}"
        )));
    }
    let mut doc = match template {
        Template::Single4Way => single4way_skeleton(),
        Template::Arterial3 => arterial3_skeleton(),
    };
    let approaches = match template {
        Template::Single4Way => single4way_approaches(),
        Template::Arterial3 => arterial3_approaches(),
    };
    let mut demand = Vec::new();
    for (ai, (name, routes)) in approaches.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[template as u64, ai as u64]));
        let count = (demand_level * EPISODE_SECONDS / 3600.0).round() as usize;
        let slot = EPISODE_SECONDS / count as f64;
        for i in 0..count {
            let depart = (i as f64 + rng.gen::<f64>()) * slot;
            let pick: f64 = rng.gen();
            let mut acc = 0.0;
            let mut route = routes[0].0.as_str();
            for (r, w) in routes.iter() {
                acc += w;
                if pick < acc {
                    route = r.as_str();
                    break;
                }
            }
            demand.push(DemandDoc {
                depart: (depart * 10.0).round() / 10.0,
                route: route.to_string(),
            });
        }
        let _ = name;
    }
    demand.sort_by(|a, b| a.depart.partial_cmp(&b.depart).expect("finite departs"));
    doc.demand = demand;
    Ok(doc)
}

fn lane(id: &str, length: f64, downstream: Option<&str>) -> LaneDoc {
    LaneDoc {
        id: id.into(),
        length,
        speed_limit: SPEED_LIMIT,
        downstream: downstream.map(|s| s.into()),
    }
}

fn movement(id: &str, from: &str, to: &str) -> MovementDoc {
    MovementDoc {
        id: id.into(),
        from: from.into(),
        to: to.into(),
    }
}

fn route(id: &str, lanes: &[&str]) -> RouteDoc {
    RouteDoc {
        id: id.into(),
        lanes: lanes.iter().map(|s| s.to_string()).collect(),
    }
}

/// All unordered movement pairs that do not share a phase.
fn cross_phase_conflicts(phases: &[Vec<String>]) -> Vec<[String; 2]> {
    let mut out = Vec::new();
    for (i, pa) in phases.iter().enumerate() {
        for pb in phases.iter().skip(i + 1) {
            for a in pa {
                for b in pb {
                    out.push([a.clone(), b.clone()]);
                }
            }
        }
    }
    out
}

/// One four-approach intersection: two incoming lanes per approach
/// (through and left), eight incoming lanes total, four phases.
fn single4way_skeleton() -> ScenarioDoc {
    let mut lanes = Vec::new();
    for a in ["n", "e", "s", "w"] {
        lanes.push(lane(&format!("{a}_t"), LANE_LENGTH, Some("x")));
        lanes.push(lane(&format!("{a}_l"), LANE_LENGTH, Some("x")));
    }
    for a in ["n", "e", "s", "w"] {
        lanes.push(lane(&format!("out_{a}"), LANE_LENGTH, None));
    }

    // Through traffic exits the opposite side; a left turn exits 90
    // degrees counterclockwise seen from the approach.
    let opposite = [("n", "s"), ("s", "n"), ("e", "w"), ("w", "e")];
    let left_exit = [("n", "e"), ("s", "w"), ("e", "s"), ("w", "n")];
    let mut movements = Vec::new();
    for (from, to) in opposite {
        movements.push(movement(&format!("m_{from}_t"), &format!("{from}_t"), &format!("out_{to}")));
    }
    for (from, to) in left_exit {
        movements.push(movement(&format!("m_{from}_l"), &format!("{from}_l"), &format!("out_{to}")));
    }

    let phases: Vec<Vec<String>> = vec![
        vec!["m_n_t".into(), "m_s_t".into()],
        vec!["m_n_l".into(), "m_s_l".into()],
        vec!["m_e_t".into(), "m_w_t".into()],
        vec!["m_e_l".into(), "m_w_l".into()],
    ];
    let conflicts = cross_phase_conflicts(&phases);

    let mut routes = Vec::new();
    for (from, to) in opposite {
        routes.push(route(&format!("r_{from}_t"), &[&format!("{from}_t"), &format!("out_{to}")]));
    }
    for (from, to) in left_exit {
        routes.push(route(&format!("r_{from}_l"), &[&format!("{from}_l"), &format!("out_{to}")]));
    }

    ScenarioDoc {
        schema_version: SCENARIO_SCHEMA_VERSION,
        constants: SimConstants::default(),
        lanes,
        intersections: vec![IntersectionDoc {
            id: "x".into(),
            incoming: ["n", "e", "s", "w"]
                .iter()
                .flat_map(|a| [format!("{a}_t"), format!("{a}_l")])
                .collect(),
            phases,
            yellow_duration: YELLOW_SECONDS,
            decision_interval: DECISION_INTERVAL,
        }],
        movements,
        conflicts,
        routes,
        demand: vec![],
    }
}

/// Demand mix per approach: (route id, probability), summing to 1.
type ApproachMix = (String, Vec<(String, f64)>);

fn single4way_approaches() -> Vec<ApproachMix> {
    ["n", "e", "s", "w"]
        .iter()
        .map(|a| {
            (
                a.to_string(),
                vec![
                    (format!("r_{a}_t"), 2.0 / 3.0),
                    (format!("r_{a}_l"), 1.0 / 3.0),
                ],
            )
        })
        .collect()
}

/// Three four-approach intersections on an east-west arterial. Eastbound
/// and westbound links carry a through and a left lane each, so every
/// intersection keeps eight incoming lanes and the same four-phase layout.
fn arterial3_skeleton() -> ScenarioDoc {
    let mut lanes = Vec::new();
    let mut movements = Vec::new();
    let mut all_phases: Vec<Vec<Vec<String>>> = Vec::new();
    let mut routes = Vec::new();

    // Side-street lanes per intersection.
    for k in 0..3 {
        let x = format!("x{k}");
        lanes.push(lane(&format!("n{k}_t"), LANE_LENGTH, Some(&x)));
        lanes.push(lane(&format!("n{k}_l"), LANE_LENGTH, Some(&x)));
        lanes.push(lane(&format!("s{k}_t"), LANE_LENGTH, Some(&x)));
        lanes.push(lane(&format!("s{k}_l"), LANE_LENGTH, Some(&x)));
        lanes.push(lane(&format!("out_n{k}"), LANE_LENGTH, None));
        lanes.push(lane(&format!("out_s{k}"), LANE_LENGTH, None));
    }
    // Arterial ends and links. Eastbound: w0 -> x0 -> eb0 -> x1 -> eb1 ->
    // x2 -> out_e. Westbound: e2 -> x2 -> wb1 -> x1 -> wb0 -> x0 -> out_w.
    lanes.push(lane("w0_t", LANE_LENGTH, Some("x0")));
    lanes.push(lane("w0_l", LANE_LENGTH, Some("x0")));
    lanes.push(lane("e2_t", LANE_LENGTH, Some("x2")));
    lanes.push(lane("e2_l", LANE_LENGTH, Some("x2")));
    for k in 0..2 {
        lanes.push(lane(&format!("eb{k}_t"), LINK_LENGTH, Some(&format!("x{}", k + 1))));
        lanes.push(lane(&format!("eb{k}_l"), LINK_LENGTH, Some(&format!("x{}", k + 1))));
        lanes.push(lane(&format!("wb{k}_t"), LINK_LENGTH, Some(&format!("x{k}"))));
        lanes.push(lane(&format!("wb{k}_l"), LINK_LENGTH, Some(&format!("x{k}"))));
    }
    lanes.push(lane("out_e", LANE_LENGTH, None));
    lanes.push(lane("out_w", LANE_LENGTH, None));

    // Approach lanes seen from each intersection.
    let west_in = |k: usize| match k {
        0 => ("w0_t".to_string(), "w0_l".to_string()),
        _ => (format!("eb{}_t", k - 1), format!("eb{}_l", k - 1)),
    };
    let east_in = |k: usize| match k {
        2 => ("e2_t".to_string(), "e2_l".to_string()),
        _ => (format!("wb{k}_t"), format!("wb{k}_l")),
    };
    let east_out = |k: usize| -> (String, Option<String>) {
        // Through target and optional left-lane target east of k.
        if k == 2 {
            ("out_e".to_string(), None)
        } else {
            (format!("eb{k}_t"), Some(format!("eb{k}_l")))
        }
    };
    let west_out = |k: usize| -> (String, Option<String>) {
        if k == 0 {
            ("out_w".to_string(), None)
        } else {
            (format!("wb{}_t", k - 1), Some(format!("wb{}_l", k - 1)))
        }
    };

    for k in 0..3 {
        let (w_t, w_l) = west_in(k);
        let (e_t, e_l) = east_in(k);
        let (eo_t, eo_l) = east_out(k);
        let (wo_t, wo_l) = west_out(k);

        let mut arterial_thru = Vec::new();
        movements.push(movement(&format!("m{k}_eb_tt"), &w_t, &eo_t));
        arterial_thru.push(format!("m{k}_eb_tt"));
        if let Some(eo_l) = &eo_l {
            movements.push(movement(&format!("m{k}_eb_tl"), &w_t, eo_l));
            arterial_thru.push(format!("m{k}_eb_tl"));
        }
        movements.push(movement(&format!("m{k}_wb_tt"), &e_t, &wo_t));
        arterial_thru.push(format!("m{k}_wb_tt"));
        if let Some(wo_l) = &wo_l {
            movements.push(movement(&format!("m{k}_wb_tl"), &e_t, wo_l));
            arterial_thru.push(format!("m{k}_wb_tl"));
        }

        // Arterial lefts: eastbound turns north, westbound turns south.
        movements.push(movement(&format!("m{k}_eb_left"), &w_l, &format!("out_n{k}")));
        movements.push(movement(&format!("m{k}_wb_left"), &e_l, &format!("out_s{k}")));
        // Side throughs.
        movements.push(movement(&format!("m{k}_ns"), &format!("n{k}_t"), &format!("out_s{k}")));
        movements.push(movement(&format!("m{k}_sn"), &format!("s{k}_t"), &format!("out_n{k}")));
        // Side lefts join the arterial: southbound turns east, northbound
        // turns west.
        movements.push(movement(&format!("m{k}_n_left"), &format!("n{k}_l"), &eo_t));
        movements.push(movement(&format!("m{k}_s_left"), &format!("s{k}_l"), &wo_t));

        all_phases.push(vec![
            arterial_thru,
            vec![format!("m{k}_eb_left"), format!("m{k}_wb_left")],
            vec![format!("m{k}_ns"), format!("m{k}_sn")],
            vec![format!("m{k}_n_left"), format!("m{k}_s_left")],
        ]);
    }

    // Routes. Arterial throughs span all three intersections.
    routes.push(route("r_we", &["w0_t", "eb0_t", "eb1_t", "out_e"]));
    routes.push(route("r_ew", &["e2_t", "wb1_t", "wb0_t", "out_w"]));
    // Arterial left exits at each intersection, both directions.
    routes.push(route("r_we_l0", &["w0_l", "out_n0"]));
    routes.push(route("r_we_l1", &["w0_t", "eb0_l", "out_n1"]));
    routes.push(route("r_we_l2", &["w0_t", "eb0_t", "eb1_l", "out_n2"]));
    routes.push(route("r_ew_l2", &["e2_l", "out_s2"]));
    routes.push(route("r_ew_l1", &["e2_t", "wb1_l", "out_s1"]));
    routes.push(route("r_ew_l0", &["e2_t", "wb1_t", "wb0_l", "out_s0"]));
    // Side streets: through plus a left that joins the arterial and rides
    // it out of the network.
    for k in 0..3usize {
        routes.push(route(&format!("r_ns{k}"), &[&format!("n{k}_t"), &format!("out_s{k}")]));
        routes.push(route(&format!("r_sn{k}"), &[&format!("s{k}_t"), &format!("out_n{k}")]));
        let mut east_legs: Vec<String> = vec![format!("n{k}_l")];
        for j in k..2 {
            east_legs.push(format!("eb{j}_t"));
        }
        east_legs.push("out_e".into());
        let east_refs: Vec<&str> = east_legs.iter().map(|s| s.as_str()).collect();
        routes.push(route(&format!("r_n{k}_left"), &east_refs));
        let mut west_legs: Vec<String> = vec![format!("s{k}_l")];
        for j in (0..k).rev() {
            west_legs.push(format!("wb{j}_t"));
        }
        west_legs.push("out_w".into());
        let west_refs: Vec<&str> = west_legs.iter().map(|s| s.as_str()).collect();
        routes.push(route(&format!("r_s{k}_left"), &west_refs));
    }

    let mut conflicts = Vec::new();
    for phases in &all_phases {
        conflicts.extend(cross_phase_conflicts(phases));
    }

    let intersections = (0..3)
        .map(|k| {
            let (w_t, w_l) = west_in(k);
            let (e_t, e_l) = east_in(k);
            IntersectionDoc {
                id: format!("x{k}"),
                incoming: vec![
                    format!("n{k}_t"),
                    format!("n{k}_l"),
                    e_t,
                    e_l,
                    format!("s{k}_t"),
                    format!("s{k}_l"),
                    w_t,
                    w_l,
                ],
                phases: all_phases[k].clone(),
                yellow_duration: YELLOW_SECONDS,
                decision_interval: DECISION_INTERVAL,
            }
        })
        .collect();

    ScenarioDoc {
        schema_version: SCENARIO_SCHEMA_VERSION,
        constants: SimConstants::default(),
        lanes,
        intersections,
        movements,
        conflicts,
        routes,
        demand: vec![],
    }
}

fn arterial3_approaches() -> Vec<ApproachMix> {
    let mut out: Vec<ApproachMix> = vec![
        (
            "w0".into(),
            vec![
                ("r_we".into(), 0.6),
                ("r_we_l0".into(), 0.15),
                ("r_we_l1".into(), 0.15),
                ("r_we_l2".into(), 0.10),
            ],
        ),
        (
            "e2".into(),
            vec![
                ("r_ew".into(), 0.6),
                ("r_ew_l2".into(), 0.15),
                ("r_ew_l1".into(), 0.15),
                ("r_ew_l0".into(), 0.10),
            ],
        ),
    ];
    for k in 0..3 {
        out.push((
            format!("n{k}"),
            vec![
                (format!("r_ns{k}"), 2.0 / 3.0),
                (format!("r_n{k}_left"), 1.0 / 3.0),
            ],
        ));
        out.push((
            format!("s{k}"),
            vec![
                (format!("r_sn{k}"), 2.0 / 3.0),
                (format!("r_s{k}_left"), 1.0 / 3.0),
            ],
        ));
    }
    out
}
