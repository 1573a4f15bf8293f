//! Static road-network description: lanes, intersections, movements,
//! routes. Built once by scenario loading and shared read-only by every
//! simulation instance.

use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LaneId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntersectionId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MovementId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RouteId(pub usize);

/// Where a lane ends: either a signalized intersection or out of the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Downstream {
    Sink,
    Intersection(IntersectionId),
}

#[derive(Clone, Debug)]
pub struct Lane {
    pub name: String,
    pub length: f64,
    pub speed_limit: f64,
    pub downstream: Downstream,
}

/// A permitted crossing from one lane to another through an intersection.
#[derive(Clone, Debug)]
pub struct Movement {
    pub name: String,
    pub from: LaneId,
    pub to: LaneId,
}

/// The phase table of one signal controller.
#[derive(Clone, Debug)]
pub struct PhaseProgram {
    /// Each phase is the set of movements that get green simultaneously.
    pub phases: Vec<Vec<MovementId>>,
    pub yellow_duration: f64,
    pub decision_interval: f64,
}

impl PhaseProgram {
    pub fn phase_count(&self) -> usize {
        self.phases.len()
    }
}

#[derive(Clone, Debug)]
pub struct Intersection {
    pub name: String,
    /// Incoming lanes in their fixed declaration order. This order defines
    /// the indexing of every vector observation built for the intersection.
    pub incoming: Vec<LaneId>,
    pub program: PhaseProgram,
}

#[derive(Clone, Debug)]
pub struct Route {
    pub name: String,
    pub lanes: Vec<LaneId>,
    /// Movement taken at each hop; `movements[i]` joins `lanes[i]` to
    /// `lanes[i + 1]`.
    pub movements: Vec<MovementId>,
    /// Free-flow travel time: sum of lane length over speed limit.
    pub expected_travel_time: f64,
}

#[derive(Clone, Debug)]
pub struct LaneNetwork {
    lanes: Vec<Lane>,
    intersections: Vec<Intersection>,
    movements: Vec<Movement>,
    routes: Vec<Route>,
    lane_names: HashMap<String, LaneId>,
    intersection_names: HashMap<String, IntersectionId>,
    route_names: HashMap<String, RouteId>,
    /// Bit `p` set when the movement belongs to phase `p` of its
    /// intersection. Phase counts are capped at 32 by validation.
    movement_phase_mask: Vec<u32>,
    max_speed_limit: f64,
}

impl LaneNetwork {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        lanes: Vec<Lane>,
        intersections: Vec<Intersection>,
        movements: Vec<Movement>,
        routes: Vec<Route>,
        lane_names: HashMap<String, LaneId>,
        intersection_names: HashMap<String, IntersectionId>,
        route_names: HashMap<String, RouteId>,
        movement_phase_mask: Vec<u32>,
    ) -> Self {
        let max_speed_limit = lanes.iter().map(|l| l.speed_limit).fold(0.0, f64::max);
        LaneNetwork {
            lanes,
            intersections,
            movements,
            routes,
            lane_names,
            intersection_names,
            route_names,
            movement_phase_mask,
            max_speed_limit,
        }
    }

    pub fn lane(&self, id: LaneId) -> &Lane {
        &self.lanes[id.0]
    }

    pub fn lanes(&self) -> impl Iterator<Item = (LaneId, &Lane)> {
        self.lanes.iter().enumerate().map(|(i, l)| (LaneId(i), l))
    }

    pub fn lane_count(&self) -> usize {
        self.lanes.len()
    }

    pub fn intersection(&self, id: IntersectionId) -> &Intersection {
        &self.intersections[id.0]
    }

    pub fn intersections(&self) -> impl Iterator<Item = (IntersectionId, &Intersection)> {
        self.intersections.iter().enumerate().map(|(i, x)| (IntersectionId(i), x))
    }

    pub fn intersection_count(&self) -> usize {
        self.intersections.len()
    }

    pub fn movement(&self, id: MovementId) -> &Movement {
        &self.movements[id.0]
    }

    pub fn route(&self, id: RouteId) -> &Route {
        &self.routes[id.0]
    }

    pub fn route_count(&self) -> usize {
        self.routes.len()
    }

    pub fn lane_id(&self, name: &str) -> Option<LaneId> {
        self.lane_names.get(name).copied()
    }

    pub fn intersection_id(&self, name: &str) -> Option<IntersectionId> {
        self.intersection_names.get(name).copied()
    }

    pub fn route_id(&self, name: &str) -> Option<RouteId> {
        self.route_names.get(name).copied()
    }

    /// True when the movement has green in the given phase of its program.
    pub fn movement_in_phase(&self, movement: MovementId, phase: usize) -> bool {
        self.movement_phase_mask[movement.0] & (1u32 << phase) != 0
    }

    /// Largest speed limit in the network; the default speed normalizer for
    /// image observations.
    pub fn max_speed_limit(&self) -> f64 {
        self.max_speed_limit
    }
}
