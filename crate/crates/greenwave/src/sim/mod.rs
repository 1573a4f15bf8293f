//! Deterministic discrete-time microscopic traffic simulation.
//!
//! The dynamics are a safe-speed car-following model on a lane network with
//! signalized intersections: each step every vehicle picks the largest speed
//! allowed by its acceleration bound, the lane's speed limit, and the free
//! distance in front of it (leader gap, or stop line when the signal blocks
//! crossing). Crossing an intersection is instantaneous and only permitted
//! while the vehicle's movement has green and no yellow transition is in
//! progress. The whole update is a pure function of the scenario, the action
//! sequence, and the step count.

mod network;
mod scenario;

pub use network::{
    Downstream, Intersection, IntersectionId, Lane, LaneId, LaneNetwork, Movement, MovementId,
    PhaseProgram, Route, RouteId,
};
pub use scenario::{
    load_scenario, random_scenario, save_scenario, DemandDoc, DemandEntry, IntersectionDoc,
    LaneDoc, MovementDoc, RouteDoc, Scenario, ScenarioDoc, ScenarioError, SimConstants,
    SCENARIO_SCHEMA_VERSION,
};

use std::collections::VecDeque;
use std::sync::Arc;

use thiserror::Error;

use crate::util::Fnv1a;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown intersection id {0}")]
    UnknownIntersection(usize),
    #[error("unknown lane id {0}")]
    UnknownLane(usize),
    #[error("phase index {phase} out of range for intersection '{intersection}' with {count} phases")]
    PhaseOutOfRange {
        intersection: String,
        phase: usize,
        count: usize,
    },
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
}

#[derive(Clone, Debug)]
pub struct Vehicle {
    pub id: u64,
    pub route: RouteId,
    /// Index into the route's lane list.
    pub leg: usize,
    /// Meters from the current lane's start.
    pub position: f64,
    pub speed: f64,
    /// Scheduled departure time from the demand table.
    pub depart_time: f64,
    /// Set when the vehicle finishes its last leg.
    pub arrival_time: Option<f64>,
    /// Seconds spent below the halt threshold.
    pub waiting_time: f64,
}

impl Vehicle {
    pub fn arrived(&self) -> bool {
        self.arrival_time.is_some()
    }
}

/// One signal controller's live state.
#[derive(Clone, Debug)]
pub struct SignalState {
    pub phase: usize,
    pub time_in_phase: f64,
    /// Seconds of yellow left before `pending_phase` activates; zero when
    /// no transition is in progress.
    pub yellow_remaining: f64,
    pub pending_phase: Option<usize>,
}

impl SignalState {
    fn new() -> Self {
        SignalState {
            phase: 0,
            time_in_phase: 0.0,
            yellow_remaining: 0.0,
            pending_phase: None,
        }
    }
}

/// Ids of vehicles that entered or left the network during one step.
#[derive(Clone, Debug, Default)]
pub struct StepEvents {
    pub spawned: Vec<u64>,
    pub arrived: Vec<u64>,
}

/// A vehicle as seen by the detection layer.
#[derive(Clone, Copy, Debug)]
pub struct DetectedVehicle {
    pub distance_to_stop_line: f64,
    pub speed: f64,
    pub waiting_time: f64,
}

/// Full world state of one running scenario.
#[derive(Clone, Debug)]
pub struct Simulation {
    network: Arc<LaneNetwork>,
    constants: SimConstants,
    demand: Arc<Vec<DemandEntry>>,
    /// Every vehicle ever spawned; arrived ones keep their final record.
    vehicles: Vec<Vehicle>,
    /// Active vehicle indices per lane, ordered front (largest position)
    /// first. Maintained incrementally by `step`.
    lane_vehicles: Vec<Vec<usize>>,
    signals: Vec<SignalState>,
    clock: f64,
    next_demand: usize,
    /// Demand entries that came due but found their entry cell occupied.
    pending_spawns: VecDeque<DemandEntry>,
    spawned_total: u64,
    arrived_total: u64,
    seed: u64,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Self {
        Self::with_seed(scenario, 0)
    }

    pub fn with_seed(scenario: &Scenario, seed: u64) -> Self {
        Simulation {
            lane_vehicles: vec![Vec::new(); scenario.network.lane_count()],
            signals: (0..scenario.network.intersection_count())
                .map(|_| SignalState::new())
                .collect(),
            network: Arc::clone(&scenario.network),
            constants: scenario.constants,
            demand: Arc::clone(&scenario.demand),
            vehicles: Vec::new(),
            clock: 0.0,
            next_demand: 0,
            pending_spawns: VecDeque::new(),
            spawned_total: 0,
            arrived_total: 0,
            seed,
        }
    }

    pub fn network(&self) -> &LaneNetwork {
        &self.network
    }

    pub fn constants(&self) -> &SimConstants {
        &self.constants
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spawned_total(&self) -> u64 {
        self.spawned_total
    }

    pub fn arrived_total(&self) -> u64 {
        self.arrived_total
    }

    pub fn active_count(&self) -> u64 {
        self.spawned_total - self.arrived_total
    }

    /// All vehicles ever spawned, arrived ones included.
    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn signal(&self, intersection: IntersectionId) -> Result<&SignalState, SimError> {
        self.signals
            .get(intersection.0)
            .ok_or(SimError::UnknownIntersection(intersection.0))
    }

    fn check_intersection(&self, intersection: IntersectionId) -> Result<(), SimError> {
        if intersection.0 >= self.signals.len() {
            return Err(SimError::UnknownIntersection(intersection.0));
        }
        Ok(())
    }

    /// Count of vehicles on the lane moving slower than the halt threshold.
    pub fn lane_queue(&self, lane: LaneId) -> Result<usize, SimError> {
        let list = self
            .lane_vehicles
            .get(lane.0)
            .ok_or(SimError::UnknownLane(lane.0))?;
        Ok(list
            .iter()
            .filter(|&&vi| self.vehicles[vi].speed < self.constants.halt_threshold)
            .count())
    }

    /// Sum of `lane_queue` over the intersection's incoming lanes.
    pub fn intersection_queue_sum(&self, intersection: IntersectionId) -> Result<usize, SimError> {
        self.check_intersection(intersection)?;
        let mut total = 0;
        for &lane in &self.network.intersection(intersection).incoming {
            total += self.lane_queue(lane)?;
        }
        Ok(total)
    }

    /// Vehicles within `radius` meters of the stop line, reported per
    /// incoming lane in the intersection's fixed lane order, nearest first.
    pub fn vehicles_in_radius(
        &self,
        intersection: IntersectionId,
        radius: f64,
    ) -> Result<Vec<Vec<DetectedVehicle>>, SimError> {
        self.check_intersection(intersection)?;
        if radius <= 0.0 {
            return Err(SimError::NonPositiveRadius(radius));
        }
        let mut out = Vec::new();
        for &lane_id in &self.network.intersection(intersection).incoming {
            let lane = self.network.lane(lane_id);
            let mut detected = Vec::new();
            // Lane lists are front-first, i.e. already nearest-first.
            for &vi in &self.lane_vehicles[lane_id.0] {
                let v = &self.vehicles[vi];
                let distance = lane.length - v.position;
                if distance <= radius {
                    detected.push(DetectedVehicle {
                        distance_to_stop_line: distance,
                        speed: v.speed,
                        waiting_time: v.waiting_time,
                    });
                } else {
                    break;
                }
            }
            out.push(detected);
        }
        Ok(out)
    }

    /// Request a phase change. Same-phase requests are no-ops; anything else
    /// starts a yellow transition into the requested phase.
    pub fn apply_action(&mut self, intersection: IntersectionId, phase: usize) -> Result<(), SimError> {
        self.check_intersection(intersection)?;
        let program = &self.network.intersection(intersection).program;
        if phase >= program.phase_count() {
            return Err(SimError::PhaseOutOfRange {
                intersection: self.network.intersection(intersection).name.clone(),
                phase,
                count: program.phase_count(),
            });
        }
        let yellow = program.yellow_duration;
        let signal = &mut self.signals[intersection.0];
        if phase == signal.phase {
            return Ok(());
        }
        if yellow > 0.0 {
            signal.yellow_remaining = yellow;
            signal.pending_phase = Some(phase);
        } else {
            signal.phase = phase;
            signal.time_in_phase = 0.0;
            signal.yellow_remaining = 0.0;
            signal.pending_phase = None;
        }
        Ok(())
    }

    /// True when a vehicle may cross through `movement` right now.
    fn crossing_admitted(&self, movement: MovementId, entry_claimed: &[bool]) -> bool {
        let m = self.network.movement(movement);
        let lane = self.network.lane(m.from);
        let Downstream::Intersection(ii) = lane.downstream else {
            return false;
        };
        let signal = &self.signals[ii.0];
        if signal.yellow_remaining > 0.0 {
            return false;
        }
        if !self.network.movement_in_phase(movement, signal.phase) {
            return false;
        }
        // Destination entry cell must be free and unclaimed this step.
        if entry_claimed[m.to.0] {
            return false;
        }
        self.entry_cell_free(m.to)
    }

    fn entry_cell_free(&self, lane: LaneId) -> bool {
        let entry = self.constants.entry_cell();
        !self.lane_vehicles[lane.0]
            .iter()
            .any(|&vi| self.vehicles[vi].position < entry)
    }

    /// Advance the world by one step of `dt` seconds.
    pub fn step(&mut self) -> StepEvents {
        let dt = self.constants.dt;
        let c = self.constants;
        self.clock += dt;
        let mut events = StepEvents::default();

        // Demand entries due in the window [clock - dt, clock).
        while self.next_demand < self.demand.len()
            && self.demand[self.next_demand].depart + 1e-9 < self.clock
        {
            self.pending_spawns.push_back(self.demand[self.next_demand]);
            self.next_demand += 1;
        }

        // Spawn attempts, oldest first; blocked entries wait for later steps.
        for _ in 0..self.pending_spawns.len() {
            let entry = self.pending_spawns.pop_front().expect("nonempty");
            let first_lane = self.network.route(entry.route).lanes[0];
            if self.entry_cell_free(first_lane) {
                let id = self.spawned_total;
                self.vehicles.push(Vehicle {
                    id,
                    route: entry.route,
                    leg: 0,
                    position: 0.0,
                    speed: 0.0,
                    depart_time: entry.depart,
                    arrival_time: None,
                    waiting_time: 0.0,
                });
                self.lane_vehicles[first_lane.0].push(self.vehicles.len() - 1);
                self.spawned_total += 1;
                events.spawned.push(id);
            } else {
                self.pending_spawns.push_back(entry);
            }
        }

        // Movement, lane by lane, front vehicle first. A vehicle that
        // crosses into another lane this step is marked done so the target
        // lane's pass skips it.
        let mut moved = vec![false; self.vehicles.len()];
        let mut entry_claimed = vec![false; self.network.lane_count()];
        for lane_idx in 0..self.lane_vehicles.len() {
            let lane_id = LaneId(lane_idx);
            let lane_len = self.network.lane(lane_id).length;
            let speed_limit = self.network.lane(lane_id).speed_limit;
            let order: Vec<usize> = self.lane_vehicles[lane_idx].clone();
            // Post-move position of the nearest vehicle ahead that stayed.
            let mut leader_pos: Option<f64> = None;
            for &vi in &order {
                if moved[vi] {
                    leader_pos = Some(self.vehicles[vi].position);
                    continue;
                }
                moved[vi] = true;
                let v = &self.vehicles[vi];
                let desired = (v.speed + c.a_max * dt).min(speed_limit);
                let mut free = f64::INFINITY;
                if let Some(lp) = leader_pos {
                    free = free.min((lp - c.vehicle_length - v.position - c.min_gap).max(0.0));
                }
                let route = self.network.route(v.route);
                let last_leg = v.leg + 1 == route.lanes.len();
                let admitted = if last_leg {
                    true
                } else {
                    self.crossing_admitted(route.movements[v.leg], &entry_claimed)
                };
                if !admitted {
                    free = free.min((lane_len - v.position).max(0.0));
                }
                let speed = desired.min(free / dt);
                let new_pos = v.position + speed * dt;

                if admitted && new_pos >= lane_len - 1e-9 {
                    if last_leg {
                        // Finished the route: leave the network.
                        let v = &mut self.vehicles[vi];
                        v.position = lane_len;
                        v.speed = speed;
                        v.arrival_time = Some(self.clock);
                        self.arrived_total += 1;
                        events.arrived.push(v.id);
                        self.lane_vehicles[lane_idx].retain(|&x| x != vi);
                    } else {
                        // Instantaneous crossing to the next leg. Speed
                        // carries over but never exceeds the new lane's
                        // limit.
                        let next_lane = route.lanes[v.leg + 1];
                        let next_limit = self.network.lane(next_lane).speed_limit;
                        let v = &mut self.vehicles[vi];
                        v.leg += 1;
                        v.position = 0.0;
                        v.speed = speed.min(next_limit);
                        self.lane_vehicles[lane_idx].retain(|&x| x != vi);
                        self.lane_vehicles[next_lane.0].push(vi);
                        entry_claimed[next_lane.0] = true;
                    }
                    // The slot ahead opened up; followers simply see the
                    // next remaining vehicle, if any.
                } else {
                    let v = &mut self.vehicles[vi];
                    v.position = new_pos.min(lane_len);
                    v.speed = speed;
                    leader_pos = Some(v.position);
                }
            }
        }

        // Waiting accrual for every vehicle still in the network.
        for list in &self.lane_vehicles {
            for &vi in list {
                if self.vehicles[vi].speed < c.halt_threshold {
                    self.vehicles[vi].waiting_time += dt;
                }
            }
        }

        // Signal timers advance last: the state agents saw this step stays
        // in force for the whole step.
        for signal in self.signals.iter_mut() {
            signal.time_in_phase += dt;
            if signal.yellow_remaining > 0.0 {
                signal.yellow_remaining = (signal.yellow_remaining - dt).max(0.0);
                if signal.yellow_remaining <= 1e-9 {
                    signal.yellow_remaining = 0.0;
                    if let Some(next) = signal.pending_phase.take() {
                        signal.phase = next;
                        signal.time_in_phase = 0.0;
                    }
                }
            }
        }

        events
    }

    /// FNV digest of the full dynamic state: clock, counters, every
    /// vehicle's kinematics, and every signal's timers.
    pub fn digest(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.write_f64(self.clock);
        h.write_u64(self.spawned_total);
        h.write_u64(self.arrived_total);
        h.write_u64(self.pending_spawns.len() as u64);
        for v in &self.vehicles {
            h.write_u64(v.id);
            h.write_u64(v.route.0 as u64);
            h.write_u64(v.leg as u64);
            h.write_f64(v.position);
            h.write_f64(v.speed);
            h.write_f64(v.depart_time);
            h.write_f64(v.arrival_time.unwrap_or(-1.0));
            h.write_f64(v.waiting_time);
        }
        for s in &self.signals {
            h.write_u64(s.phase as u64);
            h.write_f64(s.time_in_phase);
            h.write_f64(s.yellow_remaining);
            h.write_u64(s.pending_phase.map(|p| p as u64 + 1).unwrap_or(0));
        }
        h.finish()
    }
}

#[cfg(test)]
mod tests;
