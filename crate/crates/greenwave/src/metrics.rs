//! Training reward and episode evaluation metrics.
//!
//! The reward is the negative total queue length across an intersection's
//! incoming lanes. Episode quality is summarized by four vehicle-facing
//! metrics: average travel time, average waiting time, average delay
//! against free-flow expectation, and time-averaged queue length per lane.

use thiserror::Error;

use crate::sim::{IntersectionId, SimError, Simulation};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("episode finished with zero arrived vehicles; metrics are undefined")]
    NoArrivals,
}

/// Negative queue length over the intersection's incoming lanes; higher is
/// better, zero is the optimum.
pub fn reward(sim: &Simulation, intersection: IntersectionId) -> Result<f64, SimError> {
    Ok(-(sim.intersection_queue_sum(intersection)? as f64))
}

/// Everything `finalize_metrics` needs to know about one finished episode.
#[derive(Clone, Debug)]
pub struct EpisodeLog {
    pub vehicles: Vec<VehicleRecord>,
    /// Per intersection, the per-step sums of incoming-lane queue lengths.
    pub queue_sums: Vec<Vec<u32>>,
    /// Incoming lane count per intersection, aligned with `queue_sums`.
    pub lane_counts: Vec<usize>,
    pub episode_seconds: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct VehicleRecord {
    pub depart_time: f64,
    pub arrival_time: Option<f64>,
    /// Free-flow travel time of the vehicle's route.
    pub expected_travel_time: f64,
    pub waiting_time: f64,
}

/// Collects queue snapshots while an episode runs and packages the log when
/// it ends. Call `record_step` once after every simulation step.
pub struct EpisodeLogBuilder {
    queue_sums: Vec<Vec<u32>>,
    lane_counts: Vec<usize>,
}

impl EpisodeLogBuilder {
    pub fn new(sim: &Simulation) -> Self {
        let lane_counts = sim
            .network()
            .intersections()
            .map(|(_, x)| x.incoming.len())
            .collect::<Vec<_>>();
        EpisodeLogBuilder {
            queue_sums: vec![Vec::new(); lane_counts.len()],
            lane_counts,
        }
    }

    pub fn record_step(&mut self, sim: &Simulation) {
        for (i, sums) in self.queue_sums.iter_mut().enumerate() {
            let q = sim
                .intersection_queue_sum(IntersectionId(i))
                .expect("intersection ids are dense");
            sums.push(q as u32);
        }
    }

    pub fn finish(self, sim: &Simulation) -> EpisodeLog {
        let vehicles = sim
            .vehicles()
            .iter()
            .map(|v| VehicleRecord {
                depart_time: v.depart_time,
                arrival_time: v.arrival_time,
                expected_travel_time: sim.network().route(v.route).expected_travel_time,
                waiting_time: v.waiting_time,
            })
            .collect();
        EpisodeLog {
            vehicles,
            queue_sums: self.queue_sums,
            lane_counts: self.lane_counts,
            episode_seconds: sim.clock(),
        }
    }
}

/// The four evaluation metrics of one episode, plus arrival accounting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    /// Mean arrival minus departure time over arrived vehicles, seconds.
    pub avg_travel_time: f64,
    /// Mean accumulated waiting time over arrived vehicles, seconds.
    pub avg_waiting_time: f64,
    /// Mean actual-minus-expected travel time over arrived vehicles, seconds.
    pub avg_delay: f64,
    /// Time average of per-lane queue length, averaged over intersections.
    pub avg_queue_length: f64,
    pub arrived: usize,
    /// Vehicles still in the network when the episode ended; excluded from
    /// the three per-vehicle means above.
    pub unfinished: usize,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str =
        "run_id,seed,repr,episode,att,awt,ad,aql,arrived,unfinished";

    pub fn csv_row(&self, run_id: &str, seed: u64, repr: &str, episode: usize) -> String {
        format!(
            "{run_id},{seed},{repr},{episode},{:.6},{:.6},{:.6},{:.6},{},{}",
            self.avg_travel_time,
            self.avg_waiting_time,
            self.avg_delay,
            self.avg_queue_length,
            self.arrived,
            self.unfinished
        )
    }

    /// Metric tuple in the conventional reporting order.
    pub fn as_row(&self) -> [f64; 4] {
        [
            self.avg_travel_time,
            self.avg_delay,
            self.avg_waiting_time,
            self.avg_queue_length,
        ]
    }
}

/// Reduce an episode log to its `MetricsReport`.
///
/// Vehicles that never arrived are counted as `unfinished` and excluded
/// from the per-vehicle means. An episode with zero arrivals has no defined
/// means and reports an explicit error instead of NaN.
pub fn finalize_metrics(log: &EpisodeLog) -> Result<MetricsReport, MetricsError> {
    let mut arrived = 0usize;
    let (mut tt_sum, mut wait_sum, mut delay_sum) = (0.0, 0.0, 0.0);
    for v in &log.vehicles {
        if let Some(arrival) = v.arrival_time {
            arrived += 1;
            let actual = arrival - v.depart_time;
            tt_sum += actual;
            wait_sum += v.waiting_time;
            delay_sum += actual - v.expected_travel_time;
        }
    }
    if arrived == 0 {
        return Err(MetricsError::NoArrivals);
    }
    let n = arrived as f64;

    let mut aql = 0.0;
    if !log.queue_sums.is_empty() {
        let mut per_intersection = 0.0;
        for (sums, &lanes) in log.queue_sums.iter().zip(&log.lane_counts) {
            if sums.is_empty() || lanes == 0 {
                continue;
            }
            let mean_sum = sums.iter().map(|&q| q as f64).sum::<f64>() / sums.len() as f64;
            per_intersection += mean_sum / lanes as f64;
        }
        aql = per_intersection / log.queue_sums.len() as f64;
    }

    Ok(MetricsReport {
        avg_travel_time: tt_sum / n,
        avg_waiting_time: wait_sum / n,
        avg_delay: delay_sum / n,
        avg_queue_length: aql,
        arrived,
        unfinished: log.vehicles.len() - arrived,
    })
}
