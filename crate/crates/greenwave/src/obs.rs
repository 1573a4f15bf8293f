//! Environment state representations built from a simulation snapshot.
//!
//! All three representations see the same V2I-style detection: vehicles
//! within a fixed radius of the stop line, per incoming lane. The two
//! vector forms aggregate each lane to a single measure; the image-like
//! form keeps per-vehicle data in a (cells x lanes x channels) grid.

use serde::{Deserialize, Serialize};

use crate::sim::{IntersectionId, LaneNetwork, SimError, Simulation};

/// Which state representation an agent consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReprKind {
    /// Per-lane detected-vehicle counts.
    #[serde(rename = "count")]
    VehicleCount,
    /// Per-lane mean accumulated waiting time.
    #[serde(rename = "wait")]
    AvgWait,
    /// Per-vehicle presence/speed/wait grid.
    #[serde(rename = "image")]
    ImageLike,
}

impl ReprKind {
    pub fn name(self) -> &'static str {
        match self {
            ReprKind::VehicleCount => "count",
            ReprKind::AvgWait => "wait",
            ReprKind::ImageLike => "image",
        }
    }
}

impl std::str::FromStr for ReprKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "count" => Ok(ReprKind::VehicleCount),
            "wait" => Ok(ReprKind::AvgWait),
            "image" => Ok(ReprKind::ImageLike),
            other => Err(format!("unknown representation '{other}' (expected count|wait|image)")),
        }
    }
}

pub const IMAGE_CHANNELS: usize = 3;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ObservationConfig {
    pub kind: ReprKind,
    /// Detection radius from the stop line, meters.
    pub detection_radius: f64,
    /// Length of one image cell, meters.
    pub cell_length: f64,
    /// Speed normalizer for the image speed channel, m/s.
    pub speed_norm: f64,
    /// Waiting times are clipped here before normalizing, seconds.
    pub wait_cap: f64,
}

impl ObservationConfig {
    /// Defaults for a given network: 150 m radius, 7.5 m cells (one vehicle
    /// plus gap), speed normalized by the network's top speed limit, waits
    /// clipped at 300 s.
    pub fn for_network(kind: ReprKind, network: &LaneNetwork) -> Self {
        ObservationConfig {
            kind,
            detection_radius: 150.0,
            cell_length: 7.5,
            speed_norm: network.max_speed_limit(),
            wait_cap: 300.0,
        }
    }

    /// Number of cells per lane in the image representation.
    pub fn cells(&self) -> usize {
        (self.detection_radius / self.cell_length).ceil().max(1.0) as usize
    }

    /// Flattened observation width for an intersection with `lanes`
    /// incoming lanes.
    pub fn dim(&self, lanes: usize) -> usize {
        match self.kind {
            ReprKind::VehicleCount | ReprKind::AvgWait => lanes,
            ReprKind::ImageLike => self.cells() * lanes * IMAGE_CHANNELS,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.detection_radius <= 0.0 {
            return Err("detection_radius must be positive".into());
        }
        if self.cell_length <= 0.0 {
            return Err("cell_length must be positive".into());
        }
        if self.speed_norm <= 0.0 {
            return Err("speed_norm must be positive".into());
        }
        if self.wait_cap <= 0.0 {
            return Err("wait_cap must be positive".into());
        }
        Ok(())
    }
}

/// One lane measure per incoming lane, in the intersection's lane order.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorState {
    pub values: Vec<f64>,
}

/// Image-like observation of shape (cells, lanes, 3), all values in [0, 1].
///
/// Channel 0 marks cell occupancy, channel 1 holds normalized mean speed,
/// channel 2 the normalized maximum waiting time in the cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageState {
    values: Vec<f64>,
    cells: usize,
    lanes: usize,
}

impl ImageState {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.cells, self.lanes, IMAGE_CHANNELS)
    }

    pub fn get(&self, cell: usize, lane: usize, channel: usize) -> f64 {
        self.values[(cell * self.lanes + lane) * IMAGE_CHANNELS + channel]
    }

    /// Row-major (cell, lane, channel) flattening.
    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.values
    }
}

/// Detected-vehicle count per lane.
pub fn build_vector_count(
    sim: &Simulation,
    intersection: IntersectionId,
    cfg: &ObservationConfig,
) -> Result<VectorState, SimError> {
    debug_assert_eq!(cfg.kind, ReprKind::VehicleCount);
    let detected = sim.vehicles_in_radius(intersection, cfg.detection_radius)?;
    Ok(VectorState {
        values: detected.iter().map(|lane| lane.len() as f64).collect(),
    })
}

/// Mean accumulated waiting time of detected vehicles per lane; empty lanes
/// read zero.
pub fn build_vector_wait(
    sim: &Simulation,
    intersection: IntersectionId,
    cfg: &ObservationConfig,
) -> Result<VectorState, SimError> {
    debug_assert_eq!(cfg.kind, ReprKind::AvgWait);
    let detected = sim.vehicles_in_radius(intersection, cfg.detection_radius)?;
    Ok(VectorState {
        values: detected
            .iter()
            .map(|lane| {
                if lane.is_empty() {
                    0.0
                } else {
                    lane.iter().map(|v| v.waiting_time).sum::<f64>() / lane.len() as f64
                }
            })
            .collect(),
    })
}

/// Per-vehicle grid: each detected vehicle lands in cell
/// floor(distance / cell_length), clamped to the last cell. Co-located
/// vehicles keep presence saturated at one, average their speed channel and
/// keep the worst waiting time.
pub fn build_image(
    sim: &Simulation,
    intersection: IntersectionId,
    cfg: &ObservationConfig,
) -> Result<ImageState, SimError> {
    debug_assert_eq!(cfg.kind, ReprKind::ImageLike);
    let detected = sim.vehicles_in_radius(intersection, cfg.detection_radius)?;
    let cells = cfg.cells();
    let lanes = detected.len();
    let mut values = vec![0.0; cells * lanes * IMAGE_CHANNELS];
    let mut counts = vec![0u32; cells * lanes];

    for (lane, lane_vehicles) in detected.iter().enumerate() {
        for v in lane_vehicles {
            let cell = ((v.distance_to_stop_line / cfg.cell_length).floor() as usize).min(cells - 1);
            let slot = cell * lanes + lane;
            let base = slot * IMAGE_CHANNELS;
            counts[slot] += 1;
            values[base] = 1.0;
            values[base + 1] += (v.speed / cfg.speed_norm).min(1.0);
            values[base + 2] = values[base + 2].max((v.waiting_time / cfg.wait_cap).min(1.0));
        }
    }
    for (slot, &n) in counts.iter().enumerate() {
        if n > 1 {
            values[slot * IMAGE_CHANNELS + 1] /= n as f64;
        }
    }
    Ok(ImageState {
        values,
        cells,
        lanes,
    })
}

/// Build the configured representation and flatten it for the Q-network.
pub fn build_flat(
    sim: &Simulation,
    intersection: IntersectionId,
    cfg: &ObservationConfig,
) -> Result<Vec<f64>, SimError> {
    match cfg.kind {
        ReprKind::VehicleCount => Ok(build_vector_count(sim, intersection, cfg)?.values),
        ReprKind::AvgWait => Ok(build_vector_wait(sim, intersection, cfg)?.values),
        ReprKind::ImageLike => Ok(build_image(sim, intersection, cfg)?.into_flat()),
    }
}
