//! Shared domain types: beacons, RSSI records, training points and groundtruth.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A BLE beacon at a known position (meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beacon {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Beacon {
    pub fn new(id: impl Into<String>, position: [f64; 3]) -> Self {
        Beacon {
            id: id.into(),
            x: position[0],
            y: position[1],
            z: position[2],
        }
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// The set of known beacons. Ids are unique, positions finite, never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct BeaconMap {
    entries: Vec<Beacon>,
    index: HashMap<String, usize>,
}

impl BeaconMap {
    pub fn new(entries: Vec<Beacon>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Data("beacon map is empty".into()));
        }
        let mut index = HashMap::with_capacity(entries.len());
        for (i, b) in entries.iter().enumerate() {
            if !(b.x.is_finite() && b.y.is_finite() && b.z.is_finite()) {
                return Err(Error::Data(format!("beacon {} has a non-finite position", b.id)));
            }
            if index.insert(b.id.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate beacon id {}", b.id)));
            }
        }
        Ok(BeaconMap { entries, index })
    }

    pub fn get(&self, id: &str) -> Option<&Beacon> {
        self.index.get(id).map(|&i| &self.entries[i])
    }

    pub fn position(&self, id: &str) -> Option<[f64; 3]> {
        self.get(id).map(Beacon::position)
    }

    pub fn entries(&self) -> &[Beacon] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Planar bounding box `[xmin, xmax, ymin, ymax]`.
    pub fn planar_bounds(&self) -> [f64; 4] {
        let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for e in &self.entries {
            b[0] = b[0].min(e.x);
            b[1] = b[1].max(e.x);
            b[2] = b[2].min(e.y);
            b[3] = b[3].max(e.y);
        }
        b
    }
}

/// One received signal strength sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RssiObservation {
    /// Seconds.
    pub t: f64,
    pub beacon_id: String,
    /// dBm.
    pub rssi: f64,
}

impl RssiObservation {
    pub fn new(t: f64, beacon_id: impl Into<String>, rssi: f64) -> Self {
        RssiObservation {
            t,
            beacon_id: beacon_id.into(),
            rssi,
        }
    }
}

/// Line-of-sight class label. Encoded as +1 (LOS) and -1 (NLOS).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Los,
    Nlos,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Los => 1.0,
            Label::Nlos => -1.0,
        }
    }

    pub fn from_sign(y: f64) -> Result<Self> {
        if y == 1.0 {
            Ok(Label::Los)
        } else if y == -1.0 {
            Ok(Label::Nlos)
        } else {
            Err(Error::Data(format!("class label must be +1 or -1, got {y}")))
        }
    }

    pub fn from_los(los: bool) -> Self {
        if los {
            Label::Los
        } else {
            Label::Nlos
        }
    }

    pub fn is_los(self) -> bool {
        self == Label::Los
    }
}

/// Default upper bound on training distances (meters).
pub const DEFAULT_MAX_RANGE: f64 = 10.0;

/// A labelled classifier input: range to the beacon and the received power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingPoint {
    pub distance: f64,
    pub rssi: f64,
    pub label: Label,
}

impl TrainingPoint {
    pub fn new(distance: f64, rssi: f64, label: Label, max_range: f64) -> Result<Self> {
        if !(distance >= 0.0 && distance <= max_range) {
            return Err(Error::Data(format!(
                "training distance {distance} outside [0, {max_range}]"
            )));
        }
        if !rssi.is_finite() {
            return Err(Error::Data("training rssi is not finite".into()));
        }
        Ok(TrainingPoint {
            distance,
            rssi,
            label,
        })
    }

    pub fn input(&self) -> [f64; 2] {
        [self.distance, self.rssi]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundtruthPose {
    pub t: f64,
    pub position: [f64; 3],
}

/// A groundtruth trajectory with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Groundtruth {
    poses: Vec<GroundtruthPose>,
}

impl Groundtruth {
    pub fn new(poses: Vec<GroundtruthPose>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::Data("groundtruth is empty".into()));
        }
        for w in poses.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::Data(format!(
                    "groundtruth timestamps not strictly increasing at t={}",
                    w[1].t
                )));
            }
        }
        Ok(Groundtruth { poses })
    }

    pub fn poses(&self) -> &[GroundtruthPose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.poses[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.poses[self.poses.len() - 1].t
    }

    /// Position at time `t`, linearly interpolated and clamped to the ends.
    pub fn position_at(&self, t: f64) -> [f64; 3] {
        let p = &self.poses;
        if t <= p[0].t {
            return p[0].position;
        }
        if t >= p[p.len() - 1].t {
            return p[p.len() - 1].position;
        }
        let hi = p.partition_point(|q| q.t <= t);
        let (a, b) = (&p[hi - 1], &p[hi]);
        let u = (t - a.t) / (b.t - a.t);
        let mut out = [0.0; 3];
        for k in 0..3 {
            out[k] = a.position[k] + u * (b.position[k] - a.position[k]);
        }
        out
    }
}

pub(crate) fn distance3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}
