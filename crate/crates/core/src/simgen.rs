//! Synthetic scenarios: trajectories, occlusion-based LOS labels and RSSI
//! streams drawn from the path-loss model.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::io::LabelRecord;
use crate::pathloss::{mean_rssi, PathLossParams};
use crate::types::{distance3, Beacon, BeaconMap, Groundtruth, GroundtruthPose, Label, RssiObservation};

/// Axis-aligned rectangular obstacle in the floor plane (meters).
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct Obstacle {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Obstacle {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let o = Obstacle {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_max <= self.x_min || self.y_max <= self.y_min {
            return Err(Error::Config(format!("degenerate obstacle {self:?}")));
        }
        Ok(())
    }

    /// Whether the segment `a → b` passes through the open interior.
    pub fn blocks(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        // Liang–Barsky clipping against open slabs.
        let d = [b[0] - a[0], b[1] - a[1]];
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        let slabs = [(self.x_min, self.x_max), (self.y_min, self.y_max)];
        for (k, &(min, max)) in slabs.iter().enumerate() {
            if d[k] == 0.0 {
                if !(a[k] > min && a[k] < max) {
                    return false;
                }
                continue;
            }
            let t1 = (min - a[k]) / d[k];
            let t2 = (max - a[k]) / d[k];
            let (t_in, t_out) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            lo = lo.max(t_in);
            hi = hi.min(t_out);
            if lo >= hi {
                return false;
            }
        }
        true
    }
}

/// A simulated data-collection run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub beacons: BeaconMap,
    pub obstacles: Vec<Obstacle>,
    /// Planar polyline followed by the receiver.
    pub waypoints: Vec<[f64; 2]>,
    /// m/s
    pub speed: f64,
    pub receiver_height: f64,
    pub pathloss: PathLossParams,
    /// Mean attenuation added to blocked links (dBm).
    pub nlos_extra_loss: f64,
    /// Extra noise std on blocked links (dBm).
    pub nlos_extra_std: f64,
    /// Hz
    pub sample_rate: f64,
    /// Probability that a (pose, beacon) sample is lost.
    pub dropout: f64,
    pub seed: u64,
}

pub const DEFAULT_NLOS_EXTRA_LOSS: f64 = 8.0;
pub const DEFAULT_NLOS_EXTRA_STD: f64 = 2.0;

/// Path-loss parameters used when a scenario does not give its own:
/// power falls with distance at exponent 1.72, 3 dBm noise.
pub fn default_pathloss() -> PathLossParams {
    PathLossParams {
        a_x: -64.53,
        gamma: -1.72,
        d0: 1.78,
        sigma: 3.0,
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    beacons: Vec<Beacon>,
    #[serde(default)]
    obstacles: Vec<Obstacle>,
    waypoints: Vec<[f64; 2]>,
    speed: f64,
    #[serde(default = "default_receiver_height")]
    receiver_height: f64,
    pathloss: Option<PathLossParams>,
    #[serde(default = "default_nlos_loss")]
    nlos_extra_loss: f64,
    #[serde(default = "default_nlos_std")]
    nlos_extra_std: f64,
    #[serde(default = "default_rate")]
    sample_rate: f64,
    #[serde(default)]
    dropout: f64,
    #[serde(default)]
    seed: u64,
}

fn default_receiver_height() -> f64 {
    1.0
}
fn default_nlos_loss() -> f64 {
    DEFAULT_NLOS_EXTRA_LOSS
}
fn default_nlos_std() -> f64 {
    DEFAULT_NLOS_EXTRA_STD
}
fn default_rate() -> f64 {
    10.0
}

impl Scenario {
    /// A scenario with default noise settings, 10 Hz and no dropout.
    pub fn new(beacons: BeaconMap, waypoints: Vec<[f64; 2]>, speed: f64) -> Self {
        Scenario {
            beacons,
            obstacles: Vec::new(),
            waypoints,
            speed,
            receiver_height: default_receiver_height(),
            pathloss: default_pathloss(),
            nlos_extra_loss: DEFAULT_NLOS_EXTRA_LOSS,
            nlos_extra_std: DEFAULT_NLOS_EXTRA_STD,
            sample_rate: default_rate(),
            dropout: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("speed", self.speed)?;
        positive("sample_rate", self.sample_rate)?;
        for (name, v) in [
            ("nlos_extra_loss", self.nlos_extra_loss),
            ("nlos_extra_std", self.nlos_extra_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if !self.receiver_height.is_finite() {
            return Err(Error::Config("receiver_height must be finite".into()));
        }
        if self.waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("waypoints must be finite".into()));
        }
        self.pathloss.validate()?;
        self.obstacles.iter().try_for_each(Obstacle::validate)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let f: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let s = Scenario {
            beacons: BeaconMap::new(f.beacons).map_err(|e| Error::Config(e.to_string()))?,
            obstacles: f.obstacles,
            waypoints: f.waypoints,
            speed: f.speed,
            receiver_height: f.receiver_height,
            pathloss: f.pathloss.unwrap_or_else(default_pathloss),
            nlos_extra_loss: f.nlos_extra_loss,
            nlos_extra_std: f.nlos_extra_std,
            sample_rate: f.sample_rate,
            dropout: f.dropout,
            seed: f.seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Scenario::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

/// Poses at `1/sample_rate` spacing, moving along the polyline at constant
/// speed from `t = 0`. The last pose is the final one that does not overshoot
/// the end of the path.
pub fn generate_trajectory(scenario: &Scenario) -> Result<Groundtruth> {
    scenario.validate()?;
    let w = &scenario.waypoints;
    if w.len() < 2 {
        return Err(Error::Config("a trajectory needs at least 2 waypoints".into()));
    }
    let lengths: Vec<f64> = w
        .windows(2)
        .map(|p| (p[1][0] - p[0][0]).hypot(p[1][1] - p[0][1]))
        .collect();
    let total: f64 = lengths.iter().sum();
    if total <= 0.0 {
        return Err(Error::Config("waypoint polyline has zero length".into()));
    }
    let duration = total / scenario.speed;
    let n = (duration * scenario.sample_rate + 1e-9).floor() as usize + 1;

    let mut poses = Vec::with_capacity(n);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 0..n {
        let t = k as f64 / scenario.sample_rate;
        let s = (scenario.speed * t).min(total);
        while seg + 1 < lengths.len() && s > seg_start + lengths[seg] {
            seg_start += lengths[seg];
            seg += 1;
        }
        let u = if lengths[seg] > 0.0 {
            ((s - seg_start) / lengths[seg]).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (a, b) = (w[seg], w[seg + 1]);
        poses.push(GroundtruthPose {
            t,
            position: [
                a[0] + u * (b[0] - a[0]),
                a[1] + u * (b[1] - a[1]),
                scenario.receiver_height,
            ],
        });
    }
    Groundtruth::new(poses)
}

/// True when the planar projection of `position → beacon` crosses no
/// obstacle interior.
pub fn is_los(position: [f64; 3], beacon: [f64; 3], obstacles: &[Obstacle]) -> bool {
    let a = [position[0], position[1]];
    let b = [beacon[0], beacon[1]];
    !obstacles.iter().any(|o| o.blocks(a, b))
}

/// Output of [`sample_rssi_stream`].
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub observations: Vec<RssiObservation>,
    /// One label per observation, in the same order.
    pub labels: Vec<LabelRecord>,
    pub groundtruth: Groundtruth,
}

/// Samples one RSSI value per pose and beacon, dropping each independently
/// with probability `dropout`. Blocked links lose `nlos_extra_loss` on
/// average and have noise std `sigma + nlos_extra_std`.
pub fn sample_rssi_stream(scenario: &Scenario) -> Result<SimOutput> {
    let groundtruth = generate_trajectory(scenario)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let p = &scenario.pathloss;
    let mut observations = Vec::new();
    let mut labels = Vec::new();
    for pose in groundtruth.poses() {
        for beacon in scenario.beacons.entries() {
            let keep = rng.random::<f64>() >= scenario.dropout;
            let eps: f64 = rng.sample(StandardNormal);
            if !keep {
                continue;
            }
            let pos = beacon.position();
            let d = distance3(pose.position, pos);
            let mean = mean_rssi(p, d).map_err(|_| {
                Error::Data(format!("receiver coincides with beacon {} at t = {}", beacon.id, pose.t))
            })?;
            let los = is_los(pose.position, pos, &scenario.obstacles);
            let rssi = if los {
                mean + p.sigma * eps
            } else {
                mean - scenario.nlos_extra_loss + (p.sigma + scenario.nlos_extra_std) * eps
            };
            observations.push(RssiObservation::new(pose.t, beacon.id.clone(), rssi));
            labels.push(LabelRecord {
                t: pose.t,
                beacon_id: beacon.id.clone(),
                label: Label::from_los(los),
            });
        }
    }
    Ok(SimOutput {
        observations,
        labels,
        groundtruth,
    })
}
