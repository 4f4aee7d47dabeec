//! SIR particle filter over planar position and velocity.
//!
//! The state of each particle is `[x, ẋ, y, ẏ]`. Motion follows a constant
//! velocity model with diagonal Gaussian noise; each RSSI observation is
//! converted to a range and weighs the particles through one of four
//! measurement models, optionally gated by the cached LOS classifier.
//! Weights are updated in the log domain and renormalized after every
//! observation, which keeps sharp likelihoods from underflowing.

pub mod run;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cache::LosGrid;
use crate::error::{Error, Result};
use crate::pathloss::{distance_from_rssi, PathLossParams};
use crate::types::{BeaconMap, RssiObservation};

pub use run::{run_filter, slot_batches, RunOptions, TraceRow};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Particle states `[x, ẋ, y, ẏ]` with normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub particles: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
    /// Fixed z coordinate of the receiver, meters.
    pub receiver_height: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionParams {
    /// Position noise std, meters.
    pub sigma_u: f64,
    /// Velocity noise std, m/s.
    pub sigma_v: f64,
    /// Sampling time, seconds.
    pub ts: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        MotionParams {
            sigma_u: 0.1,
            sigma_v: 0.05,
            ts: 0.1,
        }
    }
}

impl MotionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ts > 0.0 && self.ts.is_finite()) || !(self.sigma_u >= 0.0) || !(self.sigma_v >= 0.0) {
            return Err(Error::Config(format!("invalid motion parameters {self:?}")));
        }
        Ok(())
    }
}

/// The four compared measurement models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "pfg")]
    Gaussian,
    #[serde(rename = "pfg-c")]
    GaussianClassifier,
    #[serde(rename = "pfl")]
    LogNormal,
    #[serde(rename = "pfl-c")]
    LogNormalClassifier,
}

impl Mode {
    pub const ALL: [Mode; 4] = [
        Mode::Gaussian,
        Mode::GaussianClassifier,
        Mode::LogNormal,
        Mode::LogNormalClassifier,
    ];

    pub fn uses_classifier(self) -> bool {
        matches!(self, Mode::GaussianClassifier | Mode::LogNormalClassifier)
    }

    pub fn is_lognormal(self) -> bool {
        matches!(self, Mode::LogNormal | Mode::LogNormalClassifier)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Gaussian => "pfg",
            Mode::GaussianClassifier => "pfg-c",
            Mode::LogNormal => "pfl",
            Mode::LogNormalClassifier => "pfl-c",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?} (expected pfg, pfg-c, pfl or pfl-c)")))
    }
}

/// Random-measurement constant for `mode`: 0.1 for the Gaussian models and
/// `(d0·σ_ln·√(2π))⁻¹` for the log-normal ones.
pub fn default_p_rand(mode: Mode, d0: f64, sigma_ln: f64) -> f64 {
    if mode.is_lognormal() {
        1.0 / (d0 * sigma_ln * (2.0 * std::f64::consts::PI).sqrt())
    } else {
        0.1
    }
}

#[derive(Debug, Clone)]
pub struct MeasurementConfig {
    pub mode: Mode,
    /// Range noise std of the Gaussian model, meters.
    pub sigma_n: f64,
    /// Power noise std of the log-normal model, dBm.
    pub sigma_ln: f64,
    /// A particle's measurement counts as LOS when the classifier gives
    /// strictly more than this.
    pub p_los_threshold: f64,
    pub p_rand: f64,
    pub pathloss: PathLossParams,
    pub grid: Option<Arc<LosGrid>>,
}

impl MeasurementConfig {
    /// Defaults: σ_n = 3 m, σ_ln = 0.4 dBm, threshold 0.4, mode-specific p_rand.
    pub fn new(mode: Mode, pathloss: PathLossParams, grid: Option<Arc<LosGrid>>) -> Self {
        let sigma_ln = 0.4;
        MeasurementConfig {
            mode,
            sigma_n: 3.0,
            sigma_ln,
            p_los_threshold: 0.4,
            p_rand: default_p_rand(mode, pathloss.d0, sigma_ln),
            pathloss,
            grid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pathloss.validate()?;
        if !(self.sigma_n > 0.0 && self.sigma_ln > 0.0) {
            return Err(Error::Config("measurement noise must be positive".into()));
        }
        if !(self.p_los_threshold > 0.0 && self.p_los_threshold < 1.0) {
            return Err(Error::Config(format!(
                "p_los threshold {} not in (0, 1)",
                self.p_los_threshold
            )));
        }
        if !(self.p_rand > 0.0 && self.p_rand.is_finite()) {
            return Err(Error::Config(format!("p_rand {} must be positive", self.p_rand)));
        }
        match (self.mode.uses_classifier(), self.grid.is_some()) {
            (true, false) => Err(Error::Config(format!("mode {} needs a LOS grid", self.mode))),
            (false, true) => Err(Error::Config(format!("mode {} takes no LOS grid", self.mode))),
            _ => Ok(()),
        }
    }

    /// Log-likelihood of one observation for a particle at predicted range
    /// `h`, given the measured range `z` and raw `rssi`.
    pub fn log_likelihood(&self, h: f64, z: f64, rssi: f64) -> f64 {
        let base = if self.mode.is_lognormal() {
            if h > 0.0 {
                let s = self.pathloss.log_range_scale(self.sigma_ln);
                let u = (z / h).ln() / s;
                -0.5 * u * u - (z * s).ln() - LN_SQRT_2PI
            } else {
                f64::NEG_INFINITY
            }
        } else {
            let u = (z - h) / self.sigma_n;
            -0.5 * u * u - self.sigma_n.ln() - LN_SQRT_2PI
        };
        if !self.mode.uses_classifier() {
            return base;
        }
        let grid = self.grid.as_ref().expect("classifier mode validated to carry a grid");
        let p = grid.query(h, rssi);
        if p > self.p_los_threshold {
            p.ln() + base
        } else {
            self.p_rand.ln()
        }
    }
}

/// Axis-aligned region for the initial particle positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Region {
    pub fn point(x: f64, y: f64) -> Self {
        Region {
            x_min: x,
            x_max: x,
            y_min: y,
            y_max: y,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.x_min, self.x_max, self.y_min, self.y_max].iter().all(|v| v.is_finite())
            && self.x_min <= self.x_max
            && self.y_min <= self.y_max;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid prior region {self:?}")))
        }
    }

    /// Bounding box of the beacons' planar positions.
    pub fn around_beacons(beacons: &BeaconMap) -> Self {
        let [x_min, x_max, y_min, y_max] = beacons.planar_bounds();
        Region {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }
}

/// Uniform positions over `region`, velocities `N(0, sigma_v²)`, uniform
/// weights.
pub fn init_particles(
    n_p: usize,
    region: &Region,
    sigma_v: f64,
    receiver_height: f64,
    rng: &mut impl Rng,
) -> Result<FilterState> {
    if n_p < 2 {
        return Err(Error::Config(format!("need at least 2 particles, got {n_p}")));
    }
    region.validate()?;
    let particles = (0..n_p)
        .map(|_| {
            let x = region.x_min + (region.x_max - region.x_min) * rng.random::<f64>();
            let y = region.y_min + (region.y_max - region.y_min) * rng.random::<f64>();
            let vx = sigma_v * rng.sample::<f64, _>(StandardNormal);
            let vy = sigma_v * rng.sample::<f64, _>(StandardNormal);
            [x, vx, y, vy]
        })
        .collect();
    Ok(FilterState {
        particles,
        weights: vec![1.0 / n_p as f64; n_p],
        receiver_height,
        t: 0.0,
    })
}

/// Constant-velocity propagation with additive diagonal noise.
pub fn predict(state: &mut FilterState, motion: &MotionParams, rng: &mut impl Rng) {
    for p in state.particles.iter_mut() {
        let n: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let x = p[0] + motion.ts * p[1] + motion.sigma_u * n[0];
        let vx = p[1] + motion.sigma_v * n[1];
        let y = p[2] + motion.ts * p[3] + motion.sigma_u * n[2];
        let vy = p[3] + motion.sigma_v * n[3];
        *p = [x, vx, y, vy];
    }
    state.t += motion.ts;
}

/// 3-D distance from a planar position at `receiver_height` to a beacon.
pub fn range_to_beacon(position: [f64; 2], receiver_height: f64, beacon: [f64; 3]) -> f64 {
    let dx = position[0] - beacon[0];
    let dy = position[1] - beacon[1];
    let dz = receiver_height - beacon[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Multiplies each weight by `exp(log_lik(particle))` and renormalizes.
///
/// Returns `true` when every likelihood was zero (or not finite); the
/// weights are then reset to uniform.
pub fn reweight(state: &mut FilterState, mut log_lik: impl FnMut(&[f64; 4]) -> f64) -> bool {
    let mut logw: Vec<f64> = state
        .particles
        .iter()
        .zip(&state.weights)
        .map(|(p, w)| {
            let l = log_lik(p);
            if l.is_nan() {
                f64::NEG_INFINITY
            } else {
                w.ln() + l
            }
        })
        .collect();
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let n = state.weights.len();
    if !max.is_finite() {
        if max == f64::INFINITY {
            log::warn!("infinite likelihood; resetting weights");
        } else {
            log::warn!("all particle likelihoods are zero; resetting weights");
        }
        state.weights.iter_mut().for_each(|w| *w = 1.0 / n as f64);
        return true;
    }
    for l in logw.iter_mut() {
        *l = (*l - max).exp();
    }
    let sum: f64 = logw.iter().sum();
    for (w, e) in state.weights.iter_mut().zip(logw) {
        *w = e / sum;
    }
    false
}

/// Weighs the particles by one RSSI observation. Returns the degeneracy flag
/// of [`reweight`].
pub fn weight_update(
    state: &mut FilterState,
    obs: &RssiObservation,
    beacons: &BeaconMap,
    cfg: &MeasurementConfig,
) -> Result<bool> {
    let beacon = beacons
        .position(&obs.beacon_id)
        .ok_or_else(|| Error::Data(format!("observation from unknown beacon {:?}", obs.beacon_id)))?;
    let z = distance_from_rssi(&cfg.pathloss, obs.rssi)?;
    let height = state.receiver_height;
    Ok(reweight(state, |p| {
        let h = range_to_beacon([p[0], p[2]], height, beacon);
        cfg.log_likelihood(h, z, obs.rssi)
    }))
}

/// `(Σ wᵢ²)⁻¹`.
pub fn effective_sample_size(state: &FilterState) -> f64 {
    1.0 / state.weights.iter().map(|w| w * w).sum::<f64>()
}

/// Offspring parent indices for systematic resampling with offset
/// `u ∈ [0, 1/n)`: the k-th pointer `u + k/n` selects the first particle
/// whose cumulative weight exceeds it.
pub fn systematic_indices(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut i = 0;
    for k in 0..n {
        let pointer = u + k as f64 / n as f64;
        while pointer >= cum && i + 1 < n {
            i += 1;
            cum += weights[i];
        }
        out.push(i);
    }
    out
}

/// Systematic resampling; weights become uniform.
pub fn systematic_resample(state: &mut FilterState, rng: &mut impl Rng) -> Vec<usize> {
    let n = state.weights.len();
    let u = rng.random::<f64>() / n as f64;
    let idx = systematic_indices(&state.weights, u);
    state.particles = idx.iter().map(|&i| state.particles[i]).collect();
    state.weights = vec![1.0 / n as f64; n];
    idx
}

/// Weighted mean planar position.
pub fn estimate(state: &FilterState) -> [f64; 2] {
    let mut e = [0.0; 2];
    for (p, w) in state.particles.iter().zip(&state.weights) {
        e[0] += w * p[0];
        e[1] += w * p[2];
    }
    e
}

/// What happened during one [`step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// ESS after the measurement updates, before any resampling.
    pub ess: f64,
    pub resampled: bool,
    /// Number of observations that zeroed every likelihood.
    pub degenerate_updates: usize,
}

/// Predict, update with each observation in turn, then resample if the ESS
/// dropped below `n_thr`.
pub fn step(
    state: &mut FilterState,
    batch: &[RssiObservation],
    beacons: &BeaconMap,
    motion: &MotionParams,
    cfg: &MeasurementConfig,
    n_thr: f64,
    rng: &mut impl Rng,
) -> Result<StepReport> {
    predict(state, motion, rng);
    let mut degenerate_updates = 0;
    for obs in batch {
        if weight_update(state, obs, beacons, cfg)? {
            degenerate_updates += 1;
        }
    }
    let ess = effective_sample_size(state);
    let resampled = ess < n_thr;
    if resampled {
        systematic_resample(state, rng);
    }
    Ok(StepReport {
        ess,
        resampled,
        degenerate_updates,
    })
}
