//! Posterior Cramér–Rao lower bound along a known trajectory.

use nalgebra::{Matrix4, RowVector4};

use crate::error::{Error, Result};
use crate::filter::{range_to_beacon, slot_batches, MeasurementConfig, MotionParams, Region};
use crate::types::{BeaconMap, Groundtruth, RssiObservation};

/// Per-observation measurement model seen by the bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CrlbModel {
    /// Range with additive Gaussian noise of this std (m).
    Range { sigma: f64 },
    /// Log-range with additive Gaussian noise of this std.
    LogRange { scale: f64 },
}

impl CrlbModel {
    /// The base likelihood of `cfg`; classifier gating is ignored.
    pub fn from_config(cfg: &MeasurementConfig) -> Self {
        if cfg.mode.is_lognormal() {
            CrlbModel::LogRange {
                scale: cfg.pathloss.log_range_scale(cfg.sigma_ln),
            }
        } else {
            CrlbModel::Range { sigma: cfg.sigma_n }
        }
    }

    /// Fisher information of one observation of a beacon at `offset`
    /// (receiver minus beacon, 3-D).
    fn information(&self, offset: [f64; 3]) -> Matrix4<f64> {
        let r2 = offset.iter().map(|v| v * v).sum::<f64>();
        let (grad_scale, var) = match *self {
            CrlbModel::Range { sigma } => (1.0 / r2.sqrt(), sigma * sigma),
            CrlbModel::LogRange { scale } => (1.0 / r2, scale * scale),
        };
        let h = RowVector4::new(offset[0] * grad_scale, 0.0, offset[1] * grad_scale, 0.0);
        h.transpose() * h / var
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrlbConfig {
    pub model: CrlbModel,
    /// Information of the initial state.
    pub prior_information: Matrix4<f64>,
    pub receiver_height: f64,
    /// Steps during which a singular information matrix is tolerated.
    pub warmup: usize,
}

impl CrlbConfig {
    /// Prior matching the filter initialisation: uniform position over
    /// `region`, velocity `N(0, sigma_v²)`.
    pub fn prior_from_region(region: &Region, sigma_v: f64) -> Result<Matrix4<f64>> {
        let (w, h) = (region.x_max - region.x_min, region.y_max - region.y_min);
        if !(w > 0.0 && h > 0.0 && sigma_v > 0.0) {
            return Err(Error::Config("prior needs a region with area and sigma_v > 0".into()));
        }
        let v = 1.0 / (sigma_v * sigma_v);
        Ok(Matrix4::from_diagonal(&[12.0 / (w * w), v, 12.0 / (h * h), v].into()))
    }
}

/// One filter step: its time and the information its observations add.
#[derive(Debug, Clone, PartialEq)]
pub struct CrlbStep {
    pub t: f64,
    pub measurement_information: Matrix4<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrlbTrace {
    pub times: Vec<f64>,
    /// Posterior information after each step.
    pub information: Vec<Matrix4<f64>>,
    /// Lower bound on the planar position MSE (m²); infinite while singular.
    pub position_variance: Vec<f64>,
}

impl CrlbTrace {
    /// Per-step bound on the RMS position error (m).
    pub fn bounds(&self) -> Vec<f64> {
        self.position_variance.iter().map(|v| v.sqrt()).collect()
    }

    /// Square root of the mean bound over the steps (m).
    pub fn rms(&self) -> f64 {
        let n = self.position_variance.len() as f64;
        (self.position_variance.iter().sum::<f64>() / n).sqrt()
    }
}

fn transition(ts: f64) -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 1)] = ts;
    f[(2, 3)] = ts;
    f
}

/// Runs `J ← D22 − D21 (J + D11)⁻¹ D12 + M_k` for every step. This form
/// accepts a singular `J`, so the prior may carry no information.
pub fn pcrlb_recursion(
    prior: &Matrix4<f64>,
    motion: &MotionParams,
    steps: &[CrlbStep],
    warmup: usize,
) -> Result<CrlbTrace> {
    motion.validate()?;
    if motion.sigma_u <= 0.0 || motion.sigma_v <= 0.0 {
        return Err(Error::Config("the bound needs positive process noise".into()));
    }
    let f = transition(motion.ts);
    let (qu, qv) = (motion.sigma_u.powi(-2), motion.sigma_v.powi(-2));
    let q_inv = Matrix4::from_diagonal(&[qu, qv, qu, qv].into());
    let d11 = f.transpose() * q_inv * f;
    let d12 = -f.transpose() * q_inv;

    let mut j = *prior;
    let mut out = CrlbTrace {
        times: Vec::with_capacity(steps.len()),
        information: Vec::with_capacity(steps.len()),
        position_variance: Vec::with_capacity(steps.len()),
    };
    for (k, step) in steps.iter().enumerate() {
        let inner = (j + d11)
            .cholesky()
            .ok_or_else(|| Error::Numerical("prediction information is not positive definite".into()))?
            .inverse();
        j = q_inv - d12.transpose() * inner * d12 + step.measurement_information;
        j = (j + j.transpose()) * 0.5;
        let var = match j.cholesky() {
            Some(c) => {
                let cov = c.inverse();
                cov[(0, 0)] + cov[(2, 2)]
            }
            None if k < warmup => f64::INFINITY,
            None => {
                return Err(Error::Numerical(format!(
                    "information matrix singular at step {k}, after the {warmup}-step warm-up"
                )))
            }
        };
        out.times.push(step.t);
        out.information.push(j);
        out.position_variance.push(var);
    }
    Ok(out)
}

/// Groups `obs` into filter steps exactly as the particle filter does and
/// evaluates the bound at the true positions.
pub fn pcrlb_trace(
    gt: &Groundtruth,
    obs: &[RssiObservation],
    beacons: &BeaconMap,
    motion: &MotionParams,
    cfg: &CrlbConfig,
) -> Result<CrlbTrace> {
    let steps = measurement_schedule(gt, obs, beacons, motion, cfg)?;
    pcrlb_recursion(&cfg.prior_information, motion, &steps, cfg.warmup)
}

/// Measurement information per filter step along the groundtruth.
pub fn measurement_schedule(
    gt: &Groundtruth,
    obs: &[RssiObservation],
    beacons: &BeaconMap,
    motion: &MotionParams,
    cfg: &CrlbConfig,
) -> Result<Vec<CrlbStep>> {
    let (t0, batches) = slot_batches(obs, motion.ts)?;
    batches
        .iter()
        .enumerate()
        .map(|(k, batch)| {
            let t = t0 + k as f64 * motion.ts;
            let p = gt.position_at(t);
            let mut info = Matrix4::zeros();
            for o in batch {
                let b = beacons
                    .position(&o.beacon_id)
                    .ok_or_else(|| Error::Data(format!("unknown beacon {}", o.beacon_id)))?;
                if range_to_beacon([p[0], p[1]], cfg.receiver_height, b) == 0.0 {
                    return Err(Error::Data(format!("receiver on beacon {} at t = {t}", o.beacon_id)));
                }
                let offset = [p[0] - b[0], p[1] - b[1], cfg.receiver_height - b[2]];
                info += cfg.model.information(offset);
            }
            Ok(CrlbStep {
                t,
                measurement_information: info,
            })
        })
        .collect()
}
