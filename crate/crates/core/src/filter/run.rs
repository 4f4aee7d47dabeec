//! Runs the filter over a whole RSSI log.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{estimate, init_particles, step, MeasurementConfig, MotionParams, Region};
use crate::error::{Error, Result};
use crate::types::{BeaconMap, RssiObservation};

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub n_particles: usize,
    /// Resample when the ESS falls below this.
    pub ess_threshold: f64,
    pub region: Region,
    pub receiver_height: f64,
    pub seed: u64,
}

/// One filter step: estimate at time `t` and resampling diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub est: [f64; 2],
    pub ess: f64,
    pub resampled: bool,
}

/// Filters `obs` (in any order) with one step per sampling interval.
///
/// Step `k` is stamped `t₀ + k·ts`, where `t₀` is the earliest observation,
/// and consumes the observations in `[t₀ + k·ts, t₀ + (k+1)·ts)` in time
/// order. Intervals without observations still predict.
pub fn run_filter(
    obs: &[RssiObservation],
    beacons: &BeaconMap,
    motion: &MotionParams,
    cfg: &MeasurementConfig,
    opts: &RunOptions,
) -> Result<Vec<TraceRow>> {
    motion.validate()?;
    cfg.validate()?;
    let (t0, batches) = slot_batches(obs, motion.ts)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut state = init_particles(
        opts.n_particles,
        &opts.region,
        motion.sigma_v,
        opts.receiver_height,
        &mut rng,
    )?;
    state.t = t0 - motion.ts;

    let mut rows = Vec::with_capacity(batches.len());
    for (k, batch) in batches.iter().enumerate() {
        let report = step(
            &mut state,
            batch,
            beacons,
            motion,
            cfg,
            opts.ess_threshold,
            &mut rng,
        )?;
        if report.degenerate_updates > 0 {
            log::debug!("step {k}: {} degenerate updates", report.degenerate_updates);
        }
        rows.push(TraceRow {
            t: t0 + k as f64 * motion.ts,
            est: estimate(&state),
            ess: report.ess,
            resampled: report.resampled,
        });
    }
    Ok(rows)
}

/// Sorts `obs` by time and splits it into sampling intervals of length `ts`
/// starting at the earliest timestamp `t₀`, which is returned alongside.
pub fn slot_batches(obs: &[RssiObservation], ts: f64) -> Result<(f64, Vec<Vec<RssiObservation>>)> {
    if obs.is_empty() {
        return Err(Error::Data("empty RSSI log".into()));
    }
    if let Some(o) = obs.iter().find(|o| !o.t.is_finite() || !o.rssi.is_finite()) {
        return Err(Error::Data(format!("non-finite observation {o:?}")));
    }
    let mut sorted = obs.to_vec();
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    let t0 = sorted[0].t;
    let slot = |t: f64| ((t - t0) / ts + 1e-9).floor() as usize;
    let mut batches = vec![Vec::new(); slot(sorted[sorted.len() - 1].t) + 1];
    for o in sorted {
        batches[slot(o.t)].push(o);
    }
    Ok((t0, batches))
}
