//! Raw RSSI preprocessing: windowed medians and label-stratified downsampling.

use std::collections::{BTreeMap, HashMap};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::LabelRecord;
use crate::types::{distance3, BeaconMap, Groundtruth, Label, RssiObservation, TrainingPoint};

/// How observations inside one time window are grouped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MedianMode {
    /// One median per (window, beacon).
    #[default]
    PerBeacon,
    /// One median over every beacon seen in the window (co-located beacons).
    CrossBeacon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowMedian {
    /// Mean timestamp of the bucket members.
    pub t: f64,
    /// `None` in cross-beacon mode.
    pub beacon_id: Option<String>,
    pub rssi: f64,
    pub count: usize,
}

/// Median of a non-empty slice; even sizes average the two central values.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Buckets observations into consecutive windows `[k·w, (k+1)·w)` and emits
/// one median per non-empty bucket, ordered by window then beacon id.
pub fn median_window_filter(
    obs: &[RssiObservation],
    window: f64,
    mode: MedianMode,
) -> Result<Vec<WindowMedian>> {
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::Config(format!("median window must be positive, got {window}")));
    }
    let mut buckets: BTreeMap<(i64, Option<&str>), (f64, Vec<f64>)> = BTreeMap::new();
    for o in obs {
        let k = (o.t / window).floor() as i64;
        let key = match mode {
            MedianMode::PerBeacon => (k, Some(o.beacon_id.as_str())),
            MedianMode::CrossBeacon => (k, None),
        };
        let entry = buckets.entry(key).or_insert((0.0, Vec::new()));
        entry.0 += o.t;
        entry.1.push(o.rssi);
    }
    Ok(buckets
        .into_iter()
        .map(|((_, id), (tsum, mut vals))| {
            let count = vals.len();
            WindowMedian {
                t: tsum / count as f64,
                beacon_id: id.map(str::to_owned),
                rssi: median(&mut vals),
                count,
            }
        })
        .collect())
}

/// Label-stratified uniform subsample without replacement.
///
/// Each class keeps a share proportional to its input frequency; the output
/// preserves input order and is a pure function of `(points, target, seed)`.
pub fn downsample(points: &[TrainingPoint], target: usize, seed: u64) -> Result<Vec<TrainingPoint>> {
    if target == 0 {
        return Err(Error::Config("downsample target must be at least 1".into()));
    }
    let n = points.len();
    if n <= target {
        return Ok(points.to_vec());
    }
    let los: Vec<usize> = (0..n).filter(|&i| points[i].label.is_los()).collect();
    let nlos: Vec<usize> = (0..n).filter(|&i| !points[i].label.is_los()).collect();
    let mut keep_los = ((target as f64) * los.len() as f64 / n as f64).round() as usize;
    keep_los = keep_los.min(los.len()).min(target);
    let keep_nlos = (target - keep_los).min(nlos.len());
    let keep_los = target - keep_nlos;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = index::sample(&mut rng, los.len(), keep_los)
        .into_iter()
        .map(|i| los[i])
        .chain(
            index::sample(&mut rng, nlos.len(), keep_nlos)
                .into_iter()
                .map(|i| nlos[i]),
        )
        .collect();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| points[i]).collect())
}

/// A window median tagged with the true range at its timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct RangedSample {
    pub t: f64,
    pub beacon_id: String,
    pub distance: f64,
    pub rssi: f64,
    /// Majority label of the window; ties count as NLOS.
    pub label: Option<Label>,
}

/// Per-beacon window medians of `obs` with the 3-D groundtruth range.
///
/// Medians outside the groundtruth time span are dropped. With `labels`,
/// every window must contain at least one label.
pub fn ranged_samples(
    obs: &[RssiObservation],
    labels: Option<&[LabelRecord]>,
    gt: &Groundtruth,
    beacons: &BeaconMap,
    window: f64,
) -> Result<Vec<RangedSample>> {
    let medians = median_window_filter(obs, window, MedianMode::PerBeacon)?;
    let mut votes: HashMap<(i64, &str), (usize, usize)> = HashMap::new();
    for l in labels.unwrap_or(&[]) {
        let v = votes
            .entry(((l.t / window).floor() as i64, l.beacon_id.as_str()))
            .or_default();
        if l.label.is_los() {
            v.0 += 1;
        } else {
            v.1 += 1;
        }
    }
    let (t0, t1) = (gt.start_time(), gt.end_time());
    let mut out = Vec::with_capacity(medians.len());
    for m in medians {
        if m.t < t0 - 1e-9 || m.t > t1 + 1e-9 {
            continue;
        }
        let id = m.beacon_id.expect("per-beacon medians carry an id");
        let b = beacons
            .position(&id)
            .ok_or_else(|| Error::Data(format!("unknown beacon {id}")))?;
        let label = match labels {
            None => None,
            Some(_) => {
                let k = ((m.t / window).floor() as i64, id.as_str());
                // The mean timestamp can fall in the next window by rounding.
                let v = votes
                    .get(&k)
                    .or_else(|| votes.get(&(k.0 - 1, k.1)))
                    .ok_or_else(|| Error::Data(format!("no label for beacon {id} near t = {}", m.t)))?;
                Some(Label::from_los(v.0 > v.1))
            }
        };
        out.push(RangedSample {
            t: m.t,
            distance: distance3(gt.position_at(m.t), b),
            beacon_id: id,
            rssi: m.rssi,
            label,
        });
    }
    if out.is_empty() {
        return Err(Error::Data("no RSSI samples inside the groundtruth time span".into()));
    }
    Ok(out)
}
