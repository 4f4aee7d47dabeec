//! Accuracy metrics, ROC analysis, the posterior CRLB and efficiency.

mod crlb;
mod report;

pub use crlb::{measurement_schedule, pcrlb_recursion, pcrlb_trace, CrlbConfig, CrlbModel, CrlbStep, CrlbTrace};
pub use report::{write_box_csv, write_cdf_csv, write_metrics_csv, BoxStats, MethodSummary};

use crate::error::{Error, Result};
use crate::filter::TraceRow;
use crate::types::Groundtruth;

/// Errors of one filter run against groundtruth.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    /// Planar error per step (m).
    pub errors: Vec<f64>,
    pub rmse: f64,
}

impl RunResult {
    /// Aligns each trace row with the groundtruth position interpolated at its
    /// timestamp. Rows outside the groundtruth time span are dropped.
    pub fn from_trace(seed: u64, trace: &[TraceRow], gt: &Groundtruth) -> Result<Self> {
        let (t0, t1) = (gt.start_time(), gt.end_time());
        let errors: Vec<f64> = trace
            .iter()
            .filter(|r| r.t >= t0 - 1e-9 && r.t <= t1 + 1e-9)
            .map(|r| {
                let p = gt.position_at(r.t);
                (r.est[0] - p[0]).hypot(r.est[1] - p[1])
            })
            .collect();
        let rmse = rms(&errors)?;
        Ok(RunResult { seed, errors, rmse })
    }
}

fn rms(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::Data("no estimates to score".into()));
    }
    Ok((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

/// Root-mean-square planar distance between paired estimates and truths.
pub fn rmse(estimates: &[[f64; 2]], truth: &[[f64; 2]]) -> Result<f64> {
    if estimates.len() != truth.len() {
        return Err(Error::Data(format!(
            "{} estimates for {} groundtruth points",
            estimates.len(),
            truth.len()
        )));
    }
    let errors: Vec<f64> = estimates
        .iter()
        .zip(truth)
        .map(|(e, g)| (e[0] - g[0]).hypot(e[1] - g[1]))
        .collect();
    rms(&errors)
}

/// Right-continuous empirical distribution function.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("empirical CDF of an empty sample".into()));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Data("NaN in CDF sample".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(EmpiricalCdf { sorted })
    }

    /// Fraction of values ≤ `x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }
}

pub fn empirical_cdf(errors: &[f64]) -> Result<EmpiricalCdf> {
    EmpiricalCdf::new(errors)
}

/// Pointwise median over runs of each run's CDF, evaluated on `grid`.
pub fn median_cdf(runs: &[EmpiricalCdf], grid: &[f64]) -> Result<Vec<f64>> {
    if runs.is_empty() {
        return Err(Error::Data("median CDF of zero runs".into()));
    }
    Ok(grid
        .iter()
        .map(|&x| {
            let mut v: Vec<f64> = runs.iter().map(|c| c.eval(x)).collect();
            quantile_sorted(sort(&mut v), 0.5)
        })
        .collect())
}

fn sort(v: &mut [f64]) -> &[f64] {
    v.sort_by(f64::total_cmp);
    v
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// ROC curve as (false-positive rate, true-positive rate) points from (0, 0)
/// to (1, 1), and the area under it.
#[derive(Debug, Clone, PartialEq)]
pub struct Roc {
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Sweeps every distinct score as a threshold (`score ≥ threshold` is
/// positive). Tied scores move the curve diagonally.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<Roc> {
    if scores.len() != positive.len() {
        return Err(Error::Data("scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Data("NaN score".into()));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Data("ROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x0, y0) = *points.last().unwrap();
        let p = (fp as f64 / n_neg as f64, tp as f64 / n_pos as f64);
        auc += (p.0 - x0) * (p.1 + y0) / 2.0;
        points.push(p);
    }
    Ok(Roc { points, auc })
}

/// `100 · crlb_rms / rmse` (percent).
pub fn efficiency(crlb_rms: f64, rmse: f64) -> Result<f64> {
    if !(rmse > 0.0) || !rmse.is_finite() {
        return Err(Error::Domain(format!("efficiency needs a positive RMSE, got {rmse}")));
    }
    if !(crlb_rms >= 0.0) {
        return Err(Error::Domain(format!("CRLB must be non-negative, got {crlb_rms}")));
    }
    Ok(100.0 * crlb_rms / rmse)
}

/// Mean and standard error of the mean.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
