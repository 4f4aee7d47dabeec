//! Metric tables for plotting and reporting.

use std::path::Path;

use super::{mean_se, quantile_sorted, EmpiricalCdf};
use crate::error::{Error, Result};
use crate::io::write_atomic;

/// Aggregate over runs of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub rmse_mean: f64,
    pub rmse_se: f64,
    /// Mean over runs of the per-run efficiency (percent).
    pub eta_mean: f64,
    pub eta_se: f64,
    /// Efficiency of the mean bound over the mean RMSE (percent).
    pub eta_ratio_of_means: f64,
    /// Bound averaged over runs (m).
    pub crlb_rms: f64,
}

impl MethodSummary {
    /// `runs` holds `(crlb_rms, rmse)` per run. Efficiencies are NaN when
    /// undefined (zero RMSE).
    pub fn from_runs(method: impl Into<String>, runs: &[(f64, f64)]) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Data("no runs to summarise".into()));
        }
        let rmse: Vec<f64> = runs.iter().map(|r| r.1).collect();
        let crlb: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let eta: Vec<f64> = runs
            .iter()
            .map(|&(c, r)| super::efficiency(c, r).unwrap_or(f64::NAN))
            .collect();
        let (rmse_mean, rmse_se) = mean_se(&rmse);
        let (eta_mean, eta_se) = mean_se(&eta);
        let (crlb_rms, _) = mean_se(&crlb);
        Ok(MethodSummary {
            method: method.into(),
            rmse_mean,
            rmse_se,
            eta_mean,
            eta_se,
            eta_ratio_of_means: super::efficiency(crlb_rms, rmse_mean).unwrap_or(f64::NAN),
            crlb_rms,
        })
    }
}

fn to_csv(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Numerical(format!("CSV encoding failed: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::Numerical(format!("CSV encoding failed: {e}")))
}

/// `method,rmse_mean,rmse_se,eta_mean,eta_se,crlb_rms`
pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[MethodSummary]) -> Result<()> {
    let header: Vec<String> = ["method", "rmse_mean", "rmse_se", "eta_mean", "eta_se", "crlb_rms"]
        .map(String::from)
        .to_vec();
    let body = rows.iter().map(|r| {
        vec![
            r.method.clone(),
            r.rmse_mean.to_string(),
            r.rmse_se.to_string(),
            r.eta_mean.to_string(),
            r.eta_se.to_string(),
            r.crlb_rms.to_string(),
        ]
    });
    write_atomic(path.as_ref(), &to_csv(&header, body)?)
}

/// `error,<method>...` with one column of CDF values per method on a shared
/// error grid.
pub fn write_cdf_csv(path: impl AsRef<Path>, grid: &[f64], columns: &[(String, Vec<f64>)]) -> Result<()> {
    if columns.iter().any(|(_, c)| c.len() != grid.len()) {
        return Err(Error::Data("CDF column length differs from the grid".into()));
    }
    let mut header = vec!["error".to_string()];
    header.extend(columns.iter().map(|(m, _)| m.clone()));
    let body = grid.iter().enumerate().map(|(i, x)| {
        let mut row = vec![x.to_string()];
        row.extend(columns.iter().map(|(_, c)| c[i].to_string()));
        row
    });
    write_atomic(path.as_ref(), &to_csv(&header, body)?)
}

/// Five-number summary for box plots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl BoxStats {
    pub fn new(values: &[f64]) -> Result<Self> {
        let cdf = EmpiricalCdf::new(values)?;
        let v = cdf.values();
        Ok(BoxStats {
            min: v[0],
            q1: quantile_sorted(v, 0.25),
            median: quantile_sorted(v, 0.5),
            q3: quantile_sorted(v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

/// `method,min,q1,median,q3,max`
pub fn write_box_csv(path: impl AsRef<Path>, rows: &[(String, BoxStats)]) -> Result<()> {
    let header: Vec<String> = ["method", "min", "q1", "median", "q3", "max"].map(String::from).to_vec();
    let body = rows.iter().map(|(m, b)| {
        vec![
            m.clone(),
            b.min.to_string(),
            b.q1.to_string(),
            b.median.to_string(),
            b.q3.to_string(),
            b.max.to_string(),
        ]
    });
    write_atomic(path.as_ref(), &to_csv(&header, body)?)
}
