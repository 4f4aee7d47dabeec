//! Run configuration for `localize` and `evaluate`.
//!
//! Paths are resolved relative to the directory of the config file.

use std::path::{Path, PathBuf};

use losgate::filter::{MotionParams, Region};
use losgate::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub beacons: PathBuf,
    pub rssi_log: PathBuf,
    pub pathloss: PathBuf,
    pub groundtruth: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Cached LOS grid, required by the classifier modes.
    pub grid: Option<PathBuf>,
    /// Trained classifier, used for ROC output.
    pub model: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub motion: MotionParams,
    /// Initial particle region; defaults to the beacon bounding box.
    pub region: Option<Region>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    #[serde(default = "default_modes")]
    pub modes: Vec<String>,
    #[serde(default = "default_particles")]
    pub particles: usize,
    /// Resample when the ESS drops below this (absolute count).
    #[serde(default = "default_ess")]
    pub ess_threshold: f64,
    #[serde(default = "default_p_los")]
    pub p_los: f64,
    #[serde(default = "default_sigma_n")]
    pub sigma_n: f64,
    #[serde(default = "default_sigma_ln")]
    pub sigma_ln: f64,
    pub p_rand: Option<f64>,
    #[serde(default = "default_height")]
    pub receiver_height: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repeat")]
    pub repeat: usize,
}

impl Default for FilterSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

fn default_modes() -> Vec<String> {
    vec!["pfg".into()]
}
fn default_particles() -> usize {
    100
}
fn default_ess() -> f64 {
    20.0
}
fn default_p_los() -> f64 {
    0.4
}
fn default_sigma_n() -> f64 {
    3.0
}
fn default_sigma_ln() -> f64 {
    0.4
}
fn default_height() -> f64 {
    1.0
}
fn default_repeat() -> usize {
    1
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.beacons);
        resolve(&mut cfg.rssi_log);
        resolve(&mut cfg.pathloss);
        resolve(&mut cfg.out_dir);
        for p in [&mut cfg.groundtruth, &mut cfg.labels, &mut cfg.grid, &mut cfg.model]
            .into_iter()
            .flatten()
        {
            resolve(p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.filter;
        if f.repeat < 1 {
            return Err(Error::Config("repeat must be at least 1".into()));
        }
        if f.particles < 2 {
            return Err(Error::Config("at least 2 particles are needed".into()));
        }
        if !(f.ess_threshold >= 0.0 && f.ess_threshold <= f.particles as f64) {
            return Err(Error::Config(format!(
                "ess threshold {} outside [0, {}]",
                f.ess_threshold, f.particles
            )));
        }
        if f.modes.is_empty() {
            return Err(Error::Config("no filter mode selected".into()));
        }
        self.motion.validate()
    }
}
