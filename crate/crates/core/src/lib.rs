//! NLOS-aware indoor positioning from BLE RSSI.
//!
//! The crate covers the whole offline/online pipeline: path-loss modelling,
//! a Gaussian-process LOS classifier trained with expectation propagation,
//! a kd-tree indexed cache of classifier outputs, a SIR particle filter that
//! gates its measurement model on the cached LOS probability, a synthetic
//! data generator and evaluation metrics including a posterior CRLB.

pub mod cache;
pub mod error;
pub mod eval;
pub mod filter;
pub mod gpc;
pub mod io;
pub mod pathloss;
pub mod preprocess;
pub mod simgen;
pub mod types;

pub use cache::{build_grid, GridBounds, GridResolution, LosGrid, Lookup};
pub use error::{Error, ErrorKind, Result};
pub use pathloss::PathLossParams;
pub use types::{Beacon, BeaconMap, Groundtruth, GroundtruthPose, Label, RssiObservation, TrainingPoint};
