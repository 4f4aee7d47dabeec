//! Precomputed LOS probabilities on a (distance, RSSI) grid.
//!
//! Classifier predictions are evaluated once at every grid node and served
//! online by nearest-node lookup through a kd-tree. Coordinates are scaled by
//! the grid resolution before the search, so one step along either axis
//! counts the same.

pub mod kdtree;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpc::{GpcModel, Input};
use crate::io::write_atomic;
pub use kdtree::{KdTree, Nearest};

/// Default upper limit on the number of grid nodes.
pub const DEFAULT_NODE_CAP: usize = 10_000_000;

const GRID_FORMAT: &str = "losgate-grid";
const GRID_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridBounds {
    pub distance_min: f64,
    pub distance_max: f64,
    pub rssi_min: f64,
    pub rssi_max: f64,
}

impl Default for GridBounds {
    fn default() -> Self {
        GridBounds {
            distance_min: 0.0,
            distance_max: 10.0,
            rssi_min: -100.0,
            rssi_max: -40.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridResolution {
    /// Meters.
    pub distance: f64,
    /// dBm.
    pub rssi: f64,
}

impl Default for GridResolution {
    fn default() -> Self {
        GridResolution {
            distance: 0.1,
            rssi: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lookup {
    #[default]
    Nearest,
    Bilinear,
}

/// Node count along one axis: `⌈span/res⌉ + 1`, robust to `span/res`
/// landing a rounding error above an integer.
pub fn axis_nodes(min: f64, max: f64, res: f64) -> usize {
    let steps = (max - min) / res;
    let rounded = steps.round();
    let steps = if (steps - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        rounded
    } else {
        steps.ceil()
    };
    steps as usize + 1
}

/// Grid shape `(distance nodes, rssi nodes)` after validating bounds and resolution.
pub fn grid_shape(bounds: &GridBounds, res: &GridResolution) -> Result<(usize, usize)> {
    let finite = [
        bounds.distance_min,
        bounds.distance_max,
        bounds.rssi_min,
        bounds.rssi_max,
        res.distance,
        res.rssi,
    ]
    .iter()
    .all(|v| v.is_finite());
    if !finite {
        return Err(Error::Config("grid bounds and resolution must be finite".into()));
    }
    if bounds.distance_max <= bounds.distance_min || bounds.rssi_max <= bounds.rssi_min {
        return Err(Error::Config(format!("degenerate grid bounds {bounds:?}")));
    }
    if res.distance <= 0.0 || res.rssi <= 0.0 {
        return Err(Error::Config(format!("grid resolution must be positive, got {res:?}")));
    }
    Ok((
        axis_nodes(bounds.distance_min, bounds.distance_max, res.distance),
        axis_nodes(bounds.rssi_min, bounds.rssi_max, res.rssi),
    ))
}

/// Classifier outputs on a regular grid with a kd-tree index.
///
/// Node `(i, j)` sits at `(distance_min + i·res_d, rssi_min + j·res_r)` and is
/// stored at row-major index `i·n_rssi + j`.
#[derive(Debug, Clone)]
pub struct LosGrid {
    bounds: GridBounds,
    resolution: GridResolution,
    shape: (usize, usize),
    values: Vec<f64>,
    lookup: Lookup,
    tree: KdTree,
}

#[derive(Serialize, Deserialize)]
struct GridFile {
    format: String,
    version: u32,
    bounds: GridBounds,
    resolution: GridResolution,
    shape: (usize, usize),
    #[serde(default)]
    lookup: Lookup,
    p_los: Vec<f64>,
}

/// Evaluates `model` at every node of the grid.
pub fn build_grid(
    model: &GpcModel,
    bounds: GridBounds,
    resolution: GridResolution,
    node_cap: usize,
) -> Result<LosGrid> {
    LosGrid::from_fn(bounds, resolution, node_cap, |x| model.predict_proba(x))
}

impl LosGrid {
    /// Builds a grid from any probability function of (distance, RSSI).
    pub fn from_fn(
        bounds: GridBounds,
        resolution: GridResolution,
        node_cap: usize,
        f: impl Fn(&Input) -> f64,
    ) -> Result<Self> {
        let shape = grid_shape(&bounds, &resolution)?;
        let count = shape.0.checked_mul(shape.1).unwrap_or(usize::MAX);
        if count > node_cap {
            return Err(Error::Config(format!(
                "grid of {}x{} nodes exceeds the cap of {node_cap}",
                shape.0, shape.1
            )));
        }
        let mut values = Vec::with_capacity(count);
        for i in 0..shape.0 {
            for j in 0..shape.1 {
                let x = [
                    bounds.distance_min + i as f64 * resolution.distance,
                    bounds.rssi_min + j as f64 * resolution.rssi,
                ];
                values.push(f(&x));
            }
        }
        Self::from_values(bounds, resolution, shape, values)
    }

    fn from_values(
        bounds: GridBounds,
        resolution: GridResolution,
        shape: (usize, usize),
        values: Vec<f64>,
    ) -> Result<Self> {
        if grid_shape(&bounds, &resolution)? != shape || values.len() != shape.0 * shape.1 {
            return Err(Error::Data(format!(
                "grid has {} values, expected {}x{}",
                values.len(),
                shape.0,
                shape.1
            )));
        }
        if let Some(bad) = values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Data(format!("grid probability {bad} outside [0, 1]")));
        }
        // Scaled coordinates of node (i, j) are exactly (i, j).
        let points = (0..shape.0)
            .flat_map(|i| (0..shape.1).map(move |j| [i as f64, j as f64]))
            .collect();
        Ok(LosGrid {
            bounds,
            resolution,
            shape,
            values,
            lookup: Lookup::Nearest,
            tree: KdTree::new(points),
        })
    }

    pub fn with_lookup(mut self, lookup: Lookup) -> Self {
        self.lookup = lookup;
        self
    }

    pub fn bounds(&self) -> &GridBounds {
        &self.bounds
    }

    pub fn resolution(&self) -> &GridResolution {
        &self.resolution
    }

    pub fn lookup(&self) -> Lookup {
        self.lookup
    }

    /// `(distance nodes, rssi nodes)`.
    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Physical coordinates of node `index`.
    pub fn node(&self, index: usize) -> Input {
        let (i, j) = (index / self.shape.1, index % self.shape.1);
        [
            self.bounds.distance_min + i as f64 * self.resolution.distance,
            self.bounds.rssi_min + j as f64 * self.resolution.rssi,
        ]
    }

    fn scaled(&self, distance: f64, rssi: f64) -> [f64; 2] {
        let b = &self.bounds;
        let d = distance.clamp(b.distance_min, b.distance_max);
        let r = rssi.clamp(b.rssi_min, b.rssi_max);
        [
            (d - b.distance_min) / self.resolution.distance,
            (r - b.rssi_min) / self.resolution.rssi,
        ]
    }

    /// LOS probability at (distance, RSSI) using the grid's lookup mode.
    /// Queries outside the bounds are clamped onto them.
    pub fn query(&self, distance: f64, rssi: f64) -> f64 {
        match self.lookup {
            Lookup::Nearest => self.query_nearest(distance, rssi).0,
            Lookup::Bilinear => self.query_bilinear(distance, rssi),
        }
    }

    /// Nearest-node value together with the number of tree nodes visited.
    pub fn query_nearest(&self, distance: f64, rssi: f64) -> (f64, usize) {
        let hit = self
            .tree
            .nearest(self.scaled(distance, rssi))
            .expect("grid has at least one node");
        (self.values[hit.index], hit.visited)
    }

    pub fn query_bilinear(&self, distance: f64, rssi: f64) -> f64 {
        let [u, v] = self.scaled(distance, rssi);
        let (nd, nr) = self.shape;
        let i = (u.floor() as usize).min(nd - 2);
        let j = (v.floor() as usize).min(nr - 2);
        let (fu, fv) = ((u - i as f64).min(1.0), (v - j as f64).min(1.0));
        let at = |a: usize, b: usize| self.values[a * nr + b];
        let p = (1.0 - fu) * ((1.0 - fv) * at(i, j) + fv * at(i, j + 1))
            + fu * ((1.0 - fv) * at(i + 1, j) + fv * at(i + 1, j + 1));
        p.clamp(0.0, 1.0)
    }

    pub fn to_json(&self) -> String {
        let file = GridFile {
            format: GRID_FORMAT.into(),
            version: GRID_VERSION,
            bounds: self.bounds,
            resolution: self.resolution,
            shape: self.shape,
            lookup: self.lookup,
            p_los: self.values.clone(),
        };
        serde_json::to_string(&file).expect("grid serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GridFile =
            serde_json::from_str(text).map_err(|e| Error::Data(format!("grid file: {e}")))?;
        if file.format != GRID_FORMAT || file.version != GRID_VERSION {
            return Err(Error::Data(format!(
                "unsupported grid format {} v{}",
                file.format, file.version
            )));
        }
        Ok(Self::from_values(file.bounds, file.resolution, file.shape, file.p_los)?
            .with_lookup(file.lookup))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_json().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
