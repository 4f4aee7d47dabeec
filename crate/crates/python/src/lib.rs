//! Python bindings for the `losgate` core crate.

use std::sync::Arc;

use losgate::cache::DEFAULT_NODE_CAP;
use losgate::eval::{efficiency as eta, roc_auc as auc};
use losgate::filter::{run_filter, MeasurementConfig, Mode, MotionParams, Region, RunOptions};
use losgate::gpc::{optimize_hyperparams, EpOptions, GpcHyperparams, OptimizeOptions};
use losgate::pathloss::{self, FitOptions};
use losgate::simgen::{sample_rssi_stream, Scenario};
use losgate::{io, Beacon, BeaconMap, ErrorKind, GridBounds, GridResolution, Label, Lookup, RssiObservation};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: losgate::Error) -> PyErr {
    match e.kind() {
        ErrorKind::Numerical => PyArithmeticError::new_err(e.to_string()),
        ErrorKind::Config | ErrorKind::Data => PyValueError::new_err(e.to_string()),
    }
}

/// Log-distance path-loss model.
#[pyclass(name = "PathLoss", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyPathLoss(losgate::PathLossParams);

#[pymethods]
impl PyPathLoss {
    #[new]
    #[pyo3(signature = (a_x, gamma, d0, sigma=3.0))]
    fn new(a_x: f64, gamma: f64, d0: f64, sigma: f64) -> PyResult<Self> {
        losgate::PathLossParams::new(a_x, gamma, d0, sigma).map(Self).map_err(to_py)
    }

    /// Least-squares fit to `(distance, rssi)` pairs with `d0` held fixed.
    #[staticmethod]
    #[pyo3(signature = (samples, d0=1.78))]
    fn fit(samples: Vec<(f64, f64)>, d0: f64) -> PyResult<Self> {
        let opts = FitOptions {
            d0,
            ..FitOptions::default()
        };
        pathloss::fit_pathloss(&samples, opts).map(|f| Self(f.params)).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        losgate::PathLossParams::load(path).map(Self).map_err(to_py)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(to_py)
    }

    fn mean_rssi(&self, distance: f64) -> PyResult<f64> {
        pathloss::mean_rssi(&self.0, distance).map_err(to_py)
    }

    fn distance_from_rssi(&self, rssi: f64) -> PyResult<f64> {
        pathloss::distance_from_rssi(&self.0, rssi).map_err(to_py)
    }

    #[getter]
    fn a_x(&self) -> f64 {
        self.0.a_x
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.0.gamma
    }

    #[getter]
    fn d0(&self) -> f64 {
        self.0.d0
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma
    }

    fn __repr__(&self) -> String {
        let p = self.0;
        format!("PathLoss(a_x={}, gamma={}, d0={}, sigma={})", p.a_x, p.gamma, p.d0, p.sigma)
    }
}

/// LOS classifier trained by expectation propagation.
#[pyclass(name = "GpcModel", frozen)]
struct PyGpcModel(losgate::gpc::GpcModel);

#[pymethods]
impl PyGpcModel {
    /// Trains on `(distance, rssi)` inputs with boolean LOS labels. With
    /// `optimize`, hyperparameters maximize the marginal likelihood first.
    #[staticmethod]
    #[pyo3(signature = (inputs, los, optimize=true, seed=0))]
    fn train(inputs: Vec<(f64, f64)>, los: Vec<bool>, optimize: bool, seed: u64) -> PyResult<Self> {
        if inputs.len() != los.len() {
            return Err(PyValueError::new_err("inputs and labels differ in length"));
        }
        let x: Vec<[f64; 2]> = inputs.iter().map(|&(d, r)| [d, r]).collect();
        let y: Vec<Label> = los.iter().map(|&l| Label::from_los(l)).collect();
        let mut hyper = GpcHyperparams::default();
        if optimize {
            let opts = OptimizeOptions {
                seed,
                ..OptimizeOptions::default()
            };
            hyper = optimize_hyperparams(&x, &y, &hyper, &opts).map_err(to_py)?.hyper;
        }
        losgate::gpc::GpcModel::train(&x, &y, hyper, &EpOptions::default())
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        losgate::gpc::GpcModel::load(path).map(Self).map_err(to_py)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(to_py)
    }

    /// Probability that a link at `distance` with `rssi` is LOS.
    fn predict_proba(&self, distance: f64, rssi: f64) -> f64 {
        self.0.predict_proba(&[distance, rssi])
    }

    #[getter]
    fn log_marginal(&self) -> f64 {
        self.0.log_marginal()
    }

    /// `(lengthscale_distance, lengthscale_rssi, signal_variance, mean)`.
    #[getter]
    fn hyperparameters(&self) -> (f64, f64, f64, f64) {
        let h = self.0.hyper();
        (h.lengthscales[0], h.lengthscales[1], h.signal_variance, h.mean_constant)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Classifier output tabulated on a regular (distance, RSSI) grid.
#[pyclass(name = "LosGrid", frozen)]
struct PyLosGrid(Arc<losgate::LosGrid>);

#[pymethods]
impl PyLosGrid {
    #[staticmethod]
    #[pyo3(signature = (model, d_min=0.0, d_max=10.0, rssi_min=-100.0, rssi_max=-40.0, d_step=0.1, rssi_step=1.0, bilinear=false))]
    #[allow(clippy::too_many_arguments)]
    fn build(
        model: &PyGpcModel,
        d_min: f64,
        d_max: f64,
        rssi_min: f64,
        rssi_max: f64,
        d_step: f64,
        rssi_step: f64,
        bilinear: bool,
    ) -> PyResult<Self> {
        let bounds = GridBounds {
            distance_min: d_min,
            distance_max: d_max,
            rssi_min,
            rssi_max,
        };
        let res = GridResolution {
            distance: d_step,
            rssi: rssi_step,
        };
        let lookup = if bilinear { Lookup::Bilinear } else { Lookup::Nearest };
        losgate::build_grid(&model.0, bounds, res, DEFAULT_NODE_CAP)
            .map(|g| Self(Arc::new(g.with_lookup(lookup))))
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        losgate::LosGrid::load(path).map(|g| Self(Arc::new(g))).map_err(to_py)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(to_py)
    }

    fn query(&self, distance: f64, rssi: f64) -> f64 {
        self.0.query(distance, rssi)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

fn beacon_map(beacons: Vec<(String, f64, f64, f64)>) -> PyResult<BeaconMap> {
    let entries = beacons
        .into_iter()
        .map(|(id, x, y, z)| Beacon::new(id, [x, y, z]))
        .collect();
    BeaconMap::new(entries).map_err(to_py)
}

/// Simulates a scenario file. Returns a dict with `observations`
/// `(t, beacon, rssi)`, `los` flags in the same order, `groundtruth`
/// `(t, x, y, z)` and `beacons` `(id, x, y, z)`.
#[pyfunction]
#[pyo3(signature = (scenario, seed=None))]
fn simulate<'py>(py: Python<'py>, scenario: &str, seed: Option<u64>) -> PyResult<Bound<'py, PyDict>> {
    let mut s = Scenario::load(scenario).map_err(to_py)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    let out = sample_rssi_stream(&s).map_err(to_py)?;
    let obs: Vec<(f64, String, f64)> = out
        .observations
        .into_iter()
        .map(|o| (o.t, o.beacon_id, o.rssi))
        .collect();
    let los: Vec<bool> = out.labels.iter().map(|l| l.label.is_los()).collect();
    let gt: Vec<(f64, f64, f64, f64)> = out
        .groundtruth
        .poses()
        .iter()
        .map(|p| (p.t, p.position[0], p.position[1], p.position[2]))
        .collect();
    let beacons: Vec<(String, f64, f64, f64)> = s
        .beacons
        .entries()
        .iter()
        .map(|b| (b.id.clone(), b.x, b.y, b.z))
        .collect();
    let d = PyDict::new(py);
    d.set_item("observations", obs)?;
    d.set_item("los", los)?;
    d.set_item("groundtruth", gt)?;
    d.set_item("beacons", beacons)?;
    Ok(d)
}

/// Reads an RSSI log CSV into `(t, beacon, rssi)` tuples.
#[pyfunction]
fn load_rssi_log(path: &str) -> PyResult<Vec<(f64, String, f64)>> {
    let obs = io::load_rssi_log(path).map_err(to_py)?;
    Ok(obs.into_iter().map(|o| (o.t, o.beacon_id, o.rssi)).collect())
}

/// Runs the particle filter over `(t, beacon, rssi)` observations and returns
/// `(t, x, y)` estimates, one per sampling interval.
#[pyfunction]
#[pyo3(signature = (observations, beacons, pathloss, mode="pfg", grid=None, particles=100, ess_threshold=20.0, p_los=0.4, seed=0, receiver_height=1.0))]
#[allow(clippy::too_many_arguments)]
fn localize(
    observations: Vec<(f64, String, f64)>,
    beacons: Vec<(String, f64, f64, f64)>,
    pathloss: &PyPathLoss,
    mode: &str,
    grid: Option<&PyLosGrid>,
    particles: usize,
    ess_threshold: f64,
    p_los: f64,
    seed: u64,
    receiver_height: f64,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let mode: Mode = mode.parse().map_err(to_py)?;
    let beacons = beacon_map(beacons)?;
    let obs: Vec<RssiObservation> = observations
        .into_iter()
        .map(|(t, id, r)| RssiObservation::new(t, id, r))
        .collect();
    let grid = match (mode.uses_classifier(), grid) {
        (true, Some(g)) => Some(g.0.clone()),
        (true, None) => return Err(PyValueError::new_err("classifier modes need a grid")),
        (false, _) => None,
    };
    let mut cfg = MeasurementConfig::new(mode, pathloss.0, grid);
    cfg.p_los_threshold = p_los;
    let opts = RunOptions {
        n_particles: particles,
        ess_threshold,
        region: Region::around_beacons(&beacons),
        receiver_height,
        seed,
    };
    let trace = run_filter(&obs, &beacons, &MotionParams::default(), &cfg, &opts).map_err(to_py)?;
    Ok(trace.iter().map(|r| (r.t, r.est[0], r.est[1])).collect())
}

/// Area under the ROC curve of `scores` for boolean `positive` labels.
#[pyfunction]
fn roc_auc(scores: Vec<f64>, positive: Vec<bool>) -> PyResult<f64> {
    auc(&scores, &positive).map(|r| r.auc).map_err(to_py)
}

/// `100 · crlb_rms / rmse`, in percent.
#[pyfunction]
fn efficiency(crlb_rms: f64, rmse: f64) -> PyResult<f64> {
    eta(crlb_rms, rmse).map_err(to_py)
}

#[pymodule]
fn losgate_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPathLoss>()?;
    m.add_class::<PyGpcModel>()?;
    m.add_class::<PyLosGrid>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(load_rssi_log, m)?)?;
    m.add_function(wrap_pyfunction!(localize, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(efficiency, m)?)?;
    Ok(())
}
