use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use losgate::eval::{
    empirical_cdf, median_cdf, pcrlb_trace, roc_auc, write_box_csv, write_cdf_csv, write_metrics_csv, BoxStats,
    CrlbConfig, CrlbModel, MethodSummary, RunResult,
};
use losgate::filter::{run_filter, MeasurementConfig, Mode, Region, RunOptions};
use losgate::gpc::{optimize_hyperparams, EpOptions, GpcHyperparams, GpcModel, OptimizeOptions};
use losgate::io;
use losgate::pathloss::{fit_pathloss, mean_rssi, FitOptions};
use losgate::preprocess::{downsample, ranged_samples};
use losgate::simgen::{sample_rssi_stream, Scenario};
use losgate::{build_grid, Error, GridBounds, GridResolution, Label, LosGrid, PathLossParams, Result, TrainingPoint};

use crate::config::RunConfig;
use crate::plot::{line_plot, Series};
use crate::{BuildCacheArgs, EvaluateArgs, FitArgs, LocalizeArgs, SimulateArgs, TrainArgs};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut scenario = Scenario::load(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let out = sample_rssi_stream(&scenario)?;
    create_dir(&args.out)?;
    io::write_rssi_log(args.out.join("rssi.csv"), &out.observations)?;
    io::write_labels(args.out.join("labels.csv"), &out.labels)?;
    io::write_groundtruth(args.out.join("groundtruth.csv"), &out.groundtruth)?;
    io::write_beacon_map(args.out.join("beacons.toml"), &scenario.beacons)?;
    let nlos = out.labels.iter().filter(|l| !l.label.is_los()).count();
    out!(
        "poses {}  observations {}  nlos {} ({:.1}%)",
        out.groundtruth.len(),
        out.observations.len(),
        nlos,
        100.0 * nlos as f64 / out.observations.len().max(1) as f64
    );
    Ok(())
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let obs = io::load_rssi_log(&args.log)?;
    let gt = io::load_groundtruth(&args.groundtruth)?;
    let beacons = io::load_beacon_map(&args.beacons)?;
    let labels = args.labels.as_ref().map(io::load_labels).transpose()?;
    let samples = ranged_samples(&obs, labels.as_deref(), &gt, &beacons, args.window)?;
    let data: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.label.is_none_or(Label::is_los))
        .map(|s| (s.distance, s.rssi))
        .collect();
    let fit = fit_pathloss(
        &data,
        FitOptions {
            d0: args.d0,
            ..FitOptions::default()
        },
    )?;
    fit.params.save(&args.out)?;

    let mut report = String::from("distance,rssi,fitted,residual\n");
    for &(d, r) in &data {
        let m = mean_rssi(&fit.params, d)?;
        report.push_str(&format!("{d},{r},{m},{}\n", r - m));
    }
    let report_path = sibling(&args.out, "residuals.csv");
    io::write_atomic(&report_path, report.as_bytes())?;
    let p = fit.params;
    out!(
        "a_x {:.4}  gamma {:.4}  d0 {}  rms residual {:.4} dBm over {} points",
        p.a_x, p.gamma, p.d0, fit.rms_residual, fit.n_points
    );
    out!("residuals written to {}", report_path.display());
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}"))
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let obs = io::load_rssi_log(&args.log)?;
    let labels = io::load_labels(&args.labels)?;
    let gt = io::load_groundtruth(&args.groundtruth)?;
    let beacons = io::load_beacon_map(&args.beacons)?;
    let samples = ranged_samples(&obs, Some(&labels), &gt, &beacons, args.window)?;
    let points = samples
        .iter()
        .map(|s| TrainingPoint::new(s.distance, s.rssi, s.label.expect("labels given"), args.max_range))
        .collect::<Result<Vec<_>>>()?;
    let points = downsample(&points, args.downsample, args.seed)?;
    let inputs: Vec<_> = points.iter().map(TrainingPoint::input).collect();
    let y: Vec<Label> = points.iter().map(|p| p.label).collect();
    if y.iter().all(|l| *l == y[0]) {
        return Err(Error::Data("training labels contain a single class".into()));
    }

    let opts = OptimizeOptions {
        seed: args.seed,
        ..OptimizeOptions::default()
    };
    // Hyperparameters are tuned on a smaller stratified subset.
    let subset = if args.opt_points == 0 {
        points.clone()
    } else {
        downsample(&points, args.opt_points, args.seed ^ 0x9e37)?
    };
    let sub_x: Vec<_> = subset.iter().map(TrainingPoint::input).collect();
    let sub_y: Vec<Label> = subset.iter().map(|p| p.label).collect();
    let best = optimize_hyperparams(&sub_x, &sub_y, &GpcHyperparams::default(), &opts)?;
    let model = GpcModel::train(&inputs, &y, best.hyper, &EpOptions::default())?;
    model.save(&args.out)?;
    let h = model.hyper();
    out!(
        "points {}  lengthscales [{:.4}, {:.4}]  signal variance {:.4}  mean {:.4}",
        model.len(),
        h.lengthscales[0],
        h.lengthscales[1],
        h.signal_variance,
        h.mean_constant
    );
    out!(
        "log marginal {:.4}  training accuracy {:.4}",
        model.log_marginal(),
        model.training_accuracy()
    );
    Ok(())
}

pub fn build_cache(args: &BuildCacheArgs) -> Result<()> {
    let model = GpcModel::load(&args.model)?;
    let bounds = GridBounds {
        distance_min: args.d_min,
        distance_max: args.d_max,
        rssi_min: args.rssi_min,
        rssi_max: args.rssi_max,
    };
    let res = GridResolution {
        distance: args.d_step,
        rssi: args.rssi_step,
    };
    let grid = build_grid(&model, bounds, res, args.max_nodes)?.with_lookup(args.lookup.into());
    grid.save(&args.out)?;
    out!("grid nodes {}  written to {}", grid.len(), args.out.display());
    Ok(())
}

fn load_run_config(path: &Path, modes: &[String]) -> Result<(RunConfig, Vec<Mode>)> {
    let cfg = RunConfig::load(path)?;
    let names = if modes.is_empty() { &cfg.filter.modes } else { modes };
    let modes = names.iter().map(|m| m.parse()).collect::<Result<Vec<Mode>>>()?;
    Ok((cfg, modes))
}

fn measurement_config(cfg: &RunConfig, mode: Mode, pathloss: PathLossParams, grid: Option<Arc<LosGrid>>) -> MeasurementConfig {
    let f = &cfg.filter;
    let mut m = MeasurementConfig::new(mode, pathloss, grid);
    m.sigma_n = f.sigma_n;
    m.sigma_ln = f.sigma_ln;
    m.p_los_threshold = f.p_los;
    m.p_rand = f.p_rand.unwrap_or_else(|| losgate::filter::default_p_rand(mode, pathloss.d0, f.sigma_ln));
    m
}

fn trace_path(out_dir: &Path, mode: Mode, run: usize) -> PathBuf {
    out_dir.join(mode.name()).join(format!("run_{run:03}.csv"))
}

pub fn localize(args: &LocalizeArgs) -> Result<()> {
    let (mut cfg, modes) = load_run_config(&args.config, &args.mode)?;
    let f = &mut cfg.filter;
    if let Some(v) = args.particles {
        f.particles = v;
    }
    if let Some(v) = args.ess_threshold {
        f.ess_threshold = v;
    }
    if let Some(v) = args.p_los {
        f.p_los = v;
    }
    if let Some(v) = args.seed {
        f.seed = v;
    }
    if let Some(v) = args.repeat {
        f.repeat = v;
    }
    if let Some(v) = &args.out {
        cfg.out_dir = v.clone();
    }
    cfg.validate()?;

    let beacons = io::load_beacon_map(&cfg.beacons)?;
    let obs = io::load_rssi_log(&cfg.rssi_log)?;
    let pathloss = PathLossParams::load(&cfg.pathloss)?;
    let grid = if modes.iter().any(|m| m.uses_classifier()) {
        let path = cfg
            .grid
            .as_ref()
            .ok_or_else(|| Error::Config("classifier modes need `grid` in the config".into()))?;
        Some(Arc::new(LosGrid::load(path)?))
    } else {
        None
    };
    let region = cfg.region.unwrap_or_else(|| Region::around_beacons(&beacons));

    for &mode in &modes {
        let g = if mode.uses_classifier() { grid.clone() } else { None };
        let m = measurement_config(&cfg, mode, pathloss, g);
        create_dir(&cfg.out_dir.join(mode.name()))?;
        for run in 0..cfg.filter.repeat {
            let opts = RunOptions {
                n_particles: cfg.filter.particles,
                ess_threshold: cfg.filter.ess_threshold,
                region,
                receiver_height: cfg.filter.receiver_height,
                seed: cfg.filter.seed + run as u64,
            };
            let trace = run_filter(&obs, &beacons, &cfg.motion, &m, &opts)?;
            io::write_trace(trace_path(&cfg.out_dir, mode, run), &trace)?;
        }
        out!(
            "{}: {} run(s) written to {}",
            mode.name(),
            cfg.filter.repeat,
            cfg.out_dir.join(mode.name()).display()
        );
    }
    Ok(())
}

fn list_traces(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for e in entries {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("run_") && name.ends_with(".csv") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let (cfg, modes) = load_run_config(&args.config, &args.mode)?;
    cfg.validate()?;
    let traces_dir = args.traces.clone().unwrap_or_else(|| cfg.out_dir.clone());
    let out_dir = args.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    let gt_path = cfg
        .groundtruth
        .as_ref()
        .ok_or_else(|| Error::Config("evaluate needs `groundtruth` in the config".into()))?;
    let gt = io::load_groundtruth(gt_path)?;
    let beacons = io::load_beacon_map(&cfg.beacons)?;
    let obs = io::load_rssi_log(&cfg.rssi_log)?;
    let pathloss = PathLossParams::load(&cfg.pathloss)?;
    let region = cfg.region.unwrap_or_else(|| Region::around_beacons(&beacons));
    create_dir(&out_dir)?;

    let mut summaries = Vec::new();
    let mut cdfs = Vec::new();
    let mut boxes = Vec::new();
    let mut max_err: f64 = 0.0;
    for &mode in &modes {
        let files = list_traces(&traces_dir.join(mode.name()))?;
        if files.is_empty() {
            return Err(Error::Data(format!("no traces for {} in {}", mode.name(), traces_dir.display())));
        }
        let runs = files
            .iter()
            .enumerate()
            .map(|(i, p)| RunResult::from_trace(cfg.filter.seed + i as u64, &io::load_trace(p)?, &gt))
            .collect::<Result<Vec<_>>>()?;
        let m = measurement_config(&cfg, mode, pathloss, None);
        let crlb_cfg = CrlbConfig {
            model: CrlbModel::from_config(&m),
            prior_information: CrlbConfig::prior_from_region(&region, cfg.motion.sigma_v)?,
            receiver_height: cfg.filter.receiver_height,
            warmup: 0,
        };
        let crlb = pcrlb_trace(&gt, &obs, &beacons, &cfg.motion, &crlb_cfg)?.rms();
        let pairs: Vec<(f64, f64)> = runs.iter().map(|r| (crlb, r.rmse)).collect();
        let summary = MethodSummary::from_runs(mode.name(), &pairs)?;
        let run_cdfs = runs
            .iter()
            .map(|r| empirical_cdf(&r.errors))
            .collect::<Result<Vec<_>>>()?;
        max_err = run_cdfs.iter().map(|c| c.max()).fold(max_err, f64::max);
        let rmses: Vec<f64> = runs.iter().map(|r| r.rmse).collect();
        boxes.push((mode.name().to_string(), BoxStats::new(&rmses)?));
        cdfs.push((mode.name().to_string(), run_cdfs));
        summaries.push(summary);
    }

    write_metrics_csv(out_dir.join("metrics.csv"), &summaries)?;
    write_box_csv(out_dir.join("rmse_box.csv"), &boxes)?;
    let n = args.cdf_points.max(2);
    let grid: Vec<f64> = (0..n).map(|i| max_err * i as f64 / (n - 1) as f64).collect();
    let columns = cdfs
        .iter()
        .map(|(name, runs)| Ok((name.clone(), median_cdf(runs, &grid)?)))
        .collect::<Result<Vec<_>>>()?;
    write_cdf_csv(out_dir.join("cdf.csv"), &grid, &columns)?;

    out!("{:<6} {:>10} {:>8} {:>8} {:>7} {:>8} {:>9}", "method", "rmse", "se", "eta%", "se", "eta_rom%", "crlb_rms");
    for s in &summaries {
        out!(
            "{:<6} {:>10.4} {:>8.4} {:>8.3} {:>7.3} {:>8.3} {:>9.4}",
            s.method, s.rmse_mean, s.rmse_se, s.eta_mean, s.eta_se, s.eta_ratio_of_means, s.crlb_rms
        );
        if s.eta_mean.is_nan() {
            out!("warning: efficiency undefined for {} (RMSE is zero)", s.method);
        }
    }

    let roc = match (&cfg.labels, &cfg.model) {
        (Some(labels), Some(model)) => {
            let labels = io::load_labels(labels)?;
            let model = GpcModel::load(model)?;
            let samples = ranged_samples(&obs, Some(&labels), &gt, &beacons, args.window)?;
            let scores: Vec<f64> = samples.iter().map(|s| model.predict_proba(&[s.distance, s.rssi])).collect();
            let pos: Vec<bool> = samples.iter().map(|s| s.label.is_some_and(Label::is_los)).collect();
            let roc = roc_auc(&scores, &pos)?;
            let mut text = String::from("fpr,tpr\n");
            for (x, y) in &roc.points {
                text.push_str(&format!("{x},{y}\n"));
            }
            io::write_atomic(&out_dir.join("roc.csv"), text.as_bytes())?;
            out!("classifier AUC {:.4} over {} samples", roc.auc, samples.len());
            Some(roc)
        }
        _ => None,
    };

    if args.svg {
        let series: Vec<Series> = columns
            .iter()
            .map(|(name, c)| Series {
                name,
                points: grid.iter().copied().zip(c.iter().copied()).collect(),
            })
            .collect();
        line_plot(&out_dir.join("cdf.svg"), "Median error CDF", "error (m)", "F(error)", &series)?;
        if let Some(roc) = &roc {
            let s = Series {
                name: "GPC",
                points: roc.points.clone(),
            };
            line_plot(&out_dir.join("roc.svg"), "ROC", "false positive rate", "true positive rate", &[s])?;
        }
    }
    out!("report written to {}", out_dir.display());
    Ok(())
}
