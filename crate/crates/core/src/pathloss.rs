//! Log-distance path-loss model.
//!
//! Mean received power follows `a_x + 10·γ·log10(d/d0)` with additive
//! Gaussian noise of standard deviation `sigma` (dBm). Only the combination
//! `a_x − 10·γ·log10(d0)` is identifiable from data, so fitting holds `d0`
//! fixed and estimates `(a_x, γ)`.

use std::f64::consts::{LN_10, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossParams {
    /// Attenuated transmission power at the reference distance (dBm).
    pub a_x: f64,
    /// Path-loss exponent; its sign is whatever the data says.
    pub gamma: f64,
    /// Reference distance (m).
    pub d0: f64,
    /// Standard deviation of the received power noise (dBm).
    pub sigma: f64,
}

impl PathLossParams {
    pub fn new(a_x: f64, gamma: f64, d0: f64, sigma: f64) -> Result<Self> {
        let p = PathLossParams {
            a_x,
            gamma,
            d0,
            sigma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.a_x, self.gamma, self.d0, self.sigma]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::Domain("path-loss parameters must be finite".into()));
        }
        if self.d0 <= 0.0 {
            return Err(Error::Domain(format!("reference distance must be positive, got {}", self.d0)));
        }
        if self.sigma < 0.0 {
            return Err(Error::Domain(format!("noise std must be non-negative, got {}", self.sigma)));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        #[derive(Deserialize)]
        struct File {
            a_x: f64,
            gamma: f64,
            d0: f64,
            sigma: f64,
        }
        let f: File = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        PathLossParams::new(f.a_x, f.gamma, f.d0, f.sigma)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain struct serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_toml().as_bytes())
    }

    /// Log-domain scale of the range error induced by `sigma_dbm` of power
    /// noise: a δ dBm error scales distance by `10^(δ/(10γ))`.
    pub fn log_range_scale(&self, sigma_dbm: f64) -> f64 {
        sigma_dbm * LN_10 / (10.0 * self.gamma.abs())
    }
}

/// Deterministic mean received power at `distance`.
pub fn mean_rssi(params: &PathLossParams, distance: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {distance}")));
    }
    Ok(params.a_x + 10.0 * params.gamma * (distance / params.d0).log10())
}

/// Inverts the mean model: the distance at which `rssi` is the expected power.
pub fn distance_from_rssi(params: &PathLossParams, rssi: f64) -> Result<f64> {
    if params.gamma == 0.0 {
        return Err(Error::Degenerate("path-loss exponent is zero".into()));
    }
    Ok(params.d0 * 10f64.powf((rssi - params.a_x) / (10.0 * params.gamma)))
}

/// Log-normal density of a measured range given the predicted range.
///
/// The median is `predicted`; the log-domain scale is derived from
/// `sigma_ln` (dBm) through [`PathLossParams::log_range_scale`].
pub fn lognormal_range_density(
    params: &PathLossParams,
    sigma_ln: f64,
    predicted: f64,
    measured: f64,
) -> Result<f64> {
    if !(predicted > 0.0 && measured > 0.0 && sigma_ln > 0.0) {
        return Err(Error::Domain(format!(
            "log-normal density needs positive inputs (predicted {predicted}, measured {measured}, sigma_ln {sigma_ln})"
        )));
    }
    if params.gamma == 0.0 {
        return Err(Error::Degenerate("path-loss exponent is zero".into()));
    }
    let s = params.log_range_scale(sigma_ln);
    let u = (measured / predicted).ln() / s;
    Ok((-0.5 * u * u).exp() / (measured * s * (2.0 * PI).sqrt()))
}

/// Options for [`fit_pathloss`].
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Reference distance held fixed during the fit.
    pub d0: f64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            d0: 1.0,
            max_iterations: 200,
        }
    }
}

/// Result of a least-squares fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossFit {
    pub params: PathLossParams,
    /// Root-mean-square residual (dBm); equals `params.sigma`.
    pub rms_residual: f64,
    pub n_points: usize,
}

const START_SEEDS: [u64; 5] = [11, 23, 37, 41, 53];

/// Nonlinear least-squares (maximum likelihood under Gaussian noise) fit of
/// `(a_x, γ)` with `d0` fixed.
///
/// Levenberg–Marquardt with an analytic Jacobian, started from five fixed
/// pseudo-random points; the lowest-cost solution wins.
pub fn fit_pathloss(data: &[(f64, f64)], opts: FitOptions) -> Result<PathLossFit> {
    if !(opts.d0 > 0.0) {
        return Err(Error::Domain("reference distance must be positive".into()));
    }
    if data.len() < 2 {
        return Err(Error::RankDeficient(format!(
            "need at least 2 points, got {}",
            data.len()
        )));
    }
    let mut xs = Vec::with_capacity(data.len());
    let mut ys = Vec::with_capacity(data.len());
    for &(d, r) in data {
        if !(d > 0.0 && d.is_finite() && r.is_finite()) {
            return Err(Error::Domain(format!("invalid fit sample ({d}, {r})")));
        }
        xs.push(10.0 * (d / opts.d0).log10());
        ys.push(r);
    }
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if hi - lo <= 1e-12 * (1.0 + hi.abs()) {
        return Err(Error::RankDeficient("all samples share one distance".into()));
    }

    let ymean = ys.iter().sum::<f64>() / ys.len() as f64;
    let mut best: Option<([f64; 2], f64)> = None;
    for seed in START_SEEDS {
        let start = start_point(seed, ymean);
        let (theta, cost) = levenberg_marquardt(&xs, &ys, start, opts.max_iterations);
        if best.is_none_or(|(_, c)| cost < c) {
            best = Some((theta, cost));
        }
    }
    let (theta, cost) = best.expect("at least one start");
    let rms = (cost / xs.len() as f64).sqrt();
    let params = PathLossParams::new(theta[0], theta[1], opts.d0, rms)?;
    Ok(PathLossFit {
        params,
        rms_residual: rms,
        n_points: xs.len(),
    })
}

// Small splitmix-style generator; the starts only need to be spread out.
fn start_point(seed: u64, ymean: f64) -> [f64; 2] {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut next = || {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut x = z;
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        ((x ^ (x >> 31)) >> 11) as f64 / (1u64 << 53) as f64
    };
    [ymean + 40.0 * (next() - 0.5), 8.0 * (next() - 0.5)]
}

fn cost(xs: &[f64], ys: &[f64], t: [f64; 2]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - (t[0] + t[1] * x);
            r * r
        })
        .sum()
}

fn levenberg_marquardt(xs: &[f64], ys: &[f64], start: [f64; 2], max_iter: usize) -> ([f64; 2], f64) {
    let mut theta = start;
    let mut c = cost(xs, ys, theta);
    let mut lambda = 1e-3;
    for _ in 0..max_iter {
        // Jacobian of the model w.r.t. (a_x, γ) is [1, x].
        let (mut a00, mut a01, mut a11, mut g0, mut g1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(ys) {
            let r = y - (theta[0] + theta[1] * x);
            a00 += 1.0;
            a01 += x;
            a11 += x * x;
            g0 += r;
            g1 += r * x;
        }
        let mut improved = false;
        for _ in 0..30 {
            let b00 = a00 * (1.0 + lambda);
            let b11 = a11 * (1.0 + lambda);
            let det = b00 * b11 - a01 * a01;
            if det.abs() < f64::MIN_POSITIVE {
                lambda *= 10.0;
                continue;
            }
            let d0 = (b11 * g0 - a01 * g1) / det;
            let d1 = (b00 * g1 - a01 * g0) / det;
            let cand = [theta[0] + d0, theta[1] + d1];
            let cc = cost(xs, ys, cand);
            // Costs within rounding of each other count as non-increasing so
            // the iteration can settle the parameters, not just the cost.
            if cc <= c * (1.0 + 1e-12) {
                let step = d0.abs().max(d1.abs());
                theta = cand;
                c = cc;
                lambda = (lambda * 0.1).max(1e-15);
                improved = true;
                if step < 1e-13 * (1.0 + theta[0].abs()) {
                    return (theta, c);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (theta, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn table_params() -> PathLossParams {
        PathLossParams::new(-64.53, 1.72, 1.78, 0.0).unwrap()
    }

    #[test]
    fn mean_at_reference_distance() {
        let p = table_params();
        assert_eq!(mean_rssi(&p, 1.78).unwrap(), -64.53);
    }

    #[test]
    fn mean_one_decade_out() {
        let p = table_params();
        assert!((mean_rssi(&p, 17.8).unwrap() - (-47.33)).abs() < 1e-12);
    }

    #[test]
    fn mean_rejects_non_positive_distance() {
        let p = table_params();
        assert!(mean_rssi(&p, 0.0).is_err());
        assert!(mean_rssi(&p, -1.0).is_err());
    }

    #[test]
    fn inverse_at_reference() {
        let p = table_params();
        assert!((distance_from_rssi(&p, p.a_x).unwrap() - 1.78).abs() < 1e-15);
        assert!((distance_from_rssi(&p, -47.33).unwrap() - 17.8).abs() < 1e-9);
    }

    #[test]
    fn zero_gamma_is_degenerate() {
        let p = PathLossParams::new(-60.0, 0.0, 1.0, 1.0).unwrap();
        assert!(matches!(distance_from_rssi(&p, -60.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(PathLossParams::new(-60.0, 2.0, 0.0, 1.0).is_err());
        assert!(PathLossParams::new(-60.0, 2.0, 1.0, -1.0).is_err());
        assert!(PathLossParams::new(f64::NAN, 2.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn lognormal_at_median() {
        let p = table_params();
        let s = p.log_range_scale(0.4);
        let v = lognormal_range_density(&p, 0.4, 3.0, 3.0).unwrap();
        assert!((v - 1.0 / (3.0 * s * (2.0 * PI).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn lognormal_domain_errors() {
        let p = table_params();
        assert!(lognormal_range_density(&p, 0.4, 0.0, 1.0).is_err());
        assert!(lognormal_range_density(&p, 0.4, 1.0, -1.0).is_err());
        assert!(lognormal_range_density(&p, 0.0, 1.0, 1.0).is_err());
    }

    // Substitution x = ln(measured) turns the integral into a Gaussian-like
    // integrand; composite Simpson over ±12 scales is far below 1e-6 error.
    fn integrate_density(p: &PathLossParams, sigma_ln: f64, predicted: f64) -> f64 {
        let s = p.log_range_scale(sigma_ln);
        let (a, b) = (predicted.ln() - 12.0 * s, predicted.ln() + 12.0 * s);
        let n = 20_000;
        let h = (b - a) / n as f64;
        let f = |x: f64| {
            let m = x.exp();
            lognormal_range_density(p, sigma_ln, predicted, m).unwrap() * m
        };
        let mut acc = f(a) + f(b);
        for i in 1..n {
            acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn lognormal_integrates_to_one() {
        let p = table_params();
        for (sigma_ln, predicted) in [(0.4, 3.0), (3.0, 0.5), (6.0, 12.0)] {
            let total = integrate_density(&p, sigma_ln, predicted);
            assert!((total - 1.0).abs() < 1e-6, "{sigma_ln} {predicted}: {total}");
        }
    }

    #[test]
    fn lognormal_mode_location() {
        let p = table_params();
        let sigma_ln = 3.0;
        let predicted = 4.0;
        let s = p.log_range_scale(sigma_ln);
        let expected_mode = predicted * (-s * s).exp();
        let mut best = (0.0, f64::NEG_INFINITY);
        let n = 200_000;
        for i in 1..n {
            let m = 8.0 * i as f64 / n as f64;
            let v = lognormal_range_density(&p, sigma_ln, predicted, m).unwrap();
            if v > best.1 {
                best = (m, v);
            }
        }
        assert!((best.0 - expected_mode).abs() < 1e-4);
    }

    #[test]
    fn lognormal_concentrates_as_scale_shrinks() {
        let p = table_params();
        let at = |sigma_ln: f64, m: f64| lognormal_range_density(&p, sigma_ln, 2.0, m).unwrap();
        assert!(at(1e-3, 2.0) > 1e3);
        assert!(at(1e-3, 2.1) < 1e-100);
    }

    fn synth(params: &PathLossParams, n: usize, noise: f64, seed: u64) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise.max(1e-300)).unwrap();
        (0..n)
            .map(|_| {
                let d = rng.random_range(1.0..10.0);
                let e = if noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                (d, mean_rssi(params, d).unwrap() + e)
            })
            .collect()
    }

    #[test]
    fn noiseless_fit_recovers_curve() {
        let truth = PathLossParams::new(-64.53, -1.72, 1.78, 0.0).unwrap();
        let data = synth(&truth, 200, 0.0, 1);
        let fit = fit_pathloss(&data, FitOptions::default()).unwrap();
        assert!(fit.rms_residual < 1e-6, "{}", fit.rms_residual);
        assert!((fit.params.gamma - truth.gamma).abs() < 1e-9);
        for &(d, _) in &data {
            let a = mean_rssi(&fit.params, d).unwrap();
            let b = mean_rssi(&truth, d).unwrap();
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn fit_with_table_reference_distance() {
        let truth = PathLossParams::new(-64.53, 1.72, 1.78, 0.0).unwrap();
        let data = synth(&truth, 50, 0.0, 2);
        let fit = fit_pathloss(
            &data,
            FitOptions {
                d0: 1.78,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((fit.params.a_x - truth.a_x).abs() < 1e-8);
        assert!((fit.params.gamma - truth.gamma).abs() < 1e-9);
    }

    #[test]
    fn noisy_fit_estimates_sigma() {
        let truth = PathLossParams::new(-60.0, -2.0, 1.0, 3.0).unwrap();
        let data = synth(&truth, 2000, 3.0, 3);
        let fit = fit_pathloss(&data, FitOptions::default()).unwrap();
        assert!((fit.params.sigma - 3.0).abs() < 0.3, "{}", fit.params.sigma);
    }

    #[test]
    fn two_points_interpolate_exactly() {
        let fit = fit_pathloss(&[(1.0, -50.0), (10.0, -70.0)], FitOptions::default()).unwrap();
        assert!(fit.params.sigma < 1e-12);
        assert!((fit.params.gamma - (-2.0)).abs() < 1e-12);
        assert!((fit.params.a_x - (-50.0)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_fit_inputs() {
        let same = vec![(2.0, -60.0), (2.0, -61.0), (2.0, -59.0), (2.0, -62.0)];
        assert!(matches!(
            fit_pathloss(&same, FitOptions::default()),
            Err(Error::RankDeficient(_))
        ));
        assert!(fit_pathloss(&[(1.0, -50.0)], FitOptions::default()).is_err());
        assert!(fit_pathloss(&[(0.0, -50.0), (1.0, -60.0)], FitOptions::default()).is_err());
    }

    #[test]
    fn params_toml_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = PathLossParams::new(-64.53, 1.72, 1.78, 2.5).unwrap();
        let path = dir.path().join("pl.toml");
        p.save(&path).unwrap();
        assert_eq!(PathLossParams::load(&path).unwrap(), p);
    }

    proptest! {
        #[test]
        fn mean_is_monotone(gamma in -5.0f64..5.0, d1 in 0.01f64..50.0, d2 in 0.01f64..50.0) {
            prop_assume!(gamma.abs() > 1e-3 && (d1 - d2).abs() > 1e-6);
            let p = PathLossParams::new(-60.0, gamma, 1.0, 0.0).unwrap();
            let (a, b) = (mean_rssi(&p, d1).unwrap(), mean_rssi(&p, d2).unwrap());
            prop_assert_eq!((a < b) == (d1 < d2), gamma > 0.0);
        }

        #[test]
        fn inverse_round_trip(gamma in -4.0f64..4.0, d in 0.05f64..60.0, a_x in -90.0f64..-30.0) {
            prop_assume!(gamma.abs() > 0.1);
            let p = PathLossParams::new(a_x, gamma, 1.3, 0.0).unwrap();
            let back = distance_from_rssi(&p, mean_rssi(&p, d).unwrap()).unwrap();
            prop_assert!(((back - d) / d).abs() < 1e-9);
        }

        #[test]
        fn fit_ignores_ordering(seed in any::<u64>()) {
            let truth = PathLossParams::new(-62.0, -1.9, 1.0, 2.0).unwrap();
            let data = synth(&truth, 40, 2.0, seed);
            let mut rev = data.clone();
            rev.reverse();
            let a = fit_pathloss(&data, FitOptions::default()).unwrap();
            let b = fit_pathloss(&rev, FitOptions::default()).unwrap();
            prop_assert!((a.params.a_x - b.params.a_x).abs() < 1e-8, "{:?} {:?}", a, b);
            prop_assert!((a.params.gamma - b.params.gamma).abs() < 1e-8);
        }
    }
}
