mod common;

use common::kalman::{noise, position_observation, transition, Kalman};
use losgate::eval::{
    empirical_cdf, pcrlb_recursion, pcrlb_trace, roc_auc, CrlbConfig, CrlbModel, CrlbStep,
};
use losgate::filter::{MotionParams, Region};
use losgate::{Beacon, BeaconMap, Groundtruth, GroundtruthPose, RssiObservation};
use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn bound_equals_kalman_covariance_for_position_observations() {
    let motion = MotionParams::default();
    let h = position_observation();
    let r = Matrix2::new(0.7, 0.1, 0.1, 0.4);
    let p0 = Matrix4::from_diagonal(&Vector4::new(4.0, 0.02, 9.0, 0.02));
    let info = h.transpose() * r.try_inverse().unwrap() * h;
    // Observations at every third step only.
    let steps: Vec<CrlbStep> = (0..100)
        .map(|k| CrlbStep {
            t: k as f64 * motion.ts,
            measurement_information: if k % 3 == 0 { info } else { Matrix4::zeros() },
        })
        .collect();
    let trace = pcrlb_recursion(&p0.try_inverse().unwrap(), &motion, &steps, 0).unwrap();

    let mut kf = Kalman {
        mean: Vector4::zeros(),
        cov: p0,
    };
    let (f, q) = (transition(motion.ts), noise(motion.sigma_u, motion.sigma_v));
    for (k, j) in trace.information.iter().enumerate() {
        kf.predict(&f, &q);
        if k % 3 == 0 {
            kf.update(&h, &r, &Vector2::zeros());
        }
        let cov = j.try_inverse().unwrap();
        assert!((cov - kf.cov).abs().max() < 1e-9, "step {k}");
        let want = kf.cov[(0, 0)] + kf.cov[(2, 2)];
        assert!((trace.position_variance[k] - want).abs() < 1e-9);
    }
}

fn walk(n: usize) -> Groundtruth {
    Groundtruth::new(
        (0..n)
            .map(|k| GroundtruthPose {
                t: k as f64 * 0.1,
                position: [2.0 + 0.02 * k as f64, 3.0, 1.0],
            })
            .collect(),
    )
    .unwrap()
}

fn beacons() -> BeaconMap {
    BeaconMap::new(vec![
        Beacon::new("a", [0.0, 0.0, 2.5]),
        Beacon::new("b", [10.0, 0.0, 2.5]),
        Beacon::new("c", [5.0, 8.0, 2.5]),
    ])
    .unwrap()
}

fn config(model: CrlbModel) -> CrlbConfig {
    let region = Region {
        x_min: 0.0,
        x_max: 10.0,
        y_min: 0.0,
        y_max: 8.0,
    };
    CrlbConfig {
        model,
        prior_information: CrlbConfig::prior_from_region(&region, 0.05).unwrap(),
        receiver_height: 1.0,
        warmup: 0,
    }
}

#[test]
fn bound_grows_without_measurements() {
    let motion = MotionParams::default();
    let cfg = config(CrlbModel::Range { sigma: 3.0 });
    let steps: Vec<CrlbStep> = (0..200)
        .map(|k| CrlbStep {
            t: k as f64 * 0.1,
            measurement_information: Matrix4::zeros(),
        })
        .collect();
    let v = pcrlb_recursion(&cfg.prior_information, &motion, &steps, 0)
        .unwrap()
        .position_variance;
    assert!(v.windows(2).all(|w| w[1] > w[0]));
}

fn random_log(seed: u64, n: usize) -> Vec<RssiObservation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = ["a", "b", "c"];
    let mut obs = vec![RssiObservation::new(0.0, "a", -60.0)];
    for k in 1..n {
        for id in ids {
            if rng.random::<f64>() < 0.5 {
                obs.push(RssiObservation::new(k as f64 * 0.1 + 0.01, id, -60.0));
            }
        }
    }
    obs
}

#[test]
fn doubling_noise_never_lowers_the_bound() {
    let gt = walk(300);
    let obs = random_log(4, 300);
    let motion = MotionParams::default();
    for (lo, hi) in [
        (CrlbModel::Range { sigma: 3.0 }, CrlbModel::Range { sigma: 3.0 * 2f64.sqrt() }),
        (CrlbModel::LogRange { scale: 0.1 }, CrlbModel::LogRange { scale: 0.1 * 2f64.sqrt() }),
    ] {
        let a = pcrlb_trace(&gt, &obs, &beacons(), &motion, &config(lo)).unwrap();
        let b = pcrlb_trace(&gt, &obs, &beacons(), &motion, &config(hi)).unwrap();
        assert_eq!(a.position_variance.len(), 300);
        for (x, y) in a.position_variance.iter().zip(&b.position_variance) {
            assert!(y >= x, "{y} < {x}");
        }
        assert!(a.rms() < b.rms());
    }
}

#[test]
fn auc_trapezoid_matches_mann_whitney() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let labels: Vec<bool> = (0..500).map(|_| rng.random::<f64>() < 0.4).collect();
        // Coarse scores so that ties occur.
        let scores: Vec<f64> = labels
            .iter()
            .map(|&l| ((rng.random::<f64>() + if l { 0.3 } else { 0.0 }) * 20.0).round())
            .collect();
        let mut wins = 0.0;
        let (mut np, mut nn) = (0.0, 0.0);
        for (i, &li) in labels.iter().enumerate() {
            if li {
                np += 1.0;
            } else {
                nn += 1.0;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                        std::cmp::Ordering::Greater => 1.0,
                        std::cmp::Ordering::Equal => 0.5,
                        std::cmp::Ordering::Less => 0.0,
                    };
                }
            }
        }
        let auc = roc_auc(&scores, &labels).unwrap().auc;
        assert!((auc - wins / (np * nn)).abs() < 1e-12, "{auc}");
    }
}

proptest! {
    #[test]
    fn auc_is_invariant_to_monotone_transforms(
        data in proptest::collection::vec((-5.0f64..5.0, any::<bool>()), 2..100),
    ) {
        let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
        let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let a = roc_auc(&scores, &labels).unwrap().auc;
        let t: Vec<f64> = scores.iter().map(|s| (0.7 * s).exp() + 3.0).collect();
        let b = roc_auc(&t, &labels).unwrap().auc;
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn rmse_dominates_mean_absolute_error(
        pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..50),
    ) {
        let est: Vec<[f64; 2]> = pts.iter().map(|p| [p.0, p.1]).collect();
        let truth = vec![[0.0, 0.0]; est.len()];
        let mae = est.iter().map(|e| e[0].hypot(e[1])).sum::<f64>() / est.len() as f64;
        prop_assert!(losgate::eval::rmse(&est, &truth).unwrap() >= mae - 1e-12);
    }

    #[test]
    fn cdf_is_monotone_and_respects_dominance(
        errs in proptest::collection::vec(0.0f64..10.0, 1..60),
        shrink in 0.0f64..1.0,
        xs in proptest::collection::vec(-1.0f64..11.0, 1..30),
    ) {
        let big = empirical_cdf(&errs).unwrap();
        let small: Vec<f64> = errs.iter().map(|e| e * shrink).collect();
        let small = empirical_cdf(&small).unwrap();
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        for w in xs.windows(2) {
            prop_assert!(big.eval(w[0]) <= big.eval(w[1]));
        }
        for &x in &xs {
            prop_assert!(small.eval(x) >= big.eval(x));
        }
    }
}
