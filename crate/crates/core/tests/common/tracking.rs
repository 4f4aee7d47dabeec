//! Particle filter against the Kalman posterior on a linear-Gaussian model
//! with direct position observations.

use losgate::filter::{
    effective_sample_size, estimate, predict, reweight, systematic_resample, FilterState, MotionParams,
};
use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::kalman::{noise, position_observation, transition, Kalman};

pub struct StepComparison {
    pub pf_mean: [f64; 2],
    pub pf_var: [f64; 2],
    pub kf_mean: [f64; 2],
    pub kf_var: [f64; 2],
}

impl StepComparison {
    /// PF − KF mean in units of the KF posterior std.
    pub fn deviation(&self, axis: usize) -> f64 {
        (self.pf_mean[axis] - self.kf_mean[axis]) / self.kf_var[axis].sqrt()
    }
}

/// Runs both filters on one simulated track. The PF estimate is taken after
/// the update and before resampling (threshold n_p/2).
pub fn kalman_comparison(n_p: usize, steps: usize, seed: u64) -> Vec<StepComparison> {
    let motion = MotionParams {
        sigma_u: 0.1,
        sigma_v: 0.05,
        ts: 0.1,
    };
    let r_std = 0.5;
    let f = transition(motion.ts);
    let q = noise(motion.sigma_u, motion.sigma_v);
    let h = position_observation();
    let r = Matrix2::identity() * r_std * r_std;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Prior N(0, diag(1, 0.01, 1, 0.01)) for both filters.
    let mut kf = Kalman {
        mean: Vector4::zeros(),
        cov: Matrix4::from_diagonal(&Vector4::new(1.0, 0.01, 1.0, 0.01)),
    };
    let particles = (0..n_p)
        .map(|_| {
            let n: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
            [n[0], 0.1 * n[1], n[2], 0.1 * n[3]]
        })
        .collect();
    let mut pf = FilterState {
        particles,
        weights: vec![1.0 / n_p as f64; n_p],
        receiver_height: 0.0,
        t: 0.0,
    };
    let mut truth = Vector4::new(0.3, 0.2, -0.4, 0.1);
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let w: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        truth = f * truth
            + Vector4::new(
                motion.sigma_u * w[0],
                motion.sigma_v * w[1],
                motion.sigma_u * w[2],
                motion.sigma_v * w[3],
            );
        let z = Vector2::new(
            truth[0] + r_std * rng.sample::<f64, _>(StandardNormal),
            truth[2] + r_std * rng.sample::<f64, _>(StandardNormal),
        );
        kf.predict(&f, &q);
        kf.update(&h, &r, &z);

        predict(&mut pf, &motion, &mut rng);
        reweight(&mut pf, |p| {
            let (dx, dy) = ((p[0] - z[0]) / r_std, (p[2] - z[1]) / r_std);
            -0.5 * (dx * dx + dy * dy)
        });
        let e = estimate(&pf);
        let var = |k: usize, m: f64| {
            pf.particles
                .iter()
                .zip(&pf.weights)
                .map(|(p, w)| w * (p[k] - m).powi(2))
                .sum::<f64>()
        };
        out.push(StepComparison {
            pf_mean: e,
            pf_var: [var(0, e[0]), var(2, e[1])],
            kf_mean: [kf.mean[0], kf.mean[2]],
            kf_var: [kf.cov[(0, 0)], kf.cov[(2, 2)]],
        });
        if effective_sample_size(&pf) < n_p as f64 / 2.0 {
            systematic_resample(&mut pf, &mut rng);
        }
    }
    out
}
