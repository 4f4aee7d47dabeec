//! Binary Gaussian-process classification over (distance, RSSI) inputs.
//!
//! The latent function has a constant mean and a squared-exponential ARD
//! covariance; labels enter through the probit link. Posterior inference is
//! expectation propagation ([`ep`]) and hyperparameters are chosen by
//! maximizing the EP marginal likelihood ([`optimize`]).

pub mod ep;
pub mod optimize;
pub mod probit;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ep::{ep_infer, EpOptions, EpResult, GpcModel, Prediction};
pub use optimize::{optimize_hyperparams, OptimizeOptions};

/// Input dimension: (distance in meters, RSSI in dBm).
pub const INPUT_DIM: usize = 2;

pub type Input = [f64; INPUT_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpcHyperparams {
    /// Per-axis lengthscales (m, dBm).
    pub lengthscales: [f64; INPUT_DIM],
    pub signal_variance: f64,
    /// Constant prior mean of the latent function.
    pub mean_constant: f64,
}

impl Default for GpcHyperparams {
    fn default() -> Self {
        GpcHyperparams {
            lengthscales: [1.0, 5.0],
            signal_variance: 1.0,
            mean_constant: 0.0,
        }
    }
}

impl GpcHyperparams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lengthscales.iter().all(|l| *l > 0.0 && l.is_finite())
            && self.signal_variance > 0.0
            && self.signal_variance.is_finite()
            && self.mean_constant.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid GPC hyperparameters {self:?}")))
        }
    }

    /// Unconstrained coordinates: log lengthscales, log signal variance, mean.
    pub fn to_search_space(&self) -> [f64; 4] {
        [
            self.lengthscales[0].ln(),
            self.lengthscales[1].ln(),
            self.signal_variance.ln(),
            self.mean_constant,
        ]
    }

    pub fn from_search_space(v: &[f64; 4]) -> Self {
        GpcHyperparams {
            lengthscales: [v[0].exp(), v[1].exp()],
            signal_variance: v[2].exp(),
            mean_constant: v[3],
        }
    }
}

/// Squared-exponential covariance with automatic relevance determination.
pub fn kernel(hyper: &GpcHyperparams, a: &Input, b: &Input) -> f64 {
    let mut r2 = 0.0;
    for d in 0..INPUT_DIM {
        let u = (a[d] - b[d]) / hyper.lengthscales[d];
        r2 += u * u;
    }
    hyper.signal_variance * (-0.5 * r2).exp()
}

/// Relative diagonal jitter added to Gram matrices.
pub const JITTER: f64 = 1e-8;

/// Gram matrix with `JITTER · signal_variance` on the diagonal.
pub fn gram_matrix(hyper: &GpcHyperparams, inputs: &[Input]) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = kernel(hyper, &inputs[i], &inputs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(j, j)] += JITTER * hyper.signal_variance;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_at_zero_distance() {
        let h = GpcHyperparams {
            signal_variance: 2.5,
            ..Default::default()
        };
        assert_eq!(kernel(&h, &[3.0, -60.0], &[3.0, -60.0]), 2.5);
    }

    #[test]
    fn kernel_decays() {
        let h = GpcHyperparams::default();
        assert!(kernel(&h, &[0.0, -60.0], &[1e3, -60.0]) < 1e-300);
        assert!(kernel(&h, &[0.0, -60.0], &[0.0, 1e4]) == 0.0);
    }

    #[test]
    fn gram_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..5 {
            let h = GpcHyperparams {
                lengthscales: [rng.random_range(0.2..5.0), rng.random_range(1.0..20.0)],
                signal_variance: rng.random_range(0.1..10.0),
                mean_constant: 0.0,
            };
            let pts: Vec<Input> = (0..50)
                .map(|_| [rng.random_range(0.0..10.0), rng.random_range(-100.0..-40.0)])
                .collect();
            let k = gram_matrix(&h, &pts);
            assert_eq!(k, k.transpose());
            let eig = k.symmetric_eigenvalues();
            let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min >= -1e-8 * h.signal_variance, "trial {trial}: {min}");
        }
    }

    #[test]
    fn search_space_round_trip() {
        let h = GpcHyperparams {
            lengthscales: [0.7, 12.0],
            signal_variance: 3.0,
            mean_constant: -0.4,
        };
        let back = GpcHyperparams::from_search_space(&h.to_search_space());
        assert!((back.lengthscales[0] - 0.7).abs() < 1e-14);
        assert!((back.lengthscales[1] - 12.0).abs() < 1e-13);
        assert!((back.signal_variance - 3.0).abs() < 1e-14);
        assert_eq!(back.mean_constant, -0.4);
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric(a0 in -10.0f64..10.0, a1 in -100.0f64..0.0, b0 in -10.0f64..10.0, b1 in -100.0f64..0.0) {
            let h = GpcHyperparams::default();
            prop_assert_eq!(kernel(&h, &[a0, a1], &[b0, b1]), kernel(&h, &[b0, b1], &[a0, a1]));
            prop_assert!(kernel(&h, &[a0, a1], &[b0, b1]) <= h.signal_variance);
        }
    }
}
