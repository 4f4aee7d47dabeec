//! Marginal-likelihood hyperparameter search.
//!
//! Nelder–Mead simplex search over (log ℓ₁, log ℓ₂, log σ², m), restarted
//! from the initial point and from fixed perturbations of it. EP sites from
//! the previous evaluation warm-start the next one.

use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ep::{ep_infer_from, EpOptions};
use super::{GpcHyperparams, Input};
use crate::error::{Error, Result};
use crate::types::Label;

#[derive(Debug, Clone, Copy)]
pub struct OptimizeOptions {
    /// Number of simplex runs; the first starts at the initial point.
    pub restarts: usize,
    /// Function-evaluation budget per run.
    pub max_evals: usize,
    /// Initial simplex edge in search-space units.
    pub initial_step: f64,
    /// Stop when the simplex's objective spread falls below this.
    pub f_tolerance: f64,
    /// ... and its largest vertex distance below this.
    pub x_tolerance: f64,
    pub seed: u64,
    pub ep: EpOptions,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            restarts: 3,
            max_evals: 200,
            initial_step: 0.5,
            f_tolerance: 1e-7,
            x_tolerance: 1e-4,
            seed: 0x5eed,
            ep: EpOptions::default(),
        }
    }
}

/// Outcome of [`optimize_hyperparams`].
#[derive(Debug, Clone, Copy)]
pub struct OptimizeResult {
    pub hyper: GpcHyperparams,
    pub log_marginal: f64,
    pub initial_log_marginal: f64,
    pub evaluations: usize,
}

/// Maximizes the EP log marginal likelihood starting from `init`.
///
/// The returned hyperparameters never score below `init` (the initial point
/// is a simplex vertex of the first run). Fails only if EP fails everywhere.
pub fn optimize_hyperparams(
    inputs: &[Input],
    labels: &[Label],
    init: &GpcHyperparams,
    opts: &OptimizeOptions,
) -> Result<OptimizeResult> {
    init.validate()?;
    let warm: RefCell<Option<(Vec<f64>, Vec<f64>)>> = RefCell::new(None);
    let evals = RefCell::new(0usize);
    let objective = |x: &[f64; 4]| -> f64 {
        *evals.borrow_mut() += 1;
        let h = GpcHyperparams::from_search_space(x);
        if h.validate().is_err() {
            return f64::INFINITY;
        }
        let start = warm.borrow().clone();
        let res = ep_infer_from(
            inputs,
            labels,
            &h,
            &opts.ep,
            start.as_ref().map(|(t, v)| (t.as_slice(), v.as_slice())),
        );
        match res {
            Ok(r) => {
                let lm = r.log_marginal;
                *warm.borrow_mut() = Some((r.site_tau, r.site_nu));
                -lm
            }
            Err(e) => {
                log::debug!("EP failed at {h:?}: {e}");
                f64::INFINITY
            }
        }
    };

    let x0 = init.to_search_space();
    let f0 = objective(&x0);
    let mut best = (x0, f0);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for run in 0..opts.restarts.max(1) {
        let start = if run == 0 {
            x0
        } else {
            let mut s = x0;
            for v in s.iter_mut() {
                *v += rng.random_range(-1.0..1.0);
            }
            s
        };
        let (x, f) = nelder_mead(&objective, start, opts);
        if f < best.1 {
            best = (x, f);
        }
    }
    if !best.1.is_finite() {
        return Err(Error::Numerical(
            "hyperparameter search: EP failed at every evaluated point".into(),
        ));
    }
    let evaluations = *evals.borrow();
    Ok(OptimizeResult {
        hyper: GpcHyperparams::from_search_space(&best.0),
        log_marginal: -best.1,
        initial_log_marginal: -f0,
        evaluations,
    })
}

/// Minimizes `f` with the standard Nelder–Mead coefficients.
pub(crate) fn nelder_mead<const D: usize>(
    f: &dyn Fn(&[f64; D]) -> f64,
    start: [f64; D],
    opts: &OptimizeOptions,
) -> ([f64; D], f64) {
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut simplex: Vec<([f64; D], f64)> = Vec::with_capacity(D + 1);
    simplex.push((start, f(&start)));
    for d in 0..D {
        let mut v = start;
        v[d] += opts.initial_step;
        simplex.push((v, f(&v)));
    }
    let mut evals = D + 1;
    let order = |s: &mut Vec<([f64; D], f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));

    while evals < opts.max_evals {
        order(&mut simplex);
        let f_spread = simplex[D].1 - simplex[0].1;
        let x_spread = simplex[1..]
            .iter()
            .map(|(v, _)| {
                v.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if f_spread.abs() <= opts.f_tolerance && x_spread <= opts.x_tolerance {
            break;
        }

        let mut centroid = [0.0; D];
        for (v, _) in &simplex[..D] {
            for k in 0..D {
                centroid[k] += v[k] / D as f64;
            }
        }
        let worst = simplex[D];
        let along = |t: f64| -> [f64; D] {
            let mut p = [0.0; D];
            for k in 0..D {
                p[k] = centroid[k] + t * (worst.0[k] - centroid[k]);
            }
            p
        };

        let xr = along(-alpha);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-alpha * gamma);
            let fe = f(&xe);
            evals += 1;
            simplex[D] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[D - 1].1 {
            simplex[D] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let xc = along(-alpha * rho);
                (xc, f(&xc))
            } else {
                let xc = along(rho);
                (xc, f(&xc))
            };
            evals += 1;
            if fc < worst.1.min(fr) {
                simplex[D] = (xc, fc);
            } else {
                let best = simplex[0].0;
                for entry in simplex.iter_mut().skip(1) {
                    let mut p = [0.0; D];
                    for k in 0..D {
                        p[k] = best[k] + sigma * (entry.0[k] - best[k]);
                    }
                    *entry = (p, f(&p));
                    evals += 1;
                }
            }
        }
    }
    order(&mut simplex);
    simplex[0]
}
