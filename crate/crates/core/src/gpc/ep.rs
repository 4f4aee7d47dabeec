//! Expectation propagation for GP classification with a probit likelihood.
//!
//! Sites are Gaussian in natural parameters `(τ̃, ν̃)` over the latent offset
//! `g = f − m` from the constant mean `m`, so the prior on `g` is `N(0, K)`
//! and the likelihood of a label is `Φ(y·(g + m))`. Sites are updated
//! sequentially in index order; after every sweep the posterior is rebuilt
//! from a fresh Cholesky factorization.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::probit::{log_normal_cdf, normal_cdf, pdf_cdf_ratio};
use super::{gram_matrix, kernel, GpcHyperparams, Input};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::types::Label;

#[derive(Debug, Clone, Copy)]
pub struct EpOptions {
    /// Convergence threshold on the largest site-parameter change in a sweep.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for EpOptions {
    fn default() -> Self {
        EpOptions {
            tolerance: 1e-6,
            max_sweeps: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpResult {
    pub site_tau: Vec<f64>,
    pub site_nu: Vec<f64>,
    /// Posterior latent mean at the training inputs (including the constant mean).
    pub posterior_mean: Vec<f64>,
    pub posterior_var: Vec<f64>,
    /// EP approximation of `log p(y | X, θ)`.
    pub log_marginal: f64,
    pub sweeps: usize,
}

struct Posterior {
    sigma: DMatrix<f64>,
    mu: DVector<f64>,
    chol: DMatrix<f64>,
}

fn validate_inputs(inputs: &[Input], labels: &[Label], hyper: &GpcHyperparams) -> Result<()> {
    hyper.validate()?;
    if inputs.is_empty() {
        return Err(Error::Data("GPC needs at least one training point".into()));
    }
    if inputs.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} inputs but {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    if inputs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite GPC input".into()));
    }
    Ok(())
}

/// Cholesky factor of `B = I + S^½ K S^½` with `S = diag(τ̃)`.
fn factor_b(k: &DMatrix<f64>, sqrt_tau: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = k.nrows();
    let mut b = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            b[(i, j)] = sqrt_tau[i] * k[(i, j)] * sqrt_tau[j];
        }
        b[(j, j)] += 1.0;
    }
    nalgebra::Cholesky::new(b)
        .map(|c| c.unpack())
        .ok_or_else(|| Error::Numerical("EP: I + S^1/2 K S^1/2 is not positive definite".into()))
}

fn posterior(k: &DMatrix<f64>, tau: &[f64], nu: &[f64]) -> Result<Posterior> {
    let n = k.nrows();
    let sqrt_tau = DVector::from_iterator(n, tau.iter().map(|t| t.max(0.0).sqrt()));
    let chol = factor_b(k, &sqrt_tau)?;
    // V = L⁻¹ S^½ K, Σ = K − VᵀV.
    let mut v = k.clone();
    for i in 0..n {
        v.row_mut(i).scale_mut(sqrt_tau[i]);
    }
    chol.solve_lower_triangular_mut(&mut v);
    let mut sigma = k.clone();
    sigma.gemm_tr(-1.0, &v, &v, 1.0);
    let mu = &sigma * DVector::from_column_slice(nu);
    Ok(Posterior { sigma, mu, chol })
}

/// Cavity parameters for site `i`, or `None` if the cavity is improper.
fn cavity(sigma_ii: f64, mu_i: f64, tau_i: f64, nu_i: f64) -> Option<(f64, f64)> {
    let tau_c = 1.0 / sigma_ii - tau_i;
    if !(tau_c > 0.0) || !tau_c.is_finite() {
        return None;
    }
    let nu_c = mu_i / sigma_ii - nu_i;
    Some((tau_c, nu_c))
}

/// Site parameters from matching the tilted distribution `Φ(y(g+m))·N(g; μc, vc)`.
fn match_site(y: f64, mean_c: f64, var_c: f64, m: f64) -> (f64, f64) {
    let denom = (1.0 + var_c).sqrt();
    let z = y * (mean_c + m) / denom;
    let r = pdf_cdf_ratio(z);
    let dlz = y * r / denom;
    let d2lz = -r * (z + r) / (1.0 + var_c);
    let scale = 1.0 + d2lz * var_c;
    let tau = (-d2lz / scale).max(0.0);
    let nu = (dlz - mean_c * d2lz) / scale;
    (tau, nu)
}

fn log_marginal(post: &Posterior, tau: &[f64], nu: &[f64], y: &[f64], m: f64) -> Result<f64> {
    let n = tau.len();
    let nu_v = DVector::from_column_slice(nu);
    let mut lz = 0.0;
    let mut t1 = 0.0;
    let mut t2b = 0.0;
    let mut t3 = 0.0;
    for i in 0..n {
        let (tau_c, nu_c) = cavity(post.sigma[(i, i)], post.mu[i], tau[i], nu[i])
            .ok_or_else(|| Error::Numerical(format!("EP: improper cavity at site {i}")))?;
        let mean_c = nu_c / tau_c;
        let var_c = 1.0 / tau_c;
        lz += log_normal_cdf(y[i] * (mean_c + m) / (1.0 + var_c).sqrt());
        t1 += 0.5 * (1.0 + tau[i] / tau_c).ln() - post.chol[(i, i)].ln();
        t2b += nu[i] * nu[i] / (tau_c + tau[i]);
        t3 += mean_c * tau_c * (tau[i] * mean_c - 2.0 * nu[i]) / (tau_c + tau[i]);
    }
    let quad = nu_v.dot(&(&post.sigma * &nu_v));
    Ok(lz + t1 + 0.5 * quad - 0.5 * t2b + 0.5 * t3)
}

/// Runs EP to a fixed point and returns the sites and marginal likelihood.
pub fn ep_infer(
    inputs: &[Input],
    labels: &[Label],
    hyper: &GpcHyperparams,
    opts: &EpOptions,
) -> Result<EpResult> {
    ep_infer_from(inputs, labels, hyper, opts, None)
}

/// Like [`ep_infer`], optionally starting from previously converged sites.
pub fn ep_infer_from(
    inputs: &[Input],
    labels: &[Label],
    hyper: &GpcHyperparams,
    opts: &EpOptions,
    start: Option<(&[f64], &[f64])>,
) -> Result<EpResult> {
    validate_inputs(inputs, labels, hyper)?;
    let n = inputs.len();
    let k = gram_matrix(hyper, inputs);
    let y: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
    let m = hyper.mean_constant;

    let (mut tau, mut nu) = match start {
        Some((t, v)) if t.len() == n && v.len() == n => (t.to_vec(), v.to_vec()),
        _ => (vec![0.0; n], vec![0.0; n]),
    };
    let mut post = match posterior(&k, &tau, &nu) {
        Ok(p) => p,
        Err(_) => {
            tau.iter_mut().for_each(|t| *t = 0.0);
            nu.iter_mut().for_each(|v| *v = 0.0);
            posterior(&k, &tau, &nu)?
        }
    };

    let mut sweeps = 0;
    let mut max_change = f64::INFINITY;
    let mut col = DVector::zeros(n);
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        max_change = 0.0f64;
        for i in 0..n {
            let Some((tau_c, nu_c)) = cavity(post.sigma[(i, i)], post.mu[i], tau[i], nu[i]) else {
                continue;
            };
            let (tau_new, nu_new) = match_site(y[i], nu_c / tau_c, 1.0 / tau_c, m);
            let d_tau = tau_new - tau[i];
            let d_nu = nu_new - nu[i];
            max_change = max_change.max(d_tau.abs()).max(d_nu.abs());

            col.copy_from(&post.sigma.column(i));
            let s_ii = col[i];
            let c = d_tau / (1.0 + d_tau * s_ii);
            let s_dot_nu: f64 = col.iter().zip(&nu).map(|(a, b)| a * b).sum();
            // μ' = (Σ − c s sᵀ)(ν̃ + Δν eᵢ), expanded to stay O(n).
            let coeff = d_nu - c * (s_dot_nu + s_ii * d_nu);
            post.mu.axpy(coeff, &col, 1.0);
            post.sigma.ger(-c, &col, &col, 1.0);
            tau[i] = tau_new;
            nu[i] = nu_new;
        }
        post = posterior(&k, &tau, &nu)?;
        if max_change < opts.tolerance {
            break;
        }
    }
    if !(max_change < opts.tolerance) {
        return Err(Error::EpNotConverged { sweeps, max_change });
    }
    let log_marginal = log_marginal(&post, &tau, &nu, &y, m)?;
    if !log_marginal.is_finite() {
        return Err(Error::Numerical("EP log marginal is not finite".into()));
    }
    Ok(EpResult {
        posterior_mean: post.mu.iter().map(|g| g + m).collect(),
        posterior_var: (0..n).map(|i| post.sigma[(i, i)]).collect(),
        site_tau: tau,
        site_nu: nu,
        log_marginal,
        sweeps,
    })
}

/// Latent predictive moments and the resulting LOS probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub latent_mean: f64,
    pub latent_var: f64,
    pub p_los: f64,
}

/// A trained classifier. Immutable; prediction takes `&self`.
#[derive(Debug, Clone)]
pub struct GpcModel {
    hyper: GpcHyperparams,
    inputs: Vec<Input>,
    labels: Vec<Label>,
    site_tau: Vec<f64>,
    site_nu: Vec<f64>,
    log_marginal: f64,
    chol: DMatrix<f64>,
    sqrt_tau: DVector<f64>,
    alpha: DVector<f64>,
}

impl GpcModel {
    /// Runs EP with fixed hyperparameters and packages the result.
    pub fn train(
        inputs: &[Input],
        labels: &[Label],
        hyper: GpcHyperparams,
        opts: &EpOptions,
    ) -> Result<Self> {
        let ep = ep_infer(inputs, labels, &hyper, opts)?;
        Self::from_sites(
            hyper,
            inputs.to_vec(),
            labels.to_vec(),
            ep.site_tau,
            ep.site_nu,
            ep.log_marginal,
        )
    }

    /// Rebuilds the predictive factors from stored site parameters.
    pub fn from_sites(
        hyper: GpcHyperparams,
        inputs: Vec<Input>,
        labels: Vec<Label>,
        site_tau: Vec<f64>,
        site_nu: Vec<f64>,
        log_marginal: f64,
    ) -> Result<Self> {
        validate_inputs(&inputs, &labels, &hyper)?;
        let n = inputs.len();
        if site_tau.len() != n || site_nu.len() != n {
            return Err(Error::Data("site parameter count does not match inputs".into()));
        }
        if site_tau.iter().any(|t| !(*t >= 0.0) || !t.is_finite())
            || site_nu.iter().any(|v| !v.is_finite())
        {
            return Err(Error::Data("site precisions must be finite and non-negative".into()));
        }
        let k = gram_matrix(&hyper, &inputs);
        let sqrt_tau = DVector::from_iterator(n, site_tau.iter().map(|t| t.sqrt()));
        let chol = factor_b(&k, &sqrt_tau)?;
        // α = ν̃ − S^½ L⁻ᵀ L⁻¹ S^½ K ν̃
        let nu = DVector::from_column_slice(&site_nu);
        let mut w = (&k * &nu).component_mul(&sqrt_tau);
        chol.solve_lower_triangular_mut(&mut w);
        chol.tr_solve_lower_triangular_mut(&mut w);
        let alpha = nu - w.component_mul(&sqrt_tau);
        Ok(GpcModel {
            hyper,
            inputs,
            labels,
            site_tau,
            site_nu,
            log_marginal,
            chol,
            sqrt_tau,
            alpha,
        })
    }

    pub fn hyper(&self) -> &GpcHyperparams {
        &self.hyper
    }

    pub fn inputs(&self) -> &[Input] {
        &self.inputs
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn site_params(&self) -> (&[f64], &[f64]) {
        (&self.site_tau, &self.site_nu)
    }

    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn predict(&self, query: &Input) -> Prediction {
        let n = self.inputs.len();
        let kstar = DVector::from_iterator(n, self.inputs.iter().map(|x| kernel(&self.hyper, x, query)));
        let g = kstar.dot(&self.alpha);
        let mut v = kstar.component_mul(&self.sqrt_tau);
        self.chol.solve_lower_triangular_mut(&mut v);
        let latent_var = (kernel(&self.hyper, query, query) - v.norm_squared()).max(0.0);
        let latent_mean = self.hyper.mean_constant + g;
        let p_los = normal_cdf(latent_mean / (1.0 + latent_var).sqrt());
        Prediction {
            latent_mean,
            latent_var,
            p_los,
        }
    }

    pub fn predict_proba(&self, query: &Input) -> f64 {
        self.predict(query).p_los
    }

    /// Fraction of training points whose thresholded prediction (p > 0.5)
    /// matches the label.
    pub fn training_accuracy(&self) -> f64 {
        let hits = self
            .inputs
            .iter()
            .zip(&self.labels)
            .filter(|(x, l)| (self.predict_proba(x) > 0.5) == l.is_los())
            .count();
        hits as f64 / self.inputs.len() as f64
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            hyper: self.hyper,
            inputs: self.inputs.clone(),
            labels: self.labels.iter().map(|l| l.sign() as i8).collect(),
            site_tau: self.site_tau.clone(),
            site_nu: self.site_nu.clone(),
            log_marginal: self.log_marginal,
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("GPC model file: {e}")))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        let labels = file
            .labels
            .iter()
            .map(|&y| Label::from_sign(y as f64))
            .collect::<Result<Vec<_>>>()?;
        GpcModel::from_sites(
            file.hyper,
            file.inputs,
            labels,
            file.site_tau,
            file.site_nu,
            file.log_marginal,
        )
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

const MODEL_FORMAT: &str = "losgate-gpc";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    hyper: GpcHyperparams,
    inputs: Vec<Input>,
    labels: Vec<i8>,
    site_tau: Vec<f64>,
    site_nu: Vec<f64>,
    log_marginal: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpc::probit::normal_cdf;

    fn hyper(l: [f64; 2], sf2: f64, m: f64) -> GpcHyperparams {
        GpcHyperparams {
            lengthscales: l,
            signal_variance: sf2,
            mean_constant: m,
        }
    }

    #[test]
    fn single_point_is_exact() {
        // One site: EP matches the exact evidence Φ(y·m/√(1+k)).
        let h = hyper([1.0, 5.0], 1.7, 0.3);
        for label in [Label::Los, Label::Nlos] {
            let ep = ep_infer(&[[2.0, -60.0]], &[label], &h, &EpOptions::default()).unwrap();
            let k: f64 = 1.7 * (1.0 + 1e-8);
            let exact = normal_cdf(label.sign() * 0.3 / (1.0 + k).sqrt()).ln();
            assert!((ep.log_marginal - exact).abs() < 1e-10, "{} {}", ep.log_marginal, exact);
        }
    }

    #[test]
    fn single_los_point_predicts_los() {
        let h = GpcHyperparams::default();
        let model = GpcModel::train(&[[2.0, -60.0]], &[Label::Los], h, &EpOptions::default()).unwrap();
        assert!(model.predict_proba(&[2.0, -60.0]) > 0.5);
    }

    #[test]
    fn symmetric_pair_gives_half_at_midpoint() {
        let h = GpcHyperparams::default();
        let model = GpcModel::train(
            &[[2.0, -60.0], [4.0, -70.0]],
            &[Label::Los, Label::Nlos],
            h,
            &EpOptions::default(),
        )
        .unwrap();
        let p = model.predict_proba(&[3.0, -65.0]);
        assert!((p - 0.5).abs() < 1e-6, "{p}");
    }

    #[test]
    fn zero_latent_mean_gives_half() {
        let h = GpcHyperparams::default();
        let model = GpcModel::train(&[[2.0, -60.0]], &[Label::Los], h, &EpOptions::default()).unwrap();
        let far = model.predict(&[1e3, 0.0]);
        assert_eq!(far.latent_mean, 0.0);
        assert_eq!(far.p_los, 0.5);
    }

    #[test]
    fn prior_reversion_far_from_data() {
        let h = hyper([1.0, 5.0], 2.0, 0.8);
        let model = GpcModel::train(
            &[[2.0, -60.0], [3.0, -80.0]],
            &[Label::Nlos, Label::Nlos],
            h,
            &EpOptions::default(),
        )
        .unwrap();
        let p = model.predict_proba(&[500.0, 100.0]);
        assert!((p - normal_cdf(0.8 / 3f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn sites_are_non_negative() {
        let inputs: Vec<Input> = (0..30).map(|i| [i as f64 * 0.3, -50.0 - i as f64]).collect();
        let labels: Vec<Label> = (0..30).map(|i| Label::from_los(i % 3 != 0)).collect();
        let ep = ep_infer(&inputs, &labels, &GpcHyperparams::default(), &EpOptions::default()).unwrap();
        assert!(ep.site_tau.iter().all(|t| *t >= 0.0));
        assert!(ep.sweeps >= 2);
    }

    #[test]
    fn non_convergence_is_reported() {
        let inputs: Vec<Input> = (0..10).map(|i| [i as f64, -60.0]).collect();
        let labels: Vec<Label> = (0..10).map(|i| Label::from_los(i % 2 == 0)).collect();
        let opts = EpOptions {
            tolerance: 1e-6,
            max_sweeps: 1,
        };
        match ep_infer(&inputs, &labels, &GpcHyperparams::default(), &opts) {
            Err(Error::EpNotConverged { sweeps, max_change }) => {
                assert_eq!(sweeps, 1);
                assert!(max_change > 1e-6);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let h = GpcHyperparams::default();
        assert!(ep_infer(&[], &[], &h, &EpOptions::default()).is_err());
        assert!(ep_infer(&[[0.0, 0.0]], &[], &h, &EpOptions::default()).is_err());
        let bad = hyper([0.0, 1.0], 1.0, 0.0);
        assert!(ep_infer(&[[0.0, 0.0]], &[Label::Los], &bad, &EpOptions::default()).is_err());
    }

    #[test]
    fn warm_start_reaches_same_fixed_point() {
        let inputs: Vec<Input> = (0..25).map(|i| [(i % 7) as f64, -45.0 - 2.0 * i as f64]).collect();
        let labels: Vec<Label> = (0..25).map(|i| Label::from_los(i < 13)).collect();
        let h = GpcHyperparams::default();
        let cold = ep_infer(&inputs, &labels, &h, &EpOptions::default()).unwrap();
        let h2 = hyper([1.2, 6.0], 1.1, 0.1);
        let other = ep_infer(&inputs, &labels, &h2, &EpOptions::default()).unwrap();
        let warm = ep_infer_from(
            &inputs,
            &labels,
            &h,
            &EpOptions::default(),
            Some((&other.site_tau, &other.site_nu)),
        )
        .unwrap();
        assert!((cold.log_marginal - warm.log_marginal).abs() < 1e-6);
    }

    #[test]
    fn model_json_round_trip() {
        let inputs: Vec<Input> = (0..12).map(|i| [i as f64 * 0.5, -50.0 - 3.0 * i as f64]).collect();
        let labels: Vec<Label> = (0..12).map(|i| Label::from_los(i < 6)).collect();
        let model = GpcModel::train(&inputs, &labels, GpcHyperparams::default(), &EpOptions::default()).unwrap();
        let back = GpcModel::from_json(&model.to_json()).unwrap();
        for q in [[1.0, -55.0], [4.0, -80.0], [9.0, -40.0]] {
            assert_eq!(model.predict(&q), back.predict(&q));
        }
        assert!(GpcModel::from_json("{}").is_err());
    }
}
