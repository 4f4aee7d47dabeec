//! Test-only oracles, independent of the library's inference code paths.
#![allow(dead_code)]

pub mod kalman;
pub mod tracking;

use losgate::gpc::{kernel, GpcHyperparams, Input};
use losgate::Label;

// Gauss–Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut pairs = [(0.0, 0.0); 7];
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        pairs[j] = (f(c - x), f(c + x));
        let s = pairs[j].0 + pairs[j].1;
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    // QUADPACK's error scaling: |K - G| overstates the error of K by far.
    let mean = kron * 0.5;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((pairs[j].0 - mean).abs() + (pairs[j].1 - mean).abs());
    }
    resasc *= h;
    let mut err = ((kron - gauss) * h).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    (kron * h, err)
}

/// Adaptive Gauss–Kronrod quadrature with bisection on the worst interval.
pub fn integrate(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    const PANELS: usize = 6;
    let w = (b - a) / PANELS as f64;
    let mut parts: Vec<_> = (0..PANELS)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * w, a + (i + 1) as f64 * w);
            (lo, hi, gk15(f, lo, hi))
        })
        .collect();
    for _ in 0..200 {
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        if err <= tol {
            break;
        }
        let (i, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .unwrap();
        let (lo, hi, _) = parts.swap_remove(i);
        let mid = 0.5 * (lo + hi);
        parts.push((lo, mid, gk15(f, lo, mid)));
        parts.push((mid, hi, gk15(f, mid, hi)));
    }
    parts.iter().map(|p| p.2 .0).sum()
}

pub fn phi(z: f64) -> f64 {
    0.5 * oracle_erfc(-z / std::f64::consts::SQRT_2)
}

// Maclaurin series for erf below 2, Lentz continued fraction above.
fn oracle_erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - oracle_erfc(-x);
    }
    if x < 2.0 {
        // erf series: 2/√π Σ (-1)^n x^(2n+1) / (n! (2n+1))
        let mut sum = 0.0;
        let mut term = x;
        let x2 = x * x;
        let mut n = 0.0;
        loop {
            let add = term / (2.0 * n + 1.0);
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
            n += 1.0;
            term *= -x2 / n;
        }
        1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum
    } else {
        // Lentz continued fraction for erfc.
        let tiny = 1e-300;
        let mut f = x;
        let mut c = x;
        let mut d = 0.0;
        for k in 1..500 {
            let a = k as f64 / 2.0;
            d = x + a * d;
            d = if d.abs() < tiny { tiny } else { 1.0 / d };
            c = x + a / c;
            if c.abs() < tiny {
                c = tiny;
            }
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-x * x).exp() / (f * std::f64::consts::PI.sqrt())
    }
}

fn std_normal_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][j] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

fn prior_cholesky(inputs: &[Input], hyper: &GpcHyperparams) -> Vec<Vec<f64>> {
    let n = inputs.len();
    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut v = kernel(hyper, &inputs[i], &inputs[j]);
                    if i == j {
                        v += 1e-8 * hyper.signal_variance;
                    }
                    v
                })
                .collect()
        })
        .collect();
    cholesky(&k)
}

/// Integrates against a standard normal over the first `dims` whitened
/// coordinates by nested adaptive quadrature. `factor(i, u)` is the
/// integrand factor that becomes known once `u[..=i]` is fixed; `leaf(u)`
/// supplies the rest.
fn nested(
    depth: usize,
    dims: usize,
    u: &mut Vec<f64>,
    factor: &dyn Fn(usize, &[f64]) -> f64,
    leaf: &dyn Fn(&[f64]) -> f64,
) -> f64 {
    if depth == dims {
        return leaf(u);
    }
    let mut inner = |x: f64| {
        u[depth] = x;
        let g = std_normal_pdf(x) * factor(depth, u);
        if g == 0.0 {
            return 0.0;
        }
        g * nested(depth + 1, dims, u, factor, leaf)
    };
    integrate(&mut inner, -9.0, 9.0, 1e-8)
}

// f_i = m + Σ_{k<i} L_ik u_k, i.e. the latent without its own whitened term.
fn partial_latent(l: &[Vec<f64>], m: f64, u: &[f64], i: usize) -> f64 {
    m + (0..i).map(|k| l[i][k] * u[k]).sum::<f64>()
}

/// Exact `log p(y | X, θ)` for a probit GPC, by quadrature (n ≤ 3).
///
/// With `f = m + L·u` the last latent depends on the last whitened
/// coordinate alone, and ∫ φ(u) Φ(a + b·u) du = Φ(a/√(1+b²)) removes it.
pub fn exact_log_marginal(inputs: &[Input], labels: &[Label], hyper: &GpcHyperparams) -> f64 {
    let n = inputs.len();
    let l = prior_cholesky(inputs, hyper);
    let m = hyper.mean_constant;
    let ys: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
    let factor = |i: usize, u: &[f64]| phi(ys[i] * (partial_latent(&l, m, u, i) + l[i][i] * u[i]));
    let last = n - 1;
    let leaf = |u: &[f64]| {
        let a = partial_latent(&l, m, u, last);
        phi(ys[last] * a / (1.0 + l[last][last] * l[last][last]).sqrt())
    };
    let mut u = vec![0.0; n];
    nested(0, last, &mut u, &factor, &leaf).ln()
}

/// Exact predictive `p(y* = +1 | D, x*)` by quadrature, as the ratio of the
/// marginals with and without the query labeled +1.
pub fn exact_predictive(
    inputs: &[Input],
    labels: &[Label],
    hyper: &GpcHyperparams,
    query: &Input,
) -> f64 {
    let mut xs = inputs.to_vec();
    xs.push(*query);
    let mut ys = labels.to_vec();
    ys.push(Label::Los);
    (exact_log_marginal(&xs, &ys, hyper) - exact_log_marginal(inputs, labels, hyper)).exp()
}
