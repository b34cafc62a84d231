//! Independent reference computations for the integration tests.
//!
//! Everything here is written from the model definition with dense matrices
//! and explicit loops, sharing no code with the structured paths under test.

#![allow(dead_code)]

use mixedgibbs_core::model::{ChainState, Hyperparameters, MixedModelData};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Random data set with the given group sizes.
pub fn random_data<R: Rng + ?Sized>(rng: &mut R, p: usize, sizes: &[usize]) -> MixedModelData {
    let n: usize = sizes.iter().sum();
    let x: Vec<f64> = (0..n * p).map(|_| normal(rng)).collect();
    let mut y = Vec::with_capacity(n);
    for (i, &r) in sizes.iter().enumerate() {
        let eff = 0.5 * normal(rng) + 0.1 * i as f64;
        for _ in 0..r {
            y.push(eff + normal(rng));
        }
    }
    MixedModelData::from_flat(p, sizes.to_vec(), y, x).unwrap()
}

pub fn random_state<R: Rng + ?Sized>(rng: &mut R, p: usize, q: usize, scale: f64) -> ChainState {
    ChainState {
        eta00: (0..p).map(|_| scale * normal(rng)).collect(),
        eta0: scale * normal(rng),
        eta: (0..q).map(|_| scale * normal(rng)).collect(),
    }
}

/// Rows of group `i` as `(y_ij, x_ij)` pairs.
pub fn rows(data: &MixedModelData, i: usize) -> Vec<(f64, Vec<f64>)> {
    let sizes = data.group_sizes();
    (0..sizes[i]).map(|j| (data.y_at(i, j), data.x_row(i, j).to_vec())).collect()
}

pub struct NaiveDesign {
    pub xbar: Vec<Vec<f64>>,
    pub ybar: Vec<f64>,
    pub ybar_grand: f64,
    pub xtx: DMatrix<f64>,
    pub xbtxb: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub sum_y_sq: f64,
    pub within_group_ss: f64,
}

pub fn naive_design(data: &MixedModelData) -> NaiveDesign {
    let (p, q) = (data.p(), data.q());
    let mut xbar = vec![vec![0.0; p]; q];
    let mut ybar = vec![0.0; q];
    let mut xtx = DMatrix::zeros(p, p);
    let mut xty = DVector::zeros(p);
    let mut sum_y_sq = 0.0;
    for i in 0..q {
        let rs = rows(data, i);
        let r = rs.len() as f64;
        for (y, x) in &rs {
            ybar[i] += y / r;
            for a in 0..p {
                xbar[i][a] += x[a] / r;
                xty[a] += x[a] * y;
                for b in 0..p {
                    xtx[(a, b)] += x[a] * x[b];
                }
            }
            sum_y_sq += y * y;
        }
    }
    let mut xbtxb = DMatrix::zeros(p, p);
    let mut within_group_ss = 0.0;
    for i in 0..q {
        let rs = rows(data, i);
        for (y, _) in &rs {
            within_group_ss += (y - ybar[i]).powi(2);
            for a in 0..p {
                for b in 0..p {
                    xbtxb[(a, b)] += xbar[i][a] * xbar[i][b];
                }
            }
        }
    }
    NaiveDesign {
        ybar_grand: ybar.iter().sum::<f64>() / q as f64,
        xbar,
        ybar,
        xtx,
        xbtxb,
        xty,
        sum_y_sq,
        within_group_ss,
    }
}

/// `(group_penalty, residual_sum)` by direct loops.
pub fn naive_stats(s: &ChainState, data: &MixedModelData) -> (f64, f64) {
    let sq = (data.q() as f64).sqrt();
    let mut gp = 0.0;
    let mut rs = 0.0;
    for i in 0..data.q() {
        gp += (s.eta[i] - s.eta0 / sq).powi(2);
        for (y, x) in rows(data, i) {
            let fit: f64 = x.iter().zip(&s.eta00).map(|(a, b)| a * b / sq).sum();
            rs += (y - fit - s.eta[i]).powi(2);
        }
    }
    (gp, rs)
}

/// Drift function term by term, with every sum written out.
pub fn naive_v(s: &ChainState, data: &MixedModelData) -> f64 {
    let q = data.q() as f64;
    let n = data.n() as f64;
    let nd = naive_design(data);
    let sq = q.sqrt();
    let mut t1 = 0.0;
    let mut t3 = 0.0;
    for i in 0..data.q() {
        let rs = rows(data, i);
        for (_, x) in &rs {
            let fit: f64 = x.iter().zip(&s.eta00).map(|(a, b)| a * b / sq).sum();
            t1 += (nd.ybar_grand - fit).powi(2);
        }
        t3 += rs.len() as f64 * (s.eta[i] + nd.ybar_grand - nd.ybar[i]).powi(2);
    }
    t1 / n + s.eta0 * s.eta0 / q + t3 / n
}

/// Dense `N × N` matrix `M` built entry by entry.
pub fn naive_m(lambda: f64, tau: f64, sizes: &[usize]) -> DMatrix<f64> {
    let mut c = Vec::new();
    for &r in sizes {
        for _ in 0..r {
            c.push(r as f64 * tau / (lambda + r as f64 * tau));
        }
    }
    let n = c.len();
    let denom: f64 = c.iter().map(|ci| 1.0 - ci).sum();
    DMatrix::from_fn(n, n, |a, b| {
        let d = if a == b { c[a] } else { 0.0 };
        d + (1.0 - c[a]) * (1.0 - c[b]) / denom
    })
}

/// `X`, `X̄`, `Y`, `Ȳ` as dense arrays.
pub fn dense_arrays(data: &MixedModelData) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let (n, p) = (data.n(), data.p());
    let nd = naive_design(data);
    let mut x = DMatrix::zeros(n, p);
    let mut xb = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let mut yb = DVector::zeros(n);
    let mut k = 0;
    for i in 0..data.q() {
        for (yy, xx) in rows(data, i) {
            for a in 0..p {
                x[(k, a)] = xx[a];
                xb[(k, a)] = nd.xbar[i][a];
            }
            y[k] = yy;
            yb[k] = nd.ybar[i];
            k += 1;
        }
    }
    (x, xb, y, yb)
}

pub struct DenseConstants {
    pub xmx: DMatrix<f64>,
    pub xmy: DVector<f64>,
    pub q_mat: DMatrix<f64>,
    pub v: DVector<f64>,
}

pub fn dense_constants(lambda: f64, tau: f64, data: &MixedModelData) -> DenseConstants {
    let m = naive_m(lambda, tau, data.group_sizes());
    let (x, xb, y, yb) = dense_arrays(data);
    let xmx = xb.transpose() * &m * &xb;
    let xmy = xb.transpose() * &m * &yb;
    let q_mat = (x.transpose() * &x - &xmx).try_inverse().unwrap();
    let v = &q_mat * (x.transpose() * &y - &xmy) * (data.q() as f64).sqrt();
    DenseConstants { xmx, xmy, q_mat, v }
}

/// The full conditional of `η = (η₀₀, η₀, η₁..η_q)` given `(λ, τ)` from the
/// joint density alone: the exponent is `−τ/2 ‖y − Aη‖² − λ/2 ‖Bη‖²`, so the
/// conditional is normal with precision `H = τAᵀA + λBᵀB` and mean
/// `H⁻¹ τ Aᵀy`.
pub struct GaussianConditional {
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianConditional {
    pub fn new(lambda: f64, tau: f64, data: &MixedModelData) -> Self {
        let (n, p, q) = (data.n(), data.p(), data.q());
        let sq = (q as f64).sqrt();
        let d = p + 1 + q;
        let mut a = DMatrix::zeros(n, d);
        let mut y = DVector::zeros(n);
        let mut k = 0;
        for i in 0..q {
            for (yy, xx) in rows(data, i) {
                for c in 0..p {
                    a[(k, c)] = xx[c] / sq;
                }
                a[(k, p + 1 + i)] = 1.0;
                y[k] = yy;
                k += 1;
            }
        }
        let mut b = DMatrix::zeros(q, d);
        for i in 0..q {
            b[(i, p)] = -1.0 / sq;
            b[(i, p + 1 + i)] = 1.0;
        }
        let precision = a.transpose() * &a * tau + b.transpose() * &b * lambda;
        let cov = precision.clone().try_inverse().unwrap();
        let mean = &cov * (a.transpose() * y * tau);
        Self { mean, precision, cov }
    }

    pub fn log_density(&self, s: &ChainState) -> f64 {
        let x = DVector::from_vec(s.to_vec());
        let d = &x - &self.mean;
        let quad = d.dot(&(&self.precision * &d));
        let logdet = self.precision.clone().cholesky().unwrap().l().diagonal().iter().map(|v| 2.0 * v.ln()).sum::<f64>();
        -0.5 * quad + 0.5 * logdet - 0.5 * d.len() as f64 * (2.0 * std::f64::consts::PI).ln()
    }

    pub fn mean_state(&self, p: usize, q: usize) -> ChainState {
        ChainState::from_slice(p, q, self.mean.as_slice()).unwrap()
    }
}

/// Log joint from scratch: prior kernels, random-effect density and
/// likelihood, without normalizing constants.
pub fn naive_log_joint(s: &ChainState, lambda: f64, tau: f64, data: &MixedModelData, h: &Hyperparameters) -> f64 {
    let (gp, rs) = naive_stats(s, data);
    let q = data.q() as f64;
    let n = data.n() as f64;
    (h.a1 - 1.0) * lambda.ln() - h.b1 * lambda + (h.a2 - 1.0) * tau.ln() - h.b2 * tau + 0.5 * q * lambda.ln()
        - 0.5 * lambda * gp
        + 0.5 * n * tau.ln()
        - 0.5 * tau * rs
}

/// Random-walk Metropolis on `(η, ln λ, ln τ)` with the log-Jacobian added.
/// Proposal scales adapt toward a 0.3 acceptance rate during burn-in only.
pub struct RwmOutput {
    pub eta0: Vec<f64>,
    pub lambda: Vec<f64>,
    pub tau: Vec<f64>,
    pub acceptance: f64,
}

pub fn rwm<R: Rng + ?Sized>(
    data: &MixedModelData,
    h: &Hyperparameters,
    n: usize,
    burn_in: usize,
    rng: &mut R,
) -> RwmOutput {
    let (p, q) = (data.p(), data.q());
    let d = p + q + 3;
    let target = |x: &[f64]| {
        let s = ChainState::from_slice(p, q, &x[..p + q + 1]).unwrap();
        let (ll, lt) = (x[d - 2], x[d - 1]);
        naive_log_joint(&s, ll.exp(), lt.exp(), data, h) + ll + lt
    };
    let mut x = vec![0.0; d];
    let mut fx = target(&x);
    let mut scale = vec![0.5; d];
    let mut acc_win = vec![0usize; d];
    let mut out = RwmOutput {
        eta0: Vec::with_capacity(n),
        lambda: Vec::with_capacity(n),
        tau: Vec::with_capacity(n),
        acceptance: 0.0,
    };
    let mut accepted = 0usize;
    let mut proposals = 0usize;
    // Component-wise updates: one sweep per retained draw.
    for it in 0..burn_in + n {
        for k in 0..d {
            let old = x[k];
            x[k] = old + scale[k] * normal(rng);
            let fy = target(&x);
            if rng.random::<f64>().ln() < fy - fx {
                fx = fy;
                acc_win[k] += 1;
                if it >= burn_in {
                    accepted += 1;
                }
            } else {
                x[k] = old;
            }
            if it >= burn_in {
                proposals += 1;
            }
        }
        if it < burn_in && (it + 1) % 100 == 0 {
            for k in 0..d {
                let rate = acc_win[k] as f64 / 100.0;
                scale[k] *= ((rate - 0.3) * 2.0).exp();
                acc_win[k] = 0;
            }
        }
        if it >= burn_in {
            out.eta0.push(x[p]);
            out.lambda.push(x[d - 2].exp());
            out.tau.push(x[d - 1].exp());
        }
    }
    out.acceptance = accepted as f64 / proposals.max(1) as f64;
    out
}

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// Gamma(α, β) density, shape/rate.
pub fn gamma_pdf(x: f64, alpha: f64, beta: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (alpha * beta.ln() + (alpha - 1.0) * x.ln() - beta * x - ln_gamma(alpha)).exp()
}

/// `ln Γ(z)` via upward recurrence to `z ≥ 10` then Stirling's series.
pub fn ln_gamma(z: f64) -> f64 {
    let mut shift = 0.0;
    let mut z = z;
    while z < 10.0 {
        shift -= z.ln();
        z += 1.0;
    }
    let z2 = z * z;
    let series = 1.0 / (12.0 * z) - 1.0 / (360.0 * z * z2) + 1.0 / (1260.0 * z2 * z2 * z) - 1.0 / (1680.0 * z2 * z2 * z2 * z);
    shift + (z - 0.5) * z.ln() - z + 0.5 * (2.0 * std::f64::consts::PI).ln() + series
}

/// `∫|Gamma(α, β) − Gamma(α, β′)|` by Simpson's rule in `u = ln x`.
pub fn gamma_l1_quadrature(alpha: f64, beta: f64, beta_prime: f64) -> f64 {
    let b = beta.min(beta_prime);
    let lo = (1e-40 / b).ln();
    let hi = ((alpha + 40.0 * alpha.sqrt() + 40.0) / b).ln();
    let f = |u: f64| {
        let x = u.exp();
        (gamma_pdf(x, alpha, beta) - gamma_pdf(x, alpha, beta_prime)).abs() * x
    };
    if beta == beta_prime {
        return 0.0;
    }
    // |f - g| has a kink where the densities cross; integrate each side separately.
    let cross = (alpha * (beta_prime / beta).ln() / (beta_prime - beta)).ln();
    if cross > lo && cross < hi {
        simpson(f, lo, cross, 200_000) + simpson(f, cross, hi, 200_000)
    } else {
        simpson(f, lo, hi, 200_000)
    }
}

/// Batch-means standard error of the mean with `√n` batches.
pub fn batch_se(x: &[f64]) -> f64 {
    let b = (x.len() as f64).sqrt() as usize;
    let m = x.len() / b;
    let means: Vec<f64> = (0..b).map(|k| x[k * m..(k + 1) * m].iter().sum::<f64>() / m as f64).collect();
    let mu = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

pub fn mat_rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (a - b).abs().max() / (1.0 + scale)
}

pub fn vec_rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (a - b).abs().max() / (1.0 + scale)
}
