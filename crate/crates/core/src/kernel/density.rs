use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

use super::{eta0_conditional, GibbsConstants};
use crate::error::{Error, Result};
use crate::model::{sufficient_stats, ChainState, DerivedDesign, Hyperparameters, MixedModelData};

fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (2.0 * PI * var).ln() - 0.5 * d * d / var
}

fn gamma_logpdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Normalized log density of `η` given `(λ, τ)`: the `p`-variate normal for
/// `η₀₀`, then `η₀ | η₀₀`, then each `η_i | η₀, η₀₀`.
pub fn log_pi1(eta: &ChainState, consts: &GibbsConstants, design: &DerivedDesign) -> Result<f64> {
    eta.check_shape(design.p, design.q)?;
    let (p, q) = (design.p, design.q);
    let sq = design.sqrt_q();
    let qf = q as f64;

    // (η₀₀ − v)ᵀ ((q/τ)Q)⁻¹ (η₀₀ − v) = (τ/q)‖Lᵀ(η₀₀ − v)‖².
    let diff = nalgebra::DVector::from_iterator(p, eta.eta00.iter().zip(consts.v.iter()).map(|(a, b)| a - b));
    let lt_diff = consts.chol.l().transpose() * &diff;
    let quad = consts.tau / qf * lt_diff.norm_squared();
    let log_det_cov = p as f64 * (qf / consts.tau).ln() + consts.log_det_q();
    let lp00 = -0.5 * (p as f64 * (2.0 * PI).ln() + log_det_cov + quad);

    let (mean0, var0, d) = eta0_conditional(consts, design, &eta.eta00);
    let lp0 = normal_logpdf(eta.eta0, mean0, var0);

    let lam = consts.lambda;
    let lpi: f64 = (0..q)
        .map(|i| {
            let t = consts.t[i];
            let mean = (lam / t) * eta.eta0 / sq + consts.c[i] * d[i];
            normal_logpdf(eta.eta[i], mean, 1.0 / t)
        })
        .sum();
    Ok(lp00 + lp0 + lpi)
}

/// Normalized log density of `(λ, τ)` given `η`: independent gammas with
/// shapes `(q/2 + a1, N/2 + a2)` and rates `(b1 + penalty/2, b2 + residual/2)`.
pub fn log_pi2(lambda: f64, tau: f64, state: &ChainState, data: &MixedModelData, hyper: &Hyperparameters) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) || !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("precisions must be positive, got λ = {lambda}, τ = {tau}")));
    }
    state.check_shape(data.p(), data.q())?;
    let s = sufficient_stats(state, data);
    let q = data.q() as f64;
    let n = data.n() as f64;
    Ok(gamma_logpdf(lambda, q / 2.0 + hyper.a1, hyper.b1 + 0.5 * s.group_penalty)
        + gamma_logpdf(tau, n / 2.0 + hyper.a2, hyper.b2 + 0.5 * s.residual_sum))
}
