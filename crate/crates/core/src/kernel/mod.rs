//! The η-marginal Gibbs transition.
//!
//! One transition draws `(λ, τ)` given `η` and then `η₀₀ → η₀ → η₁..η_q`
//! from their sequential conditionals. Writing every variate as a function of
//! a [`NoiseDraw`] turns the transition into a deterministic map
//! `f(η) = η̃(η; noise)`, which is what the coupling estimators share between
//! two chains.

mod constants;
mod density;
pub mod trajectory;

pub use constants::{gibbs_constants, GibbsConstants};
pub use density::{log_pi1, log_pi2};

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChainState, DerivedDesign, Hyperparameters, Model};

/// Every variate one transition consumes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseDraw {
    pub n00: Vec<f64>,
    pub n0: f64,
    pub ni: Vec<f64>,
    /// `Gamma(q/2 + a1, 1)`.
    pub j1: f64,
    /// `Gamma(N/2 + a2, 1)`.
    pub j2: f64,
}

impl NoiseDraw {
    /// Draws in the fixed order `j1, j2, n00, n0, n1..nq`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, p: usize, q: usize, n: usize, hyper: &Hyperparameters) -> Self {
        let g1 = Gamma::new(q as f64 / 2.0 + hyper.a1, 1.0).expect("positive shape");
        let g2 = Gamma::new(n as f64 / 2.0 + hyper.a2, 1.0).expect("positive shape");
        let j1 = g1.sample(rng);
        let j2 = g2.sample(rng);
        let n00 = (0..p).map(|_| StandardNormal.sample(rng)).collect();
        let n0 = StandardNormal.sample(rng);
        let ni = (0..q).map(|_| StandardNormal.sample(rng)).collect();
        Self { n00, n0, ni, j1, j2 }
    }

    pub fn zeros(p: usize, q: usize, j1: f64, j2: f64) -> Self {
        Self {
            n00: vec![0.0; p],
            n0: 0.0,
            ni: vec![0.0; q],
            j1,
            j2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionPair {
    pub lambda: f64,
    pub tau: f64,
}

/// Output of one transition: the new state and the precisions that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: ChainState,
    pub precisions: PrecisionPair,
}

/// `λ = j1 / (b1 + group_penalty/2)`, `τ = j2 / (b2 + residual_sum/2)`.
pub fn precisions_from_noise(
    group_penalty: f64,
    residual_sum: f64,
    hyper: &Hyperparameters,
    j1: f64,
    j2: f64,
) -> Result<PrecisionPair> {
    if !(j1 > 0.0 && j2 > 0.0) {
        return Err(Error::Domain(format!("gamma variates must be positive, got j1 = {j1}, j2 = {j2}")));
    }
    let r1 = hyper.b1 + 0.5 * group_penalty;
    let r2 = hyper.b2 + 0.5 * residual_sum;
    if !r1.is_finite() || !r2.is_finite() {
        return Err(Error::Overflow(format!(
            "gamma rates are not finite (b1 + penalty/2 = {r1}, b2 + residual/2 = {r2})"
        )));
    }
    let lambda = j1 / r1;
    let tau = j2 / r2;
    if !(lambda > 0.0 && lambda.is_finite() && tau > 0.0 && tau.is_finite()) {
        return Err(Error::Overflow(format!("precisions out of range: λ = {lambda}, τ = {tau}")));
    }
    Ok(PrecisionPair { lambda, tau })
}

/// Conditional mean of `η₀` given `η₀₀`, its variance, and the residuals
/// `d_i = ȳ_i − x̄_iᵀη₀₀/√q`.
pub(crate) fn eta0_conditional(consts: &GibbsConstants, design: &DerivedDesign, eta00: &[f64]) -> (f64, f64, Vec<f64>) {
    let sq = design.sqrt_q();
    let d: Vec<f64> = design
        .xbar
        .iter()
        .zip(&design.ybar)
        .map(|(xb, yb)| yb - xb.iter().zip(eta00).map(|(a, b)| a * b).sum::<f64>() / sq)
        .collect();
    let num: f64 = d.iter().zip(&consts.z).map(|(di, zi)| di / zi).sum();
    let mean = sq * num / consts.sum_inv_z;
    let var = design.q as f64 / consts.sum_inv_z;
    (mean, var, d)
}

/// Steps 3-5 of the transition as a deterministic function of the noise.
///
/// `η₀₀ = v + √(q/τ) L⁻ᵀ n00` where `LLᵀ = Q⁻¹`, so `L⁻ᵀ` is a square root
/// of `Q`.
pub fn eta_from_noise(consts: &GibbsConstants, design: &DerivedDesign, noise: &NoiseDraw) -> ChainState {
    let q = design.q;
    let sq = design.sqrt_q();
    // L⁻ᵀ n00: solve Lᵀ u = n00 reading only the lower triangle.
    let mut z = nalgebra::DVector::from_column_slice(&noise.n00);
    let ok = consts.chol.l_dirty().tr_solve_lower_triangular_mut(&mut z);
    debug_assert!(ok);
    let scale = (q as f64 / consts.tau).sqrt();
    let eta00: Vec<f64> = consts.v.iter().zip(z.iter()).map(|(v, u)| v + scale * u).collect();

    let (mean0, var0, d) = eta0_conditional(consts, design, &eta00);
    let eta0 = mean0 + var0.sqrt() * noise.n0;

    let lam = consts.lambda;
    let eta = (0..q)
        .map(|i| {
            let t = consts.t[i];
            (lam / t) * eta0 / sq + consts.c[i] * d[i] + noise.ni[i] / t.sqrt()
        })
        .collect();
    ChainState { eta00, eta0, eta }
}

/// The random mapping `f(η)` for one noise draw.
pub fn random_map_step(state: &ChainState, noise: &NoiseDraw, model: &Model) -> Result<Step> {
    state.check_shape(model.p(), model.q())?;
    check_noise(noise, model)?;
    let s = model.sufficient_stats(state);
    let pp = precisions_from_noise(s.group_penalty, s.residual_sum, &model.hyper, noise.j1, noise.j2)?;
    let consts = gibbs_constants(pp.lambda, pp.tau, &model.design)?;
    Ok(Step {
        state: eta_from_noise(&consts, &model.design, noise),
        precisions: pp,
    })
}

pub fn random_map(state: &ChainState, noise: &NoiseDraw, model: &Model) -> Result<ChainState> {
    random_map_step(state, noise, model).map(|s| s.state)
}

fn check_noise(noise: &NoiseDraw, model: &Model) -> Result<()> {
    if noise.n00.len() != model.p() || noise.ni.len() != model.q() {
        return Err(Error::Shape(format!(
            "noise has (p, q) = ({}, {}), model has ({}, {})",
            noise.n00.len(),
            noise.ni.len(),
            model.p(),
            model.q()
        )));
    }
    Ok(())
}

/// One Gibbs transition. Consumes exactly `2 + p + 1 + q` variates from `rng`
/// (two gammas, then `p + 1 + q` standard normals).
pub fn transition_step<R: Rng + ?Sized>(state: &ChainState, model: &Model, rng: &mut R) -> Result<Step> {
    let noise = NoiseDraw::sample(rng, model.p(), model.q(), model.n(), &model.hyper);
    random_map_step(state, &noise, model)
}

pub fn transition<R: Rng + ?Sized>(state: &ChainState, model: &Model, rng: &mut R) -> Result<ChainState> {
    transition_step(state, model, rng).map(|s| s.state)
}
