use nalgebra::DVector;

use super::{ChainState, DerivedDesign, Hyperparameters, MixedModelData};
use crate::error::{Error, Result};

/// Sums of squares that drive the precision draws.
///
/// Plain sums: no ½ factor and no prior rate. Consumers apply both.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SufficientStats {
    /// `Σ_i (η_i − η₀/√q)²`.
    pub group_penalty: f64,
    /// `Σ_ij (y_ij − x_ijᵀη₀₀/√q − η_i)²`.
    pub residual_sum: f64,
}

/// Computes both statistics; the residual sum is a single pass over the `N`
/// rows and is the only `O(N)` work in a transition.
pub fn sufficient_stats(state: &ChainState, data: &MixedModelData) -> SufficientStats {
    let p = data.p();
    let sq = (data.q() as f64).sqrt();
    let mu = state.eta0 / sq;
    let group_penalty = state.eta.iter().map(|&e| (e - mu) * (e - mu)).sum();

    let w: Vec<f64> = state.eta00.iter().map(|v| v / sq).collect();
    let mut residual_sum = 0.0;
    for (i, &eta_i) in state.eta.iter().enumerate() {
        let (y, x) = data.group(i);
        let mut acc = 0.0;
        for (yij, row) in y.iter().zip(x.chunks_exact(p)) {
            let fit: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum();
            let e = yij - fit - eta_i;
            acc += e * e;
        }
        residual_sum += acc;
    }
    SufficientStats {
        group_penalty,
        residual_sum,
    }
}

/// Drift function
///
/// ```text
/// V(η) = (r̄q)⁻¹ Σ_ij (ȳ − x_ijᵀη₀₀/√q)² + η₀²/q + (r̄q)⁻¹ Σ_i r_i (η_i + ȳ − ȳ_i)²
/// ```
///
/// The first term is expanded through `XᵀX` and `Xᵀ1`, so evaluation costs
/// `O(p² + q)`.
pub fn drift_v(state: &ChainState, design: &DerivedDesign) -> f64 {
    let n = design.n as f64;
    let sq = design.sqrt_q();
    let w = DVector::from_iterator(design.p, state.eta00.iter().map(|v| v / sq));
    let yb = design.ybar_grand;
    let quad = w.dot(&(&design.xtx * &w));
    let t1 = (n * yb * yb - 2.0 * yb * design.x_sum.dot(&w) + quad) / n;
    let t2 = state.eta0 * state.eta0 / design.q as f64;
    let t3 = state
        .eta
        .iter()
        .zip(&design.ybar)
        .zip(&design.group_sizes)
        .map(|((&e, &ybi), &r)| {
            let d = e + yb - ybi;
            r as f64 * d * d
        })
        .sum::<f64>()
        / n;
    t1.max(0.0) + t2 + t3
}

/// Minimizer of [`drift_v`]: `η₀ = 0`, `η_i = ȳ_i − ȳ`, and `η₀₀/√q` the
/// least-squares fit of the constant `ȳ` on `X`.
pub fn drift_center(design: &DerivedDesign) -> ChainState {
    let sq = design.sqrt_q();
    let rhs = &design.x_sum * design.ybar_grand;
    let w = match design.xtx.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => DVector::zeros(design.p),
    };
    ChainState {
        eta00: w.iter().map(|v| v * sq).collect(),
        eta0: 0.0,
        eta: design.ybar.iter().map(|y| y - design.ybar_grand).collect(),
    }
}

/// Log of the joint posterior density of `(η, λ, τ)` up to an additive
/// constant:
///
/// ```text
/// (q/2 + a1 − 1) log λ − b1 λ + (N/2 + a2 − 1) log τ − b2 τ
///     − (λ/2)·group_penalty − (τ/2)·residual_sum
/// ```
pub fn log_unnormalized_joint(
    state: &ChainState,
    lambda: f64,
    tau: f64,
    data: &MixedModelData,
    hyper: &Hyperparameters,
) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) || !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("precisions must be positive, got λ = {lambda}, τ = {tau}")));
    }
    state.check_shape(data.p(), data.q())?;
    let s = sufficient_stats(state, data);
    let q = data.q() as f64;
    let n = data.n() as f64;
    Ok((q / 2.0 + hyper.a1 - 1.0) * lambda.ln() - hyper.b1 * lambda + (n / 2.0 + hyper.a2 - 1.0) * tau.ln()
        - hyper.b2 * tau
        - 0.5 * lambda * s.group_penalty
        - 0.5 * tau * s.residual_sum)
}
