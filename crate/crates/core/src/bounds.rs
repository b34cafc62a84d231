//! Explicit rate and bound formulas.
//!
//! Given drift constants `(ζ, L)`, contraction factors `(γ, γ₀)` and the
//! threshold `ξ`, the Wasserstein distance to stationarity decays at rate
//!
//! ```text
//! ρ_a = [γ^a (2L+1)^{1−a}] ∨ [γ₀^a ((ζξ+2L+1)/(ξ+1))^{1−a}]
//! ```
//!
//! for any `a` in an admissible interval. A kernel Lipschitz constant then
//! converts the Wasserstein bound into a total-variation bound one step later.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::model::{ChainState, Model};

/// Points in the initial grid search over `a`.
pub const RATE_GRID: usize = 1024;
/// Golden-section tolerance on `a`.
pub const RATE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateInputs {
    pub zeta: f64,
    pub l: f64,
    pub gamma: f64,
    pub gamma0: f64,
    pub xi: f64,
    /// Constant `c` in `‖x − y‖ ≤ c (V(x) + V(y) + 1)`, before the factor `q`.
    pub c_norm: f64,
    /// When set, the report also evaluates the asymptotic choice
    /// `a < 2δ/(3 + 2δ)`.
    #[serde(default)]
    pub delta: Option<f64>,
}

impl RateInputs {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidRateInputs(m));
        let all = [self.zeta, self.l, self.gamma, self.gamma0, self.xi, self.c_norm];
        if all.iter().any(|v| !v.is_finite()) {
            return bad(format!("non-finite input in {self:?}"));
        }
        if !(0.0..1.0).contains(&self.zeta) {
            return bad(format!("ζ = {} must lie in [0, 1)", self.zeta));
        }
        if self.l < 0.0 {
            return bad(format!("L = {} must be ≥ 0", self.l));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("γ = {} must lie in [0, 1)", self.gamma));
        }
        if self.gamma0 < self.gamma {
            return bad(format!("γ₀ = {} must be ≥ γ = {}", self.gamma0, self.gamma));
        }
        let xi_min = 2.0 * self.l / (1.0 - self.zeta);
        if self.xi <= xi_min {
            return bad(format!("ξ = {} must exceed 2L/(1−ζ) = {xi_min}", self.xi));
        }
        if self.c_norm <= 0.0 {
            return bad(format!("c = {} must be > 0", self.c_norm));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return bad(format!("δ = {d} must be > 0"));
            }
        }
        Ok(())
    }

    /// `ln[(ζξ + 2L + 1)/(ξ + 1)]`.
    fn ln_ratio(&self) -> f64 {
        (self.zeta * self.xi + 2.0 * self.l + 1.0).ln() - (self.xi + 1.0).ln()
    }
}

/// Admissible interval for `a`. `γ = 0` gives `lo = 0` by continuity; with
/// `γ₀ ≤ 1` the upper end is 1.
pub fn a_interval(inp: &RateInputs) -> Result<(f64, f64)> {
    let l2 = (2.0 * inp.l + 1.0).ln();
    let lo = if inp.gamma == 0.0 || l2 == 0.0 {
        0.0
    } else {
        l2 / (l2 - inp.gamma.ln())
    };
    let lr = inp.ln_ratio();
    if lr >= 0.0 {
        return Err(Error::InvalidRateInputs(format!(
            "(ζξ+2L+1)/(ξ+1) = {} ≥ 1; upper end undefined",
            lr.exp()
        )));
    }
    let hi = -lr / (inp.gamma0.max(1.0).ln() - lr);
    Ok((lo, hi))
}

/// `ρ_a`, evaluated as `exp` of the larger log-term.
pub fn rho_a(inp: &RateInputs, a: f64) -> f64 {
    let t1 = log_term(inp.gamma, a) + (1.0 - a) * (2.0 * inp.l + 1.0).ln();
    let t2 = log_term(inp.gamma0, a) + (1.0 - a) * inp.ln_ratio();
    t1.max(t2).exp()
}

/// `a · ln x` with `0 · ln 0 = 0` and `a · ln 0 = −∞` for `a > 0`.
fn log_term(x: f64, a: f64) -> f64 {
    if x == 0.0 {
        if a == 0.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        a * x.ln()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub inputs: RateInputs,
    pub a_lo: f64,
    pub a_hi: f64,
    pub a3_holds: bool,
    pub a_star: Option<f64>,
    pub rho: Option<f64>,
    /// Midpoint of `(a_lo, min(a_hi, 2δ/(3+2δ)))` when `δ` was given and the
    /// interval is non-empty.
    pub proof_a: Option<f64>,
    pub proof_rho: Option<f64>,
}

impl RateReport {
    /// `(c, ζ, L)` for the Wasserstein prefactor.
    pub fn prefactor_terms(&self) -> (f64, f64, f64) {
        (self.inputs.c_norm, self.inputs.zeta, self.inputs.l)
    }
}

/// Checks the admissibility condition and, when it holds, minimizes `ρ_a`
/// over the admissible interval.
pub fn optimize_rate(inp: &RateInputs) -> Result<RateReport> {
    optimize_rate_with_grid(inp, RATE_GRID)
}

pub fn optimize_rate_with_grid(inp: &RateInputs, grid: usize) -> Result<RateReport> {
    inp.validate()?;
    let (lo, hi) = a_interval(inp)?;
    let a3_holds = inp.gamma0 <= 1.0 || lo < hi;
    let mut report = RateReport {
        inputs: *inp,
        a_lo: lo,
        a_hi: hi,
        a3_holds,
        a_star: None,
        rho: None,
        proof_a: None,
        proof_rho: None,
    };
    if !a3_holds || !(lo < hi) {
        return Ok(report);
    }
    let a = minimize_on(|a| rho_a(inp, a), lo, hi, grid);
    report.a_star = Some(a);
    report.rho = Some(rho_a(inp, a));
    if let Some(d) = inp.delta {
        let cap = hi.min(2.0 * d / (3.0 + 2.0 * d));
        if lo < cap {
            let pa = 0.5 * (lo + cap);
            report.proof_a = Some(pa);
            report.proof_rho = Some(rho_a(inp, pa));
        }
    }
    Ok(report)
}

/// Log-uniform grid on the open interval, then golden section between the
/// best grid point's neighbours.
fn minimize_on<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, grid: usize) -> f64 {
    // A zero lower end has no log scale; start the grid a billionth of the
    // width above it.
    let base = if lo > 0.0 { lo } else { hi * 1e-9 };
    let ratio = hi / base;
    let pts: Vec<f64> = (0..grid)
        .map(|k| base * ratio.powf((k as f64 + 0.5) / grid as f64))
        .collect();
    let (best, _) = pts
        .iter()
        .map(|&a| f(a))
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, v)| if v < bv { (i, v) } else { (bi, bv) });
    let mut a = if best == 0 { lo.max(base * 0.5) } else { pts[best - 1] };
    let mut b = if best + 1 == grid { hi } else { pts[best + 1] };
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > RATE_TOL {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (a + b);
    // Never return something worse than the grid found.
    if f(mid) <= f(pts[best]) {
        mid
    } else {
        pts[best]
    }
}

fn check_gamma_params(alpha: f64, beta: f64, beta_prime: f64) -> Result<()> {
    for (n, v) in [("α", alpha), ("β", beta), ("β′", beta_prime)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{n} = {v} must be positive")));
        }
    }
    Ok(())
}

/// Upper bound `2[(β_max/β_min)^α − 1] ∧ 2` on the L¹ distance between
/// `Gamma(α, β)` and `Gamma(α, β′)` (shape/rate).
pub fn gamma_tv_bound(alpha: f64, beta: f64, beta_prime: f64) -> Result<f64> {
    check_gamma_params(alpha, beta, beta_prime)?;
    let r = beta.max(beta_prime) / beta.min(beta_prime);
    Ok((2.0 * (alpha * r.ln()).exp_m1()).min(2.0))
}

/// Exact L¹ distance between `Gamma(α, β)` and `Gamma(α, β′)`.
///
/// The densities cross once at `u = α ln(β′/β)/(β′ − β)`, so the distance is
/// `2[P(α, β′u) − P(α, βu)]` with `P` the regularized lower incomplete gamma
/// function and `β < β′`.
pub fn gamma_l1_distance(alpha: f64, beta: f64, beta_prime: f64) -> Result<f64> {
    check_gamma_params(alpha, beta, beta_prime)?;
    if beta == beta_prime {
        return Ok(0.0);
    }
    let (b0, b1) = if beta < beta_prime { (beta, beta_prime) } else { (beta_prime, beta) };
    let u = alpha * (b1 / b0).ln() / (b1 - b0);
    Ok((2.0 * (gamma_lr(alpha, b1 * u) - gamma_lr(alpha, b0 * u))).clamp(0.0, 2.0))
}

/// `c_const · q · r̄^{3/2}`.
pub fn conversion_scale(q: usize, r_bar: f64, c_const: f64) -> f64 {
    c_const * q as f64 * r_bar.powf(1.5)
}

/// The two gamma-stage L¹ distances between the precision conditionals at
/// `a` and `b`. Their sum bounds `∫|k(a,·) − k(b,·)|`.
pub fn kernel_l1_terms(model: &Model, a: &ChainState, b: &ChainState) -> Result<(f64, f64)> {
    let h = &model.hyper;
    let (sa, sb) = (model.sufficient_stats(a), model.sufficient_stats(b));
    let q = model.q() as f64;
    let n = model.n() as f64;
    let big_a = gamma_l1_distance(q / 2.0 + h.a1, h.b1 + 0.5 * sa.group_penalty, h.b1 + 0.5 * sb.group_penalty)?;
    let big_b = gamma_l1_distance(n / 2.0 + h.a2, h.b2 + 0.5 * sa.residual_sum, h.b2 + 0.5 * sb.residual_sum)?;
    Ok((big_a, big_b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// `max (A + B)/‖η − η′‖ / (q r̄^{3/2})`.
    pub c_const: f64,
    pub max_ratio: f64,
    pub ratios: Vec<f64>,
}

/// Calibrates `c_const` so that `conversion_scale` dominates the observed
/// kernel L¹ ratio on every supplied pair.
pub fn calibrate(model: &Model, pairs: &[(ChainState, ChainState)]) -> Result<Calibration> {
    if pairs.is_empty() {
        return Err(Error::Domain("calibration needs at least one pair".into()));
    }
    let mut ratios = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        let d = a.distance(b);
        if d == 0.0 {
            return Err(Error::Domain("calibration pair has zero distance".into()));
        }
        let (x, y) = kernel_l1_terms(model, a, b)?;
        ratios.push((x + y) / d);
    }
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    let c_const = max_ratio / conversion_scale(model.q(), model.design.r_bar, 1.0);
    Ok(Calibration {
        c_const,
        max_ratio,
        ratios,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvBound {
    pub raw: f64,
    /// `min(raw, 1)`.
    pub clamped: f64,
    /// The cruder `scale · 2cq (V + L₀) ρ^{n−1}`.
    pub simplified: f64,
}

/// Total-variation bound after `n ≥ 2` steps:
///
/// ```text
/// scale · c q · ((ζ+1)V + L + 1)/(1 − ρ) · ρ^{n−1}
/// ```
pub fn assemble_tv_bound(rate: &RateReport, scale: f64, v_eta: f64, l0: f64, n: usize, q: usize) -> Result<TvBound> {
    if n < 2 {
        return Err(Error::Domain(format!("n = {n}: the conversion needs n ≥ 2")));
    }
    let rho = match (rate.a3_holds, rate.rho) {
        (true, Some(r)) => r,
        _ => return Err(Error::InvalidRateInputs("no certified rate: admissibility condition fails".into())),
    };
    let (c, zeta, l) = rate.prefactor_terms();
    let cq = c * q as f64;
    let decay = rho.powi((n - 1) as i32);
    let raw = scale * cq * ((zeta + 1.0) * v_eta + l + 1.0) / (1.0 - rho) * decay;
    let simplified = scale * 2.0 * cq * (v_eta + l0) * decay;
    Ok(TvBound {
        raw,
        clamped: raw.min(1.0),
        simplified,
    })
}
