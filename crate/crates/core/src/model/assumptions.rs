use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::DerivedDesign;
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigenvalues;

/// Finite-`q` thresholds for the growth-regime assumptions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionThresholds {
    /// Upper bound on `r_max / r_min`.
    pub m_max: f64,
    /// Lower bound on `λ_min[(r̄q)⁻¹(XᵀX − X̄ᵀX̄)]`.
    pub k1_min: f64,
    /// Upper bound on `λ_max[(r̄q)⁻¹XᵀX]`.
    pub k2_max: f64,
    /// Upper bound on `(r̄q)⁻¹ Σ y²`.
    pub ell_max: f64,
    /// Upper bound on `p / q`.
    pub p_over_q_max: f64,
    /// Lower bound on `r̄ / q^{2+δ}`; a finite stand-in for divergence.
    pub growth_min: f64,
}

impl Default for AssumptionThresholds {
    fn default() -> Self {
        Self {
            m_max: 4.0,
            k1_min: 1e-3,
            k2_max: 1e3,
            ell_max: 1e3,
            p_over_q_max: 1.0,
            growth_min: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssumptionFlags {
    pub b1_group_ratio: bool,
    pub b2_design_spectrum: bool,
    pub b3_response_energy: bool,
    pub b4_dimension: bool,
    pub b5_growth: bool,
}

impl AssumptionFlags {
    pub fn all(&self) -> bool {
        self.b1_group_ratio && self.b2_design_spectrum && self.b3_response_energy && self.b4_dimension && self.b5_growth
    }
}

/// Empirical counterparts of the growth-regime constants for one data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub m_hat: f64,
    pub k1_hat: f64,
    pub k2_hat: f64,
    pub ell_hat: f64,
    pub p_over_q: f64,
    pub growth_ratio: f64,
    pub delta: f64,
    pub pass_flags: AssumptionFlags,
    pub thresholds: AssumptionThresholds,
    /// Set when the eigenvalue condition is degenerate (`p ≥ N`).
    pub warning: Option<String>,
}

/// Audits a data set against the growth-regime assumptions. Diagnostic only;
/// nothing here gates sampling.
pub fn check_assumptions(design: &DerivedDesign, delta: f64, thresholds: &AssumptionThresholds) -> Result<AssumptionReport> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!("δ must be positive, got {delta}")));
    }
    let n = design.n as f64;
    let q = design.q as f64;
    let m_hat = design.r_max as f64 / design.r_min as f64;

    let (k1_hat, warning) = if design.p >= design.n {
        (
            0.0,
            Some(format!("p = {} ≥ N = {}: within-group design is rank deficient", design.p, design.n)),
        )
    } else {
        let w: DMatrix<f64> = &design.within_xx / n;
        (symmetric_eigenvalues(&w).min(), None)
    };
    let k2_hat = symmetric_eigenvalues(&(&design.xtx / n)).max();
    let ell_hat = design.sum_y_sq / n;
    let p_over_q = design.p as f64 / q;
    let growth_ratio = design.r_bar / q.powf(2.0 + delta);

    let t = thresholds;
    let pass_flags = AssumptionFlags {
        b1_group_ratio: m_hat <= t.m_max,
        b2_design_spectrum: k1_hat >= t.k1_min && k2_hat <= t.k2_max,
        b3_response_energy: ell_hat <= t.ell_max,
        b4_dimension: p_over_q <= t.p_over_q_max,
        b5_growth: growth_ratio >= t.growth_min,
    };
    Ok(AssumptionReport {
        m_hat,
        k1_hat,
        k2_hat,
        ell_hat,
        p_over_q,
        growth_ratio,
        delta,
        pass_flags,
        thresholds: *thresholds,
        warning,
    })
}
