use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::linalg::min_eigenvalue;
use crate::model::DerivedDesign;

/// Quantities fixed by one `(λ, τ)` pair that define the conditional normal
/// draws of `η`.
///
/// `M` and `D_c` are never formed. `Q = (XᵀX − X̄ᵀMX̄)⁻¹` is kept as the
/// Cholesky factor of its inverse `A = XᵀX − X̄ᵀMX̄`.
#[derive(Clone, Debug)]
pub struct GibbsConstants {
    pub lambda: f64,
    pub tau: f64,
    /// `c_i = r_iτ / t_i`.
    pub c: Vec<f64>,
    /// `t_i = λ + r_iτ`.
    pub t: Vec<f64>,
    /// `z_i = t_i / (r_iλτ)`.
    pub z: Vec<f64>,
    /// `1ᵀ(I − D_c)1 = Σ r_i(1 − c_i)`.
    pub s0: f64,
    /// `X̄ᵀ(I − D_c)1`.
    pub wx: DVector<f64>,
    /// `Ȳᵀ(I − D_c)1`.
    pub wy: f64,
    /// `X̄ᵀMX̄`.
    pub xmx: DMatrix<f64>,
    /// `X̄ᵀMȲ`.
    pub xmy: DVector<f64>,
    /// Cholesky factor of `Q⁻¹`.
    pub chol: Cholesky<f64, Dyn>,
    /// `v = √q · Q(XᵀY − X̄ᵀMȲ)`.
    pub v: DVector<f64>,
    /// `Σ 1/z_i`.
    pub sum_inv_z: f64,
}

impl GibbsConstants {
    /// Dense `Q`; for tests and reports, the sampler never needs it.
    pub fn q_mat(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// `Q⁻¹ = XᵀX − X̄ᵀMX̄`.
    pub fn q_inv(&self) -> DMatrix<f64> {
        let l = self.chol.l();
        &l * l.transpose()
    }

    /// `log det Q`.
    pub fn log_det_q(&self) -> f64 {
        -2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Builds [`GibbsConstants`] in `O(qp² + p³)` from the design aggregates.
///
/// `Q⁻¹` is accumulated in the centered form
/// `W + Σ ω_i (x̄_i − m)(x̄_i − m)ᵀ`, with `W` the within-group scatter,
/// `ω_i = r_i(1 − c_i)` and `m = Σ ω_i x̄_i / Σ ω_i`. This is algebraically
/// `XᵀX − X̄ᵀMX̄` but does not cancel two large Gram matrices against each
/// other.
pub fn gibbs_constants(lambda: f64, tau: f64, design: &DerivedDesign) -> Result<GibbsConstants> {
    if !(lambda > 0.0 && lambda.is_finite()) || !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("precisions must be positive and finite, got λ = {lambda}, τ = {tau}")));
    }
    let (q, p) = (design.q, design.p);

    // Per distinct size, then broadcast.
    let k = design.size_classes.len();
    let mut t_cls = Vec::with_capacity(k);
    let mut c_cls = Vec::with_capacity(k);
    let mut omc_cls = Vec::with_capacity(k);
    let mut z_cls = Vec::with_capacity(k);
    for &r in &design.size_classes {
        let rt = r as f64 * tau;
        let t = lambda + rt;
        t_cls.push(t);
        c_cls.push(rt / t);
        omc_cls.push(lambda / t);
        z_cls.push(t / (rt * lambda));
    }

    let mut c = Vec::with_capacity(q);
    let mut t = Vec::with_capacity(q);
    let mut z = Vec::with_capacity(q);
    let mut omega = Vec::with_capacity(q);
    let mut s0 = 0.0;
    let mut wx = DVector::zeros(p);
    let mut wy = 0.0;
    let mut sum_inv_z = 0.0;
    for i in 0..q {
        let k = design.class_of[i];
        c.push(c_cls[k]);
        t.push(t_cls[k]);
        z.push(z_cls[k]);
        sum_inv_z += 1.0 / z_cls[k];
        let w = design.group_sizes[i] as f64 * omc_cls[k];
        omega.push(w);
        s0 += w;
        wx.axpy(w, &design.xbar[i], 1.0);
        wy += w * design.ybar[i];
    }
    let m = &wx / s0;
    let my = wy / s0;

    let mut a = design.within_xx.clone();
    let mut b = design.within_xy.clone();
    let mut cr_xx = DMatrix::zeros(p, p);
    let mut cr_xy = DVector::zeros(p);
    let mut d = DVector::zeros(p);
    for i in 0..q {
        let xb = &design.xbar[i];
        d.copy_from(xb);
        d -= &m;
        a.ger(omega[i], &d, &d, 1.0);
        b.axpy(omega[i] * (design.ybar[i] - my), &d, 1.0);
        let cr = c[i] * design.group_sizes[i] as f64;
        cr_xx.ger(cr, xb, xb, 1.0);
        cr_xy.axpy(cr * design.ybar[i], xb, 1.0);
    }
    let xmx = cr_xx + &wx * wx.transpose() / s0;
    let xmy = cr_xy + &wx * (wy / s0);

    let chol = match a.clone().cholesky() {
        Some(ch) if ch.l_dirty().diagonal().iter().all(|v| *v > 0.0 && v.is_finite()) => ch,
        _ => {
            return Err(Error::SingularDesign {
                min_eigenvalue: min_eigenvalue(&a),
            })
        }
    };
    let v = chol.solve(&b) * design.sqrt_q();

    Ok(GibbsConstants {
        lambda,
        tau,
        c,
        t,
        z,
        s0,
        wx,
        wy,
        xmx,
        xmy,
        chol,
        v,
        sum_inv_z,
    })
}
