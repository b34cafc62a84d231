//! Small dense linear algebra and numerical inequality verifiers.
//!
//! The dense constructions here (`dense_m`, `dense_design`) exist to certify
//! the structured kernel path and refuse to build anything larger than a cap.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::MixedModelData;

/// Default row cap for the dense test-only constructions.
pub const DENSE_CAP: usize = 512;

/// Eigenvalues of a symmetric matrix (only the lower triangle is trusted).
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> DVector<f64> {
    let sym = symmetrize(a);
    nalgebra::SymmetricEigen::new(sym).eigenvalues
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(a).min()
}

pub fn max_eigenvalue(a: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(a).max()
}

fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn asymmetry(a: &DMatrix<f64>) -> f64 {
    max_abs(&(a - a.transpose()))
}

fn check_symmetric(a: &DMatrix<f64>, rel_tol: f64) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Shape(format!("{}×{} matrix is not square", a.nrows(), a.ncols())));
    }
    let asym = asymmetry(a);
    if asym > rel_tol * (1.0 + max_abs(a)) {
        return Err(Error::Asymmetric(asym));
    }
    Ok(())
}

/// A symmetric positive definite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

impl SpdMatrix {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&a, 1e-12)?;
        let a = symmetrize(&a);
        let lmin = min_eigenvalue(&a);
        if !(lmin > 0.0) {
            return Err(Error::NotSpd { min_eigenvalue: lmin });
        }
        Ok(Self(a))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// The unique symmetric positive definite square root.
pub fn spd_sqrt(a: &SpdMatrix) -> SpdMatrix {
    let eig = nalgebra::SymmetricEigen::new(a.0.clone());
    let roots = eig.eigenvalues.map(f64::sqrt);
    let b = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    SpdMatrix(symmetrize(&b))
}

/// Checks `a ≼ b`: `λ_min(b − a) ≥ −tol·(1 + largest |entry|)`.
pub fn psd_dominates(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Result<bool> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    check_symmetric(a, 1e-10)?;
    check_symmetric(b, 1e-10)?;
    let scale = 1.0 + max_abs(a).max(max_abs(b));
    Ok(min_eigenvalue(&(b - a)) >= -tol * scale)
}

/// Explicit `N × N` matrix `M = D_c + (I−D_c)11ᵀ(I−D_c) / 1ᵀ(I−D_c)1` with
/// `c_i = r_iτ/(λ + r_iτ)` repeated over each group's rows.
pub fn dense_m(lambda: f64, tau: f64, group_sizes: &[usize], cap: usize) -> Result<DMatrix<f64>> {
    let n: usize = group_sizes.iter().sum();
    if n > cap {
        return Err(Error::CapExceeded {
            what: "N for dense M",
            size: n,
            cap,
        });
    }
    let mut one_minus_c = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    for &r in group_sizes {
        let t = lambda + r as f64 * tau;
        for _ in 0..r {
            c.push(r as f64 * tau / t);
            one_minus_c.push(lambda / t);
        }
    }
    let u = DVector::from_vec(one_minus_c);
    let denom = u.sum();
    let mut m = &u * u.transpose() / denom;
    for k in 0..n {
        m[(k, k)] += c[k];
    }
    Ok(m)
}

/// Dense `(X, X̄, Y, Ȳ)` for data sets under the row cap.
pub struct DenseDesign {
    pub x: DMatrix<f64>,
    pub xbar: DMatrix<f64>,
    pub y: DVector<f64>,
    pub ybar: DVector<f64>,
}

pub fn dense_design(data: &MixedModelData, cap: usize) -> Result<DenseDesign> {
    let (n, p) = (data.n(), data.p());
    if n > cap {
        return Err(Error::CapExceeded {
            what: "N for dense design",
            size: n,
            cap,
        });
    }
    let x = DMatrix::from_row_slice(n, p, data.x());
    let y = DVector::from_column_slice(data.y());
    let mut xbar = DMatrix::zeros(n, p);
    let mut ybar = DVector::zeros(n);
    let mut row = 0;
    for i in 0..data.q() {
        let (yg, xg) = data.group(i);
        let r = yg.len();
        let ym = yg.iter().sum::<f64>() / r as f64;
        let mut xm = vec![0.0; p];
        for j in 0..r {
            for k in 0..p {
                xm[k] += xg[j * p + k] / r as f64;
            }
        }
        for _ in 0..r {
            ybar[row] = ym;
            for k in 0..p {
                xbar[(row, k)] = xm[k];
            }
            row += 1;
        }
    }
    Ok(DenseDesign { x, xbar, y, ybar })
}

/// Finite-difference check of the square-root derivative bound
///
/// ```text
/// λ_max{(dA^{1/2}/dx)²} ≤ λ_max{(dA/dx)²} / (4 λ_min(A))
/// ```
///
/// along the path `family`. Both derivatives are central differences with step
/// `h`. Returns `(lhs, rhs)`; callers allow `lhs ≤ rhs·(1 + ε_h)`.
pub fn sqrt_derivative_bound_check<F>(family: F, x: f64, h: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    let plus = SpdMatrix::new(family(x + h))?;
    let minus = SpdMatrix::new(family(x - h))?;
    let mid = SpdMatrix::new(family(x))?;

    let d_root = (spd_sqrt(&plus).into_inner() - spd_sqrt(&minus).into_inner()) / (2.0 * h);
    let d_a = (plus.into_inner() - minus.into_inner()) / (2.0 * h);

    // Both derivatives are symmetric, so λ_max of the square is the largest
    // squared eigenvalue.
    let sq_max = |m: &DMatrix<f64>| symmetric_eigenvalues(m).iter().fold(0.0f64, |acc, v| acc.max(v * v));
    let lhs = sq_max(&d_root);
    let rhs = sq_max(&d_a) / (4.0 * min_eigenvalue(mid.matrix()));
    Ok((lhs, rhs))
}
