use nalgebra::{DMatrix, DVector};

use super::MixedModelData;

/// Group-level and `p`-dimensional aggregates of the data.
///
/// The `N × p` matrix `X̄` and the `N`-vector `Ȳ` are never formed; only
/// the per-group means and their weighted cross products are kept.
#[derive(Clone, Debug)]
pub struct DerivedDesign {
    pub q: usize,
    pub p: usize,
    pub n: usize,
    pub group_sizes: Vec<usize>,
    /// `r̄ = N / q`.
    pub r_bar: f64,
    pub r_min: usize,
    pub r_max: usize,
    /// Group covariate means `x̄_i`.
    pub xbar: Vec<DVector<f64>>,
    /// Group response means `ȳ_i`.
    pub ybar: Vec<f64>,
    /// Grand mean of group means, `ȳ = q⁻¹ Σ ȳ_i`.
    pub ybar_grand: f64,
    /// `XᵀX`.
    pub xtx: DMatrix<f64>,
    /// `X̄ᵀX̄ = Σ r_i x̄_i x̄_iᵀ`.
    pub xbtxb: DMatrix<f64>,
    /// `XᵀY`.
    pub xty: DVector<f64>,
    /// `Xᵀ1 = Σ r_i x̄_i`.
    pub x_sum: DVector<f64>,
    /// `Σ_ij y_ij²`.
    pub sum_y_sq: f64,
    /// `Σ_ij (y_ij − ȳ_i)²`.
    pub within_group_ss: f64,
    /// Within-group scatter `Σ_ij (x_ij − x̄_i)(x_ij − x̄_i)ᵀ = XᵀX − X̄ᵀX̄`,
    /// accumulated from centered rows.
    pub within_xx: DMatrix<f64>,
    /// `Σ_ij (x_ij − x̄_i)(y_ij − ȳ_i) = XᵀY − X̄ᵀȲ`.
    pub within_xy: DVector<f64>,
    /// Distinct group sizes, ascending.
    pub size_classes: Vec<usize>,
    /// Index into `size_classes` for each group.
    pub class_of: Vec<usize>,
}

impl DerivedDesign {
    /// Computes every aggregate; each group's rows are visited twice (means,
    /// then centered scatter) while they are hot in cache.
    pub fn build(data: &MixedModelData) -> Self {
        let (q, p, n) = (data.q(), data.p(), data.n());
        let mut xbar = Vec::with_capacity(q);
        let mut ybar = Vec::with_capacity(q);
        let mut xtx = DMatrix::zeros(p, p);
        let mut xbtxb = DMatrix::zeros(p, p);
        let mut xty = DVector::zeros(p);
        let mut x_sum = DVector::zeros(p);
        let mut within_xx = DMatrix::zeros(p, p);
        let mut within_xy = DVector::zeros(p);
        let mut sum_y_sq = 0.0;
        let mut within_group_ss = 0.0;

        let mut centered = vec![0.0; p];
        for i in 0..q {
            let (y, x) = data.group(i);
            let r = y.len();
            let rf = r as f64;

            let mut xm = DVector::zeros(p);
            let mut ym = 0.0;
            for (j, &yij) in y.iter().enumerate() {
                let row = &x[j * p..(j + 1) * p];
                for k in 0..p {
                    xm[k] += row[k];
                }
                ym += yij;
            }
            xm /= rf;
            ym /= rf;

            for (j, &yij) in y.iter().enumerate() {
                let row = &x[j * p..(j + 1) * p];
                let dy = yij - ym;
                for k in 0..p {
                    centered[k] = row[k] - xm[k];
                }
                for a in 0..p {
                    within_xy[a] += centered[a] * dy;
                    xty[a] += row[a] * yij;
                    x_sum[a] += row[a];
                    for b in 0..=a {
                        within_xx[(a, b)] += centered[a] * centered[b];
                        xtx[(a, b)] += row[a] * row[b];
                    }
                }
                sum_y_sq += yij * yij;
                within_group_ss += dy * dy;
            }
            for a in 0..p {
                for b in 0..=a {
                    xbtxb[(a, b)] += rf * xm[a] * xm[b];
                }
            }
            xbar.push(xm);
            ybar.push(ym);
        }
        for m in [&mut xtx, &mut xbtxb, &mut within_xx] {
            for a in 0..p {
                for b in 0..a {
                    m[(b, a)] = m[(a, b)];
                }
            }
        }

        let sizes = data.group_sizes().to_vec();
        let mut size_classes = sizes.clone();
        size_classes.sort_unstable();
        size_classes.dedup();
        let class_of = sizes
            .iter()
            .map(|r| size_classes.binary_search(r).unwrap())
            .collect();

        let ybar_grand = ybar.iter().sum::<f64>() / q as f64;
        Self {
            q,
            p,
            n,
            r_bar: n as f64 / q as f64,
            r_min: *sizes.iter().min().unwrap(),
            r_max: *sizes.iter().max().unwrap(),
            group_sizes: sizes,
            xbar,
            ybar,
            ybar_grand,
            xtx,
            xbtxb,
            xty,
            x_sum,
            sum_y_sq,
            within_group_ss,
            within_xx,
            within_xy,
            size_classes,
            class_of,
        }
    }

    pub fn sqrt_q(&self) -> f64 {
        (self.q as f64).sqrt()
    }
}
