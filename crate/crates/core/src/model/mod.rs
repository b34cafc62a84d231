//! The linear mixed model: data, design aggregates, posterior pieces.

mod assumptions;
mod dataset;
mod density;
mod design;

pub use assumptions::{check_assumptions, AssumptionFlags, AssumptionReport, AssumptionThresholds};
pub use dataset::{read_csv, read_csv_path, write_csv, write_csv_path};
pub use density::{drift_center, drift_v, log_unnormalized_joint, sufficient_stats, SufficientStats};
pub use design::DerivedDesign;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grouped observations `y_ij`, covariates `x_ij ∈ R^p`, `i = 1..q`,
/// `j = 1..r_i`.
///
/// Rows are stored flattened in group order; `x` is row-major `N × p`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedModelData {
    p: usize,
    group_sizes: Vec<usize>,
    offsets: Vec<usize>,
    y: Vec<f64>,
    x: Vec<f64>,
}

impl MixedModelData {
    /// Builds from flattened arrays. `y.len()` must equal `Σ r_i` and
    /// `x.len()` must equal `p · Σ r_i`.
    pub fn from_flat(p: usize, group_sizes: Vec<usize>, y: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        if p == 0 {
            return Err(Error::Shape("covariate dimension p must be ≥ 1".into()));
        }
        if group_sizes.is_empty() {
            return Err(Error::Shape("at least one group is required".into()));
        }
        if let Some(i) = group_sizes.iter().position(|&r| r == 0) {
            return Err(Error::Shape(format!("group {i} is empty")));
        }
        let mut offsets = Vec::with_capacity(group_sizes.len() + 1);
        offsets.push(0);
        for &r in &group_sizes {
            offsets.push(offsets.last().unwrap() + r);
        }
        let n = *offsets.last().unwrap();
        if y.len() != n {
            return Err(Error::Shape(format!("y has {} rows, group sizes sum to {n}", y.len())));
        }
        if x.len() != n * p {
            return Err(Error::Shape(format!(
                "x has {} entries, expected N·p = {}",
                x.len(),
                n * p
            )));
        }
        let data = Self {
            p,
            group_sizes,
            offsets,
            y,
            x,
        };
        data.check_finite()?;
        Ok(data)
    }

    /// Builds from ragged per-group arrays.
    pub fn from_groups(p: usize, ys: Vec<Vec<f64>>, xs: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if ys.len() != xs.len() {
            return Err(Error::Shape(format!(
                "{} response groups but {} covariate groups",
                ys.len(),
                xs.len()
            )));
        }
        let mut sizes = Vec::with_capacity(ys.len());
        let mut x_flat = Vec::new();
        for (i, (yg, xg)) in ys.iter().zip(&xs).enumerate() {
            if yg.len() != xg.len() {
                return Err(Error::Shape(format!(
                    "group {i}: {} responses but {} covariate rows",
                    yg.len(),
                    xg.len()
                )));
            }
            for (j, row) in xg.iter().enumerate() {
                if row.len() != p {
                    return Err(Error::Shape(format!(
                        "group {i}, observation {j}: covariate length {} != p = {p}",
                        row.len()
                    )));
                }
                x_flat.extend_from_slice(row);
            }
            sizes.push(yg.len());
        }
        let y_flat = ys.into_iter().flatten().collect();
        Self::from_flat(p, sizes, y_flat, x_flat)
    }

    fn check_finite(&self) -> Result<()> {
        for i in 0..self.q() {
            let (y, x) = self.group(i);
            for j in 0..y.len() {
                if !y[j].is_finite() {
                    return Err(Error::NonFinite {
                        what: "response",
                        group: i,
                        obs: j,
                    });
                }
                if x[j * self.p..(j + 1) * self.p].iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        what: "covariate",
                        group: i,
                        obs: j,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn q(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Total sample size `N = Σ r_i`.
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    /// Responses and row-major covariates of group `i`.
    pub fn group(&self, i: usize) -> (&[f64], &[f64]) {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        (&self.y[a..b], &self.x[a * self.p..b * self.p])
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Row-major `N × p` covariates.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Covariate row of observation `j` in group `i`.
    pub fn x_row(&self, i: usize, j: usize) -> &[f64] {
        let row = self.offsets[i] + j;
        &self.x[row * self.p..(row + 1) * self.p]
    }

    pub fn y_at(&self, i: usize, j: usize) -> f64 {
        self.y[self.offsets[i] + j]
    }

    /// Copy with `c` added to every response.
    pub fn shift_responses(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.y.iter_mut().for_each(|v| *v += c);
        out
    }
}

/// Gamma prior shape/rate pairs: `λ ~ Gamma(a1, b1)`, `τ ~ Gamma(a2, b2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
}

impl Hyperparameters {
    pub fn new(a1: f64, b1: f64, a2: f64, b2: f64) -> Result<Self> {
        let h = Self { a1, b1, a2, b2 };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a1", self.a1), ("b1", self.b1), ("a2", self.a2), ("b2", self.b2)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("hyperparameter {name} = {v} must be > 0")));
            }
        }
        Ok(())
    }
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            a1: 2.0,
            b1: 1.0,
            a2: 2.0,
            b2: 1.0,
        }
    }
}

/// State of the η-marginal chain: `(η₀₀, η₀, η₁, …, η_q)` with
/// `η₀₀ = √q β` and `η₀ = √q μ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub eta00: Vec<f64>,
    pub eta0: f64,
    pub eta: Vec<f64>,
}

impl ChainState {
    pub fn zeros(p: usize, q: usize) -> Self {
        Self {
            eta00: vec![0.0; p],
            eta0: 0.0,
            eta: vec![0.0; q],
        }
    }

    /// Total dimension `p + q + 1`.
    pub fn dim(&self) -> usize {
        self.eta00.len() + 1 + self.eta.len()
    }

    /// Flattened `(η₀₀, η₀, η₁..η_q)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.eta00);
        v.push(self.eta0);
        v.extend_from_slice(&self.eta);
        v
    }

    pub fn from_slice(p: usize, q: usize, v: &[f64]) -> Result<Self> {
        if v.len() != p + q + 1 {
            return Err(Error::Shape(format!("state vector length {} != p+q+1 = {}", v.len(), p + q + 1)));
        }
        Ok(Self {
            eta00: v[..p].to_vec(),
            eta0: v[p],
            eta: v[p + 1..].to_vec(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.eta0.is_finite() && self.eta00.iter().chain(&self.eta).all(|v| v.is_finite())
    }

    /// Euclidean distance in `R^{p+q+1}`.
    pub fn distance(&self, other: &Self) -> f64 {
        let d00: f64 = self.eta00.iter().zip(&other.eta00).map(|(a, b)| (a - b).powi(2)).sum();
        let di: f64 = self.eta.iter().zip(&other.eta).map(|(a, b)| (a - b).powi(2)).sum();
        (d00 + (self.eta0 - other.eta0).powi(2) + di).sqrt()
    }

    /// `self + s·(other − self)`.
    pub fn lerp(&self, other: &Self, s: f64) -> Self {
        let l = |a: f64, b: f64| a + s * (b - a);
        Self {
            eta00: self.eta00.iter().zip(&other.eta00).map(|(&a, &b)| l(a, b)).collect(),
            eta0: l(self.eta0, other.eta0),
            eta: self.eta.iter().zip(&other.eta).map(|(&a, &b)| l(a, b)).collect(),
        }
    }

    /// `self + s·dir` for a flattened direction.
    pub fn offset(&self, dir: &[f64], s: f64) -> Self {
        let p = self.eta00.len();
        Self {
            eta00: self.eta00.iter().zip(&dir[..p]).map(|(a, d)| a + s * d).collect(),
            eta0: self.eta0 + s * dir[p],
            eta: self.eta.iter().zip(&dir[p + 1..]).map(|(a, d)| a + s * d).collect(),
        }
    }

    pub(crate) fn check_shape(&self, p: usize, q: usize) -> Result<()> {
        if self.eta00.len() != p || self.eta.len() != q {
            return Err(Error::Shape(format!(
                "state has (p, q) = ({}, {}), data has ({p}, {q})",
                self.eta00.len(),
                self.eta.len()
            )));
        }
        Ok(())
    }
}

/// Data, its derived aggregates and the prior: everything a transition reads.
///
/// Immutable after construction and shared read-only across workers.
#[derive(Clone, Debug)]
pub struct Model {
    pub data: MixedModelData,
    pub design: DerivedDesign,
    pub hyper: Hyperparameters,
}

impl Model {
    pub fn new(data: MixedModelData, hyper: Hyperparameters) -> Result<Self> {
        hyper.validate()?;
        let design = DerivedDesign::build(&data);
        Ok(Self { data, design, hyper })
    }

    pub fn q(&self) -> usize {
        self.data.q()
    }

    pub fn p(&self) -> usize {
        self.data.p()
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    /// Drift function `V` at `state`.
    pub fn drift_v(&self, state: &ChainState) -> f64 {
        drift_v(state, &self.design)
    }

    pub fn sufficient_stats(&self, state: &ChainState) -> SufficientStats {
        sufficient_stats(state, &self.data)
    }

    pub fn log_unnormalized_joint(&self, state: &ChainState, lambda: f64, tau: f64) -> Result<f64> {
        log_unnormalized_joint(state, lambda, tau, &self.data, &self.hyper)
    }

    pub fn zero_state(&self) -> ChainState {
        ChainState::zeros(self.p(), self.q())
    }
}
