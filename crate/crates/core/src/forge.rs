//! Synthetic data sets from the generative model, in fixed or growing
//! group-size regimes.
//!
//! Every member of a sequence draws from its own stream keyed by `(seed, q)`,
//! so any single member can be regenerated without the others.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MixedModelData;
use crate::rng::{mix, stream};

/// Default cap on the total row count of one generated data set.
pub const DEFAULT_N_CAP: usize = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PRule {
    Fixed { p: usize },
    /// `p = ⌈c·q⌉`.
    Proportional { c: f64 },
}

impl PRule {
    pub fn p_for(&self, q: usize) -> usize {
        match *self {
            PRule::Fixed { p } => p,
            PRule::Proportional { c } => (c * q as f64).ceil() as usize,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RRule {
    /// Every group has `r` rows.
    Balanced { r: usize },
    /// `r̄ = round(q^{2+δ+ε})`; sizes uniform on
    /// `[⌈r̄/√m⌉, ⌊r̄√m⌋]`, so `r_max/r_min ≤ m`. `m = 1` is balanced.
    Growth { jitter_m: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub q: usize,
    pub p_rule: PRule,
    pub r_rule: RRule,
    pub delta: f64,
    pub epsilon: f64,
    /// Broadcast when of length 1.
    pub beta_true: Vec<f64>,
    pub mu_true: f64,
    pub lambda_true: f64,
    pub tau_true: f64,
    pub covariate_scale: f64,
    pub seed: u64,
    #[serde(default = "default_n_cap")]
    pub n_cap: usize,
}

fn default_n_cap() -> usize {
    DEFAULT_N_CAP
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            q: 8,
            p_rule: PRule::Fixed { p: 2 },
            r_rule: RRule::Balanced { r: 4 },
            delta: 0.1,
            epsilon: 0.0,
            beta_true: vec![1.0],
            mu_true: 0.0,
            lambda_true: 1.0,
            tau_true: 1.0,
            covariate_scale: 1.0,
            seed: 0,
            n_cap: DEFAULT_N_CAP,
        }
    }
}

impl GenConfig {
    pub fn p(&self) -> usize {
        self.p_rule.p_for(self.q)
    }

    /// Target mean group size.
    pub fn r_bar(&self) -> f64 {
        match self.r_rule {
            RRule::Balanced { r } => r as f64,
            RRule::Growth { .. } => growth_r_bar(self.q, self.delta + self.epsilon),
        }
    }

    /// `β` at the configured `p`.
    pub fn beta(&self) -> Result<Vec<f64>> {
        let p = self.p();
        match self.beta_true.len() {
            1 => Ok(vec![self.beta_true[0]; p]),
            k if k == p => Ok(self.beta_true.clone()),
            k => Err(Error::Shape(format!("beta_true has length {k}, expected 1 or p = {p}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q < 2 {
            return Err(Error::Infeasible(format!("q = {} must be ≥ 2", self.q)));
        }
        if self.p() == 0 {
            return Err(Error::Infeasible("p rule yields p = 0".into()));
        }
        if !(self.lambda_true > 0.0 && self.tau_true > 0.0) {
            return Err(Error::Domain(format!(
                "true precisions must be positive, got λ = {}, τ = {}",
                self.lambda_true, self.tau_true
            )));
        }
        if !(self.covariate_scale > 0.0 && self.covariate_scale.is_finite()) {
            return Err(Error::Domain(format!("covariate_scale = {} must be > 0", self.covariate_scale)));
        }
        match self.r_rule {
            RRule::Balanced { r } if r < 1 => return Err(Error::Infeasible("balanced r must be ≥ 1".into())),
            RRule::Growth { jitter_m } if !(jitter_m >= 1.0) => {
                return Err(Error::Domain(format!("jitter ratio m = {jitter_m} must be ≥ 1")))
            }
            _ => {}
        }
        if self.r_bar() < 1.0 {
            return Err(Error::Infeasible(format!("r̄ = {} < 1", self.r_bar())));
        }
        self.beta()?;
        Ok(())
    }
}

/// `round(q^{2+e})`, computed as `round(exp((2+e) ln q))`.
pub fn growth_r_bar(q: usize, e: f64) -> f64 {
    ((2.0 + e) * (q as f64).ln()).exp().round()
}

fn group_sizes<R: Rng>(cfg: &GenConfig, rng: &mut R) -> Vec<usize> {
    match cfg.r_rule {
        RRule::Balanced { r } => vec![r; cfg.q],
        RRule::Growth { jitter_m } => {
            let rb = cfg.r_bar();
            let lo = (rb / jitter_m.sqrt()).ceil().max(1.0) as usize;
            let hi = ((rb * jitter_m.sqrt()).floor() as usize).max(lo);
            if lo == hi {
                vec![lo; cfg.q]
            } else {
                (0..cfg.q).map(|_| rng.random_range(lo..=hi)).collect()
            }
        }
    }
}

/// Draws one data set: `x_ij` iid `N(0, s²I)`, `η_i ~ N(μ, 1/λ)`,
/// `y_ij = x_ijᵀβ + η_i + e_ij`, `e_ij ~ N(0, 1/τ)`.
pub fn generate(cfg: &GenConfig) -> Result<MixedModelData> {
    cfg.validate()?;
    let mut rng = stream(mix(cfg.seed, cfg.q as u64), 0);
    let sizes = group_sizes(cfg, &mut rng);
    let n: usize = sizes.iter().sum();
    if n > cfg.n_cap {
        return Err(Error::CapExceeded {
            what: "generated N",
            size: n,
            cap: cfg.n_cap,
        });
    }
    let p = cfg.p();
    let beta = cfg.beta()?;
    let re = Normal::new(cfg.mu_true, cfg.lambda_true.sqrt().recip()).map_err(|e| Error::Domain(e.to_string()))?;
    let sd_e = cfg.tau_true.sqrt().recip();

    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n * p);
    let mut row = vec![0.0; p];
    for &r in &sizes {
        let eta_i: f64 = re.sample(&mut rng);
        for _ in 0..r {
            let mut fit = 0.0;
            for k in 0..p {
                let z: f64 = StandardNormal.sample(&mut rng);
                row[k] = cfg.covariate_scale * z;
                fit += row[k] * beta[k];
            }
            let e: f64 = StandardNormal.sample(&mut rng);
            y.push(fit + eta_i + sd_e * e);
            x.extend_from_slice(&row);
        }
    }
    MixedModelData::from_flat(p, sizes, y, x)
}

#[derive(Clone, Debug)]
pub struct SequenceMember {
    pub q: usize,
    pub config: GenConfig,
    pub data: MixedModelData,
}

/// One data set per `q`, each generated as if by [`generate`] with `cfg.q`
/// replaced.
pub fn scale_sequence(cfg: &GenConfig, q_list: &[usize]) -> Result<Vec<SequenceMember>> {
    if q_list.is_empty() {
        return Err(Error::Domain("q list is empty".into()));
    }
    if q_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain(format!("q list {q_list:?} must be strictly increasing")));
    }
    let configs: Vec<GenConfig> = q_list.iter().map(|&q| GenConfig { q, ..cfg.clone() }).collect();
    // Refuse before generating anything, naming the offending q.
    for c in &configs {
        c.validate()?;
        let upper = match c.r_rule {
            RRule::Balanced { r } => r as f64,
            RRule::Growth { jitter_m } => (c.r_bar() * jitter_m.sqrt()).floor(),
        } * c.q as f64;
        if upper > c.n_cap as f64 {
            return Err(Error::Infeasible(format!(
                "q = {}: predicted N up to {upper} exceeds the cap {}",
                c.q, c.n_cap
            )));
        }
    }
    configs
        .into_par_iter()
        .map(|config| {
            let data = generate(&config)?;
            Ok(SequenceMember {
                q: config.q,
                config,
                data,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct Sidecar<'a> {
    schema: u32,
    config: &'a GenConfig,
    p: usize,
    n: usize,
    r_bar: f64,
    beta: Vec<f64>,
    mu: f64,
    lambda: f64,
    tau: f64,
}

/// JSON sidecar with the full config and the true parameters.
pub fn sidecar_json(cfg: &GenConfig, data: &MixedModelData) -> Result<String> {
    let s = Sidecar {
        schema: crate::SCHEMA_VERSION,
        config: cfg,
        p: data.p(),
        n: data.n(),
        r_bar: data.n() as f64 / data.q() as f64,
        beta: cfg.beta()?,
        mu: cfg.mu_true,
        lambda: cfg.lambda_true,
        tau: cfg.tau_true,
    };
    Ok(serde_json::to_string_pretty(&s)?)
}

pub fn write_sidecar(cfg: &GenConfig, data: &MixedModelData, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, sidecar_json(cfg, data)? + "\n")?;
    Ok(())
}
