//! End-to-end scaling study: for each data set in a growing sequence,
//! estimate drift and contraction constants, turn them into a rate, and
//! compare with the observed coupled-chain decay.

use serde::{Deserialize, Serialize};

use crate::bounds::{optimize_rate, RateInputs, RateReport};
use crate::coupling::{
    drift_probes, estimate_contraction, estimate_drift, geometric_decay_rate, wasserstein_curve, ContractionEstimate,
    CouplingConfig, DriftEstimate, WassersteinCurve,
};
use crate::error::Result;
use crate::forge::{scale_sequence, GenConfig};
use crate::model::{Hyperparameters, Model};
use crate::rng::mix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub gen: GenConfig,
    pub q_list: Vec<usize>,
    pub hyper: Hyperparameters,
    pub delta: f64,
    pub probes: usize,
    pub drift_reps: usize,
    pub pairs: usize,
    pub reps_per_pair: usize,
    pub burn_in: usize,
    pub w_n_max: usize,
    pub w_reps: usize,
    /// `c` in the norm-to-drift comparison, before the factor `q`.
    pub c_norm: f64,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            gen: GenConfig::default(),
            q_list: vec![8, 16, 32],
            hyper: Hyperparameters::default(),
            delta: 0.1,
            probes: 60,
            drift_reps: 50,
            pairs: 32,
            reps_per_pair: 30,
            burn_in: 50,
            w_n_max: 50,
            w_reps: 50,
            c_norm: 1.0,
            seed: 0,
        }
    }
}

/// One row of the study CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub q: usize,
    pub r_bar: f64,
    pub zeta_hat: f64,
    pub l_hat: f64,
    pub gamma_in: Option<f64>,
    pub gamma_out: Option<f64>,
    pub rho: Option<f64>,
    pub a_star: Option<f64>,
    pub wdecay: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyMember {
    pub row: StudyRow,
    pub drift: DriftEstimate,
    pub contraction: ContractionEstimate,
    /// `None` when the estimated constants are not valid rate inputs.
    pub rate: Option<RateReport>,
    pub rate_error: Option<String>,
    pub curve: WassersteinCurve,
}

/// Rate inputs from estimated constants. `γ₀` is the larger of the two
/// regional estimates, since the outside bound must also dominate `γ`.
pub fn rate_inputs(drift: &DriftEstimate, contraction: &ContractionEstimate, c_norm: f64, delta: f64) -> Option<RateInputs> {
    let gamma = contraction.gamma_in?;
    let gamma0 = contraction.gamma_out.map_or(gamma, |g| g.max(gamma));
    Some(RateInputs {
        zeta: drift.zeta_hat,
        l: drift.l_hat,
        gamma,
        gamma0,
        xi: contraction.xi,
        c_norm,
        delta: Some(delta),
    })
}

/// Runs every stage for one model.
pub fn study_member(model: &Model, cfg: &StudyConfig, seed: u64) -> Result<StudyMember> {
    let q = model.q();
    let probes: Vec<_> = drift_probes(model, cfg.probes, mix(seed, 1)).into_iter().map(|(_, s)| s).collect();
    let drift = estimate_drift(model, &probes, cfg.drift_reps, mix(seed, 2))?;
    let ccfg = CouplingConfig {
        delta: cfg.delta,
        xi: None,
        pairs: cfg.pairs,
        reps_per_pair: cfg.reps_per_pair,
        burn_in: cfg.burn_in,
        seed: mix(seed, 3),
    };
    let contraction = estimate_contraction(model, &ccfg)?;
    let (rate, rate_error) = match rate_inputs(&drift, &contraction, cfg.c_norm, cfg.delta) {
        None => (None, Some("no pairs landed inside the contraction set".to_string())),
        Some(inp) => match optimize_rate(&inp) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        },
    };
    let curve = wasserstein_curve(model, &model.zero_state(), cfg.w_n_max, cfg.w_reps, cfg.burn_in, mix(seed, 4))?;
    let row = StudyRow {
        q,
        r_bar: model.design.r_bar,
        zeta_hat: drift.zeta_hat,
        l_hat: drift.l_hat,
        gamma_in: contraction.gamma_in,
        gamma_out: contraction.gamma_out,
        rho: rate.as_ref().and_then(|r| r.rho),
        a_star: rate.as_ref().and_then(|r| r.a_star),
        wdecay: geometric_decay_rate(&curve.points),
    };
    Ok(StudyMember {
        row,
        drift,
        contraction,
        rate,
        rate_error,
        curve,
    })
}

/// Generates the sequence and studies each member in order.
pub fn run_study(cfg: &StudyConfig) -> Result<Vec<StudyMember>> {
    cfg.hyper.validate()?;
    let seq = scale_sequence(&cfg.gen, &cfg.q_list)?;
    seq.into_iter()
        .map(|m| {
            let model = Model::new(m.data, cfg.hyper)?;
            study_member(&model, cfg, mix(cfg.seed, m.q as u64))
        })
        .collect()
}

pub fn write_rows_csv<W: std::io::Write>(rows: &[StudyRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
