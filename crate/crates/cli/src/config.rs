//! Resolved run configurations.
//!
//! Precedence is defaults, then the `--config` JSON document, then flags.
//! The JSON may be partial: it is merged key by key over the serialized
//! defaults, and keys the defaults do not have are rejected. A manifest
//! written by an earlier run is accepted in place of a bare config.

use std::path::{Path, PathBuf};

use mixedgibbs_core::bounds::RateInputs;
use mixedgibbs_core::coupling::CouplingConfig;
use mixedgibbs_core::forge::{GenConfig, PRule, RRule};
use mixedgibbs_core::model::{AssumptionThresholds, Hyperparameters};
use mixedgibbs_core::study::StudyConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::*;
use crate::Failure;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct GenRun {
    pub gen: GenConfig,
    pub q_list: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckRun {
    pub data: PathBuf,
    pub delta: f64,
    pub thresholds: AssumptionThresholds,
}

impl Default for CheckRun {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            delta: 0.1,
            thresholds: AssumptionThresholds::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleRun {
    pub data: PathBuf,
    pub hyper: Hyperparameters,
    pub iters: usize,
    pub start: Start,
    pub seed: u64,
    pub binary: bool,
}

impl Default for SampleRun {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            hyper: Hyperparameters::default(),
            iters: 1000,
            start: Start::Zero,
            seed: 0,
            binary: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DriftRun {
    pub data: PathBuf,
    pub hyper: Hyperparameters,
    pub probes: usize,
    pub reps: usize,
    pub seed: u64,
}

impl Default for DriftRun {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            hyper: Hyperparameters::default(),
            probes: 60,
            reps: 50,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ContractRun {
    pub data: PathBuf,
    pub hyper: Hyperparameters,
    pub coupling: CouplingConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WcurveRun {
    pub data: PathBuf,
    pub hyper: Hyperparameters,
    pub n_max: usize,
    pub reps: usize,
    pub burn_in: usize,
    pub start: Start,
    pub seed: u64,
}

impl Default for WcurveRun {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            hyper: Hyperparameters::default(),
            n_max: 100,
            reps: 100,
            burn_in: 100,
            start: Start::Zero,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvRun {
    pub n: usize,
    pub q: usize,
    pub scale: f64,
    pub v_eta: f64,
    pub l0: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateRun {
    pub zeta: Option<f64>,
    pub l: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma0: Option<f64>,
    pub xi: Option<f64>,
    pub c_norm: f64,
    pub delta: Option<f64>,
    pub tv: Option<TvRun>,
}

impl Default for RateRun {
    fn default() -> Self {
        Self {
            zeta: None,
            l: None,
            gamma: None,
            gamma0: None,
            xi: None,
            c_norm: 1.0,
            delta: None,
            tv: None,
        }
    }
}

impl RateRun {
    pub fn inputs(&self) -> Result<RateInputs, Failure> {
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Failure::Config(format!("rate needs --{name}")));
        let inp = RateInputs {
            zeta: need(self.zeta, "zeta")?,
            l: need(self.l, "l")?,
            gamma: need(self.gamma, "gamma")?,
            gamma0: need(self.gamma0, "gamma0")?,
            xi: need(self.xi, "xi")?,
            c_norm: self.c_norm,
            delta: self.delta,
        };
        inp.validate().map_err(|e| Failure::Config(e.to_string()))?;
        Ok(inp)
    }
}

/// Deep merge of `over` into `base`. Objects merge key by key; a tagged
/// object (one with `kind`) whose tag changes replaces the base outright.
fn merge(base: &mut Value, over: Value, path: &str) -> Result<(), Failure> {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            let retag = matches!((b.get("kind"), o.get("kind")), (Some(x), Some(y)) if x != y);
            if retag {
                *b = o;
                return Ok(());
            }
            for (k, v) in o {
                let sub = format!("{path}{}{k}", if path.is_empty() { "" } else { "." });
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &sub)?,
                    None => return Err(Failure::Config(format!("unknown config key `{sub}`"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

/// Defaults merged with the file at `path`, if any.
pub fn load<T: Serialize + DeserializeOwned + Default>(path: Option<&Path>, command: &str) -> Result<T, Failure> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::from_io(e, path))?;
    let mut doc: Value = serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    if let Value::Object(obj) = &mut doc {
        if obj.contains_key("command") && obj.contains_key("config") {
            let found = obj.get("command").and_then(Value::as_str).unwrap_or_default().to_string();
            if found != command {
                return Err(Failure::Config(format!(
                    "{} is a manifest for `{found}`, not `{command}`",
                    path.display()
                )));
            }
            doc = obj.remove("config").unwrap_or(Value::Null);
        }
    }
    let mut base = serde_json::to_value(T::default()).expect("defaults serialize");
    merge(&mut base, doc, "")?;
    serde_json::from_value(base).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_hyper(h: &mut Hyperparameters, a: &HyperArgs) -> Result<(), Failure> {
    set(&mut h.a1, a.a1);
    set(&mut h.b1, a.b1);
    set(&mut h.a2, a.a2);
    set(&mut h.b2, a.b2);
    h.validate().map_err(|e| Failure::Config(e.to_string()))
}

fn require_data(data: &Path) -> Result<(), Failure> {
    if data.as_os_str().is_empty() {
        return Err(Failure::Config("--data is required".into()));
    }
    Ok(())
}

pub fn resolve_gen(a: &GenArgs) -> Result<GenRun, Failure> {
    let mut r: GenRun = load(a.common.config.as_deref(), "gen")?;
    let g = &mut r.gen;
    set(&mut g.q, a.q);
    if let Some(p) = a.p {
        g.p_rule = PRule::Fixed { p };
    }
    if let Some(c) = a.p_prop {
        g.p_rule = PRule::Proportional { c };
    }
    if let Some(r) = a.balanced_r {
        g.r_rule = RRule::Balanced { r };
    }
    if let Some(m) = a.growth_m {
        g.r_rule = RRule::Growth { jitter_m: m };
    }
    set(&mut g.delta, a.delta);
    set(&mut g.epsilon, a.epsilon);
    set(&mut g.beta_true, a.beta.clone());
    set(&mut g.mu_true, a.mu);
    set(&mut g.lambda_true, a.lambda);
    set(&mut g.tau_true, a.tau);
    set(&mut g.covariate_scale, a.covariate_scale);
    set(&mut g.seed, a.seed);
    set(&mut g.n_cap, a.n_cap);
    if a.q_list.is_some() {
        r.q_list = a.q_list.clone();
    }
    if r.q_list.is_none() {
        r.gen.validate().map_err(|e| Failure::Config(e.to_string()))?;
    }
    Ok(r)
}

pub fn resolve_check(a: &CheckArgs) -> Result<CheckRun, Failure> {
    let mut r: CheckRun = load(a.common.config.as_deref(), "check")?;
    set(&mut r.data, a.data.clone());
    set(&mut r.delta, a.delta);
    let t = &mut r.thresholds;
    set(&mut t.m_max, a.m_max);
    set(&mut t.k1_min, a.k1_min);
    set(&mut t.k2_max, a.k2_max);
    set(&mut t.ell_max, a.ell_max);
    set(&mut t.p_over_q_max, a.p_over_q_max);
    set(&mut t.growth_min, a.growth_min);
    require_data(&r.data)?;
    if !(r.delta > 0.0) {
        return Err(Failure::Config(format!("delta = {} must be > 0", r.delta)));
    }
    Ok(r)
}

pub fn resolve_sample(a: &SampleArgs) -> Result<SampleRun, Failure> {
    let mut r: SampleRun = load(a.common.config.as_deref(), "sample")?;
    set(&mut r.data, a.data.clone());
    set(&mut r.iters, a.iters);
    set(&mut r.start, a.start);
    set(&mut r.seed, a.seed);
    r.binary |= a.binary;
    apply_hyper(&mut r.hyper, &a.hyper)?;
    require_data(&r.data)?;
    if r.iters == 0 {
        return Err(Failure::Config("iters must be ≥ 1".into()));
    }
    Ok(r)
}

pub fn resolve_drift(a: &DriftArgs) -> Result<DriftRun, Failure> {
    let mut r: DriftRun = load(a.common.config.as_deref(), "drift")?;
    set(&mut r.data, a.data.clone());
    set(&mut r.probes, a.probes);
    set(&mut r.reps, a.reps);
    set(&mut r.seed, a.seed);
    apply_hyper(&mut r.hyper, &a.hyper)?;
    require_data(&r.data)?;
    if r.probes == 0 || r.reps < 2 {
        return Err(Failure::Config(format!("need probes ≥ 1 and reps ≥ 2, got {} and {}", r.probes, r.reps)));
    }
    Ok(r)
}

pub fn resolve_contract(a: &ContractArgs) -> Result<ContractRun, Failure> {
    let mut r: ContractRun = load(a.common.config.as_deref(), "contract")?;
    set(&mut r.data, a.data.clone());
    let c = &mut r.coupling;
    set(&mut c.delta, a.delta);
    if a.xi.is_some() {
        c.xi = a.xi;
    }
    set(&mut c.pairs, a.pairs);
    set(&mut c.reps_per_pair, a.reps_per_pair);
    set(&mut c.burn_in, a.burn_in);
    set(&mut c.seed, a.seed);
    apply_hyper(&mut r.hyper, &a.hyper)?;
    require_data(&r.data)?;
    r.coupling.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(r)
}

pub fn resolve_wcurve(a: &WcurveArgs) -> Result<WcurveRun, Failure> {
    let mut r: WcurveRun = load(a.common.config.as_deref(), "wcurve")?;
    set(&mut r.data, a.data.clone());
    set(&mut r.n_max, a.n_max);
    set(&mut r.reps, a.reps);
    set(&mut r.burn_in, a.burn_in);
    set(&mut r.start, a.start);
    set(&mut r.seed, a.seed);
    apply_hyper(&mut r.hyper, &a.hyper)?;
    require_data(&r.data)?;
    if r.reps == 0 {
        return Err(Failure::Config("reps must be ≥ 1".into()));
    }
    Ok(r)
}

pub fn resolve_rate(a: &RateArgs) -> Result<RateRun, Failure> {
    let mut r: RateRun = load(a.common.config.as_deref(), "rate")?;
    for (slot, v) in [
        (&mut r.zeta, a.zeta),
        (&mut r.l, a.l),
        (&mut r.gamma, a.gamma),
        (&mut r.gamma0, a.gamma0),
        (&mut r.xi, a.xi),
        (&mut r.delta, a.delta),
    ] {
        if v.is_some() {
            *slot = v;
        }
    }
    set(&mut r.c_norm, a.c_norm);
    let any_tv = a.tv_n.is_some() || a.tv_q.is_some() || a.tv_scale.is_some() || a.v_eta.is_some() || a.l0.is_some();
    if any_tv {
        let mut tv = r.tv.unwrap_or(TvRun {
            n: 0,
            q: 0,
            scale: 1.0,
            v_eta: 0.0,
            l0: 0.0,
        });
        set(&mut tv.n, a.tv_n);
        set(&mut tv.q, a.tv_q);
        set(&mut tv.scale, a.tv_scale);
        set(&mut tv.v_eta, a.v_eta);
        set(&mut tv.l0, a.l0);
        r.tv = Some(tv);
    }
    if let Some(tv) = r.tv {
        if tv.n < 2 || tv.q == 0 {
            return Err(Failure::Config(format!("TV bound needs --tv-n ≥ 2 and --tv-q ≥ 1, got {} and {}", tv.n, tv.q)));
        }
    }
    r.inputs()?;
    Ok(r)
}

pub fn resolve_scale(a: &ScaleArgs) -> Result<StudyConfig, Failure> {
    let mut r: StudyConfig = load(a.common.config.as_deref(), "scale")?;
    set(&mut r.q_list, a.q_list.clone());
    if let Some(d) = a.delta {
        r.delta = d;
        r.gen.delta = d;
    }
    set(&mut r.gen.epsilon, a.epsilon);
    if let Some(p) = a.p {
        r.gen.p_rule = PRule::Fixed { p };
    }
    if let Some(m) = a.growth_m {
        r.gen.r_rule = RRule::Growth { jitter_m: m };
    }
    set(&mut r.probes, a.probes);
    set(&mut r.drift_reps, a.drift_reps);
    set(&mut r.pairs, a.pairs);
    set(&mut r.reps_per_pair, a.reps_per_pair);
    set(&mut r.burn_in, a.burn_in);
    set(&mut r.w_n_max, a.w_n_max);
    set(&mut r.w_reps, a.w_reps);
    set(&mut r.c_norm, a.c_norm);
    set(&mut r.seed, a.seed);
    set(&mut r.gen.seed, a.gen_seed);
    apply_hyper(&mut r.hyper, &a.hyper)?;
    if r.q_list.is_empty() || r.q_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Failure::Config(format!("q list {:?} must be non-empty and strictly increasing", r.q_list)));
    }
    if r.drift_reps < 2 || r.probes == 0 || r.pairs == 0 || r.reps_per_pair == 0 || r.w_reps == 0 {
        return Err(Failure::Config("study counts must be ≥ 1 (drift reps ≥ 2)".into()));
    }
    if !(r.delta > 0.0) {
        return Err(Failure::Config(format!("delta = {} must be > 0", r.delta)));
    }
    Ok(r)
}
