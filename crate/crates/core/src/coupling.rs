//! Common-random-number couplings of the random mapping `f`.
//!
//! Two chains fed the same [`NoiseDraw`] at every step form a coupling of
//! the kernel with itself. From such couplings this module estimates
//!
//! - contraction factors: the chord ratio `E‖f(η) − f(η′)‖ / ‖η − η′‖`, split
//!   by whether `V(η) + V(η′) ≤ ξ`;
//! - drift constants `(ζ, L)` with `E[V(η̃) | η] ≤ ζ V(η) + L`;
//! - an upper bound on the Wasserstein distance to stationarity, through the
//!   mean distance between a chain and a post-burn-in partner.
//!
//! Every pair, probe and replicate draws from its own stream keyed by
//! `(seed, stage, index)`, so results are the same for any thread count.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{mean, stationarity_z, std_dev};
use crate::error::{Error, Result};
use crate::kernel::{random_map, transition, trajectory::run_chain, NoiseDraw};
use crate::model::{drift_center, ChainState, Model};
use crate::rng::{stage_stream, StreamRng};

const STAGE_POOL: u64 = 1;
const STAGE_PAIRS: u64 = 2;
const STAGE_NOISE: u64 = 3;
const STAGE_BOOT: u64 = 4;
const STAGE_PROBES: u64 = 5;
const STAGE_DRIFT: u64 = 6;
const STAGE_PARTNER: u64 = 7;
const STAGE_COUPLE: u64 = 8;
const STAGE_NEAR: u64 = 9;

/// Bootstrap resamples for the contraction CIs.
pub const BOOTSTRAP_B: usize = 200;
/// Largest number of independent chains in a stationary pool.
pub const POOL_MAX: usize = 16;
/// Normal quantile used for the CI inflation of drift estimates.
pub const Z95: f64 = 1.96;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig {
    pub delta: f64,
    /// Defaults to `q^{δ/3}`.
    #[serde(default)]
    pub xi: Option<f64>,
    pub pairs: usize,
    pub reps_per_pair: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            xi: None,
            pairs: 64,
            reps_per_pair: 50,
            burn_in: 50,
            seed: 0,
        }
    }
}

impl CouplingConfig {
    pub fn xi_for(&self, q: usize) -> f64 {
        self.xi.unwrap_or_else(|| (q as f64).powf(self.delta / 3.0))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Domain(format!("δ = {} must be > 0", self.delta)));
        }
        if let Some(xi) = self.xi {
            if !(xi > 0.0 && xi.is_finite()) {
                return Err(Error::Domain(format!("ξ = {xi} must be > 0")));
            }
        }
        if self.pairs == 0 || self.reps_per_pair == 0 {
            return Err(Error::Domain("pairs and reps_per_pair must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// One step of both chains under the same noise.
pub fn coupled_step(a: &ChainState, b: &ChainState, noise: &NoiseDraw, model: &Model) -> Result<(ChainState, ChainState)> {
    Ok((random_map(a, noise, model)?, random_map(b, noise, model)?))
}

fn fresh_noise(model: &Model, rng: &mut StreamRng) -> NoiseDraw {
    NoiseDraw::sample(rng, model.p(), model.q(), model.n(), &model.hyper)
}

/// Post-burn-in states of independent chains started at the minimizer of
/// `V`, used as draws from an approximately stationary distribution.
#[derive(Clone, Debug)]
pub struct StationaryPool {
    pub states: Vec<ChainState>,
    /// Geweke z of the second half of chain 0's `V` trace.
    pub stationarity_z: f64,
}

impl StationaryPool {
    /// `|z| < 3`; vacuously true for burn-ins under 40 steps.
    pub fn passed(&self) -> bool {
        self.stationarity_z.abs() < 3.0
    }
}

pub fn stationary_pool(model: &Model, size: usize, burn_in: usize, seed: u64) -> Result<StationaryPool> {
    let center = drift_center(&model.design);
    let runs: Vec<(ChainState, Vec<f64>)> = (0..size)
        .into_par_iter()
        .map(|k| {
            let mut rng = stage_stream(seed, STAGE_POOL, k as u64);
            let mut trace = Vec::new();
            let last = run_chain(model, &center, burn_in, &mut rng, |_, s| {
                if k == 0 {
                    trace.push(model.drift_v(&s.state));
                }
                Ok(())
            })?;
            Ok((last, trace))
        })
        .collect::<Result<_>>()?;
    let z = runs
        .first()
        .map(|(_, t)| stationarity_z(&t[t.len() / 2..]))
        .unwrap_or(0.0);
    Ok(StationaryPool {
        states: runs.into_iter().map(|(s, _)| s).collect(),
        stationarity_z: z,
    })
}

fn unit_direction<R: Rng + ?Sized>(rng: &mut R, dim: usize, mask: impl Fn(usize) -> bool) -> Vec<f64> {
    loop {
        let mut d: Vec<f64> = (0..dim)
            .map(|k| if mask(k) { StandardNormal.sample(rng) } else { 0.0 })
            .collect();
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            d.iter_mut().for_each(|v| *v /= norm);
            return d;
        }
    }
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// Draws a pair aimed at `𝒞` (`inside`) or its complement.
///
/// The partner sits a log-uniform distance in a random direction from
/// `base`. Inside pairs are pulled halfway toward `center` until
/// `V + V′ ≤ ξ`; outside pairs are pushed radially away from `center`
/// (doubling) until `V + V′ > ξ`, then by a further factor in `[1, 10]`.
/// The caller classifies by the realized `V + V′`.
pub fn sample_pair<R: Rng + ?Sized>(
    model: &Model,
    center: &ChainState,
    base: &ChainState,
    inside: bool,
    xi: f64,
    rng: &mut R,
) -> (ChainState, ChainState) {
    let dim = base.dim();
    let u = unit_direction(rng, dim, |_| true);
    let vsum = |a: &ChainState, b: &ChainState| model.drift_v(a) + model.drift_v(b);
    if inside {
        let s = log_uniform(rng, 1e-3, 1e-1);
        let mut a = base.clone();
        let mut b = base.offset(&u, s);
        for _ in 0..64 {
            if vsum(&a, &b) <= xi {
                break;
            }
            a = center.lerp(&a, 0.5);
            b = center.lerp(&b, 0.5);
        }
        (a, b)
    } else {
        let s = log_uniform(rng, 1e-2, 1.0);
        let mut a = base.clone();
        let mut b = base.offset(&u, s);
        for _ in 0..256 {
            if vsum(&a, &b) > xi {
                break;
            }
            a = center.lerp(&a, 2.0);
            b = center.lerp(&b, 2.0);
        }
        let extra = log_uniform(rng, 1.0, 10.0);
        (center.lerp(&a, extra), center.lerp(&b, extra))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub inside: bool,
    pub v_sum: f64,
    pub distance: f64,
    /// Mean of `‖f(η) − f(η′)‖` over the shared-noise replications.
    pub mean_displacement: f64,
    pub mean_ratio: f64,
    #[serde(skip)]
    pub ratios: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionEstimate {
    /// Largest mean chord ratio over pairs in `𝒞`; `None` when no pair
    /// landed there.
    pub gamma_in: Option<f64>,
    /// Same over pairs outside `𝒞`.
    pub gamma_out: Option<f64>,
    pub n_in: usize,
    pub n_out: usize,
    pub ci_halfwidth_in: Option<f64>,
    pub ci_halfwidth_out: Option<f64>,
    pub xi: f64,
    pub pool_stationarity_z: f64,
    pub pairs: Vec<PairRecord>,
}

/// Per-pair mean chord ratios under shared noise, maximized within each
/// region. These are lower bounds on the segment-derivative suprema.
pub fn estimate_contraction(model: &Model, cfg: &CouplingConfig) -> Result<ContractionEstimate> {
    cfg.validate()?;
    let xi = cfg.xi_for(model.q());
    let pool = stationary_pool(model, cfg.pairs.min(POOL_MAX), cfg.burn_in, cfg.seed)?;
    let center = drift_center(&model.design);

    let pairs: Vec<PairRecord> = (0..cfg.pairs)
        .into_par_iter()
        .map(|k| {
            let mut rng = stage_stream(cfg.seed, STAGE_PAIRS, k as u64);
            let base = &pool.states[k % pool.states.len()];
            let (a, b) = sample_pair(model, &center, base, k % 2 == 0, xi, &mut rng);
            pair_record(model, &a, &b, xi, cfg.reps_per_pair, &mut stage_stream(cfg.seed, STAGE_NOISE, k as u64))
        })
        .collect::<Result<_>>()?;

    let region = |inside: bool| -> Vec<&PairRecord> { pairs.iter().filter(|r| r.inside == inside).collect() };
    let (rin, rout) = (region(true), region(false));
    let sup = |rs: &[&PairRecord]| rs.iter().map(|r| r.mean_ratio).reduce(f64::max);
    let gamma_in = sup(&rin);
    let gamma_out = sup(&rout);
    let ci_halfwidth_in = (!rin.is_empty()).then(|| bootstrap_halfwidth(&rin, &mut stage_stream(cfg.seed, STAGE_BOOT, 0)));
    let ci_halfwidth_out = (!rout.is_empty()).then(|| bootstrap_halfwidth(&rout, &mut stage_stream(cfg.seed, STAGE_BOOT, 1)));
    Ok(ContractionEstimate {
        gamma_in,
        gamma_out,
        n_in: rin.len(),
        n_out: rout.len(),
        ci_halfwidth_in,
        ci_halfwidth_out,
        xi,
        pool_stationarity_z: pool.stationarity_z,
        pairs,
    })
}

/// Chord ratios of one pair over `reps` shared noises.
pub fn pair_record(model: &Model, a: &ChainState, b: &ChainState, xi: f64, reps: usize, rng: &mut StreamRng) -> Result<PairRecord> {
    let d = a.distance(b);
    if !(d > 0.0) {
        return Err(Error::Domain("pair has zero distance".into()));
    }
    let mut disp = Vec::with_capacity(reps);
    for _ in 0..reps {
        let noise = fresh_noise(model, rng);
        let (fa, fb) = coupled_step(a, b, &noise, model)?;
        disp.push(fa.distance(&fb));
    }
    let v_sum = model.drift_v(a) + model.drift_v(b);
    let mean_displacement = mean(&disp);
    Ok(PairRecord {
        inside: v_sum <= xi,
        v_sum,
        distance: d,
        mean_displacement,
        mean_ratio: mean_displacement / d,
        ratios: disp.iter().map(|x| x / d).collect(),
    })
}

/// Half the width of the central 95% bootstrap interval of the regional
/// maximum, resampling replications within each pair.
fn bootstrap_halfwidth(region: &[&PairRecord], rng: &mut StreamRng) -> f64 {
    let mut stats = Vec::with_capacity(BOOTSTRAP_B);
    for _ in 0..BOOTSTRAP_B {
        let mut best = f64::NEG_INFINITY;
        for r in region {
            let n = r.ratios.len();
            let m = (0..n).map(|_| r.ratios[rng.random_range(0..n)]).sum::<f64>() / n as f64;
            best = best.max(m);
        }
        stats.push(best);
    }
    stats.sort_by(f64::total_cmp);
    let lo = stats[(0.025 * BOOTSTRAP_B as f64) as usize];
    let hi = stats[((0.975 * BOOTSTRAP_B as f64) as usize).min(BOOTSTRAP_B - 1)];
    0.5 * (hi - lo)
}

/// Near pairs for kernel-Lipschitz calibration: each base is a pool state,
/// the partner is at distance `radius` in a random direction.
pub fn near_pairs(bases: &[ChainState], count: usize, radius: f64, seed: u64) -> Vec<(ChainState, ChainState)> {
    (0..count)
        .map(|k| {
            let mut rng = stage_stream(seed, STAGE_NEAR, k as u64);
            let base = &bases[k % bases.len()];
            let u = unit_direction(&mut rng, base.dim(), |_| true);
            (base.clone(), base.offset(&u, radius))
        })
        .collect()
}

/// Which coordinates a drift probe moves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    All,
    RandomEffects,
    Regression,
}

/// Probes `center + t·d` with `d` a random direction scaled so that
/// `V(center + d) − V(center) = 1` and `t` log-uniform on `[0.1, 100]`.
/// Kinds cycle through all coordinates, `(η₀, η_1..η_q)` and `η₀₀`.
pub fn drift_probes(model: &Model, count: usize, seed: u64) -> Vec<(ProbeKind, ChainState)> {
    let center = drift_center(&model.design);
    let v0 = model.drift_v(&center);
    let p = model.p();
    let dim = center.dim();
    (0..count)
        .map(|k| {
            let mut rng = stage_stream(seed, STAGE_PROBES, k as u64);
            let kind = [ProbeKind::All, ProbeKind::RandomEffects, ProbeKind::Regression][k % 3];
            let d = unit_direction(&mut rng, dim, |i| match kind {
                ProbeKind::All => true,
                ProbeKind::RandomEffects => i >= p,
                ProbeKind::Regression => i < p,
            });
            let rise = model.drift_v(&center.offset(&d, 1.0)) - v0;
            let scale = if rise > 0.0 { rise.sqrt().recip() } else { 1.0 };
            let t = log_uniform(&mut rng, 0.1, 100.0);
            (kind, center.offset(&d, scale * t))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub v: f64,
    pub mean_next_v: f64,
    pub sd_next_v: f64,
    /// `mean + 1.96·sd/√reps`.
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    pub zeta_hat: f64,
    pub l_hat: f64,
    pub probe_count: usize,
    /// Largest `upper − (ζ̂V + L̂)` over probes; at most rounding above 0.
    pub fit_residual_max: f64,
    pub probes: Vec<ProbeRecord>,
}

/// Monte Carlo `E[V(η̃) | η]` at each probe, then the dominating line.
pub fn estimate_drift(model: &Model, probes: &[ChainState], reps: usize, seed: u64) -> Result<DriftEstimate> {
    if reps < 2 {
        return Err(Error::Domain(format!("reps = {reps}: at least 2 are needed for a CI")));
    }
    if probes.is_empty() {
        return Err(Error::Domain("no drift probes".into()));
    }
    let records: Vec<ProbeRecord> = probes
        .par_iter()
        .enumerate()
        .map(|(k, probe)| {
            let mut rng = stage_stream(seed, STAGE_DRIFT, k as u64);
            let mut next = Vec::with_capacity(reps);
            for _ in 0..reps {
                next.push(model.drift_v(&transition(probe, model, &mut rng)?));
            }
            let m = mean(&next);
            let sd = std_dev(&next);
            Ok(ProbeRecord {
                v: model.drift_v(probe),
                mean_next_v: m,
                sd_next_v: sd,
                upper: m + Z95 * sd / (reps as f64).sqrt(),
            })
        })
        .collect::<Result<_>>()?;
    let v: Vec<f64> = records.iter().map(|r| r.v).collect();
    let u: Vec<f64> = records.iter().map(|r| r.upper).collect();
    let (zeta_hat, l_hat) = envelope_fit(&v, &u);
    let fit_residual_max = v
        .iter()
        .zip(&u)
        .map(|(x, y)| y - (zeta_hat * x + l_hat))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(DriftEstimate {
        zeta_hat,
        l_hat,
        probe_count: records.len(),
        fit_residual_max,
        probes: records,
    })
}

/// Line `ζV + L` with `ζ, L ≥ 0` lying on or above every `(v_k, u_k)` and of
/// least total height `Σ(ζv_k + L)`; among equal heights the smaller slope.
///
/// Two variables, so the optimum is a vertex: a line through two points, or
/// one with `ζ = 0` or `L = 0`. All candidates are enumerated.
pub fn envelope_fit(v: &[f64], u: &[f64]) -> (f64, f64) {
    let n = v.len();
    let vbar = mean(v);
    let feasible = |z: f64, l: f64| {
        z >= 0.0 && l >= 0.0 && v.iter().zip(u).all(|(&x, &y)| z * x + l >= y - 1e-12 * (1.0 + y.abs()))
    };
    let umax = u.iter().cloned().fold(0.0f64, f64::max);
    let mut best = (0.0, umax);
    let mut best_h = umax;
    let mut consider = |z: f64, l: f64| {
        if !(z.is_finite() && l.is_finite()) || !feasible(z, l) {
            return;
        }
        let h = z * vbar + l;
        let tol = 1e-12 * (1.0 + best_h.abs());
        if h < best_h - tol || (h <= best_h + tol && z < best.0) {
            best = (z, l);
            best_h = h;
        }
    };
    let rmax = v
        .iter()
        .zip(u)
        .filter(|(x, _)| **x > 0.0)
        .map(|(x, y)| y / x)
        .fold(0.0f64, f64::max);
    consider(rmax, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            if v[i] != v[j] {
                let z = (u[j] - u[i]) / (v[j] - v[i]);
                consider(z, u[i] - z * v[i]);
            }
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub w_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WassersteinCurve {
    pub points: Vec<CurvePoint>,
    pub partner_stationarity_z: f64,
}

/// Mean distance between a chain from `start` and a partner started from the
/// minimizer of `V` and run `burn_in` steps, both then driven by shared
/// noise for `n_max` steps. Each replicate has its own partner.
pub fn wasserstein_curve(model: &Model, start: &ChainState, n_max: usize, reps: usize, burn_in: usize, seed: u64) -> Result<WassersteinCurve> {
    if reps == 0 {
        return Err(Error::Domain("reps must be ≥ 1".into()));
    }
    let center = drift_center(&model.design);
    let runs: Vec<(Vec<f64>, Vec<f64>)> = (0..reps)
        .into_par_iter()
        .map(|k| {
            let mut prng = stage_stream(seed, STAGE_PARTNER, k as u64);
            let mut trace = Vec::new();
            let partner = run_chain(model, &center, burn_in, &mut prng, |_, s| {
                if k == 0 {
                    trace.push(model.drift_v(&s.state));
                }
                Ok(())
            })?;
            let mut rng = stage_stream(seed, STAGE_COUPLE, k as u64);
            let (mut x, mut y) = (start.clone(), partner);
            let mut dist = Vec::with_capacity(n_max + 1);
            dist.push(x.distance(&y));
            for _ in 0..n_max {
                if x == y {
                    dist.push(0.0);
                    continue;
                }
                let noise = fresh_noise(model, &mut rng);
                let (nx, ny) = coupled_step(&x, &y, &noise, model)?;
                x = nx;
                y = ny;
                dist.push(x.distance(&y));
            }
            Ok((dist, trace))
        })
        .collect::<Result<_>>()?;

    let z = stationarity_z(&runs[0].1[runs[0].1.len() / 2..]);
    let points = (0..=n_max)
        .map(|n| {
            let col: Vec<f64> = runs.iter().map(|(d, _)| d[n]).collect();
            let m = mean(&col);
            let half = if reps > 1 { Z95 * std_dev(&col) / (reps as f64).sqrt() } else { 0.0 };
            CurvePoint {
                n,
                w_hat: m,
                ci_lo: (m - half).max(0.0),
                ci_hi: m + half,
            }
        })
        .collect();
    Ok(WassersteinCurve {
        points,
        partner_stationarity_z: z,
    })
}

/// Geometric rate from least squares of `ln w_hat` on `n`, using points with
/// `w_hat > 10⁻¹⁰·w_hat(0)`. Fewer than two such points gives 0.
pub fn geometric_decay_rate(points: &[CurvePoint]) -> f64 {
    let Some(w0) = points.first().map(|p| p.w_hat) else {
        return 0.0;
    };
    let floor = 1e-10 * w0;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| p.w_hat > 0.0 && p.w_hat > floor)
        .map(|p| (p.n as f64, p.w_hat.ln()))
        .unzip();
    if xs.len() < 2 {
        return 0.0;
    }
    crate::diagnostics::linear_fit(&xs, &ys).1.exp()
}
