mod oracles;

use mixedgibbs_core::coupling::*;
use mixedgibbs_core::diagnostics::ks_two_sample;
use mixedgibbs_core::forge::{generate, GenConfig, PRule, RRule};
use mixedgibbs_core::kernel::{random_map, transition, NoiseDraw};
use mixedgibbs_core::model::{drift_center, ChainState, Hyperparameters, MixedModelData, Model};
use mixedgibbs_core::rng::stream;
use oracles::*;

fn small_model(seed: u64) -> Model {
    Model::new(random_data(&mut stream(seed, 0), 2, &[3, 4, 2, 5]), Hyperparameters::default()).unwrap()
}

fn growth_model(q: usize) -> Model {
    let cfg = GenConfig {
        q,
        p_rule: PRule::Fixed { p: 3 },
        r_rule: RRule::Growth { jitter_m: 1.0 },
        delta: 0.1,
        beta_true: vec![0.1],
        lambda_true: 4.0,
        seed: 11,
        ..Default::default()
    };
    Model::new(generate(&cfg).unwrap(), Hyperparameters::default()).unwrap()
}

fn small_config(seed: u64) -> CouplingConfig {
    CouplingConfig {
        delta: 0.1,
        xi: None,
        pairs: 12,
        reps_per_pair: 20,
        burn_in: 50,
        seed,
    }
}

fn noise(model: &Model, seed: u64, k: u64) -> NoiseDraw {
    NoiseDraw::sample(&mut stream(seed, k), model.p(), model.q(), model.n(), &model.hyper)
}

#[test]
fn coupled_step_on_equal_states_is_bitwise_equal() {
    let m = small_model(60);
    let a = random_state(&mut stream(60, 1), 2, 4, 1.0);
    for k in 0..20 {
        let (fa, fb) = coupled_step(&a, &a.clone(), &noise(&m, 61, k), &m).unwrap();
        assert_eq!(fa.to_vec().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), fb.to_vec().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}

#[test]
fn coupled_marginal_replays_transition() {
    let m = small_model(62);
    let a = random_state(&mut stream(62, 1), 2, 4, 1.0);
    let b = random_state(&mut stream(62, 2), 2, 4, 1.0);
    for k in 0..20 {
        let mut r1 = stream(63, k);
        let mut r2 = r1.clone();
        let nd = NoiseDraw::sample(&mut r1, m.p(), m.q(), m.n(), &m.hyper);
        let (fa, _) = coupled_step(&a, &b, &nd, &m).unwrap();
        assert_eq!(fa, transition(&a, &m, &mut r2).unwrap());
    }
}

#[test]
fn coupled_marginals_match_independent_transitions() {
    let m = small_model(64);
    let a = random_state(&mut stream(64, 1), 2, 4, 1.0);
    let b = random_state(&mut stream(64, 2), 2, 4, 3.0);
    let n = 10_000;
    let mut coupled_a = Vec::with_capacity(n);
    let mut coupled_b = Vec::with_capacity(n);
    let mut lone_a = Vec::with_capacity(n);
    let mut lone_b = Vec::with_capacity(n);
    let mut shared = stream(65, 0);
    let mut own = stream(66, 0);
    for _ in 0..n {
        let nd = NoiseDraw::sample(&mut shared, m.p(), m.q(), m.n(), &m.hyper);
        let (fa, fb) = coupled_step(&a, &b, &nd, &m).unwrap();
        coupled_a.push(fa.eta0);
        coupled_b.push(fb.eta0);
        lone_a.push(transition(&a, &m, &mut own).unwrap().eta0);
        lone_b.push(transition(&b, &m, &mut own).unwrap().eta0);
    }
    let (_, pa) = ks_two_sample(&coupled_a, &lone_a);
    let (_, pb) = ks_two_sample(&coupled_b, &lone_b);
    assert!(pa > 0.001 && pb > 0.001, "p = {pa}, {pb}");
}

#[test]
fn near_pair_in_c_contracts() {
    let m = growth_model(16);
    let xi = (16f64).powf(0.1 / 3.0);
    let center = drift_center(&m.design);
    let pool = stationary_pool(&m, 4, 100, 5).unwrap();
    for k in 0..4u64 {
        let (a, b) = sample_pair(&m, &center, &pool.states[k as usize], true, xi, &mut stream(67, k));
        let rec = pair_record(&m, &a, &b, xi, 1000, &mut stream(68, k)).unwrap();
        assert!(rec.inside, "V + V' = {} > {xi}", rec.v_sum);
        assert!(rec.mean_ratio < 1.0, "ratio {}", rec.mean_ratio);
    }
}

/// Two groups with the same rows are exchangeable.
fn twin_model() -> Model {
    let base = random_data(&mut stream(69, 0), 2, &[3, 4, 2]);
    let (y0, x0) = base.group(0);
    let (y1, x1) = base.group(1);
    let (y2, x2) = base.group(2);
    let mut y = Vec::new();
    let mut x = Vec::new();
    for (yy, xx) in [(y0, x0), (y1, x1), (y0, x0), (y2, x2)] {
        y.extend_from_slice(yy);
        x.extend_from_slice(xx);
    }
    Model::new(MixedModelData::from_flat(2, vec![3, 4, 3, 2], y, x).unwrap(), Hyperparameters::default()).unwrap()
}

fn swap(s: &ChainState, i: usize, j: usize) -> ChainState {
    let mut t = s.clone();
    t.eta.swap(i, j);
    t
}

#[test]
fn swapping_identical_groups_preserves_ratios() {
    let m = twin_model();
    let a = random_state(&mut stream(70, 1), 2, 4, 1.0);
    let b = random_state(&mut stream(70, 2), 2, 4, 1.0);
    let (sa, sb) = (swap(&a, 0, 2), swap(&b, 0, 2));
    assert!((a.distance(&b) - sa.distance(&sb)).abs() < 1e-15);
    for k in 0..200 {
        let nd = noise(&m, 71, k);
        let mut swapped = nd.clone();
        swapped.ni.swap(0, 2);
        let (fa, fb) = coupled_step(&a, &b, &nd, &m).unwrap();
        let (ga, gb) = coupled_step(&sa, &sb, &swapped, &m).unwrap();
        // images are swaps of each other
        assert!(swap(&fa, 0, 2).distance(&ga) < 1e-12 * (1.0 + fa.distance(&ChainState::zeros(2, 4))));
        let (r, rs) = (fa.distance(&fb), ga.distance(&gb));
        assert!((r - rs).abs() <= 1e-12 * r.max(1e-300), "{r} vs {rs}");
    }
    // and the ratio distributions agree under independent noise
    let ra = pair_record(&m, &a, &b, 1.0, 3000, &mut stream(72, 0)).unwrap().ratios;
    let rb = pair_record(&m, &sa, &sb, 1.0, 3000, &mut stream(72, 1)).unwrap().ratios;
    assert!(ks_two_sample(&ra, &rb).1 > 0.001);
}

#[test]
fn contraction_is_deterministic_and_schedule_free() {
    let m = small_model(73);
    let cfg = small_config(9);
    let runs: Vec<ContractionEstimate> = [1, 3]
        .iter()
        .map(|&t| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .unwrap()
                .install(|| estimate_contraction(&m, &cfg).unwrap())
        })
        .collect();
    let again = estimate_contraction(&m, &cfg).unwrap();
    for r in runs.iter().chain([&again]) {
        assert_eq!(r.gamma_in.map(f64::to_bits), runs[0].gamma_in.map(f64::to_bits));
        assert_eq!(r.gamma_out.map(f64::to_bits), runs[0].gamma_out.map(f64::to_bits));
        assert_eq!(r.pairs, runs[0].pairs);
    }
}

#[test]
fn contraction_counts_and_envelope() {
    let m = small_model(74);
    let cfg = CouplingConfig {
        pairs: 30,
        ..small_config(10)
    };
    let est = estimate_contraction(&m, &cfg).unwrap();
    assert_eq!(est.n_in + est.n_out, cfg.pairs);
    assert!(est.n_in > 0 && est.n_out > 0);
    let g_out = est.gamma_out.unwrap();
    assert!(est.gamma_in.unwrap() >= 0.0 && g_out >= 0.0);
    for r in est.pairs.iter().filter(|r| !r.inside) {
        assert!(g_out * r.distance >= r.mean_displacement * (1.0 - 1e-15));
        assert!(r.v_sum > est.xi);
    }
    for r in est.pairs.iter().filter(|r| r.inside) {
        assert!(r.v_sum <= est.xi);
    }
}

#[test]
fn empty_region_is_absent_not_zero() {
    let m = small_model(75);
    let cfg = CouplingConfig {
        xi: Some(1e300),
        ..small_config(11)
    };
    let est = estimate_contraction(&m, &cfg).unwrap();
    assert_eq!(est.n_out, 0);
    assert!(est.gamma_out.is_none() && est.ci_halfwidth_out.is_none());
    assert!(est.gamma_in.is_some());
}

#[test]
fn contraction_config_rejects_zero_counts() {
    let m = small_model(76);
    for cfg in [
        CouplingConfig { pairs: 0, ..small_config(1) },
        CouplingConfig { reps_per_pair: 0, ..small_config(1) },
        CouplingConfig { delta: 0.0, ..small_config(1) },
        CouplingConfig { xi: Some(-1.0), ..small_config(1) },
    ] {
        assert!(estimate_contraction(&m, &cfg).is_err());
    }
}

#[test]
fn drift_requires_two_reps() {
    let m = small_model(77);
    let probes: Vec<ChainState> = drift_probes(&m, 4, 1).into_iter().map(|(_, s)| s).collect();
    assert!(estimate_drift(&m, &probes, 1, 0).is_err());
    assert!(estimate_drift(&m, &[], 5, 0).is_err());
}

#[test]
fn drift_with_single_abscissa_is_flat() {
    let m = small_model(78);
    let s = random_state(&mut stream(78, 1), 2, 4, 2.0);
    let probes = vec![s; 6];
    let est = estimate_drift(&m, &probes, 50, 3).unwrap();
    let umax = est.probes.iter().map(|p| p.upper).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(est.zeta_hat, 0.0);
    assert_eq!(est.l_hat, umax);
}

#[test]
fn drift_envelope_covers_every_probe() {
    let m = small_model(79);
    let probes: Vec<ChainState> = drift_probes(&m, 30, 2).into_iter().map(|(_, s)| s).collect();
    let v: Vec<f64> = probes.iter().map(|s| m.drift_v(s)).collect();
    let spread = v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread > 100.0, "probes span {spread}");
    let est = estimate_drift(&m, &probes, 40, 4).unwrap();
    assert!(est.l_hat >= 0.0 && est.zeta_hat >= 0.0);
    for p in &est.probes {
        assert!(p.upper <= est.zeta_hat * p.v + est.l_hat + 1e-12 * (1.0 + p.upper.abs()));
    }
    assert!(est.fit_residual_max <= 1e-9);
}

/// `y + c` moves `μ` by `c`: `η₀` by `√q·c` and each `η_i` by `c`.
fn shift_state(s: &ChainState, c: f64, q: usize) -> ChainState {
    ChainState {
        eta00: s.eta00.clone(),
        eta0: s.eta0 + (q as f64).sqrt() * c,
        eta: s.eta.iter().map(|e| e + c).collect(),
    }
}

#[test]
fn chain_is_equivariant_under_response_shift() {
    let m = small_model(80);
    let c = 2.5;
    let shifted = Model::new(m.data.shift_responses(c), m.hyper).unwrap();
    let probes: Vec<ChainState> = drift_probes(&m, 12, 5).into_iter().map(|(_, s)| s).collect();
    for (k, s) in probes.iter().enumerate() {
        let nd = noise(&m, 86, k as u64);
        let expect = shift_state(&random_map(s, &nd, &m).unwrap(), c, m.q());
        let got = random_map(&shift_state(s, c, m.q()), &nd, &shifted).unwrap();
        assert!(got.distance(&expect) < 1e-9 * (1.0 + expect.distance(&ChainState::zeros(2, 4))));
    }
    // V itself is anchored at the grand mean and is not shift invariant
    let s = &probes[0];
    assert!((m.drift_v(s) - shifted.drift_v(&shift_state(s, c, m.q()))).abs() > 1e-3);
}

#[test]
fn curve_starts_at_initial_distance() {
    let m = small_model(81);
    let start = random_state(&mut stream(81, 1), 2, 4, 3.0);
    // with no burn-in every partner starts at the minimizer of V
    let curve = wasserstein_curve(&m, &start, 10, 7, 0, 12).unwrap();
    let d0 = vec![start.distance(&drift_center(&m.design)); 7];
    assert_eq!(curve.points[0].w_hat, mixedgibbs_core::diagnostics::mean(&d0));
    assert_eq!(curve.points.len(), 11);
    for p in &curve.points {
        assert!(p.w_hat >= 0.0 && p.ci_lo <= p.w_hat && p.w_hat <= p.ci_hi);
    }
}

#[test]
fn curve_from_partner_start_vanishes() {
    let m = small_model(82);
    let curve = wasserstein_curve(&m, &drift_center(&m.design), 15, 5, 0, 13).unwrap();
    assert!(curve.points.iter().all(|p| p.w_hat == 0.0));
    assert_eq!(geometric_decay_rate(&curve.points), 0.0);
}

#[test]
fn curve_is_reproducible() {
    let m = small_model(83);
    let start = random_state(&mut stream(83, 1), 2, 4, 3.0);
    let a = wasserstein_curve(&m, &start, 20, 8, 30, 14).unwrap();
    let b = wasserstein_curve(&m, &start, 20, 8, 30, 14).unwrap();
    assert_eq!(a, b);
    assert!(wasserstein_curve(&m, &start, 20, 0, 30, 14).is_err());
}

#[test]
fn maps_agree_with_random_map() {
    let m = small_model(84);
    let a = random_state(&mut stream(84, 1), 2, 4, 1.0);
    let b = random_state(&mut stream(84, 2), 2, 4, 1.0);
    let nd = noise(&m, 85, 0);
    let (fa, fb) = coupled_step(&a, &b, &nd, &m).unwrap();
    assert_eq!(fa, random_map(&a, &nd, &m).unwrap());
    assert_eq!(fb, random_map(&b, &nd, &m).unwrap());
}
