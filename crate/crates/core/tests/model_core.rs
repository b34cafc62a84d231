mod oracles;

use mixedgibbs_core::linalg::{max_eigenvalue, min_eigenvalue, psd_dominates};
use mixedgibbs_core::model::*;
use mixedgibbs_core::rng::stream;
use nalgebra::DMatrix;
use oracles::*;
use proptest::prelude::*;

fn sizes_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..6, 2..7)
}

#[test]
fn design_matches_reference_loops() {
    let data = random_data(&mut stream(1, 0), 2, &[2, 3, 1]);
    let d = DerivedDesign::build(&data);
    let nd = naive_design(&data);
    assert_eq!((d.n, d.q, d.p), (6, 3, 2));
    assert!((d.r_bar - 2.0).abs() < 1e-15);
    assert!(mat_rel_err(&d.xtx, &nd.xtx) < 1e-12);
    assert!(mat_rel_err(&d.xbtxb, &nd.xbtxb) < 1e-12);
    assert!(vec_rel_err(&d.xty, &nd.xty) < 1e-12);
    assert!(rel_close(d.sum_y_sq, nd.sum_y_sq, 1e-12));
    assert!(rel_close(d.within_group_ss, nd.within_group_ss, 1e-12));
    assert!(rel_close(d.ybar_grand, nd.ybar_grand, 1e-12));
    for i in 0..3 {
        assert!(rel_close(d.ybar[i], nd.ybar[i], 1e-12));
        for a in 0..2 {
            assert!(rel_close(d.xbar[i][a], nd.xbar[i][a], 1e-12));
        }
    }
    assert!(mat_rel_err(&d.within_xx, &(&nd.xtx - &nd.xbtxb)) < 1e-12);
}

#[test]
fn singleton_group_means() {
    let data = MixedModelData::from_groups(1, vec![vec![3.0], vec![5.0]], vec![vec![vec![0.0]], vec![vec![1.0]]]).unwrap();
    let d = DerivedDesign::build(&data);
    assert_eq!(d.ybar, vec![3.0, 5.0]);
    assert_eq!(d.ybar_grand, 4.0);
    assert_eq!(d.n, 2);
    assert_eq!(d.r_bar, 1.0);
}

#[test]
fn constant_covariate_within_group() {
    let data = MixedModelData::from_groups(1, vec![vec![0.3, -0.2]], vec![vec![vec![1.0], vec![1.0]]]).unwrap();
    let d = DerivedDesign::build(&data);
    assert_eq!(d.xtx[(0, 0)], 2.0);
    assert_eq!(d.xbtxb[(0, 0)], 2.0);
    assert_eq!(d.within_xx[(0, 0)], 0.0);
}

#[test]
fn non_finite_input_names_the_cell() {
    let err = MixedModelData::from_groups(1, vec![vec![1.0], vec![2.0, f64::NAN]], vec![vec![vec![0.0]], vec![vec![0.0], vec![1.0]]]).unwrap_err();
    assert!(matches!(err, mixedgibbs_core::Error::NonFinite { group: 1, obs: 1, .. }), "{err}");
}

#[test]
fn stats_examples_and_reference() {
    let data = MixedModelData::from_groups(1, vec![vec![0.0]], vec![vec![vec![0.0]]]).unwrap();
    let s = ChainState {
        eta00: vec![0.0],
        eta0: 1.0,
        eta: vec![2.0],
    };
    assert_eq!(sufficient_stats(&s, &data).group_penalty, 1.0);

    let mut rng = stream(2, 0);
    for _ in 0..20 {
        let data = random_data(&mut rng, 3, &[1, 4, 2, 3]);
        let s = random_state(&mut rng, 3, 4, 2.0);
        let st = sufficient_stats(&s, &data);
        let (gp, rs) = naive_stats(&s, &data);
        assert!(rel_close(st.group_penalty, gp, 1e-12));
        assert!(rel_close(st.residual_sum, rs, 1e-12));
    }
}

#[test]
fn drift_examples() {
    let zero = MixedModelData::from_groups(2, vec![vec![0.0, 0.0], vec![0.0]], vec![vec![vec![1.0, 2.0], vec![0.5, -1.0]], vec![vec![3.0, 1.0]]]).unwrap();
    let d = DerivedDesign::build(&zero);
    assert_eq!(drift_v(&ChainState::zeros(2, 2), &d), 0.0);

    let one = MixedModelData::from_groups(1, vec![vec![2.0]], vec![vec![vec![0.0]]]).unwrap();
    let d = DerivedDesign::build(&one);
    assert_eq!(drift_v(&ChainState::zeros(1, 1), &d), 4.0);
}

#[test]
fn drift_matches_reference() {
    let mut rng = stream(3, 0);
    for _ in 0..20 {
        let data = random_data(&mut rng, 2, &[3, 1, 5, 2, 2]);
        let d = DerivedDesign::build(&data);
        let s = random_state(&mut rng, 2, 5, 3.0);
        assert!(rel_close(drift_v(&s, &d), naive_v(&s, &data), 1e-12));
    }
}

#[test]
fn drift_center_minimizes() {
    let mut rng = stream(4, 0);
    let data = random_data(&mut rng, 2, &[3, 4, 2]);
    let d = DerivedDesign::build(&data);
    let c = drift_center(&d);
    let v0 = drift_v(&c, &d);
    for _ in 0..200 {
        let dir = random_state(&mut rng, 2, 3, 1e-3);
        assert!(drift_v(&c.offset(&dir.to_vec(), 1.0), &d) >= v0 - 1e-14);
    }
}

#[test]
fn log_joint_linear_in_b1() {
    let data = random_data(&mut stream(5, 0), 1, &[2, 3]);
    let s = random_state(&mut stream(5, 1), 1, 2, 1.0);
    let h = Hyperparameters::default();
    let h2 = Hyperparameters { b1: h.b1 + 0.7, ..h };
    let lam = 1.3;
    let a = log_unnormalized_joint(&s, lam, 0.4, &data, &h).unwrap();
    let b = log_unnormalized_joint(&s, lam, 0.4, &data, &h2).unwrap();
    assert!((b - a + 0.7 * lam).abs() < 1e-12);
}

#[test]
fn log_joint_state_differences() {
    let mut rng = stream(6, 0);
    let data = random_data(&mut rng, 2, &[2, 1, 3]);
    let h = Hyperparameters::default();
    let (lam, tau) = (0.8, 2.1);
    let s1 = random_state(&mut rng, 2, 3, 1.0);
    let s2 = random_state(&mut rng, 2, 3, 1.0);
    let diff = log_unnormalized_joint(&s1, lam, tau, &data, &h).unwrap() - log_unnormalized_joint(&s2, lam, tau, &data, &h).unwrap();
    let (g1, r1) = naive_stats(&s1, &data);
    let (g2, r2) = naive_stats(&s2, &data);
    let expect = -0.5 * lam * (g1 - g2) - 0.5 * tau * (r1 - r2);
    assert!(rel_close(diff, expect, 1e-12));
    // and against the from-scratch joint, up to one constant
    let n1 = naive_log_joint(&s1, lam, tau, &data, &h) - naive_log_joint(&s2, lam, tau, &data, &h);
    assert!(rel_close(diff, n1, 1e-12));
}

#[test]
fn log_joint_rejects_nonpositive_precisions() {
    let data = random_data(&mut stream(7, 0), 1, &[2, 2]);
    let s = ChainState::zeros(1, 2);
    let h = Hyperparameters::default();
    assert!(log_unnormalized_joint(&s, 0.0, 1.0, &data, &h).is_err());
    assert!(log_unnormalized_joint(&s, 1.0, -1.0, &data, &h).is_err());
}

/// For fixed `(λ, τ)` on the tiny `q = 2, p = 1, r = (1, 1)` model, the
/// exponentiated joint normalized by grid quadrature over `η ∈ R⁴` must
/// integrate to one and coincide with the Gaussian conditional derived
/// independently from the quadratic form.
#[test]
fn log_joint_normalized_by_quadrature() {
    let data = MixedModelData::from_groups(1, vec![vec![0.7], vec![-0.4]], vec![vec![vec![1.2]], vec![vec![-0.5]]]).unwrap();
    let h = Hyperparameters::default();
    let (lam, tau) = (1.5, 2.0);
    let g = GaussianConditional::new(lam, tau, &data);
    let k = 41;
    let half = 8.0;
    let sds: Vec<f64> = (0..4).map(|i| g.cov[(i, i)].sqrt()).collect();
    let step: Vec<f64> = sds.iter().map(|s| 2.0 * half * s / (k - 1) as f64).collect();
    let at = |idx: [usize; 4]| -> ChainState {
        let v: Vec<f64> = (0..4).map(|i| g.mean[i] - half * sds[i] + idx[i] as f64 * step[i]).collect();
        ChainState::from_slice(1, 2, &v).unwrap()
    };
    let shift = log_unnormalized_joint(&g.mean_state(1, 2), lam, tau, &data, &h).unwrap();
    let mut z = 0.0;
    for a in 0..k {
        for b in 0..k {
            for c in 0..k {
                for d in 0..k {
                    z += (log_unnormalized_joint(&at([a, b, c, d]), lam, tau, &data, &h).unwrap() - shift).exp();
                }
            }
        }
    }
    z *= step.iter().product::<f64>();
    let log_z = z.ln() + shift;
    for idx in [[20, 20, 20, 20], [10, 25, 30, 18], [5, 35, 22, 27]] {
        let s = at(idx);
        let normalized = log_unnormalized_joint(&s, lam, tau, &data, &h).unwrap() - log_z;
        assert!((normalized - g.log_density(&s)).abs() < 1e-8, "{normalized} vs {}", g.log_density(&s));
    }
    // Normalized density integrates to one on the same grid by construction;
    // check the Gaussian normalizer agrees with the quadrature constant.
    let analytic = shift - g.log_density(&g.mean_state(1, 2));
    assert!((log_z - analytic).abs() < 1e-8);
}

#[test]
fn assumption_examples() {
    let mut rng = stream(8, 0);
    let balanced = random_data(&mut rng, 2, &[4, 4, 4, 4, 4]);
    let r = check_assumptions(&DerivedDesign::build(&balanced), 0.1, &AssumptionThresholds::default()).unwrap();
    assert_eq!(r.m_hat, 1.0);

    let ones = MixedModelData::from_flat(1, vec![2, 3], vec![1.0; 5], vec![0.1, -0.3, 0.8, 1.1, -2.0]).unwrap();
    let r = check_assumptions(&DerivedDesign::build(&ones), 0.1, &AssumptionThresholds::default()).unwrap();
    assert!((r.ell_hat - 1.0).abs() < 1e-15);
}

#[test]
fn assumption_eigenvalues_match_reference_eigensolver() {
    let mut rng = stream(9, 0);
    let sizes = vec![3usize; 50];
    let data = random_data(&mut rng, 3, &sizes);
    let d = DerivedDesign::build(&data);
    let r = check_assumptions(&d, 0.1, &AssumptionThresholds::default()).unwrap();
    let nd = naive_design(&data);
    let scale = 1.0 / (d.r_bar * 50.0);
    let k1 = jacobi_eigenvalues((&nd.xtx - &nd.xbtxb) * scale).into_iter().fold(f64::INFINITY, f64::min);
    let k2 = jacobi_eigenvalues(&nd.xtx * scale).into_iter().fold(f64::NEG_INFINITY, f64::max);
    assert!(r.k1_hat > 0.0 && r.k2_hat.is_finite());
    assert!((r.k1_hat - k1).abs() < 1e-8, "{} vs {k1}", r.k1_hat);
    assert!((r.k2_hat - k2).abs() < 1e-8, "{} vs {k2}", r.k2_hat);
    assert!(r.k1_hat <= r.k2_hat + 1e-10);
}

/// Cyclic Jacobi rotations, written out independently of the library's
/// eigensolver.
fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).collect()
}

#[test]
fn p_at_least_n_warns() {
    let data = random_data(&mut stream(10, 0), 3, &[1, 1]);
    let r = check_assumptions(&DerivedDesign::build(&data), 0.1, &AssumptionThresholds::default()).unwrap();
    assert!(r.warning.is_some());
    assert_eq!(r.k1_hat, 0.0);
}

#[test]
fn dataset_csv_roundtrip() {
    let data = random_data(&mut stream(11, 0), 2, &[2, 1, 3]);
    let mut buf = Vec::new();
    write_csv(&data, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("group,y,x1,x2\n"));
    let back = read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, data);
}

#[test]
fn dataset_csv_rejects_non_contiguous_groups() {
    let text = "group,y,x1\n0,1.0,0.5\n1,2.0,0.1\n0,0.3,0.2\n";
    assert!(read_csv(text.as_bytes()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn drift_nonnegative_and_convex(seed in any::<u64>(), scale in 0.01f64..50.0) {
        let mut rng = stream(seed, 0);
        let data = random_data(&mut rng, 2, &[3, 2, 4]);
        let d = DerivedDesign::build(&data);
        let a = random_state(&mut rng, 2, 3, scale);
        let b = random_state(&mut rng, 2, 3, scale);
        let (va, vb) = (drift_v(&a, &d), drift_v(&b, &d));
        let vm = drift_v(&a.lerp(&b, 0.5), &d);
        prop_assert!(va >= 0.0 && vb >= 0.0);
        prop_assert!(vm <= 0.5 * (va + vb) + 1e-12 * (1.0 + va + vb));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn stats_invariant_under_within_group_permutation(seed in any::<u64>(), sizes in sizes_strategy(), rot in 0usize..6) {
        let mut rng = stream(seed, 0);
        let p = 2;
        let data = random_data(&mut rng, p, &sizes);
        let s = random_state(&mut rng, p, sizes.len(), 1.5);
        let mut ys = Vec::new();
        let mut xs = Vec::new();
        for i in 0..sizes.len() {
            let mut g = rows(&data, i);
            let k = rot % g.len();
            g.rotate_left(k);
            g.reverse();
            ys.push(g.iter().map(|r| r.0).collect::<Vec<_>>());
            xs.push(g.into_iter().map(|r| r.1).collect::<Vec<_>>());
        }
        let permuted = MixedModelData::from_groups(p, ys, xs).unwrap();
        let a = sufficient_stats(&s, &data);
        let b = sufficient_stats(&s, &permuted);
        prop_assert!(rel_close(a.group_penalty, b.group_penalty, 1e-15));
        prop_assert!(rel_close(a.residual_sum, b.residual_sum, 1e-12));
    }

    #[test]
    fn log_joint_lambda_derivative(seed in any::<u64>(), lam in 0.2f64..5.0, tau in 0.2f64..5.0) {
        let mut rng = stream(seed, 0);
        let data = random_data(&mut rng, 1, &[2, 3, 1]);
        let s = random_state(&mut rng, 1, 3, 1.0);
        let h = Hyperparameters::default();
        let eps = 1e-5 * lam;
        let f = |l: f64| log_unnormalized_joint(&s, l, tau, &data, &h).unwrap();
        let fd = (f(lam + eps) - f(lam - eps)) / (2.0 * eps);
        let gp = sufficient_stats(&s, &data).group_penalty;
        let exact = (3.0 / 2.0 + h.a1 - 1.0) / lam - h.b1 - gp / 2.0;
        prop_assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()), "{} vs {}", fd, exact);
    }

    #[test]
    fn data_inequality_facts(seed in any::<u64>(), sizes in sizes_strategy(), p in 1usize..4) {
        let data = random_data(&mut stream(seed, 0), p, &sizes);
        let d = DerivedDesign::build(&data);
        let scale = 1.0 + d.xtx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // X̄ᵀX̄ ≼ XᵀX
        prop_assert!(psd_dominates(&d.xbtxb, &d.xtx, 1e-10).unwrap());
        prop_assert!(min_eigenvalue(&(&d.xtx - &d.xbtxb)) >= -1e-10 * scale);
        // ȲᵀȲ ≤ YᵀY
        let ybty: f64 = d.ybar.iter().zip(&d.group_sizes).map(|(y, &r)| r as f64 * y * y).sum();
        prop_assert!(ybty <= d.sum_y_sq * (1.0 + 1e-12));
        let sum_ybar_sq: f64 = d.ybar.iter().map(|y| y * y).sum();
        prop_assert!(sum_ybar_sq <= d.sum_y_sq / d.r_min as f64 * (1.0 + 1e-12));
        prop_assert!(d.ybar_grand.powi(2) <= d.sum_y_sq / (d.q as f64 * d.r_min as f64) * (1.0 + 1e-12));
        prop_assert!(max_eigenvalue(&d.xbtxb) <= max_eigenvalue(&d.xtx) * (1.0 + 1e-10) + 1e-10 * scale);
    }
}
