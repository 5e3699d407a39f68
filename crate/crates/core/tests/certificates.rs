mod common;

use proptest::prelude::*;
use viterbi_par::certificates::{
    certify, certify_linear_gaussian, cor3_bound, cor3_bound_from, empirical_decay_convexity,
    empirical_hessian_slack, feasible_gamma_interval, lambda_max, thm1_bound_from, thm2_bound_from,
    DecayConvexityCertificate,
};
use viterbi_par::models::{alpha_from_betas, LinearGaussianSignal};

fn constants() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.01f64..10.0, 0.01f64..10.0, 0.0f64..5.0)
}

proptest! {
    #[test]
    fn interval_is_exactly_where_both_conditions_hold((zeta, zt, theta) in constants(), probe in 0.001f64..=1.0) {
        let cert = DecayConvexityCertificate::from_constants("test", zeta, zt, theta, 0.0);
        let quad = zeta > theta * (1.0 + probe).powi(2) / (2.0 * probe);
        let lin = zt > theta * (1.0 + probe) / (2.0 * probe);
        let iv = feasible_gamma_interval(&cert);
        let inside = iv.is_some_and(|iv| iv.contains(probe));
        let lower = iv.map_or(0.0, |iv| iv.lower);
        // Skip probes within rounding distance of the computed endpoint.
        if (probe - lower).abs() > 1e-9 {
            prop_assert_eq!(inside, quad && lin, "γ = {}, interval {:?}", probe, iv);
        }
        if inside {
            let l = lambda_max(&cert, probe).unwrap();
            let expect = (zeta - theta * (1.0 + probe).powi(2) / (2.0 * probe))
                .min(zt - theta * (1.0 + probe) / (2.0 * probe));
            prop_assert!((l - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
            prop_assert!(l > 0.0);
        }
    }

    #[test]
    fn feasibility_at_one_matches_condition((zeta, zt, theta) in constants()) {
        let cert = DecayConvexityCertificate::from_constants("test", zeta, zt, theta, 0.0);
        let condition = theta < (zeta / 2.0).min(zt);
        prop_assert_eq!(cert.feasible, condition);
        if condition {
            let l = lambda_max(&cert, 1.0).unwrap();
            prop_assert!((l - (zeta - 2.0 * theta).min(zt - theta)).abs() <= 1e-12 * (1.0 + l.abs()));
        }
    }

    #[test]
    fn isotropic_certificates_do_not_depend_on_dimension(
        a in -0.99f64..0.99,
        s2 in 0.01f64..4.0,
        d in 2usize..40,
        lg in -1.0f64..0.2,
    ) {
        let one = certify_linear_gaussian(&LinearGaussianSignal::isotropic_ar1(1, a, s2, true).unwrap(), lg).unwrap();
        let many = certify_linear_gaussian(&LinearGaussianSignal::isotropic_ar1(d, a, s2, true).unwrap(), lg).unwrap();
        prop_assert_eq!(one, many);
    }

    #[test]
    fn bounds_are_nonincreasing_in_lambda(
        betas in prop::collection::vec(0.0f64..10.0, 40),
        gamma in 0.05f64..0.99,
        l1 in 0.01f64..3.0,
        l2 in 0.01f64..3.0,
        chi in 0.0f64..10.0,
        n in 1usize..20,
    ) {
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let eta = |m: usize, r: f64| -> viterbi_par::Result<f64> { Ok(betas[m] + chi * r / gamma) };
        let t1 = |l| thm1_bound_from(&betas, eta, gamma, l, n, 39).unwrap();
        prop_assert!(t1(hi) <= t1(lo) * (1.0 + 1e-12));
        let t2 = |l| thm2_bound_from(&betas, chi, gamma, l, n, 39);
        prop_assert!(t2(hi) <= t2(lo) * (1.0 + 1e-12));
        let c3 = |l| cor3_bound_from(&betas, chi, gamma, l, 10, 5, 29);
        prop_assert!(c3(hi) <= c3(lo) * (1.0 + 1e-12));
    }

    #[test]
    fn segment_bound_decreases_in_overlap_for_constant_betas(
        beta in 0.01f64..5.0,
        gamma in 0.05f64..0.99,
        lambda in 0.05f64..2.0,
        chi in 0.0f64..10.0,
    ) {
        // With constant β the leading term shrinks in δ once γ^{Δ+1}(1+γ) ≤ 1.
        let big_delta = ((1.0 + gamma).ln() / -gamma.ln()).ceil() as usize;
        let betas = vec![beta; big_delta + 301];
        let mut prev = f64::INFINITY;
        for delta in 0..=100 {
            let b = cor3_bound_from(&betas, chi, gamma, lambda, big_delta, delta, 300);
            prop_assert!(b <= prev * (1.0 + 1e-12), "δ = {}: {} > {}", delta, b, prev);
            prev = b;
        }
    }

    #[test]
    fn alpha_recursion(betas in prop::collection::vec(0.0f64..10.0, 2..30), gamma in 0.01f64..=1.0) {
        let n = betas.len() - 1;
        let direct: f64 = (0..=n).map(|m| gamma.powi((n - m) as i32) * betas[m]).sum();
        let a = alpha_from_betas(&betas, gamma, n);
        prop_assert!((a - direct).abs() <= 1e-12 * direct.max(1.0));
        if n >= 1 {
            let prev = alpha_from_betas(&betas, gamma, n - 1);
            prop_assert!((a - (gamma * prev + betas[n])).abs() <= 1e-12 * a.max(1.0));
        }
    }
}

#[test]
fn certified_model_satisfies_decay_convexity_and_unit_weight_restatement() {
    for d in [1, 3] {
        let m = common::isotropic_gaussian(d, 0.5, 1.0, 1.0, 60, 9);
        let cert = certify(&m).unwrap();
        assert!(cert.feasible);
        let check = empirical_decay_convexity(&m, &cert, 400, 17).unwrap();
        assert!(check.min_slack >= -1e-10, "{check:?}");
        assert!(check.min_slack_gamma_one >= -1e-10, "{check:?}");
        let (g, l) = cert.choice().unwrap();
        assert!(empirical_hessian_slack(&m, g, l, 50, 3).unwrap() >= -1e-6);
    }
}

#[test]
fn huber_certificate_holds_empirically_when_feasible() {
    use nalgebra::DMatrix;
    use viterbi_par::models::{simulate, DriftMap, HuberNonlinearSignal};
    use viterbi_par::{Likelihood, ModelSpec, Signal};
    let d = 2;
    let drift = DriftMap {
        matrix: DMatrix::identity(d, d) * 0.2,
        tanh_scale: 0.1,
    };
    let s = Signal::Huber(HuberNonlinearSignal::new(drift, vec![0.0; d], vec![0.0; d], 1.0, None).unwrap());
    let lik = Likelihood::Gaussian {
        c: DMatrix::identity(d, d),
        r: DMatrix::identity(d, d) * 0.2,
    };
    let sim = simulate(&s, &lik, 40, 1).unwrap();
    let m = ModelSpec::new(s, lik, sim.observations).unwrap();
    let cert = certify(&m).unwrap();
    assert!(cert.feasible, "{cert:?}");
    let check = empirical_decay_convexity(&m, &cert, 400, 5).unwrap();
    assert!(check.min_slack >= -1e-10, "{check:?}");
    assert!(check.min_slack_gamma_one >= -1e-10, "{check:?}");
}

#[test]
fn segment_bound_on_simulated_data_decreases_in_overlap() {
    let m = common::isotropic_gaussian(2, 0.5, 1.0, 1.0, 399, 21);
    let cert = certify(&m).unwrap();
    let mut prev = f64::INFINITY;
    for delta in (0..=100).step_by(10) {
        let b = cor3_bound(&m, &cert, 99, delta, 300).unwrap().value;
        assert!(b <= prev, "δ = {delta}: {b} > {prev}");
        prev = b;
    }
}
