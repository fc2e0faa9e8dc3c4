use nalgebra::{DMatrix, DVector};

use score_core::certifier::{
    binary_search_rho, certify_level, linearization_seed, CertifyConfig, Decision,
    LinearizationConfig, SearchConfig,
};
use score_core::dynamics::{make_reversed_vdp, make_scalar_cubic, OdeSystem};
use score_core::lyapunov::{make_poly_dictionary, GramCandidate};
use score_core::synthesis::{synthesize, SynthesisConfig};
use score_core::ScoreError;

fn diag_system(d: &[f64]) -> OdeSystem {
    OdeSystem::linear(DMatrix::from_diagonal(&DVector::from_column_slice(d))).unwrap()
}

fn quick(seed: u64) -> CertifyConfig {
    let mut cfg = CertifyConfig::new(seed);
    cfg.sampler.k_steps = 100;
    cfg.sampler.n_blocks = 30;
    cfg.evt.b_resamples = 200;
    cfg
}

#[test]
fn constant_negative_lie_derivative_certifies_exactly() {
    let sys = diag_system(&[-1.0, -1.0]);
    let id = GramCandidate::identity(2).unwrap();
    let r = certify_level(&sys, &id, 1.0, &CertifyConfig::new(0)).unwrap();
    assert_eq!(r.decision, Decision::Certified);
    assert!(r.degenerate);
    assert_eq!(r.ci_upper, Some(-2.0));
    assert!(r.gev.is_none());
}

#[test]
fn cubic_outside_the_basin_is_rejected_with_a_counterexample() {
    let sys = make_scalar_cubic();
    let id = GramCandidate::identity(1).unwrap();
    let r = certify_level(&sys, &id, 1.21, &quick(1)).unwrap();
    assert_eq!(r.decision, Decision::Rejected);
    let cx = r.counterexample.expect("counterexample");
    assert!(cx.vdot >= 0.0);
    assert!((cx.v - 1.21).abs() <= 1e-9);
    let x2 = cx.state[0] * cx.state[0];
    assert!((cx.vdot - 2.0 * x2 * (x2 - 1.0)).abs() <= 1e-9);
}

#[test]
fn anisotropic_planar_system_certifies_above_the_oracle() {
    let sys = diag_system(&[-1.0, -3.0]);
    let id = GramCandidate::identity(2).unwrap();
    let r = certify_level(&sys, &id, 1.0, &CertifyConfig::new(2)).unwrap();
    assert_eq!(r.decision, Decision::Certified, "{}", r.reason);
    let ci = r.ci_upper.unwrap();
    assert!((-2.0..=-1.5).contains(&ci), "{ci}");
    assert!(r.diagnostics.empirical_max < 0.0);
    assert!(ci >= r.diagnostics.empirical_max);
    assert!(r.ks.unwrap().passed);
}

#[test]
fn certified_results_respect_the_soundness_gate() {
    let id = GramCandidate::identity(2).unwrap();
    for (k, d) in [[-1.0, -3.0], [-0.5, -0.7], [-2.0, -4.0]].iter().enumerate() {
        let sys = diag_system(d);
        let r = certify_level(&sys, &id, 0.5, &quick(10 + k as u64)).unwrap();
        if r.decision == Decision::Certified {
            assert!(r.ci_upper.unwrap() < 0.0);
            assert!(r.diagnostics.empirical_max < 0.0);
        }
    }
}

#[test]
fn certification_is_reproducible() {
    let sys = diag_system(&[-1.0, -3.0]);
    let id = GramCandidate::identity(2).unwrap();
    let a = certify_level(&sys, &id, 1.0, &quick(3)).unwrap();
    let b = certify_level(&sys, &id, 1.0, &quick(3)).unwrap();
    assert_eq!(a.decision, b.decision);
    assert_eq!(a.ci_upper, b.ci_upper);
    assert_eq!(a.block_maxima, b.block_maxima);
}

#[test]
fn non_positive_level_is_an_error() {
    let sys = diag_system(&[-1.0, -3.0]);
    let id = GramCandidate::identity(2).unwrap();
    assert!(certify_level(&sys, &id, 0.0, &quick(0)).is_err());
}

#[test]
fn globally_stable_search_reaches_the_upper_end() {
    let sys = diag_system(&[-1.0, -1.0]);
    let id = GramCandidate::identity(2).unwrap();
    let cfg = SearchConfig {
        certify: quick(4),
        rel_tol: 0.02,
        max_iters: 60,
    };
    let r = binary_search_rho(&sys, &id, 0.1, 10.0, &cfg).unwrap();
    assert!(r.rho_star >= 10.0 * (1.0 - 0.02), "{}", r.rho_star);
    assert!(r.trace.iter().all(|t| t.decision == Decision::Certified));
}

#[test]
fn cubic_search_trace_is_a_bisection() {
    let sys = make_scalar_cubic();
    let id = GramCandidate::identity(1).unwrap();
    let cfg = SearchConfig {
        certify: quick(5),
        rel_tol: 0.05,
        max_iters: 60,
    };
    let r = binary_search_rho(&sys, &id, 0.01, 4.0, &cfg).unwrap();
    assert!(r.rho_star < 1.0, "{}", r.rho_star);
    assert_eq!(r.trace.len(), r.iterations + 1);
    let certified: Vec<f64> = r.trace.iter().filter(|t| t.decision == Decision::Certified).map(|t| t.rho).collect();
    let rejected: Vec<f64> = r.trace.iter().filter(|t| t.decision != Decision::Certified).map(|t| t.rho).collect();
    assert!(certified.windows(2).all(|w| w[0] <= w[1]));
    assert!(rejected.windows(2).all(|w| w[0] >= w[1]));
    assert!(certified.iter().all(|&c| c <= r.rho_star));
    let lowest_rejected = rejected.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(certified.iter().all(|&c| c < lowest_rejected));
}

#[test]
fn search_fails_when_the_floor_is_not_certified() {
    let sys = make_scalar_cubic();
    let id = GramCandidate::identity(1).unwrap();
    let cfg = SearchConfig {
        certify: quick(6),
        rel_tol: 0.02,
        max_iters: 60,
    };
    let err = binary_search_rho(&sys, &id, 1.5, 4.0, &cfg).unwrap_err();
    assert!(matches!(err, ScoreError::Seed(_)), "{err}");
    assert!(binary_search_rho(&sys, &id, 2.0, 1.0, &cfg).is_err());
}

#[test]
fn linearization_seed_examples() {
    let lc = LinearizationConfig {
        samples: 2000,
        ..LinearizationConfig::default()
    };
    // Every probe passes, so the result is half the last probe.
    let sys = diag_system(&[-1.0, -1.0]);
    let id = GramCandidate::identity(2).unwrap();
    let rho = linearization_seed(&sys, &id, &lc).unwrap();
    let last = lc.start_factor * 2f64.powi(lc.max_doublings as i32 - 1);
    assert!((rho / (last / 2.0) - 1.0).abs() < 1e-12, "{rho}");

    let cubic = make_scalar_cubic();
    let rho = linearization_seed(&cubic, &GramCandidate::identity(1).unwrap(), &lc).unwrap();
    assert!(rho > 0.0 && rho < 1.0, "{rho}");

    let vdp = make_reversed_vdp();
    let dict = make_poly_dictionary(2, 2).unwrap();
    let syn = SynthesisConfig {
        n_train: 512,
        max_iters: 200,
        train_radius: 1.0,
        ..SynthesisConfig::default()
    };
    let cand = synthesize(&vdp, &dict, &syn).unwrap().candidate;
    let rho = linearization_seed(&vdp, &cand, &lc).unwrap();
    assert!(rho > 0.0);
}

#[test]
fn unstable_origin_has_no_seed() {
    let sys = diag_system(&[1.0, -1.0]);
    let id = GramCandidate::identity(2).unwrap();
    let lc = LinearizationConfig {
        samples: 500,
        ..LinearizationConfig::default()
    };
    assert!(matches!(linearization_seed(&sys, &id, &lc), Err(ScoreError::Seed(_))));
}
