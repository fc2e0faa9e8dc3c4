//! Oracle comparisons run by `score validate`, one pass/fail line each.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::json;

use score_core::certifier::{certify_level, CertifyConfig, Decision, SamplerPlan};
use score_core::dynamics::{make_reversed_vdp, make_scalar_cubic, OdeSystem};
use score_core::evt::{endpoint, fit_gev_mle, ks_test, FitConfig, GevParams};
use score_core::lyapunov::{GramCandidate, LieDerivative};
use score_core::oracle::{eigen_exact_linear, grid_max_vdot, measure_kappa};
use score_core::rng;
use score_core::sampler::{collect_block_maxima, sample_uniform_on_levelset, CollectOptions};

use crate::Outcome;

#[derive(Debug, Serialize)]
struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

type Res = score_core::Result<(bool, String)>;

fn planar(a: f64, b: f64) -> (OdeSystem, GramCandidate) {
    let m = DMatrix::from_diagonal(&DVector::from_vec(vec![a, b]));
    (OdeSystem::linear(m).unwrap(), GramCandidate::identity(2).unwrap())
}

fn eigen_example() -> Res {
    let m = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -3.0]));
    let g = eigen_exact_linear(&m, &DMatrix::identity(2, 2), 2.0)?.gamma_true;
    Ok(((g + 4.0).abs() < 1e-12, format!("gamma*={g}")))
}

fn grid_matches_eigen(seed: u64) -> Res {
    use rand::Rng;
    let mut r = rng::stream(seed, rng::domain::ORACLE, 0);
    let m = DMatrix::from_fn(2, 2, |i, j| {
        if i == j {
            -1.0 - r.random::<f64>()
        } else {
            r.random::<f64>() - 0.5
        }
    });
    let exact = eigen_exact_linear(&m, &DMatrix::identity(2, 2), 1.0)?.gamma_true;
    let sys = OdeSystem::linear(m)?;
    let grid = grid_max_vdot(&sys, &GramCandidate::identity(2)?, 1.0, 720)?.gamma_true;
    let rel = (grid - exact).abs() / exact.abs();
    Ok((rel <= 1e-4, format!("grid={grid:.8} eigen={exact:.8} rel={rel:.1e}")))
}

fn cubic_closed_form() -> Res {
    let g = grid_max_vdot(&make_scalar_cubic(), &GramCandidate::identity(1)?, 0.81, 360)?.gamma_true;
    let want = 2.0 * 0.81 * (0.81 - 1.0);
    Ok(((g - want).abs() < 1e-9, format!("gamma={g:.6} closed form {want:.6}")))
}

fn degenerate_exact() -> Res {
    let (sys, cand) = planar(-1.0, -1.0);
    let r = certify_level(&sys, &cand, 1.0, &CertifyConfig::new(0))?;
    Ok((
        r.decision == Decision::Certified && r.ci_upper == Some(-2.0),
        format!("decision={:?} ci_upper={:?}", r.decision, r.ci_upper),
    ))
}

fn sampler_below_oracle(seed: u64) -> Res {
    let (sys, cand) = planar(-1.0, -3.0);
    let l = LieDerivative::new(&cand, &sys)?;
    let plan = SamplerPlan {
        k_steps: 200,
        n_blocks: 20,
        ..SamplerPlan::default()
    };
    let cfg = plan.resolve(&l, 1.0, seed)?;
    let s = collect_block_maxima(&l, 1.0, &cfg, CollectOptions::default())?;
    let oracle = grid_max_vdot(&sys, &cand, 1.0, 720)?.gamma_true;
    let top = s.diagnostics.empirical_max;
    Ok((top <= oracle + 1e-6, format!("sampler max={top:.9} oracle={oracle:.9}")))
}

fn sphere_samples(seed: u64) -> Res {
    let cand = GramCandidate::identity(3)?;
    let mut r = rng::stream(seed, rng::domain::ORACLE, 1);
    let pts = sample_uniform_on_levelset(&cand, 4.0, 1000, &mut r, 1e-12)?;
    let worst = pts.iter().map(|x| (x.norm() - 2.0).abs()).fold(0.0, f64::max);
    Ok((worst <= 1e-10, format!("max | |x| - 2 | = {worst:.1e}")))
}

fn gev_recovery(seed: u64) -> Res {
    let truth = GevParams::new(-0.5, 0.0, 1.0)?;
    let mut r = rng::stream(seed, rng::domain::ORACLE, 2);
    let data = truth.sample(10_000, &mut r);
    let p = fit_gev_mle(&data, &FitConfig::default())?.params;
    let ok = (p.shape + 0.5).abs() <= 0.06 && p.location.abs() <= 0.05 && (p.scale - 1.0).abs() <= 0.05;
    Ok((ok, format!("shape={:.4} location={:.4} scale={:.4}", p.shape, p.location, p.scale)))
}

fn endpoint_formula() -> Res {
    let a = endpoint(&GevParams::new(-0.5, 0.0, 1.0)?)?;
    let b = endpoint(&GevParams::new(-1.0, 3.0, 2.0)?)?;
    Ok((a == 2.0 && b == 5.0, format!("{a} and {b}")))
}

fn ks_mismatch(seed: u64) -> Res {
    let gumbel = GevParams::new(0.0, 0.0, 1.0)?;
    let mut r = rng::stream(seed, rng::domain::ORACLE, 3);
    let data = gumbel.sample(500, &mut r);
    let p = ks_test(&data, &GevParams::new(-1.0, 0.0, 1.0)?, 0.01).p_value;
    Ok((p < 0.01, format!("p={p:.2e}")))
}

fn kappa_monotone(seed: u64) -> Res {
    let sys = make_reversed_vdp();
    let cand = GramCandidate::identity(2)?;
    let ks = [0.5, 1.0, 1.5]
        .iter()
        .map(|&rho| measure_kappa(&sys, &cand, rho, 1_000_000, seed).map(|k| k.kappa))
        .collect::<score_core::Result<Vec<_>>>()?;
    let ok = ks.windows(2).all(|w| w[0] <= w[1]);
    Ok((ok, format!("kappa at rho 0.5, 1, 1.5: {ks:.3?}")))
}

pub(crate) fn run(seed: u64) -> Outcome {
    let checks: Vec<(&'static str, Box<dyn Fn() -> Res>)> = vec![
        ("eigen oracle on diag(-1,-3) at rho=2", Box::new(eigen_example)),
        ("grid oracle agrees with eigen oracle", Box::new(move || grid_matches_eigen(seed))),
        ("grid oracle on the scalar cubic", Box::new(cubic_closed_form)),
        ("constant Lie derivative certifies exactly", Box::new(degenerate_exact)),
        ("sampler stays below the grid oracle", Box::new(move || sampler_below_oracle(seed))),
        ("level-set samples lie on the sphere", Box::new(move || sphere_samples(seed))),
        ("GEV parameter recovery", Box::new(move || gev_recovery(seed))),
        ("GEV endpoint formula", Box::new(endpoint_formula)),
        ("KS rejects a gross mismatch", Box::new(move || ks_mismatch(seed))),
        ("kappa is monotone in rho", Box::new(move || kappa_monotone(seed))),
    ];
    let results: Vec<Check> = checks
        .into_iter()
        .map(|(name, f)| {
            let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
            Check {
                name,
                passed,
                detail,
            }
        })
        .collect();
    let all = results.iter().all(|c| c.passed);
    let summary = results
        .iter()
        .map(|c| {
            format!(
                "[{}] {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            )
        })
        .collect();
    Outcome {
        exit_code: if all { 0 } else { 1 },
        summary,
        report: json!({ "checks": results, "all_passed": all }),
    }
}
