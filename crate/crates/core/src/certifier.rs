//! Level-set certification and the bisection search for the largest
//! certifiable level.
//!
//! A level `ρ` is CERTIFIED when the bootstrap upper confidence bound on the
//! fitted GEV endpoint of the block maxima of `V̇` is negative and the fit
//! passes the KS gate. Any sampled state with `V̇ ≥ 0` rejects the level at
//! once and is reported as a counterexample.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dynamics::OdeSystem;
use crate::error::{Result, ScoreError};
use crate::evt::{
    bootstrap_upper_ci, endpoint, fit_gev_mle, ks_test, ks_test_parametric,
    parametric_bootstrap_upper_ci, FitConfig, FitMethod,
    GevFitResult, KsMode, KsResult,
};
use crate::lyapunov::{GramCandidate, LieDerivative};
use crate::rng;
use crate::sampler::{
    collect_block_maxima, sample_uniform_on_levelset, CollectOptions, PsgldConfig,
    SamplerDiagnostics, SamplerMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    Certified,
    Rejected,
    FailHeavyTail,
}

impl Decision {
    /// Process exit code for the decision.
    pub fn exit_code(self) -> i32 {
        match self {
            Decision::Certified => 0,
            Decision::Rejected => 1,
            Decision::FailHeavyTail => 2,
        }
    }
}

/// Sampler settings whose step size and temperature may be left to
/// [`PsgldConfig::defaults_for`] at each level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerPlan {
    pub eta: Option<f64>,
    pub temperature: Option<f64>,
    pub k_steps: usize,
    pub block_size: usize,
    pub n_blocks: usize,
    /// `None` keeps the `10·√N` default; use `f64::INFINITY` to disable clipping.
    pub grad_clip: Option<f64>,
    pub projection_tol: f64,
    pub projection_max_iters: usize,
    pub reseed_period: Option<usize>,
    pub mode: SamplerMode,
    pub penalty_weight: f64,
}

impl Default for SamplerPlan {
    fn default() -> Self {
        Self {
            eta: None,
            temperature: None,
            k_steps: 500,
            block_size: 64,
            n_blocks: 100,
            grad_clip: None,
            projection_tol: PsgldConfig::DEFAULT_PROJECTION_TOL,
            projection_max_iters: PsgldConfig::DEFAULT_PROJECTION_MAX_ITERS,
            reseed_period: None,
            mode: SamplerMode::ExactProjection,
            penalty_weight: 100.0,
        }
    }
}

impl SamplerPlan {
    pub fn resolve(&self, l: &LieDerivative<'_>, rho: f64, seed: u64) -> Result<PsgldConfig> {
        let needs_probe = self.eta.is_none() || self.temperature.is_none();
        let defaults = if needs_probe {
            Some(PsgldConfig::defaults_for(l, rho, seed)?)
        } else {
            None
        };
        let n = l.dimension() as f64;
        let cfg = PsgldConfig {
            eta: self
                .eta
                .unwrap_or_else(|| defaults.as_ref().map_or(0.0, |d| d.eta)),
            temperature: self
                .temperature
                .unwrap_or_else(|| defaults.as_ref().map_or(0.0, |d| d.temperature)),
            k_steps: self.k_steps,
            block_size: self.block_size,
            n_blocks: self.n_blocks,
            grad_clip: match self.grad_clip {
                None => Some(10.0 * n.sqrt()),
                Some(c) if c.is_infinite() => None,
                Some(c) => Some(c),
            },
            projection_tol: self.projection_tol,
            projection_max_iters: self.projection_max_iters,
            reseed_period: self.reseed_period,
            mode: self.mode,
            penalty_weight: self.penalty_weight,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvtConfig {
    /// One minus the confidence level of the upper bound.
    pub alpha: f64,
    pub b_resamples: usize,
    pub ks_alpha: f64,
    pub ks_mode: KsMode,
    pub fit: FitConfig,
    /// Treat a bootstrap with more than 20% failed refits as a rejection.
    pub reject_unreliable_bootstrap: bool,
    /// Bootstrap from the fitted law instead of resampling when the fit is
    /// the maximum-spacing one (`ξ̂ < −1`), where resampled endpoints cannot
    /// exceed the largest observation.
    pub parametric_for_spacing_fits: bool,
}

impl Default for EvtConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            b_resamples: 1000,
            ks_alpha: 0.05,
            ks_mode: KsMode::Asymptotic,
            fit: FitConfig::default(),
            reject_unreliable_bootstrap: true,
            parametric_for_spacing_fits: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyConfig {
    pub sampler: SamplerPlan,
    pub evt: EvtConfig,
    pub seed: u64,
    /// Stop sampling as soon as a state with `V̇ ≥ 0` is seen.
    pub early_rejection: bool,
    #[serde(skip)]
    pub deadline: Option<Instant>,
}

impl CertifyConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            sampler: SamplerPlan::default(),
            evt: EvtConfig::default(),
            seed,
            early_rejection: true,
            deadline: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub state: Vec<f64>,
    pub vdot: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapKind {
    Resample,
    Parametric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub kind: BootstrapKind,
    pub n_resamples_requested: usize,
    pub n_failed: usize,
    pub unreliable: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub sampling: f64,
    pub fit: f64,
    pub bootstrap: f64,
    pub goodness_of_fit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationResult {
    pub decision: Decision,
    pub rho: f64,
    /// Fitted endpoint `z*` (or the constant value on the degenerate path).
    pub gamma_point: Option<f64>,
    pub ci_upper: Option<f64>,
    pub ks: Option<KsResult>,
    pub gev: Option<GevFitResult>,
    pub bootstrap: Option<BootstrapSummary>,
    pub counterexample: Option<Counterexample>,
    /// All block maxima were equal and the GEV fit was skipped.
    pub degenerate: bool,
    pub reason: String,
    pub block_maxima: Vec<f64>,
    pub psgld: PsgldConfig,
    pub diagnostics: SamplerDiagnostics,
    pub phase_times: PhaseTimes,
    pub wall_time: f64,
}

/// Relative spread, in units of rounding, under which block maxima are
/// treated as one constant.
const DEGENERATE_SPREAD: f64 = 64.0 * f64::EPSILON;

/// Certify the sublevel set `{V ≤ ρ}`.
pub fn certify_level(
    sys: &OdeSystem,
    cand: &GramCandidate,
    rho: f64,
    cfg: &CertifyConfig,
) -> Result<CertificationResult> {
    let started = Instant::now();
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(ScoreError::InvalidArgument(format!(
            "level {rho} must be positive"
        )));
    }
    if !(cfg.evt.alpha > 0.0 && cfg.evt.alpha <= 0.5) {
        return Err(ScoreError::InvalidArgument(format!(
            "alpha {} not in (0, 0.5]",
            cfg.evt.alpha
        )));
    }
    if cfg.sampler.n_blocks < cfg.evt.fit.min_samples {
        return Err(ScoreError::InvalidArgument(format!(
            "n_blocks {} below the fitting floor {}",
            cfg.sampler.n_blocks, cfg.evt.fit.min_samples
        )));
    }
    let l = LieDerivative::new(cand, sys)?;
    let psgld = cfg.sampler.resolve(&l, rho, cfg.seed)?;

    let mut result = CertificationResult {
        decision: Decision::Rejected,
        rho,
        gamma_point: None,
        ci_upper: None,
        ks: None,
        gev: None,
        bootstrap: None,
        counterexample: None,
        degenerate: false,
        reason: String::new(),
        block_maxima: Vec::new(),
        psgld: psgld.clone(),
        diagnostics: SamplerDiagnostics::default(),
        phase_times: PhaseTimes::default(),
        wall_time: 0.0,
    };
    let finish = |mut r: CertificationResult, decision: Decision, reason: &str| {
        r.decision = decision;
        r.reason = reason.to_string();
        r.wall_time = started.elapsed().as_secs_f64();
        Ok(r)
    };

    let t = Instant::now();
    let opts = CollectOptions {
        stop_on_nonnegative: cfg.early_rejection,
        deadline: cfg.deadline,
    };
    let sampling = match collect_block_maxima(&l, rho, &psgld, opts) {
        Ok(s) => s,
        Err(ScoreError::NonCompactLevelSet) => {
            result.phase_times.sampling = t.elapsed().as_secs_f64();
            return finish(result, Decision::Rejected, "level set is not compact");
        }
        Err(e) => return Err(e),
    };
    result.phase_times.sampling = t.elapsed().as_secs_f64();
    result.diagnostics = sampling.diagnostics.clone();
    result.block_maxima = sampling.maxima.values.clone();

    let (best_vdot, best_state) = &sampling.global_best;
    if *best_vdot >= 0.0 {
        result.counterexample = Some(Counterexample {
            state: best_state.iter().copied().collect(),
            vdot: *best_vdot,
            v: cand.value(best_state),
        });
        return finish(
            result,
            Decision::Rejected,
            "sampled state with non-negative Lie derivative",
        );
    }

    let values = &sampling.maxima.values;
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if hi - lo <= DEGENERATE_SPREAD * hi.abs().max(1.0) {
        result.degenerate = true;
        result.gamma_point = Some(hi);
        result.ci_upper = Some(hi);
        return if hi < 0.0 {
            finish(
                result,
                Decision::Certified,
                "constant negative Lie derivative on the level set",
            )
        } else {
            finish(
                result,
                Decision::Rejected,
                "constant non-negative Lie derivative on the level set",
            )
        };
    }

    let t = Instant::now();
    let fit = fit_gev_mle(values, &cfg.evt.fit)?;
    result.phase_times.fit = t.elapsed().as_secs_f64();
    result.gev = Some(fit);
    if !fit.converged {
        return finish(result, Decision::Rejected, "GEV fit did not converge");
    }
    let z_star = match endpoint(&fit.params) {
        Ok(z) => z,
        Err(ScoreError::HeavyTail(_)) => {
            return finish(
                result,
                Decision::FailHeavyTail,
                "fitted shape is non-negative",
            );
        }
        Err(e) => return Err(e),
    };
    result.gamma_point = Some(z_star);

    let t = Instant::now();
    let boot_seed = rng::derive_seed(cfg.seed, rng::domain::BOOTSTRAP, 0);
    let kind = if cfg.evt.parametric_for_spacing_fits && fit.method == FitMethod::MaximumSpacing {
        BootstrapKind::Parametric
    } else {
        BootstrapKind::Resample
    };
    let boot = match kind {
        BootstrapKind::Resample => bootstrap_upper_ci(
            values,
            cfg.evt.b_resamples,
            cfg.evt.alpha,
            boot_seed,
            &cfg.evt.fit,
            Some(&fit.params),
        ),
        BootstrapKind::Parametric => parametric_bootstrap_upper_ci(
            &fit.params,
            values.len(),
            cfg.evt.b_resamples,
            cfg.evt.alpha,
            boot_seed,
            &cfg.evt.fit,
        ),
    };
    let boot = match boot {
        Ok(b) => b,
        Err(ScoreError::Bootstrap(msg)) => {
            result.phase_times.bootstrap = t.elapsed().as_secs_f64();
            return finish(result, Decision::Rejected, &msg);
        }
        Err(e) => return Err(e),
    };
    result.phase_times.bootstrap = t.elapsed().as_secs_f64();
    // Every V̇ observed on the level set is a lower bound on the maximum,
    // including intermediate chain states the block maxima do not see.
    let ci_upper = boot.ci_upper.max(result.diagnostics.empirical_max);
    result.ci_upper = Some(ci_upper);
    result.bootstrap = Some(BootstrapSummary {
        kind,
        n_resamples_requested: boot.n_resamples_requested,
        n_failed: boot.n_failed,
        unreliable: boot.unreliable,
    });

    let t = Instant::now();
    let ks = match cfg.evt.ks_mode {
        KsMode::Asymptotic => ks_test(values, &fit.params, cfg.evt.ks_alpha),
        KsMode::ParametricBootstrap { resamples } => ks_test_parametric(
            values,
            &fit.params,
            cfg.evt.ks_alpha,
            resamples,
            rng::derive_seed(cfg.seed, rng::domain::KS_BOOTSTRAP, 0),
            &cfg.evt.fit,
        ),
    };
    result.phase_times.goodness_of_fit = t.elapsed().as_secs_f64();
    result.ks = Some(ks);

    if ci_upper >= 0.0 {
        finish(
            result,
            Decision::Rejected,
            "upper confidence bound is non-negative",
        )
    } else if !ks.passed {
        finish(
            result,
            Decision::Rejected,
            "GEV goodness-of-fit test failed",
        )
    } else if boot.unreliable && cfg.evt.reject_unreliable_bootstrap {
        finish(
            result,
            Decision::Rejected,
            "more than 20% of bootstrap refits failed",
        )
    } else {
        finish(
            result,
            Decision::Certified,
            "upper confidence bound is negative",
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub rho: f64,
    pub decision: Decision,
    pub ci_upper: Option<f64>,
    pub reason: String,
    pub seed: u64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub rho_star: f64,
    /// The check of the initial lower level, then one entry per bisection step.
    pub trace: Vec<TraceEntry>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub certify: CertifyConfig,
    pub rel_tol: f64,
    pub max_iters: usize,
}

/// Bisection for the largest certifiable level in `[rho_low, rho_high]`.
///
/// Step `i` runs with the seed `derive_seed(master, SEARCH, i)`; step 0
/// re-certifies `rho_low` itself.
pub fn binary_search_rho(
    sys: &OdeSystem,
    cand: &GramCandidate,
    rho_low: f64,
    rho_high: f64,
    cfg: &SearchConfig,
) -> Result<SearchResult> {
    if !(rho_low > 0.0 && rho_low < rho_high && rho_high.is_finite()) {
        return Err(ScoreError::InvalidArgument(format!(
            "need 0 < rho_low < rho_high, got [{rho_low}, {rho_high}]"
        )));
    }
    if !(cfg.rel_tol > 0.0) {
        return Err(ScoreError::InvalidArgument(
            "rel_tol must be positive".into(),
        ));
    }
    let run = |rho: f64, step: u64| -> Result<TraceEntry> {
        let mut c = cfg.certify.clone();
        c.seed = rng::derive_seed(cfg.certify.seed, rng::domain::SEARCH, step);
        let r = certify_level(sys, cand, rho, &c)?;
        Ok(TraceEntry {
            rho,
            decision: r.decision,
            ci_upper: r.ci_upper,
            reason: r.reason,
            seed: c.seed,
            wall_time: r.wall_time,
        })
    };

    let mut trace = Vec::new();
    let first = run(rho_low, 0)?;
    let ok = first.decision == Decision::Certified;
    let reason = first.reason.clone();
    trace.push(first);
    if !ok {
        return Err(ScoreError::Seed(format!(
            "rho_low = {rho_low} is not certified: {reason}"
        )));
    }
    let (mut lo, mut hi) = (rho_low, rho_high);
    let mut iterations = 0;
    while (hi - lo) / lo > cfg.rel_tol && iterations < cfg.max_iters {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let entry = run(mid, iterations as u64)?;
        if entry.decision == Decision::Certified {
            lo = mid;
        } else {
            hi = mid;
        }
        trace.push(entry);
    }
    Ok(SearchResult {
        rho_star: lo,
        trace,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearizationConfig {
    /// Points checked on each probed level set.
    pub samples: usize,
    /// First probe is `start_factor·ρ_scale`.
    pub start_factor: f64,
    pub max_doublings: usize,
    /// A level passes when `max V̇ ≤ −margin·ρ`.
    pub margin: f64,
    pub seed: u64,
}

impl Default for LinearizationConfig {
    fn default() -> Self {
        Self {
            samples: 10_000,
            start_factor: 1e-4,
            max_doublings: 40,
            margin: 1e-6,
            seed: 0,
        }
    }
}

/// Mean of `V` over unit-norm directions.
pub fn rho_scale(cand: &GramCandidate, seed: u64) -> f64 {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = rng::stream(seed, rng::domain::LINEARIZATION, u64::MAX);
    let n = cand.dimension();
    let count = 1000;
    let total: f64 = (0..count)
        .map(|_| {
            let u = nalgebra::DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            cand.value(&(&u / u.norm()))
        })
        .sum();
    total / count as f64
}

/// A small level near the origin where a dense sample shows `V̇ < 0`:
/// probe levels doubling from `start_factor·ρ_scale` while the check passes
/// and return half of the last passing level.
pub fn linearization_seed(
    sys: &OdeSystem,
    cand: &GramCandidate,
    cfg: &LinearizationConfig,
) -> Result<f64> {
    let l = LieDerivative::new(cand, sys)?;
    let mut rho = cfg.start_factor * rho_scale(cand, cfg.seed);
    let mut last_pass = None;
    for k in 0..cfg.max_doublings {
        let mut rng = rng::stream(cfg.seed, rng::domain::LINEARIZATION, k as u64);
        let points = sample_uniform_on_levelset(
            cand,
            rho,
            cfg.samples,
            &mut rng,
            PsgldConfig::DEFAULT_PROJECTION_TOL * rho.max(1.0),
        )?;
        let worst = points
            .iter()
            .map(|x| l.vdot(x))
            .fold(f64::NEG_INFINITY, f64::max);
        if worst <= -cfg.margin * rho {
            last_pass = Some(rho);
            rho *= 2.0;
        } else {
            break;
        }
    }
    last_pass.map(|r| r / 2.0).ok_or_else(|| {
        ScoreError::Seed(format!(
            "no level passes near the origin (first probe {rho:e})"
        ))
    })
}
