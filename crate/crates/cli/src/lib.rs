//! Run orchestration and report emission for the `score` binary.

pub mod config;
mod validate;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};

use score_core::certifier::{
    binary_search_rho, certify_level, linearization_seed, CertificationResult, CertifyConfig,
    Decision, LinearizationConfig, SearchConfig,
};
use score_core::dynamics::{make_dense_hurwitz, HurwitzSpec, OdeSystem};
use score_core::lyapunov::{make_poly_dictionary, GramCandidate};
use score_core::oracle::eigen_exact_linear;
use score_core::sampler::{BlockMaximaSet, Provenance};
use score_core::synthesis::{synthesize, SynthesisResult};
use score_core::ScoreError;

pub use config::{Mode, RunConfig};

/// Exit code for configuration and runtime errors.
pub const EXIT_ERROR: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] ScoreError),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Command-line settings that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub report: Option<PathBuf>,
    pub export_blockmax: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    /// Human-readable lines for the terminal.
    pub summary: Vec<String>,
    pub report: Value,
}

/// Thread count from the flag, then `SCORE_THREADS`, then the config.
pub fn resolve_threads(flag: Option<usize>, cfg: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("SCORE_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| CliError::Config(format!("SCORE_THREADS: invalid thread count {v:?}"))),
        _ => Ok(cfg),
    }
}

/// Execute `mode` and write the report; errors map to [`EXIT_ERROR`].
pub fn run(mode: Mode, mut cfg: RunConfig, ov: &Overrides) -> Result<Outcome, CliError> {
    if let Some(m) = cfg.mode {
        if m != mode {
            return Err(CliError::Config(format!(
                "mode: config says {m:?} but {mode:?} was requested"
            )));
        }
    }
    cfg.mode = Some(mode);
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(r) = &ov.report {
        cfg.output = Some(r.clone());
    }
    let threads = resolve_threads(ov.threads, cfg.threads)?;
    cfg.threads = threads;
    cfg.validate(mode)?;
    if ov.export_blockmax.is_some() && mode != Mode::Certify {
        return Err(CliError::Config(
            "--export-blockmax applies to certify only".into(),
        ));
    }

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    let started = Instant::now();
    let mut outcome = pool.install(|| dispatch(mode, &cfg, ov))?;

    let total = started.elapsed().as_secs_f64();
    let report = json!({
        "software": { "name": "score", "version": env!("CARGO_PKG_VERSION") },
        "mode": mode,
        "seed": cfg.seed,
        "threads": pool.current_num_threads(),
        "config": cfg,
        "result": outcome.report,
        "exit_code": outcome.exit_code,
        "wall_time": total,
    });
    if let Some(path) = &cfg.output {
        let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        outcome.summary.push(format!("report written to {}", path.display()));
    }
    outcome.report = report;
    Ok(outcome)
}

fn dispatch(mode: Mode, cfg: &RunConfig, ov: &Overrides) -> Result<Outcome, CliError> {
    match mode {
        Mode::Certify => certify(cfg, ov),
        Mode::Search => search(cfg),
        Mode::Synth => synth(cfg),
        Mode::Validate => Ok(validate::run(cfg.seed)),
        Mode::Bench => bench(cfg),
    }
}

fn certify_config(cfg: &RunConfig, seed: u64) -> CertifyConfig {
    CertifyConfig {
        sampler: cfg.sampler.clone(),
        evt: cfg.evt.clone(),
        seed,
        early_rejection: cfg.early_rejection,
        deadline: None,
    }
}

struct Setup {
    system: OdeSystem,
    candidate: GramCandidate,
    synthesis: Option<SynthesisResult>,
    seconds: f64,
}

fn setup(cfg: &RunConfig) -> Result<Setup, CliError> {
    let t = Instant::now();
    let system = cfg.build_system()?;
    let n = system.dimension();
    let (candidate, synthesis) = match cfg.build_candidate(n)? {
        Some(c) => (c, None),
        None => {
            let dict = make_poly_dictionary(n, cfg.synthesis_degree(n))?;
            let s = synthesize(&system, &dict, &cfg.synthesis)?;
            (s.candidate.clone(), Some(s))
        }
    };
    Ok(Setup {
        system,
        candidate,
        synthesis,
        seconds: t.elapsed().as_secs_f64(),
    })
}

fn synthesis_summary(s: &SynthesisResult) -> Value {
    json!({
        "loss": s.loss,
        "converged": s.converged,
        "iterations": s.iterations,
    })
}

fn gram_rows(c: &GramCandidate) -> Vec<Vec<f64>> {
    let q = c.gram();
    (0..q.nrows()).map(|i| q.row(i).iter().copied().collect()).collect()
}

fn decision_line(r: &CertificationResult) -> String {
    let ci = r
        .ci_upper
        .map_or_else(|| "n/a".to_string(), |c| format!("{c:.6e}"));
    format!(
        "rho={} decision={} ci_upper={ci} ({}) {:.2}s",
        r.rho,
        decision_name(r.decision),
        r.reason,
        r.wall_time
    )
}

fn decision_name(d: Decision) -> &'static str {
    match d {
        Decision::Certified => "CERTIFIED",
        Decision::Rejected => "REJECTED",
        Decision::FailHeavyTail => "FAIL_HEAVY_TAIL",
    }
}

fn certify(cfg: &RunConfig, ov: &Overrides) -> Result<Outcome, CliError> {
    let s = setup(cfg)?;
    let rho = cfg.rho.expect("validated");
    let r = certify_level(&s.system, &s.candidate, rho, &certify_config(cfg, cfg.seed))?;
    let mut summary = vec![decision_line(&r)];
    if let Some(path) = &ov.export_blockmax {
        let set = BlockMaximaSet {
            values: r.block_maxima.clone(),
            rho,
            provenance: Provenance {
                seed: r.psgld.seed,
                config_hash: r.psgld.fingerprint(),
            },
        };
        std::fs::write(path, set.to_csv())
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        summary.push(format!("block maxima written to {}", path.display()));
    }
    let report = json!({
        "system": s.system.name(),
        "candidate": { "degree": s.candidate.dictionary().degree(), "gram": gram_rows(&s.candidate) },
        "synthesis": s.synthesis.as_ref().map(synthesis_summary),
        "phase_times": {
            "setup": s.seconds,
            "sampling": r.phase_times.sampling,
            "fit": r.phase_times.fit,
            "bootstrap": r.phase_times.bootstrap,
            "goodness_of_fit": r.phase_times.goodness_of_fit,
        },
        "certification": r,
    });
    Ok(Outcome {
        exit_code: r.decision.exit_code(),
        summary,
        report,
    })
}

fn search(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = setup(cfg)?;
    let t = Instant::now();
    let rho_low = match cfg.search.rho_low {
        Some(r) => r,
        None => linearization_seed(
            &s.system,
            &s.candidate,
            &LinearizationConfig {
                seed: cfg.seed,
                ..cfg.search.linearization.clone()
            },
        )?,
    };
    let linearization = t.elapsed().as_secs_f64();
    let rho_high = cfg.search.rho_high.unwrap_or(100.0 * rho_low);
    let sc = SearchConfig {
        certify: certify_config(cfg, cfg.seed),
        rel_tol: cfg.search.rel_tol,
        max_iters: cfg.search.max_iters,
    };
    let t = Instant::now();
    let (exit_code, result, mut summary) =
        match binary_search_rho(&s.system, &s.candidate, rho_low, rho_high, &sc) {
            Ok(r) => {
                let lines = r
                    .trace
                    .iter()
                    .map(|e| {
                        format!(
                            "  rho={:.6e} {} ({})",
                            e.rho,
                            decision_name(e.decision),
                            e.reason
                        )
                    })
                    .chain([format!("rho_star={:.6e} after {} steps", r.rho_star, r.iterations)])
                    .collect();
                (0, serde_json::to_value(&r).map_err(|e| CliError::Io(e.to_string()))?, lines)
            }
            Err(ScoreError::Seed(msg)) => (1, json!({ "error": msg }), vec![msg]),
            Err(e) => return Err(e.into()),
        };
    summary.insert(0, format!("search over [{rho_low:.6e}, {rho_high:.6e}]"));
    let report = json!({
        "system": s.system.name(),
        "candidate": { "degree": s.candidate.dictionary().degree(), "gram": gram_rows(&s.candidate) },
        "synthesis": s.synthesis.as_ref().map(synthesis_summary),
        "rho_low": rho_low,
        "rho_high": rho_high,
        "phase_times": {
            "setup": s.seconds,
            "linearization": linearization,
            "search": t.elapsed().as_secs_f64(),
        },
        "search": result,
    });
    Ok(Outcome {
        exit_code,
        summary,
        report,
    })
}

fn synth(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let t = Instant::now();
    let system = cfg.build_system()?;
    let n = system.dimension();
    let dict = make_poly_dictionary(n, cfg.synthesis_degree(n))?;
    let s = synthesize(&system, &dict, &cfg.synthesis)?;
    let path = cfg
        .candidate_output
        .clone()
        .unwrap_or_else(|| PathBuf::from("candidate.txt"));
    s.candidate.save(&path)?;
    let summary = vec![
        format!(
            "loss={:.3e} converged={} iterations={}",
            s.loss, s.converged, s.iterations
        ),
        format!("candidate written to {}", path.display()),
    ];
    let report = json!({
        "system": system.name(),
        "synthesis": synthesis_summary(&s),
        "candidate_output": path,
        "candidate": { "degree": dict.degree(), "gram": gram_rows(&s.candidate) },
        "phase_times": { "synthesis": t.elapsed().as_secs_f64() },
    });
    Ok(Outcome {
        exit_code: 0,
        summary,
        report,
    })
}

#[derive(Debug, Clone, Serialize)]
struct BenchRow {
    dimension: usize,
    outcome: String,
    ci_upper: Option<f64>,
    gamma_star: f64,
    wall_time: f64,
}

fn bench(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut rows = Vec::new();
    for &n in &cfg.bench.dimensions {
        let system = make_dense_hurwitz(&HurwitzSpec::new(n, cfg.bench.system_seed))?;
        let m = system.linear_matrix().expect("linear benchmark").clone();
        let gamma_star = eigen_exact_linear(&m, &DMatrix::identity(n, n), 1.0)?.gamma_true;
        let candidate = GramCandidate::identity(n)?;
        let mut cc = certify_config(cfg, cfg.seed);
        let t = Instant::now();
        cc.deadline = Some(t + Duration::from_secs_f64(cfg.bench.budget_secs));
        let (outcome, ci_upper) = match certify_level(&system, &candidate, 1.0, &cc) {
            Ok(r) => (decision_name(r.decision).to_string(), r.ci_upper),
            Err(ScoreError::Timeout) => ("TIMEOUT".to_string(), None),
            Err(e) => return Err(e.into()),
        };
        rows.push(BenchRow {
            dimension: n,
            outcome,
            ci_upper,
            gamma_star,
            wall_time: t.elapsed().as_secs_f64(),
        });
    }
    let mut summary = vec![format!(
        "{:>6} {:>16} {:>14} {:>14} {:>10}",
        "N", "outcome", "ci_upper", "gamma*", "seconds"
    )];
    summary.extend(rows.iter().map(|r| {
        format!(
            "{:>6} {:>16} {:>14} {:>14.6} {:>10.1}",
            r.dimension,
            r.outcome,
            r.ci_upper.map_or_else(|| "-".into(), |c| format!("{c:.6}")),
            r.gamma_star,
            r.wall_time
        )
    }));
    Ok(Outcome {
        exit_code: 0,
        summary,
        report: json!({ "budget_secs": cfg.bench.budget_secs, "rows": rows }),
    })
}
