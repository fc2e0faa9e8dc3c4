use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use score_core::certifier::{EvtConfig, LinearizationConfig, SamplerPlan};
use score_core::dynamics::{
    make_dense_hurwitz, make_reversed_vdp, make_scalar_cubic, HurwitzSpec, OdeSystem,
};
use score_core::lyapunov::{default_degree, make_poly_dictionary, GramCandidate};
use score_core::synthesis::SynthesisConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Certify,
    Search,
    Synth,
    Validate,
    Bench,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    /// `ẋ = Mx` with `M` given row by row.
    Linear { matrix: Vec<Vec<f64>> },
    DenseHurwitz {
        dimension: usize,
        seed: u64,
        #[serde(default = "default_range")]
        eigenvalue_range: (f64, f64),
    },
    VdpReversed,
    ScalarCubic,
}

fn default_range() -> (f64, f64) {
    HurwitzSpec::DEFAULT_RANGE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum CandidateSpec {
    /// `V = ‖x‖²`.
    Identity,
    /// Gram matrix over the monomial dictionary of the given degree.
    Gram {
        degree: u8,
        matrix: Vec<Vec<f64>>,
    },
    /// A candidate written by `synth`.
    File { path: PathBuf },
    Synthesize {
        #[serde(default)]
        degree: Option<u8>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpec {
    /// Defaults to the linearization seed.
    pub rho_low: Option<f64>,
    /// Defaults to `100·rho_low`.
    pub rho_high: Option<f64>,
    pub rel_tol: f64,
    pub max_iters: usize,
    pub linearization: LinearizationConfig,
}

impl Default for SearchSpec {
    fn default() -> Self {
        Self {
            rho_low: None,
            rho_high: None,
            rel_tol: 0.02,
            max_iters: 60,
            linearization: LinearizationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSpec {
    pub dimensions: Vec<usize>,
    /// Wall-clock budget per dimension in seconds.
    pub budget_secs: f64,
    pub system_seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            dimensions: vec![10, 50, 100],
            budget_secs: 600.0,
            system_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Report path.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Where `synth` writes the candidate.
    #[serde(default)]
    pub candidate_output: Option<PathBuf>,
    #[serde(default)]
    pub system: Option<SystemSpec>,
    #[serde(default = "default_candidate")]
    pub candidate: CandidateSpec,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default = "default_true")]
    pub early_rejection: bool,
    #[serde(default)]
    pub sampler: SamplerPlan,
    #[serde(default)]
    pub evt: EvtConfig,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub search: SearchSpec,
    #[serde(default)]
    pub bench: BenchSpec,
}

fn default_candidate() -> CandidateSpec {
    CandidateSpec::Identity
}

fn default_true() -> bool {
    true
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: None,
            seed: 0,
            threads: None,
            output: None,
            candidate_output: None,
            system: None,
            candidate: default_candidate(),
            rho: None,
            early_rejection: true,
            sampler: SamplerPlan::default(),
            evt: EvtConfig::default(),
            synthesis: SynthesisConfig::default(),
            search: SearchSpec::default(),
            bench: BenchSpec::default(),
        }
    }
}

impl RunConfig {
    /// Parse TOML, or JSON when the file ends in `.json` (as echoed in reports).
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        };
        if let CandidateSpec::File { path: p } = &mut cfg.candidate {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self, mode: Mode) -> Result<(), CliError> {
        let alpha = self.evt.alpha;
        if !(alpha > 0.0 && alpha <= 0.5) {
            return Err(CliError::Config(format!(
                "evt.alpha: {alpha} not in (0, 0.5]"
            )));
        }
        if let CandidateSpec::File { path } = &self.candidate {
            if !path.exists() {
                return Err(CliError::Config(format!(
                    "candidate.path: {} does not exist",
                    path.display()
                )));
            }
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("threads: must be at least 1".into()));
        }
        let needs_system = matches!(mode, Mode::Certify | Mode::Search | Mode::Synth);
        if needs_system && self.system.is_none() {
            return Err(CliError::Config("system: required for this mode".into()));
        }
        if mode == Mode::Certify {
            match self.rho {
                Some(r) if r > 0.0 && r.is_finite() => {}
                Some(r) => return Err(CliError::Config(format!("rho: {r} must be positive"))),
                None => return Err(CliError::Config("rho: required for certify".into())),
            }
        }
        if let (Some(lo), Some(hi)) = (self.search.rho_low, self.search.rho_high) {
            if !(lo > 0.0 && lo < hi) {
                return Err(CliError::Config(format!(
                    "search: need 0 < rho_low < rho_high, got [{lo}, {hi}]"
                )));
            }
        }
        if !(self.bench.budget_secs >= 0.0) {
            return Err(CliError::Config("bench.budget_secs: must be non-negative".into()));
        }
        Ok(())
    }

    pub fn build_system(&self) -> Result<OdeSystem, CliError> {
        let spec = self
            .system
            .as_ref()
            .ok_or_else(|| CliError::Config("system: missing".into()))?;
        Ok(match spec {
            SystemSpec::Linear { matrix } => OdeSystem::linear(matrix_from_rows(matrix, "system.matrix")?)?,
            SystemSpec::DenseHurwitz {
                dimension,
                seed,
                eigenvalue_range,
            } => make_dense_hurwitz(&HurwitzSpec {
                dimension: *dimension,
                eigenvalue_range: *eigenvalue_range,
                seed: *seed,
            })?,
            SystemSpec::VdpReversed => make_reversed_vdp(),
            SystemSpec::ScalarCubic => make_scalar_cubic(),
        })
    }

    /// The candidate, except for `synthesize` which [`crate::run`] handles.
    pub fn build_candidate(&self, n: usize) -> Result<Option<GramCandidate>, CliError> {
        Ok(match &self.candidate {
            CandidateSpec::Identity => Some(GramCandidate::identity(n)?),
            CandidateSpec::Gram { degree, matrix } => Some(GramCandidate::new(
                make_poly_dictionary(n, *degree)?,
                matrix_from_rows(matrix, "candidate.matrix")?,
            )?),
            CandidateSpec::File { path } => Some(GramCandidate::load(path)?),
            CandidateSpec::Synthesize { .. } => None,
        })
    }

    pub fn synthesis_degree(&self, n: usize) -> u8 {
        match self.candidate {
            CandidateSpec::Synthesize { degree: Some(d) } => d,
            _ => default_degree(n),
        }
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], field: &str) -> Result<DMatrix<f64>, CliError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Config(format!("{field}: must be a non-empty square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}
