//! Offline fitting of the Gram matrix `Q = LLᵀ + δI` so that
//! `V̇(x) + εV(x) < 0` on a sampled training set.
//!
//! Both `V` and `V̇` are linear in `Q`: with `z = z(x)` and `w = J_z(x) f(x)`,
//! `V̇ + εV = tr(Q·A)` where `A = zwᵀ + wzᵀ + εzzᵀ`. The hinge loss is
//! therefore piecewise linear in `Q` and its gradient in `L` is `2GL` with
//! `G` the mean of the active `A`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::OdeSystem;
use crate::error::{Result, ScoreError};
use crate::lyapunov::{BasisDictionary, GramCandidate};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub epsilon: f64,
    pub n_train: usize,
    pub train_radius: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub delta: f64,
    pub seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            n_train: 4096,
            train_radius: 2.0,
            learning_rate: 1e-2,
            max_iters: 2000,
            delta: 1e-3,
            seed: 0,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epsilon", self.epsilon),
            ("train_radius", self.train_radius),
            ("learning_rate", self.learning_rate),
            ("delta", self.delta),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ScoreError::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.n_train == 0 || self.max_iters == 0 {
            return Err(ScoreError::InvalidArgument(
                "n_train and max_iters must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub candidate: GramCandidate,
    /// Hinge loss of the returned candidate on the training set.
    pub loss: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Loss after each accepted iterate, starting with the initial one.
    pub loss_history: Vec<f64>,
}

/// Loss below which the decrease condition is considered met everywhere.
const LOSS_TOL: f64 = 1e-12;
const ARMIJO: f64 = 1e-4;

const MIN_RADIUS: f64 = 1e-3;

fn training_points(n: usize, cfg: &SynthesisConfig) -> Vec<DVector<f64>> {
    let mut rng = rng::stream(cfg.seed, rng::domain::SYNTHESIS, 0);
    let mut out = Vec::with_capacity(cfg.n_train);
    while out.len() < cfg.n_train {
        let dir = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let norm = dir.norm();
        if norm == 0.0 {
            continue;
        }
        let r = cfg.train_radius * rng.random::<f64>().powf(1.0 / n as f64);
        if r < MIN_RADIUS {
            continue;
        }
        out.push(dir * (r / norm));
    }
    out
}

struct Problem {
    z: Vec<DVector<f64>>,
    w: Vec<DVector<f64>>,
    epsilon: f64,
}

impl Problem {
    /// Per-point margins `tr(Q·A_i)`.
    fn margins<'a>(&'a self, q: &'a DMatrix<f64>) -> impl Iterator<Item = f64> + 'a {
        self.z.iter().zip(&self.w).map(move |(z, w)| {
            let qz = q * z;
            2.0 * qz.dot(w) + self.epsilon * qz.dot(z)
        })
    }

    fn loss(&self, q: &DMatrix<f64>) -> f64 {
        self.margins(q).map(|m| m.max(0.0)).sum::<f64>() / self.z.len() as f64
    }

    /// Mean of `A_i` over points with positive margin.
    fn active_gradient(&self, q: &DMatrix<f64>) -> DMatrix<f64> {
        let p = q.nrows();
        let mut g = DMatrix::zeros(p, p);
        for ((z, w), m) in self.z.iter().zip(&self.w).zip(self.margins(q)) {
            if m > 0.0 {
                g.ger(1.0, z, w, 1.0);
                g.ger(1.0, w, z, 1.0);
                g.ger(self.epsilon, z, z, 1.0);
            }
        }
        g / self.z.len() as f64
    }
}

fn gram(l: &DMatrix<f64>, delta: f64) -> DMatrix<f64> {
    let mut q = l * l.transpose();
    q = (&q + q.transpose()) * 0.5;
    for i in 0..q.nrows() {
        q[(i, i)] += delta;
    }
    q
}

pub fn synthesize(
    sys: &OdeSystem,
    dict: &BasisDictionary,
    cfg: &SynthesisConfig,
) -> Result<SynthesisResult> {
    cfg.validate()?;
    ScoreError::check_dim(sys.dimension(), dict.dimension())?;
    let n = sys.dimension();
    let points = training_points(n, cfg);
    let w = points
        .iter()
        .map(|x| dict.jac_mul(x, &sys.field(x)))
        .collect::<Vec<_>>();
    let z = points.iter().map(|x| dict.eval(x)).collect::<Vec<_>>();
    if z.iter().chain(&w).any(|v| v.iter().any(|c| !c.is_finite())) {
        return Err(ScoreError::NonFinite("training features"));
    }
    let problem = Problem {
        z,
        w,
        epsilon: cfg.epsilon,
    };

    let p = dict.size();
    let mut l = DMatrix::<f64>::identity(p, p);
    let mut q = gram(&l, cfg.delta);
    let mut loss = problem.loss(&q);
    let mut history = vec![loss];
    let mut step = cfg.learning_rate;
    let mut iterations = 0;
    while iterations < cfg.max_iters && loss > LOSS_TOL {
        iterations += 1;
        let g = problem.active_gradient(&q);
        let mut grad = (&g * &l) * 2.0;
        grad.fill_upper_triangle(0.0, 1);
        let sq = grad.norm_squared();
        if sq == 0.0 {
            break;
        }
        let mut accepted = false;
        while step > 1e-16 {
            let trial_l = &l - &grad * step;
            let trial_q = gram(&trial_l, cfg.delta);
            let trial_loss = problem.loss(&trial_q);
            if trial_loss <= loss - ARMIJO * step * sq {
                l = trial_l;
                q = trial_q;
                loss = trial_loss;
                accepted = true;
                step *= 1.5;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        history.push(loss);
    }
    let candidate = GramCandidate::new(dict.clone(), q)?;
    Ok(SynthesisResult {
        candidate,
        loss,
        converged: loss <= LOSS_TOL,
        iterations,
        loss_history: history,
    })
}
