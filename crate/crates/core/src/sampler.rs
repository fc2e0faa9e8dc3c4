//! Projected stochastic gradient Langevin dynamics on the level set
//! `M = {x : V(x) = ρ}` and block-maxima collection.
//!
//! One step is `x ← Π_M(x + η ∇V̇(x) + √(2Tη) ξ)` with `ξ ~ N(0, I)`. Each
//! chain draws its noise from its own counter-based stream keyed by
//! `(seed, block, chain)`, so results do not depend on thread count or
//! scheduling.

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScoreError};
use crate::lyapunov::{GramCandidate, LieDerivative};
use crate::rng;
use crate::StateVector;

/// Gradient norm below which the projection is considered stuck at a critical point of `V`.
const CRITICAL_GRAD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    /// Newton projection back onto the level set after every step.
    #[default]
    ExactProjection,
    /// Quadratic penalty `w/2 (V − ρ)²` during the chain, one projection at the end.
    SoftPenalty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsgldConfig {
    pub eta: f64,
    pub temperature: f64,
    pub k_steps: usize,
    pub block_size: usize,
    pub n_blocks: usize,
    pub grad_clip: Option<f64>,
    pub projection_tol: f64,
    pub projection_max_iters: usize,
    pub reseed_period: Option<usize>,
    pub mode: SamplerMode,
    pub penalty_weight: f64,
    pub seed: u64,
}

impl PsgldConfig {
    pub const DEFAULT_PROJECTION_TOL: f64 = 1e-9;
    pub const DEFAULT_PROJECTION_MAX_ITERS: usize = 50;

    /// Problem-scaled defaults: the temperature is `1e-3·|median V̇|` over
    /// direction-uniform samples of the level set, shrunk by `10/(N − 1)`
    /// above `N = 11` so the mean equilibrium gap `(T/2)(N − 1)` stays
    /// bounded; the step is
    /// `0.2 / L` with `L` a sampled Lipschitz estimate of `∇V̇` on the level
    /// set, and the gradient clip is `10·√N`.
    pub fn defaults_for(l: &LieDerivative<'_>, rho: f64, seed: u64) -> Result<Self> {
        let n = l.dimension();
        let scales = probe_scales(l, rho, seed)?;
        let temperature = (1e-2 * scales.median_abs_vdot / (n.max(11) - 1) as f64).max(1e-12);
        let eta = if scales.lipschitz > 0.0 {
            0.2 / scales.lipschitz
        } else {
            1e-3 * rho / n as f64
        };
        Ok(Self {
            eta,
            temperature,
            k_steps: 500,
            block_size: 64,
            n_blocks: 100,
            grad_clip: Some(10.0 * (n as f64).sqrt()),
            projection_tol: Self::DEFAULT_PROJECTION_TOL,
            projection_max_iters: Self::DEFAULT_PROJECTION_MAX_ITERS,
            reseed_period: None,
            mode: SamplerMode::ExactProjection,
            penalty_weight: 100.0,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(ScoreError::InvalidArgument(what.to_string()));
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad("eta must be finite and non-negative");
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be finite and non-negative");
        }
        if !(self.projection_tol > 0.0) {
            return bad("projection_tol must be positive");
        }
        if self.k_steps == 0 || self.block_size == 0 || self.n_blocks == 0 {
            return bad("k_steps, block_size and n_blocks must be >= 1");
        }
        if self.projection_max_iters == 0 {
            return bad("projection_max_iters must be >= 1");
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return bad("grad_clip must be positive");
        }
        if self.reseed_period == Some(0) {
            return bad("reseed_period must be >= 1");
        }
        if self.mode == SamplerMode::SoftPenalty && !(self.penalty_weight > 0.0) {
            return bad("penalty_weight must be positive");
        }
        Ok(())
    }

    /// Stable FNV-1a hash of the configuration, recorded with every block-maxima set.
    pub fn fingerprint(&self) -> u64 {
        let text = format!("{self:?}");
        text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}

struct Scales {
    median_abs_vdot: f64,
    lipschitz: f64,
}

fn probe_scales(l: &LieDerivative<'_>, rho: f64, seed: u64) -> Result<Scales> {
    let mut rng = rng::stream(seed, rng::domain::ORACLE, u64::MAX);
    let points = sample_uniform_on_levelset(
        l.candidate(),
        rho,
        64,
        &mut rng,
        PsgldConfig::DEFAULT_PROJECTION_TOL,
    )?;
    let mut abs_vdot: Vec<f64> = points.iter().map(|x| l.vdot(x).abs()).collect();
    abs_vdot.sort_by(f64::total_cmp);
    let median_abs_vdot = abs_vdot[abs_vdot.len() / 2];
    let mut lipschitz: f64 = 0.0;
    for x in &points {
        let h = 1e-4 * (1.0 + x.norm());
        let dir = random_direction(x.len(), &mut rng);
        let g0 = l.evaluate(x).grad_vdot;
        let g1 = l.evaluate(&(x + &dir * h)).grad_vdot;
        lipschitz = lipschitz.max((g1 - g0).norm() / h);
    }
    Ok(Scales {
        median_abs_vdot,
        lipschitz,
    })
}

fn random_direction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let u = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = u.norm();
        if norm > 1e-12 {
            return u / norm;
        }
    }
}

/// Damped Newton projection `x ← x − (V(x) − ρ) ∇V / ‖∇V‖²` onto `{V = ρ}`.
///
/// A point already within `tol` is returned unchanged; otherwise one extra
/// Newton step is taken after reaching `tol`, which lands at rounding level.
pub fn project_to_levelset(
    c: &GramCandidate,
    x: &StateVector,
    rho: f64,
    tol: f64,
    max_iters: usize,
) -> Result<StateVector> {
    ScoreError::check_dim(c.dimension(), x.len())?;
    if !(rho > 0.0) {
        return Err(ScoreError::InvalidArgument(format!(
            "level {rho} must be positive"
        )));
    }
    project(c, x.clone(), rho, tol, max_iters)
}

fn project(
    c: &GramCandidate,
    mut x: DVector<f64>,
    rho: f64,
    tol: f64,
    max_iters: usize,
) -> Result<DVector<f64>> {
    let (mut v, mut g) = c.value_and_gradient(&x);
    if (v - rho).abs() <= tol {
        return Ok(x);
    }
    for _ in 0..max_iters {
        let g2 = g.norm_squared();
        if !(g2.sqrt() >= CRITICAL_GRAD) {
            return Err(ScoreError::ProjectionFailed(format!(
                "gradient norm {:e} at a critical point of V",
                g2.sqrt()
            )));
        }
        let step = (v - rho) / g2;
        let mut t = 1.0;
        let mut trial = &x - &g * (t * step);
        let (mut vt, mut gt) = c.value_and_gradient(&trial);
        while !((vt - rho).abs() < (v - rho).abs()) && t > 1e-8 {
            t *= 0.5;
            trial = &x - &g * (t * step);
            (vt, gt) = c.value_and_gradient(&trial);
        }
        if !vt.is_finite() {
            return Err(ScoreError::NonFinite("projection"));
        }
        (x, v, g) = (trial, vt, gt);
        if (v - rho).abs() <= tol {
            let g2 = g.norm_squared();
            if g2 > 0.0 {
                let polished = &x - &g * ((v - rho) / g2);
                if (c.value(&polished) - rho).abs() <= (v - rho).abs() {
                    return Ok(polished);
                }
            }
            return Ok(x);
        }
    }
    Err(ScoreError::ProjectionFailed(format!(
        "no convergence in {max_iters} iterations (|V - rho| = {:e})",
        (v - rho).abs()
    )))
}

/// The first crossing of `{V = ρ}` along the ray `t·u`, `t > 0`.
pub fn ray_to_levelset(
    c: &GramCandidate,
    direction: &DVector<f64>,
    rho: f64,
    tol: f64,
) -> Result<DVector<f64>> {
    let vt = |t: f64| c.value(&(direction * t));
    let mut lo = 0.0;
    let mut hi = 1.0;
    while vt(hi) <= rho {
        lo = hi;
        hi *= 2.0;
        if hi > 2f64.powi(60) {
            return Err(ScoreError::NonCompactLevelSet);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if vt(mid) <= rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = if (vt(lo) - rho).abs() <= (vt(hi) - rho).abs() {
        lo
    } else {
        hi
    };
    let x = direction * t;
    if (c.value(&x) - rho).abs() <= tol {
        Ok(x)
    } else {
        project(c, x, rho, tol, PsgldConfig::DEFAULT_PROJECTION_MAX_ITERS)
    }
}

/// Direction-uniform points on `{V = ρ}`: a Gaussian direction, then ray bisection.
pub fn sample_uniform_on_levelset<R: Rng + ?Sized>(
    c: &GramCandidate,
    rho: f64,
    count: usize,
    rng: &mut R,
    tol: f64,
) -> Result<Vec<StateVector>> {
    if !(rho > 0.0) {
        return Err(ScoreError::InvalidArgument(format!(
            "level {rho} must be positive"
        )));
    }
    (0..count)
        .map(|_| {
            let u = random_direction(c.dimension(), rng);
            ray_to_levelset(c, &u, rho, tol)
        })
        .collect()
}

/// One Langevin chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub position: StateVector,
    pub rng: ChaCha8Rng,
    pub projection_failures: usize,
    pub reseeds: usize,
}

impl ChainState {
    /// Chain `chain` of block `block`, initialized uniformly on the level set.
    pub fn init(
        c: &GramCandidate,
        rho: f64,
        cfg: &PsgldConfig,
        block: usize,
        chain: usize,
    ) -> Result<Self> {
        let mut rng = rng::stream(cfg.seed, rng::domain::CHAIN, rng::chain_index(block, chain));
        let position = sample_uniform_on_levelset(c, rho, 1, &mut rng, cfg.projection_tol)?
            .pop()
            .expect("one sample");
        Ok(Self {
            position,
            rng,
            projection_failures: 0,
            reseeds: 0,
        })
    }

    /// Chain starting at a given state with its own stream.
    pub fn at(position: StateVector, seed: u64, block: usize, chain: usize) -> Self {
        Self {
            position,
            rng: rng::stream(seed, rng::domain::CHAIN, rng::chain_index(block, chain)),
            projection_failures: 0,
            reseeds: 0,
        }
    }

    fn reseed(&mut self, c: &GramCandidate, rho: f64, tol: f64) -> Result<()> {
        self.position = sample_uniform_on_levelset(c, rho, 1, &mut self.rng, tol)?
            .pop()
            .expect("one sample");
        self.reseeds += 1;
        Ok(())
    }
}

fn clip(mut g: DVector<f64>, limit: Option<f64>) -> DVector<f64> {
    if let Some(limit) = limit {
        let norm = g.norm();
        if norm > limit {
            g *= limit / norm;
        }
    }
    g
}

/// Advance a chain by one PSGLD step, returning `V̇` at the state it left.
fn step_from(
    l: &LieDerivative<'_>,
    state: &mut ChainState,
    rho: f64,
    cfg: &PsgldConfig,
) -> Result<f64> {
    let c = l.candidate();
    let e = l.evaluate(&state.position);
    let mut drift = clip(e.grad_vdot, cfg.grad_clip);
    if cfg.mode == SamplerMode::SoftPenalty {
        drift -= &e.grad_v * (cfg.penalty_weight * (e.v - rho));
    }
    let mut proposal = &state.position + drift * cfg.eta;
    if cfg.temperature > 0.0 {
        let amp = (2.0 * cfg.temperature * cfg.eta).sqrt();
        for xi in proposal.iter_mut() {
            *xi += amp * state.rng.sample::<f64, _>(StandardNormal);
        }
    }
    match cfg.mode {
        SamplerMode::ExactProjection => {
            match project(
                c,
                proposal,
                rho,
                cfg.projection_tol,
                cfg.projection_max_iters,
            ) {
                Ok(x) => state.position = x,
                Err(ScoreError::ProjectionFailed(_)) | Err(ScoreError::NonFinite(_)) => {
                    state.projection_failures += 1;
                    state.reseed(c, rho, cfg.projection_tol)?;
                }
                Err(e) => return Err(e),
            }
        }
        SamplerMode::SoftPenalty => {
            if proposal.iter().all(|v| v.is_finite()) {
                state.position = proposal;
            } else {
                state.projection_failures += 1;
                state.reseed(c, rho, cfg.projection_tol)?;
            }
        }
    }
    Ok(e.vdot)
}

/// One PSGLD step.
pub fn psgld_step(
    l: &LieDerivative<'_>,
    state: &mut ChainState,
    rho: f64,
    cfg: &PsgldConfig,
) -> Result<()> {
    step_from(l, state, rho, cfg).map(|_| ())
}

/// Settle a chain's final state on the level set; soft-penalty chains are
/// projected first.
fn finish(
    l: &LieDerivative<'_>,
    state: &mut ChainState,
    rho: f64,
    cfg: &PsgldConfig,
) -> Result<()> {
    if cfg.mode == SamplerMode::SoftPenalty {
        let c = l.candidate();
        match project(
            c,
            state.position.clone(),
            rho,
            cfg.projection_tol,
            cfg.projection_max_iters,
        ) {
            Ok(x) => state.position = x,
            Err(ScoreError::ProjectionFailed(_)) | Err(ScoreError::NonFinite(_)) => {
                state.projection_failures += 1;
                state.reseed(c, rho, cfg.projection_tol)?;
            }
            Err(e) => return Err(e),
        }
    }
    state.position = snap(l.candidate(), &state.position, rho);
    Ok(())
}

/// Largest ulp offset tried per coordinate when settling a final state.
const SNAP_ULPS: i32 = 4;

fn nudge(v: f64, k: i32) -> f64 {
    let mut v = v;
    for _ in 0..k.unsigned_abs() {
        v = if k > 0 { v.next_up() } else { v.next_down() };
    }
    v
}

/// Move the two coordinates along which `V` varies least by a few ulp so
/// that `V(x)` is as close to `ρ` as the floating-point grid allows.
fn snap(c: &GramCandidate, x: &DVector<f64>, rho: f64) -> DVector<f64> {
    let (v, g) = c.value_and_gradient(x);
    let mut best = (v - rho).abs();
    let mut out = x.clone();
    if best == 0.0 {
        return out;
    }
    let floor = 1e-8 * g.amax();
    let mut coords = (0..x.len())
        .filter(|&i| g[i].abs() > floor)
        .collect::<Vec<_>>();
    coords.sort_by(|&a, &b| g[a].abs().total_cmp(&g[b].abs()));
    let (i, j) = match coords[..] {
        [] => return out,
        [i] => (i, i),
        [i, j, ..] => (i, j),
    };
    // Newton steps along the flattest coordinate resolve sub-ulp errors.
    let mut base = x.clone();
    let mut vb = v;
    for _ in 0..SNAP_ULPS {
        base[i] += (rho - vb) / g[i];
        vb = c.value(&base);
        if (vb - rho).abs() < best {
            best = (vb - rho).abs();
            out.copy_from(&base);
            if vb == rho {
                return out;
            }
        }
    }
    let span = if i == j { 0 } else { SNAP_ULPS };
    let mut trial = base.clone();
    for a in -SNAP_ULPS..=SNAP_ULPS {
        trial[i] = nudge(base[i], a);
        for b in -span..=span {
            if i != j {
                trial[j] = nudge(base[j], b);
            }
            let err = (c.value(&trial) - rho).abs();
            if err < best {
                best = err;
                out.copy_from(&trial);
                if err == 0.0 {
                    return out;
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct ChainOutcome {
    pub final_vdot: f64,
    pub final_state: StateVector,
    /// Largest `V̇` seen on the level set, including intermediate states.
    pub best_vdot: f64,
    pub best_state: StateVector,
    pub projection_failures: usize,
    pub reseeds: usize,
}

/// Run `cfg.k_steps` steps from `state`.
pub fn run_chain_from(
    l: &LieDerivative<'_>,
    mut state: ChainState,
    rho: f64,
    cfg: &PsgldConfig,
) -> Result<ChainOutcome> {
    let c = l.candidate();
    let track_intermediate = cfg.mode == SamplerMode::ExactProjection;
    let mut best_vdot = f64::NEG_INFINITY;
    let mut best_state = state.position.clone();
    for k in 0..cfg.k_steps {
        if let Some(period) = cfg.reseed_period {
            if k > 0 && k % period == 0 {
                state.reseed(c, rho, cfg.projection_tol)?;
            }
        }
        let before = state.position.clone();
        let vdot = step_from(l, &mut state, rho, cfg)?;
        if track_intermediate && vdot > best_vdot {
            best_vdot = vdot;
            best_state = before;
        }
    }
    finish(l, &mut state, rho, cfg)?;
    let final_vdot = l.vdot(&state.position);
    if !final_vdot.is_finite() {
        return Err(ScoreError::NonFinite("Lie derivative"));
    }
    if final_vdot >= best_vdot {
        best_vdot = final_vdot;
        best_state = state.position.clone();
    }
    Ok(ChainOutcome {
        final_vdot,
        final_state: state.position,
        best_vdot,
        best_state,
        projection_failures: state.projection_failures,
        reseeds: state.reseeds,
    })
}

fn run_chain(
    l: &LieDerivative<'_>,
    rho: f64,
    cfg: &PsgldConfig,
    block: usize,
    chain: usize,
) -> Result<ChainOutcome> {
    let state = ChainState::init(l.candidate(), rho, cfg, block, chain)?;
    run_chain_from(l, state, rho, cfg)
}

/// Outcome of one block of `m` chains.
#[derive(Debug, Clone)]
pub struct BlockOutcome {
    pub index: usize,
    /// `M_b = max_i y⁽ⁱ⁾_final`.
    pub maximum: f64,
    /// Every chain's final `V̇`, in chain order.
    pub finals: Vec<f64>,
    pub best_vdot: f64,
    pub best_state: StateVector,
    pub projection_failures: usize,
    pub reseeds: usize,
}

fn reduce_block(index: usize, chains: Vec<ChainOutcome>) -> BlockOutcome {
    let finals: Vec<f64> = chains.iter().map(|c| c.final_vdot).collect();
    let maximum = finals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let best = chains.iter().enumerate().fold(0, |b, (i, c)| {
        if c.best_vdot > chains[b].best_vdot {
            i
        } else {
            b
        }
    });
    BlockOutcome {
        index,
        maximum,
        best_vdot: chains[best].best_vdot,
        best_state: chains[best].best_state.clone(),
        projection_failures: chains.iter().map(|c| c.projection_failures).sum(),
        reseeds: chains.iter().map(|c| c.reseeds).sum(),
        finals,
    }
}

fn check_inputs(l: &LieDerivative<'_>, rho: f64, cfg: &PsgldConfig) -> Result<()> {
    cfg.validate()?;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(ScoreError::InvalidArgument(format!(
            "level {rho} must be positive"
        )));
    }
    ScoreError::check_dim(l.dimension(), l.candidate().dimension())
}

/// Run block `block_index`: `m` chains from uniform starts, `K` steps each.
pub fn run_block(
    l: &LieDerivative<'_>,
    rho: f64,
    cfg: &PsgldConfig,
    block_index: usize,
) -> Result<BlockOutcome> {
    check_inputs(l, rho, cfg)?;
    let chains = (0..cfg.block_size)
        .into_par_iter()
        .map(|i| run_chain(l, rho, cfg, block_index, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce_block(block_index, chains))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: u64,
}

/// The extreme-value dataset `S_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockMaximaSet {
    pub values: Vec<f64>,
    pub rho: f64,
    pub provenance: Provenance,
}

impl BlockMaximaSet {
    /// One value per line after a `#` header carrying the config hash.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# config_hash={:016x} seed={} rho={:?}\n",
            self.provenance.config_hash, self.provenance.seed, self.rho
        );
        for v in &self.values {
            out.push_str(&format!("{v:?}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerDiagnostics {
    pub projection_failures: usize,
    pub reseeds: usize,
    pub chains: usize,
    pub mean_final_vdot: f64,
    pub empirical_max: f64,
}

#[derive(Debug, Clone)]
pub struct Sampling {
    pub maxima: BlockMaximaSet,
    pub blocks: Vec<BlockOutcome>,
    /// Largest `V̇` seen anywhere, with its state (a counterexample when `≥ 0`).
    pub global_best: (f64, StateVector),
    pub diagnostics: SamplerDiagnostics,
    /// Sampling stopped after a non-negative `V̇` was found.
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CollectOptions {
    /// Stop after the first group of blocks that contains a state with `V̇ ≥ 0`.
    pub stop_on_nonnegative: bool,
    pub deadline: Option<Instant>,
}

/// Blocks evaluated together between early-exit checks. Fixed so that the
/// stopping point does not depend on the thread count.
const BLOCK_GROUP: usize = 4;

/// Collect `n_blocks` block maxima from disjoint chain streams.
pub fn collect_block_maxima(
    l: &LieDerivative<'_>,
    rho: f64,
    cfg: &PsgldConfig,
    opts: CollectOptions,
) -> Result<Sampling> {
    check_inputs(l, rho, cfg)?;
    let mut blocks: Vec<BlockOutcome> = Vec::with_capacity(cfg.n_blocks);
    let mut stopped_early = false;
    let m = cfg.block_size;
    for start in (0..cfg.n_blocks).step_by(BLOCK_GROUP) {
        if matches!(opts.deadline, Some(d) if Instant::now() >= d) {
            return Err(ScoreError::Timeout);
        }
        let end = (start + BLOCK_GROUP).min(cfg.n_blocks);
        let chains = (start * m..end * m)
            .into_par_iter()
            .map(|k| run_chain(l, rho, cfg, k / m, k % m))
            .collect::<Result<Vec<_>>>()?;
        let mut chains = chains.into_iter();
        for b in start..end {
            blocks.push(reduce_block(b, chains.by_ref().take(m).collect()));
        }
        if opts.stop_on_nonnegative && blocks[start..end].iter().any(|b| b.best_vdot >= 0.0) {
            stopped_early = end < cfg.n_blocks;
            break;
        }
    }
    let best = blocks.iter().fold(0, |b, blk| {
        if blk.best_vdot > blocks[b].best_vdot {
            blk.index
        } else {
            b
        }
    });
    let chains: usize = blocks.iter().map(|b| b.finals.len()).sum();
    let mean_final = blocks.iter().flat_map(|b| b.finals.iter()).sum::<f64>() / chains as f64;
    let diagnostics = SamplerDiagnostics {
        projection_failures: blocks.iter().map(|b| b.projection_failures).sum(),
        reseeds: blocks.iter().map(|b| b.reseeds).sum(),
        chains,
        mean_final_vdot: mean_final,
        empirical_max: blocks[best].best_vdot,
    };
    Ok(Sampling {
        maxima: BlockMaximaSet {
            values: blocks.iter().map(|b| b.maximum).collect(),
            rho,
            provenance: Provenance {
                seed: cfg.seed,
                config_hash: cfg.fingerprint(),
            },
        },
        global_best: (blocks[best].best_vdot, blocks[best].best_state.clone()),
        blocks,
        diagnostics,
        stopped_early,
    })
}
