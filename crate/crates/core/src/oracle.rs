//! Deterministic reference values for `γ* = max V̇` on `{V = ρ}`, and the
//! κ metric (certified area over true region-of-attraction area) for the
//! reversed Van der Pol benchmark.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::OdeSystem;
use crate::error::{Result, ScoreError};
use crate::lyapunov::{GramCandidate, LieDerivative};
use crate::rng;
use crate::sampler::{project_to_levelset, ray_to_levelset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    GridPolish,
    EigenExact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub gamma_true: f64,
    pub argmax_state: Vec<f64>,
    pub method: OracleMethod,
    pub resolution: usize,
}

const ORACLE_TOL: f64 = 1e-11;
const POLISH_CANDIDATES: usize = 10;

fn grid_directions(n: usize, resolution: usize) -> Result<Vec<DVector<f64>>> {
    let r = resolution.max(1);
    Ok(match n {
        1 => vec![
            DVector::from_element(1, 1.0),
            DVector::from_element(1, -1.0),
        ],
        2 => (0..r)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / r as f64;
                DVector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect(),
        3 => (0..r)
            .flat_map(|i| {
                let theta = PI * (i as f64 + 0.5) / r as f64;
                (0..r).map(move |j| {
                    let phi = 2.0 * PI * j as f64 / r as f64;
                    DVector::from_vec(vec![
                        theta.sin() * phi.cos(),
                        theta.sin() * phi.sin(),
                        theta.cos(),
                    ])
                })
            })
            .collect(),
        _ => {
            return Err(ScoreError::Unsupported(format!(
                "grid oracle supports N <= 3, got N = {n}"
            )))
        }
    })
}

/// Projected gradient ascent on `V̇` with backtracking; never decreases `V̇`.
fn polish(l: &LieDerivative<'_>, mut x: DVector<f64>, rho: f64) -> (f64, DVector<f64>) {
    let c = l.candidate();
    let mut value = l.vdot(&x);
    let mut step = 1e-2;
    for _ in 0..20_000 {
        let g = l.evaluate(&x).grad_vdot;
        let gn = g.norm();
        if gn == 0.0 {
            break;
        }
        let mut improved = false;
        while step * gn > 1e-15 * (1.0 + x.norm()) {
            let trial = &x + &g * step;
            if let Ok(y) = project_to_levelset(c, &trial, rho, ORACLE_TOL, 100) {
                let vy = l.vdot(&y);
                if vy > value {
                    let gain = vy - value;
                    x = y;
                    value = vy;
                    improved = true;
                    step *= 1.5;
                    if gain <= 1e-15 * (1.0 + value.abs()) {
                        return (value, x);
                    }
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (value, x)
}

/// Dense angular grid over directions, ray bisection onto the level set,
/// then projected-ascent polishing of the best candidates. `N ≤ 3`.
pub fn grid_max_vdot(
    sys: &OdeSystem,
    cand: &GramCandidate,
    rho: f64,
    resolution: usize,
) -> Result<OracleResult> {
    let l = LieDerivative::new(cand, sys)?;
    let dirs = grid_directions(sys.dimension(), resolution)?;
    if !(rho > 0.0) {
        return Err(ScoreError::InvalidArgument(format!(
            "level {rho} must be positive"
        )));
    }
    let mut scored: Vec<(f64, DVector<f64>)> = dirs
        .iter()
        .map(|u| {
            let x = ray_to_levelset(cand, u, rho, ORACLE_TOL)?;
            Ok((l.vdot(&x), x))
        })
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (gamma_true, argmax) = scored
        .into_iter()
        .take(POLISH_CANDIDATES)
        .map(|(_, x)| polish(&l, x, rho))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one direction");
    Ok(OracleResult {
        gamma_true,
        argmax_state: argmax.iter().copied().collect(),
        method: OracleMethod::GridPolish,
        resolution,
    })
}

fn inverse_sqrt_pd(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = p.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(ScoreError::InvalidArgument(
            "P must be positive definite".into(),
        ));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Exact `max xᵀ(MᵀP + PM)x` subject to `xᵀPx = ρ`, i.e.
/// `ρ·λ_max(P^(−1/2)(MᵀP + PM)P^(−1/2))`.
pub fn eigen_exact_linear(m: &DMatrix<f64>, p: &DMatrix<f64>, rho: f64) -> Result<OracleResult> {
    if !m.is_square() || m.shape() != p.shape() {
        return Err(ScoreError::InvalidArgument(
            "M and P must be square and equal-sized".into(),
        ));
    }
    if (p - p.transpose()).abs().max() > 1e-12 * (1.0 + p.abs().max()) {
        return Err(ScoreError::InvalidArgument("P must be symmetric".into()));
    }
    let p_inv_sqrt = inverse_sqrt_pd(p)?;
    let lyap = m.transpose() * p + p * m;
    let s = &p_inv_sqrt * lyap * &p_inv_sqrt;
    let s = (&s + s.transpose()) * 0.5;
    let eig = s.symmetric_eigen();
    let top = eig.eigenvalues.imax();
    let w = eig.eigenvectors.column(top).into_owned();
    let x = &p_inv_sqrt * w * rho.sqrt();
    Ok(OracleResult {
        gamma_true: rho * eig.eigenvalues[top],
        argmax_state: x.iter().copied().collect(),
        method: OracleMethod::EigenExact,
        resolution: m.nrows(),
    })
}

/// The unstable limit cycle of the reversed Van der Pol oscillator as a
/// closed polyline (last vertex not repeated).
///
/// Integrates the forward-time classic oscillator (the reversed system run
/// backward) with RK4 at step `1e-3` from `(0.1, 0)`, waits until successive
/// Poincaré crossings of `{x₂ = 0, x₁ > 0}` agree to 1e-10, then records one
/// period.
pub fn vdp_limit_cycle() -> Vec<[f64; 2]> {
    let backward = |s: [f64; 2]| [s[1], -s[0] + (1.0 - s[0] * s[0]) * s[1]];
    let rk4 = |s: [f64; 2], h: f64| {
        let add = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * b[0], a[1] + t * b[1]];
        let k1 = backward(s);
        let k2 = backward(add(s, k1, h / 2.0));
        let k3 = backward(add(s, k2, h / 2.0));
        let k4 = backward(add(s, k3, h));
        [
            s[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            s[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    };
    let h = 1e-3;
    let mut s = [0.1, 0.0];
    let mut last_crossing: Option<f64> = None;
    let mut recording: Option<Vec<[f64; 2]>> = None;
    for _ in 0..10_000_000 {
        let next = rk4(s, h);
        let crossed = s[1] > 0.0 && next[1] <= 0.0 && next[0] > 0.0;
        if let Some(poly) = recording.as_mut() {
            if crossed {
                return poly.clone();
            }
            poly.push(next);
        } else if crossed {
            let x_cross = s[0] + (next[0] - s[0]) * s[1] / (s[1] - next[1]);
            if matches!(last_crossing, Some(prev) if (prev - x_cross).abs() < 1e-10) {
                recording = Some(vec![next]);
            }
            last_crossing = Some(x_cross);
        }
        s = next;
    }
    unreachable!("the Van der Pol limit cycle attracts every nonzero state")
}

/// Point-in-region test for a closed curve that is star-shaped about the origin.
struct StarRegion {
    angles: Vec<f64>,
    radii: Vec<f64>,
}

impl StarRegion {
    fn new(poly: &[[f64; 2]]) -> Result<Self> {
        let mut pts: Vec<(f64, f64)> = poly
            .iter()
            .map(|p| (p[1].atan2(p[0]), p[0].hypot(p[1])))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Star-shaped iff the winding is monotone: each angle appears once.
        let winding: f64 = poly
            .iter()
            .zip(poly.iter().cycle().skip(1))
            .map(|(a, b)| {
                let d = b[1].atan2(b[0]) - a[1].atan2(a[0]);
                (d + PI).rem_euclid(2.0 * PI) - PI
            })
            .map(f64::abs)
            .sum();
        if (winding - 2.0 * PI).abs() > 1e-6 {
            return Err(ScoreError::Unsupported(
                "region boundary is not star-shaped about the origin".into(),
            ));
        }
        Ok(Self {
            angles: pts.iter().map(|p| p.0).collect(),
            radii: pts.iter().map(|p| p.1).collect(),
        })
    }

    fn radius_at(&self, theta: f64) -> f64 {
        let n = self.angles.len();
        let i = self.angles.partition_point(|&a| a < theta);
        let (a0, r0, a1, r1) = if i == 0 || i == n {
            (
                self.angles[n - 1] - 2.0 * PI,
                self.radii[n - 1],
                self.angles[0],
                self.radii[0],
            )
        } else {
            (
                self.angles[i - 1],
                self.radii[i - 1],
                self.angles[i],
                self.radii[i],
            )
        };
        let theta = if theta < a0 { theta + 2.0 * PI } else { theta };
        let t = if a1 > a0 {
            (theta - a0) / (a1 - a0)
        } else {
            0.0
        };
        r0 + t * (r1 - r0)
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x.hypot(y) < self.radius_at(y.atan2(x))
    }
}

/// Returns `(κ, standard error, hits in set, hits in ROA)`.
fn kappa_monte_carlo(
    roa: &StarRegion,
    in_set: impl Fn(f64, f64) -> bool,
    half: [f64; 2],
    samples: usize,
    seed: u64,
) -> (f64, f64, usize, usize) {
    let mut rng = rng::stream(seed, rng::domain::ORACLE, 0);
    let (mut hits_roa, mut hits_set) = (0usize, 0usize);
    for _ in 0..samples {
        let x = rng.random_range(-half[0]..half[0]);
        let y = rng.random_range(-half[1]..half[1]);
        if roa.contains(x, y) {
            hits_roa += 1;
        }
        if in_set(x, y) {
            hits_set += 1;
        }
    }
    let kappa = hits_set as f64 / hits_roa as f64;
    let k = kappa.min(1.0);
    let std_error = (k * (1.0 - k) / hits_roa as f64).sqrt();
    (kappa, std_error, hits_set, hits_roa)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaResult {
    pub kappa: f64,
    pub std_error: f64,
    pub certified_area: f64,
    pub roa_area: f64,
    pub samples: usize,
}

/// `κ = area{V ≤ ρ} / area(true ROA)` for the reversed Van der Pol system,
/// by Monte Carlo over a box containing both sets.
pub fn measure_kappa(
    sys: &OdeSystem,
    cand: &GramCandidate,
    rho: f64,
    samples: usize,
    seed: u64,
) -> Result<KappaResult> {
    if sys.name() != "vdp_reversed" {
        return Err(ScoreError::Unsupported(format!(
            "kappa needs a reference region of attraction; none for {}",
            sys.name()
        )));
    }
    if !(rho >= 0.0) || samples == 0 {
        return Err(ScoreError::InvalidArgument(
            "need rho >= 0 and samples > 0".into(),
        ));
    }
    let cycle = vdp_limit_cycle();
    let roa = StarRegion::new(&cycle)?;
    let mut half = [0.0f64; 2];
    for p in &cycle {
        half[0] = half[0].max(p[0].abs());
        half[1] = half[1].max(p[1].abs());
    }
    if rho > 0.0 {
        for k in 0..720 {
            let t = 2.0 * PI * k as f64 / 720.0;
            let x = ray_to_levelset(cand, &DVector::from_vec(vec![t.cos(), t.sin()]), rho, 1e-9)?;
            half[0] = half[0].max(x[0].abs());
            half[1] = half[1].max(x[1].abs());
        }
    }
    let half = [half[0] * 1.05, half[1] * 1.05];
    let box_area = 4.0 * half[0] * half[1];

    let in_set = |a: f64, b: f64| rho > 0.0 && cand.value(&DVector::from_vec(vec![a, b])) <= rho;
    let (kappa, std_error, in_set, in_roa) = kappa_monte_carlo(&roa, in_set, half, samples, seed);
    Ok(KappaResult {
        kappa,
        std_error,
        certified_area: box_area * in_set as f64 / samples as f64,
        roa_area: box_area * in_roa as f64 / samples as f64,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{make_reversed_vdp, make_scalar_cubic};
    use approx::assert_relative_eq;

    #[test]
    fn grid_constant_case() {
        let sys = OdeSystem::linear(-DMatrix::identity(2, 2)).unwrap();
        let c = GramCandidate::identity(2).unwrap();
        let r = grid_max_vdot(&sys, &c, 1.0, 360).unwrap();
        assert_relative_eq!(r.gamma_true, -2.0, epsilon = 1e-9);
    }

    #[test]
    fn grid_anisotropic_linear() {
        let sys = OdeSystem::linear(DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -3.0])))
            .unwrap();
        let c = GramCandidate::identity(2).unwrap();
        let r = grid_max_vdot(&sys, &c, 1.0, 360).unwrap();
        assert_relative_eq!(r.gamma_true, -2.0, epsilon = 1e-9);
        assert_relative_eq!(r.argmax_state[0].abs(), 1.0, epsilon = 1e-6);
        assert!(r.argmax_state[1].abs() < 1e-5);
        let x = DVector::from_vec(r.argmax_state.clone());
        assert!((c.value(&x) - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn grid_scalar_cubic_closed_form() {
        let sys = make_scalar_cubic();
        let c = GramCandidate::identity(1).unwrap();
        let r = grid_max_vdot(&sys, &c, 0.81, 1).unwrap();
        assert_relative_eq!(r.gamma_true, 2.0 * 0.81 * (0.81 - 1.0), epsilon = 1e-9);
        assert_relative_eq!(r.argmax_state[0].abs(), 0.9, epsilon = 1e-9);
    }

    #[test]
    fn grid_rejects_high_dimension() {
        let sys = OdeSystem::linear(-DMatrix::identity(4, 4)).unwrap();
        let c = GramCandidate::identity(4).unwrap();
        assert!(matches!(
            grid_max_vdot(&sys, &c, 1.0, 10),
            Err(ScoreError::Unsupported(_))
        ));
    }

    #[test]
    fn eigen_examples() {
        let r =
            eigen_exact_linear(&-DMatrix::identity(2, 2), &DMatrix::identity(2, 2), 1.0).unwrap();
        assert_relative_eq!(r.gamma_true, -2.0, epsilon = 1e-12);
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -3.0]));
        let r = eigen_exact_linear(&m, &DMatrix::identity(2, 2), 2.0).unwrap();
        assert_relative_eq!(r.gamma_true, -4.0, epsilon = 1e-12);
        let r3 = eigen_exact_linear(&m, &DMatrix::identity(2, 2), 6.0).unwrap();
        assert_relative_eq!(r3.gamma_true, 3.0 * r.gamma_true, epsilon = 1e-12);
        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(eigen_exact_linear(&m, &bad, 1.0).is_err());
    }

    #[test]
    fn limit_cycle_shape() {
        let cycle = vdp_limit_cycle();
        let max_x = cycle.iter().map(|p| p[0].abs()).fold(0.0, f64::max);
        let max_y = cycle.iter().map(|p| p[1].abs()).fold(0.0, f64::max);
        // Classical μ = 1 amplitudes: about 2.01 in x₁ and 2.67 in x₂; period about 6.663.
        assert!((max_x - 2.009).abs() < 0.01, "{max_x}");
        assert!((max_y - 2.673).abs() < 0.01, "{max_y}");
        assert!(
            (cycle.len() as f64 * 1e-3 - 6.663).abs() < 0.01,
            "{}",
            cycle.len()
        );
        // Closed: endpoints meet.
        let (a, b) = (cycle[0], cycle[cycle.len() - 1]);
        assert!((a[0] - b[0]).hypot(a[1] - b[1]) < 1e-2);
    }

    #[test]
    fn kappa_edges_and_monotonicity() {
        let sys = make_reversed_vdp();
        let c = GramCandidate::identity(2).unwrap();
        assert_eq!(measure_kappa(&sys, &c, 0.0, 10_000, 1).unwrap().kappa, 0.0);
        let mut prev = 0.0;
        for rho in [0.5, 1.0, 2.0, 3.0] {
            let k = measure_kappa(&sys, &c, rho, 100_000, 1).unwrap();
            assert!(k.kappa >= prev);
            prev = k.kappa;
        }
        let other = OdeSystem::linear(-DMatrix::identity(2, 2)).unwrap();
        assert!(measure_kappa(&other, &c, 1.0, 10, 1).is_err());
    }

    fn shoelace(poly: &[[f64; 2]]) -> f64 {
        0.5 * poly
            .iter()
            .zip(poly.iter().cycle().skip(1))
            .map(|(a, b)| a[0] * b[1] - b[0] * a[1])
            .sum::<f64>()
            .abs()
    }

    #[test]
    fn monte_carlo_roa_area_matches_shoelace() {
        let sys = make_reversed_vdp();
        let c = GramCandidate::identity(2).unwrap();
        let exact = shoelace(&vdp_limit_cycle());
        let k = measure_kappa(&sys, &c, 1.0, 400_000, 2).unwrap();
        assert!(
            (k.roa_area - exact).abs() < 0.01 * exact,
            "{} vs {exact}",
            k.roa_area
        );
        // Disc of radius 1.
        assert!((k.certified_area - PI).abs() < 0.02 * PI);
    }

    #[test]
    fn kappa_is_one_for_the_roa_itself() {
        let cycle = vdp_limit_cycle();
        let region = StarRegion::new(&cycle).unwrap();
        let k = kappa_monte_carlo(
            &region,
            |x, y| region.contains(x, y),
            [3.0, 3.0],
            100_000,
            4,
        );
        assert_eq!(k.0, 1.0);
    }
}
