//! Autonomous ODE systems `dx/dt = f(x)` with Jacobians, plus the benchmark
//! systems: reversed Van der Pol, dense symmetric Hurwitz, scalar cubic.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScoreError};
use crate::rng;
use crate::StateVector;

pub type FieldFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
enum Field {
    /// `ẋ = M x`
    Linear(DMatrix<f64>),
    /// `ẋ₁ = −x₂`, `ẋ₂ = x₁ + (x₁² − 1) x₂`
    ReversedVdp,
    /// `ẋ = −x + x³`
    ScalarCubic,
    Custom {
        field: FieldFn,
        jacobian: Option<JacobianFn>,
    },
}

/// An autonomous vector field with its Jacobian. Immutable and `Sync`.
#[derive(Clone)]
pub struct OdeSystem {
    name: String,
    dimension: usize,
    field: Field,
}

impl fmt::Debug for OdeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OdeSystem")
            .field("name", &self.name)
            .field("dimension", &self.dimension)
            .finish()
    }
}

/// Dense Hurwitz benchmark parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurwitzSpec {
    pub dimension: usize,
    pub eigenvalue_range: (f64, f64),
    pub seed: u64,
}

impl HurwitzSpec {
    pub const DEFAULT_RANGE: (f64, f64) = (-2.0, -0.1);

    pub fn new(dimension: usize, seed: u64) -> Self {
        Self {
            dimension,
            eigenvalue_range: Self::DEFAULT_RANGE,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.eigenvalue_range;
        if self.dimension == 0 {
            return Err(ScoreError::InvalidArgument(
                "dimension must be positive".into(),
            ));
        }
        if !(lo.is_finite() && hi.is_finite()) || lo > hi || hi >= 0.0 {
            return Err(ScoreError::InvalidArgument(format!(
                "eigenvalue range ({lo}, {hi}) must satisfy min <= max < 0"
            )));
        }
        Ok(())
    }
}

impl OdeSystem {
    pub fn linear(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(ScoreError::InvalidArgument(
                "linear system matrix must be square and non-empty".into(),
            ));
        }
        Ok(Self {
            name: "linear".into(),
            dimension: matrix.nrows(),
            field: Field::Linear(matrix),
        })
    }

    /// User-defined field. Without a Jacobian, central finite differences are used.
    pub fn custom(
        name: impl Into<String>,
        dimension: usize,
        field: FieldFn,
        jacobian: Option<JacobianFn>,
    ) -> Self {
        Self {
            name: name.into(),
            dimension,
            field: Field::Custom { field, jacobian },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// The system matrix when the dynamics are linear.
    pub fn linear_matrix(&self) -> Option<&DMatrix<f64>> {
        match &self.field {
            Field::Linear(m) => Some(m),
            _ => None,
        }
    }

    /// `f(x)` with dimension and finiteness checks.
    pub fn eval_field(&self, x: &StateVector) -> Result<StateVector> {
        ScoreError::check_dim(self.dimension, x.len())?;
        let out = self.field(x);
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(ScoreError::NonFinite("vector field"))
        }
    }

    /// `J_f(x)` with a dimension check.
    pub fn eval_jacobian(&self, x: &StateVector) -> Result<DMatrix<f64>> {
        ScoreError::check_dim(self.dimension, x.len())?;
        Ok(self.jacobian(x))
    }

    pub(crate) fn field(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.field {
            Field::Linear(m) => m * x,
            Field::ReversedVdp => DVector::from_vec(vec![-x[1], x[0] + (x[0] * x[0] - 1.0) * x[1]]),
            Field::ScalarCubic => DVector::from_element(1, -x[0] + x[0].powi(3)),
            Field::Custom { field, .. } => field(x),
        }
    }

    pub(crate) fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match &self.field {
            Field::Linear(m) => m.clone(),
            Field::ReversedVdp => DMatrix::from_row_slice(
                2,
                2,
                &[0.0, -1.0, 1.0 + 2.0 * x[0] * x[1], x[0] * x[0] - 1.0],
            ),
            Field::ScalarCubic => DMatrix::from_element(1, 1, -1.0 + 3.0 * x[0] * x[0]),
            Field::Custom {
                jacobian: Some(j), ..
            } => j(x),
            Field::Custom {
                field,
                jacobian: None,
            } => finite_difference_jacobian(&**field, x),
        }
    }

    /// `J_f(x)ᵀ v` without materializing the Jacobian for linear systems.
    pub(crate) fn jacobian_tr_mul(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        match &self.field {
            Field::Linear(m) => m.tr_mul(v),
            _ => self.jacobian(x).tr_mul(v),
        }
    }
}

/// Central-difference Jacobian with step `1e-6·(1 + |x_j|)`.
pub fn finite_difference_jacobian(
    field: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
) -> DMatrix<f64> {
    let n = x.len();
    let m = field(x).len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.clone();
    for j in 0..n {
        let h = 1e-6 * (1.0 + x[j].abs());
        xp[j] = x[j] + h;
        let fp = field(&xp);
        xp[j] = x[j] - h;
        let fm = field(&xp);
        xp[j] = x[j];
        jac.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    jac
}

/// Reversed Van der Pol oscillator (μ = 1). The origin is a stable focus and
/// the unstable limit cycle bounds the region of attraction.
pub fn make_reversed_vdp() -> OdeSystem {
    OdeSystem {
        name: "vdp_reversed".into(),
        dimension: 2,
        field: Field::ReversedVdp,
    }
}

/// `ẋ = −x + x³`; the region of attraction is `|x| < 1`.
pub fn make_scalar_cubic() -> OdeSystem {
    OdeSystem {
        name: "scalar_cubic".into(),
        dimension: 1,
        field: Field::ScalarCubic,
    }
}

/// The matrix `U Λ Uᵀ` of the dense Hurwitz benchmark.
pub fn dense_hurwitz_matrix(spec: &HurwitzSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = spec.dimension;
    let (lo, hi) = spec.eigenvalue_range;
    let mut rng = rng::stream(spec.seed, rng::domain::SYSTEM, 0);
    let gaussian = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let eigenvalues: Vec<f64> = (0..n)
        .map(|_| lo + (hi - lo) * rng.random::<f64>())
        .collect();
    let u = gaussian.qr().q();
    let lambda = DMatrix::from_diagonal(&DVector::from_vec(eigenvalues));
    let m = &u * lambda * u.transpose();
    // Exact symmetry; the product above is only symmetric up to rounding.
    Ok((&m + m.transpose()) * 0.5)
}

/// Dense, symmetric negative definite linear system.
pub fn make_dense_hurwitz(spec: &HurwitzSpec) -> Result<OdeSystem> {
    let m = dense_hurwitz_matrix(spec)?;
    let mut sys = OdeSystem::linear(m)?;
    sys.name = "dense_hurwitz".into();
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn v(xs: &[f64]) -> StateVector {
        DVector::from_row_slice(xs)
    }

    fn assert_jacobian_matches_fd(sys: &OdeSystem, seed: u64) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = sys.dimension();
        for _ in 0..100 {
            let x = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let analytic = sys.jacobian(&x);
            let h_of = |xj: f64| 1e-6 * (1.0 + xj.abs());
            for j in 0..n {
                let h = h_of(x[j]);
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let col = (sys.field(&xp) - sys.field(&xm)) / (2.0 * h);
                for i in 0..n {
                    let a = analytic[(i, j)];
                    let err = (a - col[i]).abs();
                    assert!(
                        err <= 1e-5 * (1.0 + a.abs()),
                        "{}: J[{i},{j}] = {a}, fd = {}",
                        sys.name(),
                        col[i]
                    );
                }
            }
        }
    }

    #[test]
    fn vdp_field_values() {
        let sys = make_reversed_vdp();
        assert_eq!(sys.eval_field(&v(&[0.0, 0.0])).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(sys.eval_field(&v(&[1.0, 0.0])).unwrap(), v(&[0.0, 1.0]));
        assert_eq!(sys.eval_field(&v(&[0.0, 1.0])).unwrap(), v(&[-1.0, -1.0]));
        assert_eq!(sys.eval_field(&v(&[2.0, 0.0])).unwrap(), v(&[0.0, 2.0]));
    }

    #[test]
    fn vdp_origin_is_stable_focus() {
        let j = make_reversed_vdp().eval_jacobian(&v(&[0.0, 0.0])).unwrap();
        assert_relative_eq!(j.trace(), -1.0);
        assert_relative_eq!(j.determinant(), 1.0);
        let eig = j.complex_eigenvalues();
        for l in eig.iter() {
            assert_relative_eq!(l.re, -0.5, epsilon = 1e-12);
            assert_relative_eq!(l.im.abs(), 3f64.sqrt() / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_identity_case() {
        let sys = OdeSystem::linear(-DMatrix::identity(2, 2)).unwrap();
        assert_eq!(sys.eval_field(&v(&[1.0, 2.0])).unwrap(), v(&[-1.0, -2.0]));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let sys = make_reversed_vdp();
        assert_eq!(
            sys.eval_field(&v(&[1.0])),
            Err(ScoreError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        );
    }

    #[test]
    fn non_finite_output_is_rejected() {
        let sys = make_scalar_cubic();
        assert_eq!(
            sys.eval_field(&v(&[1e200])),
            Err(ScoreError::NonFinite("vector field"))
        );
    }

    #[test]
    fn jacobians_match_finite_differences() {
        assert_jacobian_matches_fd(&make_reversed_vdp(), 1);
        assert_jacobian_matches_fd(&make_scalar_cubic(), 2);
        assert_jacobian_matches_fd(&make_dense_hurwitz(&HurwitzSpec::new(6, 3)).unwrap(), 3);
        let custom = OdeSystem::custom(
            "pendulum",
            2,
            Arc::new(|x: &DVector<f64>| DVector::from_vec(vec![x[1], -x[0].sin() - x[1]])),
            None,
        );
        assert_jacobian_matches_fd(&custom, 4);
    }

    #[test]
    fn benchmark_fields_vanish_at_origin() {
        for sys in [
            make_reversed_vdp(),
            make_scalar_cubic(),
            make_dense_hurwitz(&HurwitzSpec::new(7, 9)).unwrap(),
        ] {
            let f0 = sys.eval_field(&DVector::zeros(sys.dimension())).unwrap();
            assert!(f0.norm() <= 1e-12);
        }
    }

    #[test]
    fn hurwitz_one_dimensional() {
        for seed in [0, 1, 99] {
            let spec = HurwitzSpec {
                dimension: 1,
                eigenvalue_range: (-2.0, -2.0),
                seed,
            };
            let m = dense_hurwitz_matrix(&spec).unwrap();
            assert_relative_eq!(m[(0, 0)], -2.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn hurwitz_spectrum_density_and_determinism() {
        for (n, seed) in [(5, 1u64), (20, 2), (40, 3)] {
            let spec = HurwitzSpec::new(n, seed);
            let m = dense_hurwitz_matrix(&spec).unwrap();
            let again = dense_hurwitz_matrix(&spec).unwrap();
            assert!(m
                .iter()
                .zip(again.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits()));

            let eig = m.clone().symmetric_eigen().eigenvalues;
            for l in eig.iter() {
                assert!(*l >= -2.0 - 1e-9 && *l <= -0.1 + 1e-9, "eigenvalue {l}");
            }
            let off: Vec<f64> = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| m[(i, j)])
                .collect();
            let nonzero = off.iter().filter(|x| x.abs() > 1e-14).count();
            assert!(nonzero as f64 >= 0.99 * off.len() as f64);
        }
    }

    #[test]
    fn hurwitz_rejects_bad_ranges() {
        for range in [(-1.0, 0.5), (-1.0, -2.0), (f64::NAN, -1.0)] {
            let spec = HurwitzSpec {
                dimension: 3,
                eigenvalue_range: range,
                seed: 0,
            };
            assert!(matches!(
                make_dense_hurwitz(&spec),
                Err(ScoreError::InvalidArgument(_))
            ));
        }
    }
}
