//! Gram-form Lyapunov candidates `V(x) = z(x)ᵀ Q z(x)` over a monomial
//! dictionary, and the Lie derivative `V̇ = ∇V · f` with its gradient.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::OdeSystem;
use crate::error::{Result, ScoreError};
use crate::StateVector;

/// Monomials of total degree 1 (and optionally 2) in `n` variables.
///
/// Entries are ordered `x₁, …, x_n` followed by `x_i x_j` for `i ≤ j` in
/// lexicographic order. Degree-2 Hessians are constant, so they are kept as
/// the index pairs rather than dense tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisDictionary {
    dimension: usize,
    degree: u8,
    pairs: Vec<(usize, usize)>,
}

impl BasisDictionary {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn degree(&self) -> u8 {
        self.degree
    }

    /// Number of basis functions `p`.
    pub fn size(&self) -> usize {
        self.dimension + self.pairs.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// `z(x)`.
    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.dimension;
        let mut z = DVector::zeros(self.size());
        z.rows_mut(0, n).copy_from(x);
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            z[n + k] = x[i] * x[j];
        }
        z
    }

    /// Dense `p × n` Jacobian `J_z(x)`.
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dimension;
        let mut jac = DMatrix::zeros(self.size(), n);
        for i in 0..n {
            jac[(i, i)] = 1.0;
        }
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            jac[(n + k, i)] += x[j];
            jac[(n + k, j)] += x[i];
        }
        jac
    }

    /// Dense `n × n` Hessian of every basis function.
    pub fn hessians(&self) -> Vec<DMatrix<f64>> {
        let n = self.dimension;
        let mut out = vec![DMatrix::zeros(n, n); n];
        for &(i, j) in &self.pairs {
            let mut h = DMatrix::zeros(n, n);
            h[(i, j)] += 1.0;
            h[(j, i)] += 1.0;
            out.push(h);
        }
        out
    }

    /// `J_z(x) v`.
    pub(crate) fn jac_mul(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let n = self.dimension;
        let mut out = DVector::zeros(self.size());
        out.rows_mut(0, n).copy_from(v);
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            out[n + k] = x[i] * v[j] + x[j] * v[i];
        }
        out
    }

    /// `J_z(x)ᵀ w`.
    pub(crate) fn jac_tr_mul(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let n = self.dimension;
        let mut out = w.rows(0, n).into_owned();
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            let wk = w[n + k];
            out[i] += wk * x[j];
            out[j] += wk * x[i];
        }
        out
    }

    /// `Σ_k w_k H_{z_k} v`.
    pub(crate) fn hessian_contract(&self, w: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let n = self.dimension;
        let mut out = DVector::zeros(n);
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            let wk = w[n + k];
            out[i] += wk * v[j];
            out[j] += wk * v[i];
        }
        out
    }
}

/// Monomial dictionary of degree 1 (`z = x`) or 2 (degree 1 and 2 monomials).
pub fn make_poly_dictionary(n: usize, degree: u8) -> Result<BasisDictionary> {
    if n == 0 {
        return Err(ScoreError::InvalidArgument(
            "dictionary dimension must be >= 1".into(),
        ));
    }
    let pairs = match degree {
        1 => Vec::new(),
        2 => (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect(),
        d => return Err(ScoreError::Unsupported(format!("dictionary degree {d}"))),
    };
    Ok(BasisDictionary {
        dimension: n,
        degree,
        pairs,
    })
}

/// Default dictionary degree: quartic `V` below 50 states, quadratic above.
pub fn default_degree(n: usize) -> u8 {
    if n >= 50 {
        1
    } else {
        2
    }
}

/// `V(x) = z(x)ᵀ Q z(x)` with `Q` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct GramCandidate {
    dictionary: BasisDictionary,
    gram: DMatrix<f64>,
    /// `Q = I` exactly; products with `Q` are skipped.
    unit: bool,
}

impl GramCandidate {
    /// Validates shape, symmetry (to 1e-12, then symmetrized exactly) and
    /// positive definiteness.
    pub fn new(dictionary: BasisDictionary, gram: DMatrix<f64>) -> Result<Self> {
        let p = dictionary.size();
        if gram.nrows() != p || gram.ncols() != p {
            return Err(ScoreError::InvalidArgument(format!(
                "Gram matrix is {}x{}, dictionary has {p} functions",
                gram.nrows(),
                gram.ncols()
            )));
        }
        if gram.iter().any(|v| !v.is_finite()) {
            return Err(ScoreError::NonFinite("Gram matrix"));
        }
        let asym = (&gram - gram.transpose()).abs().max();
        if asym > 1e-12 * (1.0 + gram.abs().max()) {
            return Err(ScoreError::InvalidArgument(format!(
                "Gram matrix is not symmetric (max |Q - Qᵀ| = {asym:e})"
            )));
        }
        let gram = (&gram + gram.transpose()) * 0.5;
        if gram.clone().cholesky().is_none() {
            return Err(ScoreError::InvalidArgument(
                "Gram matrix is not positive definite".into(),
            ));
        }
        let unit = gram == DMatrix::identity(p, p);
        Ok(Self {
            dictionary,
            gram,
            unit,
        })
    }

    /// `Q w`.
    pub(crate) fn apply(&self, w: &DVector<f64>) -> DVector<f64> {
        if self.unit {
            w.clone()
        } else {
            &self.gram * w
        }
    }

    /// `V(x) = ‖x‖²`-style candidate `Q = I` over a degree-1 dictionary.
    pub fn identity(n: usize) -> Result<Self> {
        Self::new(make_poly_dictionary(n, 1)?, DMatrix::identity(n, n))
    }

    pub fn dictionary(&self) -> &BasisDictionary {
        &self.dictionary
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn dimension(&self) -> usize {
        self.dictionary.dimension
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.gram.clone().symmetric_eigen().eigenvalues.min()
    }

    pub fn eval_v(&self, x: &StateVector) -> Result<f64> {
        ScoreError::check_dim(self.dimension(), x.len())?;
        Ok(self.value(x))
    }

    pub fn grad_v(&self, x: &StateVector) -> Result<StateVector> {
        ScoreError::check_dim(self.dimension(), x.len())?;
        Ok(self.gradient(x))
    }

    pub(crate) fn value(&self, x: &DVector<f64>) -> f64 {
        if self.dictionary.pairs.is_empty() {
            return if self.unit {
                x.norm_squared()
            } else {
                x.dot(&(&self.gram * x))
            };
        }
        let z = self.dictionary.eval(x);
        z.dot(&self.apply(&z))
    }

    pub(crate) fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let z = self.dictionary.eval(x);
        let qz = self.apply(&z);
        self.dictionary.jac_tr_mul(x, &qz) * 2.0
    }

    pub(crate) fn value_and_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        if self.dictionary.pairs.is_empty() {
            let mut qx = self.apply(x);
            let v = x.dot(&qx);
            qx *= 2.0;
            return (v, qx);
        }
        let z = self.dictionary.eval(x);
        let qz = self.apply(&z);
        (z.dot(&qz), self.dictionary.jac_tr_mul(x, &qz) * 2.0)
    }

    /// Hessian `H_V = 2 J_zᵀ Q J_z + 2 Σ_i (Qz)_i H_{z_i}` (dense, for tests and small N).
    pub fn hessian(&self, x: &StateVector) -> DMatrix<f64> {
        let z = self.dictionary.eval(x);
        let qz = &self.gram * &z;
        let jz = self.dictionary.jacobian(x);
        let mut h = jz.transpose() * &self.gram * &jz * 2.0;
        for (k, hk) in self.dictionary.hessians().iter().enumerate() {
            if qz[k] != 0.0 {
                h += hk * (2.0 * qz[k]);
            }
        }
        h
    }

    /// Plain-text form: a header, the dictionary descriptor, then `Q` row-major.
    /// Floats use the shortest representation that parses back bit-exactly.
    pub fn to_text(&self) -> String {
        let p = self.dictionary.size();
        let mut s = String::new();
        let _ = writeln!(s, "score-gram-candidate 1");
        let _ = writeln!(s, "dimension {}", self.dimension());
        let _ = writeln!(s, "degree {}", self.dictionary.degree);
        let _ = writeln!(s, "size {p}");
        for i in 0..p {
            let row: Vec<String> = (0..p).map(|j| format!("{:?}", self.gram[(i, j)])).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().unwrap_or_default();
        if header != "score-gram-candidate 1" {
            return Err(ScoreError::Parse(format!("unexpected header {header:?}")));
        }
        let mut field = |name: &str| -> Result<usize> {
            let line = lines
                .next()
                .ok_or_else(|| ScoreError::Parse(format!("missing `{name}` line")))?;
            let rest = line
                .strip_prefix(name)
                .ok_or_else(|| ScoreError::Parse(format!("expected `{name}`, found {line:?}")))?;
            rest.trim()
                .parse()
                .map_err(|e| ScoreError::Parse(format!("bad `{name}` value: {e}")))
        };
        let dimension = field("dimension")?;
        let degree = field("degree")?;
        let size = field("size")?;
        let dictionary = make_poly_dictionary(dimension, degree as u8)?;
        if dictionary.size() != size {
            return Err(ScoreError::Parse(format!(
                "size {size} does not match dictionary (dimension {dimension}, degree {degree})"
            )));
        }
        let values: Vec<f64> = lines
            .flat_map(str::split_whitespace)
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| ScoreError::Parse(format!("{t:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != size * size {
            return Err(ScoreError::Parse(format!(
                "expected {} Gram entries, found {}",
                size * size,
                values.len()
            )));
        }
        Self::new(dictionary, DMatrix::from_row_slice(size, size, &values))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())
            .map_err(|e| ScoreError::InvalidArgument(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScoreError::InvalidArgument(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }
}

/// All first-order quantities at one point.
#[derive(Debug, Clone)]
pub struct LieEval {
    pub v: f64,
    pub grad_v: DVector<f64>,
    pub vdot: f64,
    pub grad_vdot: DVector<f64>,
}

/// `V̇ = ∇V · f` for a candidate paired with a system.
#[derive(Debug, Clone, Copy)]
pub struct LieDerivative<'a> {
    candidate: &'a GramCandidate,
    system: &'a OdeSystem,
}

impl<'a> LieDerivative<'a> {
    pub fn new(candidate: &'a GramCandidate, system: &'a OdeSystem) -> Result<Self> {
        ScoreError::check_dim(system.dimension(), candidate.dimension())?;
        Ok(Self { candidate, system })
    }

    pub fn candidate(&self) -> &'a GramCandidate {
        self.candidate
    }

    pub fn system(&self) -> &'a OdeSystem {
        self.system
    }

    pub fn dimension(&self) -> usize {
        self.system.dimension()
    }

    pub fn eval_vdot(&self, x: &StateVector) -> Result<f64> {
        ScoreError::check_dim(self.dimension(), x.len())?;
        Ok(self.vdot(x))
    }

    pub fn grad_vdot(&self, x: &StateVector) -> Result<StateVector> {
        ScoreError::check_dim(self.dimension(), x.len())?;
        Ok(self.evaluate(x).grad_vdot)
    }

    pub(crate) fn vdot(&self, x: &DVector<f64>) -> f64 {
        self.candidate.gradient(x).dot(&self.system.field(x))
    }

    /// `V`, `∇V`, `V̇` and `∇V̇ = H_V f + J_fᵀ ∇V` in one pass.
    pub fn evaluate(&self, x: &DVector<f64>) -> LieEval {
        let dict = &self.candidate.dictionary;
        let c = self.candidate;
        if dict.pairs.is_empty() {
            // z = x, so H_V f = 2 Q f.
            let (v, grad_v) = c.value_and_gradient(x);
            let f = self.system.field(x);
            let vdot = grad_v.dot(&f);
            let mut grad_vdot = c.apply(&f) * 2.0;
            grad_vdot += self.system.jacobian_tr_mul(x, &grad_v);
            return LieEval {
                v,
                grad_v,
                vdot,
                grad_vdot,
            };
        }
        let z = dict.eval(x);
        let qz = c.apply(&z);
        let v = z.dot(&qz);
        let grad_v = dict.jac_tr_mul(x, &qz) * 2.0;
        let f = self.system.field(x);
        let vdot = grad_v.dot(&f);

        // H_V f = 2 J_zᵀ Q (J_z f) + 2 Σ_i (Qz)_i H_{z_i} f
        let jzf = dict.jac_mul(x, &f);
        let mut grad_vdot = dict.jac_tr_mul(x, &c.apply(&jzf)) * 2.0;
        if !dict.pairs.is_empty() {
            grad_vdot += dict.hessian_contract(&qz, &f) * 2.0;
        }
        grad_vdot += self.system.jacobian_tr_mul(x, &grad_v);
        LieEval {
            v,
            grad_v,
            vdot,
            grad_vdot,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{make_dense_hurwitz, make_reversed_vdp, make_scalar_cubic, HurwitzSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> StateVector {
        DVector::from_row_slice(xs)
    }

    fn random_pd(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(p, p) * 0.1
    }

    /// Central differences with step `h = 1e-5·(1 + |x_j|)`.
    fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |j, _| {
            let h = 1e-5 * (1.0 + x[j].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            (f(&xp) - f(&xm)) / (2.0 * h)
        })
    }

    fn assert_close_vec(a: &DVector<f64>, b: &DVector<f64>, rel: f64) {
        let scale = 1.0 + b.norm();
        assert!((a - b).norm() <= rel * scale, "{a} vs {b}");
    }

    #[test]
    fn dictionary_sizes() {
        assert_eq!(make_poly_dictionary(2, 1).unwrap().size(), 2);
        assert_eq!(make_poly_dictionary(2, 2).unwrap().size(), 5);
        assert_eq!(make_poly_dictionary(500, 1).unwrap().size(), 500);
        assert_eq!(make_poly_dictionary(4, 2).unwrap().size(), 4 + 10);
        assert!(matches!(
            make_poly_dictionary(2, 3),
            Err(ScoreError::Unsupported(_))
        ));
        assert!(make_poly_dictionary(0, 1).is_err());
    }

    #[test]
    fn quadratic_dictionary_layout() {
        let d = make_poly_dictionary(2, 2).unwrap();
        assert_eq!(d.eval(&v(&[2.0, 3.0])), v(&[2.0, 3.0, 4.0, 6.0, 9.0]));
        assert_eq!(d.eval(&v(&[0.0, 0.0])).norm(), 0.0);
    }

    #[test]
    fn dictionary_jacobian_matches_fd() {
        let d = make_poly_dictionary(3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            let jac = d.jacobian(&x);
            for k in 0..d.size() {
                let fd = fd_gradient(|y| d.eval(y)[k], &x);
                assert_close_vec(&jac.row(k).transpose(), &fd, 1e-5);
            }
            let w = DVector::from_fn(d.size(), |_, _| rng.random_range(-1.0..1.0));
            let u = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            assert_close_vec(&d.jac_mul(&x, &u), &(&jac * &u), 1e-12);
            assert_close_vec(&d.jac_tr_mul(&x, &w), &(jac.transpose() * &w), 1e-12);
            let dense: DVector<f64> = d
                .hessians()
                .iter()
                .enumerate()
                .map(|(k, h)| h * &u * w[k])
                .fold(DVector::zeros(3), |a, b| a + b);
            assert_close_vec(&d.hessian_contract(&w, &u), &dense, 1e-12);
        }
    }

    #[test]
    fn value_examples() {
        let c = GramCandidate::identity(2).unwrap();
        assert_eq!(c.eval_v(&v(&[3.0, 4.0])).unwrap(), 25.0);
        assert_eq!(c.eval_v(&v(&[0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(c.grad_v(&v(&[1.0, 2.0])).unwrap(), v(&[2.0, 4.0]));
        assert_eq!(c.grad_v(&v(&[0.0, 0.0])).unwrap(), v(&[0.0, 0.0]));
        let d = GramCandidate::new(
            make_poly_dictionary(2, 1).unwrap(),
            DMatrix::from_diagonal(&v(&[2.0, 1.0])),
        )
        .unwrap();
        assert_eq!(d.eval_v(&v(&[1.0, 1.0])).unwrap(), 3.0);
        assert!(matches!(
            d.eval_v(&v(&[1.0])),
            Err(ScoreError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_indefinite_or_asymmetric_gram() {
        let d = make_poly_dictionary(2, 1).unwrap();
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(GramCandidate::new(d.clone(), indefinite).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(GramCandidate::new(d.clone(), asym).is_err());
        assert!(GramCandidate::new(d, DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn quartic_gradient_matches_fd() {
        let d = make_poly_dictionary(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = GramCandidate::new(d, random_pd(5, &mut rng)).unwrap();
        for _ in 0..100 {
            let x = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let fd = fd_gradient(|y| c.value(y), &x);
            assert_close_vec(&c.gradient(&x), &fd, 1e-5);
            let hfd = DMatrix::from_fn(2, 2, |i, j| fd_gradient(|y| c.gradient(y)[i], &x)[j]);
            assert!((c.hessian(&x) - hfd).norm() <= 1e-4 * (1.0 + c.hessian(&x).norm()));
        }
    }

    #[test]
    fn vdot_examples() {
        let minus_id = OdeSystem::linear(-DMatrix::identity(2, 2)).unwrap();
        let c = GramCandidate::identity(2).unwrap();
        let l = LieDerivative::new(&c, &minus_id).unwrap();
        assert_eq!(l.eval_vdot(&v(&[1.0, 1.0])).unwrap(), -4.0);
        assert_eq!(l.eval_vdot(&v(&[0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(l.grad_vdot(&v(&[1.0, 0.0])).unwrap(), v(&[-4.0, 0.0]));

        let cubic = make_scalar_cubic();
        let c1 = GramCandidate::identity(1).unwrap();
        let l1 = LieDerivative::new(&c1, &cubic).unwrap();
        assert_relative_eq!(l1.eval_vdot(&v(&[0.5])).unwrap(), -0.375, epsilon = 1e-15);
    }

    #[test]
    fn linear_symmetric_grad_vdot_is_4mx() {
        let sys = make_dense_hurwitz(&HurwitzSpec::new(5, 8)).unwrap();
        let m = sys.linear_matrix().unwrap().clone();
        let c = GramCandidate::identity(5).unwrap();
        let l = LieDerivative::new(&c, &sys).unwrap();
        let mut e1 = DVector::zeros(5);
        e1[0] = 1.0;
        assert_close_vec(&l.grad_vdot(&e1).unwrap(), &(&m * &e1 * 4.0), 1e-12);
    }

    #[test]
    fn grad_vdot_matches_fd_across_pairings() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let systems = [
            make_reversed_vdp(),
            make_dense_hurwitz(&HurwitzSpec::new(2, 4)).unwrap(),
        ];
        for sys in &systems {
            for degree in [1u8, 2] {
                let d = make_poly_dictionary(2, degree).unwrap();
                let p = d.size();
                let c = GramCandidate::new(d, random_pd(p, &mut rng)).unwrap();
                let l = LieDerivative::new(&c, sys).unwrap();
                for _ in 0..100 {
                    let x = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
                    let e = l.evaluate(&x);
                    assert_close_vec(&e.grad_v, &fd_gradient(|y| c.value(y), &x), 1e-4);
                    assert_close_vec(&e.grad_vdot, &fd_gradient(|y| l.vdot(y), &x), 1e-4);
                    assert_relative_eq!(e.vdot, l.vdot(&x), epsilon = 1e-12);
                }
            }
        }
        let cubic = make_scalar_cubic();
        let c = GramCandidate::identity(1).unwrap();
        let l = LieDerivative::new(&c, &cubic).unwrap();
        for x in [-1.5, -0.3, 0.7, 1.9] {
            let x = v(&[x]);
            assert_close_vec(
                &l.evaluate(&x).grad_vdot,
                &fd_gradient(|y| l.vdot(y), &x),
                1e-4,
            );
        }
    }

    #[test]
    fn linear_vdot_matches_lyapunov_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let p = random_pd(3, &mut rng);
        let sys = OdeSystem::linear(m.clone()).unwrap();
        let c = GramCandidate::new(make_poly_dictionary(3, 1).unwrap(), p.clone()).unwrap();
        let l = LieDerivative::new(&c, &sys).unwrap();
        let lyap = m.transpose() * &p + &p * &m;
        for _ in 0..50 {
            let x = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            let direct = x.dot(&(&lyap * &x));
            assert!((l.vdot(&x) - direct).abs() <= 1e-10);
        }
    }

    #[test]
    fn dimension_mismatch_between_candidate_and_system() {
        let c = GramCandidate::identity(3).unwrap();
        let sys = make_reversed_vdp();
        assert!(matches!(
            LieDerivative::new(&c, &sys),
            Err(ScoreError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn text_format_rejects_garbage() {
        assert!(GramCandidate::from_text("nonsense").is_err());
        let c = GramCandidate::identity(2).unwrap();
        let truncated: String = c.to_text().lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            GramCandidate::from_text(&truncated),
            Err(ScoreError::Parse(_))
        ));
    }

    proptest! {
        #[test]
        fn text_round_trip_is_exact(seed in any::<u64>(), degree in 1u8..=2, n in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = make_poly_dictionary(n, degree).unwrap();
            let q = random_pd(d.size(), &mut rng);
            let c = GramCandidate::new(d, q).unwrap();
            let back = GramCandidate::from_text(&c.to_text()).unwrap();
            prop_assert!(c.gram().iter().zip(back.gram().iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(c.dictionary(), back.dictionary());
        }

        #[test]
        fn value_invariant_under_symmetrization(seed in any::<u64>(), x0 in -2.0f64..2.0, x1 in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = make_poly_dictionary(2, 2).unwrap();
            let q = random_pd(5, &mut rng);
            // A skew part leaves zᵀQz unchanged.
            let skew = DMatrix::from_fn(5, 5, |i, j| if i < j { 0.3 } else if i > j { -0.3 } else { 0.0 });
            let z = d.eval(&v(&[x0, x1]));
            let raw = z.dot(&((&q + &skew) * &z));
            let c = GramCandidate::new(d, q).unwrap();
            prop_assert!((c.value(&v(&[x0, x1])) - raw).abs() <= 1e-12 * (1.0 + raw.abs()));
        }

        #[test]
        fn candidate_positive_away_from_origin(seed in any::<u64>(), x0 in -3.0f64..3.0, x1 in -3.0f64..3.0) {
            prop_assume!(x0.abs() + x1.abs() > 1e-3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = GramCandidate::new(make_poly_dictionary(2, 2).unwrap(), random_pd(5, &mut rng)).unwrap();
            prop_assert!(c.value(&v(&[x0, x1])) > 0.0);
        }
    }
}
