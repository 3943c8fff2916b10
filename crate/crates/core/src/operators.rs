//! Dense complex operators on small Hilbert spaces.
//!
//! [`Operator`] wraps a square `nalgebra` matrix of `Complex<f64>`. The
//! eigendecomposition always returns eigenvalues in ascending order; nothing
//! downstream may rely on the phase (or, inside degenerate eigenspaces, the
//! basis) of the returned eigenvectors.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen, SVD};
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Column vectors (states) and rectangular frames share nalgebra's types.
pub type StateVector = DVector<C64>;
pub type Frame = DMatrix<C64>;

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_ITER: usize = 10_000;

pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Operator(DMatrix<C64>);

impl Operator {
    pub fn zeros(dim: usize) -> Self {
        Operator(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Operator(DMatrix::identity(dim, dim))
    }

    /// Real diagonal operator.
    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Operator(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(values[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Operator(DMatrix::from_fn(dim, dim, f))
    }

    /// Panics if `m` is not square.
    pub fn from_matrix(m: DMatrix<C64>) -> Self {
        assert!(m.is_square(), "operator matrix must be square, got {:?}", m.shape());
        Operator(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn adjoint(&self) -> Operator {
        Operator(self.0.adjoint())
    }

    pub fn scale(&self, s: f64) -> Operator {
        Operator(self.0.scale(s))
    }

    pub fn scale_c(&self, s: C64) -> Operator {
        Operator(&self.0 * s)
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn apply(&self, v: &StateVector) -> StateVector {
        &self.0 * v
    }

    /// Largest absolute entry.
    pub fn max_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        Operator(&self.0 * &other.0 - &other.0 * &self.0)
    }

    /// `max |A_ij - conj(A_ji)|`.
    pub fn hermiticity_deviation(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..=i {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_deviation() <= HERMITIAN_TOL * self.max_norm().max(1.0)
    }

    /// `maxnorm(U^dagger U - I)`.
    pub fn unitarity_deviation(&self) -> f64 {
        let n = self.dim();
        let g = self.0.adjoint() * &self.0 - DMatrix::<C64>::identity(n, n);
        g.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |A_ij - B_ij|`; panics on dimension mismatch.
    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Expectation value `<v|A|v>` (not normalised by `<v|v>`).
    pub fn expectation(&self, v: &StateVector) -> C64 {
        v.dotc(&(&self.0 * v))
    }

    /// `B^dagger A B` for a frame `B` of column vectors.
    pub fn project(&self, frame: &Frame) -> DMatrix<C64> {
        frame.adjoint() * &self.0 * frame
    }

    /// Conjugation `U A U^dagger`.
    pub fn conjugate_by(&self, u: &Operator) -> Operator {
        Operator(&u.0 * &self.0 * u.0.adjoint())
    }
}

impl<'a> Mul<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn mul(self, rhs: &'a Operator) -> Operator {
        Operator(&self.0 * &rhs.0)
    }
}

impl<'a> Add<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn add(self, rhs: &'a Operator) -> Operator {
        Operator(&self.0 + &rhs.0)
    }
}

impl<'a> Sub<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn sub(self, rhs: &'a Operator) -> Operator {
        Operator(&self.0 - &rhs.0)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator(-&self.0)
    }
}

/// Kronecker product, `(a ⊗ b)(x ⊗ y) = (a x) ⊗ (b y)`.
pub fn kron(a: &Operator, b: &Operator) -> Operator {
    Operator(a.0.kronecker(&b.0))
}

/// Kronecker product of state vectors, consistent with [`kron`].
pub fn kron_vec(x: &StateVector, y: &StateVector) -> StateVector {
    x.kronecker(y)
}

#[derive(Clone, Debug)]
pub struct EigenSystem {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector belonging to `values[k]`.
    pub vectors: DMatrix<C64>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> StateVector {
        self.vectors.column(k).into_owned()
    }

    /// Columns `range` as a frame.
    pub fn frame(&self, range: std::ops::Range<usize>) -> Frame {
        self.vectors.columns(range.start, range.len()).into_owned()
    }
}

/// Hermitian eigendecomposition with ascending eigenvalues.
pub fn eig_hermitian(h: &Operator) -> Result<EigenSystem> {
    let scale = h.max_norm().max(1.0);
    let deviation = h.hermiticity_deviation();
    if !(deviation <= HERMITIAN_TOL * scale) {
        return Err(Error::NotHermitian { deviation });
    }
    // Symmetrise so round-off in the input cannot leak into the solver.
    let sym = (&h.0 + h.0.adjoint()).scale(0.5);
    let eig = SymmetricEigen::try_new(sym, EIG_EPS, EIG_MAX_ITER).ok_or(Error::ConvergenceFailure)?;

    let n = h.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(EigenSystem { values, vectors })
}

/// Exact propagator `exp(-i h dt)` for a Hermitian `h` (hbar = 1).
pub fn step_propagator(h: &Operator, dt: f64) -> Result<Operator> {
    let eig = eig_hermitian(h)?;
    Ok(spectral_exp(&eig, dt))
}

/// `exp(-i H dt)` from a precomputed eigendecomposition of `H`.
pub fn spectral_exp(eig: &EigenSystem, dt: f64) -> Operator {
    let n = eig.dim();
    let v = &eig.vectors;
    let mut scaled = v.clone();
    for (k, &e) in eig.values.iter().enumerate() {
        let phase = C64::from_polar(1.0, -e * dt);
        for i in 0..n {
            scaled[(i, k)] *= phase;
        }
    }
    Operator(scaled * v.adjoint())
}

/// Unitary polar factor `W` of `M = W P` together with the singular values of
/// `M` (descending).
pub fn polar_unitary(m: &DMatrix<C64>) -> Result<(DMatrix<C64>, Vec<f64>)> {
    if m.nrows() == 1 && m.ncols() == 1 {
        let z = m[(0, 0)];
        let r = z.norm();
        let w = if r > 0.0 { z / r } else { C64::new(1.0, 0.0) };
        return Ok((DMatrix::from_element(1, 1, w), vec![r]));
    }
    let svd = SVD::try_new(m.clone(), true, true, EIG_EPS, EIG_MAX_ITER).ok_or(Error::ConvergenceFailure)?;
    let u = svd.u.as_ref().ok_or(Error::ConvergenceFailure)?;
    let v_t = svd.v_t.as_ref().ok_or(Error::ConvergenceFailure)?;
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok((u * v_t, sv))
}

/// Eigenvalues of a (nearly) unitary matrix via complex Schur form.
pub fn unitary_eigenvalues(u: &DMatrix<C64>) -> Result<Vec<C64>> {
    if u.nrows() == 1 {
        return Ok(vec![u[(0, 0)]]);
    }
    let schur = Schur::try_new(u.clone(), EIG_EPS, EIG_MAX_ITER).ok_or(Error::ConvergenceFailure)?;
    let (_, t) = schur.unpack();
    Ok(t.diagonal().iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_op(rng: &mut ChaCha8Rng, n: usize) -> Operator {
        Operator::from_fn(n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> Operator {
        let a = random_op(rng, n);
        (&a + &a.adjoint()).scale(0.5)
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> StateVector {
        DVector::from_fn(n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn kron_identity_and_diagonal() {
        assert_eq!(kron(&Operator::identity(2), &Operator::identity(2)), Operator::identity(4));
        let k = kron(&Operator::diag(&[1.0, -1.0]), &Operator::identity(2));
        assert_eq!(k, Operator::diag(&[1.0, 1.0, -1.0, -1.0]));
    }

    #[test]
    fn kron_acts_factorwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let a = random_op(&mut rng, 2);
            let b = random_op(&mut rng, 2);
            let x = random_vec(&mut rng, 2);
            let y = random_vec(&mut rng, 2);
            // Direct evaluation of (a x) ⊗ (b y) entrywise.
            let ax = a.apply(&x);
            let by = b.apply(&y);
            let rhs = DVector::from_fn(4, |i, _| ax[i / 2] * by[i % 2]);
            let lhs = kron(&a, &b).apply(&DVector::from_fn(4, |i, _| x[i / 2] * y[i % 2]));
            assert!((lhs - rhs).norm() <= 1e-12);
        }
    }

    #[test]
    fn kron_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_op(&mut rng, 2);
        let b = random_op(&mut rng, 2);
        let cc = random_op(&mut rng, 3);
        let left = kron(&kron(&a, &b), &cc);
        let right = kron(&a, &kron(&b, &cc));
        assert!(left.max_abs_diff(&right) <= 1e-12);
    }

    #[test]
    fn eig_of_diagonal_sorts_ascending() {
        let eig = eig_hermitian(&Operator::diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(eig.values, vec![1.0, 2.0, 3.0]);
        // Each eigenvector is a unit vector along the matching axis.
        for (k, axis) in [1usize, 2, 0].iter().enumerate() {
            assert!((eig.vectors[(*axis, k)].norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn eig_of_spin_half_sx() {
        let sx = Operator::from_fn(2, |i, j| if i != j { c(0.5, 0.0) } else { c(0.0, 0.0) });
        let eig = eig_hermitian(&sx).unwrap();
        assert!((eig.values[0] + 0.5).abs() < 1e-14);
        assert!((eig.values[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn eig_reconstructs_random_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_hermitian(&mut rng, 6);
        let eig = eig_hermitian(&h).unwrap();
        let mut rebuilt = DMatrix::<C64>::zeros(6, 6);
        for k in 0..6 {
            let v = eig.vector(k);
            rebuilt += (&v * v.adjoint()).scale(eig.values[k]);
        }
        assert!(Operator(rebuilt).max_abs_diff(&h) <= 1e-10);

        // Residuals, orthonormality, trace.
        for k in 0..6 {
            let v = eig.vector(k);
            assert!((h.apply(&v) - v.scale(eig.values[k])).norm() <= 1e-10);
        }
        let gram = eig.vectors.adjoint() * &eig.vectors;
        assert!(Operator(gram).max_abs_diff(&Operator::identity(6)) <= 1e-10);
        let sum: f64 = eig.values.iter().sum();
        assert!((sum - h.trace().re).abs() <= 1e-10 * 6.0);
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let a = Operator::from_fn(2, |i, j| if i < j { c(1.0, 0.0) } else { c(0.0, 0.0) });
        assert!(matches!(eig_hermitian(&a), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn propagator_special_cases() {
        let h = Operator::diag(&[0.5, -0.5]);
        let u0 = step_propagator(&h, 0.0).unwrap();
        assert!(u0.max_abs_diff(&Operator::identity(2)) < 1e-15);
        let u = step_propagator(&h, 2.0 * std::f64::consts::PI).unwrap();
        assert!(u.max_abs_diff(&Operator::identity(2).scale(-1.0)) < 1e-14);
    }

    /// exp(-i h dt) by scaling and squaring of a 20-term Taylor series.
    fn power_series_exp(h: &Operator, dt: f64) -> Operator {
        let squarings = 6;
        let a = h.matrix() * c(0.0, -dt / f64::from(1 << squarings));
        let n = h.dim();
        let mut term = DMatrix::<C64>::identity(n, n);
        let mut sum = term.clone();
        for k in 1..20 {
            term = &term * &a / c(k as f64, 0.0);
            sum += &term;
        }
        for _ in 0..squarings {
            sum = &sum * &sum;
        }
        Operator(sum)
    }

    #[test]
    fn propagator_matches_power_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_hermitian(&mut rng, 5);
        let u = step_propagator(&h, 0.37).unwrap();
        assert!(u.max_abs_diff(&power_series_exp(&h, 0.37)) <= 1e-9);
        assert!(u.unitarity_deviation() <= 1e-10);
    }

    #[test]
    fn propagator_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_hermitian(&mut rng, 4);
        let u1 = step_propagator(&h, 0.4).unwrap();
        let u2 = step_propagator(&h, 1.3).unwrap();
        let u12 = step_propagator(&h, 1.7).unwrap();
        assert!((&u1 * &u2).max_abs_diff(&u12) <= 1e-9);
    }

    #[test]
    fn polar_factor_of_hermitian_positive_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_op(&mut rng, 3);
        let p = a.adjoint().matrix() * a.matrix() + DMatrix::<C64>::identity(3, 3);
        let (w, sv) = polar_unitary(&p).unwrap();
        assert!(Operator(w).max_abs_diff(&Operator::identity(3)) < 1e-12);
        assert!(sv.iter().all(|&s| s >= 1.0 - 1e-12));
    }

    #[test]
    fn unitary_eigenvalues_on_unit_circle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random_hermitian(&mut rng, 4);
        let u = step_propagator(&h, 0.8).unwrap();
        let eig = eig_hermitian(&h).unwrap();
        let mut got: Vec<f64> = unitary_eigenvalues(u.matrix()).unwrap().iter().map(|z| z.arg()).collect();
        let mut want: Vec<f64> = eig.values.iter().map(|e| C64::from_polar(1.0, -e * 0.8).arg()).collect();
        got.sort_by(f64::total_cmp);
        want.sort_by(f64::total_cmp);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-10);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn eig_trace_and_propagator_unitarity(seed in 0u64..10_000, n in 2usize..8, dt in -3.0f64..3.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let h = random_hermitian(&mut rng, n);
                let eig = eig_hermitian(&h).unwrap();
                let sum: f64 = eig.values.iter().sum();
                prop_assert!((sum - h.trace().re).abs() <= 1e-10 * n as f64);
                let u = step_propagator(&h, dt).unwrap();
                prop_assert!(u.unitarity_deviation() <= 1e-10);
            }
        }
    }
}
