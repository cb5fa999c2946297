//! Dense operator algebra on the qubit ⊗ truncated-Fock space.
//!
//! Conventions used throughout the crate:
//! - composite ordering is qubit ⊗ magnon, so the basis index of `|q, n⟩` is
//!   `q * N + n`;
//! - the qubit basis is ordered (g, e), the Fock basis (0, …, N−1);
//! - matrices are stored column-major (nalgebra's layout), which makes the
//!   column-stacking `vec(ρ)` a plain view of the storage.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use thiserror::Error;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-9;
pub const POSITIVITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HilbertError {
    #[error("Fock truncation must retain at least 3 levels, got {0}")]
    FockDimTooSmall(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("state is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("state trace is {0:e}, expected 1")]
    TraceNotUnit(f64),
    #[error("state has negative eigenvalue {0:e}")]
    NotPositive(f64),
    #[error("dimension {0} is not a qubit ⊗ magnon dimension")]
    NotComposite(usize),
}

/// One qubit tensored with a Fock space truncated to `fock_dim` levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HilbertSpace {
    fock_dim: usize,
}

impl HilbertSpace {
    pub fn new(fock_dim: usize) -> Result<Self, HilbertError> {
        if fock_dim < 3 {
            return Err(HilbertError::FockDimTooSmall(fock_dim));
        }
        Ok(Self { fock_dim })
    }

    pub fn fock_dim(&self) -> usize {
        self.fock_dim
    }

    pub fn total_dim(&self) -> usize {
        2 * self.fock_dim
    }

    pub fn index(&self, qubit: Qubit, n: usize) -> usize {
        debug_assert!(n < self.fock_dim);
        qubit.index() * self.fock_dim + n
    }

    /// `m` embedded as `I₂ ⊗ m`.
    pub fn magnon_lowering(&self) -> Operator {
        self.embed_magnon(&fock_annihilation(*self))
    }

    /// `σ₋` embedded as `σ₋ ⊗ I_N`.
    pub fn qubit_lowering(&self) -> Operator {
        self.embed_qubit(&qubit_lowering())
    }

    pub fn embed_magnon(&self, op: &Operator) -> Operator {
        tensor(&Operator::identity(2), op)
    }

    pub fn embed_qubit(&self, op: &Operator) -> Operator {
        tensor(op, &Operator::identity(self.fock_dim))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Qubit {
    Ground,
    Excited,
}

impl Qubit {
    pub fn index(self) -> usize {
        match self {
            Qubit::Ground => 0,
            Qubit::Excited => 1,
        }
    }
}

/// Dense complex square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    mat: DMatrix<C64>,
}

impl Operator {
    pub fn from_matrix(mat: DMatrix<C64>) -> Result<Self, HilbertError> {
        if mat.nrows() != mat.ncols() {
            return Err(HilbertError::NotSquare { rows: mat.nrows(), cols: mat.ncols() });
        }
        Ok(Self { mat })
    }

    pub(crate) fn from_square(mat: DMatrix<C64>) -> Self {
        debug_assert_eq!(mat.nrows(), mat.ncols());
        Self { mat }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { mat: DMatrix::zeros(dim, dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { mat: DMatrix::identity(dim, dim) }
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self { mat: DMatrix::from_fn(dim, dim, f) }
    }

    pub fn diagonal(entries: &[C64]) -> Self {
        let dim = entries.len();
        Self::from_fn(dim, |i, j| if i == j { entries[i] } else { C64::new(0.0, 0.0) })
    }

    /// Outer product `|a⟩⟨b|`.
    pub fn outer(a: &DVector<C64>, b: &DVector<C64>) -> Self {
        Self { mat: a * b.adjoint() }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.mat[(row, col)]
    }

    pub fn dagger(&self) -> Self {
        Self { mat: self.mat.adjoint() }
    }

    pub fn transpose(&self) -> Self {
        Self { mat: self.mat.transpose() }
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        self * other - other * self
    }

    pub fn scale(&self, factor: C64) -> Operator {
        Self { mat: &self.mat * factor }
    }

    /// Largest `|A − A†|` element.
    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for j in 0..n {
            for i in 0..=j {
                worst = worst.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.mat
            .iter()
            .zip(other.mat.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `(A + A†) / 2`.
    pub fn hermitian_part(&self) -> Operator {
        Self { mat: (&self.mat + self.mat.adjoint()).scale(0.5) }
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let eig = SymmetricEigen::new(self.hermitian_part().mat);
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.total_cmp(b));
        vals
    }

    /// Apply to a state vector.
    pub fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        &self.mat * v
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator { mat: &self.mat + &rhs.mat }
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        Operator { mat: self.mat + rhs.mat }
    }
}

impl AddAssign<&Operator> for Operator {
    fn add_assign(&mut self, rhs: &Operator) {
        self.mat += &rhs.mat;
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator { mat: &self.mat - &rhs.mat }
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        Operator { mat: self.mat - rhs.mat }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator { mat: &self.mat * &rhs.mat }
    }
}

impl Mul for Operator {
    type Output = Operator;
    fn mul(self, rhs: Operator) -> Operator {
        Operator { mat: self.mat * rhs.mat }
    }
}

impl Mul<&Operator> for f64 {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator { mat: rhs.mat.map(|z| z * self) }
    }
}

impl Mul<Operator> for f64 {
    type Output = Operator;
    fn mul(self, rhs: Operator) -> Operator {
        self * &rhs
    }
}

impl Mul<&Operator> for C64 {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator { mat: &rhs.mat * self }
    }
}

impl Neg for Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator { mat: -self.mat }
    }
}

/// Bosonic annihilation operator on `|0⟩ … |N−1⟩`: `⟨n−1|m|n⟩ = √n`.
pub fn fock_annihilation(space: HilbertSpace) -> Operator {
    annihilation(space.fock_dim())
}

pub(crate) fn annihilation(n: usize) -> Operator {
    Operator::from_fn(n, |i, j| {
        if j == i + 1 {
            C64::new((j as f64).sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// `σ₋ = |g⟩⟨e|` in the (g, e) ordering.
pub fn qubit_lowering() -> Operator {
    let mut op = Operator::zeros(2);
    op.mat[(0, 1)] = C64::new(1.0, 0.0);
    op
}

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    Operator { mat: a.mat.kronecker(&b.mat) }
}

/// `Tr(ρ O)`.
pub fn expectation(rho: &DensityMatrix, op: &Operator) -> Result<C64, HilbertError> {
    if rho.dim() != op.dim() {
        return Err(HilbertError::DimensionMismatch { expected: rho.dim(), found: op.dim() });
    }
    Ok(trace_of_product(rho.operator(), op))
}

/// `Tr(A B)` without forming the product.
pub(crate) fn trace_of_product(a: &Operator, b: &Operator) -> C64 {
    let n = a.dim();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a.mat[(i, k)] * b.mat[(k, i)];
        }
    }
    acc
}

/// Which space a density matrix lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateSpace {
    Composite(HilbertSpace),
    Magnon { fock_dim: usize },
}

impl StateSpace {
    pub fn dim(&self) -> usize {
        match self {
            StateSpace::Composite(s) => s.total_dim(),
            StateSpace::Magnon { fock_dim } => *fock_dim,
        }
    }

    pub fn fock_dim(&self) -> usize {
        match self {
            StateSpace::Composite(s) => s.fock_dim(),
            StateSpace::Magnon { fock_dim } => *fock_dim,
        }
    }
}

/// Validated density matrix: Hermitian, unit trace, numerically positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    op: Operator,
    space: StateSpace,
}

impl DensityMatrix {
    pub fn new(op: Operator, space: StateSpace) -> Result<Self, HilbertError> {
        Self::with_tolerances(op, space, TRACE_TOL, POSITIVITY_TOL)
    }

    /// Validation with caller-chosen trace and positivity slack. The
    /// Hermiticity bound is always [`HERMITIAN_TOL`].
    pub fn with_tolerances(
        op: Operator,
        space: StateSpace,
        trace_tol: f64,
        positivity_tol: f64,
    ) -> Result<Self, HilbertError> {
        if op.dim() != space.dim() {
            return Err(HilbertError::DimensionMismatch { expected: space.dim(), found: op.dim() });
        }
        let dev = op.hermitian_deviation();
        if dev > HERMITIAN_TOL {
            return Err(HilbertError::NotHermitian(dev));
        }
        let tr = op.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > trace_tol {
            return Err(HilbertError::TraceNotUnit(tr.re));
        }
        let min = op.hermitian_eigenvalues()[0];
        if min < -positivity_tol {
            return Err(HilbertError::NotPositive(min));
        }
        Ok(Self { op, space })
    }

    /// Hermitize and trace-normalize a raw solver output, then validate.
    pub fn normalized(op: &Operator, space: StateSpace) -> Result<Self, HilbertError> {
        let herm = op.hermitian_part();
        let tr = herm.trace().re;
        Self::new((1.0 / tr) * &herm, space)
    }

    pub(crate) fn from_parts_unchecked(op: Operator, space: StateSpace) -> Self {
        Self { op, space }
    }

    pub fn pure(state: &DVector<C64>, space: StateSpace) -> Result<Self, HilbertError> {
        if state.len() != space.dim() {
            return Err(HilbertError::DimensionMismatch { expected: space.dim(), found: state.len() });
        }
        let norm = state.norm();
        let psi = state / C64::new(norm, 0.0);
        Self::new(Operator::outer(&psi, &psi), space)
    }

    /// `|q, n⟩⟨q, n|` on the composite space.
    pub fn basis(space: HilbertSpace, qubit: Qubit, n: usize) -> Self {
        let mut op = Operator::zeros(space.total_dim());
        let k = space.index(qubit, n);
        op.mat[(k, k)] = C64::new(1.0, 0.0);
        Self { op, space: StateSpace::Composite(space) }
    }

    /// `|n⟩⟨n|` on the magnon space alone.
    pub fn fock(fock_dim: usize, n: usize) -> Self {
        let mut op = Operator::zeros(fock_dim);
        op.mat[(n, n)] = C64::new(1.0, 0.0);
        Self { op, space: StateSpace::Magnon { fock_dim } }
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn trace(&self) -> f64 {
        self.op.trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.op.hermitian_eigenvalues()[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn pseudo_random(dim: usize, seed: u64) -> Operator {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        Operator::from_fn(dim, |_, _| C64::new(next(), next()))
    }

    #[test]
    fn rejects_small_truncation() {
        assert_eq!(HilbertSpace::new(2), Err(HilbertError::FockDimTooSmall(2)));
        let s = HilbertSpace::new(3).unwrap();
        assert_eq!(s.total_dim(), 6);
    }

    #[test]
    fn annihilation_matrix_elements() {
        let s3 = HilbertSpace::new(3).unwrap();
        let m = fock_annihilation(s3);
        let one = DVector::from_vec(vec![c(0.0), c(1.0), c(0.0)]);
        let out = m.apply(&one);
        assert_eq!(out, DVector::from_vec(vec![c(1.0), c(0.0), c(0.0)]));

        let number = &m.dagger() * &m;
        assert!(number.max_abs_diff(&Operator::diagonal(&[c(0.0), c(1.0), c(2.0)])) < 1e-15);

        let s5 = HilbertSpace::new(5).unwrap();
        assert!((fock_annihilation(s5).get(3, 4) - c(2.0)).norm() < 1e-15);
    }

    #[test]
    fn truncated_commutator_has_boundary_defect() {
        let n = 6;
        let m = fock_annihilation(HilbertSpace::new(n).unwrap());
        let comm = m.commutator(&m.dagger());
        for i in 0..n {
            for j in 0..n {
                let expected = match (i == j, i) {
                    (true, k) if k < n - 1 => 1.0,
                    (true, _) => 1.0 - n as f64,
                    _ => 0.0,
                };
                assert!((comm.get(i, j) - c(expected)).norm() < 1e-13, "({i},{j})");
            }
        }
    }

    #[test]
    fn qubit_algebra() {
        let sm = qubit_lowering();
        let sp = sm.dagger();
        let e = DVector::from_vec(vec![c(0.0), c(1.0)]);
        assert_eq!(sm.apply(&e), DVector::from_vec(vec![c(1.0), c(0.0)]));
        assert_eq!(&sm * &sm, Operator::zeros(2));
        assert_eq!(&sp * &sm, Operator::diagonal(&[c(0.0), c(1.0)]));
        assert_eq!(&(&sp * &sm) + &(&sm * &sp), Operator::identity(2));
    }

    #[test]
    fn tensor_ordering_and_mixed_product() {
        assert_eq!(tensor(&Operator::identity(2), &Operator::identity(4)), Operator::identity(8));

        let sm = qubit_lowering();
        let proj = &sm.dagger() * &sm;
        let embedded = tensor(&proj, &Operator::identity(4));
        let diag: Vec<f64> = (0..8).map(|k| embedded.get(k, k).re).collect();
        assert_eq!(diag, vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        assert!(embedded.max_abs_diff(&Operator::diagonal(&diag.iter().map(|&x| c(x)).collect::<Vec<_>>())) == 0.0);

        let a = pseudo_random(2, 1);
        let b = pseudo_random(3, 2);
        let cc = pseudo_random(2, 3);
        let d = pseudo_random(3, 4);
        let lhs = &tensor(&a, &b) * &tensor(&cc, &d);
        let rhs = tensor(&(&a * &cc), &(&b * &d));
        assert!(lhs.max_abs_diff(&rhs) < 1e-13);
    }

    #[test]
    fn dagger_is_involutive_antihomomorphism() {
        for seed in 0..5 {
            let a = pseudo_random(5, seed);
            let b = pseudo_random(5, seed + 100);
            assert_eq!(a.dagger().dagger(), a);
            let lhs = (&a * &b).dagger();
            let rhs = &b.dagger() * &a.dagger();
            assert!(lhs.max_abs_diff(&rhs) < 1e-13);
        }
    }

    #[test]
    fn expectation_of_fock_and_vacuum() {
        let space = HilbertSpace::new(4).unwrap();
        let number = {
            let m = space.magnon_lowering();
            &m.dagger() * &m
        };
        let rho = DensityMatrix::basis(space, Qubit::Ground, 2);
        assert!((expectation(&rho, &number).unwrap() - c(2.0)).norm() < 1e-15);

        let vac = DensityMatrix::basis(space, Qubit::Ground, 0);
        let m = space.magnon_lowering();
        let sm = space.qubit_lowering();
        for op in [&number, &(&m.dagger() * &(&m.dagger() * &(&m * &m))), &(&sm.dagger() * &sm)] {
            assert_eq!(expectation(&vac, op).unwrap(), c(0.0));
        }
        assert_eq!(expectation(&vac, &Operator::identity(8)).unwrap(), c(1.0));
        assert!(matches!(
            expectation(&vac, &Operator::identity(3)),
            Err(HilbertError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn coherent_state_number_expectation() {
        // explicit Fock expansion of |α⟩ with |α| = 0.3
        let n = 20;
        let alpha = C64::from_polar(0.3, 0.7);
        let mut amp = Vec::with_capacity(n);
        let mut term = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
        for k in 0..n {
            if k > 0 {
                term = term * alpha / (k as f64).sqrt();
            }
            amp.push(term);
        }
        let rho = DensityMatrix::pure(&DVector::from_vec(amp), StateSpace::Magnon { fock_dim: n }).unwrap();
        let m = annihilation(n);
        let number = &m.dagger() * &m;
        let val = expectation(&rho, &number).unwrap();
        assert!((val.re - 0.09).abs() < 1e-6);
        assert!(val.im.abs() < 1e-10);
    }

    #[test]
    fn density_matrix_validation() {
        let space = StateSpace::Magnon { fock_dim: 3 };
        let not_unit = Operator::diagonal(&[c(0.5), c(0.4), c(0.0)]);
        assert!(matches!(DensityMatrix::new(not_unit, space), Err(HilbertError::TraceNotUnit(_))));
        let negative = Operator::diagonal(&[c(1.2), c(-0.2), c(0.0)]);
        assert!(matches!(DensityMatrix::new(negative, space), Err(HilbertError::NotPositive(_))));
        let mut skew = Operator::diagonal(&[c(1.0), c(0.0), c(0.0)]);
        skew.mat[(0, 1)] = C64::new(0.0, 0.1);
        assert!(matches!(DensityMatrix::new(skew, space), Err(HilbertError::NotHermitian(_))));
    }
}
