//! Truncated bosonic Fock spaces for one and two modes.
//!
//! Single-mode operators act on `|0⟩ … |n_max⟩`. The two-mode space is the
//! tensor product `L ⊗ R`; the basis state `|n_L, n_R⟩` sits at index
//! `n_L·(n_max+1) + n_R`. Every embedding goes through [`embed`] so the
//! ordering is fixed in one place.
//!
//! Operators are dense. The time-stepping kernels in
//! [`crate::fluctuations`] convert the few operators they need into sparse
//! form once; nothing in this module exponentiates a generator for time
//! evolution, the exponentials here only build reference states.

use std::ops::{Add, Mul, Sub};

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;

/// Norm leak (probability on the top Fock level) above which a reference
/// unitary is reported as truncation-limited.
pub const TRUNCATION_WARN: f64 = 1e-9;

/// Maximum photon number kept per mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct FockCutoff(usize);

impl FockCutoff {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(invalid("n_max", "Fock cutoff must be at least 1"));
        }
        Ok(Self(n_max))
    }

    pub fn n_max(self) -> usize {
        self.0
    }

    /// Dimension of one mode, `n_max + 1`.
    pub fn mode_dim(self) -> usize {
        self.0 + 1
    }

    /// Dimension of the two-mode space, `(n_max + 1)²`.
    pub fn composite_dim(self) -> usize {
        self.mode_dim() * self.mode_dim()
    }

    /// Composite index of `|n_l, n_r⟩`.
    pub fn index(self, n_l: usize, n_r: usize) -> usize {
        n_l * self.mode_dim() + n_r
    }

    /// Inverse of [`FockCutoff::index`].
    pub fn occupations(self, index: usize) -> (usize, usize) {
        (index / self.mode_dim(), index % self.mode_dim())
    }
}

impl TryFrom<usize> for FockCutoff {
    type Error = Error;
    fn try_from(n: usize) -> Result<Self> {
        FockCutoff::new(n)
    }
}

impl From<FockCutoff> for usize {
    fn from(c: FockCutoff) -> usize {
        c.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    L,
    R,
}

impl Mode {
    pub const BOTH: [Mode; 2] = [Mode::L, Mode::R];

    pub fn index(self) -> usize {
        match self {
            Mode::L => 0,
            Mode::R => 1,
        }
    }

    pub fn partner(self) -> Mode {
        match self {
            Mode::L => Mode::R,
            Mode::R => Mode::L,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::L => "L",
            Mode::R => "R",
        }
    }
}

/// Dense square operator.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    matrix: DMatrix<C64>,
}

impl Operator {
    pub fn from_matrix(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        Ok(Self { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    pub fn dagger(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            matrix: &self.matrix * c,
        }
    }

    pub fn commutator(&self, other: &Operator) -> Self {
        self * other - other * self
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |O − O†|`.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                let e = (self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm();
                worst = worst.max(e);
            }
        }
        worst
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Matrix exponential of the operator.
    pub fn exp(&self) -> Self {
        Self {
            matrix: self.matrix.clone().exp(),
        }
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        check_dim(self.dim(), psi.dim())?;
        Ok(StateVector {
            amplitudes: &self.matrix * &psi.amplitudes,
        })
    }
}

impl<'a> Mul<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn mul(self, rhs: &'a Operator) -> Operator {
        Operator {
            matrix: &self.matrix * &rhs.matrix,
        }
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        Operator {
            matrix: self.matrix + rhs.matrix,
        }
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        Operator {
            matrix: self.matrix - rhs.matrix,
        }
    }
}

/// Normalized pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: DVector<C64>,
}

impl StateVector {
    /// Normalizes `amplitudes`; fails on the zero vector.
    pub fn new(amplitudes: DVector<C64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Domain("state vector has zero or non-finite norm".into()));
        }
        Ok(Self {
            amplitudes: amplitudes / C64::from(norm),
        })
    }

    /// Fock basis state `|n⟩` in a space of dimension `dim`.
    pub fn basis(dim: usize, n: usize) -> Result<Self> {
        if n >= dim {
            return Err(invalid("n", format!("level {n} outside dimension {dim}")));
        }
        let mut v = DVector::zeros(dim);
        v[n] = C64::new(1.0, 0.0);
        Ok(Self { amplitudes: v })
    }

    pub fn vacuum(dim: usize) -> Self {
        Self::basis(dim, 0).expect("dimension is positive")
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }
}

/// Dense density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn from_matrix(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        Ok(Self { matrix })
    }

    pub fn pure(psi: &StateVector) -> Self {
        let v = psi.amplitudes();
        Self {
            matrix: v * v.adjoint(),
        }
    }

    /// `|0,0⟩⟨0,0|` on the two-mode space.
    pub fn two_mode_vacuum(cutoff: FockCutoff) -> Self {
        Self::pure(&StateVector::vacuum(cutoff.composite_dim()))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_min_eigenvalue(&self.matrix)
    }
}

/// Smallest eigenvalue of `(m + m†)/2`.
pub fn hermitian_min_eigenvalue(m: &DMatrix<C64>) -> f64 {
    let h = (m + m.adjoint()) * C64::from(0.5);
    h.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Anything an expectation value can be taken in.
pub trait QuantumState {
    fn dim(&self) -> usize;
    fn expect(&self, op: &Operator) -> Result<C64>;
}

impl QuantumState for StateVector {
    fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    fn expect(&self, op: &Operator) -> Result<C64> {
        check_dim(op.dim(), self.dim())?;
        Ok(self.amplitudes.dotc(&(op.matrix() * &self.amplitudes)))
    }
}

impl QuantumState for DensityMatrix {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `Tr[O ρ]`; requires unit trace within 1e-9.
    fn expect(&self, op: &Operator) -> Result<C64> {
        check_dim(op.dim(), self.dim())?;
        let tr = self.trace();
        if (tr - C64::from(1.0)).norm() > 1e-9 {
            return Err(Error::Domain(format!("density matrix trace {tr} is not 1")));
        }
        Ok(trace_product(op.matrix(), &self.matrix))
    }
}

/// `⟨O⟩` in a pure or mixed state.
pub fn expectation<S: QuantumState + ?Sized>(state: &S, op: &Operator) -> Result<C64> {
    state.expect(op)
}

/// `Tr[A B]` without forming the product.
pub fn trace_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let d = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Single-mode annihilation operator, `⟨n−1|a|n⟩ = √n`.
pub fn annihilation(cutoff: FockCutoff) -> Operator {
    let d = cutoff.mode_dim();
    let mut m = DMatrix::zeros(d, d);
    for n in 1..d {
        m[(n - 1, n)] = C64::from((n as f64).sqrt());
    }
    Operator { matrix: m }
}

pub fn creation(cutoff: FockCutoff) -> Operator {
    annihilation(cutoff).dagger()
}

pub fn number(cutoff: FockCutoff) -> Operator {
    let d = cutoff.mode_dim();
    Operator {
        matrix: DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                C64::from(i as f64)
            } else {
                C64::new(0.0, 0.0)
            }
        }),
    }
}

/// Lifts a single-mode operator onto the two-mode space as `op ⊗ I` (mode L)
/// or `I ⊗ op` (mode R).
pub fn embed(op: &Operator, which: Mode, cutoff: FockCutoff) -> Result<Operator> {
    check_dim(cutoff.mode_dim(), op.dim())?;
    let id = DMatrix::<C64>::identity(cutoff.mode_dim(), cutoff.mode_dim());
    let matrix = match which {
        Mode::L => op.matrix.kronecker(&id),
        Mode::R => id.kronecker(&op.matrix),
    };
    Ok(Operator { matrix })
}

/// Probability that `u|0⟩` places on the top Fock level.
pub fn vacuum_leak(u: &Operator) -> f64 {
    let top = u.dim() - 1;
    u.get(top, 0).norm_sqr()
}

/// Displacement `D(α) = exp(α a† − α* a)` on the truncated space.
pub fn displacement(alpha: C64, cutoff: FockCutoff) -> Operator {
    if alpha.norm_sqr() > cutoff.n_max() as f64 / 4.0 {
        warn!(
            "displacement |alpha|^2 = {} is large for n_max = {}",
            alpha.norm_sqr(),
            cutoff.n_max()
        );
    }
    let a = annihilation(cutoff);
    let gen = a.dagger().scale(alpha) - a.scale(alpha.conj());
    let u = gen.exp();
    let leak = vacuum_leak(&u);
    if leak > TRUNCATION_WARN {
        warn!("displacement truncation leak {leak:e} at n_max = {}", cutoff.n_max());
    }
    u
}

/// Squeeze `S(ξ) = exp[½(ξ* a² − ξ a†²)]`, so that `S(r)|0⟩` has
/// `⟨a†a⟩ = sinh² r` and `⟨a²⟩ = −e^{iθ} sinh r cosh r`.
pub fn squeeze(xi: C64, cutoff: FockCutoff) -> Operator {
    if xi.norm() > 2.0 {
        warn!("squeeze |xi| = {} exceeds the supported range", xi.norm());
    }
    let a = annihilation(cutoff);
    let a2 = &a * &a;
    let gen = (a2.scale(xi.conj()) - a2.dagger().scale(xi)).scale(C64::from(0.5));
    let u = gen.exp();
    let leak = vacuum_leak(&u);
    if leak > TRUNCATION_WARN {
        warn!("squeeze truncation leak {leak:e} at n_max = {}", cutoff.n_max());
    }
    u
}
