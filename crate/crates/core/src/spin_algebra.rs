//! Collective spin operators on the symmetric (Dicke) subspace of `N`
//! two-level atoms.
//!
//! The basis is ordered by descending magnetic quantum number: row 0 is
//! `m = +S`, the last row is `m = -S`. All operators are dense complex
//! matrices of dimension `N + 1`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// Descriptor of the `(N + 1)`-dimensional Dicke subspace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpinBasis {
    n_atoms: usize,
}

impl SpinBasis {
    pub fn new(n_atoms: usize) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::InvalidBasis("need at least one atom".into()));
        }
        Ok(Self { n_atoms })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    /// `S = N/2`.
    pub fn total_spin(&self) -> f64 {
        self.n_atoms as f64 / 2.0
    }

    pub fn dim(&self) -> usize {
        self.n_atoms + 1
    }

    /// Magnetic quantum number of basis row `index`.
    pub fn m(&self, index: usize) -> f64 {
        self.total_spin() - index as f64
    }

    /// `(S, S-1, ..., -S)`.
    pub fn m_values(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.m(i)).collect()
    }

    /// Row of the basis state with projection `m`, if it exists.
    pub fn index_of(&self, m: f64) -> Option<usize> {
        let idx = self.total_spin() - m;
        let rounded = idx.round();
        if (idx - rounded).abs() > 1e-9 || rounded < 0.0 || rounded >= self.dim() as f64 {
            None
        } else {
            Some(rounded as usize)
        }
    }

    /// `m` rendered for column labels: integers as `1`, half-integers as `3/2`.
    pub fn m_label(&self, index: usize) -> String {
        let twice = self.n_atoms as i64 - 2 * index as i64;
        if twice % 2 == 0 {
            format!("{}", twice / 2)
        } else {
            format!("{twice}/2")
        }
    }
}

/// Dense complex square matrix on the Dicke subspace.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix(DMatrix<C64>);

impl OperatorMatrix {
    pub fn from_matrix(m: DMatrix<C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "operator matrices are square");
        Self(m)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = DVector::from_iterator(diag.len(), diag.iter().map(|&x| C64::new(x, 0.0)));
        Self(DMatrix::from_diagonal(&d))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self(DMatrix::from_fn(dim, dim, f))
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

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.scale(s))
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        Self(&self.0 * s)
    }

    /// `self + s * other`, in place.
    pub fn add_scaled(&mut self, s: C64, other: &OperatorMatrix) {
        self.0.zip_apply(&other.0, |a, b| *a += s * b);
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> f64 {
        self.0.clone().singular_values().max()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &OperatorMatrix) -> f64 {
        (&self.0 - &other.0)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()) <= tol
    }

    pub fn is_anti_hermitian(&self, tol: f64) -> bool {
        (&self.0 + self.0.adjoint()).iter().all(|z| z.norm() <= tol)
    }

    /// Largest off-diagonal magnitude.
    pub fn max_off_diagonal(&self) -> f64 {
        let n = self.dim();
        let mut out = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    out = out.max(self.0[(i, j)].norm());
                }
            }
        }
        out
    }

    /// `Tr(self * other)` without forming the product.
    pub fn trace_product(&self, other: &OperatorMatrix) -> C64 {
        let n = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for k in 0..n {
                acc += self.0[(i, k)] * other.0[(k, i)];
            }
        }
        acc
    }

    pub fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        &self.0 * v
    }

    /// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
    pub fn eigh(&self) -> Result<HermitianEigen> {
        let dim = self.dim();
        // Symmetrize so round-off asymmetry never leaks into the solver.
        let sym = (&self.0 + self.0.adjoint()).scale(0.5);
        let eig = SymmetricEigen::try_new(sym, EIGEN_EPS, EIGEN_MAX_ITER)
            .ok_or(Error::EigenNonConvergence(dim))?;
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(HermitianEigen { values, vectors })
    }
}

/// Ascending eigenvalues with eigenvectors stored column-wise.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

impl HermitianEigen {
    pub fn vector(&self, k: usize) -> DVector<C64> {
        self.vectors.column(k).into_owned()
    }
}

impl<'a> Add<&'a OperatorMatrix> for &'a OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &'a OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix(&self.0 + &rhs.0)
    }
}

impl<'a> Sub<&'a OperatorMatrix> for &'a OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &'a OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix(&self.0 - &rhs.0)
    }
}

impl<'a> Mul<&'a OperatorMatrix> for &'a OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &'a OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix(&self.0 * &rhs.0)
    }
}

impl Neg for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn neg(self) -> OperatorMatrix {
        OperatorMatrix(-&self.0)
    }
}

/// `ab - ba`.
pub fn commutator(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<OperatorMatrix> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(&(a * b) - &(b * a))
}

/// `ab + ba`.
pub fn anticommutator(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<OperatorMatrix> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(&(a * b) + &(b * a))
}

/// Collective raising operator `σ_D^+`.
///
/// In descending-m order the element `(n, n+1)` is `sqrt((N - n)(n + 1))`,
/// which equals `sqrt(S(S+1) - m(m+1))` for the column's `m`.
pub fn ladder_raise(basis: &SpinBasis) -> OperatorMatrix {
    let n_atoms = basis.n_atoms() as f64;
    OperatorMatrix::from_fn(basis.dim(), |r, c| {
        if c == r + 1 {
            let n = r as f64;
            C64::new(((n_atoms - n) * (n + 1.0)).sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Collective lowering operator `σ_D^-`.
pub fn ladder_lower(basis: &SpinBasis) -> OperatorMatrix {
    ladder_raise(basis).adjoint()
}

/// `(Sx, Sy, Sz)` on the Dicke subspace.
pub fn spin_operators(basis: &SpinBasis) -> (OperatorMatrix, OperatorMatrix, OperatorMatrix) {
    let up = ladder_raise(basis);
    let down = up.adjoint();
    let sx = (&up + &down).scale(0.5);
    // (σ+ - σ-)/(2i) = -i(σ+ - σ-)/2
    let sy = (&up - &down).scale_complex(C64::new(0.0, -0.5));
    let sz = OperatorMatrix::from_real_diagonal(&basis.m_values());
    (sx, sy, sz)
}

/// Spin operators bundled with their basis, plus `Sz²` which every
/// Hamiltonian evaluation needs.
#[derive(Clone, Debug)]
pub struct SpinOperators {
    pub basis: SpinBasis,
    pub sx: OperatorMatrix,
    pub sy: OperatorMatrix,
    pub sz: OperatorMatrix,
    pub sz2: OperatorMatrix,
}

impl SpinOperators {
    pub fn new(basis: SpinBasis) -> Self {
        let (sx, sy, sz) = spin_operators(&basis);
        let sz2 = &sz * &sz;
        Self {
            basis,
            sx,
            sy,
            sz,
            sz2,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }
}

/// The three trace identities used to reduce the first-order action.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceIdentity {
    /// `Tr(S_L²)`
    Square,
    /// `Tr(S_L² S_M²)`, `L ≠ M`
    SquarePair,
    /// `Tr(S_L S_M S_N)` with `ε_LMN = +1`
    CyclicTriple,
}

impl TraceIdentity {
    pub const ALL: [TraceIdentity; 3] = [
        TraceIdentity::Square,
        TraceIdentity::SquarePair,
        TraceIdentity::CyclicTriple,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TraceIdentity::Square => "square",
            TraceIdentity::SquarePair => "square-pair",
            TraceIdentity::CyclicTriple => "cyclic-triple",
        }
    }
}

impl fmt::Display for TraceIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TraceIdentity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::UnknownTraceIdentity(s.to_string()))
    }
}

/// Closed-form trace with `η = j(j+1)`, `μ = η(2j+1)`, `j = S`.
pub fn trace_identity(basis: &SpinBasis, which: TraceIdentity) -> C64 {
    let j = basis.total_spin();
    let eta = j * (j + 1.0);
    let mu = eta * (2.0 * j + 1.0);
    match which {
        TraceIdentity::Square => C64::new(mu / 3.0, 0.0),
        TraceIdentity::SquarePair => C64::new(mu * (2.0 * eta + 1.0) / 30.0, 0.0),
        TraceIdentity::CyclicTriple => C64::new(0.0, mu / 6.0),
    }
}
