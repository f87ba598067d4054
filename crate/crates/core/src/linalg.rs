//! Dense complex matrices for small quantum systems.
//!
//! Hermitian operators (Hamiltonians, dipoles, observables, density matrices) and
//! unitaries are thin newtypes over [`nalgebra::DMatrix`] of [`Complex64`]. The
//! exponential of a Hermitian generator is taken through its eigendecomposition so
//! that the result is unitary to working precision.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Largest supported Hilbert-space dimension.
pub const MAX_DIM: usize = 64;

/// Relative tolerance for the Hermiticity check on construction.
pub const HERMITIAN_TOL: f64 = 1e-12;

pub(crate) const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// A Hermitian `n x n` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Hermitian(CMatrix);

impl Hermitian {
    /// Validates `m` as Hermitian within `1e-12 * max(1, ||m||_F)`.
    ///
    /// The entries are stored as given; no symmetrization is applied, so a value
    /// loaded from disk and written back is bit-identical.
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix entries".into()));
        }
        let n = m.nrows();
        let scale = m.norm().max(1.0);
        let mut worst = (0, 0, 0.0_f64);
        for i in 0..n {
            for j in i..n {
                let dev = (m[(i, j)] - m[(j, i)].conj()).norm();
                if dev > worst.2 {
                    worst = (i, j, dev);
                }
            }
        }
        if worst.2 > HERMITIAN_TOL * scale {
            return Err(Error::NotHermitian {
                row: worst.0,
                col: worst.1,
                deviation: worst.2,
            });
        }
        Ok(Hermitian(m))
    }

    /// Wraps a matrix known to be Hermitian up to round-off, symmetrizing it.
    pub(crate) fn from_raw(m: CMatrix) -> Self {
        let adj = m.adjoint();
        Hermitian((m + adj).scale(0.5))
    }

    pub fn zeros(n: usize) -> Self {
        Hermitian(CMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Hermitian(CMatrix::identity(n, n))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Hermitian(CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(diag[i], 0.0)
            } else {
                ZERO
            }
        }))
    }

    /// Builds a real symmetric matrix from row-major entries.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(
                "rows must form a square matrix".into(),
            ));
        }
        Hermitian::new(CMatrix::from_fn(n, n, |i, j| {
            Complex64::new(rows[i][j], 0.0)
        }))
    }

    /// The projector `|v><v|` for a normalized vector.
    pub fn projector(v: &nalgebra::DVector<Complex64>) -> Self {
        Hermitian::from_raw(v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.0[(i, j)] == ZERO))
    }

    /// `U^dagger A U`, the Heisenberg-picture image under `U`.
    pub fn conjugate_by(&self, u: &Unitary) -> Hermitian {
        Hermitian::from_raw(u.0.adjoint() * &self.0 * &u.0)
    }

    /// `Q^dagger A Q` for an arbitrary (possibly rectangular) isometry `Q`.
    pub(crate) fn compress(&self, q: &CMatrix) -> Hermitian {
        Hermitian::from_raw(q.adjoint() * &self.0 * q)
    }

    pub fn scale(&self, s: f64) -> Hermitian {
        Hermitian(self.0.scale(s))
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &Hermitian, s: f64) -> Hermitian {
        Hermitian(&self.0 + other.0.scale(s))
    }
}

/// A unitary `n x n` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Unitary(CMatrix);

impl Unitary {
    /// Unitarity tolerance per dimension: `||U^dagger U - I||_F <= 1e-11 * n`.
    pub const TOL_PER_DIM: f64 = 1e-11;

    pub fn identity(n: usize) -> Self {
        Unitary(CMatrix::identity(n, n))
    }

    /// Validates `m` against the unitarity invariant.
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch("unitary must be square".into()));
        }
        let u = Unitary(m);
        let dev = u.unitarity_defect();
        if dev > Self::TOL_PER_DIM * u.dim() as f64 {
            return Err(Error::Numerical(format!("unitarity defect {dev:e}")));
        }
        Ok(u)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn adjoint(&self) -> Unitary {
        Unitary(self.0.adjoint())
    }

    /// `self * rhs`.
    pub fn compose(&self, rhs: &Unitary) -> Unitary {
        Unitary(&self.0 * &rhs.0)
    }

    /// `||U^dagger U - I||_F`.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.dim();
        (self.0.adjoint() * &self.0 - CMatrix::identity(n, n)).norm()
    }

    pub fn column(&self, j: usize) -> nalgebra::DVector<Complex64> {
        self.0.column(j).into_owned()
    }
}

/// Eigenvalues (ascending) and orthonormal eigenvectors (as columns) of a
/// Hermitian matrix.
#[derive(Clone, Debug)]
pub struct SpectralPair {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Unitary,
}

impl SpectralPair {
    /// `Q f(Lambda) Q^dagger` for a complex-valued scalar function.
    pub fn apply<F: Fn(f64) -> Complex64>(&self, f: F) -> CMatrix {
        let q = self.eigenvectors.matrix();
        let mut scaled = q.clone();
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            let fj = f(lam);
            for i in 0..scaled.nrows() {
                scaled[(i, j)] *= fj;
            }
        }
        scaled * q.adjoint()
    }

    /// `e^{-i Lambda t}` pushed back through the eigenbasis.
    pub fn evolution(&self, t: f64) -> Unitary {
        Unitary(self.apply(|lam| Complex64::from_polar(1.0, -lam * t)))
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.apply(|lam| Complex64::new(lam, 0.0))
    }
}

/// Hermitian eigendecomposition with eigenvalues sorted ascending.
///
/// Exactly diagonal inputs are handled without iteration so that their eigenvectors
/// are exact permutation columns.
pub fn spectral_decompose(a: &Hermitian) -> SpectralPair {
    let n = a.dim();
    let (values, vectors): (Vec<f64>, CMatrix) = if a.is_diagonal() {
        (
            (0..n).map(|i| a.0[(i, i)].re).collect(),
            CMatrix::identity(n, n),
        )
    } else {
        let eig = SymmetricEigen::new(a.0.clone());
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let eigenvalues = order.iter().map(|&i| values[i]).collect();
    let eigenvectors = CMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);
    SpectralPair {
        eigenvalues,
        eigenvectors: Unitary(eigenvectors),
    }
}

/// `e^{-iHt}` for Hermitian `H`.
pub fn expm_generator(h: &Hermitian, t: f64) -> Unitary {
    if t == 0.0 {
        return Unitary::identity(h.dim());
    }
    spectral_decompose(h).evolution(t)
}

/// Random Hermitian matrix `(A + A^dagger)/2` where `A` has independent
/// standard-normal real and imaginary parts, drawn from a ChaCha8 stream seeded
/// with `seed`.
pub fn random_hermitian(n: usize, seed: u64) -> Result<Hermitian> {
    if n < 2 {
        return Err(Error::UnsupportedDimension(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = CMatrix::from_fn(n, n, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re, im)
    });
    let adj = a.adjoint();
    Ok(Hermitian((a + adj).scale(0.5)))
}

/// `[A, B] = AB - BA`.
pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// `Tr(A B)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Serialization of complex matrices as row-major nested `[re, im]` pairs.
pub mod wire {
    use super::*;

    pub type Rows = Vec<Vec<[f64; 2]>>;

    pub fn to_rows(m: &CMatrix) -> Rows {
        (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .map(|j| [m[(i, j)].re, m[(i, j)].im])
                    .collect()
            })
            .collect()
    }

    pub fn from_rows(rows: &Rows) -> Result<CMatrix> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::DimensionMismatch("empty matrix".into()));
        }
        let m = rows[0].len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::DimensionMismatch("ragged matrix rows".into()));
        }
        Ok(CMatrix::from_fn(n, m, |i, j| {
            Complex64::new(rows[i][j][0], rows[i][j][1])
        }))
    }
}
