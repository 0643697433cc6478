//! Dense complex Hermitian linear algebra.
//!
//! Everything downstream works in the eigenbasis of a density matrix and
//! splits that basis into a kernel (eigenvalues within `tol_zero` of zero)
//! and a support. The partition is made once, here, and every formula that
//! distinguishes `p_k = 0` from `p_k > 0` reads it from [`EigenDecomposition`].

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense square complex matrix.
pub type CMatrix = DMatrix<Complex64>;

/// Default band around zero inside which eigenvalues count as exactly zero.
pub const DEFAULT_TOL_ZERO: f64 = 1e-10;

/// Largest anti-Hermitian residual `eigh` tolerates before refusing the input.
const HERMITIAN_REJECT: f64 = 1e-8;

const EIGEN_MAX_ITER: usize = 100_000;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Real diagonal matrix as a complex matrix.
pub fn diag(values: &[f64]) -> CMatrix {
    let n = values.len();
    CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            c(values[i], 0.0)
        } else {
            c(0.0, 0.0)
        }
    })
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn zeros(dim: usize) -> CMatrix {
    CMatrix::zeros(dim, dim)
}

/// `|v><v|` for a column vector given as a slice.
pub fn outer(v: &[Complex64]) -> CMatrix {
    let n = v.len();
    CMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj())
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entrywise deviation from Hermiticity, `max |m_ij - conj(m_ji)|`.
pub fn hermiticity_residual(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(m + m†) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Spectral decomposition of a Hermitian matrix with its kernel/support split.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Ascending. Entries within `tol_zero` of zero are stored as exactly 0.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the eigenvector for `eigenvalues[k]`.
    pub eigenvectors: CMatrix,
    pub zero_set: Vec<usize>,
    pub positive_set: Vec<usize>,
    pub tol_zero: f64,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn rank(&self) -> usize {
        self.positive_set.len()
    }

    pub fn is_full_rank(&self) -> bool {
        self.zero_set.is_empty()
    }

    pub fn is_zero(&self, k: usize) -> bool {
        self.zero_set.contains(&k)
    }

    pub fn vector(&self, k: usize) -> Vec<Complex64> {
        self.eigenvectors.column(k).iter().copied().collect()
    }

    /// Matrix elements `<k|m|l>` of `m` in this eigenbasis.
    pub fn to_eigenbasis(&self, m: &CMatrix) -> CMatrix {
        self.eigenvectors.adjoint() * m * &self.eigenvectors
    }

    /// Inverse of [`Self::to_eigenbasis`].
    pub fn from_eigenbasis(&self, m: &CMatrix) -> CMatrix {
        &self.eigenvectors * m * self.eigenvectors.adjoint()
    }

    /// `Σ_k f(p_k) |k><k|`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let values: Vec<f64> = self.eigenvalues.iter().map(|&p| f(p)).collect();
        self.from_eigenbasis(&diag(&values))
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.apply(|p| p)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }
}

/// Eigendecomposition of a Hermitian matrix.
///
/// The input is symmetrized first. Eigenvalues in `[-tol_zero, tol_zero]` are
/// clamped to zero and form the `zero_set`; everything else (including any
/// eigenvalue below `-tol_zero`) goes to `positive_set` so the partition is
/// always complete. Callers that need PSD inputs check the minimum themselves.
pub fn eigh(m: &CMatrix, tol_zero: f64) -> Result<EigenDecomposition> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(m.nrows(), m.ncols()));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidArgument(
            "matrix has non-finite entries".into(),
        ));
    }
    let residual = hermiticity_residual(m) / 2.0;
    if residual > HERMITIAN_REJECT {
        return Err(Error::NotHermitian(residual));
    }
    let sym = hermitian_part(m);
    let dim = sym.nrows();
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or(Error::ConvergenceFailure)?;

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut eigenvalues = Vec::with_capacity(dim);
    let mut eigenvectors = CMatrix::zeros(dim, dim);
    let mut zero_set = Vec::new();
    let mut positive_set = Vec::new();
    for (k, &src) in order.iter().enumerate() {
        let mut p = eig.eigenvalues[src];
        if p.abs() <= tol_zero {
            p = 0.0;
            zero_set.push(k);
        } else {
            positive_set.push(k);
        }
        eigenvalues.push(p);
        eigenvectors.set_column(k, &eig.eigenvectors.column(src));
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
        zero_set,
        positive_set,
        tol_zero,
    })
}

/// Principal square root of a Hermitian PSD matrix.
pub fn psd_sqrt(m: &CMatrix, tol_zero: f64) -> Result<CMatrix> {
    let spec = eigh(m, tol_zero)?;
    let min = spec.min_eigenvalue();
    if min < -tol_zero {
        return Err(Error::NotPsd(min));
    }
    Ok(spec.apply(|p| p.max(0.0).sqrt()))
}

/// Projector onto the span of the zero-eigenvalue eigenvectors.
pub fn kernel_projector(spec: &EigenDecomposition) -> CMatrix {
    let dim = spec.dim();
    let mut p = CMatrix::zeros(dim, dim);
    for &k in &spec.zero_set {
        let col = spec.eigenvectors.column(k);
        p += col * col.adjoint();
    }
    p
}

/// Whether the smallest eigenvalue of a Hermitian matrix is at least `-tol`.
pub fn is_psd(m: &CMatrix, tol: f64) -> Result<bool> {
    let spec = eigh(m, 0.0)?;
    Ok(spec.min_eigenvalue() >= -tol)
}

/// Whether a real symmetric matrix is PSD within `tol`.
pub fn is_psd_real(m: &DMatrix<f64>, tol: f64) -> bool {
    min_eigenvalue_real(m) >= -tol
}

pub fn min_eigenvalue_real(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// A validated density matrix: Hermitian, unit trace, PSD.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    pub const HERMITIAN_TOL: f64 = 1e-12;
    pub const TRACE_TOL: f64 = 1e-10;
    pub const PSD_TOL: f64 = 1e-10;

    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidDensityMatrix(format!(
                "shape {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidDensityMatrix("non-finite entry".into()));
        }
        let herm = hermiticity_residual(&matrix);
        if herm > Self::HERMITIAN_TOL {
            return Err(Error::InvalidDensityMatrix(format!(
                "Hermiticity residual {herm:e}"
            )));
        }
        let tr = trace(&matrix);
        if (tr.re - 1.0).abs() > Self::TRACE_TOL || tr.im.abs() > Self::TRACE_TOL {
            return Err(Error::InvalidDensityMatrix(format!("trace {}", tr.re)));
        }
        let matrix = hermitian_part(&matrix);
        let min = eigh(&matrix, 0.0)?.min_eigenvalue();
        if min < -Self::PSD_TOL {
            return Err(Error::InvalidDensityMatrix(format!(
                "min eigenvalue {min:e}"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: identity(dim) * c(1.0 / dim as f64, 0.0),
        }
    }

    pub fn from_diagonal(values: &[f64]) -> Result<Self> {
        Self::new(diag(values))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn spectrum(&self, tol_zero: f64) -> Result<EigenDecomposition> {
        eigh(&self.matrix, tol_zero)
    }
}
