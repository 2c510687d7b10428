//! Dense Hermitian linear algebra: eigendecompositions, matrix functions,
//! Schatten norms, and the trace-inequality primitives the rest of the crate
//! consumes.
//!
//! Everything here is desk scale: dense complex storage, dimension capped at
//! [`DIMENSION_CAP`]. Matrix powers of positive operators are always taken
//! spectrally, never by fractional iteration.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Soft cap on operator dimension. Eigendecomposition cost dominates beyond
/// this; the toolkit's claims are all exercised at n <= 64.
pub const DIMENSION_CAP: usize = 256;

/// A dense self-adjoint operator standing in for a (truncated) operator on
/// Hilbert space.
///
/// Construction symmetrizes the input via `(A + A^H)/2` and records the
/// relative deviation instead of rejecting; perturbation arithmetic
/// accumulates rounding and the recorded deviation keeps that auditable.
/// After construction the stored entries satisfy `A = A^H` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    entries: DMatrix<C64>,
    hermiticity_deviation: f64,
}

impl HermitianOperator {
    pub fn new(raw: DMatrix<C64>) -> Result<Self> {
        if raw.nrows() != raw.ncols() {
            return Err(Error::NotSquare {
                rows: raw.nrows(),
                cols: raw.ncols(),
            });
        }
        if raw.nrows() == 0 {
            return Err(Error::EmptyMatrix);
        }
        for j in 0..raw.ncols() {
            for i in 0..raw.nrows() {
                let z = raw[(i, j)];
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(Error::NonFiniteEntry { row: i, col: j });
                }
            }
        }

        let n = raw.nrows();
        let mut max_mag = 0.0_f64;
        let mut max_dev = 0.0_f64;
        let mut entries = DMatrix::zeros(n, n);
        for i in 0..n {
            entries[(i, i)] = C64::new(raw[(i, i)].re, 0.0);
            max_dev = max_dev.max(raw[(i, i)].im.abs());
            max_mag = max_mag.max(raw[(i, i)].norm());
            for j in (i + 1)..n {
                let a = raw[(i, j)];
                let b = raw[(j, i)];
                let sym = 0.5 * (a + b.conj());
                entries[(i, j)] = sym;
                entries[(j, i)] = sym.conj();
                max_dev = max_dev.max((a - b.conj()).norm());
                max_mag = max_mag.max(a.norm()).max(b.norm());
            }
        }
        let hermiticity_deviation = if max_mag > 0.0 { max_dev / max_mag } else { 0.0 };
        Ok(Self {
            entries,
            hermiticity_deviation,
        })
    }

    pub fn from_real(raw: DMatrix<f64>) -> Result<Self> {
        Self::new(raw.map(|x| C64::new(x, 0.0)))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        let n = diag.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        Self::new(m)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: DMatrix::identity(dim, dim),
            hermiticity_deviation: 0.0,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: DMatrix::zeros(dim, dim),
            hermiticity_deviation: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<C64> {
        self.entries
    }

    /// Relative deviation `max |A - A^H| / max |A|` observed at construction.
    pub fn hermiticity_deviation(&self) -> f64 {
        self.hermiticity_deviation
    }

    /// Trace, real by hermiticity.
    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.entries[(i, i)].re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.norm()
    }

    /// Operator norm, i.e. the largest absolute eigenvalue.
    pub fn operator_norm(&self) -> f64 {
        self.entries
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0_f64, |m, &l| m.max(l.abs()))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim())?;
        Ok(Self {
            entries: &self.entries + &other.entries,
            hermiticity_deviation: 0.0,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim())?;
        Ok(Self {
            entries: &self.entries - &other.entries,
            hermiticity_deviation: 0.0,
        })
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            entries: self.entries.map(|z| z * factor),
            hermiticity_deviation: 0.0,
        }
    }

    pub fn add_scaled_identity(&self, c: f64) -> Self {
        let mut entries = self.entries.clone();
        for i in 0..self.dim() {
            entries[(i, i)] += C64::new(c, 0.0);
        }
        Self {
            entries,
            hermiticity_deviation: self.hermiticity_deviation,
        }
    }

    /// Plain operator product. The result is generally not Hermitian, so it
    /// is returned as a raw matrix.
    pub fn matmul(&self, other: &Self) -> DMatrix<C64> {
        &self.entries * &other.entries
    }

    fn check_dim(&self, other: usize) -> Result<()> {
        if self.dim() != other {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other,
            });
        }
        Ok(())
    }
}

/// Eigenvalues (ascending) plus an orthonormal eigenbasis; the engine behind
/// all matrix functions in the crate.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<C64>,
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<C64> {
        &self.eigenvectors
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    /// Rebuild a Hermitian operator from modified eigenvalues in this basis:
    /// `U diag(vals) U^H`.
    pub fn assemble(&self, vals: &[f64]) -> HermitianOperator {
        let n = self.dim();
        assert_eq!(vals.len(), n, "eigenvalue count mismatch");
        let mut scaled = self.eigenvectors.clone();
        for (j, &v) in vals.iter().enumerate() {
            scaled.column_mut(j).scale_mut(v);
        }
        let raw = &scaled * self.eigenvectors.adjoint();
        HermitianOperator::new(raw).expect("assembled operator is square and finite")
    }

    /// `U diag(lambda) U^H`, for checking the reconstruction invariant.
    pub fn reconstruct(&self) -> HermitianOperator {
        self.assemble(self.eigenvalues.as_slice())
    }

    /// Conjugate an operator into this eigenbasis: `U^H A U`.
    pub fn to_eigenbasis(&self, a: &HermitianOperator) -> DMatrix<C64> {
        self.eigenvectors.adjoint() * a.entries() * &self.eigenvectors
    }

    /// Conjugate a matrix back out of this eigenbasis: `U A U^H`.
    pub fn from_eigenbasis(&self, a: &DMatrix<C64>) -> DMatrix<C64> {
        &self.eigenvectors * a * self.eigenvectors.adjoint()
    }

    /// Shift every eigenvalue by `c`, keeping the basis. Matches
    /// `A + c I` exactly on the spectral side.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            eigenvalues: self.eigenvalues.map(|l| l + c),
            eigenvectors: self.eigenvectors.clone(),
        }
    }
}

/// Eigendecomposition of a Hermitian operator, eigenvalues sorted ascending.
pub fn eig(a: &HermitianOperator) -> Result<SpectralDecomposition> {
    let n = a.dim();
    let se = a
        .entries
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 4096)
        .ok_or_else(|| {
            // Gershgorin-style spread estimate for the diagnostic.
            let spread = (0..n)
                .map(|i| (0..n).map(|j| a.entries[(i, j)].norm()).sum::<f64>())
                .fold(0.0_f64, f64::max);
            Error::DecompositionFailure { dim: n, spread }
        })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));

    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| se.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.column_mut(dst).copy_from(&se.eigenvectors.column(src));
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Apply a scalar function spectrally: `U diag(f(lambda)) U^H`.
///
/// Errors if `f` is non-finite at any eigenvalue.
pub fn matrix_function<F>(d: &SpectralDecomposition, f: F) -> Result<HermitianOperator>
where
    F: Fn(f64) -> f64,
{
    let mut vals = Vec::with_capacity(d.dim());
    for &l in d.eigenvalues.iter() {
        let fl = f(l);
        if !fl.is_finite() {
            return Err(Error::FunctionDomain { eigenvalue: l });
        }
        vals.push(fl);
    }
    Ok(d.assemble(&vals))
}

/// Singular values of a general complex matrix, descending, computed from the
/// Hermitian eigenvalues of `A^H A`.
pub fn singular_values(m: &DMatrix<C64>) -> DVector<f64> {
    let gram = m.adjoint() * m;
    let mut s: Vec<f64> = gram
        .symmetric_eigenvalues()
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    DVector::from_vec(s)
}

/// Operator norm (largest singular value) of a general matrix.
pub fn operator_norm(m: &DMatrix<C64>) -> f64 {
    let gram = m.adjoint() * m;
    gram.symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, &l| acc.max(l.max(0.0)))
        .sqrt()
}

/// Trace norm of a general matrix.
pub fn trace_norm(m: &DMatrix<C64>) -> f64 {
    singular_values(m).sum()
}

fn schatten_from_singular_values(s: &[f64], p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::InvalidSchattenExponent { p });
    }
    let s_max = s.iter().fold(0.0_f64, |m, &x| m.max(x));
    if s_max == 0.0 {
        return Ok(0.0);
    }
    if p.is_infinite() {
        return Ok(s_max);
    }
    // Factor out the largest singular value so the powers never overflow.
    let sum: f64 = s.iter().map(|&x| (x / s_max).powf(p)).sum();
    let value = s_max * sum.powf(1.0 / p);
    if !value.is_finite() {
        return Err(Error::SchattenOverflow { p });
    }
    Ok(value)
}

/// Schatten quasinorm `[Tr (A^H A)^{p/2}]^{1/p}` of a Hermitian operator,
/// routed through absolute eigenvalues. `p = 1` is the trace norm, `p = inf`
/// the operator norm; `p < 1` is the C_p quasinorm.
pub fn schatten_norm(a: &HermitianOperator, p: f64) -> Result<f64> {
    let s: Vec<f64> = a
        .entries
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .map(|&l| l.abs())
        .collect();
    schatten_from_singular_values(&s, p)
}

/// Schatten quasinorm of a general (not necessarily Hermitian) matrix.
pub fn schatten_norm_general(m: &DMatrix<C64>, p: f64) -> Result<f64> {
    let s = singular_values(m);
    schatten_from_singular_values(s.as_slice(), p)
}

/// Both sides of the trace Holder inequality
/// `|| A_1 ... A_k ||_1 <= prod_i || A_i ||_{1/alpha_i}` for exponents
/// `alpha_i > 0` summing to 1.
#[derive(Debug, Clone, Copy)]
pub struct HolderCheck {
    /// Trace norm of the ordered product.
    pub lhs: f64,
    /// Product of the per-factor Schatten norms.
    pub rhs: f64,
}

pub fn holder_product_bound(
    factors: &[&HermitianOperator],
    exponents: &[f64],
) -> Result<HolderCheck> {
    if factors.is_empty() {
        return Err(Error::InvalidArgument("need at least one factor".into()));
    }
    if factors.len() != exponents.len() {
        return Err(Error::DimensionMismatch {
            expected: factors.len(),
            got: exponents.len(),
        });
    }
    for &a in exponents {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "Holder exponents must be positive and finite, got {a}"
            )));
        }
    }
    let sum: f64 = exponents.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::ExponentSum { sum });
    }
    let dim = factors[0].dim();
    for f in factors {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: f.dim(),
            });
        }
    }

    let mut product = factors[0].entries().clone();
    for f in &factors[1..] {
        product = product * f.entries();
    }
    let lhs = trace_norm(&product);

    let mut rhs = 1.0;
    for (f, &a) in factors.iter().zip(exponents) {
        rhs *= schatten_norm(f, 1.0 / a)?;
    }
    Ok(HolderCheck { lhs, rhs })
}

/// `Tr(A B)` without forming the product.
pub fn trace_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}
