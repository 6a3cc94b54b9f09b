//! Complete dictionaries: square, full rank, unit-norm atoms.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::assignment::solve_assignment;
use crate::error::{shape_err, DlError, Result};
use crate::rng;

/// Columns whose norm is within this distance of 1 are left untouched, which
/// makes normalization idempotent bit for bit.
const UNIT_NORM_SLACK: f64 = 1e-15;

/// Smallest admissible ratio of extreme singular values.
pub const CONDITION_GUARD: f64 = 1e-12;

/// A feasible complete dictionary.
///
/// The matrix is K×K, every column (atom) has unit Euclidean norm and the
/// matrix is invertible. The inverse is computed once at construction, so a
/// `Dictionary` is immutable and can be shared across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl Dictionary {
    /// Normalizes the columns of `matrix` and checks invertibility.
    pub fn new(mut matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(shape_err(
                "non-empty square matrix",
                format!("{}x{}", matrix.nrows(), matrix.ncols()),
            ));
        }
        for (j, mut col) in matrix.column_iter_mut().enumerate() {
            let norm = col.norm();
            if norm == 0.0 || !norm.is_finite() {
                return Err(DlError::Normalization { column: j });
            }
            if (norm - 1.0).abs() > UNIT_NORM_SLACK {
                col /= norm;
            }
        }
        let sv = matrix.singular_values();
        let max = sv.max();
        let min = sv.min();
        let ratio = if max > 0.0 { min / max } else { 0.0 };
        if !(ratio > CONDITION_GUARD) {
            return Err(DlError::Rank { ratio });
        }
        let inverse = matrix
            .clone()
            .lu()
            .try_inverse()
            .ok_or(DlError::Rank { ratio })?;
        Ok(Self { matrix, inverse })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            inverse: DMatrix::identity(dim, dim),
        }
    }

    /// The symmetric square root of `(1 - mu) I + mu 11ᵀ`, whose atoms all have
    /// pairwise inner product `mu`.
    ///
    /// Requires `-1/(K-1) < mu < 1` so that the Gram matrix is positive definite.
    pub fn constant_collinearity(dim: usize, mu: f64) -> Result<Self> {
        if dim == 0 {
            return Err(DlError::Parameter("dimension must be positive".into()));
        }
        let lower = if dim > 1 { -1.0 / (dim as f64 - 1.0) } else { f64::NEG_INFINITY };
        if !(mu > lower && mu < 1.0) {
            return Err(DlError::Parameter(format!(
                "coherence {mu} outside ({lower}, 1) for K = {dim}"
            )));
        }
        let gram = DMatrix::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { mu });
        Self::new(psd_sqrt(gram))
    }

    /// Standard Gaussian entries with normalized columns. Column `j` draws from
    /// stream `j` of `seed`.
    pub fn random_gaussian(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(DlError::Parameter("dimension must be positive".into()));
        }
        let mut matrix = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let mut r = rng::stream(seed, j as u64);
            for i in 0..dim {
                matrix[(i, j)] = StandardNormal.sample(&mut r);
            }
        }
        Self::new(matrix)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// Gram matrix `DᵀD`.
    pub fn collinearity(&self) -> CollinearityMatrix {
        let mut m = self.matrix.tr_mul(&self.matrix);
        for i in 0..m.nrows() {
            m[(i, i)] = 1.0;
        }
        CollinearityMatrix(m)
    }

    /// Largest absolute inner product between two distinct atoms.
    pub fn max_coherence(&self) -> f64 {
        self.collinearity().max_off_diagonal()
    }

    /// Squared spectral norm `‖D‖₂²`.
    pub fn spectral_norm_sq(&self) -> f64 {
        let s = self.matrix.singular_values().max();
        s * s
    }

    /// Coefficients `β = D⁻¹ y` for every row `y` of `signals` (n×K), returned n×K.
    pub fn coefficients(&self, signals: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if signals.ncols() != self.dim() {
            return Err(shape_err(
                format!("signals with {} columns", self.dim()),
                format!("{} columns", signals.ncols()),
            ));
        }
        Ok(signals * self.inverse.transpose())
    }

    /// The empirical l1 objective `L(D) = (1/n) Σᵢ ‖D⁻¹ y⁽ⁱ⁾‖₁`.
    pub fn l1_objective(&self, signals: &DMatrix<f64>) -> Result<f64> {
        let beta = self.coefficients(signals)?;
        if beta.nrows() == 0 {
            return Err(DlError::Parameter("no signals".into()));
        }
        Ok(beta.iter().map(|b| b.abs()).sum::<f64>() / beta.nrows() as f64)
    }

    /// Applies a column permutation and sign flip: column `j` of the result is
    /// `signs[j] * D[:, perm[j]]`.
    pub fn sign_permute(&self, perm: &[usize], signs: &[f64]) -> Result<Self> {
        let k = self.dim();
        if perm.len() != k || signs.len() != k {
            return Err(shape_err(format!("length {k}"), format!("{} / {}", perm.len(), signs.len())));
        }
        let matrix = DMatrix::from_fn(k, k, |i, j| signs[j] * self.matrix[(i, perm[j])]);
        Self::new(matrix)
    }
}

/// Symmetric PSD square root via eigendecomposition, negative eigenvalues clipped at 0.
pub fn psd_sqrt(sym: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    v * DMatrix::from_diagonal(&roots) * v.transpose()
}

/// The Gram matrix `M(D) = DᵀD` of a dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct CollinearityMatrix(pub(crate) DMatrix<f64>);

impl CollinearityMatrix {
    /// Wraps a symmetric matrix, checking unit diagonal and entries bounded by 1.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(shape_err("square matrix", format!("{}x{}", m.nrows(), m.ncols())));
        }
        for i in 0..m.nrows() {
            if (m[(i, i)] - 1.0).abs() > 1e-10 {
                return Err(DlError::Parameter(format!("diagonal entry {i} is {}", m[(i, i)])));
            }
        }
        if m.iter().any(|v| v.abs() > 1.0 + 1e-10) {
            return Err(DlError::Parameter("collinearity entries must lie in [-1, 1]".into()));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn max_off_diagonal(&self) -> f64 {
        let k = self.0.nrows();
        let mut best: f64 = 0.0;
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    best = best.max(self.0[(i, j)].abs());
                }
            }
        }
        best
    }
}

/// Sign-permutation invariant relative error
/// `min_J ‖D̂J − D*‖²_F / ‖D*‖²_F`.
///
/// With unit-norm atoms the Frobenius objective splits over matched column
/// pairs, each costing `2 − 2|⟨D̂ᵢ, D*ⱼ⟩|` once the best sign is chosen, so the
/// minimum over permutations is a linear assignment problem.
pub fn nmse(estimate: &Dictionary, reference: &Dictionary) -> Result<f64> {
    let k = reference.dim();
    if estimate.dim() != k {
        return Err(shape_err(format!("dimension {k}"), format!("dimension {}", estimate.dim())));
    }
    let inner = estimate.matrix().tr_mul(reference.matrix());
    let cost = inner.map(|c| 2.0 - 2.0 * c.abs());
    let (_, total) = solve_assignment(&cost);
    Ok((total / k as f64).max(0.0))
}
