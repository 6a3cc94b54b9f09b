//! Local identifiability quantities for a reference dictionary.
//!
//! The reference dictionary `D*` is a sharp local minimum of the population
//! l1 objective exactly when the dual semi-norm of the bias matrix
//! `B(α, M*)` is below 1. For constant-collinearity references and the
//! standard coefficient models the bias matrix is constant off the diagonal,
//! and its dual semi-norm has a closed form; this module evaluates those
//! closed forms, their Monte-Carlo counterparts, and the derived sharpness
//! and region bounds.
//!
//! Two closed forms are reported for `‖D*‖₂²` in the literature for the
//! constant-collinearity dictionary, `1 + μ(K−1)` and `1 − μ + μ(K−1)`. The
//! first is the largest eigenvalue of the Gram matrix; [`report`] always
//! computes the spectral norm numerically from the constructed dictionary.

use std::f64::consts::{FRAC_2_PI, SQRT_2};

use itertools::Itertools;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, Discrete};
use statrs::function::gamma::gamma_lr;

use crate::coeff_models::{expected_abs_coef, CoefficientModel, ModelKind};
use crate::dictionary::{CollinearityMatrix, Dictionary};
use crate::error::{shape_err, DlError, Result};
use crate::quadrature::integrate;

/// Coefficients with magnitude below this count as zero in `1(αₖ = 0)`.
///
/// Generated coefficients store exact zeros, so this only matters for
/// externally supplied data, where tiny nonzero values are misclassified.
pub const ZERO_THRESHOLD: f64 = 1e-12;

/// Largest number of size-`s` subsets the closed-form semi-norm will enumerate.
pub const MAX_SUBSETS: u128 = 1_000_000;

/// `B(α, M)` with `B[k][j] = E αⱼ sign(αₖ) − M[j][k] E|αⱼ|`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasMatrix(pub DMatrix<f64>);

impl BiasMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Sample estimate of the bias matrix from n×K coefficients, with `sign(0) = 0`.
pub fn bias_matrix_empirical(coeffs: &DMatrix<f64>, m: &CollinearityMatrix) -> Result<BiasMatrix> {
    let (n, k) = coeffs.shape();
    if m.dim() != k {
        return Err(shape_err(format!("{k}x{k} collinearity"), format!("{}x{}", m.dim(), m.dim())));
    }
    if n == 0 {
        return Err(DlError::Parameter("need at least one sample".into()));
    }
    let signs = coeffs.map(sign);
    // cross[k][j] = Σᵢ sign(αₖ) αⱼ
    let cross = signs.tr_mul(coeffs) / n as f64;
    let mean_abs: Vec<f64> = coeffs.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>() / n as f64).collect();
    let b = DMatrix::from_fn(k, k, |row, col| {
        if row == col {
            0.0
        } else {
            cross[(row, col)] - m.matrix()[(col, row)] * mean_abs[col]
        }
    });
    Ok(BiasMatrix(b))
}

/// Off-diagonal constant of the bias matrix for a constant-collinearity
/// reference with coherence `mu`.
pub fn bias_constant(model: &CoefficientModel, mu: f64) -> Result<f64> {
    model.validate()?;
    let k = model.dim as f64;
    let g = FRAC_2_PI.sqrt();
    match model.kind {
        ModelKind::SparseGaussian { s } => Ok(-g * mu * s as f64 / k),
        ModelKind::BernoulliGaussian { p } => Ok(-g * mu * p),
        ModelKind::NonNegSparseGaussian { s } => {
            if model.dim < 2 {
                return Err(DlError::Parameter("|SG| bias needs K >= 2".into()));
            }
            let s = s as f64;
            Ok(-g * (mu * s / k - s * (s - 1.0) / (k * (k - 1.0))))
        }
        ModelKind::SparseLaplacian { s } => Ok(-mu * s as f64 / k),
        _ => Err(DlError::UnsupportedModel {
            operation: "bias_matrix_closed_form",
            model: model.label(),
        }),
    }
}

/// Closed-form bias matrix: the constant from [`bias_constant`] off the
/// diagonal and zeros on it.
pub fn bias_matrix_closed_form(model: &CoefficientModel, mu: f64) -> Result<BiasMatrix> {
    let c = bias_constant(model, mu)?;
    let k = model.dim;
    Ok(BiasMatrix(DMatrix::from_fn(k, k, |i, j| if i == j { 0.0 } else { c })))
}

/// Monte-Carlo estimate of `Σₖ E|Σⱼ A[k][j] αⱼ| 1(αₖ = 0)` from n×K coefficients.
pub fn seminorm_empirical(a: &DMatrix<f64>, coeffs: &DMatrix<f64>) -> Result<f64> {
    let (n, k) = coeffs.shape();
    if a.shape() != (k, k) {
        return Err(shape_err(format!("{k}x{k}"), format!("{}x{}", a.nrows(), a.ncols())));
    }
    if n == 0 {
        return Err(DlError::Parameter("need at least one sample".into()));
    }
    // proj[i][row] = Σⱼ A[row][j] α⁽ⁱ⁾ⱼ
    let proj = coeffs * a.transpose();
    let mut total = 0.0;
    for i in 0..n {
        for row in 0..k {
            if coeffs[(i, row)].abs() < ZERO_THRESHOLD {
                total += proj[(i, row)].abs();
            }
        }
    }
    Ok(total / n as f64)
}

pub(crate) fn binomial(n: usize, r: usize) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    (0..r).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exact semi-norm for `SG(s)` coefficients:
/// `√(2/π) Σₖ C(K,s)⁻¹ Σ_{|S|=s, k∉S} √(Σ_{j∈S} A[k][j]²)`.
pub fn seminorm_closed_form_sg(a: &DMatrix<f64>, s: usize) -> Result<f64> {
    let k = a.nrows();
    if a.ncols() != k || k == 0 {
        return Err(shape_err("non-empty square matrix", format!("{}x{}", a.nrows(), a.ncols())));
    }
    if s == 0 || s > k {
        return Err(DlError::Parameter(format!("sparsity {s} outside 1..={k}")));
    }
    let count = binomial(k, s);
    if count > MAX_SUBSETS {
        return Err(DlError::Capacity { count, limit: MAX_SUBSETS });
    }
    let mut total = 0.0;
    for row in 0..k {
        let others: Vec<usize> = (0..k).filter(|&j| j != row).collect();
        for subset in others.into_iter().combinations(s) {
            total += subset.iter().map(|&j| a[(row, j)] * a[(row, j)]).sum::<f64>().sqrt();
        }
    }
    Ok(FRAC_2_PI.sqrt() * total / count as f64)
}

/// `Σ_{s=0}^{K-1} C(K−1, s) pˢ (1−p)^{K−1−s} √s`, i.e. `E√S` for `S ~ Bin(K−1, p)`.
fn binomial_sqrt_mean(k: usize, p: f64) -> Result<f64> {
    let trials = (k - 1) as u64;
    let dist = Binomial::new(p, trials).map_err(|e| DlError::Parameter(e.to_string()))?;
    Ok((0..=trials).map(|s| dist.pmf(s) * (s as f64).sqrt()).sum())
}

/// Closed-form dual semi-norm `|||B(α, M*)|||*_α` for a constant-collinearity
/// reference with coherence `mu`.
///
/// * SG: `|μ|√s (K−1)/(K−s)`
/// * |SG|: `(K−1)/(K−s) · |μ − (s−1)/(K−1)|`
/// * BG: `|μ| p (K−1) / ((1−p) E√Bin(K−1, p))`, bounded below by [`bg_dual_norm_jensen`]
/// * SL: `|μ| s (K−1) / ((K−s) I(s))` with `I` from [`laplace_integral`]
pub fn dual_norm_constant(model: &CoefficientModel, mu: f64) -> Result<f64> {
    model.validate()?;
    let k = model.dim;
    let kf = k as f64;
    let dense = |s: usize| {
        if s >= k {
            Err(DlError::Parameter(format!("dual norm is undefined for s = K = {k}")))
        } else {
            Ok(())
        }
    };
    match model.kind {
        ModelKind::SparseGaussian { s } => {
            dense(s)?;
            let s = s as f64;
            Ok(mu.abs() * s.sqrt() * (kf - 1.0) / (kf - s))
        }
        ModelKind::NonNegSparseGaussian { s } => {
            dense(s)?;
            let s = s as f64;
            Ok((kf - 1.0) / (kf - s) * (mu - (s - 1.0) / (kf - 1.0)).abs())
        }
        ModelKind::BernoulliGaussian { p } => {
            if k < 2 {
                return Err(DlError::Parameter("dual norm needs K >= 2".into()));
            }
            Ok(mu.abs() * p * (kf - 1.0) / ((1.0 - p) * binomial_sqrt_mean(k, p)?))
        }
        ModelKind::SparseLaplacian { s } => {
            dense(s)?;
            let sf = s as f64;
            Ok(mu.abs() * sf * (kf - 1.0) / ((kf - sf) * laplace_integral(s)?))
        }
        _ => Err(DlError::UnsupportedModel {
            operation: "dual_norm_constant",
            model: model.label(),
        }),
    }
}

/// The BG dual norm with `E√Bin(K−1, p)` replaced by `√(p(K−1))`, i.e.
/// `|μ|√(p(K−1))/(1−p)`.
///
/// Since `√` is concave, `E√S ≤ √(ES)`, so this is a lower bound on
/// [`dual_norm_constant`] for BG: `bg_dual_norm_jensen < 1` is necessary for
/// sharpness but not sufficient.
pub fn bg_dual_norm_jensen(mu: f64, p: f64, k: usize) -> f64 {
    mu.abs() * (p * (k as f64 - 1.0)).sqrt() / (1.0 - p)
}

/// `I(s) = E|X − Y|` for independent `X, Y ~ Gamma(s, 1)`, equivalently the
/// double integral `∬ |y−x| (xy)^{s−1} e^{−(x+y)} Γ(s)⁻² dx dy` over the
/// positive quadrant.
///
/// Evaluated through the one-dimensional identity `E|X−Y| = 2∫₀^∞ F(t)(1−F(t)) dt`
/// with `F` the Gamma(s, 1) distribution function.
pub fn laplace_integral(s: usize) -> Result<f64> {
    if s == 0 {
        return Err(DlError::Parameter("laplace_integral needs s >= 1".into()));
    }
    let a = s as f64;
    let integrand = |t: f64| {
        if t <= 0.0 {
            return 0.0;
        }
        let f = gamma_lr(a, t);
        2.0 * f * (1.0 - f)
    };
    // Past `upper` the integrand is far below double precision.
    let upper = a + 40.0 * a.sqrt() + 40.0;
    let tol = 1e-11;
    let head = integrate(integrand, 0.0, a, tol / 2.0)?;
    let tail = integrate(integrand, a, upper, tol / 2.0)?;
    Ok(head + tail)
}

/// Regularity constant `c_α` with `|||A|||_α ≥ c_α ‖A‖_F` on zero-diagonal `A`.
///
/// SG: `s(K−s)/(K(K−1)) √(2/π)`; BG: `p(1−p) √(2/π)`. No constant is known for
/// the other models.
pub fn regularity_constant(model: &CoefficientModel) -> Result<f64> {
    model.validate()?;
    let g = FRAC_2_PI.sqrt();
    match model.kind {
        ModelKind::SparseGaussian { s } => {
            let (k, s) = (model.dim as f64, s as f64);
            if model.dim < 2 {
                return Err(DlError::Parameter("regularity constant needs K >= 2".into()));
            }
            Ok(s * (k - s) / (k * (k - 1.0)) * g)
        }
        ModelKind::BernoulliGaussian { p } => Ok(p * (1.0 - p) * g),
        _ => Err(DlError::UnsupportedModel {
            operation: "regularity_constant",
            model: model.label(),
        }),
    }
}

/// Summary of the local identifiability analysis for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub dual_norm: f64,
    /// `dual_norm < 1`: the reference is a sharp local minimum.
    pub condition: bool,
    /// Lower bound on the sharpness, `c_α (1 − dual) / (√2 ‖D*‖₂²)`.
    pub sharpness: Option<f64>,
    /// Radius of the Frobenius ball around `D*` where `D*` is minimal,
    /// `(1 − dual) c_α / (8√2 ‖D*‖₂² maxⱼ E|αⱼ|)`.
    pub region_radius: Option<f64>,
    pub c_alpha: Option<f64>,
    /// `‖D*‖₂²`, computed numerically.
    pub spectral_norm_sq: f64,
}

/// Identifiability report for a constant-collinearity reference of coherence
/// `mu` and dimension `model.dim`.
///
/// Sharpness and region radius are `None` when the model has no regularity
/// constant (|SG| and SL). They are negative when the condition fails.
pub fn report(model: &CoefficientModel, mu: f64) -> Result<IdentifiabilityReport> {
    let dual_norm = dual_norm_constant(model, mu)?;
    let reference = Dictionary::constant_collinearity(model.dim, mu)?;
    let spectral_norm_sq = reference.spectral_norm_sq();
    let c_alpha = match regularity_constant(model) {
        Ok(c) => Some(c),
        Err(DlError::UnsupportedModel { .. }) => None,
        Err(e) => return Err(e),
    };
    let margin = 1.0 - dual_norm;
    let sharpness = c_alpha.map(|c| c * margin / (SQRT_2 * spectral_norm_sq));
    let region_radius = match c_alpha {
        Some(c) => {
            let max_abs = expected_abs_coef(model)?;
            Some(margin * c / (8.0 * SQRT_2 * spectral_norm_sq * max_abs))
        }
        None => None,
    };
    Ok(IdentifiabilityReport {
        dual_norm,
        condition: dual_norm < 1.0,
        sharpness,
        region_radius,
        c_alpha,
        spectral_norm_sq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff_models::sample_coefficients;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ones_minus_identity(k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(k, k, |i, j| if i == j { 0.0 } else { 1.0 })
    }

    fn random_offdiag(k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        DMatrix::from_fn(k, k, |i, j| if i == j { 0.0 } else { rng.random_range(-1.0..1.0) })
    }

    #[test]
    fn empirical_bias_single_basis_sample() {
        let mut a = DMatrix::zeros(1, 3);
        a[(0, 0)] = 1.0;
        let m = CollinearityMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let b = bias_matrix_empirical(&a, &m).unwrap();
        assert_eq!(b.matrix(), &DMatrix::zeros(3, 3));
    }

    #[test]
    fn empirical_bias_vanishes_for_orthogonal_reference() {
        let n = 100_000;
        let model = CoefficientModel::bernoulli_gaussian(5, 0.4).unwrap();
        let a = sample_coefficients(&model, n, 2).unwrap();
        let b = bias_matrix_empirical(&a, &Dictionary::identity(5).collinearity()).unwrap();
        let bound = 4.0 / (n as f64).sqrt();
        assert!(b.matrix().iter().all(|v| v.abs() < bound), "{}", b.matrix());
    }

    #[test]
    fn empirical_bias_matches_sparse_gaussian_closed_form() {
        let (k, s, mu, n) = (8, 3, 0.3, 100_000);
        let model = CoefficientModel::sparse_gaussian(k, s).unwrap();
        let a = sample_coefficients(&model, n, 8).unwrap();
        let m = Dictionary::constant_collinearity(k, mu).unwrap().collinearity();
        let b = bias_matrix_empirical(&a, &m).unwrap();
        let expected = bias_constant(&model, mu).unwrap();
        // Each entry averages αⱼ sign(αₖ) − μ|αⱼ|; its per-sample variance is at most (1 + μ²)·s/K.
        let stderr = ((1.0 + mu * mu) * s as f64 / k as f64 / n as f64).sqrt();
        for i in 0..k {
            assert_eq!(b.matrix()[(i, i)], 0.0);
            for j in 0..k {
                if i != j {
                    assert!((b.matrix()[(i, j)] - expected).abs() < 4.0 * stderr);
                }
            }
        }
    }

    #[test]
    fn closed_form_bias_values() {
        let sg = CoefficientModel::sparse_gaussian(10, 3).unwrap();
        assert!(bias_matrix_closed_form(&sg, 0.0).unwrap().matrix().iter().all(|v| *v == 0.0));
        let (k, s) = (12, 4);
        let nn = CoefficientModel::nonneg_sparse_gaussian(k, s).unwrap();
        let mu = (s as f64 - 1.0) / (k as f64 - 1.0);
        assert!(bias_matrix_closed_form(&nn, mu).unwrap().matrix().iter().all(|v| v.abs() < 1e-15));
        let bg = CoefficientModel::bernoulli_gaussian(4, 0.7).unwrap();
        let b = bias_matrix_closed_form(&bg, 0.5).unwrap();
        assert_abs_diff_eq!(b.matrix()[(0, 1)], -0.279259596281, epsilon = 1e-11);
        assert_eq!(b.matrix()[(2, 2)], 0.0);
    }

    #[test]
    fn seminorm_trivial_cases() {
        let model = CoefficientModel::sparse_gaussian(4, 2).unwrap();
        let a = sample_coefficients(&model, 1000, 1).unwrap();
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5]));
        assert_eq!(seminorm_empirical(&diag, &a).unwrap(), 0.0);
        assert_eq!(seminorm_empirical(&DMatrix::zeros(4, 4), &a).unwrap(), 0.0);
        assert_eq!(seminorm_closed_form_sg(&diag, 2).unwrap(), 0.0);
    }

    #[test]
    fn seminorm_hand_enumeration() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_abs_diff_eq!(seminorm_closed_form_sg(&a, 1).unwrap(), FRAC_2_PI.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn seminorm_capacity_guard() {
        let a = DMatrix::zeros(40, 40);
        assert!(matches!(seminorm_closed_form_sg(&a, 20), Err(DlError::Capacity { .. })));
    }

    #[test]
    fn seminorm_empirical_converges_to_closed_form() {
        let (k, s, n) = (6, 2, 1_000_000);
        let model = CoefficientModel::sparse_gaussian(k, s).unwrap();
        let coeffs = sample_coefficients(&model, n, 21).unwrap();
        let a = ones_minus_identity(k);
        let exact = seminorm_closed_form_sg(&a, s).unwrap();
        let mc = seminorm_empirical(&a, &coeffs).unwrap();
        assert!((mc / exact - 1.0).abs() < 0.01, "{mc} vs {exact}");
    }

    #[test]
    fn dual_norm_values() {
        let sg = CoefficientModel::sparse_gaussian(20, 5).unwrap();
        assert_eq!(dual_norm_constant(&sg, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(dual_norm_constant(&sg, 0.1).unwrap(), 0.283_235_277_1, epsilon = 1e-9);
        for k in [3, 8, 20] {
            let sl = CoefficientModel::sparse_laplacian(k, 1).unwrap();
            assert_abs_diff_eq!(dual_norm_constant(&sl, 0.37).unwrap(), 0.37, epsilon = 1e-9);
        }
        let dense = CoefficientModel::sparse_gaussian(5, 5).unwrap();
        assert!(matches!(dual_norm_constant(&dense, 0.1), Err(DlError::Parameter(_))));
    }

    #[test]
    fn sg_dual_norm_agrees_with_enumerated_seminorm() {
        // The supremum defining the dual norm of a constant off-diagonal matrix is
        // attained at A = 11ᵀ − I, so dual = |b| K (K − 1) / |||11ᵀ − I|||.
        for (k, s, mu) in [(6, 2, 0.2), (8, 3, 0.15), (10, 4, 0.05)] {
            let model = CoefficientModel::sparse_gaussian(k, s).unwrap();
            let b = bias_constant(&model, mu).unwrap();
            let via_enum = b.abs() * (k * (k - 1)) as f64 / seminorm_closed_form_sg(&ones_minus_identity(k), s).unwrap();
            assert_abs_diff_eq!(dual_norm_constant(&model, mu).unwrap(), via_enum, epsilon = 1e-12);
        }
    }

    #[test]
    fn sg_dual_norm_bounds_every_ratio() {
        let (k, s, mu) = (6, 2, 0.3);
        let model = CoefficientModel::sparse_gaussian(k, s).unwrap();
        let b = bias_matrix_closed_form(&model, mu).unwrap();
        let dual = dual_norm_constant(&model, mu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..300 {
            let a = random_offdiag(k, &mut rng);
            let ratio = b.matrix().dot(&a) / seminorm_closed_form_sg(&a, s).unwrap();
            assert!(ratio <= dual + 1e-12);
        }
    }

    #[test]
    fn bg_and_sl_dual_norms_match_monte_carlo_seminorm() {
        let n = 400_000;
        let a_ones = ones_minus_identity(5);
        for (model, mu) in [
            (CoefficientModel::bernoulli_gaussian(5, 0.3).unwrap(), 0.2),
            (CoefficientModel::sparse_laplacian(5, 2).unwrap(), 0.25),
        ] {
            let coeffs = sample_coefficients(&model, n, 13).unwrap();
            let b = bias_constant(&model, mu).unwrap();
            let mc = b.abs() * 20.0 / seminorm_empirical(&a_ones, &coeffs).unwrap();
            let exact = dual_norm_constant(&model, mu).unwrap();
            assert!((mc / exact - 1.0).abs() < 0.01, "{}: {mc} vs {exact}", model.label());
        }
    }

    #[test]
    fn bg_dual_norm_above_jensen_value() {
        for k in [2, 5, 10, 20, 40] {
            for p in [0.05, 0.2, 0.5, 0.8, 0.95] {
                for mu in [0.01, 0.1, 0.3, 0.7] {
                    let model = CoefficientModel::bernoulli_gaussian(k, p).unwrap();
                    assert!(dual_norm_constant(&model, mu).unwrap() >= bg_dual_norm_jensen(mu, p, k) - 1e-12);
                }
            }
        }
    }

    #[test]
    fn sg_condition_matches_coherence_boundary() {
        for k in [4, 10, 20, 50] {
            for s in 1..k {
                for step in 0..40 {
                    let mu = step as f64 * 0.025;
                    let model = CoefficientModel::sparse_gaussian(k, s).unwrap();
                    let lhs = dual_norm_constant(&model, mu).unwrap() < 1.0;
                    let rhs = mu * (s as f64).sqrt() < (k - s) as f64 / (k - 1) as f64;
                    assert_eq!(lhs, rhs, "K={k} s={s} mu={mu}");
                }
            }
        }
    }

    #[test]
    fn laplace_integral_values() {
        assert_abs_diff_eq!(laplace_integral(1).unwrap(), 1.0, epsilon = 1e-8);
        // X/(X+Y) ~ Beta(s, s) gives E|X − Y| = 2Γ(s + ½)/(√π Γ(s)); s = 2 → 3/2, s = 3 → 15/8.
        assert_abs_diff_eq!(laplace_integral(2).unwrap(), 1.5, epsilon = 1e-8);
        assert_abs_diff_eq!(laplace_integral(3).unwrap(), 1.875, epsilon = 1e-8);
        for s in 1..=5 {
            assert!(laplace_integral(s + 1).unwrap() > laplace_integral(s).unwrap());
        }
        assert!(laplace_integral(0).is_err());
    }

    #[test]
    fn regularity_constants() {
        assert_eq!(regularity_constant(&CoefficientModel::sparse_gaussian(6, 6).unwrap()).unwrap(), 0.0);
        assert_abs_diff_eq!(
            regularity_constant(&CoefficientModel::sparse_gaussian(20, 10).unwrap()).unwrap(),
            0.209_969_621_3,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            regularity_constant(&CoefficientModel::bernoulli_gaussian(3, 0.5).unwrap()).unwrap(),
            0.199_471_140_2,
            epsilon = 1e-9
        );
        assert!(regularity_constant(&CoefficientModel::sparse_laplacian(6, 2).unwrap()).is_err());
    }

    #[test]
    fn regularity_inequality_random_matrices() {
        let (k, s) = (6, 2);
        let c = regularity_constant(&CoefficientModel::sparse_gaussian(k, s).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let a = random_offdiag(k, &mut rng);
            assert!(seminorm_closed_form_sg(&a, s).unwrap() >= c * a.norm());
        }
    }

    proptest! {
        #[test]
        fn closed_form_seminorm_axioms(
            xs in proptest::collection::vec(-3.0f64..3.0, 25),
            ys in proptest::collection::vec(-3.0f64..3.0, 25),
            lambda in -4.0f64..4.0,
            s in 1usize..5,
        ) {
            let a = DMatrix::from_fn(5, 5, |i, j| if i == j { 0.0 } else { xs[i * 5 + j] });
            let b = DMatrix::from_fn(5, 5, |i, j| if i == j { 0.0 } else { ys[i * 5 + j] });
            let na = seminorm_closed_form_sg(&a, s).unwrap();
            let nb = seminorm_closed_form_sg(&b, s).unwrap();
            let nab = seminorm_closed_form_sg(&(&a + &b), s).unwrap();
            prop_assert!(nab <= na + nb + 1e-12);
            let scaled = seminorm_closed_form_sg(&(&a * lambda), s).unwrap();
            prop_assert!((scaled - lambda.abs() * na).abs() <= 1e-12 * (1.0 + na));
        }
    }

    #[test]
    fn report_examples() {
        let sg = CoefficientModel::sparse_gaussian(20, 5).unwrap();
        let boundary = 15.0 / (19.0 * 5f64.sqrt());
        let r = report(&sg, boundary).unwrap();
        assert_abs_diff_eq!(r.dual_norm, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.sharpness.unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.region_radius.unwrap(), 0.0, epsilon = 1e-12);

        let r = report(&sg, 0.1).unwrap();
        assert!(r.condition);
        assert_abs_diff_eq!(r.spectral_norm_sq, 1.0 + 0.1 * 19.0, epsilon = 1e-9);
        // Sharpness and radius reduce to the explicit sparse Gaussian expressions.
        let margin = 15.0 / 19.0 - 0.1 * 5f64.sqrt();
        let sharp = 5.0 / (std::f64::consts::PI.sqrt() * 2.9 * 20.0) * margin;
        assert_abs_diff_eq!(r.sharpness.unwrap(), sharp, epsilon = 1e-9);
        assert_abs_diff_eq!(r.region_radius.unwrap(), margin / (8.0 * SQRT_2 * 2.9), epsilon = 1e-9);
        assert!(r.sharpness.unwrap() > 0.0 && r.region_radius.unwrap() > 0.0);

        let nn = CoefficientModel::nonneg_sparse_gaussian(20, 10).unwrap();
        let r = report(&nn, 0.6).unwrap();
        assert_abs_diff_eq!(r.dual_norm, 1.9 * (0.6f64 - 9.0 / 19.0).abs(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.dual_norm, 0.24, epsilon = 1e-12);
        assert!(r.condition);
        assert!(r.sharpness.is_none() && r.region_radius.is_none() && r.c_alpha.is_none());

        let bad = report(&sg, 0.5).unwrap();
        assert!(!bad.condition && bad.sharpness.unwrap() < 0.0);
    }

    #[test]
    fn report_serializes_expected_fields() {
        let r = report(&CoefficientModel::bernoulli_gaussian(10, 0.2).unwrap(), 0.1).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in ["dual_norm", "condition", "sharpness", "region_radius", "c_alpha"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
