//! Coefficient distributions and signal generation.
//!
//! Every model draws `αⱼ = ξⱼ zⱼ` with a support indicator `ξ` and a base
//! variable `z`. Exact-sparse models pick a uniformly random support of size
//! `s`; Bernoulli-type models switch each coordinate on independently.

use std::f64::consts::FRAC_2_PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::dictionary::Dictionary;
use crate::error::{shape_err, DlError, Result};
use crate::rng::{self, derive_seed, TAG_NOISE, TAG_SNR_CALIBRATION};

/// Distribution of the base variable `z` in the generic models.
///
/// Each must have a density; that is a documented contract and is not checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseSampler {
    Gaussian,
    Laplace,
    HalfGaussian,
}

impl BaseSampler {
    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            BaseSampler::Gaussian => StandardNormal.sample(rng),
            BaseSampler::HalfGaussian => {
                let z: f64 = StandardNormal.sample(rng);
                z.abs()
            }
            BaseSampler::Laplace => {
                // Inverse CDF of the standard Laplace law on u ∈ (-1/2, 1/2).
                let u: f64 = rng.random::<f64>() - 0.5;
                -u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// `SG(s)`: uniform size-`s` support, standard Gaussian values.
    SparseGaussian { s: usize },
    /// `BG(p)`: each coordinate active with probability `p`, Gaussian values.
    BernoulliGaussian { p: f64 },
    /// `|SG(s)|`: absolute value of a sparse Gaussian vector.
    NonNegSparseGaussian { s: usize },
    /// `SL(s)`: uniform size-`s` support, standard Laplace values.
    SparseLaplacian { s: usize },
    /// Bernoulli-type model with per-coordinate activation probabilities.
    BernoulliType { probs: Vec<f64>, base: BaseSampler },
    /// Exact-sparse model with an arbitrary base sampler.
    ExactSparse { s: usize, base: BaseSampler },
}

/// A coefficient distribution on `ℝ^K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientModel {
    pub kind: ModelKind,
    pub dim: usize,
}

impl CoefficientModel {
    pub fn new(kind: ModelKind, dim: usize) -> Result<Self> {
        let model = Self { kind, dim };
        model.validate()?;
        Ok(model)
    }

    pub fn sparse_gaussian(dim: usize, s: usize) -> Result<Self> {
        Self::new(ModelKind::SparseGaussian { s }, dim)
    }

    pub fn bernoulli_gaussian(dim: usize, p: f64) -> Result<Self> {
        Self::new(ModelKind::BernoulliGaussian { p }, dim)
    }

    pub fn nonneg_sparse_gaussian(dim: usize, s: usize) -> Result<Self> {
        Self::new(ModelKind::NonNegSparseGaussian { s }, dim)
    }

    pub fn sparse_laplacian(dim: usize, s: usize) -> Result<Self> {
        Self::new(ModelKind::SparseLaplacian { s }, dim)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.dim;
        if k == 0 {
            return Err(DlError::Parameter("dimension must be positive".into()));
        }
        let check_s = |s: usize| {
            if s == 0 || s > k {
                Err(DlError::Parameter(format!("sparsity {s} outside 1..={k}")))
            } else {
                Ok(())
            }
        };
        let check_p = |p: f64| {
            if p > 0.0 && p < 1.0 {
                Ok(())
            } else {
                Err(DlError::Parameter(format!("probability {p} outside (0, 1)")))
            }
        };
        match &self.kind {
            ModelKind::SparseGaussian { s }
            | ModelKind::NonNegSparseGaussian { s }
            | ModelKind::SparseLaplacian { s }
            | ModelKind::ExactSparse { s, .. } => check_s(*s),
            ModelKind::BernoulliGaussian { p } => check_p(*p),
            ModelKind::BernoulliType { probs, .. } => {
                if probs.len() != k {
                    return Err(shape_err(format!("{k} probabilities"), format!("{}", probs.len())));
                }
                probs.iter().try_for_each(|&p| check_p(p))
            }
        }
    }

    /// Support size for the exact-sparse kinds.
    pub fn sparsity(&self) -> Option<usize> {
        match self.kind {
            ModelKind::SparseGaussian { s }
            | ModelKind::NonNegSparseGaussian { s }
            | ModelKind::SparseLaplacian { s }
            | ModelKind::ExactSparse { s, .. } => Some(s),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            ModelKind::SparseGaussian { s } => format!("SG(s={s})"),
            ModelKind::BernoulliGaussian { p } => format!("BG(p={p})"),
            ModelKind::NonNegSparseGaussian { s } => format!("|SG|(s={s})"),
            ModelKind::SparseLaplacian { s } => format!("SL(s={s})"),
            ModelKind::BernoulliType { base, .. } => format!("Bernoulli-type({base:?})"),
            ModelKind::ExactSparse { s, base } => format!("exact-sparse(s={s}, {base:?})"),
        }
    }

    fn draw_row<R: Rng + ?Sized>(&self, rng: &mut R, row: &mut [f64], scratch: &mut Vec<usize>) {
        row.iter_mut().for_each(|v| *v = 0.0);
        let exact = |s: usize, base: BaseSampler, rng: &mut R, row: &mut [f64], scratch: &mut Vec<usize>| {
            // Partial Fisher-Yates: the first `s` slots form a uniform size-s subset.
            scratch.clear();
            scratch.extend(0..row.len());
            for i in 0..s {
                let j = rng.random_range(i..scratch.len());
                scratch.swap(i, j);
                row[scratch[i]] = base.draw(rng);
            }
        };
        match &self.kind {
            ModelKind::SparseGaussian { s } => exact(*s, BaseSampler::Gaussian, rng, row, scratch),
            ModelKind::NonNegSparseGaussian { s } => exact(*s, BaseSampler::HalfGaussian, rng, row, scratch),
            ModelKind::SparseLaplacian { s } => exact(*s, BaseSampler::Laplace, rng, row, scratch),
            ModelKind::ExactSparse { s, base } => exact(*s, *base, rng, row, scratch),
            ModelKind::BernoulliGaussian { p } => {
                for v in row.iter_mut() {
                    let on = rng.random::<f64>() < *p;
                    let z: f64 = StandardNormal.sample(rng);
                    if on {
                        *v = z;
                    }
                }
            }
            ModelKind::BernoulliType { probs, base } => {
                for (v, &p) in row.iter_mut().zip(probs) {
                    let on = rng.random::<f64>() < p;
                    let z = base.draw(rng);
                    if on {
                        *v = z;
                    }
                }
            }
        }
    }
}

/// Draws `n` i.i.d. coefficient vectors as the rows of an n×K matrix.
///
/// Row `i` consumes stream `i` of `seed`, so the output does not depend on
/// how rows are scheduled.
pub fn sample_coefficients(model: &CoefficientModel, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    model.validate()?;
    let k = model.dim;
    let mut out = DMatrix::zeros(n, k);
    let mut row = vec![0.0; k];
    let mut scratch = Vec::with_capacity(k);
    for i in 0..n {
        let mut r = rng::stream(seed, i as u64);
        model.draw_row(&mut r, &mut row, &mut scratch);
        for (j, &v) in row.iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// `maxⱼ E|αⱼ|` for the models with a closed form.
///
/// SG and |SG|: `√(2/π)·s/K`. BG: `p·√(2/π)`. SL: `s/K` (a standard Laplace
/// variable has mean absolute value 1).
pub fn expected_abs_coef(model: &CoefficientModel) -> Result<f64> {
    model.validate()?;
    let k = model.dim as f64;
    let gauss = FRAC_2_PI.sqrt();
    match model.kind {
        ModelKind::SparseGaussian { s } | ModelKind::NonNegSparseGaussian { s } => Ok(gauss * s as f64 / k),
        ModelKind::BernoulliGaussian { p } => Ok(p * gauss),
        ModelKind::SparseLaplacian { s } => Ok(s as f64 / k),
        _ => Err(DlError::UnsupportedModel {
            operation: "expected_abs_coef",
            model: model.label(),
        }),
    }
}

/// Two-dimensional mixture model for which the identity dictionary is a sharp
/// local minimum but not the global minimum of the l1 objective.
///
/// `αᵢ = ξᵢ zᵢ` with `ξᵢ ~ Bernoulli(0.67)` and `z` an equal-weight mixture of
/// `N(0, [[101, -99], [-99, 101]])` and `N(0, [[101, 99], [99, 101]])`.
pub fn sample_counterexample(n: usize, seed: u64) -> DMatrix<f64> {
    const ACTIVE: f64 = 0.67;
    const VAR: f64 = 101.0;
    const COV: f64 = 99.0;
    // Cholesky factor of [[VAR, ±COV], [±COV, VAR]].
    let l11 = VAR.sqrt();
    let l21 = COV / l11;
    let l22 = (VAR - l21 * l21).sqrt();

    let mut out = DMatrix::zeros(n, 2);
    for i in 0..n {
        let mut r = rng::stream(seed, i as u64);
        let sign = if r.random::<bool>() { 1.0 } else { -1.0 };
        let g1: f64 = StandardNormal.sample(&mut r);
        let g2: f64 = StandardNormal.sample(&mut r);
        let z = [l11 * g1, sign * l21 * g1 + l22 * g2];
        for (j, zj) in z.into_iter().enumerate() {
            if r.random::<f64>() < ACTIVE {
                out[(i, j)] = zj;
            }
        }
    }
    out
}

/// Generated signals `y⁽ⁱ⁾ = D*α⁽ⁱ⁾ + ε⁽ⁱ⁾` with the coefficients kept for oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSet {
    /// n×K, one signal per row.
    pub signals: DMatrix<f64>,
    /// n×K, the generating coefficients.
    pub coefficients: DMatrix<f64>,
    pub seed: u64,
    /// `f64::INFINITY` for noiseless data.
    pub snr: f64,
    /// Standard deviation of each noise coordinate (0 when noiseless).
    pub noise_sigma: f64,
}

/// JSON sidecar describing how a [`SignalSet`] was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalMetadata {
    pub n: usize,
    pub dim: usize,
    pub seed: u64,
    /// `None` means noiseless (infinite SNR).
    pub snr: Option<f64>,
    pub noise_sigma: f64,
    pub model: Option<CoefficientModel>,
}

impl SignalSet {
    pub fn metadata(&self, model: Option<&CoefficientModel>) -> SignalMetadata {
        SignalMetadata {
            n: self.signals.nrows(),
            dim: self.signals.ncols(),
            seed: self.seed,
            snr: self.snr.is_finite().then_some(self.snr),
            noise_sigma: self.noise_sigma,
            model: model.cloned(),
        }
    }
}

/// Mean of the chi distribution with `k` degrees of freedom, i.e. `E‖g‖₂` for
/// a standard Gaussian vector `g ∈ ℝ^k`.
pub fn chi_mean(k: usize) -> f64 {
    let k = k as f64;
    std::f64::consts::SQRT_2 * (ln_gamma((k + 1.0) / 2.0) - ln_gamma(k / 2.0)).exp()
}

/// Number of model draws used to estimate `E‖D*α‖₂` when calibrating noise.
pub const SNR_CALIBRATION_SAMPLES: usize = 10_000;

/// Estimates `E‖D*α‖₂` by Monte Carlo with a fixed internal seed.
pub fn mean_signal_norm(dict: &Dictionary, model: &CoefficientModel) -> Result<f64> {
    if model.dim != dict.dim() {
        return Err(shape_err(format!("model dimension {}", dict.dim()), format!("{}", model.dim)));
    }
    let coeffs = sample_coefficients(model, SNR_CALIBRATION_SAMPLES, TAG_SNR_CALIBRATION)?;
    Ok(mean_row_norm(&(coeffs * dict.matrix().transpose())))
}

fn mean_row_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.row_iter().map(|r| r.norm()).sum::<f64>() / m.nrows() as f64
}

/// Forms `y⁽ⁱ⁾ = D*α⁽ⁱ⁾ + ε⁽ⁱ⁾` from n×K `coeffs`.
///
/// The noise is isotropic Gaussian scaled so that `E‖D*α‖₂ / E‖ε‖₂ = snr`.
/// `E‖D*α‖₂` comes from [`mean_signal_norm`] when `model` is given and from the
/// supplied coefficients otherwise. `snr = ∞` gives noiseless signals.
pub fn generate_signals(
    dict: &Dictionary,
    coeffs: &DMatrix<f64>,
    snr: f64,
    model: Option<&CoefficientModel>,
    seed: u64,
) -> Result<SignalSet> {
    let k = dict.dim();
    if coeffs.ncols() != k {
        return Err(shape_err(format!("{k} coefficient columns"), format!("{}", coeffs.ncols())));
    }
    if !(snr > 0.0) {
        return Err(DlError::Parameter(format!("snr must be positive, got {snr}")));
    }
    let clean = coeffs * dict.matrix().transpose();
    if snr.is_infinite() {
        return Ok(SignalSet {
            signals: clean,
            coefficients: coeffs.clone(),
            seed,
            snr,
            noise_sigma: 0.0,
        });
    }
    let signal_norm = match model {
        Some(m) => mean_signal_norm(dict, m)?,
        None => mean_row_norm(&clean),
    };
    let sigma = signal_norm / (snr * chi_mean(k));
    let noise_seed = derive_seed(seed, &[TAG_NOISE]);
    let mut signals = clean;
    for i in 0..signals.nrows() {
        let mut r = rng::stream(noise_seed, i as u64);
        for j in 0..k {
            let e: f64 = StandardNormal.sample(&mut r);
            signals[(i, j)] += sigma * e;
        }
    }
    Ok(SignalSet {
        signals,
        coefficients: coeffs.clone(),
        seed,
        snr,
        noise_sigma: sigma,
    })
}
