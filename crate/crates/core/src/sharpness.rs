//! Perturbation test for whether a dictionary is a sharp local minimum of the
//! empirical l1 objective.
//!
//! A dictionary is a sharp local minimum exactly when, for a small enough
//! perturbation `M̃` of its collinearity matrix, every per-coordinate
//! subproblem is still minimized at `eₖ`. The test perturbs the columns with
//! Gaussian noise, solves the K subproblems and reports the largest squared
//! distance of a minimizer from its canonical vector.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{shape_err, DlError, Result};
use crate::rng::{derive_seed, stream, TAG_PERTURB};
use crate::subproblem::{solve, SolverOptions, SubproblemData, COLLINEARITY_GAP};

/// How the perturbation level `ρ` maps to the column noise `εⱼ ~ N(0, σ²I)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// `σ² = ρ²/K`, so `E‖εⱼ‖² = ρ²` and collinearities move by `O(ρ)`.
    #[default]
    ColumnNorm,
    /// `σ² = ρ`: each column is perturbed with covariance `ρI`.
    Covariance,
}

impl Perturbation {
    /// Per-entry standard deviation for level `rho` in dimension `dim`.
    pub fn entry_sd(self, rho: f64, dim: usize) -> f64 {
        match self {
            Perturbation::ColumnNorm => rho / (dim as f64).sqrt(),
            Perturbation::Covariance => rho.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharpTestConfig {
    /// Perturbation level.
    pub rho: f64,
    pub perturbation: Perturbation,
    /// Largest squared distance still declared sharp.
    pub threshold: f64,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for SharpTestConfig {
    fn default() -> Self {
        Self {
            rho: 0.01,
            perturbation: Perturbation::default(),
            threshold: 1e-6,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

impl SharpTestConfig {
    fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(DlError::Parameter(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.threshold > 0.0) {
            return Err(DlError::Parameter(format!("threshold must be positive, got {}", self.threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharpTestReport {
    /// `Some(r < T)` when every subproblem converged, `None` otherwise.
    pub is_sharp: Option<bool>,
    /// Largest entry of `per_coordinate`.
    pub r: f64,
    /// `‖w⁽ᵏ⁾ − eₖ‖²` for each coordinate.
    pub per_coordinate: Vec<f64>,
    /// Whether each subproblem solve converged.
    pub converged: Vec<bool>,
    pub rho: f64,
    pub perturbation: Perturbation,
    #[serde(rename = "T")]
    pub threshold: f64,
    pub seed: u64,
    #[serde(skip)]
    pub perturbed_gram: DMatrix<f64>,
}

/// Gram matrix of `Dⱼ + εⱼ` with `εⱼ ~ N(0, σ²I)`, `σ` given by `perturbation`,
/// off-diagonal entries clamped to `|·| ≤ 1 − 10⁻⁹` and the diagonal set to 1.
///
/// Perturbed columns are not renormalized. Column `j` draws its noise from its
/// own stream, so the result depends only on the arguments.
pub fn perturb_gram(dict: &Dictionary, rho: f64, perturbation: Perturbation, seed: u64) -> DMatrix<f64> {
    let k = dict.dim();
    let sd = perturbation.entry_sd(rho, k);
    let base = derive_seed(seed, &[TAG_PERTURB]);
    let mut perturbed = dict.matrix().clone();
    for j in 0..k {
        let mut rng = stream(base, j as u64);
        for i in 0..k {
            let e: f64 = StandardNormal.sample(&mut rng);
            perturbed[(i, j)] += sd * e;
        }
    }
    let limit = 1.0 - COLLINEARITY_GAP;
    let mut gram = perturbed.tr_mul(&perturbed);
    for a in 0..k {
        for b in 0..k {
            gram[(a, b)] = if a == b { 1.0 } else { gram[(a, b)].clamp(-limit, limit) };
        }
    }
    gram
}

/// Runs the sharpness test on n×K `signals` (one signal per row).
pub fn sharp_test(dict: &Dictionary, signals: &DMatrix<f64>, config: &SharpTestConfig) -> Result<SharpTestReport> {
    config.validate()?;
    let k = dict.dim();
    if signals.ncols() != k {
        return Err(shape_err(format!("signals with {k} columns"), format!("{} columns", signals.ncols())));
    }
    let beta = dict.coefficients(signals)?;
    let gram = perturb_gram(dict, config.rho, config.perturbation, config.seed);
    let results: Vec<(f64, bool)> = (0..k)
        .into_par_iter()
        .map(|coord| {
            let row: Vec<f64> = gram.row(coord).iter().copied().collect();
            let data = SubproblemData::new(&beta, coord, &row)?;
            let unit = data.unit();
            let res = solve(&data, &unit, &config.solver)?;
            Ok(((res.w - unit).norm_squared(), res.converged))
        })
        .collect::<Result<_>>()?;
    let per_coordinate: Vec<f64> = results.iter().map(|r| r.0).collect();
    let converged: Vec<bool> = results.iter().map(|r| r.1).collect();
    let r = per_coordinate.iter().copied().fold(0.0, f64::max);
    let is_sharp = converged.iter().all(|c| *c).then_some(r < config.threshold);
    Ok(SharpTestReport {
        is_sharp,
        r,
        per_coordinate,
        converged,
        rho: config.rho,
        perturbation: config.perturbation,
        threshold: config.threshold,
        seed: config.seed,
        perturbed_gram: gram,
    })
}
