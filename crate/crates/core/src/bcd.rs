//! DL-BCD: block coordinate descent on the rows of `Q = D⁻¹`.
//!
//! Row `k` of `Q` is replaced by `wᵀQ` and every other row `h` is scaled by
//! `√((wₕ − Mₖₕ)² + 1 − Mₖₕ²)`, which keeps the columns of `Q⁻¹` at unit norm.
//! The weight vector `w` minimizes the τ-truncated subproblem, so the
//! truncated objective `Σᵢ Σⱼ min(|(Qyᵢ)ⱼ|, τ)` never increases.

use nalgebra::DMatrix;
use rand::seq::index;
use serde::Serialize;

use crate::dictionary::{nmse, Dictionary};
use crate::error::{shape_err, DlError, Result};
use crate::rng::{derive_seed, stream, TAG_INIT};
use crate::subproblem::{solve, SolverOptions, SubproblemData, COLLINEARITY_GAP};

/// Starting dictionary.
#[derive(Debug, Clone, Default)]
pub enum Init {
    Given(Dictionary),
    /// Normalized i.i.d. Gaussian columns.
    #[default]
    RandomGaussian,
    /// K distinct signals, normalized.
    SignalColumns,
}

#[derive(Debug, Clone)]
pub struct BcdConfig {
    /// Truncation threshold; `f64::INFINITY` disables truncation.
    pub tau: f64,
    pub max_sweeps: usize,
    pub solver: SolverOptions,
    /// Stop once a sweep lowers the objective by less than this fraction.
    pub stop_rel_tol: f64,
    pub init: Init,
    pub seed: u64,
    /// Also record the objective after every coordinate update.
    pub record_coordinates: bool,
}

impl Default for BcdConfig {
    fn default() -> Self {
        Self {
            tau: f64::INFINITY,
            max_sweeps: 100,
            solver: SolverOptions::default(),
            stop_rel_tol: 1e-10,
            init: Init::default(),
            seed: 0,
            record_coordinates: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BcdTrace {
    pub initial_objective: f64,
    /// Truncated objective after each full sweep.
    pub objective_per_sweep: Vec<f64>,
    /// NMSE against the reference after each sweep, when one was given.
    pub nmse_per_sweep: Vec<f64>,
    /// Truncated objective after each coordinate update, when requested.
    pub objective_per_coordinate: Vec<f64>,
    pub sweeps_run: usize,
    /// Subproblem solves that hit the iteration limit.
    pub unconverged_solves: usize,
}

/// `Σᵢ Σⱼ min(|(D⁻¹yᵢ)ⱼ|, τ)` for n×K `signals`.
pub fn truncated_objective(dict: &Dictionary, signals: &DMatrix<f64>, tau: f64) -> Result<f64> {
    let beta = dict.coefficients(signals)?;
    Ok(beta.iter().map(|v| v.abs().min(tau)).sum())
}

/// Applies the row update for coordinate `k` with weights `w` to `q = dict⁻¹`.
pub fn row_update_matrix(q: &DMatrix<f64>, dict: &Dictionary, k: usize, w: &[f64]) -> Result<DMatrix<f64>> {
    let dim = dict.dim();
    if q.shape() != (dim, dim) {
        return Err(shape_err(format!("{dim}x{dim}"), format!("{}x{}", q.nrows(), q.ncols())));
    }
    if k >= dim || w.len() != dim {
        return Err(DlError::Parameter(format!("coordinate {k} or weights of length {} invalid for K = {dim}", w.len())));
    }
    if w[k] != 1.0 {
        return Err(DlError::Contract(format!("w[{k}] must equal 1, got {}", w[k])));
    }
    let m = dict.collinearity();
    let limit = 1.0 - COLLINEARITY_GAP;
    let mut out = q.clone();
    let new_row = DMatrix::from_row_slice(1, dim, w) * q;
    for h in 0..dim {
        if h == k {
            out.row_mut(k).copy_from(&new_row);
        } else {
            let mkh = m.matrix()[(k, h)].clamp(-limit, limit);
            let scale = ((w[h] - mkh).powi(2) + 1.0 - mkh * mkh).sqrt();
            out.row_mut(h).scale_mut(scale);
        }
    }
    Ok(out)
}

fn initial_dictionary(signals: &DMatrix<f64>, config: &BcdConfig) -> Result<Dictionary> {
    let dim = signals.ncols();
    let seed = derive_seed(config.seed, &[TAG_INIT]);
    match &config.init {
        Init::Given(d) => {
            if d.dim() != dim {
                return Err(shape_err(format!("{dim}x{dim} initial dictionary"), format!("{0}x{0}", d.dim())));
            }
            Ok(d.clone())
        }
        Init::RandomGaussian => Dictionary::random_gaussian(dim, seed),
        Init::SignalColumns => {
            if signals.nrows() < dim {
                return Err(DlError::Parameter(format!("need at least {dim} signals for signal-column init")));
            }
            let mut rng = stream(seed, 0);
            let rows = index::sample(&mut rng, signals.nrows(), dim);
            let m = DMatrix::from_fn(dim, dim, |i, j| signals[(rows.index(j), i)]);
            Dictionary::new(m)
        }
    }
}

/// Runs DL-BCD on n×K `signals` (one signal per row).
///
/// Coordinates are visited in ascending order. Stops after `max_sweeps` or
/// once a sweep's relative decrease falls below `stop_rel_tol`. A rank
/// failure mid-run aborts with the objective trace so far.
pub fn run(signals: &DMatrix<f64>, config: &BcdConfig, reference: Option<&Dictionary>) -> Result<(Dictionary, BcdTrace)> {
    let (n, dim) = signals.shape();
    if n == 0 || dim == 0 {
        return Err(DlError::Parameter("DL-BCD needs a non-empty signal matrix".into()));
    }
    if !(config.tau > 0.0) {
        return Err(DlError::Parameter(format!("tau must be positive, got {}", config.tau)));
    }
    if config.max_sweeps == 0 {
        return Err(DlError::Parameter("max_sweeps must be at least 1".into()));
    }
    if let Some(r) = reference {
        if r.dim() != dim {
            return Err(shape_err(format!("{dim}x{dim} reference"), format!("{0}x{0}", r.dim())));
        }
    }

    let mut dict = initial_dictionary(signals, config)?;
    let mut trace = BcdTrace {
        initial_objective: truncated_objective(&dict, signals, config.tau)?,
        ..Default::default()
    };
    let mut previous = trace.initial_objective;

    for sweep in 0..config.max_sweeps {
        for k in 0..dim {
            let beta = dict.coefficients(signals)?;
            let gram = dict.collinearity();
            let m_row: Vec<f64> = gram.matrix().row(k).iter().copied().collect();
            let data = SubproblemData::truncated(&beta, k, &m_row, config.tau)?;
            let result = solve(&data, &data.unit(), &config.solver)?;
            if !result.converged {
                trace.unconverged_solves += 1;
            }
            let q = row_update_matrix(dict.inverse(), &dict, k, result.w.as_slice())?;
            let next = q
                .try_inverse()
                .ok_or_else(|| DlError::Numeric("row update produced a singular matrix".into()))
                .and_then(Dictionary::new);
            dict = match next {
                Ok(d) => d,
                Err(source) => {
                    return Err(DlError::BcdAborted {
                        sweep,
                        coordinate: k,
                        source: Box::new(source),
                        objective_per_sweep: trace.objective_per_sweep,
                    })
                }
            };
            if config.record_coordinates {
                trace.objective_per_coordinate.push(truncated_objective(&dict, signals, config.tau)?);
            }
        }
        let f = truncated_objective(&dict, signals, config.tau)?;
        trace.objective_per_sweep.push(f);
        if let Some(r) = reference {
            trace.nmse_per_sweep.push(nmse(&dict, r)?);
        }
        trace.sweeps_run = sweep + 1;
        let decrease = previous - f;
        if previous == 0.0 || decrease < config.stop_rel_tol * previous {
            break;
        }
        previous = f;
    }
    Ok((dict, trace))
}
