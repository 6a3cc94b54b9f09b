//! Simulation drivers: ρ-sensitivity, sample size, recovery phase diagram,
//! running time and the two-dimensional counter-example.
//!
//! Every trial derives its own seed from the master seed and its grid
//! coordinates, so results do not depend on scheduling and tables come out
//! sorted by grid coordinates.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::bcd::{self, BcdConfig};
use crate::coeff_models::{generate_signals, sample_coefficients, sample_counterexample, CoefficientModel};
use crate::dictionary::{nmse, Dictionary};
use crate::error::{DlError, Result};
use crate::io::{Cell, Table};
use crate::rng::derive_seed;
use crate::sharpness::{sharp_test, Perturbation, SharpTestConfig, SharpTestReport};

/// NMSE below which a run counts as a successful recovery.
pub const RECOVERY_THRESHOLD: f64 = 0.01;

/// `((K−s)/(K−1) + offset)/√s`; offset 0 is the sparse Gaussian sharpness boundary.
pub fn boundary_mu(dim: usize, s: usize, offset: f64) -> f64 {
    ((dim - s) as f64 / (dim - 1) as f64 + offset) / (s as f64).sqrt()
}

/// Noiseless signals from a constant-collinearity reference.
pub fn constant_collinearity_signals(model: &CoefficientModel, mu: f64, n: usize, seed: u64) -> Result<(Dictionary, DMatrix<f64>)> {
    let dict = Dictionary::constant_collinearity(model.dim, mu)?;
    let coeffs = sample_coefficients(model, n, derive_seed(seed, &[1]))?;
    let set = generate_signals(&dict, &coeffs, f64::INFINITY, Some(model), derive_seed(seed, &[2]))?;
    Ok((dict, set.signals))
}

fn nonempty<T>(items: &[T], what: &str) -> Result<()> {
    if items.is_empty() {
        return Err(DlError::Parameter(format!("{what} grid is empty")));
    }
    Ok(())
}

fn positive(count: usize, what: &str) -> Result<()> {
    if count == 0 {
        return Err(DlError::Parameter(format!("{what} must be at least 1")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SharpnessSweepConfig {
    pub dim: usize,
    pub sparsity: usize,
    pub n: usize,
    pub mu: f64,
    pub rhos: Vec<f64>,
    pub seeds: usize,
    pub threshold: f64,
    pub perturbation: Perturbation,
    pub master_seed: u64,
}

impl Default for SharpnessSweepConfig {
    fn default() -> Self {
        Self {
            dim: 20,
            sparsity: 10,
            n: 1600,
            mu: boundary_mu(20, 10, -0.2),
            rhos: vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3],
            seeds: 20,
            threshold: 1e-6,
            perturbation: Perturbation::default(),
            master_seed: 0,
        }
    }
}

/// Runs the sharpness test for every (ρ, trial) pair on fresh noiseless SG data.
///
/// Columns: `rho, trial, seed, r, is_sharp` (empty `is_sharp` when a solve did not converge).
pub fn sharpness_sweep(cfg: &SharpnessSweepConfig) -> Result<Table> {
    nonempty(&cfg.rhos, "rho")?;
    positive(cfg.seeds, "seeds")?;
    let model = CoefficientModel::sparse_gaussian(cfg.dim, cfg.sparsity)?;
    let jobs: Vec<(usize, usize)> = (0..cfg.rhos.len()).flat_map(|i| (0..cfg.seeds).map(move |t| (i, t))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(i, trial)| {
            let seed = derive_seed(cfg.master_seed, &[i as u64, trial as u64]);
            let (dict, signals) = constant_collinearity_signals(&model, cfg.mu, cfg.n, seed)?;
            let test = SharpTestConfig {
                rho: cfg.rhos[i],
                perturbation: cfg.perturbation,
                threshold: cfg.threshold,
                seed: derive_seed(seed, &[3]),
                ..Default::default()
            };
            let report = sharp_test(&dict, &signals, &test)?;
            Ok(vec![cfg.rhos[i].into(), trial.into(), seed.into(), report.r.into(), report.is_sharp.into()])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(["rho", "trial", "seed", "r", "is_sharp"]);
    rows.into_iter().for_each(|r| table.push(r));
    Ok(table)
}

/// Maximum-likelihood logistic regression `P(y) = 1/(1 + e^{−(b₀ + b₁x)})`.
///
/// Newton iterations (at most 50) with step halving, started from a curve that
/// crosses 1/2 where the empirical success fraction does. Returns `None` when
/// all outcomes are equal.
pub fn fit_logistic(xs: &[f64], ys: &[bool]) -> Option<(f64, f64)> {
    assert_eq!(xs.len(), ys.len());
    let successes = ys.iter().filter(|y| **y).count();
    if successes == 0 || successes == ys.len() {
        return None;
    }
    // Work on standardized x for conditioning.
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd == 0.0 {
        return None;
    }
    let z: Vec<f64> = xs.iter().map(|x| (x - mean) / sd).collect();
    let loglik = |b: &[f64; 2]| -> f64 {
        z.iter()
            .zip(ys)
            .map(|(zi, yi)| {
                let eta = b[0] + b[1] * zi;
                // log σ(η) and log(1 − σ(η)) computed stably.
                let log1pexp = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
                if *yi {
                    eta - log1pexp
                } else {
                    -log1pexp
                }
            })
            .sum()
    };
    // Start: unit slope in standardized units, crossing at the empirical median split.
    let mut pairs: Vec<(f64, bool)> = z.iter().copied().zip(ys.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cum = 0usize;
    let mut cross = pairs[pairs.len() / 2].0;
    for (i, (zi, yi)) in pairs.iter().enumerate() {
        cum += usize::from(*yi);
        let frac_fail_left = (i + 1 - cum) as f64 / (i + 1) as f64;
        if frac_fail_left <= 0.5 {
            cross = *zi;
            break;
        }
    }
    let mut b = [-cross, 1.0];
    let mut ll = loglik(&b);
    for _ in 0..50 {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (zi, yi) in z.iter().zip(ys) {
            let p = 1.0 / (1.0 + (-(b[0] + b[1] * zi)).exp());
            let r = f64::from(u8::from(*yi)) - p;
            let w = p * (1.0 - p);
            g0 += r;
            g1 += r * zi;
            h00 += w;
            h01 += w * zi;
            h11 += w * zi * zi;
        }
        let det = h00 * h11 - h01 * h01;
        if !(det > 1e-300) {
            break;
        }
        let step = [(h11 * g0 - h01 * g1) / det, (h00 * g1 - h01 * g0) / det];
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand = [b[0] + t * step[0], b[1] + t * step[1]];
            let lc = loglik(&cand);
            if lc >= ll {
                improved = lc - ll > 1e-12 * (1.0 + ll.abs());
                b = cand;
                ll = lc;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    // Back to the original x scale.
    let slope = b[1] / sd;
    Some((b[0] - slope * mean, slope))
}

#[derive(Debug, Clone)]
pub struct SampleSizeConfig {
    pub dims: Vec<usize>,
    pub ns: Vec<usize>,
    pub sparsity: usize,
    pub mu: f64,
    pub rho: f64,
    pub threshold: f64,
    pub perturbation: Perturbation,
    pub seeds: usize,
    pub master_seed: u64,
}

impl Default for SampleSizeConfig {
    fn default() -> Self {
        Self {
            dims: vec![12, 16, 20],
            ns: vec![50, 100, 150, 200, 250, 300, 400, 500, 600, 800],
            sparsity: 5,
            mu: 0.5,
            rho: 0.01,
            threshold: 1e-6,
            perturbation: Perturbation::default(),
            seeds: 20,
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub dim: usize,
    pub intercept: Option<f64>,
    pub slope: Option<f64>,
    /// Sample size with fitted success probability 1/2.
    pub n50: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SampleSizeResult {
    /// `dim, n, trial, seed, r, is_sharp`
    pub trials: Table,
    /// `dim, n, sharp_fraction`
    pub summary: Table,
    pub fits: Vec<LogisticFit>,
}

impl SampleSizeResult {
    /// `dim, intercept, slope, n50`
    pub fn fit_table(&self) -> Table {
        let mut t = Table::new(["dim", "intercept", "slope", "n50"]);
        for f in &self.fits {
            t.push(vec![f.dim.into(), f.intercept.into(), f.slope.into(), f.n50.into()]);
        }
        t
    }
}

/// Fraction of sharp verdicts per (K, n) and the fitted 50% sample size per K.
pub fn sample_size(cfg: &SampleSizeConfig) -> Result<SampleSizeResult> {
    nonempty(&cfg.dims, "dimension")?;
    nonempty(&cfg.ns, "sample size")?;
    positive(cfg.seeds, "seeds")?;
    let jobs: Vec<(usize, usize, usize)> = cfg
        .dims
        .iter()
        .flat_map(|&k| cfg.ns.iter().flat_map(move |&n| (0..cfg.seeds).map(move |t| (k, n, t))))
        .collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(k, n, trial)| {
            let model = CoefficientModel::sparse_gaussian(k, cfg.sparsity)?;
            let seed = derive_seed(cfg.master_seed, &[k as u64, n as u64, trial as u64]);
            let (dict, signals) = constant_collinearity_signals(&model, cfg.mu, n, seed)?;
            let test = SharpTestConfig {
                rho: cfg.rho,
                perturbation: cfg.perturbation,
                threshold: cfg.threshold,
                seed: derive_seed(seed, &[3]),
                ..Default::default()
            };
            let report = sharp_test(&dict, &signals, &test)?;
            Ok((seed, report))
        })
        .collect::<Result<Vec<(u64, SharpTestReport)>>>()?;

    let mut trials = Table::new(["dim", "n", "trial", "seed", "r", "is_sharp"]);
    let mut summary = Table::new(["dim", "n", "sharp_fraction"]);
    let mut fits = Vec::new();
    let mut it = jobs.iter().zip(&outcomes);
    for &k in &cfg.dims {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &n in &cfg.ns {
            let mut sharp = 0;
            for _ in 0..cfg.seeds {
                let (&(_, _, trial), (seed, report)) = it.next().expect("one outcome per job");
                trials.push(vec![k.into(), n.into(), trial.into(), (*seed).into(), report.r.into(), report.is_sharp.into()]);
                let y = report.is_sharp == Some(true);
                sharp += usize::from(y);
                xs.push(n as f64);
                ys.push(y);
            }
            summary.push(vec![k.into(), n.into(), (sharp as f64 / cfg.seeds as f64).into()]);
        }
        let fit = fit_logistic(&xs, &ys);
        let n50 = fit.and_then(|(b0, b1)| (b1 != 0.0).then(|| -b0 / b1)).filter(|v| v.is_finite());
        fits.push(LogisticFit { dim: k, intercept: fit.map(|f| f.0), slope: fit.map(|f| f.1), n50 });
    }
    Ok(SampleSizeResult { trials, summary, fits })
}

#[derive(Debug, Clone)]
pub struct PhaseDiagramConfig {
    pub dims: Vec<usize>,
    /// Sparsities to try; `None` means `2..=K` for each K.
    pub sparsities: Option<Vec<usize>>,
    /// n = samples_per_dim · K.
    pub samples_per_dim: usize,
    pub snr: f64,
    pub taus: Vec<f64>,
    pub trials: usize,
    pub max_sweeps: usize,
    pub master_seed: u64,
}

impl Default for PhaseDiagramConfig {
    fn default() -> Self {
        Self {
            dims: (2..=20).collect(),
            sparsities: None,
            samples_per_dim: 100,
            snr: 100.0,
            taus: vec![0.5],
            trials: 20,
            max_sweeps: 100,
            master_seed: 0,
        }
    }
}

pub fn algorithm_label(tau: f64) -> String {
    if tau.is_finite() {
        format!("dl-bcd(tau={tau})")
    } else {
        "dl-bcd(tau=inf)".to_owned()
    }
}

#[derive(Debug, Clone)]
pub struct PhaseDiagramResult {
    /// `dim, s, algorithm, trial, seed, nmse, success`
    pub trials: Table,
    /// `dim, s, algorithm, recovery_rate`
    pub summary: Table,
}

/// One DL-BCD recovery trial: random Gaussian reference, SG(s) coefficients,
/// noisy signals at the given SNR, random initialization. Returns the NMSE.
pub fn recovery_trial(dim: usize, s: usize, n: usize, snr: f64, tau: f64, max_sweeps: usize, seed: u64) -> Result<f64> {
    let model = CoefficientModel::sparse_gaussian(dim, s)?;
    let reference = Dictionary::random_gaussian(dim, derive_seed(seed, &[1]))?;
    let coeffs = sample_coefficients(&model, n, derive_seed(seed, &[2]))?;
    let set = generate_signals(&reference, &coeffs, snr, Some(&model), derive_seed(seed, &[3]))?;
    let config = BcdConfig { tau, max_sweeps, seed: derive_seed(seed, &[4]), ..Default::default() };
    let (dict, _) = bcd::run(&set.signals, &config, None)?;
    nmse(&dict, &reference)
}

/// Recovery rate of DL-BCD over a (K, s) grid.
pub fn phase_diagram(cfg: &PhaseDiagramConfig) -> Result<PhaseDiagramResult> {
    nonempty(&cfg.dims, "dimension")?;
    nonempty(&cfg.taus, "tau")?;
    positive(cfg.trials, "trials")?;
    let mut cells = Vec::new();
    for &k in &cfg.dims {
        let ss: Vec<usize> = match &cfg.sparsities {
            Some(list) => list.iter().copied().filter(|&s| s >= 1 && s <= k).collect(),
            None => (2..=k).collect(),
        };
        for s in ss {
            for &tau in &cfg.taus {
                cells.push((k, s, tau));
            }
        }
    }
    let jobs: Vec<(usize, usize, f64, usize)> =
        cells.iter().flat_map(|&(k, s, tau)| (0..cfg.trials).map(move |t| (k, s, tau, t))).collect();
    let results = jobs
        .par_iter()
        .map(|&(k, s, tau, trial)| {
            // Seeds ignore tau so that every algorithm sees the same problems.
            let seed = derive_seed(cfg.master_seed, &[k as u64, s as u64, trial as u64]);
            let e = recovery_trial(k, s, cfg.samples_per_dim * k, cfg.snr, tau, cfg.max_sweeps, seed)?;
            Ok((seed, e))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut trials = Table::new(["dim", "s", "algorithm", "trial", "seed", "nmse", "success"]);
    let mut summary = Table::new(["dim", "s", "algorithm", "recovery_rate"]);
    for (cell, chunk) in cells.iter().zip(jobs.chunks(cfg.trials).zip(results.chunks(cfg.trials))) {
        let (k, s, tau) = *cell;
        let label = algorithm_label(tau);
        let mut ok = 0;
        for (&(_, _, _, trial), &(seed, e)) in chunk.0.iter().zip(chunk.1) {
            let success = e < RECOVERY_THRESHOLD;
            ok += usize::from(success);
            trials.push(vec![k.into(), s.into(), label.as_str().into(), trial.into(), seed.into(), e.into(), success.into()]);
        }
        summary.push(vec![k.into(), s.into(), label.as_str().into(), (ok as f64 / cfg.trials as f64).into()]);
    }
    Ok(PhaseDiagramResult { trials, summary })
}

#[derive(Debug, Clone)]
pub struct TimingConfig {
    pub fixed_dim: usize,
    pub ns: Vec<usize>,
    pub fixed_n: usize,
    pub dims: Vec<usize>,
    /// BG(p) coefficients on a constant-collinearity reference.
    pub p: f64,
    pub mu: f64,
    pub rho: f64,
    pub threshold: f64,
    pub perturbation: Perturbation,
    pub repeats: usize,
    pub master_seed: u64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            fixed_dim: 20,
            ns: vec![500, 1000, 2000, 3000, 5000],
            fixed_n: 400,
            dims: vec![5, 10, 20, 30, 50],
            p: 0.7,
            mu: 0.5,
            rho: 0.01,
            threshold: 1e-6,
            perturbation: Perturbation::default(),
            repeats: 3,
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TimingResult {
    /// `axis, dim, n, repeat, seconds`
    pub times: Table,
    /// Log-log slope of the median time against n, with K fixed.
    pub slope_n: Option<f64>,
    /// Log-log slope of the median time against K, with n fixed.
    pub slope_dim: Option<f64>,
}

impl TimingResult {
    /// `axis, slope`
    pub fn slope_table(&self) -> Table {
        let mut t = Table::new(["axis", "slope"]);
        t.push(vec!["n".into(), self.slope_n.into()]);
        t.push(vec!["dim".into(), self.slope_dim.into()]);
        t
    }
}

/// Least-squares slope of `log y` against `log x`; `None` with fewer than two distinct x.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Wall-clock time of the sharpness test over an n grid and a K grid.
///
/// Runs on a single-threaded pool so times reflect total work.
pub fn timing(cfg: &TimingConfig) -> Result<TimingResult> {
    positive(cfg.repeats, "repeats")?;
    if cfg.ns.is_empty() && cfg.dims.is_empty() {
        return Err(DlError::Parameter("timing needs an n grid or a K grid".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| DlError::Numeric(format!("cannot build thread pool: {e}")))?;
    let time_one = |k: usize, n: usize, repeat: usize| -> Result<f64> {
        let model = CoefficientModel::bernoulli_gaussian(k, cfg.p)?;
        let seed = derive_seed(cfg.master_seed, &[k as u64, n as u64, repeat as u64]);
        let (dict, signals) = constant_collinearity_signals(&model, cfg.mu, n, seed)?;
        let test = SharpTestConfig {
            rho: cfg.rho,
            perturbation: cfg.perturbation,
            threshold: cfg.threshold,
            seed: derive_seed(seed, &[3]),
            ..Default::default()
        };
        let start = Instant::now();
        pool.install(|| sharp_test(&dict, &signals, &test))?;
        Ok(start.elapsed().as_secs_f64())
    };

    let mut times = Table::new(["axis", "dim", "n", "repeat", "seconds"]);
    let mut sweep = |axis: &str, points: Vec<(usize, usize)>| -> Result<Option<f64>> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (k, n) in points {
            let mut samples = Vec::new();
            for repeat in 0..cfg.repeats {
                let t = time_one(k, n, repeat)?;
                times.push(vec![axis.into(), k.into(), n.into(), repeat.into(), t.into()]);
                samples.push(t);
            }
            xs.push(if axis == "n" { n as f64 } else { k as f64 });
            ys.push(median(samples));
        }
        Ok(log_log_slope(&xs, &ys))
    };
    let slope_n = sweep("n", cfg.ns.iter().map(|&n| (cfg.fixed_dim, n)).collect())?;
    let slope_dim = sweep("dim", cfg.dims.iter().map(|&k| (k, cfg.fixed_n)).collect())?;
    Ok(TimingResult { times, slope_n, slope_dim })
}

#[derive(Debug, Clone)]
pub struct CounterexampleConfig {
    pub n: usize,
    /// Points per angle on [0, π).
    pub grid: usize,
    pub rho: f64,
    pub threshold: f64,
    pub perturbation: Perturbation,
    pub master_seed: u64,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        Self { n: 2000, grid: 360, rho: 0.01, threshold: 1e-6, perturbation: Perturbation::default(), master_seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct CounterexampleResult {
    /// `theta1, theta2, objective`; near-singular pairs have an empty objective.
    pub surface: Table,
    /// `theta1, objective` along `θ₂ = θ₁ + π/2`.
    pub orthogonal_slice: Table,
    /// Mean l1 objective at the identity.
    pub reference_objective: f64,
    pub grid_min: f64,
    pub argmin: (f64, f64),
    pub skipped: usize,
    pub reference_test: SharpTestReport,
}

impl CounterexampleResult {
    /// `quantity, value`
    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(["quantity", "value"]);
        t.push(vec!["reference_objective".into(), self.reference_objective.into()]);
        t.push(vec!["grid_min".into(), self.grid_min.into()]);
        t.push(vec!["argmin_theta1".into(), self.argmin.0.into()]);
        t.push(vec!["argmin_theta2".into(), self.argmin.1.into()]);
        t.push(vec!["skipped".into(), self.skipped.into()]);
        t.push(vec!["reference_r".into(), self.reference_test.r.into()]);
        t.push(vec!["reference_is_sharp".into(), self.reference_test.is_sharp.into()]);
        t
    }
}

/// Singularity guard for the angle grid.
pub const ANGLE_GUARD: f64 = 1e-6;

/// `Σᵢ |−sin θ · yᵢ₁ + cos θ · yᵢ₂|`.
fn projected_l1(signals: &DMatrix<f64>, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    signals.row_iter().map(|y| (c * y[1] - s * y[0]).abs()).sum()
}

/// Mean l1 objective of the 2×2 dictionary with columns `(cos θᵢ, sin θᵢ)`.
///
/// With `D⁻¹` written out, the two coefficients are `u(θ₂)/sin(θ₁−θ₂)` and
/// `u(θ₁)/sin(θ₂−θ₁)` where `u(θ) = −sin θ · y₁ + cos θ · y₂`.
pub fn angle_objective(signals: &DMatrix<f64>, theta1: f64, theta2: f64) -> f64 {
    let det = (theta2 - theta1).sin().abs();
    (projected_l1(signals, theta1) + projected_l1(signals, theta2)) / (det * signals.nrows() as f64)
}

/// Evaluates the objective over the angle grid for the mixture counter-example
/// and runs the sharpness test at the identity.
pub fn counterexample(cfg: &CounterexampleConfig) -> Result<CounterexampleResult> {
    positive(cfg.n, "n")?;
    positive(cfg.grid, "grid")?;
    // Noiseless with the identity reference, so the signals are the coefficients.
    let signals = sample_counterexample(cfg.n, derive_seed(cfg.master_seed, &[1]));
    let nf = cfg.n as f64;
    let thetas: Vec<f64> = (0..cfg.grid).map(|i| i as f64 * PI / cfg.grid as f64).collect();
    let sums: Vec<f64> = thetas.par_iter().map(|&t| projected_l1(&signals, t)).collect();

    let mut surface = Table::new(["theta1", "theta2", "objective"]);
    let mut grid_min = f64::INFINITY;
    let mut argmin = (f64::NAN, f64::NAN);
    let mut skipped = 0;
    for (i, &t1) in thetas.iter().enumerate() {
        for (j, &t2) in thetas.iter().enumerate() {
            let det = (t2 - t1).sin().abs();
            if det < ANGLE_GUARD {
                skipped += 1;
                surface.push(vec![t1.into(), t2.into(), Cell::Missing]);
                continue;
            }
            let value = (sums[i] + sums[j]) / (det * nf);
            if value < grid_min {
                grid_min = value;
                argmin = (t1, t2);
            }
            surface.push(vec![t1.into(), t2.into(), value.into()]);
        }
    }

    let mut orthogonal_slice = Table::new(["theta1", "objective"]);
    for &t in &thetas {
        orthogonal_slice.push(vec![t.into(), angle_objective(&signals, t, t + PI / 2.0).into()]);
    }

    let identity = Dictionary::identity(2);
    let reference_objective = identity.l1_objective(&signals)?;
    let test = SharpTestConfig {
        rho: cfg.rho,
        perturbation: cfg.perturbation,
        threshold: cfg.threshold,
        seed: derive_seed(cfg.master_seed, &[2]),
        ..Default::default()
    };
    let reference_test = sharp_test(&identity, &signals, &test)?;
    Ok(CounterexampleResult { surface, orthogonal_slice, reference_objective, grid_min, argmin, skipped, reference_test })
}

/// Columns `(cos θᵢ, sin θᵢ)` as a dictionary.
pub fn angle_dictionary(theta1: f64, theta2: f64) -> Result<Dictionary> {
    let (s1, c1) = theta1.sin_cos();
    let (s2, c2) = theta2.sin_cos();
    Dictionary::new(DMatrix::from_column_slice(2, 2, &[c1, s1, c2, s2]))
}

/// Objective trace of a DL-BCD run as `sweep, objective, nmse` (nmse empty without a reference).
pub fn trace_table(trace: &bcd::BcdTrace) -> Table {
    let mut t = Table::new(["sweep", "objective", "nmse"]);
    t.push(vec![0usize.into(), trace.initial_objective.into(), Cell::Missing]);
    for (i, f) in trace.objective_per_sweep.iter().enumerate() {
        t.push(vec![(i + 1).into(), (*f).into(), trace.nmse_per_sweep.get(i).copied().into()]);
    }
    t
}

/// `coordinate, distance` rows of a sharpness report.
pub fn report_table(report: &SharpTestReport) -> Table {
    let mut t = Table::new(["coordinate", "distance_sq", "converged"]);
    for (k, (d, c)) in report.per_coordinate.iter().zip(&report.converged).enumerate() {
        t.push(vec![k.into(), (*d).into(), (*c).into()]);
    }
    t
}
