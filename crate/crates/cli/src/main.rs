//! Command-line harness for the l1dict simulations.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use l1dict::bcd::{self, BcdConfig, Init};
use l1dict::coeff_models::{generate_signals, sample_coefficients, CoefficientModel};
use l1dict::dictionary::{nmse, Dictionary};
use l1dict::error::DlError;
use l1dict::experiments::{
    self, boundary_mu, CounterexampleConfig, PhaseDiagramConfig, SampleSizeConfig, SharpnessSweepConfig, TimingConfig,
};
use l1dict::identifiability;
use l1dict::io::{self as dio, Format, Table};
use l1dict::rng::derive_seed;
use l1dict::sharpness::{sharp_test, Perturbation, SharpTestConfig};

#[derive(Parser, Debug)]
#[command(name = "l1dict", version, about = "l1-minimization dictionary learning experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Master seed; every trial seed is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file (stdout when omitted). Extra tables go next to it as `<stem>.<table>.<ext>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    /// Worker threads (all cores when omitted).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Csv => Format::Csv,
            OutputFormat::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PerturbationArg {
    /// Column noise with E‖ε‖² = ρ².
    ColumnNorm,
    /// Column noise with covariance ρI.
    Covariance,
}

impl From<PerturbationArg> for Perturbation {
    fn from(p: PerturbationArg) -> Self {
        match p {
            PerturbationArg::ColumnNorm => Perturbation::ColumnNorm,
            PerturbationArg::Covariance => Perturbation::Covariance,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    /// Sparse Gaussian SG(s).
    Sg,
    /// Bernoulli Gaussian BG(p).
    Bg,
    /// Non-negative sparse Gaussian |SG(s)|.
    AbsSg,
    /// Sparse Laplacian SL(s).
    Sl,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InitArg {
    Random,
    Signals,
}

#[derive(Args, Debug, Clone, Copy)]
struct TestArgs {
    /// Perturbation level.
    #[arg(long, default_value_t = 0.01)]
    rho: f64,
    /// Largest squared distance still declared sharp.
    #[arg(long, default_value_t = 1e-6)]
    threshold: f64,
    #[arg(long, value_enum, default_value_t = PerturbationArg::ColumnNorm)]
    perturbation: PerturbationArg,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::Sg)]
    model: ModelArg,
    /// Dimension K.
    #[arg(long, default_value_t = 10)]
    dim: usize,
    /// Sparsity for SG, |SG| and SL.
    #[arg(long, short = 's', default_value_t = 3)]
    sparsity: usize,
    /// Activation probability for BG.
    #[arg(long, short = 'p', default_value_t = 0.3)]
    prob: f64,
}

impl ModelArgs {
    fn build(&self) -> l1dict::error::Result<CoefficientModel> {
        match self.model {
            ModelArg::Sg => CoefficientModel::sparse_gaussian(self.dim, self.sparsity),
            ModelArg::Bg => CoefficientModel::bernoulli_gaussian(self.dim, self.prob),
            ModelArg::AbsSg => CoefficientModel::nonneg_sparse_gaussian(self.dim, self.sparsity),
            ModelArg::Sl => CoefficientModel::sparse_laplacian(self.dim, self.sparsity),
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sharpness test verdicts over a ρ grid (ρ-sensitivity).
    Sharpness {
        #[arg(long, default_value_t = 20)]
        dim: usize,
        #[arg(long, short = 's', default_value_t = 10)]
        sparsity: usize,
        #[arg(long, short = 'n', default_value_t = 1600)]
        n: usize,
        /// Coherence; defaults to the sharp side `((K−s)/(K−1) + offset)/√s`.
        #[arg(long)]
        mu: Option<f64>,
        /// Offset from the sharpness boundary used when --mu is absent.
        #[arg(long, default_value_t = -0.2, allow_hyphen_values = true)]
        offset: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3])]
        rho: Vec<f64>,
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
        seeds: u64,
        #[arg(long, default_value_t = 1e-6)]
        threshold: f64,
        #[arg(long, value_enum, default_value_t = PerturbationArg::ColumnNorm)]
        perturbation: PerturbationArg,
    },
    /// Fraction of sharp verdicts against n and the fitted 50% sample size.
    SampleSize {
        #[arg(long, value_delimiter = ',', default_values_t = [12usize, 16, 20])]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [50usize, 100, 150, 200, 250, 300, 400, 500, 600, 800])]
        ns: Vec<usize>,
        #[arg(long, short = 's', default_value_t = 5)]
        sparsity: usize,
        #[arg(long, default_value_t = 0.5)]
        mu: f64,
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
        seeds: u64,
        #[command(flatten)]
        test: TestArgs,
    },
    /// DL-BCD recovery rate over a (K, s) grid.
    PhaseDiagram {
        #[arg(long, value_delimiter = ',', default_values_t = (2usize..=20).collect::<Vec<_>>())]
        dims: Vec<usize>,
        /// Sparsities to try (default 2..=K for every K).
        #[arg(long, value_delimiter = ',')]
        sparsities: Option<Vec<usize>>,
        /// Truncation thresholds; `inf` disables truncation.
        #[arg(long, value_delimiter = ',', default_values_t = [0.5], value_parser = parse_tau)]
        tau: Vec<f64>,
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        /// Samples per dimension (n = this × K).
        #[arg(long, default_value_t = 100)]
        samples_per_dim: usize,
        #[arg(long, default_value_t = 100.0)]
        snr: f64,
        #[arg(long, default_value_t = 100)]
        max_sweeps: usize,
    },
    /// Running time of the sharpness test against n and K.
    Timing {
        /// K for the n sweep.
        #[arg(long, default_value_t = 20)]
        dim: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [500usize, 1000, 2000, 3000, 5000])]
        ns: Vec<usize>,
        /// n for the K sweep.
        #[arg(long, short = 'n', default_value_t = 400)]
        n: usize,
        /// K grid; pass the flag without values to skip the K sweep.
        #[arg(long, value_delimiter = ',', num_args = 0.., default_values_t = [5usize, 10, 20, 30, 50])]
        dims: Vec<usize>,
        /// BG activation probability.
        #[arg(long, short = 'p', default_value_t = 0.7)]
        prob: f64,
        #[arg(long, default_value_t = 0.5)]
        mu: f64,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
        repeats: u64,
        #[command(flatten)]
        test: TestArgs,
    },
    /// Objective landscape of the two-dimensional counter-example.
    Counterexample {
        #[arg(long, short = 'n', default_value_t = 2000)]
        n: usize,
        /// Grid points per angle on [0, π).
        #[arg(long, default_value_t = 360)]
        grid: usize,
        #[command(flatten)]
        test: TestArgs,
    },
    /// A single DL-BCD run on signals from a CSV file.
    Recover {
        /// n×K signals, one per row, headerless.
        #[arg(long)]
        signals: PathBuf,
        #[arg(long, default_value_t = 0.5, value_parser = parse_tau)]
        tau: f64,
        #[arg(long, default_value_t = 100)]
        max_sweeps: usize,
        #[arg(long, value_enum, default_value_t = InitArg::Random)]
        init: InitArg,
        /// Initial dictionary (overrides --init).
        #[arg(long)]
        init_dict: Option<PathBuf>,
        /// Reference dictionary for NMSE tracking.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Where to write the learned dictionary.
        #[arg(long)]
        dict_out: Option<PathBuf>,
    },
    /// A single sharpness test on a dictionary and signals from CSV files.
    TestDict {
        /// K×K dictionary, headerless.
        #[arg(long)]
        dict: PathBuf,
        /// n×K signals, one per row, headerless.
        #[arg(long)]
        signals: PathBuf,
        #[command(flatten)]
        test: TestArgs,
    },
    /// Draw signals from a coefficient model and write them as CSV with a JSON sidecar.
    Generate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, short = 'n', default_value_t = 1000)]
        n: usize,
        /// Constant-collinearity reference with this coherence (random Gaussian when absent).
        #[arg(long, conflicts_with = "dict")]
        mu: Option<f64>,
        /// Reference dictionary CSV.
        #[arg(long)]
        dict: Option<PathBuf>,
        /// Signal-to-noise ratio; `inf` for noiseless data.
        #[arg(long, default_value_t = f64::INFINITY, value_parser = parse_tau)]
        snr: f64,
        /// Where to write the reference dictionary.
        #[arg(long)]
        dict_out: Option<PathBuf>,
        /// Where to write the generating coefficients.
        #[arg(long)]
        coefficients_out: Option<PathBuf>,
    },
    /// Closed-form identifiability quantities for a constant-collinearity reference.
    Identifiability {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        mu: f64,
    },
}

fn parse_tau(s: &str) -> Result<f64, String> {
    let v = match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" => f64::INFINITY,
        other => other.parse::<f64>().map_err(|e| e.to_string())?,
    };
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("expected a positive number or `inf`, got {s}"))
    }
}

struct Output {
    path: Option<PathBuf>,
    format: Format,
}

impl Output {
    fn extension(&self) -> &'static str {
        match self.format {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    fn sibling(&self, path: &Path, name: &str) -> PathBuf {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        path.with_file_name(format!("{stem}.{name}.{}", self.extension()))
    }

    /// Writes the first table to `--out` (or stdout) and the rest next to it.
    fn emit(&self, tables: &[(&str, &Table)]) -> anyhow::Result<()> {
        match &self.path {
            Some(path) => {
                for (i, (name, table)) in tables.iter().enumerate() {
                    let target = if i == 0 { path.clone() } else { self.sibling(path, name) };
                    let file = File::create(&target).with_context(|| format!("cannot create {}", target.display()))?;
                    let mut w = BufWriter::new(file);
                    table.write(&mut w, self.format)?;
                    w.flush()?;
                }
            }
            None => {
                let stdout = io::stdout();
                let mut w = stdout.lock();
                match (self.format, tables) {
                    (_, [(_, only)]) => only.write(&mut w, self.format)?,
                    (Format::Json, _) => {
                        let obj: serde_json::Map<String, serde_json::Value> =
                            tables.iter().map(|(name, t)| (name.to_string(), t.to_json())).collect();
                        serde_json::to_writer_pretty(&mut w, &obj)?;
                        writeln!(w)?;
                    }
                    (Format::Csv, _) => {
                        for (i, (name, table)) in tables.iter().enumerate() {
                            if i > 0 {
                                writeln!(w)?;
                            }
                            writeln!(w, "# {name}")?;
                            table.write(&mut w, Format::Csv)?;
                        }
                    }
                }
                w.flush()?;
            }
        }
        Ok(())
    }
}

fn sharp_config(test: TestArgs, seed: u64) -> SharpTestConfig {
    SharpTestConfig {
        rho: test.rho,
        threshold: test.threshold,
        perturbation: test.perturbation.into(),
        seed,
        ..Default::default()
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global()?;
    }
    let seed = cli.common.seed;
    let out = Output { path: cli.common.out.clone(), format: cli.common.format.into() };
    match cli.command {
        Command::Sharpness { dim, sparsity, n, mu, offset, rho, seeds, threshold, perturbation } => {
            if dim < 2 {
                return Err(DlError::Parameter("dimension must be at least 2".into()).into());
            }
            let cfg = SharpnessSweepConfig {
                dim,
                sparsity,
                n,
                mu: mu.unwrap_or_else(|| boundary_mu(dim, sparsity, offset)),
                rhos: rho,
                seeds: seeds as usize,
                threshold,
                perturbation: perturbation.into(),
                master_seed: seed,
            };
            out.emit(&[("sharpness", &experiments::sharpness_sweep(&cfg)?)])
        }
        Command::SampleSize { dims, ns, sparsity, mu, seeds, test } => {
            let cfg = SampleSizeConfig {
                dims,
                ns,
                sparsity,
                mu,
                rho: test.rho,
                threshold: test.threshold,
                perturbation: test.perturbation.into(),
                seeds: seeds as usize,
                master_seed: seed,
            };
            let res = experiments::sample_size(&cfg)?;
            for fit in res.fits.iter().filter(|f| f.n50.is_none()) {
                eprintln!("note: 50% crossing unavailable for K = {} (all verdicts equal or flat fit)", fit.dim);
            }
            out.emit(&[("trials", &res.trials), ("summary", &res.summary), ("fits", &res.fit_table())])
        }
        Command::PhaseDiagram { dims, sparsities, tau, trials, samples_per_dim, snr, max_sweeps } => {
            let cfg = PhaseDiagramConfig {
                dims,
                sparsities,
                samples_per_dim,
                snr,
                taus: tau,
                trials: trials as usize,
                max_sweeps,
                master_seed: seed,
            };
            let res = experiments::phase_diagram(&cfg)?;
            out.emit(&[("summary", &res.summary), ("trials", &res.trials)])
        }
        Command::Timing { dim, ns, n, dims, prob, mu, repeats, test } => {
            let cfg = TimingConfig {
                fixed_dim: dim,
                ns,
                fixed_n: n,
                dims,
                p: prob,
                mu,
                rho: test.rho,
                threshold: test.threshold,
                perturbation: test.perturbation.into(),
                repeats: repeats as usize,
                master_seed: seed,
            };
            let res = experiments::timing(&cfg)?;
            out.emit(&[("times", &res.times), ("slopes", &res.slope_table())])
        }
        Command::Counterexample { n, grid, test } => {
            let cfg = CounterexampleConfig {
                n,
                grid,
                rho: test.rho,
                threshold: test.threshold,
                perturbation: test.perturbation.into(),
                master_seed: seed,
            };
            let res = experiments::counterexample(&cfg)?;
            out.emit(&[("surface", &res.surface), ("slice", &res.orthogonal_slice), ("summary", &res.summary_table())])
        }
        Command::Recover { signals, tau, max_sweeps, init, init_dict, reference, dict_out } => {
            let y = dio::load_matrix(&signals).with_context(|| format!("cannot read {}", signals.display()))?;
            let init = match (init_dict, init) {
                (Some(path), _) => Init::Given(dio::load_dictionary(&path).with_context(|| format!("cannot read {}", path.display()))?),
                (None, InitArg::Random) => Init::RandomGaussian,
                (None, InitArg::Signals) => Init::SignalColumns,
            };
            let reference = reference
                .map(|p| dio::load_dictionary(&p).with_context(|| format!("cannot read {}", p.display())))
                .transpose()?;
            let cfg = BcdConfig { tau, max_sweeps, init, seed, ..Default::default() };
            let (dict, trace) = bcd::run(&y, &cfg, reference.as_ref())?;
            if let Some(path) = dict_out {
                dio::save_matrix(&path, dict.matrix()).with_context(|| format!("cannot write {}", path.display()))?;
            }
            if let Some(r) = &reference {
                eprintln!("final NMSE {:.6e}", nmse(&dict, r)?);
            }
            if trace.unconverged_solves > 0 {
                eprintln!("warning: {} subproblem solves hit the iteration limit", trace.unconverged_solves);
            }
            out.emit(&[("trace", &experiments::trace_table(&trace))])
        }
        Command::TestDict { dict, signals, test } => {
            let d = dio::load_dictionary(&dict).with_context(|| format!("cannot read {}", dict.display()))?;
            let y = dio::load_matrix(&signals).with_context(|| format!("cannot read {}", signals.display()))?;
            let report = sharp_test(&d, &y, &sharp_config(test, seed))?;
            let mut summary = Table::new(["is_sharp", "r", "rho", "threshold", "perturbation", "seed"]);
            summary.push(vec![
                report.is_sharp.into(),
                report.r.into(),
                report.rho.into(),
                report.threshold.into(),
                serde_json::to_value(report.perturbation)?.as_str().unwrap_or_default().into(),
                report.seed.into(),
            ]);
            out.emit(&[("summary", &summary), ("coordinates", &experiments::report_table(&report))])?;
            if report.is_sharp.is_none() {
                bail!("some subproblems did not converge; no verdict");
            }
            Ok(())
        }
        Command::Generate { model, n, mu, dict, snr, dict_out, coefficients_out } => {
            let model = model.build()?;
            let reference = match (mu, dict) {
                (Some(mu), _) => Dictionary::constant_collinearity(model.dim, mu)?,
                (None, Some(path)) => dio::load_dictionary(&path).with_context(|| format!("cannot read {}", path.display()))?,
                (None, None) => Dictionary::random_gaussian(model.dim, derive_seed(seed, &[1]))?,
            };
            let Some(path) = &out.path else {
                return Err(DlError::Parameter("generate needs --out".into()).into());
            };
            let coeffs = sample_coefficients(&model, n, derive_seed(seed, &[2]))?;
            let set = generate_signals(&reference, &coeffs, snr, Some(&model), derive_seed(seed, &[3]))?;
            dio::save_signal_set(path, &set, Some(&model))?;
            if let Some(p) = dict_out {
                dio::save_matrix(&p, reference.matrix())?;
            }
            if let Some(p) = coefficients_out {
                dio::save_matrix(&p, &set.coefficients)?;
            }
            Ok(())
        }
        Command::Identifiability { model, mu } => {
            let model = model.build()?;
            let report = identifiability::report(&model, mu)?;
            let mut t = Table::new(["quantity", "value"]);
            t.push(vec!["dual_norm".into(), report.dual_norm.into()]);
            t.push(vec!["condition".into(), report.condition.into()]);
            t.push(vec!["sharpness".into(), report.sharpness.into()]);
            t.push(vec!["region_radius".into(), report.region_radius.into()]);
            t.push(vec!["c_alpha".into(), report.c_alpha.into()]);
            t.push(vec!["spectral_norm_sq".into(), report.spectral_norm_sq.into()]);
            out.emit(&[("identifiability", &t)])
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = matches!(e.downcast_ref::<DlError>(), Some(DlError::Parameter(_)));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
