//! Batch front end for the spectral Toeplitz estimators: estimation,
//! precision, density export, Monte Carlo simulation, QQ diagnostics,
//! and Whittle likelihood evaluation, all on headerless CSV files.
//!
//! Exit codes: 0 success, 2 usage, 3 data or file error, 4 numeric
//! non-convergence (warnings escalate to 4 only under --strict).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use toepcov::estimator::{dct_whittle_nll, classical_whittle_nll};
use toepcov::io;
use toepcov::simulation::{self, Innovation, Method, Process, ScenarioSpec};
use toepcov::{
    estimate_spectral_density, BinSpec, Error, EstimatorConfig, Selector,
    SpectralDensityEstimate,
};

#[derive(Parser)]
#[command(
    name = "toepcov",
    version,
    about = "Toeplitz covariance and spectral density estimation",
    propagate_version = true
)]
struct Cli {
    /// Escalate numeric non-convergence warnings to exit code 4.
    #[arg(long, global = true)]
    strict: bool,
    /// Worker threads for simulation (default: TOEPCOV_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the covariance first row from a sample CSV
    Estimate(EstimateArgs),
    /// Estimate the precision (inverse covariance) first row
    Precision(PrecisionArgs),
    /// Export the estimated spectral density on a frequency grid
    Density(DensityArgs),
    /// Run a Monte Carlo comparison of estimators
    Simulate(SimulateArgs),
    /// Export QQ pairs of the stabilized regression residuals
    Diagnose(DiagnoseArgs),
    /// Evaluate Whittle likelihoods of a sample under a density
    Whittle(WhittleArgs),
}

/// Pipeline flags shared by every estimating subcommand.
#[derive(Args)]
struct FitArgs {
    /// Bin count for the stabilized regression (default: automatic rule)
    #[arg(long = "T", value_name = "BINS")]
    bins: Option<usize>,
    /// Bin exponent: T = floor(p^upsilon), 0 < upsilon < 1
    #[arg(long, conflicts_with = "bins")]
    upsilon: Option<f64>,
    /// Penalty order of the smoothing spline
    #[arg(long, default_value_t = 2)]
    q: usize,
    /// Bandwidth selector: gcv, ml, or fixed
    #[arg(long, default_value = "gcv")]
    selector: String,
    /// Bandwidth value for --selector fixed
    #[arg(long)]
    h: Option<f64>,
    /// Lower end of the bandwidth search grid
    #[arg(long)]
    h_min: Option<f64>,
    /// Upper end of the bandwidth search grid
    #[arg(long)]
    h_max: Option<f64>,
    /// Points in the bandwidth search grid
    #[arg(long)]
    h_count: Option<usize>,
    /// Known smoothness of the density; below 1 widens the bin count
    #[arg(long)]
    smoothness_hint: Option<f64>,
    /// Assume slowly decaying covariances when choosing the bin count
    #[arg(long)]
    long_memory: bool,
    /// Quadrature grid size (power of two, at least 2p)
    #[arg(long)]
    eval_grid: Option<usize>,
    /// Quadrature stopping tolerance on sigma_0
    #[arg(long)]
    quadrature_tol: Option<f64>,
    /// Quadrature grid doublings allowed past the initial size
    #[arg(long)]
    max_doublings: Option<usize>,
}

impl FitArgs {
    fn config(&self) -> Result<EstimatorConfig, Error> {
        let mut config = EstimatorConfig::default();
        config.bins = match (self.bins, self.upsilon) {
            (Some(t), _) => BinSpec::Count(t),
            (None, Some(u)) => BinSpec::Exponent(u),
            (None, None) => BinSpec::Auto,
        };
        config.selector = match self.selector.as_str() {
            "gcv" => Selector::Gcv,
            "ml" | "gml" => Selector::Gml,
            "fixed" => Selector::Fixed(self.h.ok_or(Error::InvalidArgument {
                name: "--h",
                reason: "--selector fixed needs an explicit --h".into(),
            })?),
            other => {
                return Err(Error::InvalidArgument {
                    name: "--selector",
                    reason: format!("unknown selector {other:?}; use gcv, ml, or fixed"),
                })
            }
        };
        if self.h.is_some() && self.selector != "fixed" {
            return Err(Error::InvalidArgument {
                name: "--h",
                reason: "--h only applies with --selector fixed".into(),
            });
        }
        config.order = self.q;
        config.smoothness_hint = self.smoothness_hint;
        config.long_memory = self.long_memory;
        config.eval_grid = self.eval_grid;
        if let Some(min) = self.h_min {
            config.h_grid.min = min;
        }
        if let Some(max) = self.h_max {
            config.h_grid.max = max;
        }
        if let Some(count) = self.h_count {
            config.h_grid.count = count;
        }
        if let Some(tol) = self.quadrature_tol {
            config.quadrature_tol = tol;
        }
        if let Some(d) = self.max_doublings {
            config.max_doublings = d;
        }
        Ok(config)
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Input sample CSV, one series per row
    #[arg(long)]
    input: PathBuf,
    /// Output CSV for the estimated covariance first row
    #[arg(long)]
    output: PathBuf,
    /// Provenance JSON path (default: output with .provenance.json)
    #[arg(long)]
    provenance: Option<PathBuf>,
    /// Also write the precision first row to this CSV
    #[arg(long)]
    precision: Option<PathBuf>,
    /// Also write the density sampled on this many intervals
    #[arg(long, value_name = "G")]
    density_grid: Option<usize>,
    /// Density CSV path (default: output with .density.csv)
    #[arg(long)]
    density: Option<PathBuf>,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args)]
struct PrecisionArgs {
    /// Input sample CSV, one series per row
    #[arg(long)]
    input: PathBuf,
    /// Output CSV for the estimated precision first row
    #[arg(long)]
    output: PathBuf,
    /// Provenance JSON path (default: output with .provenance.json)
    #[arg(long)]
    provenance: Option<PathBuf>,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args)]
struct DensityArgs {
    /// Input sample CSV, one series per row
    #[arg(long)]
    input: PathBuf,
    /// Output CSV: omega,density over [0, pi]
    #[arg(long)]
    output: PathBuf,
    /// Grid intervals; the file holds grid+1 samples
    #[arg(long, default_value_t = 512)]
    grid: usize,
    /// Provenance JSON path (default: none)
    #[arg(long)]
    provenance: Option<PathBuf>,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON file; flags below override its fields
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Benchmark process: poly-decay, ar2, or lipschitz-sd
    #[arg(long)]
    process: Option<String>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Master seed; every replication derives its own stream
    #[arg(long)]
    seed: Option<u64>,
    /// Innovation law: gaussian, gamma, or uniform
    #[arg(long)]
    innovation: Option<String>,
    /// Methods to run, comma separated (e.g. spectral-gcv,sample)
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Bin count override for the spectral methods
    #[arg(long)]
    bins: Option<usize>,
    /// Subseries count for taper-subseries
    #[arg(long)]
    subseries: Option<usize>,
    /// Cross-validation splits for taper-cv
    #[arg(long)]
    cv_splits: Option<usize>,
    /// Label echoed into the report
    #[arg(long)]
    label: Option<String>,
    /// Report JSON path
    #[arg(long)]
    out: PathBuf,
    /// Summary table CSV path (default: out with .csv)
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Input sample CSV, one series per row
    #[arg(long)]
    input: PathBuf,
    /// Output prefix; each fit writes <prefix>_T<bins>.csv
    #[arg(long)]
    out_prefix: PathBuf,
    /// Bin counts to diagnose, comma separated (default: automatic rule)
    #[arg(long = "T", value_name = "BINS", value_delimiter = ',')]
    bins: Vec<usize>,
    /// Bandwidth selector: gcv, ml, or fixed
    #[arg(long, default_value = "gcv")]
    selector: String,
    /// Bandwidth value for --selector fixed
    #[arg(long)]
    h: Option<f64>,
    /// Penalty order of the smoothing spline
    #[arg(long, default_value_t = 2)]
    q: usize,
}

#[derive(Args)]
struct WhittleArgs {
    /// Input sample CSV, one series per row
    #[arg(long)]
    input: PathBuf,
    /// Evaluate under this benchmark process's true density instead of a fit
    #[arg(long)]
    process: Option<String>,
    /// Write the two likelihood values as JSON here
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    fit: FitArgs,
}

fn parse_kebab<T: serde::de::DeserializeOwned>(
    flag: &'static str,
    value: &str,
) -> Result<T, Error> {
    serde_json::from_value(serde_json::Value::String(value.to_string())).map_err(|_| {
        Error::InvalidArgument {
            name: flag,
            reason: format!("unknown value {value:?}"),
        }
    })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

/// Warnings that exit 0 normally and 4 under --strict.
type Outcome = Result<Vec<String>, Error>;

fn quadrature_warnings(est: &SpectralDensityEstimate) -> Vec<String> {
    let q = est.quadrature();
    if q.converged {
        Vec::new()
    } else {
        vec![format!(
            "quadrature stopped after {} doublings with sigma_0 still moving by {:.3e}",
            q.doublings, q.sigma0_change
        )]
    }
}

fn cmd_estimate(args: &EstimateArgs) -> Outcome {
    let config = args.fit.config()?;
    let y = io::read_sample_matrix(&args.input)?;
    let est = estimate_spectral_density(&y, &config)?;
    let mut warnings = quadrature_warnings(&est);

    let sigma = est.covariance()?;
    io::write_first_row(&args.output, sigma.first_row())?;
    let prov_path = args
        .provenance
        .clone()
        .unwrap_or_else(|| with_suffix(&args.output, "provenance.json"));
    io::write_provenance(&prov_path, &io::Provenance::of(&est))?;

    if let Some(precision_path) = &args.precision {
        let (omega, report) = est.precision()?;
        if !report.converged {
            warnings.push(format!(
                "precision quadrature stopped with sigma_0 still moving by {:.3e}",
                report.sigma0_change
            ));
        }
        io::write_first_row(precision_path, omega.first_row())?;
    }
    if let Some(grid) = args.density_grid {
        let density_path = args
            .density
            .clone()
            .unwrap_or_else(|| with_suffix(&args.output, "density.csv"));
        io::write_density_csv(&density_path, &est.density_samples(grid)?)?;
    }

    println!(
        "estimated p={} from n={} rows: T={}, m={}, selector={}, h={:.6e}, edf={:.2}, sigma0={:.6}",
        est.dim(),
        est.sample_count(),
        est.bins(),
        est.aggregation(),
        est.selector(),
        est.bandwidth(),
        est.edf(),
        sigma.first_row()[0],
    );
    Ok(warnings)
}

fn cmd_precision(args: &PrecisionArgs) -> Outcome {
    let config = args.fit.config()?;
    let y = io::read_sample_matrix(&args.input)?;
    let est = estimate_spectral_density(&y, &config)?;
    let mut warnings = quadrature_warnings(&est);

    let (omega, report) = est.precision()?;
    if !report.converged {
        warnings.push(format!(
            "precision quadrature stopped with sigma_0 still moving by {:.3e}",
            report.sigma0_change
        ));
    }
    io::write_first_row(&args.output, omega.first_row())?;
    let prov_path = args
        .provenance
        .clone()
        .unwrap_or_else(|| with_suffix(&args.output, "provenance.json"));
    io::write_provenance(&prov_path, &io::Provenance::of(&est))?;

    println!(
        "precision first row for p={}: T={}, selector={}, h={:.6e}, omega0={:.6}",
        est.dim(),
        est.bins(),
        est.selector(),
        est.bandwidth(),
        omega.first_row()[0],
    );
    Ok(warnings)
}

fn cmd_density(args: &DensityArgs) -> Outcome {
    let config = args.fit.config()?;
    let y = io::read_sample_matrix(&args.input)?;
    let est = estimate_spectral_density(&y, &config)?;
    io::write_density_csv(&args.output, &est.density_samples(args.grid)?)?;
    if let Some(prov_path) = &args.provenance {
        io::write_provenance(prov_path, &io::Provenance::of(&est))?;
    }
    println!(
        "wrote {} density samples: T={}, selector={}, h={:.6e}",
        args.grid + 1,
        est.bins(),
        est.selector(),
        est.bandwidth(),
    );
    Ok(quadrature_warnings(&est))
}

fn cmd_simulate(args: &SimulateArgs, threads: Option<usize>) -> Outcome {
    let mut scenario = match &args.scenario {
        Some(path) => io::read_scenario(path)?,
        None => {
            let missing = |flag: &'static str| Error::InvalidArgument {
                name: flag,
                reason: "required without --scenario".into(),
            };
            ScenarioSpec {
                label: String::new(),
                process: parse_kebab::<Process>(
                    "--process",
                    &args.process.clone().ok_or(missing("--process"))?,
                )?,
                p: args.p.ok_or(missing("--p"))?,
                n: args.n.ok_or(missing("--n"))?,
                reps: args.reps.ok_or(missing("--reps"))?,
                seed: args.seed.ok_or(missing("--seed"))?,
                innovation: Innovation::Gaussian,
                methods: Vec::new(),
                bins: None,
                subseries: None,
                cv_splits: 30,
            }
        }
    };
    if let Some(process) = &args.process {
        scenario.process = parse_kebab("--process", process)?;
    }
    if let Some(p) = args.p {
        scenario.p = p;
    }
    if let Some(n) = args.n {
        scenario.n = n;
    }
    if let Some(reps) = args.reps {
        scenario.reps = reps;
    }
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(innovation) = &args.innovation {
        scenario.innovation = parse_kebab("--innovation", innovation)?;
    }
    if let Some(bins) = args.bins {
        scenario.bins = Some(bins);
    }
    if let Some(subseries) = args.subseries {
        scenario.subseries = Some(subseries);
    }
    if let Some(splits) = args.cv_splits {
        scenario.cv_splits = splits;
    }
    if let Some(label) = &args.label {
        scenario.label = label.clone();
    }
    let methods: Vec<Method> = args
        .methods
        .iter()
        .map(|m| parse_kebab::<Method>("--methods", m))
        .collect::<Result<_, _>>()?;

    let report = simulation::run_monte_carlo(&scenario, &methods, threads)?;
    io::write_report_json(&args.out, &report)?;
    let csv_path = args
        .csv
        .clone()
        .unwrap_or_else(|| with_suffix(&args.out, "csv"));
    io::write_report_csv(&csv_path, &report)?;
    print!("{}", report.to_csv());

    let failed: usize = report.methods.iter().map(|m| m.reps_failed).sum();
    if failed > 0 {
        Ok(vec![format!("{failed} method runs failed; see {}", args.out.display())])
    } else {
        Ok(Vec::new())
    }
}

fn cmd_diagnose(args: &DiagnoseArgs) -> Outcome {
    let y = io::read_sample_matrix(&args.input)?;
    let selector = match args.selector.as_str() {
        "gcv" => Selector::Gcv,
        "ml" | "gml" => Selector::Gml,
        "fixed" => Selector::Fixed(args.h.ok_or(Error::InvalidArgument {
            name: "--h",
            reason: "--selector fixed needs an explicit --h".into(),
        })?),
        other => {
            return Err(Error::InvalidArgument {
                name: "--selector",
                reason: format!("unknown selector {other:?}; use gcv, ml, or fixed"),
            })
        }
    };
    let bin_specs: Vec<BinSpec> = if args.bins.is_empty() {
        vec![BinSpec::Auto]
    } else {
        args.bins.iter().map(|&t| BinSpec::Count(t)).collect()
    };

    let mut warnings = Vec::new();
    for bins in bin_specs {
        let config = EstimatorConfig {
            bins,
            selector,
            order: args.q,
            ..EstimatorConfig::default()
        };
        let est = estimate_spectral_density(&y, &config)?;
        warnings.extend(quadrature_warnings(&est));
        let pairs = est.qq_data();
        let max_dev = pairs
            .iter()
            .map(|(theo, emp)| (theo - emp).abs())
            .fold(0.0f64, f64::max);
        let path = PathBuf::from(format!(
            "{}_T{}.csv",
            args.out_prefix.display(),
            est.bins()
        ));
        io::write_qq_csv(&path, &pairs)?;
        println!(
            "T={}: wrote {} QQ pairs to {}, max |empirical - theoretical| = {:.4}",
            est.bins(),
            pairs.len(),
            path.display(),
            max_dev,
        );
    }
    Ok(warnings)
}

fn cmd_whittle(args: &WhittleArgs) -> Outcome {
    let y = io::read_sample_matrix(&args.input)?;
    let mut warnings = Vec::new();
    let density: Box<dyn Fn(f64) -> f64> = match &args.process {
        Some(name) => {
            let process: Process = parse_kebab("--process", name)?;
            Box::new(move |x| process.density_x(x))
        }
        None => {
            let config = args.fit.config()?;
            let est = estimate_spectral_density(&y, &config)?;
            warnings.extend(quadrature_warnings(&est));
            Box::new(move |x| est.density_x(x))
        }
    };
    let dct_nll = dct_whittle_nll(&*density, &y)?;
    let classical_nll = classical_whittle_nll(&*density, &y)?;
    println!("dct_whittle_nll = {dct_nll}");
    println!("classical_whittle_nll = {classical_nll}");
    if let Some(json_path) = &args.json {
        let value = serde_json::json!({
            "dct_whittle_nll": dct_nll,
            "classical_whittle_nll": classical_nll,
        });
        std::fs::write(json_path, serde_json::to_string_pretty(&value).unwrap())
            .map_err(Error::from)?;
    }
    Ok(warnings)
}

fn exit_code(error: &Error) -> u8 {
    match error {
        Error::InvalidArgument { .. } => 2,
        Error::Io(_)
        | Error::Parse { .. }
        | Error::DegenerateData(_)
        | Error::Scenario(_)
        | Error::DimensionMismatch { .. }
        | Error::TooLargeForDense { .. } => 3,
        Error::NotConverged { .. } | Error::IndefiniteEmbedding { .. } => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("TOEPCOV_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    let outcome = match &cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::Precision(args) => cmd_precision(args),
        Command::Density(args) => cmd_density(args),
        Command::Simulate(args) => cmd_simulate(args, threads),
        Command::Diagnose(args) => cmd_diagnose(args),
        Command::Whittle(args) => cmd_whittle(args),
    };
    match outcome {
        Ok(warnings) => {
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            if cli.strict && !warnings.is_empty() {
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
