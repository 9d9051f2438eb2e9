//! `blocktest`: tests for independence of two high-dimensional sub-vectors.
//!
//! Exit codes: 0 success, 1 numerical/runtime error, 2 usage error.
//! Results go to stdout (or `--out`); warnings and logs go to stderr.

mod config;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use blocktest_core::calibration::{all_calibrations, solve_wd};
use blocktest_core::model::{DataMatrix, Dims, MeanMode, RatioSet, StatisticId};
use blocktest_core::output;
use blocktest_core::simulate::{AltScenario, McConfig, NullScenario};
use blocktest_core::spectral::FisherLsd;
use blocktest_core::statistics::{test_data, DEFAULT_YANG_T};
use blocktest_core::stieltjes::{invert_to_density, LsdSolver, SpectrumG};
use blocktest_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "blocktest",
    version,
    about = "Tests for block-diagonal covariance structure in high dimensions",
    args_override_self = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the null calibration constants for given dimensions.
    Calibrate(CalibrateArgs),
    /// Run the independence tests on a CSV data set.
    Test(TestArgs),
    /// Monte Carlo null study: empirical levels and standardized draws.
    NullSim(NullSimArgs),
    /// Monte Carlo power study over a correlation grid.
    PowerSim(PowerSimArgs),
    /// Tabulate the limiting Fisher spectral density.
    Density(DensityArgs),
    /// Solve the alternative-hypothesis Stieltjes system on a grid.
    SolveLsd(SolveLsdArgs),
}

#[derive(Args)]
struct CommonOut {
    /// Write results to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional key=value (or JSON) config file mirroring the flags;
    /// command-line flags override file entries.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Table,
}

#[derive(Args)]
struct DimArgs {
    /// Sample size.
    #[arg(long)]
    n: usize,
    /// Total dimension.
    #[arg(long)]
    p: usize,
    /// Dimension of the first block (1 <= p1 < p).
    #[arg(long)]
    p1: usize,
}

impl DimArgs {
    fn dims(&self, mean: MeanMode) -> Result<Dims> {
        Dims::new(mean.effective_n(self.n), self.p, self.p1)
    }
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    dims: DimArgs,
    /// Mean handling: known-zero (divisor n) or estimated (divisor n-1).
    #[arg(long, default_value = "known-zero")]
    mean: String,
    /// Output format (json or table).
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(flatten)]
    common: CommonOut,
}

#[derive(Args)]
struct TestArgs {
    /// CSV file with one observation per row.
    #[arg(long)]
    data: PathBuf,
    /// Dimension of the first block.
    #[arg(long)]
    p1: usize,
    /// Statistic name (lr, wilks, lh, bnp, jiang, yang), a comma list, or `all`.
    #[arg(long, default_value = "all")]
    stat: String,
    /// Nominal level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Mean handling: known-zero or estimated.
    #[arg(long, default_value = "known-zero")]
    mean: String,
    /// Skip one header line in the CSV.
    #[arg(long)]
    header: bool,
    /// CSV field delimiter.
    #[arg(long, default_value = ",")]
    delimiter: char,
    /// Regularization t for the Yang statistic.
    #[arg(long)]
    yang_t: Option<f64>,
    /// Replications for Monte Carlo critical values (jiang, yang).
    #[arg(long, default_value_t = 1000)]
    mc_reps: usize,
    /// Seed for Monte Carlo critical values.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output format (json or csv).
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(flatten)]
    common: CommonOut,
}

#[derive(Args)]
struct NullSimArgs {
    #[command(flatten)]
    dims: DimArgs,
    /// Statistics to simulate (comma list or `all`).
    #[arg(long, default_value = "lr,wilks,lh,bnp")]
    stats: String,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Worker threads (0 = automatic).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Re-draw the block covariances every replication instead of fixing
    /// them once.
    #[arg(long)]
    refresh_sigma: bool,
    /// Regularization t for the Yang statistic.
    #[arg(long)]
    yang_t: Option<f64>,
    /// Emit standardized-draw histograms with this many bins as the CSV
    /// output.
    #[arg(long)]
    hist: Option<usize>,
    /// Output format (csv or json).
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(flatten)]
    common: CommonOut,
}

#[derive(Args)]
struct PowerSimArgs {
    #[command(flatten)]
    dims: DimArgs,
    /// Common diagonal scale of the two blocks.
    #[arg(long, default_value_t = 40.0)]
    sigma: f64,
    /// Correlation grid `start:end:npoints`.
    #[arg(long, default_value = "0:0.0325:14")]
    rho: String,
    /// Fraction of cross-block entries zeroed (0, 0.2, 0.5, ...).
    #[arg(long, default_value_t = 0.0)]
    sparsity: f64,
    /// Statistics to simulate (comma list or `all`).
    #[arg(long, default_value = "all")]
    stats: String,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Worker threads (0 = automatic).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Regularization t for the Yang statistic.
    #[arg(long)]
    yang_t: Option<f64>,
    /// Output format (csv or json).
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(flatten)]
    common: CommonOut,
}

#[derive(Args)]
struct DensityArgs {
    /// Sample size (alternative to --gamma1/--gamma2).
    #[arg(long, requires_all = ["p", "p1"])]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    p1: Option<usize>,
    /// Dimension ratio (p-p1)/p1 when not derived from --n/--p/--p1.
    #[arg(long, conflicts_with = "n")]
    gamma1: Option<f64>,
    /// Dimension ratio (p-p1)/(n-p1).
    #[arg(long, conflicts_with = "n", requires = "gamma1")]
    gamma2: Option<f64>,
    /// Number of grid points.
    #[arg(long, default_value_t = 512)]
    points: usize,
    #[command(flatten)]
    common: CommonOut,
}

#[derive(Args)]
struct SolveLsdArgs {
    #[arg(long)]
    gamma1: f64,
    #[arg(long)]
    gamma2: f64,
    /// Limit of p1/n.
    #[arg(long)]
    c1: f64,
    /// Limit of p/n; defaults to c1 + gamma2 (1 - c1).
    #[arg(long)]
    c: Option<f64>,
    /// Spectrum of R: `null` or a CSV file of `lambda,weight` atoms.
    #[arg(long, alias = "G", default_value = "null")]
    g: String,
    /// Real grid `xmin:xmax:npoints`.
    #[arg(long)]
    grid: String,
    /// Height above the real axis for Stieltjes inversion.
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    #[command(flatten)]
    common: CommonOut,
}

fn parse_stats(spec: &str) -> Result<Vec<StatisticId>> {
    if spec.eq_ignore_ascii_case("all") {
        return Ok(StatisticId::ALL.to_vec());
    }
    spec.split(',')
        .map(|s| StatisticId::from_str(s.trim()))
        .collect()
}

/// Resolves the Yang parameter, warning when the statistic is requested
/// without an explicit value.
fn resolve_yang_t(yang_t: Option<f64>, ids: &[StatisticId]) -> Result<f64> {
    match yang_t {
        Some(t) if t >= 0.0 => Ok(t),
        Some(t) => Err(Error::InvalidInput(format!("--yang-t {t} must be >= 0"))),
        None => {
            if ids.contains(&StatisticId::Yang) {
                eprintln!(
                    "warning: yang statistic selected without --yang-t; using t = {DEFAULT_YANG_T}"
                );
            }
            Ok(DEFAULT_YANG_T)
        }
    }
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidInput(format!(
            "grid `{spec}` must be start:end:npoints"
        )));
    }
    let start: f64 = parts[0]
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad grid start `{}`", parts[0])))?;
    let end: f64 = parts[1]
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad grid end `{}`", parts[1])))?;
    let npts: usize = parts[2]
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad grid point count `{}`", parts[2])))?;
    if npts < 2 || end <= start {
        return Err(Error::InvalidInput(format!("degenerate grid `{spec}`")));
    }
    Ok((0..npts)
        .map(|i| start + (end - start) * i as f64 / (npts - 1) as f64)
        .collect())
}

fn emit(common: &CommonOut, text: &str) -> Result<()> {
    match &common.out {
        Some(path) => {
            let mut file = std::fs::File::create(path)?;
            file.write_all(text.as_bytes())?;
        }
        None => {
            print!("{text}");
            std::io::stdout().flush()?;
        }
    }
    Ok(())
}

fn run_calibrate(args: &CalibrateArgs) -> Result<()> {
    let mean: MeanMode = args.mean.parse()?;
    let dims = args.dims.dims(mean)?;
    let ratios = dims.ratios()?;
    let report =
        output::CalibrationReport::new(dims, ratios, solve_wd(&ratios), all_calibrations(&ratios)?);
    let text = match args.format {
        Format::Json => report.to_json()? + "\n",
        Format::Table => report.to_table(),
        Format::Csv => {
            return Err(Error::InvalidInput(
                "calibrate supports --format json or table".into(),
            ))
        }
    };
    emit(&args.common, &text)
}

fn run_test(args: &TestArgs) -> Result<()> {
    let ids = parse_stats(&args.stat)?;
    let yang_t = resolve_yang_t(args.yang_t, &ids)?;
    let mean: MeanMode = args.mean.parse()?;
    let data = DataMatrix::from_csv_path(&args.data, args.header, args.delimiter as u8)?;
    let mc = McConfig {
        reps: args.mc_reps,
        seed: args.seed,
        alpha: args.alpha,
        jobs: 0,
    };
    let outcomes = test_data(&data, args.p1, &ids, args.alpha, mean, yang_t, &mc)?;
    let text = match args.format {
        Format::Json => output::outcomes_to_json(&outcomes)? + "\n",
        Format::Csv => output::outcomes_to_csv(&outcomes),
        Format::Table => {
            return Err(Error::InvalidInput(
                "test supports --format json or csv".into(),
            ))
        }
    };
    emit(&args.common, &text)
}

fn run_null_sim(args: &NullSimArgs) -> Result<()> {
    let ids = parse_stats(&args.stats)?;
    let yang_t = resolve_yang_t(args.yang_t, &ids)?;
    let dims = args.dims.dims(MeanMode::KnownZero)?;
    let mut scenario = NullScenario::new(dims);
    scenario.refresh_sigma = args.refresh_sigma;
    let mc = McConfig {
        reps: args.reps,
        seed: args.seed,
        alpha: args.alpha,
        jobs: args.jobs,
    };
    let result = blocktest_core::simulate::run_null(&scenario, &ids, &mc, yang_t)?;
    let text = match args.format {
        Format::Json => output::null_run_to_json(&result)? + "\n",
        Format::Csv => match args.hist {
            Some(bins) => output::null_run_hist_csv(&result, bins),
            None => output::null_run_to_csv(&result),
        },
        Format::Table => {
            return Err(Error::InvalidInput(
                "null-sim supports --format csv or json".into(),
            ))
        }
    };
    emit(&args.common, &text)
}

fn run_power_sim(args: &PowerSimArgs) -> Result<()> {
    let ids = parse_stats(&args.stats)?;
    let yang_t = resolve_yang_t(args.yang_t, &ids)?;
    let dims = args.dims.dims(MeanMode::KnownZero)?;
    let rho_grid = parse_grid(&args.rho)?;
    let template = AltScenario::new(dims, args.sigma, 0.0, args.sparsity)?;
    let mc = McConfig {
        reps: args.reps,
        seed: args.seed,
        alpha: args.alpha,
        jobs: args.jobs,
    };
    let table = blocktest_core::simulate::run_power(&template, &rho_grid, &ids, &mc, yang_t)?;
    let text = match args.format {
        Format::Json => output::power_table_to_json(&table)? + "\n",
        Format::Csv => output::power_table_to_csv(&table),
        Format::Table => {
            return Err(Error::InvalidInput(
                "power-sim supports --format csv or json".into(),
            ))
        }
    };
    emit(&args.common, &text)
}

fn run_density(args: &DensityArgs) -> Result<()> {
    let ratios = match (args.n, args.p, args.p1, args.gamma1, args.gamma2) {
        (Some(n), Some(p), Some(p1), None, None) => Dims::new(n, p, p1)?.ratios()?,
        (None, None, None, Some(g1), Some(g2)) => RatioSet::from_gammas(g1, g2, 0.5)?,
        _ => {
            return Err(Error::InvalidInput(
                "density needs either --n/--p/--p1 or --gamma1/--gamma2".into(),
            ))
        }
    };
    if args.points < 2 {
        return Err(Error::InvalidInput("--points must be at least 2".into()));
    }
    let lsd = FisherLsd::new(&ratios)?;
    let pairs: Vec<(f64, f64)> = (0..args.points)
        .map(|i| {
            let x = lsd.a() + (lsd.b() - lsd.a()) * i as f64 / (args.points - 1) as f64;
            (x, lsd.q(x))
        })
        .collect();
    emit(&args.common, &output::xy_csv(("x", "q"), &pairs))
}

fn run_solve_lsd(args: &SolveLsdArgs) -> Result<()> {
    let mut ratios = RatioSet::from_gammas(args.gamma1, args.gamma2, args.c1)?;
    if let Some(c) = args.c {
        if c <= ratios.c1 || c >= 1.0 {
            return Err(Error::InvalidInput(format!("--c {c} must lie in (c1, 1)")));
        }
        ratios.c = c;
    }
    let g = if args.g.eq_ignore_ascii_case("null") {
        SpectrumG::Null
    } else {
        let file = std::fs::File::open(&args.g)?;
        SpectrumG::parse_atoms_csv(file)?
    };
    let xs = parse_grid(&args.grid)?;
    let solver = LsdSolver::new(ratios, g);
    let solution = solver.solve_grid(&xs, args.eps)?;
    let curve = invert_to_density(&solution)?;
    emit(
        &args.common,
        &output::xy_csv(("x", "density"), &curve.points),
    )
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Calibrate(args) => run_calibrate(args),
        Command::Test(args) => run_test(args),
        Command::NullSim(args) => run_null_sim(args),
        Command::PowerSim(args) => run_power_sim(args),
        Command::Density(args) => run_density(args),
        Command::SolveLsd(args) => run_solve_lsd(args),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let expanded = match config::expand_config_args(argv) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(expanded);
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
