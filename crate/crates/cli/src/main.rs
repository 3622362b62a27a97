//! Command-line driver: Monte Carlo runs, power curves, the consistency,
//! decomposition and prior-membership experiments, minimax designs, Besov
//! projections and CvM calibration tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use maxiset::cvm::CalibrationCache;
use maxiset::harness::{
    bayes_membership_experiment, config_hash, consistency_experiment, maxiset_decomposition_experiment, power_curve,
    run_monte_carlo, write_csv, write_json, ConsistencyConfig, CsvRow, DecompositionConfig, ExperimentConfig,
    InverseSpec, MembershipConfig, MinimaxSpec,
};
use maxiset::minimax::{least_favorable, Design};
use maxiset::model::{project_besov, BesovBall, Spectrum};
use maxiset::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "maxiset",
    version,
    about = "Signal-detection tests and their Monte Carlo harness"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured number of replications (or prior draws).
    #[arg(long, global = true)]
    reps: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output format.
    #[arg(long, global = true, value_enum)]
    out: Option<Format>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One Monte Carlo run of the configured test and truth.
    Simulate,
    /// Empirical power and predicted β along the configured scale schedule.
    PowerCurve,
    /// Paper-phenomena experiments.
    #[command(subcommand)]
    Experiment(Experiment),
    /// Solves and prints the minimax design and A_n.
    MinimaxDesign(DesignArgs),
    /// Projects a spectrum onto a Besov ball.
    ProjectBesov(ProjectArgs),
    /// Null calibration tables.
    #[command(subcommand)]
    Calibrate(Calibrate),
}

#[derive(Subcommand, Debug)]
enum Experiment {
    /// Tail alternatives along the C schedule.
    Consistency,
    /// Power at f_n against its Besov-ball projections.
    Decomposition,
    /// Membership of prior draws in the alternative set.
    Membership,
}

#[derive(Subcommand, Debug)]
enum Calibrate {
    /// Simulates (or loads) the nT² null table at one sample size.
    Cvm(CvmArgs),
}

#[derive(Args, Debug)]
struct DesignArgs {
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long, conflicts_with = "rho_exponent")]
    rho: Option<f64>,
    /// ρ_n = n^{-e}.
    #[arg(long)]
    rho_exponent: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    truncation: Option<usize>,
    /// Damped observations with λ_j² = amplitude·j^{-2γ}.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, requires = "gamma")]
    amplitude: Option<f64>,
}

#[derive(Args, Debug)]
struct ProjectArgs {
    /// JSON spectrum to project (alternatively `spectrum` in --config).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug)]
struct CvmArgs {
    #[arg(long)]
    n: usize,
    /// Directory of cached tables; the table is simulated when missing.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

/// Config of `minimax-design`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignRequest {
    design: MinimaxSpec,
    n: usize,
}

/// Config of `project-besov`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProjectRequest {
    spectrum: Spectrum,
    s: f64,
    p0: f64,
    #[serde(default = "default_projection_tol")]
    tol: f64,
}

fn default_projection_tol() -> f64 {
    1e-12
}

#[derive(Serialize)]
struct DesignReport<'a> {
    a_n: f64,
    c_n: f64,
    centering: f64,
    predicted_type2_at_005: f64,
    design: &'a Design,
}

#[derive(Serialize)]
struct ProjectionReport<'a> {
    frozen_head: usize,
    sweeps: usize,
    input: &'a Spectrum,
    projected: &'a Spectrum,
}

#[derive(Serialize)]
struct CalibrationRow {
    alpha: f64,
    critical_value: f64,
    null_mean: f64,
    n: usize,
    reps: usize,
    seed: u64,
}

impl CsvRow for CalibrationRow {
    fn header() -> &'static [&'static str] {
        &["alpha", "critical_value", "null_mean", "n", "reps", "seed"]
    }

    fn values(&self) -> Vec<String> {
        vec![
            self.alpha.to_string(),
            self.critical_value.to_string(),
            self.null_mean.to_string(),
            self.n.to_string(),
            self.reps.to_string(),
            self.seed.to_string(),
        ]
    }
}

/// One coefficient of a design or projection, for CSV output.
struct CoefficientRow {
    j: usize,
    first: f64,
    second: f64,
}

/// Writes coefficient rows under `columns` in the layout of `write_csv`.
fn write_coefficients(mut out: impl Write, columns: [&str; 3], rows: &[CoefficientRow], hash: &str) -> Result<()> {
    let io = |e| Error::Io {
        path: "<stdout>".into(),
        source: e,
    };
    writeln!(out, "# schema={}", maxiset::harness::SCHEMA).map_err(io)?;
    writeln!(out, "{},config_hash", columns.join(",")).map_err(io)?;
    for r in rows {
        writeln!(out, "{},{},{},{hash}", r.j, r.first, r.second).map_err(io)?;
    }
    Ok(())
}

fn read_config<T: DeserializeOwned>(path: Option<&Path>) -> Result<T> {
    let path = path.ok_or_else(|| Error::InvalidInput("this command needs --config <json>".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read config {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn emit<R: CsvRow + Serialize>(rows: &[R], hash: &str, format: Format, path: Option<&Path>) -> Result<()> {
    let mut out = open_output(path)?;
    match format {
        Format::Csv => write_csv(&mut out, rows, hash)?,
        Format::Json => write_json(&mut out, rows, hash)?,
    }
    out.flush().map_err(|e| Error::Io {
        path: path.map(Path::to_path_buf).unwrap_or_else(|| "<stdout>".into()),
        source: e,
    })
}

fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    let config_path = g.config.as_deref();
    match &cli.command {
        Command::Simulate | Command::PowerCurve => {
            let mut config: ExperimentConfig = read_config(config_path)?;
            config.seed = g.seed.unwrap_or(config.seed);
            config.reps = g.reps.unwrap_or(config.reps);
            config.validate()?;
            let hash = config_hash(&config)?;
            let format = g.out.unwrap_or(Format::Csv);
            if matches!(cli.command, Command::Simulate) {
                let summary = run_monte_carlo(&config)?;
                eprintln!("wall time: {:.3}s", summary.wall_time.as_secs_f64());
                emit(&[summary], &hash, format, config.output.as_deref())
            } else {
                emit(&power_curve(&config)?, &hash, format, config.output.as_deref())
            }
        }
        Command::Experiment(kind) => {
            let format = g.out.unwrap_or(Format::Csv);
            match kind {
                Experiment::Consistency => {
                    let mut config: ConsistencyConfig = read_config(config_path)?;
                    config.seed = g.seed.unwrap_or(config.seed);
                    config.reps = g.reps.unwrap_or(config.reps);
                    let hash = config_hash(&config)?;
                    emit(
                        &consistency_experiment(&config)?,
                        &hash,
                        format,
                        config.output.as_deref(),
                    )
                }
                Experiment::Decomposition => {
                    let mut config: DecompositionConfig = read_config(config_path)?;
                    config.seed = g.seed.unwrap_or(config.seed);
                    config.reps = g.reps.unwrap_or(config.reps);
                    let hash = config_hash(&config)?;
                    emit(
                        &maxiset_decomposition_experiment(&config)?,
                        &hash,
                        format,
                        config.output.as_deref(),
                    )
                }
                Experiment::Membership => {
                    let mut config: MembershipConfig = read_config(config_path)?;
                    config.seed = g.seed.unwrap_or(config.seed);
                    config.draws = g.reps.unwrap_or(config.draws);
                    let hash = config_hash(&config)?;
                    emit(
                        &[bayes_membership_experiment(&config)?],
                        &hash,
                        format,
                        config.output.as_deref(),
                    )
                }
            }
        }
        Command::MinimaxDesign(args) => {
            let mut req = match config_path {
                Some(p) => read_config(Some(p))?,
                None => DesignRequest {
                    design: MinimaxSpec {
                        s: args.s.unwrap_or(1.0),
                        p0: args.p0.unwrap_or(1.0),
                        rho: None,
                        rho_exponent: None,
                        sigma: 1.0,
                        truncation: None,
                        inverse: None,
                        tol: 1e-9,
                    },
                    n: args.n.unwrap_or(10_000),
                },
            };
            let d = &mut req.design;
            d.s = args.s.unwrap_or(d.s);
            d.p0 = args.p0.unwrap_or(d.p0);
            d.sigma = args.sigma.unwrap_or(d.sigma);
            d.truncation = args.truncation.or(d.truncation);
            if args.rho.is_some() || args.rho_exponent.is_some() {
                d.rho = args.rho;
                d.rho_exponent = args.rho_exponent;
            }
            if let Some(gamma) = args.gamma {
                d.inverse = Some(InverseSpec {
                    gamma,
                    amplitude: args.amplitude.unwrap_or(1.0),
                    len: None,
                });
            }
            if d.rho.is_none() && d.rho_exponent.is_none() {
                // the detection rate, slower when observations are damped
                let gamma = d.inverse.as_ref().map_or(0.0, |inv| inv.gamma);
                d.rho_exponent = Some(4.0 * d.s / (1.0 + 4.0 * d.s + 4.0 * gamma));
            }
            req.n = args.n.unwrap_or(req.n);
            maxiset::harness::TestSpec::Minimax(req.design.clone()).validate()?;
            let hash = config_hash(&req)?;
            let design = req.design.solve(req.n)?;
            let mut out = open_output(None)?;
            match g.out.unwrap_or(Format::Json) {
                Format::Json => {
                    let report = DesignReport {
                        a_n: design.a_n,
                        c_n: design.c_n,
                        centering: design.centering,
                        predicted_type2_at_005: design.predicted_type2(0.05)?,
                        design: &design,
                    };
                    write_json(&mut out, std::slice::from_ref(&report), &hash)?;
                }
                Format::Csv => {
                    let theta = least_favorable(&design);
                    let rows: Vec<CoefficientRow> = design
                        .kappa_j2
                        .iter()
                        .zip(theta.real_coeffs()?)
                        .enumerate()
                        .map(|(i, (k, t))| CoefficientRow {
                            j: i + 1,
                            first: *k,
                            second: *t,
                        })
                        .collect();
                    write_coefficients(&mut out, ["j", "kappa_j2", "least_favorable"], &rows, &hash)?;
                }
            }
            out.flush().map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            })
        }
        Command::ProjectBesov(args) => {
            let mut req: ProjectRequest = match (config_path, &args.input) {
                (Some(p), _) => read_config(Some(p))?,
                (None, Some(input)) => ProjectRequest {
                    spectrum: read_config(Some(input))?,
                    s: args.s.ok_or_else(|| Error::InvalidInput("--s is required".into()))?,
                    p0: args.p0.ok_or_else(|| Error::InvalidInput("--p0 is required".into()))?,
                    tol: default_projection_tol(),
                },
                (None, None) => return Err(Error::InvalidInput("give --config or --input".into())),
            };
            req.s = args.s.unwrap_or(req.s);
            req.p0 = args.p0.unwrap_or(req.p0);
            req.tol = args.tol.unwrap_or(req.tol);
            let hash = config_hash(&req)?;
            let spectrum = req.spectrum.clone().validated()?;
            let ball = BesovBall::new(req.s, req.p0, spectrum.basis())?;
            let proj = project_besov(&spectrum, &ball, req.tol)?;
            let mut out = open_output(None)?;
            match g.out.unwrap_or(Format::Json) {
                Format::Json => {
                    let report = ProjectionReport {
                        frozen_head: proj.frozen_head,
                        sweeps: proj.sweeps,
                        input: &spectrum,
                        projected: &proj.spectrum,
                    };
                    write_json(&mut out, std::slice::from_ref(&report), &hash)?;
                }
                Format::Csv => {
                    let (a, b) = (spectrum.energies(), proj.spectrum.energies());
                    let rows: Vec<CoefficientRow> = a
                        .iter()
                        .zip(&b)
                        .enumerate()
                        .map(|(i, (x, y))| CoefficientRow {
                            j: i + 1,
                            first: *x,
                            second: *y,
                        })
                        .collect();
                    write_coefficients(&mut out, ["j", "energy", "projected_energy"], &rows, &hash)?;
                }
            }
            out.flush().map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            })
        }
        Command::Calibrate(Calibrate::Cvm(args)) => {
            let reps = g.reps.unwrap_or(100_000) as usize;
            let seed = g.seed.unwrap_or(0);
            let table = match &args.cache_dir {
                Some(dir) => CalibrationCache::new(dir, true).get(args.n, reps, seed)?,
                None => maxiset::cvm::CvmCalibration::simulate(args.n, reps, seed)?,
            };
            let rows = [0.1, 0.05, 0.01]
                .iter()
                .map(|&alpha| {
                    Ok(CalibrationRow {
                        alpha,
                        critical_value: table.critical_value(alpha)?,
                        null_mean: table.null_mean(),
                        n: table.n,
                        reps: table.reps,
                        seed: table.seed,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let hash = config_hash(&(args.n, reps, seed))?;
            emit(&rows, &hash, g.out.unwrap_or(Format::Csv), None)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.global.threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => Err(Error::InvalidInput(format!("cannot start {t} threads: {e}"))),
        },
        None => run(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
