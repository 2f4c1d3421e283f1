use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use stokpp::acceptance::{self, Status, Tier};
use stokpp::config::RunConfig;
use stokpp::manifest::RunManifest;
use stokpp::{covcheck, io, Error, Result, Runner};
use stokpp_core::grid::GridSpec;
use stokpp_core::noise::{CovarianceKernel, Interpretation, NoiseModel};
use stokpp_core::stats::Estimate;
use stokpp_core::{sde, solver, theory};

#[derive(Parser)]
#[command(name = "stokpp", version, about = "Stochastic KPP fronts: predictions, simulations and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form speed and decay predictions (JSON on stdout).
    Theory(TheoryArgs),
    /// Logistic SDE ensemble: CSV of (t, mean, var) and a JSON summary.
    Sde(SdeArgs),
    /// Front ensemble from a config file.
    Run(RunArgs),
    /// Acceptance suite; exit 0 iff every executed check passes.
    Accept(AcceptArgs),
    /// Empirical covariance of the field-noise generator (JSON on stdout).
    Covcheck(CovArgs),
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum RegimeArg {
    ItoScalar,
    StratonovichScalar,
    Correlated,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct TheoryArgs {
    #[arg(long, value_enum)]
    regime: RegimeArg,
    #[arg(long)]
    kappa: f64,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Decay rate of the initial tail.
    #[arg(long = "N")]
    n: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum InterpArg {
    Ito,
    #[value(alias = "stratonovich")]
    Strat,
}

impl From<InterpArg> for Interpretation {
    fn from(i: InterpArg) -> Self {
        match i {
            InterpArg::Ito => Interpretation::Ito,
            InterpArg::Strat => Interpretation::Stratonovich,
        }
    }
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct SdeArgs {
    #[arg(long)]
    epsilon: f64,
    #[arg(long, value_enum, default_value = "ito")]
    interpretation: InterpArg,
    #[arg(long, default_value_t = solver::DEFAULT_DT)]
    dt: f64,
    /// Horizon.
    #[arg(long = "T")]
    horizon: f64,
    #[arg(long, default_value_t = 16)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial value.
    #[arg(long, default_value_t = 1.0)]
    v0: f64,
    /// Write every k-th step to the CSV.
    #[arg(long, default_value_t = 100)]
    stride: usize,
    #[arg(long, default_value = "stokpp-sde")]
    out: PathBuf,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `noise.seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "stokpp-run")]
    out: PathBuf,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct AcceptArgs {
    /// Fast checks only (the default).
    #[arg(long, conflicts_with_all = ["standard", "full"])]
    fast: bool,
    /// Fast and standard checks.
    #[arg(long, conflicts_with = "full")]
    standard: bool,
    /// Every check.
    #[arg(long)]
    full: bool,
    /// Run exactly these criteria, e.g. `--only 3,4`.
    #[arg(long, value_delimiter = ',')]
    only: Vec<u8>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    jobs: Option<usize>,
    /// Also write the results as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum KernelArg {
    SquaredExponential,
    Constant,
    Tabulated,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct CovArgs {
    #[arg(long, value_enum, default_value = "squared_exponential")]
    kernel: KernelArg,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 2.0)]
    length: f64,
    /// Two-column lag,gamma CSV for `--kernel tabulated`.
    #[arg(long)]
    file: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    nodes: usize,
    #[arg(long, default_value_t = 0.05)]
    dx: f64,
    #[arg(long, default_value_t = solver::DEFAULT_DT)]
    dt: f64,
    #[arg(long, default_value_t = 100_000)]
    draws: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,2,6,12")]
    lags: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Theory(a) => cmd_theory(&a),
        Command::Sde(a) => cmd_sde(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Accept(a) => cmd_accept(&a),
        Command::Covcheck(a) => cmd_covcheck(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("stokpp: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn usage(message: impl Into<String>) -> Error {
    Error::Format(message.into())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

// ------------------------------------------------------------ theory

fn cmd_theory(a: &TheoryArgs) -> Result<ExitCode> {
    if !(a.kappa > 0.0 && a.kappa.is_finite()) {
        return Err(usage(format!("--kappa must be positive, got {}", a.kappa)));
    }
    if !(a.n > 0.0 && a.n.is_finite()) {
        return Err(usage(format!("--N must be positive, got {}", a.n)));
    }
    if !(a.epsilon >= 0.0 && a.epsilon.is_finite()) {
        return Err(usage(format!("--epsilon must be >= 0, got {}", a.epsilon)));
    }
    let (p, note) = match a.regime {
        RegimeArg::ItoScalar => (theory::ito_scalar_prediction(a.kappa, a.epsilon, a.n), None),
        RegimeArg::StratonovichScalar => (
            theory::stratonovich_scalar_prediction(a.kappa, a.n),
            Some("the Stratonovich prediction does not depend on epsilon"),
        ),
        RegimeArg::Correlated => (
            theory::correlated_prediction(a.kappa, a.n),
            Some("epsilon is ignored: the correlated-noise prediction does not depend on it"),
        ),
    };
    print_json(&json!({
        "regime": p.regime.name(),
        "kappa": a.kappa,
        "epsilon": a.epsilon,
        "N": a.n,
        "speed": p.speed,
        "decay": p.decay,
        "v_bar": p.v_bar,
        "threshold": p.threshold,
        "degenerate": p.is_degenerate(),
        "note": note,
    }))?;
    Ok(ExitCode::SUCCESS)
}

// ------------------------------------------------------------ sde

#[derive(Serialize)]
struct LaplaceCheck {
    lambda: f64,
    estimate: f64,
    std_error: f64,
    theory: f64,
}

#[derive(Serialize)]
struct SdeSummary {
    epsilon: f64,
    interpretation: Interpretation,
    dt: f64,
    horizon: f64,
    paths: usize,
    burn_in: f64,
    mean: Estimate,
    theory_mean: Option<f64>,
    laplace: Vec<LaplaceCheck>,
}

fn cmd_sde(a: &SdeArgs) -> Result<ExitCode> {
    if a.paths == 0 {
        return Err(usage("--paths must be >= 1"));
    }
    if !(a.dt > 0.0 && a.horizon >= a.dt) {
        return Err(usage("need --dt > 0 and --T >= --dt"));
    }
    let interpretation = Interpretation::from(a.interpretation);
    let model = NoiseModel::new(CovarianceKernel::standard_wiener(), interpretation, a.seed);
    let steps = solver::steps_for(a.horizon, a.dt) as usize;
    let settings = json!({
        "epsilon": a.epsilon, "interpretation": interpretation, "dt": a.dt, "horizon": a.horizon,
        "paths": a.paths, "v0": a.v0, "seed": a.seed, "stride": a.stride,
    });
    let mut manifest = RunManifest::new("sde", a.seed, &settings)?;
    let manifest_path = manifest.write(&a.out)?;
    let outcome = (|| -> Result<Vec<PathBuf>> {
        let runner = Runner::new(a.jobs)?;
        let paths = runner
            .map_streams(a.paths, |k| sde::simulate_v(a.epsilon, a.v0, a.dt, steps, &model.with_stream(k)))
            .into_iter()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let burn_in = sde::default_burn_in(a.horizon);
        let mean = sde::estimate_time_average(&paths, burn_in, |v| v)?;
        let mut laplace = Vec::new();
        let theory_mean = match interpretation {
            Interpretation::Ito => {
                for lambda in [-2.0, -1.0, 1.0] {
                    if let Ok(theory) = sde::stationary_laplace(lambda, a.epsilon) {
                        let est = sde::estimate_laplace(&paths, lambda, burn_in)?;
                        laplace.push(LaplaceCheck {
                            lambda,
                            estimate: est.value,
                            std_error: est.std_error,
                            theory,
                        });
                    }
                }
                sde::stationary_mean(a.epsilon)
            }
            // the Stratonovich equation is the Itô one with growth 1 + ε²/2
            Interpretation::Stratonovich => Some(1.0),
        };
        let csv = a.out.join("sde.csv");
        io::write_sde_csv(&csv, &paths, a.stride)?;
        let summary_path = a.out.join("summary.json");
        io::write_json(
            &summary_path,
            &SdeSummary {
                epsilon: a.epsilon,
                interpretation,
                dt: a.dt,
                horizon: a.horizon,
                paths: a.paths,
                burn_in,
                mean,
                theory_mean,
                laplace,
            },
        )?;
        Ok(vec![csv, summary_path])
    })();
    finish(manifest_path, &mut manifest, outcome)
}

/// Finalizes the manifest and maps the outcome to an exit code.
fn finish(manifest_path: PathBuf, manifest: &mut RunManifest, outcome: Result<Vec<PathBuf>>) -> Result<ExitCode> {
    let dir = manifest_path.parent().unwrap_or(Path::new("")).to_path_buf();
    match outcome {
        Ok(outputs) => {
            for o in outputs {
                manifest.record(o);
            }
            manifest.complete();
            manifest.write(&dir)?;
            println!("{}", manifest_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            manifest.fail(e.to_string());
            manifest.write(&dir)?;
            eprintln!("stokpp: error: {e} (manifest: {})", manifest_path.display());
            Ok(ExitCode::from(e.exit_code() as u8))
        }
    }
}

// ------------------------------------------------------------ run

fn cmd_run(a: &RunArgs) -> Result<ExitCode> {
    let mut config = RunConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        config = config.with_seed(seed);
    }
    for w in config.experiment.validate()? {
        eprintln!("stokpp: warning: {w}");
    }
    let seed = config.experiment.params.noise.seed;
    let mut manifest = RunManifest::new("run", seed, &config)?;
    let manifest_path = manifest.write(&a.out)?;
    let outcome = (|| -> Result<Vec<PathBuf>> {
        let runner = Runner::new(a.jobs)?;
        let c = &config.experiment;
        let (summary, table) = match &config.wcov {
            Some(w) => {
                let (s, t) = runner.estimate_w_covariance(c, &w.lags, w.tail_window)?;
                (s, Some(t))
            }
            None => (runner.run_experiment(c)?, None),
        };
        let mut outputs = Vec::new();
        let path = a.out.join("summary.json");
        io::write_json(&path, &summary)?;
        outputs.push(path);
        let path = a.out.join("reports.json");
        io::write_json(&path, &summary.reports)?;
        outputs.push(path);
        let path = a.out.join("markers.csv");
        io::write_markers_csv(&path, &summary)?;
        outputs.push(path);
        if let Some(t) = &table {
            let path = a.out.join("wcov.csv");
            io::write_wcov_csv(&path, t)?;
            outputs.push(path);
        }
        if config.snapshots {
            for (k, field) in summary.mean_fields.iter().enumerate() {
                let path = a.out.join("snapshots").join(format!("mean_{k:05}.bin"));
                io::write_snapshot(&path, field)?;
                outputs.push(path);
            }
        }
        Ok(outputs)
    })();
    finish(manifest_path, &mut manifest, outcome)
}

// ------------------------------------------------------------ accept

fn cmd_accept(a: &AcceptArgs) -> Result<ExitCode> {
    let ids = if !a.only.is_empty() {
        if let Some(bad) = a.only.iter().find(|&&id| acceptance::criterion(id).is_none()) {
            return Err(usage(format!("no acceptance criterion {bad}")));
        }
        a.only.clone()
    } else {
        let tier = if a.full {
            Tier::Full
        } else if a.standard {
            Tier::Standard
        } else {
            Tier::Fast
        };
        acceptance::ids_up_to(tier)
    };
    let runner = Runner::new(a.jobs)?;
    let results = acceptance::run_suite(&ids, a.seed, &runner, |r| println!("{}", r.line()));
    let failed = results.iter().filter(|r| r.status == Status::Fail).count();
    println!("{} checks, {} passed, {failed} failed", results.len(), results.len() - failed);
    if let Some(path) = &a.json {
        io::write_json(path, &results)?;
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

// ------------------------------------------------------------ covcheck

fn cmd_covcheck(a: &CovArgs) -> Result<ExitCode> {
    let kernel = match a.kernel {
        KernelArg::SquaredExponential => CovarianceKernel::SquaredExponential {
            sigma2: a.sigma2,
            length: a.length,
        },
        KernelArg::Constant => CovarianceKernel::Constant { sigma2: a.sigma2 },
        KernelArg::Tabulated => {
            let file = a.file.as_ref().ok_or_else(|| usage("--kernel tabulated needs --file"))?;
            CovarianceKernel::Tabulated(io::read_tabulated_kernel(file)?)
        }
    };
    kernel.validate()?;
    let grid = GridSpec::new(0.0, a.dx, a.nodes)?;
    let report = covcheck::check(&kernel, &grid, a.dt, a.draws, a.seed, &a.lags)?;
    let pass = report.max_abs_z() <= 3.0;
    print_json(&json!({ "report": report, "max_abs_z": report.max_abs_z(), "pass": pass }))?;
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
