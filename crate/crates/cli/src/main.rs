//! Command-line driver for the reduced order modeling toolkit: dataset
//! generation, model training, forecasting, and KL-divergence evaluation.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 numerical divergence.
//! Forecast divergence is a result, not a failure: it is recorded inside the
//! output file and exits 0. All commands are deterministic given their flags,
//! and no command leaves a partially written output file behind.

mod config;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use chaosrom::lorenz96::{generate_dataset, generate_forecast_ensemble, DatasetConfig, Lorenz96};
use chaosrom::neural::{train, EpochRecord, NeuralHyper, TrainConfig};
use chaosrom::nn::CyclicLrSchedule;
use chaosrom::ode::SolverConfig;
use chaosrom::traj::{consecutive_pairs, load_trajectories, write_trajectories};
use chaosrom::{dmd, eval, persist, quadratic, Rom, UNITS_PER_DAY};

use config::{parse_value, read_config};

const HOURS_PER_DAY: f64 = 24.0;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(chaosrom::Error),
    Io(std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_divergence() => 2,
            _ => 1,
        }
    }
}

impl<E: Into<chaosrom::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Core(e.into())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "chaosrom",
    version,
    about = "Reduced order models of chaotic dynamics on the Lorenz '96 system"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate Lorenz '96 trajectory data along one reference solution
    GenData(GenDataArgs),
    /// Fit a reduced order model to a trajectory CSV
    Train(TrainArgs),
    /// Forecast from an initial condition and export the flow field
    Forecast(ForecastArgs),
    /// Compare model forecast distributions to the truth by KL divergence
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    /// Total number of data points N (split into trajectories of rollout+1)
    #[arg(long)]
    n_points: Option<usize>,
    /// Roll out parameter K: points per trajectory minus one
    #[arg(long, default_value_t = 1)]
    rollout: usize,
    /// RNG seed (reserved for ensemble sampling; data itself is deterministic)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output trajectory CSV
    #[arg(long, default_value = "trajectories.csv")]
    out: PathBuf,
    /// Days between the starts of consecutive trajectories
    #[arg(long, default_value_t = 30.0)]
    days_gap: f64,
    /// Hours between points inside a trajectory
    #[arg(long, default_value_t = 6.0)]
    spacing_hours: f64,
    /// Spin-up days before the first sample
    #[arg(long, default_value_t = 360.0)]
    burn_in_days: f64,
    /// State dimension n
    #[arg(long, default_value_t = 40)]
    dim: usize,
    /// External forcing F
    #[arg(long, default_value_t = 8.0)]
    forcing: f64,
    /// Flat key = value configuration file (flags override file values)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Dmd,
    Quad,
    Ae,
    Syco,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Model family to fit
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Training trajectory CSV (from gen-data)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Reduced dimension r
    #[arg(long, default_value_t = 28)]
    r: usize,
    /// Hidden layer width H (ae/syco)
    #[arg(long, default_value_t = 2000)]
    hidden: usize,
    /// Training epochs (ae/syco)
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
    /// Largest-Lyapunov-exponent loss weight lambda (ae/syco)
    #[arg(long, default_value_t = 1.6852)]
    lambda: f64,
    /// Right-inverse loss weight omega (ae/syco)
    #[arg(long, default_value_t = 100.0)]
    omega: f64,
    /// Reduced-space dynamics loss weight upsilon (ae/syco)
    #[arg(long, default_value_t = 1.0)]
    upsilon: f64,
    /// Trapezoidal substeps per data interval in the rollout (ae/syco)
    #[arg(long, default_value_t = 5)]
    rollout_substeps: usize,
    /// Weight initialization seed (ae/syco)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cyclic learning rate: base
    #[arg(long, default_value_t = 1e-4)]
    base_lr: f64,
    /// Cyclic learning rate: peak
    #[arg(long, default_value_t = 1e-2)]
    max_lr: f64,
    /// Cyclic learning rate: epochs from base to peak
    #[arg(long, default_value_t = 100)]
    cycle_len: usize,
    /// Output model file
    #[arg(long, default_value = "model.crom")]
    out: PathBuf,
    /// Loss log CSV (ae/syco; default: <out>.loss.csv)
    #[arg(long)]
    loss_log: Option<PathBuf>,
    /// Flat key = value configuration file (flags override file values)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ForecastArgs {
    /// Model file, or `truth` for the full order model
    #[arg(long)]
    model: Option<String>,
    /// Initial condition: a row index into --data, or inline `v1,v2,...`
    #[arg(long)]
    init: Option<String>,
    /// Trajectory CSV to take the initial condition from (row-index init)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Forecast horizon in days
    #[arg(long)]
    days: Option<f64>,
    /// Output flow CSV on the six-hour grid
    #[arg(long, default_value = "forecast.csv")]
    out: PathBuf,
    /// State dimension n (truth model only)
    #[arg(long, default_value_t = 40)]
    dim: usize,
    /// External forcing F (truth model only)
    #[arg(long, default_value_t = 8.0)]
    forcing: f64,
    /// Flat key = value configuration file (flags override file values)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Comma-separated model files and/or `truth`
    #[arg(long)]
    models: Option<String>,
    /// Forecast days, `1..10` or a single upper bound
    #[arg(long, default_value = "1..10")]
    days: String,
    /// Ensemble size M
    #[arg(long, default_value_t = 10000)]
    samples: usize,
    /// Ensemble sampling seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output KL report CSV
    #[arg(long, default_value = "kl_report.csv")]
    out: PathBuf,
    /// State dimension n of the truth
    #[arg(long, default_value_t = 40)]
    dim: usize,
    /// External forcing F of the truth
    #[arg(long, default_value_t = 8.0)]
    forcing: f64,
    /// Training-window points the ensemble must stay clear of
    #[arg(long, default_value_t = 5000)]
    n_points: usize,
    /// Training-window rollout K
    #[arg(long, default_value_t = 1)]
    rollout: usize,
    /// Days between trajectory starts in the training window
    #[arg(long, default_value_t = 30.0)]
    days_gap: f64,
    /// Hours between points in the training window
    #[arg(long, default_value_t = 6.0)]
    spacing_hours: f64,
    /// Spin-up days of the reference solution
    #[arg(long, default_value_t = 360.0)]
    burn_in_days: f64,
    /// Flat key = value configuration file (flags override file values)
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(1)
                }
            };
        }
    };
    let cli = Cli::from_arg_matches(&matches).expect("matches come from Cli::command()");
    let result = match cli.command {
        Command::GenData(mut args) => {
            let sub = matches.subcommand_matches("gen-data").unwrap();
            merge_gen_data(&mut args, sub).and_then(|()| run_gen_data(&args))
        }
        Command::Train(mut args) => {
            let sub = matches.subcommand_matches("train").unwrap();
            merge_train(&mut args, sub).and_then(|()| run_train(&args))
        }
        Command::Forecast(mut args) => {
            let sub = matches.subcommand_matches("forecast").unwrap();
            merge_forecast(&mut args, sub).and_then(|()| run_forecast(&args))
        }
        Command::Evaluate(mut args) => {
            let sub = matches.subcommand_matches("evaluate").unwrap();
            merge_evaluate(&mut args, sub).and_then(|()| run_evaluate(&args))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

// ------------------------------------------------------------ config merge

fn flag_given(sub: &ArgMatches, id: &str) -> bool {
    sub.value_source(id) == Some(ValueSource::CommandLine)
}

fn load_config(path: &Option<PathBuf>) -> Result<BTreeMap<String, String>, CliError> {
    match path {
        Some(p) => read_config(p),
        None => Ok(BTreeMap::new()),
    }
}

/// Apply one config entry: sets the field unless the flag was given on the
/// command line. Evaluates to false when the key is not in the list.
macro_rules! merge_key {
    ($args:ident, $sub:ident, $key:ident, $value:ident, { $($k:literal => $field:ident),+ $(,)? }) => {
        match $key {
            $($k => {
                if !flag_given($sub, $k) {
                    $args.$field = parse_value($k, $value)?;
                }
                true
            })+
            _ => false,
        }
    };
}

fn unknown_key(key: &str) -> CliError {
    CliError::Usage(format!("unknown config key `{key}`"))
}

/// Required settings may come from the flag or the config file.
fn require<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| {
        CliError::Usage(format!("--{flag} is required (on the command line or in --config)"))
    })
}

fn merge_gen_data(args: &mut GenDataArgs, sub: &ArgMatches) -> Result<(), CliError> {
    for (key, value) in &load_config(&args.config)? {
        let key = key.as_str();
        if key == "n_points" {
            if !flag_given(sub, "n_points") {
                args.n_points = Some(parse_value(key, value)?);
            }
            continue;
        }
        let handled = merge_key!(args, sub, key, value, {
            "rollout" => rollout,
            "seed" => seed,
            "out" => out,
            "days_gap" => days_gap,
            "spacing_hours" => spacing_hours,
            "burn_in_days" => burn_in_days,
            "dim" => dim,
            "forcing" => forcing,
        });
        if !handled {
            return Err(unknown_key(key));
        }
    }
    Ok(())
}

fn merge_train(args: &mut TrainArgs, sub: &ArgMatches) -> Result<(), CliError> {
    for (key, value) in &load_config(&args.config)? {
        let key = key.as_str();
        match key {
            "method" => {
                if !flag_given(sub, "method") {
                    args.method = Some(
                        Method::from_str(value, true)
                            .map_err(|e| CliError::Usage(format!("bad method `{value}`: {e}")))?,
                    );
                }
            }
            "data" => {
                if !flag_given(sub, "data") {
                    args.data = Some(PathBuf::from(value));
                }
            }
            "loss_log" => {
                if !flag_given(sub, "loss_log") {
                    args.loss_log = Some(PathBuf::from(value));
                }
            }
            _ => {
                let handled = merge_key!(args, sub, key, value, {
                    "r" => r,
                    "hidden" => hidden,
                    "epochs" => epochs,
                    "lambda" => lambda,
                    "omega" => omega,
                    "upsilon" => upsilon,
                    "rollout_substeps" => rollout_substeps,
                    "seed" => seed,
                    "base_lr" => base_lr,
                    "max_lr" => max_lr,
                    "cycle_len" => cycle_len,
                    "out" => out,
                });
                if !handled {
                    return Err(unknown_key(key));
                }
            }
        }
    }
    Ok(())
}

fn merge_forecast(args: &mut ForecastArgs, sub: &ArgMatches) -> Result<(), CliError> {
    for (key, value) in &load_config(&args.config)? {
        let key = key.as_str();
        match key {
            "data" => {
                if !flag_given(sub, "data") {
                    args.data = Some(PathBuf::from(value));
                }
            }
            "model" => {
                if !flag_given(sub, "model") {
                    args.model = Some(value.clone());
                }
            }
            "init" => {
                if !flag_given(sub, "init") {
                    args.init = Some(value.clone());
                }
            }
            "days" => {
                if !flag_given(sub, "days") {
                    args.days = Some(parse_value(key, value)?);
                }
            }
            _ => {
                let handled = merge_key!(args, sub, key, value, {
                    "out" => out,
                    "dim" => dim,
                    "forcing" => forcing,
                });
                if !handled {
                    return Err(unknown_key(key));
                }
            }
        }
    }
    Ok(())
}

fn merge_evaluate(args: &mut EvaluateArgs, sub: &ArgMatches) -> Result<(), CliError> {
    for (key, value) in &load_config(&args.config)? {
        let key = key.as_str();
        if key == "models" {
            if !flag_given(sub, "models") {
                args.models = Some(value.clone());
            }
            continue;
        }
        let handled = merge_key!(args, sub, key, value, {
            "days" => days,
            "samples" => samples,
            "seed" => seed,
            "out" => out,
            "dim" => dim,
            "forcing" => forcing,
            "n_points" => n_points,
            "rollout" => rollout,
            "days_gap" => days_gap,
            "spacing_hours" => spacing_hours,
            "burn_in_days" => burn_in_days,
        });
        if !handled {
            return Err(unknown_key(key));
        }
    }
    Ok(())
}

// ------------------------------------------------------------ helpers

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(CliError::Io)?;
    std::fs::rename(&tmp, path).map_err(CliError::Io)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn dataset_config(
    n_points: usize,
    rollout: usize,
    seed: u64,
    days_gap: f64,
    spacing_hours: f64,
    burn_in_days: f64,
    dim: usize,
    forcing: f64,
) -> DatasetConfig {
    DatasetConfig {
        n_points,
        rollout,
        spacing: spacing_hours / HOURS_PER_DAY * UNITS_PER_DAY,
        trajectory_gap: days_gap * UNITS_PER_DAY,
        burn_in: burn_in_days * UNITS_PER_DAY,
        seed,
        forcing,
        dim,
    }
}

// ------------------------------------------------------------ commands

fn run_gen_data(args: &GenDataArgs) -> Result<(), CliError> {
    let cfg = dataset_config(
        require(args.n_points, "n-points")?,
        args.rollout,
        args.seed,
        args.days_gap,
        args.spacing_hours,
        args.burn_in_days,
        args.dim,
        args.forcing,
    );
    let trajectories = generate_dataset(&cfg)?;
    let mut buf = Vec::new();
    write_trajectories(&mut buf, &trajectories).map_err(CliError::Io)?;
    write_atomic(&args.out, &buf)?;
    println!(
        "wrote {} trajectories of {} points each ({} points) to {}",
        trajectories.len(),
        cfg.rollout + 1,
        cfg.n_points,
        args.out.display()
    );
    Ok(())
}

fn write_loss_log(path: &Path, log: &[EpochRecord]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    writeln!(buf, "epoch,lr,loss_total,loss_ae,loss_rinv,loss_full,loss_latent")
        .map_err(CliError::Io)?;
    for rec in log {
        writeln!(
            buf,
            "{},{:e},{:e},{:e},{:e},{:e},{:e}",
            rec.epoch,
            rec.lr,
            rec.loss.total,
            rec.loss.autoencoder,
            rec.loss.right_inverse,
            rec.loss.full_space,
            rec.loss.latent
        )
        .map_err(CliError::Io)?;
    }
    write_atomic(path, &buf)
}

fn run_train(args: &TrainArgs) -> Result<(), CliError> {
    let data = require(args.data.as_ref(), "data")?;
    let method = require(args.method, "method")?;
    let trajectories = load_trajectories(data)?;
    let rom = match method {
        Method::Dmd => {
            let (pairs, dt) = consecutive_pairs(&trajectories)?;
            let model = dmd::fit_dmd(&pairs, args.r, dt)?;
            println!(
                "dmd fit: rank {}, max Re(omega) = {:e}",
                model.rank(),
                model.max_growth_rate()
            );
            Rom::Dmd(model)
        }
        Method::Quad => {
            let model = quadratic::fit_quadratic_rom(&trajectories, args.r)?;
            println!("quadratic manifold fit: rank {}", model.rank());
            Rom::Quadratic(model)
        }
        Method::Ae | Method::Syco => {
            let hyper = NeuralHyper {
                latent_dim: args.r,
                hidden: args.hidden,
                constrained: method == Method::Syco,
                lambda: args.lambda,
                omega: args.omega,
                upsilon: args.upsilon,
            };
            let cfg = TrainConfig {
                epochs: args.epochs,
                substeps_per_interval: args.rollout_substeps,
                beta1: 0.9,
                beta2: 0.95,
                lr: CyclicLrSchedule {
                    base_lr: args.base_lr,
                    max_lr: args.max_lr,
                    cycle_len: args.cycle_len,
                },
                seed: args.seed,
            };
            let (model, log) = train(&trajectories, &cfg, &hyper)?;
            let loss_path = args
                .loss_log
                .clone()
                .unwrap_or_else(|| args.out.with_extension("loss.csv"));
            write_loss_log(&loss_path, &log)?;
            let initial = log.first().map(|r| r.loss.total).unwrap_or(f64::NAN);
            let last = log.last().map(|r| r.loss.total).unwrap_or(f64::NAN);
            println!(
                "trained {} epochs: loss {:e} -> {:e}; loss log at {}",
                log.len(),
                initial,
                last,
                loss_path.display()
            );
            Rom::Neural(model)
        }
    };
    let mut buf = Vec::new();
    persist::write_model(&mut buf, &rom)?;
    write_atomic(&args.out, &buf)?;
    println!("wrote {} model to {}", rom.kind(), args.out.display());
    Ok(())
}

fn resolve_model(spec: &str, dim: usize, forcing: f64) -> Result<Rom, CliError> {
    if spec == "truth" {
        Ok(Rom::Truth(Lorenz96::new(dim, forcing)?))
    } else {
        Ok(persist::load_model(spec)?)
    }
}

fn resolve_init(args: &ForecastArgs) -> Result<DVector<f64>, CliError> {
    let init = require(args.init.as_ref(), "init")?;
    if let Ok(index) = init.parse::<usize>() {
        let data = args.data.as_ref().ok_or_else(|| {
            CliError::Usage("--init <row index> requires --data <trajectory csv>".into())
        })?;
        let trajectories = load_trajectories(data)?;
        let states: Vec<&DVector<f64>> =
            trajectories.iter().flat_map(|t| t.states().iter()).collect();
        states.get(index).map(|s| (*s).clone()).ok_or_else(|| {
            CliError::Usage(format!(
                "row index {index} out of range: {} holds {} states",
                data.display(),
                states.len()
            ))
        })
    } else {
        let values: Result<Vec<f64>, _> =
            init.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let values = values.map_err(|_| {
            CliError::Usage(format!(
                "--init must be a row index or comma-separated reals, got `{init}`"
            ))
        })?;
        Ok(DVector::from_vec(values))
    }
}

fn run_forecast(args: &ForecastArgs) -> Result<(), CliError> {
    let days = require(args.days, "days")?;
    if !(days > 0.0 && days.is_finite()) {
        return Err(CliError::Usage("--days must be positive and finite".into()));
    }
    let model = require(args.model.as_ref(), "model")?;
    let rom = resolve_model(model, args.dim, args.forcing)?;
    let x0 = resolve_init(args)?;
    if x0.len() != rom.state_dim() {
        return Err(CliError::Usage(format!(
            "initial state has {} components but the {} model expects {}",
            x0.len(),
            rom.kind(),
            rom.state_dim()
        )));
    }
    let mut buf = Vec::new();
    eval::flow_export(&rom, &x0, days, &SolverConfig::default(), &mut buf)?;
    write_atomic(&args.out, &buf)?;
    let text = String::from_utf8_lossy(&buf);
    let rows = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
    let diverged = text.lines().any(|l| l.starts_with("# diverged"));
    println!(
        "wrote {rows} rows to {}{}",
        args.out.display(),
        if diverged { " (forecast diverged; file truncated)" } else { "" }
    );
    Ok(())
}

fn parse_days(spec: &str) -> Result<Vec<u32>, CliError> {
    const MAX_DAYS: u32 = 10_000;
    let bad = || CliError::Usage(format!("--days must be `A..B` or a single bound, got `{spec}`"));
    let (lo, hi) = match spec.split_once("..") {
        Some((a, b)) => (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        ),
        None => (1, spec.trim().parse().map_err(|_| bad())?),
    };
    if lo == 0 || hi < lo || hi > MAX_DAYS {
        return Err(bad());
    }
    Ok((lo..=hi).collect())
}

fn run_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let days = parse_days(&args.days)?;
    let truth = Lorenz96::new(args.dim, args.forcing)?;

    let model_list = require(args.models.as_ref(), "models")?;
    let mut models: Vec<(String, Rom)> = Vec::new();
    let mut name_counts: BTreeMap<String, usize> = BTreeMap::new();
    for spec in model_list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match resolve_model(spec, args.dim, args.forcing) {
            Ok(rom) if rom.state_dim() != args.dim => {
                eprintln!(
                    "warning: skipping model `{spec}`: state dimension {} does not match the \
                     truth dimension {}",
                    rom.state_dim(),
                    args.dim
                );
            }
            Ok(rom) => {
                let base = rom.kind().to_string();
                let count = name_counts.entry(base.clone()).or_insert(0);
                *count += 1;
                let name = if *count == 1 { base } else { format!("{base}_{count}") };
                models.push((name, rom));
            }
            Err(e) => eprintln!("warning: skipping model `{spec}`: {e}"),
        }
    }
    if models.is_empty() {
        return Err(CliError::Usage("no model could be loaded".into()));
    }

    let cfg = dataset_config(
        args.n_points,
        args.rollout,
        args.seed,
        args.days_gap,
        args.spacing_hours,
        args.burn_in_days,
        args.dim,
        args.forcing,
    );
    let initial = generate_forecast_ensemble(args.samples, &cfg)?;

    let reports =
        eval::kl_experiment(&truth, &models, &initial, &days, &SolverConfig::default())?;
    let mut buf = Vec::new();
    eval::write_kl_reports(&mut buf, &reports).map_err(CliError::Io)?;
    write_atomic(&args.out, &buf)?;
    println!(
        "evaluated {} models over {} days ({} rows) into {}",
        models.len(),
        days.len(),
        reports.len(),
        args.out.display()
    );
    Ok(())
}
