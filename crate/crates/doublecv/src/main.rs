//! Command-line front end: train on the toy objective or the autoencoder and
//! write metrics, or run the enumeration self-checks.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use doublecv::data::Dataset;
use doublecv::error::{Error, Result};
use doublecv::estimators::EstimatorKind;
use doublecv::metrics::{write_metrics, MetricsFormat, StepRecord};
use doublecv::oracle::run_gate_checks;
use doublecv::train::{run_training, ObjectiveSpec, OptimizerKind, TrainConfig};
use doublecv::vae::Likelihood;

#[derive(Parser)]
#[command(
    name = "doublecv",
    about = "Score-function gradient estimators with double control variates",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the factorized Bernoulli toy problem.
    Toy(ToyArgs),
    /// Train a discrete-latent variational autoencoder.
    Vae(VaeArgs),
    /// Run the exhaustive-enumeration self-check battery.
    Check,
}

#[derive(Args)]
struct CommonArgs {
    /// Gradient estimator: reinforce|rloo|rstar|double-cv|double-cv-mf|
    /// half-bxk|half-bxj|muprop|disarm.
    #[arg(long, default_value = "double-cv")]
    estimator: String,
    /// Samples per gradient estimate.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Training steps.
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    /// Learning rate for the variational parameters.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Learning rate for the control-variate strength.
    #[arg(long, default_value_t = 1e-3)]
    alpha_lr: f64,
    /// RNG seed; together with the configuration it fully determines the
    /// metrics file.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probe the gradient variance (and emit a record) every this many steps.
    #[arg(long, default_value_t = 100)]
    probe_every: usize,
    /// Replicates per variance probe.
    #[arg(long, default_value_t = 100)]
    probe_reps: usize,
    /// Optimizer for the parameter updates: adam|sgd.
    #[arg(long, default_value = "adam")]
    optimizer: String,
    /// Metrics output path.
    #[arg(long)]
    out: PathBuf,
    /// Metrics format: csv|jsonl.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Record real elapsed seconds instead of zeros. Off by default so that
    /// equal seeds produce byte-identical files.
    #[arg(long)]
    wall_clock: bool,
}

#[derive(Args)]
struct ToyArgs {
    /// Latent dimension.
    #[arg(long, default_value_t = 200)]
    dim: usize,
    /// Target constant of the per-coordinate quadratic.
    #[arg(long, default_value_t = 0.499)]
    p0: f64,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct VaeArgs {
    /// Data source: `synthetic` or `idx:PATH` pointing at an IDX image file.
    #[arg(long, default_value = "synthetic")]
    dataset: String,
    /// Observation model: bernoulli|gaussian.
    #[arg(long, default_value = "bernoulli")]
    likelihood: String,
    /// Latent dimension.
    #[arg(long, default_value_t = 16)]
    latent: usize,
    /// Hidden width of the two-hidden-layer encoder and decoder.
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    /// Minibatch size.
    #[arg(long, default_value_t = 50)]
    batch: usize,
    /// Learning rate for the decoder parameters.
    #[arg(long, default_value_t = 1e-3)]
    theta_lr: f64,
    #[command(flatten)]
    common: CommonArgs,
}

fn parse_estimator(name: &str) -> Result<EstimatorKind> {
    EstimatorKind::parse(name).map_err(|_| {
        let names: Vec<&str> = EstimatorKind::ALL.iter().map(|k| k.name()).collect();
        Error::InvalidArgument(format!(
            "unknown estimator '{name}'; expected one of: {}",
            names.join(", ")
        ))
    })
}

fn parse_optimizer(name: &str) -> Result<OptimizerKind> {
    match name {
        "adam" => Ok(OptimizerKind::Adam),
        "sgd" => Ok(OptimizerKind::Sgd),
        other => Err(Error::InvalidArgument(format!(
            "unknown optimizer '{other}'; expected adam or sgd"
        ))),
    }
}

fn parse_format(name: &str) -> Result<MetricsFormat> {
    MetricsFormat::parse(name).ok_or_else(|| {
        Error::InvalidArgument(format!("unknown format '{name}'; expected csv or jsonl"))
    })
}

fn parse_likelihood(name: &str) -> Result<Likelihood> {
    match name {
        "bernoulli" => Ok(Likelihood::Bernoulli),
        "gaussian" => Ok(Likelihood::Gaussian),
        other => Err(Error::InvalidArgument(format!(
            "unknown likelihood '{other}'; expected bernoulli or gaussian"
        ))),
    }
}

fn parse_dataset(spec: &str, seed: u64) -> Result<Dataset> {
    if spec == "synthetic" {
        return Ok(Dataset::synthetic(512, 8, 8, seed));
    }
    if let Some(path) = spec.strip_prefix("idx:") {
        return doublecv::data::load_mnist_idx(std::path::Path::new(path), None);
    }
    Err(Error::InvalidArgument(format!(
        "unknown dataset '{spec}'; expected 'synthetic' or 'idx:PATH'"
    )))
}

fn build_config(common: &CommonArgs, objective: ObjectiveSpec, theta_lr: f64) -> Result<TrainConfig> {
    let mut config = TrainConfig::new(objective, parse_estimator(&common.estimator)?);
    config.k = common.k;
    config.steps = common.steps;
    config.seed = common.seed;
    config.lr = common.lr;
    config.theta_lr = theta_lr;
    config.alpha_lr = common.alpha_lr;
    config.optimizer = parse_optimizer(&common.optimizer)?;
    config.probe_every = common.probe_every;
    config.probe_reps = common.probe_reps;
    Ok(config)
}

fn train_and_write(config: &TrainConfig, common: &CommonArgs) -> Result<()> {
    let format = parse_format(&common.format)?;
    let outcome = run_training(config)?;
    let records: Vec<StepRecord> = if common.wall_clock {
        outcome.records
    } else {
        outcome
            .records
            .into_iter()
            .map(|r| StepRecord { wall_secs: 0.0, ..r })
            .collect()
    };
    write_metrics(&records, &common.out, format)?;
    eprintln!(
        "wrote {} records to {} ({} update evaluations, {} probe evaluations)",
        records.len(),
        common.out.display(),
        outcome.train_evals,
        outcome.probe_evals,
    );
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Toy(args) => {
            let objective = ObjectiveSpec::Toy { dim: args.dim, p0: args.p0 };
            let config = build_config(&args.common, objective, args.common.lr)?;
            train_and_write(&config, &args.common)?;
            Ok(true)
        }
        Command::Vae(args) => {
            let objective = ObjectiveSpec::Vae {
                dataset: parse_dataset(&args.dataset, args.common.seed)?,
                likelihood: parse_likelihood(&args.likelihood)?,
                latent: args.latent,
                hidden: args.hidden,
                minibatch: args.batch,
            };
            let config = build_config(&args.common, objective, args.theta_lr)?;
            train_and_write(&config, &args.common)?;
            Ok(true)
        }
        Command::Check => {
            let checks = run_gate_checks();
            let mut all_pass = true;
            for check in &checks {
                let status = if check.pass { "PASS" } else { "FAIL" };
                println!("{status} {} - {}", check.name, check.detail);
                all_pass &= check.pass;
            }
            Ok(all_pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
