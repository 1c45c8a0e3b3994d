//! Command-line interface. Results go to stdout as JSON or CSV; failures go
//! to stderr as a one-line JSON object with a distinct exit code per kind.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;

use crate::detector::{detect_source, estimate_auto};
use crate::empirical::{DecisionRule, EmpiricalError, EnvPairDataset, DEFAULT_BLOCKS, DEFAULT_MAX_ORDER};
use crate::estimators::{
    estimate_alpha, estimate_eps_t, estimate_eps_u, estimate_gamma, EstimatorConfig, EstimatorError,
};
use crate::harness::{
    matching_method, oracle_reports, run_experiment, simulate, write_results, write_results_file, ExperimentConfig,
    HarnessError,
};
use crate::model::{ModelError, ScenarioSpec};

#[derive(Debug, Parser)]
#[command(name = "moment-ident", version, about = "Treatment effects from two environments via higher-order moments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ChangeArg {
    Auto,
    EpsT,
    EpsU,
    Gamma,
    Alpha,
}

#[derive(Debug, clap::Args)]
struct EstimatorArgs {
    /// z threshold for deciding that a statistic is nonzero
    #[arg(long, default_value_t = DecisionRule::default().z)]
    z: f64,
    /// Highest moment order searched
    #[arg(long = "max-order", default_value_t = DEFAULT_MAX_ORDER)]
    max_order: usize,
}

impl EstimatorArgs {
    fn config(&self) -> Result<EstimatorConfig, CliError> {
        if !(self.z.is_finite() && self.z > 0.0) {
            return Err(CliError::Schema("--z must be positive".into()));
        }
        if !(3..=crate::noise::MAX_NOISE_ORDER).contains(&self.max_order) {
            return Err(CliError::Schema("--max-order must be between 3 and 16".into()));
        }
        Ok(EstimatorConfig { rule: DecisionRule::with_z(self.z), max_order: self.max_order, blocks: DEFAULT_BLOCKS })
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a dataset (env,t,y CSV) from a scenario TOML
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout if absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the treatment effect from a dataset CSV
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        change: ChangeArg,
        #[command(flatten)]
        est: EstimatorArgs,
    },
    /// Classify which mechanism changed between the environments
    Detect {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        est: EstimatorArgs,
    },
    /// Run a Monte Carlo sweep from a config TOML
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Results CSV; overrides output_path from the config, stdout if neither is set
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every estimator on a scenario's exact population moments
    Oracle {
        #[arg(long)]
        scenario: PathBuf,
        #[command(flatten)]
        est: EstimatorArgs,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Schema(String),
    #[error(transparent)]
    Estimation(#[from] EstimatorError),
    #[error("writing output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Input(_) => "input",
            CliError::Schema(_) => "schema",
            CliError::Estimation(_) => "estimation",
            CliError::Output(_) => "output",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 3,
            CliError::Schema(_) => 4,
            CliError::Estimation(_) => 5,
            CliError::Output(_) => 6,
        }
    }
}

impl From<EmpiricalError> for CliError {
    fn from(e: EmpiricalError) -> Self {
        match e {
            EmpiricalError::Io { .. } => CliError::Input(e.to_string()),
            _ => CliError::Schema(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io { .. } => CliError::Input(e.to_string()),
            _ => CliError::Schema(e.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Io { .. } => CliError::Input(e.to_string()),
            HarnessError::Model(m) => m.into(),
            HarnessError::Empirical(m) => m.into(),
            _ => CliError::Schema(e.to_string()),
        }
    }
}

fn print_json(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.into()))?;
    writeln!(out, "{text}")?;
    Ok(())
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { scenario, n, seed, out: path } => {
            if n < 2 {
                return Err(CliError::Schema("--n must be at least 2".into()));
            }
            let spec = ScenarioSpec::load(&scenario)?;
            let data = simulate(&spec, n, seed);
            match path {
                Some(path) => {
                    let mut buf = Vec::new();
                    data.write_csv(&mut buf)?;
                    std::fs::write(&path, buf)?;
                }
                None => data.write_csv(&mut *out)?,
            }
        }
        Command::Estimate { input, change, est } => {
            let cfg = est.config()?;
            let data = EnvPairDataset::load(&input)?;
            match change {
                ChangeArg::Auto => {
                    let (verdict, report) = estimate_auto(&data, &cfg)?;
                    print_json(out, &json!({ "verdict": verdict, "report": report }))?;
                }
                other => {
                    let report = match other {
                        ChangeArg::EpsT => estimate_eps_t(&data, &cfg)?,
                        ChangeArg::EpsU => estimate_eps_u(&data, &cfg)?,
                        ChangeArg::Gamma => estimate_gamma(&data, &cfg)?,
                        ChangeArg::Alpha => estimate_alpha(&data, &cfg)?,
                        ChangeArg::Auto => unreachable!(),
                    };
                    print_json(out, &report)?;
                }
            }
        }
        Command::Detect { input, est } => {
            let cfg = est.config()?;
            let data = EnvPairDataset::load(&input)?;
            print_json(out, &detect_source(&data, &cfg)?)?;
        }
        Command::Experiment { config, out: path } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows = run_experiment(&cfg)?;
            match path.or(cfg.output_path.clone()) {
                Some(path) => write_results_file(&rows, &path)?,
                None => write_results(&rows, &mut *out)?,
            }
        }
        Command::Oracle { scenario, est } => {
            let cfg = est.config()?;
            let spec = ScenarioSpec::load(&scenario)?;
            spec.validate()?;
            let beta = spec.beta();
            let matching = matching_method(spec.change);
            let results: Vec<_> = oracle_reports(&spec, &cfg)?
                .into_iter()
                .map(|(method, outcome)| match outcome {
                    Ok(report) => json!({
                        "method": method,
                        "matches_change": Some(method) == matching,
                        "beta_hat": report.beta_hat(),
                        "abs_error": report.beta_hat().map(|b| (b - beta).abs()),
                        "order_found": report.order_found,
                        "branch": report.branch,
                    }),
                    Err(e) => json!({
                        "method": method,
                        "matches_change": Some(method) == matching,
                        "error": e.to_string(),
                    }),
                })
                .collect();
            print_json(out, &json!({ "change": spec.change, "beta": beta, "results": results }))?;
        }
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            if code == 0 {
                let _ = write!(out, "{e}");
            } else {
                let _ = writeln!(err, "{}", json!({ "error": "usage", "message": e.to_string().trim() }));
            }
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", json!({ "error": e.kind(), "message": e.to_string() }));
            e.exit_code()
        }
    }
}
