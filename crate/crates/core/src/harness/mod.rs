//! Simulation, Monte Carlo sweeps and their CSV output.

mod scenario;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::empirical::{DecisionRule, EmpiricalError, EnvPairDataset, PairMoments, DEFAULT_BLOCKS};
use crate::estimators::{run_method, EstimatorConfig, EstimatorError, Method};
use crate::model::{ModelError, ScenarioSpec};
use crate::noise::{derive_seed, stream_rng, NoiseError};

pub use scenario::{draw_scenario, Range, ScenarioTemplate};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "MOMENT_IDENT_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("config TOML: {0}")]
    Toml(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("results CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Empirical(#[from] EmpiricalError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// `n` samples per environment from the structural equations. Each noise
/// of each environment has its own generator stream under `seed`.
pub fn simulate(scenario: &ScenarioSpec, n: usize, seed: u64) -> EnvPairDataset {
    let mut out: [(Vec<f64>, Vec<f64>); 2] = Default::default();
    for (i, env) in scenario.envs().into_iter().enumerate() {
        let mut u = vec![0.0; n];
        let mut t = vec![0.0; n];
        let mut y = vec![0.0; n];
        env.noise_u.fill(&mut stream_rng(seed, 3 * i as u64), &mut u);
        env.noise_t.fill(&mut stream_rng(seed, 3 * i as u64 + 1), &mut t);
        env.noise_y.fill(&mut stream_rng(seed, 3 * i as u64 + 2), &mut y);
        for k in 0..n {
            t[k] += env.alpha * u[k];
            y[k] += env.beta * t[k] + env.gamma * u[k];
        }
        out[i] = (t, y);
    }
    let [(t1, y1), (t2, y2)] = out;
    EnvPairDataset { t1, y1, t2, y2 }
}

fn default_replicates() -> usize {
    100
}

fn default_sizes() -> Vec<usize> {
    vec![1 << 12, 1 << 14, 1 << 16, 1 << 18, 1 << 20]
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_z() -> f64 {
    DecisionRule::default().z
}

fn default_max_order() -> usize {
    crate::empirical::DEFAULT_MAX_ORDER
}

fn default_families() -> Vec<String> {
    vec!["exponential".to_string()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_sizes")]
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_z")]
    pub z_threshold: f64,
    #[serde(default = "default_max_order")]
    pub max_order: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    /// Draw the scenario once instead of once per (size, replicate).
    #[serde(default)]
    pub freeze_params: bool,
    #[serde(default = "default_families")]
    pub noise_family: Vec<String>,
    pub scenario: ScenarioTemplate,
}

impl ExperimentConfig {
    pub fn new(seed: u64, scenario: ScenarioTemplate) -> Self {
        ExperimentConfig {
            seed,
            replicates: default_replicates(),
            sample_sizes: default_sizes(),
            methods: default_methods(),
            z_threshold: default_z(),
            max_order: default_max_order(),
            output_path: None,
            freeze_params: false,
            noise_family: default_families(),
            scenario,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Toml(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text =
            fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: &str| Err(HarnessError::InvalidConfig(msg.to_string()));
        if self.sample_sizes.is_empty() {
            return bad("sample_sizes is empty");
        }
        if self.sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return bad("sample_sizes must be strictly ascending");
        }
        if self.sample_sizes[0] < 2 {
            return bad("sample sizes must be at least 2");
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if self.methods.is_empty() {
            return bad("methods is empty");
        }
        if !(self.z_threshold.is_finite() && self.z_threshold > 0.0) {
            return bad("z_threshold must be positive");
        }
        if !(3..=crate::noise::MAX_NOISE_ORDER).contains(&self.max_order) {
            return bad("max_order must be between 3 and 16");
        }
        if self.noise_family.is_empty() {
            return bad("noise_family is empty");
        }
        for family in &self.noise_family {
            draw_scenario(&self.scenario, family, 0)?;
        }
        Ok(())
    }

    pub fn estimator_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            rule: DecisionRule::with_z(self.z_threshold),
            max_order: self.max_order,
            blocks: DEFAULT_BLOCKS,
        }
    }

    fn row_seed(&self, family: usize, n: usize, rep: usize) -> u64 {
        derive_seed(self.seed, &[family as u64, n as u64, rep as u64])
    }

    /// Scenario and dataset behind the results rows of one (family, n, rep).
    pub fn replay(&self, family: usize, n: usize, rep: usize) -> Result<(ScenarioSpec, EnvPairDataset), HarnessError> {
        let name = self
            .noise_family
            .get(family)
            .ok_or_else(|| HarnessError::InvalidConfig(format!("no noise family at index {family}")))?;
        let row_seed = self.row_seed(family, n, rep);
        let param_seed = if self.freeze_params {
            derive_seed(self.seed, &[family as u64, u64::MAX])
        } else {
            derive_seed(row_seed, &[1])
        };
        let scenario = draw_scenario(&self.scenario, name, param_seed)?;
        let data = simulate(&scenario, n, derive_seed(row_seed, &[2]));
        Ok((scenario, data))
    }
}

/// One (dataset, method) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub noise_family: String,
    pub n: usize,
    pub rep: usize,
    pub method: Method,
    pub beta_true: f64,
    pub beta_hat: Option<f64>,
    pub rel_bias: Option<f64>,
    pub order_found: Option<usize>,
    pub branch: Option<String>,
    pub error: Option<String>,
}

fn rows_for(cfg: &ExperimentConfig, family: usize, n: usize, rep: usize) -> Result<Vec<ResultRow>, HarnessError> {
    let (scenario, data) = cfg.replay(family, n, rep)?;
    let est = cfg.estimator_config();
    let beta = scenario.beta();
    let moments = PairMoments::from_dataset(&data, est.max_order, est.blocks);
    let label = cfg.scenario.family_label(&cfg.noise_family[family]);
    Ok(cfg
        .methods
        .iter()
        .map(|&method| {
            let outcome = match &moments {
                Ok(pm) => run_method(method, pm, &est).map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            };
            let mut row = ResultRow {
                scenario: scenario.change.as_str().to_string(),
                noise_family: label.clone(),
                n,
                rep,
                method,
                beta_true: beta,
                beta_hat: None,
                rel_bias: None,
                order_found: None,
                branch: None,
                error: None,
            };
            match outcome {
                Ok(report) => {
                    let b = report.beta_hat();
                    row.beta_hat = b;
                    row.rel_bias = b.map(|b| b / beta - 1.0);
                    row.order_found = report.order_found;
                    row.branch = report.branch.map(|b| b.as_str().to_string());
                }
                Err(e) => row.error = Some(e),
            }
            row
        })
        .collect())
}

/// Runs every (family, size, replicate) in parallel. Row order is fixed by
/// (family, size, replicate, method) regardless of the worker count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    cfg.validate()?;
    let tasks: Vec<(usize, usize, usize)> = (0..cfg.noise_family.len())
        .flat_map(|f| cfg.sample_sizes.iter().flat_map(move |&n| (0..cfg.replicates).map(move |rep| (f, n, rep))))
        .collect();
    let run = || -> Result<Vec<ResultRow>, HarnessError> {
        let chunks: Result<Vec<Vec<ResultRow>>, HarnessError> =
            tasks.par_iter().map(|&(f, n, rep)| rows_for(cfg, f, n, rep)).collect();
        Ok(chunks?.into_iter().flatten().collect())
    };
    match thread_cap()? {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| HarnessError::ThreadPool(e.to_string()))?
            .install(run),
        None => run(),
    }
}

fn thread_cap() -> Result<Option<usize>, HarnessError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(HarnessError::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(None),
    }
}

/// Writes rows with the header
/// `scenario,noise_family,n,rep,method,beta_true,beta_hat,rel_bias,order_found,branch,error`.
pub fn write_results<W: Write>(rows: &[ResultRow], writer: W) -> Result<(), HarnessError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush().map_err(|source| HarnessError::Io { path: "<results>".into(), source })?;
    Ok(())
}

pub fn read_results<R: std::io::Read>(reader: R) -> Result<Vec<ResultRow>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(reader);
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

/// Writes to `path` via a temporary sibling so readers never see a partial file.
pub fn write_results_file(rows: &[ResultRow], path: &Path) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io { path: path.display().to_string(), source };
    let tmp = path.with_extension("csv.partial");
    let mut buf = Vec::new();
    write_results(rows, &mut buf)?;
    fs::write(&tmp, buf).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// One method's outcome on exact population moments.
pub type OracleOutcome = (Method, Result<crate::estimators::EstimateReport, EstimatorError>);

/// Every method evaluated on the scenario's exact population moments.
pub fn oracle_reports(scenario: &ScenarioSpec, cfg: &EstimatorConfig) -> Result<Vec<OracleOutcome>, HarnessError> {
    let pm = PairMoments::from_population(scenario, cfg.max_order)?;
    Ok(Method::ALL.into_iter().map(|m| (m, run_method(m, &pm, cfg))).collect())
}

/// Method whose assumptions match a single change, if any.
pub fn matching_method(change: crate::model::ChangeKind) -> Option<Method> {
    use crate::model::ChangeKind::*;
    match change {
        EpsT => Some(Method::Alg1),
        EpsU => Some(Method::Alg2),
        Gamma => Some(Method::Alg3),
        Alpha => Some(Method::Alg4),
        EpsY | EpsTAndEpsU => None,
    }
}
