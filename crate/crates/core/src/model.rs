//! Ground-truth linear SCMs, their exact population moments, and the
//! constructions showing where the treatment effect is not identifiable.
//!
//! In each environment
//!
//! ```text
//! U = eps_u
//! T = alpha * U + eps_t
//! Y = beta * T + gamma * U + eps_y
//! ```
//!
//! with mutually independent, zero-mean noises.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noise::{binomial, NoiseError, NoiseSpec};

/// Default highest `p + q` the oracle evaluates.
pub const ORACLE_MAX_ORDER: usize = 12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("moment order {order} exceeds oracle maximum {max}")]
    OrderOverflow { order: usize, max: usize },
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("alpha must be nonzero")]
    AlphaZero,
    #[error("expected a scenario with change '{expected}', got '{found}'")]
    WrongChange { expected: ChangeKind, found: ChangeKind },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("scenario TOML: {0}")]
    Toml(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Coefficients and noises of one environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScmParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub noise_u: NoiseSpec,
    pub noise_t: NoiseSpec,
    pub noise_y: NoiseSpec,
}

/// Which mechanism differs between the two environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    EpsT,
    EpsU,
    Gamma,
    Alpha,
    EpsY,
    EpsTAndEpsU,
}

impl ChangeKind {
    pub const ALL: [ChangeKind; 6] = [
        ChangeKind::EpsT,
        ChangeKind::EpsU,
        ChangeKind::Gamma,
        ChangeKind::Alpha,
        ChangeKind::EpsY,
        ChangeKind::EpsTAndEpsU,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ChangeKind::EpsT => "eps_t",
            ChangeKind::EpsU => "eps_u",
            ChangeKind::Gamma => "gamma",
            ChangeKind::Alpha => "alpha",
            ChangeKind::EpsY => "eps_y",
            ChangeKind::EpsTAndEpsU => "eps_t_and_eps_u",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for ChangeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A pair of environments sharing `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub change: ChangeKind,
    pub env1: ScmParams,
    pub env2: ScmParams,
}

/// One exact mixed moment `E[T^p Y^q]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationMoment {
    pub p: usize,
    pub q: usize,
    pub value: f64,
}

impl ScmParams {
    /// Coefficient of `eps_u` in `Y` once `T` is substituted.
    pub fn total_u_effect(&self) -> f64 {
        self.alpha * self.beta + self.gamma
    }

    pub fn environments_equal_except(&self, other: &ScmParams) -> Vec<&'static str> {
        let mut diff = Vec::new();
        if self.alpha != other.alpha {
            diff.push("alpha");
        }
        if self.beta != other.beta {
            diff.push("beta");
        }
        if self.gamma != other.gamma {
            diff.push("gamma");
        }
        if self.noise_u != other.noise_u {
            diff.push("noise_u");
        }
        if self.noise_t != other.noise_t {
            diff.push("noise_t");
        }
        if self.noise_y != other.noise_y {
            diff.push("noise_y");
        }
        diff
    }
}

impl ScenarioSpec {
    pub fn new(change: ChangeKind, env1: ScmParams, env2: ScmParams) -> Self {
        ScenarioSpec { change, env1, env2 }
    }

    pub fn beta(&self) -> f64 {
        self.env1.beta
    }

    pub fn envs(&self) -> [&ScmParams; 2] {
        [&self.env1, &self.env2]
    }

    /// Checks that the environments share `beta` and differ exactly in the
    /// fields named by `change`.
    pub fn validate(&self) -> Result<(), ModelError> {
        let expected: &[&str] = match self.change {
            ChangeKind::EpsT => &["noise_t"],
            ChangeKind::EpsU => &["noise_u"],
            ChangeKind::Gamma => &["gamma"],
            ChangeKind::Alpha => &["alpha"],
            ChangeKind::EpsY => &["noise_y"],
            ChangeKind::EpsTAndEpsU => &["noise_u", "noise_t"],
        };
        let diff = self.env1.environments_equal_except(&self.env2);
        if diff.contains(&"beta") {
            return Err(ModelError::InvalidScenario("beta must be identical in both environments".to_string()));
        }
        if diff != expected {
            return Err(ModelError::InvalidScenario(format!(
                "change '{}' requires exactly {:?} to differ, found {:?}",
                self.change, expected, diff
            )));
        }
        for env in self.envs() {
            if ![env.alpha, env.beta, env.gamma].iter().all(|v| v.is_finite()) {
                return Err(ModelError::InvalidScenario("non-finite coefficient".to_string()));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        toml::from_str(text).map_err(|e| ModelError::Toml(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }
}

/// Exact `E[T^p Y^q]` for one environment.
pub fn population_moment(scm: &ScmParams, p: usize, q: usize) -> Result<f64, ModelError> {
    let order = p + q;
    if order > ORACLE_MAX_ORDER {
        return Err(ModelError::OrderOverflow { order, max: ORACLE_MAX_ORDER });
    }
    let noise = NoiseMoments::new(scm, order)?;
    Ok(noise.mixed(scm, p, q))
}

/// Every `E[T^p Y^q]` with `p + q <= max_order`.
pub fn population_moments(scm: &ScmParams, max_order: usize) -> Result<Vec<PopulationMoment>, ModelError> {
    if max_order > ORACLE_MAX_ORDER {
        return Err(ModelError::OrderOverflow { order: max_order, max: ORACLE_MAX_ORDER });
    }
    let noise = NoiseMoments::new(scm, max_order)?;
    let mut out = Vec::new();
    for order in 0..=max_order {
        for q in 0..=order {
            let p = order - q;
            out.push(PopulationMoment { p, q, value: noise.mixed(scm, p, q) });
        }
    }
    Ok(out)
}

struct NoiseMoments {
    u: Vec<f64>,
    t: Vec<f64>,
    y: Vec<f64>,
}

impl NoiseMoments {
    fn new(scm: &ScmParams, order: usize) -> Result<Self, ModelError> {
        Ok(NoiseMoments {
            u: scm.noise_u.raw_moments(order)?,
            t: scm.noise_t.raw_moments(order)?,
            y: scm.noise_y.raw_moments(order)?,
        })
    }

    // T = alpha u + t, Y = A u + beta t + y; expand both powers and take
    // expectations factor by factor.
    fn mixed(&self, scm: &ScmParams, p: usize, q: usize) -> f64 {
        let a_u = scm.total_u_effect();
        let mut total = 0.0;
        for a in 0..=p {
            let t_part = binomial(p, a) * scm.alpha.powi(a as i32);
            for c in 0..=q {
                for d in 0..=(q - c) {
                    let e = q - c - d;
                    let multinomial = binomial(q, c) * binomial(q - c, d);
                    let coeff = multinomial * a_u.powi(c as i32) * scm.beta.powi(d as i32);
                    let term = self.u[a + c] * self.t[p - a + d] * self.y[e];
                    if term != 0.0 {
                        total += t_part * coeff * term;
                    }
                }
            }
        }
        total
    }
}

/// Observationally equivalent parameters with `alpha = 1`: `eps_u` absorbs
/// the old `alpha` and `gamma` is divided by it.
pub fn rescale_alpha_to_one(scm: &ScmParams) -> Result<ScmParams, ModelError> {
    if scm.alpha == 0.0 {
        return Err(ModelError::AlphaZero);
    }
    if scm.alpha == 1.0 {
        return Ok(*scm);
    }
    Ok(ScmParams { alpha: 1.0, gamma: scm.gamma / scm.alpha, noise_u: scm.noise_u.scaled(scm.alpha), ..*scm })
}

// Swap the roles of the confounder and the treatment noise:
// eps_u' = eps_t, eps_t' = alpha eps_u, alpha' = 1, gamma' = -gamma/alpha,
// beta' = beta + gamma/alpha. T and Y are unchanged as random variables.
fn swap_roles(env: &ScmParams) -> Result<ScmParams, ModelError> {
    if env.alpha == 0.0 {
        return Err(ModelError::AlphaZero);
    }
    Ok(ScmParams {
        alpha: 1.0,
        beta: env.beta + env.gamma / env.alpha,
        gamma: -env.gamma / env.alpha,
        noise_u: env.noise_t,
        noise_t: env.noise_u.scaled(env.alpha),
        noise_y: env.noise_y,
    })
}

/// Alternative scenario with the same observational distributions in both
/// environments but treatment effect `beta + gamma/alpha`, for a change in
/// both `eps_t` and `eps_u`.
pub fn construct_counterexample(scenario: &ScenarioSpec) -> Result<ScenarioSpec, ModelError> {
    if scenario.change != ChangeKind::EpsTAndEpsU {
        return Err(ModelError::WrongChange { expected: ChangeKind::EpsTAndEpsU, found: scenario.change });
    }
    Ok(ScenarioSpec {
        change: ChangeKind::EpsTAndEpsU,
        env1: swap_roles(&scenario.env1)?,
        env2: swap_roles(&scenario.env2)?,
    })
}

/// Same construction for a change in `eps_y` alone; each environment keeps
/// its own `eps_y`.
pub fn construct_epsy_counterexample(scenario: &ScenarioSpec) -> Result<ScenarioSpec, ModelError> {
    if scenario.change != ChangeKind::EpsY {
        return Err(ModelError::WrongChange { expected: ChangeKind::EpsY, found: scenario.change });
    }
    Ok(ScenarioSpec { change: ChangeKind::EpsY, env1: swap_roles(&scenario.env1)?, env2: swap_roles(&scenario.env2)? })
}
