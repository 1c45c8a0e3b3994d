//! Estimators of the treatment effect from two environments.
//!
//! Each algorithm is written against [`PairMoments`], so the same code runs
//! on sample moments (with jackknife standard errors driving every
//! "is this zero" decision) and on exact population moments from the model
//! oracle. The `estimate_*` functions are the dataset-level entry points.

mod alpha;
mod gamma;
mod noise_change;
mod ols;
mod ratio;

use std::collections::BTreeMap;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::empirical::{DecisionRule, EmpiricalError, EnvPairDataset, PairMoments, DEFAULT_BLOCKS, DEFAULT_MAX_ORDER};
use crate::model::ModelError;

pub use alpha::{alg4, quadratic_roots, QuadraticRoots};
pub use gamma::alg3;
pub use noise_change::{alg1, alg2};
pub use ols::{ols_combined_moments, ols_separate_moments, residualize};
pub use ratio::{get_ratio, ratio_from_table, RatioOutcome};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("no moment of T up to order {max_order} differs between environments")]
    NoMomentDifference { max_order: usize },
    #[error("no shared non-Gaussian component found up to order {max_order}")]
    SharedComponentNotFound { max_order: usize },
    #[error("second variable of the ratio has zero variance")]
    RatioScaleZero,
    #[error("E[YT] does not differ between environments; gamma looks unchanged")]
    GammaUnchanged,
    #[error("no order up to {max_order} separates the environments' cross moments")]
    NoOrderFound { max_order: usize },
    #[error("quadratic has complex roots (discriminant {discriminant})")]
    RootsNotReal { discriminant: f64 },
    #[error("quadratic is degenerate; alpha looks unchanged")]
    AlphaUnchanged,
    #[error("root {root} has no non-Gaussian order up to {max_order}")]
    NoNonGaussianOrder { root: usize, max_order: usize },
    #[error("treatment has zero variance in environment {env}")]
    ZeroTreatmentVariance { env: usize },
    #[error("covariate matrix is rank deficient")]
    RankDeficient,
    #[error("covariate rows ({rows}) do not match sample count ({n})")]
    CovariateShape { rows: usize, n: usize },
    #[error("moment tables hold order {have}, need {need}")]
    OrderTooHigh { need: usize, have: usize },
    #[error("change in eps_y is not identifiable")]
    NonIdentifiable,
    #[error(transparent)]
    Empirical(#[from] EmpiricalError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Shared estimator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub rule: DecisionRule,
    pub max_order: usize,
    pub blocks: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { rule: DecisionRule::default(), max_order: DEFAULT_MAX_ORDER, blocks: DEFAULT_BLOCKS }
    }
}

impl EstimatorConfig {
    /// Moment tables for `data` deep enough for every algorithm.
    pub fn moments(&self, data: &EnvPairDataset) -> Result<PairMoments, EstimatorError> {
        Ok(PairMoments::from_dataset(data, self.max_order, self.blocks)?)
    }

    pub(crate) fn check_order(&self, pm: &PairMoments) -> Result<(), EstimatorError> {
        if pm.order() < self.max_order {
            return Err(EstimatorError::OrderTooHigh { need: self.max_order, have: pm.order() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Alg1,
    Alg2,
    Alg3,
    Alg4,
    OlsSeparate,
    OlsCombined,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Alg1, Method::Alg2, Method::Alg3, Method::Alg4, Method::OlsSeparate, Method::OlsCombined];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Alg1 => "Alg1",
            Method::Alg2 => "Alg2",
            Method::Alg3 => "Alg3",
            Method::Alg4 => "Alg4",
            Method::OlsSeparate => "OlsSeparate",
            Method::OlsCombined => "OlsCombined",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Case1,
    Case2,
    Root0,
    Root1,
    Linear,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::Case1 => "case1",
            Branch::Case2 => "case2",
            Branch::Root0 => "root0",
            Branch::Root1 => "root1",
            Branch::Linear => "linear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimate {
    Point(f64),
    /// Two observationally indistinguishable values.
    Candidates(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub method: Method,
    pub estimate: Estimate,
    pub order_found: Option<usize>,
    pub branch: Option<Branch>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl EstimateReport {
    pub(crate) fn point(method: Method, beta_hat: f64) -> Self {
        EstimateReport {
            method,
            estimate: Estimate::Point(beta_hat),
            order_found: None,
            branch: None,
            diagnostics: BTreeMap::new(),
        }
    }

    pub(crate) fn diag(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }

    /// The point estimate, if the report has a unique one.
    pub fn beta_hat(&self) -> Option<f64> {
        match self.estimate {
            Estimate::Point(b) => Some(b),
            Estimate::Candidates(..) => None,
        }
    }

    pub fn candidates(&self) -> Option<(f64, f64)> {
        match self.estimate {
            Estimate::Candidates(a, b) => Some((a, b)),
            Estimate::Point(_) => None,
        }
    }
}

impl Serialize for EstimateReport {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(5))?;
        map.serialize_entry("method", &self.method)?;
        match self.estimate {
            Estimate::Point(b) => map.serialize_entry("beta_hat", &b)?,
            Estimate::Candidates(a, b) => map.serialize_entry("candidates", &[a, b])?,
        }
        map.serialize_entry("order_found", &self.order_found)?;
        map.serialize_entry("branch", &self.branch)?;
        map.serialize_entry("diagnostics", &self.diagnostics)?;
        map.end()
    }
}

/// Algorithm 1 on a dataset: a change in the treatment noise.
pub fn estimate_eps_t(data: &EnvPairDataset, cfg: &EstimatorConfig) -> Result<EstimateReport, EstimatorError> {
    alg1(&cfg.moments(data)?, cfg)
}

/// Algorithm 2 on a dataset: a change in the confounder noise.
pub fn estimate_eps_u(data: &EnvPairDataset, cfg: &EstimatorConfig) -> Result<EstimateReport, EstimatorError> {
    alg2(&cfg.moments(data)?, cfg)
}

/// Algorithm 3 on a dataset: a change in the confounder's effect on Y.
pub fn estimate_gamma(data: &EnvPairDataset, cfg: &EstimatorConfig) -> Result<EstimateReport, EstimatorError> {
    alg3(&cfg.moments(data)?, cfg)
}

/// Algorithm 4 on a dataset: a change in the confounder's effect on T.
pub fn estimate_alpha(data: &EnvPairDataset, cfg: &EstimatorConfig) -> Result<EstimateReport, EstimatorError> {
    alg4(&cfg.moments(data)?, cfg)
}

pub fn ols_separate(data: &EnvPairDataset, cfg: &EstimatorConfig) -> Result<EstimateReport, EstimatorError> {
    ols_separate_moments(&PairMoments::from_dataset(data, 2, cfg.blocks)?, &cfg.rule)
}

pub fn ols_combined(data: &EnvPairDataset, cfg: &EstimatorConfig) -> Result<EstimateReport, EstimatorError> {
    ols_combined_moments(&PairMoments::from_dataset(data, 2, cfg.blocks)?, &cfg.rule)
}

/// Runs `method` on precomputed moments.
pub fn run_method(method: Method, pm: &PairMoments, cfg: &EstimatorConfig) -> Result<EstimateReport, EstimatorError> {
    match method {
        Method::Alg1 => alg1(pm, cfg),
        Method::Alg2 => alg2(pm, cfg),
        Method::Alg3 => alg3(pm, cfg),
        Method::Alg4 => alg4(pm, cfg),
        Method::OlsSeparate => ols_separate_moments(pm, &cfg.rule),
        Method::OlsCombined => ols_combined_moments(pm, &cfg.rule),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_json_shape() {
        let r = EstimateReport::point(Method::Alg3, 0.5).diag("r", 2.0);
        let r = EstimateReport { order_found: Some(3), branch: Some(Branch::Case1), ..r };
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["method"], "Alg3");
        assert_eq!(v["beta_hat"], 0.5);
        assert_eq!(v["order_found"], 3);
        assert_eq!(v["branch"], "case1");
        assert_eq!(v["diagnostics"]["r"], 2.0);

        let c = EstimateReport { estimate: Estimate::Candidates(1.0, 2.0), ..EstimateReport::point(Method::Alg1, 0.0) };
        let v: serde_json::Value = serde_json::to_value(&c).unwrap();
        assert_eq!(v["candidates"], serde_json::json!([1.0, 2.0]));
        assert!(v.get("beta_hat").is_none());
    }

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.as_str()), Some(m));
            assert_eq!(serde_json::to_value(m).unwrap(), m.as_str());
        }
    }
}
