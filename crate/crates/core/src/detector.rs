//! Which mechanism changed between the environments, and estimation that
//! dispatches on the answer.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::empirical::{ks_test, EnvPairDataset, PairMoments};
use crate::estimators::{alg1, alg2, alg3, alg4, Estimate, EstimateReport, EstimatorConfig, EstimatorError};
use crate::model::{ModelError, ScenarioSpec};

/// Significance level of the Kolmogorov-Smirnov checks.
pub const KS_LEVEL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChangeSource {
    Gamma,
    Alpha,
    /// A change in the treatment or the confounder noise; these two cannot
    /// be told apart.
    NoiseTorU,
    /// T is unchanged and Y changed but `E[TY]` did not move, which a
    /// change in `gamma` cannot produce.
    EpsYSuspected,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChangeVerdict {
    pub source: ChangeSource,
    pub evidence: BTreeMap<String, f64>,
}

/// Classifies a dataset. T and Y are compared with two-sample KS tests.
pub fn detect_source(data: &EnvPairDataset, cfg: &EstimatorConfig) -> Result<ChangeVerdict, EstimatorError> {
    let pm = PairMoments::from_dataset(data, 2, cfg.blocks)?;
    Ok(detect_with(&pm, cfg, Marginals::from_data(data)))
}

/// Classifies a scenario from exact population moments. T and Y count as
/// unchanged when all their moments up to `cfg.max_order` agree.
pub fn detect_source_population(scenario: &ScenarioSpec, cfg: &EstimatorConfig) -> Result<ChangeVerdict, ModelError> {
    let pm = PairMoments::from_population(scenario, cfg.max_order)?;
    let marginals = Marginals::from_moments(&pm, cfg);
    Ok(detect_with(&pm, cfg, marginals))
}

struct Marginals {
    t_stat: f64,
    y_stat: f64,
    t_differs: bool,
    y_differs: bool,
}

impl Marginals {
    fn from_data(data: &EnvPairDataset) -> Self {
        let t = ks_test(&data.t1, &data.t2, KS_LEVEL);
        let y = ks_test(&data.y1, &data.y2, KS_LEVEL);
        Marginals { t_stat: t.statistic, y_stat: y.statistic, t_differs: t.differ, y_differs: y.differ }
    }

    // statistic = largest absolute difference of exact marginal moments
    fn from_moments(pm: &PairMoments, cfg: &EstimatorConfig) -> Self {
        let gap = |pick: fn(&crate::empirical::RawMoments, usize) -> f64| {
            (2..=pm.order()).fold(0.0f64, |m, k| m.max(pm.estimate(|e1, e2| pick(e1, k) - pick(e2, k)).value.abs()))
        };
        let t_stat = gap(|e, k| e.get(k, 0));
        let y_stat = gap(|e, k| e.get(0, k));
        Marginals { t_stat, y_stat, t_differs: t_stat > cfg.rule.abs_floor, y_differs: y_stat > cfg.rule.abs_floor }
    }
}

fn detect_with(pm: &PairMoments, cfg: &EstimatorConfig, marginals: Marginals) -> ChangeVerdict {
    let rule = &cfg.rule;
    let mut evidence = BTreeMap::from([("ks_T".to_string(), marginals.t_stat), ("ks_Y".to_string(), marginals.y_stat)]);
    let quad = pm.estimate(|e1, e2| e1.get(2, 0) - e2.get(2, 0));
    let cross = pm.estimate(|e1, e2| e1.get(1, 1) - e2.get(1, 1));
    let q1 = pm.estimate(|e1, e2| (e1.get(1, 1) - e2.get(1, 1)) / (e1.get(2, 0) - e2.get(2, 0)));
    let q2 = pm.estimate(|e1, e2| (e1.get(0, 2) - e2.get(0, 2)) / (e1.get(1, 1) - e2.get(1, 1)));
    evidence.insert("q1".into(), q1.value);
    evidence.insert("q2".into(), q2.value);
    evidence.insert("se_q1".into(), q1.se);
    evidence.insert("se_q2".into(), q2.se);
    evidence.insert("cross_diff".into(), cross.value);
    evidence.insert("cross_diff_se".into(), cross.se);

    let source = if !marginals.t_differs && marginals.y_differs {
        if rule.nonzero(&cross) {
            ChangeSource::Gamma
        } else {
            ChangeSource::EpsYSuspected
        }
    } else {
        match (rule.nonzero(&quad), rule.nonzero(&cross)) {
            (false, false) => ChangeSource::NoiseTorU,
            (true, false) | (false, true) => ChangeSource::Alpha,
            (true, true) => {
                let gap = pm.estimate(|e1, e2| {
                    let (a, b) = (e1.get(2, 0) - e2.get(2, 0), e1.get(1, 1) - e2.get(1, 1));
                    b / a - (e1.get(0, 2) - e2.get(0, 2)) / b
                });
                evidence.insert("q_gap".into(), gap.value);
                evidence.insert("q_gap_se".into(), gap.se);
                if rule.nonzero(&gap) {
                    ChangeSource::Alpha
                } else {
                    ChangeSource::NoiseTorU
                }
            }
        }
    };
    ChangeVerdict { source, evidence }
}

/// Estimates with whichever algorithm the detected change calls for. A
/// noise change yields the Algorithm 1 and Algorithm 2 results as a pair of
/// candidates, reported under `Alg1` with the Algorithm 2 diagnostics
/// prefixed by `alg2_`.
pub fn estimate_with_verdict(
    pm: &PairMoments,
    verdict: &ChangeVerdict,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport, EstimatorError> {
    match verdict.source {
        ChangeSource::Gamma => alg3(pm, cfg),
        ChangeSource::Alpha => alg4(pm, cfg),
        ChangeSource::EpsYSuspected => Err(EstimatorError::NonIdentifiable),
        ChangeSource::NoiseTorU => {
            let first = alg1(pm, cfg)?;
            let second = alg2(pm, cfg)?;
            let (Estimate::Point(b1), Estimate::Point(b2)) = (first.estimate, second.estimate) else {
                unreachable!("single-algorithm reports carry point estimates")
            };
            let mut report = EstimateReport { estimate: Estimate::Candidates(b1, b2), ..first };
            for (k, v) in second.diagnostics {
                report.diagnostics.insert(format!("alg2_{k}"), v);
            }
            if let Some(k) = second.order_found {
                report.diagnostics.insert("alg2_order_found".into(), k as f64);
            }
            Ok(report)
        }
    }
}

/// Detects the change and estimates accordingly.
pub fn estimate_auto(
    data: &EnvPairDataset,
    cfg: &EstimatorConfig,
) -> Result<(ChangeVerdict, EstimateReport), EstimatorError> {
    let pm = cfg.moments(data)?;
    let verdict = detect_with(&pm, cfg, Marginals::from_data(data));
    let report = estimate_with_verdict(&pm, &verdict, cfg)?;
    Ok((verdict, report))
}

/// [`estimate_auto`] on exact population moments.
pub fn estimate_auto_population(
    scenario: &ScenarioSpec,
    cfg: &EstimatorConfig,
) -> Result<(ChangeVerdict, EstimateReport), EstimatorError> {
    let pm = PairMoments::from_population(scenario, cfg.max_order)?;
    let verdict = detect_with(&pm, cfg, Marginals::from_moments(&pm, cfg));
    let report = estimate_with_verdict(&pm, &verdict, cfg)?;
    Ok((verdict, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{draw_scenario, ScenarioTemplate};
    use crate::model::ChangeKind;

    fn verdict_for(change: ChangeKind, seed: u64) -> ChangeSource {
        let s = draw_scenario(&ScenarioTemplate::new(change), "exponential", seed).unwrap();
        detect_source_population(&s, &EstimatorConfig::default()).unwrap().source
    }

    #[test]
    fn population_verdicts() {
        for seed in 0..20 {
            assert_eq!(verdict_for(ChangeKind::Gamma, seed), ChangeSource::Gamma);
            assert_eq!(verdict_for(ChangeKind::Alpha, seed), ChangeSource::Alpha);
            assert_eq!(verdict_for(ChangeKind::EpsT, seed), ChangeSource::NoiseTorU);
            assert_eq!(verdict_for(ChangeKind::EpsU, seed), ChangeSource::NoiseTorU);
            assert_eq!(verdict_for(ChangeKind::EpsY, seed), ChangeSource::EpsYSuspected);
        }
    }

    #[test]
    fn evidence_keys() {
        let s = draw_scenario(&ScenarioTemplate::new(ChangeKind::EpsT), "exponential", 1).unwrap();
        let v = detect_source_population(&s, &EstimatorConfig::default()).unwrap();
        for key in ["ks_T", "ks_Y", "q1", "q2", "se_q1", "se_q2"] {
            assert!(v.evidence.contains_key(key), "{key}");
        }
        let json = serde_json::to_value(&v).unwrap();
        assert_eq!(json["source"], "NoiseTorU");
    }

    #[test]
    fn eps_y_is_rejected() {
        let s = draw_scenario(&ScenarioTemplate::new(ChangeKind::EpsY), "exponential", 2).unwrap();
        assert!(matches!(
            estimate_auto_population(&s, &EstimatorConfig::default()),
            Err(EstimatorError::NonIdentifiable)
        ));
    }
}
