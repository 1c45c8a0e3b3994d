use crate::empirical::{MomentEstimate, PairMoments};

use super::ratio::ratio_from_table;
use super::{EstimateReport, EstimatorConfig, EstimatorError, Method};

/// First `k` with `E[T1^k] != E[T2^k]` and the ratio
/// `(E[Y1 T1^(k-1)] - E[Y2 T2^(k-1)]) / (E[T1^k] - E[T2^k])` there.
pub(crate) fn first_moment_ratio(
    pm: &PairMoments,
    cfg: &EstimatorConfig,
) -> Result<(usize, MomentEstimate, MomentEstimate), EstimatorError> {
    cfg.check_order(pm)?;
    for k in 1..=cfg.max_order {
        let diff = pm.estimate(|e1, e2| e1.get(k, 0) - e2.get(k, 0));
        if cfg.rule.nonzero(&diff) {
            let ratio = pm.estimate(|e1, e2| (e1.get(k - 1, 1) - e2.get(k - 1, 1)) / (e1.get(k, 0) - e2.get(k, 0)));
            return Ok((k, ratio, diff));
        }
    }
    Err(EstimatorError::NoMomentDifference { max_order: cfg.max_order })
}

/// Algorithm 1: only the treatment noise changed.
pub fn alg1(pm: &PairMoments, cfg: &EstimatorConfig) -> Result<EstimateReport, EstimatorError> {
    let (k, ratio, diff) = first_moment_ratio(pm, cfg)?;
    let mut report = EstimateReport::point(Method::Alg1, ratio.value)
        .diag("beta_se", ratio.se)
        .diag("moment_diff", diff.value)
        .diag("moment_diff_se", diff.se);
    report.order_found = Some(k);
    Ok(report)
}

/// Algorithm 2: only the confounder noise changed. The Algorithm 1 ratio
/// now estimates `beta + gamma/alpha`, and `r1 T - Y` shares only the
/// treatment noise with `T`, with loading `gamma/alpha`.
pub fn alg2(pm: &PairMoments, cfg: &EstimatorConfig) -> Result<EstimateReport, EstimatorError> {
    let (k, r1, _) = first_moment_ratio(pm, cfg)?;
    let mixed = pm.env(1).linear([[r1.value, -1.0], [1.0, 0.0]]);
    let r2 = ratio_from_table(&mixed, &cfg.rule, cfg.max_order)?;
    let mut report = EstimateReport::point(Method::Alg2, r1.value - r2.ratio.value)
        .diag("r1", r1.value)
        .diag("r1_se", r1.se)
        .diag("r2", r2.ratio.value)
        .diag("r2_se", r2.ratio.se);
    if let Some(n) = r2.order {
        report = report.diag("ratio_order", n as f64);
    }
    report.order_found = Some(k);
    Ok(report)
}
