use serde::Serialize;

use crate::empirical::{DecisionRule, MomentEstimate, MomentTable};

use super::{EstimatorConfig, EstimatorError};

/// Ratio `a / b` of the loadings of a shared component, with the cumulant
/// order that revealed it (`None` when `a` tested as zero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioOutcome {
    pub ratio: MomentEstimate,
    pub order: Option<usize>,
}

/// For `X1 = a e + e1`, `X2 = b e + e2` with independent components and
/// `e` non-Gaussian, estimates `a / b` from a table of `(X1, X2)`.
///
/// Joint cumulants factor over independent sums, so at any order `n >= 3`
/// `k(X1, X2^(n-1)) = a b^(n-1) k_n(e)` and `k(X1^2, X2^(n-2)) = a^2 b^(n-2) k_n(e)`.
/// Their quotient is taken at the smallest `n` where the first is nonzero.
pub fn ratio_from_table(
    table: &MomentTable,
    rule: &DecisionRule,
    max_order: usize,
) -> Result<RatioOutcome, EstimatorError> {
    let have = table.order();
    if have < max_order {
        return Err(EstimatorError::OrderTooHigh { need: max_order, have });
    }
    let var2 = table.estimate(|m| m.joint_cumulant(0, 2));
    if !rule.nonzero(&var2) {
        return Err(EstimatorError::RatioScaleZero);
    }
    for n in 3..=max_order {
        let lead = table.estimate(|m| m.joint_cumulant(1, n - 1));
        if rule.nonzero(&lead) {
            let ratio = table.estimate(|m| {
                let k = m.truncated(n).cumulants();
                k.get(2, n - 2) / k.get(1, n - 1)
            });
            return Ok(RatioOutcome { ratio, order: Some(n) });
        }
    }
    // With no shared higher cumulant at all, a zero covariance means a = 0.
    let cov = table.estimate(|m| m.joint_cumulant(1, 1));
    if !rule.nonzero(&cov) {
        let zero = MomentEstimate { value: 0.0, se: cov.se / var2.value.abs(), n: cov.n };
        return Ok(RatioOutcome { ratio: zero, order: None });
    }
    Err(EstimatorError::SharedComponentNotFound { max_order })
}

/// [`ratio_from_table`] on raw samples.
pub fn get_ratio(x1: &[f64], x2: &[f64], cfg: &EstimatorConfig) -> Result<RatioOutcome, EstimatorError> {
    let table = MomentTable::from_samples(x1, x2, cfg.max_order, cfg.blocks)?;
    ratio_from_table(&table, &cfg.rule, cfg.max_order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::empirical::RawMoments;
    use crate::noise::NoiseSpec;

    // Exact moments of (a e + e1, b e + e2) for independent centered noises.
    fn exact_table(a: f64, b: f64, e: NoiseSpec, e1: NoiseSpec, e2: NoiseSpec, order: usize) -> MomentTable {
        let (me, m1, m2) =
            (e.raw_moments(order).unwrap(), e1.raw_moments(order).unwrap(), e2.raw_moments(order).unwrap());
        // E[(a e + e1)^p (b e + e2)^q] by binomial expansion of each factor
        let c = crate::noise::binomial;
        MomentTable::exact(RawMoments::from_fn(order, |p, q| {
            let mut s = 0.0;
            for i in 0..=p {
                for j in 0..=q {
                    s += c(p, i) * c(q, j) * a.powi(i as i32) * b.powi(j as i32) * me[i + j] * m1[p - i] * m2[q - j];
                }
            }
            s
        }))
    }

    #[test]
    fn exact_ratio_and_order() {
        let e = NoiseSpec::exponential(1.0);
        let t = exact_table(2.0, 1.0, e, NoiseSpec::logistic(1.0), NoiseSpec::uniform(1.0), 8);
        let r = ratio_from_table(&t, &DecisionRule::default(), 8).unwrap();
        assert!((r.ratio.value - 2.0).abs() < 1e-12);
        assert_eq!(r.order, Some(3));
        assert_eq!(r.ratio.se, 0.0);

        // symmetric shared noise: third cumulant vanishes, fourth does not
        let t = exact_table(-1.5, 0.5, NoiseSpec::logistic(1.0), e, e, 8);
        let r = ratio_from_table(&t, &DecisionRule::default(), 8).unwrap();
        assert!((r.ratio.value + 3.0).abs() < 1e-10);
        assert_eq!(r.order, Some(4));
    }

    #[test]
    fn zero_loading_gives_zero() {
        let e = NoiseSpec::exponential(1.0);
        let t = exact_table(0.0, 1.0, e, e, e, 6);
        let r = ratio_from_table(&t, &DecisionRule::default(), 6).unwrap();
        assert_eq!(r.ratio.value, 0.0);
        assert_eq!(r.order, None);
    }

    #[test]
    fn gaussian_shared_component_is_not_found() {
        let t =
            exact_table(1.0, 1.0, NoiseSpec::gaussian(1.0), NoiseSpec::exponential(1.0), NoiseSpec::uniform(1.0), 8);
        assert!(matches!(
            ratio_from_table(&t, &DecisionRule::default(), 8),
            Err(EstimatorError::SharedComponentNotFound { max_order: 8 })
        ));
    }

    #[test]
    fn constant_second_variable_is_rejected() {
        let p = NoiseSpec::point_mass();
        let t = exact_table(1.0, 0.0, NoiseSpec::exponential(1.0), p, p, 6);
        assert!(matches!(ratio_from_table(&t, &DecisionRule::default(), 6), Err(EstimatorError::RatioScaleZero)));
    }
}
