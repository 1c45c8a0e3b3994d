use nalgebra::{DMatrix, DVector};

use crate::empirical::{DecisionRule, PairMoments};

use super::{EstimateReport, EstimatorError, Method};

fn check_variance(pm: &PairMoments, rule: &DecisionRule) -> Result<(), EstimatorError> {
    for env in [1, 2] {
        if !rule.nonzero(&pm.estimate_env(env, |e| e.get(2, 0))) {
            return Err(EstimatorError::ZeroTreatmentVariance { env });
        }
    }
    Ok(())
}

/// Average of the per-environment least-squares slopes.
pub fn ols_separate_moments(pm: &PairMoments, rule: &DecisionRule) -> Result<EstimateReport, EstimatorError> {
    check_variance(pm, rule)?;
    let slope = pm.estimate(|e1, e2| 0.5 * (e1.get(1, 1) / e1.get(2, 0) + e2.get(1, 1) / e2.get(2, 0)));
    let s1 = pm.estimate_env(1, |e| e.get(1, 1) / e.get(2, 0));
    let s2 = pm.estimate_env(2, |e| e.get(1, 1) / e.get(2, 0));
    Ok(EstimateReport::point(Method::OlsSeparate, slope.value)
        .diag("beta_se", slope.se)
        .diag("slope_env1", s1.value)
        .diag("slope_env2", s2.value))
}

/// Least-squares slope on the pooled sample, each environment centered on
/// its own mean. Exact tables are weighted equally.
pub fn ols_combined_moments(pm: &PairMoments, rule: &DecisionRule) -> Result<EstimateReport, EstimatorError> {
    check_variance(pm, rule)?;
    let (n1, n2) = pm.sample_sizes();
    let (w1, w2) = if n1 + n2 == 0 { (1.0, 1.0) } else { (n1 as f64, n2 as f64) };
    let slope = pm.estimate(|e1, e2| (w1 * e1.get(1, 1) + w2 * e2.get(1, 1)) / (w1 * e1.get(2, 0) + w2 * e2.get(2, 0)));
    Ok(EstimateReport::point(Method::OlsCombined, slope.value).diag("beta_se", slope.se))
}

/// Residuals of `t` and `y` after least squares on an intercept and the
/// columns of `covariates` (one row per sample). With no columns the input
/// is returned unchanged.
pub fn residualize(t: &[f64], y: &[f64], covariates: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>), EstimatorError> {
    crate::empirical::check_pair(t, y)?;
    let n = t.len();
    if covariates.ncols() == 0 {
        return Ok((t.to_vec(), y.to_vec()));
    }
    if covariates.nrows() != n {
        return Err(EstimatorError::CovariateShape { rows: covariates.nrows(), n });
    }
    let k = covariates.ncols() + 1;
    if n <= k {
        return Err(EstimatorError::RankDeficient);
    }
    let design = DMatrix::from_fn(n, k, |i, j| if j == 0 { 1.0 } else { covariates[(i, j - 1)] });
    let qr = design.clone().qr();
    let (q, r) = (qr.q(), qr.r());
    let scale = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if r.diagonal().iter().any(|v| v.abs() <= scale * 1e-12 * n as f64) {
        return Err(EstimatorError::RankDeficient);
    }
    let resid = |v: &[f64]| -> Vec<f64> {
        let target = DVector::from_column_slice(v);
        let coef = r.solve_upper_triangular(&(q.transpose() * &target)).expect("full rank checked above");
        (target - &design * coef).iter().copied().collect()
    };
    Ok((resid(t), resid(y)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_covariates_is_identity() {
        let t = [1.0, 2.0, 4.0];
        let y = [0.5, -1.0, 3.0];
        let (rt, ry) = residualize(&t, &y, &DMatrix::zeros(3, 0)).unwrap();
        assert_eq!((rt.as_slice(), ry.as_slice()), (&t[..], &y[..]));
    }

    #[test]
    fn residual_is_orthogonal_to_covariate() {
        let x: Vec<f64> = (0..500).map(|i| ((i * 31 % 97) as f64).sin()).collect();
        let noise: Vec<f64> = (0..500).map(|i| ((i * 17 % 89) as f64 * 0.37).cos()).collect();
        let y: Vec<f64> = x.iter().zip(&noise).map(|(a, e)| 2.0 * a + e).collect();
        let cov = DMatrix::from_column_slice(500, 1, &x);
        let (_, ry) = residualize(&noise, &y, &cov).unwrap();
        let mx = x.iter().sum::<f64>() / 500.0;
        let my = ry.iter().sum::<f64>() / 500.0;
        let sxy: f64 = x.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let syy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
        assert!((sxy / (sxx * syy).sqrt()).abs() < 1e-10);
        assert!(my.abs() < 1e-12);
    }

    #[test]
    fn collinear_covariates_are_rejected() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let mut cols = x.clone();
        cols.extend(x.iter().map(|v| 2.0 * v));
        let cov = DMatrix::from_column_slice(10, 2, &cols);
        assert!(matches!(residualize(&x, &x, &cov), Err(EstimatorError::RankDeficient)));
        let wrong = DMatrix::zeros(4, 1);
        assert!(matches!(residualize(&x, &x, &wrong), Err(EstimatorError::CovariateShape { .. })));
    }
}
