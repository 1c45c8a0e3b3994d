use crate::empirical::{PairMoments, RawMoments};

use super::ratio::ratio_from_table;
use super::{Branch, EstimateReport, EstimatorConfig, EstimatorError, Method};

// Tables below hold (T, X) with X = r T - 2 Y, so get(a, b) = E[T^a X^b].

fn phi(m: &RawMoments, n: usize) -> f64 {
    if n % 2 == 1 {
        m.get(n - 1, 1)
    } else {
        m.get(n - 1, 1) - (n - 1) as f64 * m.get(1, 1) * m.get(n - 2, 0)
    }
}

fn psi(m: &RawMoments, n: usize, j: usize) -> f64 {
    if n % 2 == 1 {
        m.get(n - j, j)
    } else {
        m.get(j, n - j) - (n - 1) as f64 * m.get(1, 1) * m.get(0, n - 2)
    }
}

fn signed_root(sign_of: f64, ratio: f64, l: usize) -> f64 {
    let magnitude = ratio.abs().powf(1.0 / l as f64);
    if sign_of < 0.0 {
        -magnitude
    } else {
        magnitude
    }
}

/// Algorithm 3: only the confounder's effect on the outcome changed.
///
/// With `r = 2 beta + gamma1 + gamma2` from the second moments, the residual
/// `X = r T - 2 Y` loads on the confounder noise with opposite signs in the
/// two environments (`+-a`, `a = (gamma2 - gamma1)/alpha`) and on the
/// treatment noise with a common `b = gamma1 + gamma2`. The first order
/// `n*` with a nonzero higher moment of `(T, X)` separates the two loadings:
/// environment differences isolate `a`, sums isolate `b`.
pub fn alg3(pm: &PairMoments, cfg: &EstimatorConfig) -> Result<EstimateReport, EstimatorError> {
    cfg.check_order(pm)?;
    let rule = &cfg.rule;
    let denom = pm.estimate(|e1, e2| e2.get(1, 1) - e1.get(1, 1));
    if !rule.nonzero(&denom) {
        return Err(EstimatorError::GammaUnchanged);
    }
    let r = pm.estimate(|e1, e2| (e2.get(0, 2) - e1.get(0, 2)) / (e2.get(1, 1) - e1.get(1, 1)));
    let m = [[1.0, 0.0], [r.value, -2.0]];
    let tx = pm.linear(m, m);
    let a_tilde = tx.estimate(|e1, e2| 0.5 * (e1.get(1, 1) - e2.get(1, 1)));
    let b_tilde = tx.estimate(|e1, e2| 0.5 * (e1.get(1, 1) + e2.get(1, 1)));

    let n_star = (3..=cfg.max_order)
        .find(|&n| rule.nonzero(&tx.estimate_env(1, |e| phi(e, n))) || rule.nonzero(&tx.estimate_env(2, |e| phi(e, n))))
        .ok_or(EstimatorError::NoOrderFound { max_order: cfg.max_order })?;
    let odd = n_star % 2 == 1;
    let phi_diff = tx.estimate(|e1, e2| phi(e1, n_star) - phi(e2, n_star));

    let mut report = if rule.nonzero(&phi_diff) {
        let (j, l) = if odd { (3, 2) } else { (1, n_star - 2) };
        let a = tx.estimate(|e1, e2| {
            let ratio = (psi(e1, n_star, j) - psi(e2, n_star, j)) / (phi(e1, n_star) - phi(e2, n_star));
            signed_root(a_tilde.value, ratio, l)
        });
        let beta_plus_gamma1 = 0.5 * (r.value - a.value);
        let shared = pm.env(1).linear([[beta_plus_gamma1, -1.0], [1.0, 0.0]]);
        let gamma1 = ratio_from_table(&shared, rule, cfg.max_order)?;
        let mut rep = EstimateReport::point(Method::Alg3, beta_plus_gamma1 - gamma1.ratio.value)
            .diag("a", a.value)
            .diag("a_se", a.se)
            .diag("beta_plus_gamma1", beta_plus_gamma1)
            .diag("gamma1_ratio", gamma1.ratio.value);
        rep.branch = Some(Branch::Case1);
        rep
    } else {
        let (j, l) = if odd { (2, 1) } else { (1, n_star - 2) };
        let b = tx.estimate(|e1, e2| {
            let ratio = (psi(e1, n_star, j) + psi(e2, n_star, j)) / (phi(e1, n_star) + phi(e2, n_star));
            signed_root(b_tilde.value, ratio, l)
        });
        let mut rep =
            EstimateReport::point(Method::Alg3, 0.5 * (r.value - b.value)).diag("b", b.value).diag("b_se", b.se);
        rep.branch = Some(Branch::Case2);
        rep
    };
    report = report
        .diag("r", r.value)
        .diag("r_se", r.se)
        .diag("a_tilde", a_tilde.value)
        .diag("b_tilde", b_tilde.value)
        .diag("phi_diff", phi_diff.value)
        .diag("phi_diff_se", phi_diff.se);
    report.order_found = Some(n_star);
    Ok(report)
}
