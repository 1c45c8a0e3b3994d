use crate::empirical::{MomentEstimate, PairMoments, RawMoments};

use super::{Branch, EstimateReport, EstimatorConfig, EstimatorError, Method};

// Tables below hold (T, X) with X = Y - beta_i T, so get(a, b) = E[T^a X^b].

/// `phi_{n-1} - (n-1) phi_1 psi_{n-2}` with `phi_m = E[X^m T]`, `psi_m = E[X^m]`.
fn big_phi(m: &RawMoments, n: usize) -> f64 {
    m.get(1, n - 1) - (n - 1) as f64 * m.get(1, 1) * m.get(0, n - 2)
}

struct Root {
    value: f64,
    order: usize,
    tables: PairMoments,
}

impl Root {
    // For the true root both E[X T] and big_phi scale with alpha across
    // environments, so their ratios agree. Undefined ratios count as infinite.
    fn mismatch(&self, n: usize) -> f64 {
        let (e1, e2) = (self.tables.env(1).full(), self.tables.env(2).full());
        let gap = (e1.get(1, 1) / e2.get(1, 1) - big_phi(e1, n) / big_phi(e2, n)).abs();
        if gap.is_nan() {
            f64::INFINITY
        } else {
            gap
        }
    }
}

/// Algorithm 4: only the confounder's effect on the treatment changed.
///
/// `h(b) = E[(Y1 - b T1)^2] - E[(Y2 - b T2)^2]` vanishes at the true effect,
/// since `Y - beta T` does not involve `alpha`. Of its two roots, the true
/// one is picked by the order at which `Y - b T` first shows a non-Gaussian
/// dependence on `T`.
pub fn alg4(pm: &PairMoments, cfg: &EstimatorConfig) -> Result<EstimateReport, EstimatorError> {
    cfg.check_order(pm)?;
    let (lo, hi, disc) = match quadratic_roots(pm, cfg)? {
        QuadraticRoots::Linear(root) => {
            let mut report = EstimateReport::point(Method::Alg4, root);
            report.branch = Some(Branch::Linear);
            report.order_found = Some(root_order(pm, root, cfg, 0)?.order);
            return Ok(report);
        }
        QuadraticRoots::Pair { lo, hi, discriminant } => (lo, hi, discriminant),
    };
    let roots = [root_order(pm, lo, cfg, 0)?, root_order(pm, hi, cfg, 1)?];
    let pick = if roots[0].order == roots[1].order {
        let n = roots[0].order;
        if roots[0].mismatch(n) <= roots[1].mismatch(n) {
            0
        } else {
            1
        }
    } else if roots[0].order > roots[1].order {
        0
    } else {
        1
    };
    let mut report = EstimateReport::point(Method::Alg4, roots[pick].value)
        .diag("root0", lo)
        .diag("root1", hi)
        .diag("order_root0", roots[0].order as f64)
        .diag("order_root1", roots[1].order as f64)
        .diag("discriminant", disc.value)
        .diag("discriminant_se", disc.se);
    report.branch = Some(if pick == 0 { Branch::Root0 } else { Branch::Root1 });
    report.order_found = Some(roots[pick].order);
    Ok(report)
}

/// Real roots of `h`, or the single root when `h` is linear.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadraticRoots {
    Pair { lo: f64, hi: f64, discriminant: MomentEstimate },
    Linear(f64),
}

/// Roots of `E[T1^2 - T2^2] b^2 - 2 E[Y1 T1 - Y2 T2] b + E[Y1^2 - Y2^2]`.
/// A negative discriminant within noise of zero counts as zero.
pub fn quadratic_roots(pm: &PairMoments, cfg: &EstimatorConfig) -> Result<QuadraticRoots, EstimatorError> {
    let rule = &cfg.rule;
    let quad = pm.estimate(|e1, e2| e1.get(2, 0) - e2.get(2, 0));
    let lin = pm.estimate(|e1, e2| e1.get(1, 1) - e2.get(1, 1));
    let (a, b) = (quad.value, lin.value);
    let c = pm.estimate(|e1, e2| e1.get(0, 2) - e2.get(0, 2)).value;
    if !rule.nonzero(&quad) {
        if !rule.nonzero(&lin) {
            return Err(EstimatorError::AlphaUnchanged);
        }
        return Ok(QuadraticRoots::Linear(c / (2.0 * b)));
    }
    let disc = pm.estimate(|e1, e2| {
        let (a, b, c) = (e1.get(2, 0) - e2.get(2, 0), e1.get(1, 1) - e2.get(1, 1), e1.get(0, 2) - e2.get(0, 2));
        b * b - a * c
    });
    if disc.value < 0.0 && rule.nonzero(&disc) {
        return Err(EstimatorError::RootsNotReal { discriminant: disc.value });
    }
    // q = b + sign(b) sqrt(disc) avoids cancellation; the roots are q/a and c/q
    let q = b + b.signum() * disc.value.max(0.0).sqrt();
    let (lo, hi) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    Ok(QuadraticRoots::Pair { lo: lo.min(hi), hi: lo.max(hi), discriminant: disc })
}

fn root_order(pm: &PairMoments, value: f64, cfg: &EstimatorConfig, index: usize) -> Result<Root, EstimatorError> {
    let m = [[1.0, 0.0], [-value, 1.0]];
    let tables = pm.linear(m, m);
    let order = (3..=cfg.max_order)
        .find(|&n| cfg.rule.nonzero(&tables.estimate_env(1, |e| big_phi(e, n))))
        .ok_or(EstimatorError::NoNonGaussianOrder { root: index, max_order: cfg.max_order })?;
    Ok(Root { value, order, tables })
}
