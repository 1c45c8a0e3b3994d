//! Bivariate moment tables with block-jackknife replicates.
//!
//! Every statistic the estimators use is a smooth function of the mixed
//! moments `E[X^a Y^b]` of one or two environments. A [`MomentTable`] keeps
//! the full-sample table plus one table per deleted block, so any such
//! function gets a standard error by re-evaluation. Population tables from
//! the model oracle carry no replicates and report `se = 0`.

use crate::model::{population_moments, ModelError, ScenarioSpec};
use crate::noise::binomial;

use super::{EmpiricalError, EnvPairDataset, MomentEstimate};

/// Default number of jackknife blocks per environment.
pub const DEFAULT_BLOCKS: usize = 32;

fn tri(a: usize, b: usize) -> usize {
    let d = a + b;
    d * (d + 1) / 2 + b
}

/// `E[X^a Y^b]` for all `a + b <= order`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMoments {
    order: usize,
    values: Vec<f64>,
}

impl RawMoments {
    pub fn from_fn(order: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; tri(0, order) + 1];
        for d in 0..=order {
            for b in 0..=d {
                values[tri(d - b, b)] = f(d - b, b);
            }
        }
        RawMoments { order, values }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `E[X^a Y^b]`. Panics if `a + b` exceeds the table order.
    pub fn get(&self, a: usize, b: usize) -> f64 {
        assert!(a + b <= self.order, "moment ({a}, {b}) beyond table order {}", self.order);
        self.values[tri(a, b)]
    }

    /// Moments of `(m00 X + m01 Y, m10 X + m11 Y)`.
    pub fn linear(&self, m: [[f64; 2]; 2]) -> RawMoments {
        let [[a, b], [c, d]] = m;
        let pow = |base: f64| -> Vec<f64> { (0..=self.order).map(|k| base.powi(k as i32)).collect() };
        let (pa, pb, pc, pd) = (pow(a), pow(b), pow(c), pow(d));
        RawMoments::from_fn(self.order, |p, q| {
            let mut total = 0.0;
            for i in 0..=p {
                let left = binomial(p, i) * pa[i] * pb[p - i];
                if left == 0.0 {
                    continue;
                }
                for j in 0..=q {
                    let right = binomial(q, j) * pc[j] * pd[q - j];
                    if right != 0.0 {
                        total += left * right * self.get(i + j, p - i + q - j);
                    }
                }
            }
            total
        })
    }

    /// Moments of `(X - E[X], Y - E[Y])`.
    pub fn centered(&self) -> RawMoments {
        if self.order == 0 {
            return self.clone();
        }
        let (mx, my) = (self.get(1, 0), self.get(0, 1));
        RawMoments::from_fn(self.order, |p, q| {
            let mut total = 0.0;
            for i in 0..=p {
                for j in 0..=q {
                    total += binomial(p, i)
                        * binomial(q, j)
                        * (-mx).powi((p - i) as i32)
                        * (-my).powi((q - j) as i32)
                        * self.get(i, j);
                }
            }
            total
        })
    }

    /// Joint cumulants `kappa(X x px, Y x py)` for all `px + py <= order`,
    /// from the multivariate moment recursion
    /// `m_{p,q} = sum C(p-1,i) C(q,j) k_{p-i,q-j} m_{i,j}`.
    pub fn cumulants(&self) -> RawMoments {
        let mut k = RawMoments { order: self.order, values: vec![0.0; self.values.len()] };
        for d in 1..=self.order {
            for q in 0..=d {
                let p = d - q;
                let mut value = self.get(p, q);
                if p >= 1 {
                    for i in 0..p {
                        for j in 0..=q {
                            if i == 0 && j == 0 {
                                continue;
                            }
                            value -= binomial(p - 1, i) * binomial(q, j) * k.values[tri(p - i, q - j)] * self.get(i, j);
                        }
                    }
                } else {
                    for j in 1..q {
                        value -= binomial(q - 1, j) * k.values[tri(0, q - j)] * self.get(0, j);
                    }
                }
                k.values[tri(p, q)] = value;
            }
        }
        k
    }

    /// Single joint cumulant with `px` copies of X and `py` copies of Y.
    pub fn joint_cumulant(&self, px: usize, py: usize) -> f64 {
        self.truncated(px + py).cumulants().get(px, py)
    }

    /// The same moments restricted to `a + b <= order`.
    pub fn truncated(&self, order: usize) -> RawMoments {
        if order >= self.order {
            return self.clone();
        }
        RawMoments::from_fn(order, |a, b| self.get(a, b))
    }
}

/// Full-sample moments of one bivariate sample plus jackknife replicates.
#[derive(Debug, Clone)]
pub struct MomentTable {
    n: usize,
    full: RawMoments,
    replicates: Vec<RawMoments>,
}

impl MomentTable {
    /// Builds a table of the centered sample `(x - mean, y - mean)` with
    /// `blocks` contiguous jackknife blocks (capped at the sample size).
    pub fn from_samples(x: &[f64], y: &[f64], order: usize, blocks: usize) -> Result<Self, EmpiricalError> {
        super::check_pair(x, y)?;
        let n = x.len();
        let blocks = blocks.clamp(1, n);
        let mx = x.iter().sum::<f64>() / n as f64;
        let my = y.iter().sum::<f64>() / n as f64;
        let width = tri(0, order) + 1;
        let mut sums = vec![vec![0.0; width]; blocks];
        let mut counts = vec![0usize; blocks];
        let mut xp = vec![1.0; order + 1];
        let mut yp = vec![1.0; order + 1];
        for (k, (&xi, &yi)) in x.iter().zip(y).enumerate() {
            let g = k * blocks / n;
            counts[g] += 1;
            let (dx, dy) = (xi - mx, yi - my);
            for j in 1..=order {
                xp[j] = xp[j - 1] * dx;
                yp[j] = yp[j - 1] * dy;
            }
            let acc = &mut sums[g];
            let mut idx = 0;
            for d in 0..=order {
                for b in 0..=d {
                    acc[idx] += xp[d - b] * yp[b];
                    idx += 1;
                }
            }
        }
        let mut total = vec![0.0; width];
        for s in &sums {
            for (t, v) in total.iter_mut().zip(s) {
                *t += v;
            }
        }
        let full = RawMoments { order, values: total.iter().map(|v| v / n as f64).collect() };
        let replicates = if blocks < 2 {
            Vec::new()
        } else {
            sums.iter()
                .zip(&counts)
                .map(|(s, &c)| {
                    let m = (n - c) as f64;
                    let values = total.iter().zip(s).map(|(t, v)| (t - v) / m).collect();
                    RawMoments { order, values }.centered()
                })
                .collect()
        };
        Ok(MomentTable { n, full, replicates })
    }

    /// Exact table with no sampling error.
    pub fn exact(full: RawMoments) -> Self {
        MomentTable { n: 0, full, replicates: Vec::new() }
    }

    /// Sample size, or 0 for an exact table.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_exact(&self) -> bool {
        self.replicates.is_empty()
    }

    pub fn full(&self) -> &RawMoments {
        &self.full
    }

    pub fn order(&self) -> usize {
        self.full.order
    }

    /// Evaluates `f` on the full table, with a jackknife standard error.
    pub fn estimate(&self, f: impl Fn(&RawMoments) -> f64) -> MomentEstimate {
        let value = f(&self.full);
        let se = jackknife_se(self.replicates.iter().map(&f));
        MomentEstimate { value, se, n: self.n }
    }

    /// Table of a linear transformation of the two variables.
    pub fn linear(&self, m: [[f64; 2]; 2]) -> MomentTable {
        MomentTable {
            n: self.n,
            full: self.full.linear(m),
            replicates: self.replicates.iter().map(|r| r.linear(m)).collect(),
        }
    }
}

/// `sqrt((G-1)/G * sum (theta_g - mean)^2)`; zero with no replicates.
fn jackknife_se(values: impl Iterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.collect();
    let g = values.len();
    if g < 2 {
        return 0.0;
    }
    if values.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let mean = values.iter().sum::<f64>() / g as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    ((g as f64 - 1.0) / g as f64 * ss).sqrt()
}

/// Moment tables of `(T, Y)` in both environments: the seam through which
/// every estimator reads either sample moments or exact population moments.
#[derive(Debug, Clone)]
pub struct PairMoments {
    envs: [MomentTable; 2],
}

impl PairMoments {
    pub fn new(env1: MomentTable, env2: MomentTable) -> Self {
        PairMoments { envs: [env1, env2] }
    }

    pub fn from_dataset(data: &EnvPairDataset, order: usize, blocks: usize) -> Result<Self, EmpiricalError> {
        Ok(PairMoments {
            envs: [
                MomentTable::from_samples(&data.t1, &data.y1, order, blocks)?,
                MomentTable::from_samples(&data.t2, &data.y2, order, blocks)?,
            ],
        })
    }

    /// Exact moments of both environments from the model oracle.
    pub fn from_population(scenario: &ScenarioSpec, order: usize) -> Result<Self, ModelError> {
        let table = |env| -> Result<MomentTable, ModelError> {
            let entries = population_moments(env, order)?;
            let lookup =
                |p: usize, q: usize| entries.iter().find(|m| m.p == p && m.q == q).map(|m| m.value).unwrap_or(0.0);
            Ok(MomentTable::exact(RawMoments::from_fn(order, lookup)))
        };
        Ok(PairMoments { envs: [table(&scenario.env1)?, table(&scenario.env2)?] })
    }

    /// Environment table, `env` in `{1, 2}`.
    pub fn env(&self, env: usize) -> &MomentTable {
        &self.envs[env - 1]
    }

    pub fn order(&self) -> usize {
        self.envs[0].order().min(self.envs[1].order())
    }

    pub fn is_exact(&self) -> bool {
        self.envs.iter().all(MomentTable::is_exact)
    }

    pub fn sample_sizes(&self) -> (usize, usize) {
        (self.envs[0].n(), self.envs[1].n())
    }

    /// Evaluates a single-environment statistic.
    pub fn estimate_env(&self, env: usize, f: impl Fn(&RawMoments) -> f64) -> MomentEstimate {
        self.env(env).estimate(f)
    }

    /// Evaluates a statistic of both environments. The environments are
    /// independent, so their jackknife variances add.
    pub fn estimate(&self, f: impl Fn(&RawMoments, &RawMoments) -> f64) -> MomentEstimate {
        let [e1, e2] = &self.envs;
        let value = f(&e1.full, &e2.full);
        let se1 = jackknife_se(e1.replicates.iter().map(|r| f(r, &e2.full)));
        let se2 = jackknife_se(e2.replicates.iter().map(|r| f(&e1.full, r)));
        MomentEstimate { value, se: se1.hypot(se2), n: e1.n + e2.n }
    }

    /// Applies a per-environment linear transformation of `(T, Y)`.
    pub fn linear(&self, m1: [[f64; 2]; 2], m2: [[f64; 2]; 2]) -> PairMoments {
        PairMoments { envs: [self.envs[0].linear(m1), self.envs[1].linear(m2)] }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct(x: &[f64], y: &[f64], a: usize, b: usize) -> f64 {
        x.iter().zip(y).map(|(u, v)| u.powi(a as i32) * v.powi(b as i32)).sum::<f64>() / x.len() as f64
    }

    fn sample() -> (Vec<f64>, Vec<f64>) {
        let x: Vec<f64> = (0..200).map(|i| ((i * 37 % 101) as f64 / 50.0 - 1.0).powi(3)).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| 0.5 * v + ((i * 13 % 7) as f64 - 3.0)).collect();
        (x, y)
    }

    #[test]
    fn table_matches_direct_centered_moments() {
        let (x, y) = sample();
        let mx = x.iter().sum::<f64>() / x.len() as f64;
        let my = y.iter().sum::<f64>() / y.len() as f64;
        let xc: Vec<f64> = x.iter().map(|v| v - mx).collect();
        let yc: Vec<f64> = y.iter().map(|v| v - my).collect();
        let t = MomentTable::from_samples(&x, &y, 6, 8).unwrap();
        for d in 0..=6 {
            for b in 0..=d {
                let want = direct(&xc, &yc, d - b, b);
                assert!((t.full().get(d - b, b) - want).abs() < 1e-10 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn linear_transform_matches_direct() {
        let (x, y) = sample();
        let m = [[2.0, -1.0], [0.5, 3.0]];
        let t = MomentTable::from_samples(&x, &y, 5, 4).unwrap().linear(m);
        let u: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 2.0 * a - b).collect();
        let v: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * a + 3.0 * b).collect();
        let direct_t = MomentTable::from_samples(&u, &v, 5, 4).unwrap();
        for d in 0..=5 {
            for b in 0..=d {
                let (l, r) = (t.full().get(d - b, b), direct_t.full().get(d - b, b));
                assert!((l - r).abs() < 1e-9 * r.abs().max(1.0), "({}, {b}) {l} vs {r}", d - b);
            }
        }
    }

    #[test]
    fn cumulants_of_known_moments() {
        // X = Y = centered Exp(1): joint cumulants equal the univariate ones, (n-1)!
        let m = crate::noise::NoiseSpec::exponential(1.0).raw_moments(6).unwrap();
        let raw = RawMoments::from_fn(6, |a, b| m[a + b]);
        let k = raw.cumulants();
        assert!((k.get(1, 1) - 1.0).abs() < 1e-12);
        assert!((k.get(2, 1) - 2.0).abs() < 1e-12);
        assert!((k.get(2, 2) - 6.0).abs() < 1e-12);
        assert!((k.get(0, 5) - 24.0).abs() < 1e-10);
        assert!((k.get(3, 3) - 120.0).abs() < 1e-9);
    }

    #[test]
    fn cumulants_recover_means_and_covariance() {
        let (x, y) = sample();
        let raw = RawMoments::from_fn(2, |a, b| direct(&x, &y, a, b));
        let k = raw.cumulants();
        let mx = raw.get(1, 0);
        let my = raw.get(0, 1);
        assert!((k.get(1, 0) - mx).abs() < 1e-12);
        assert!((k.get(1, 1) - (raw.get(1, 1) - mx * my)).abs() < 1e-12);
        assert!((k.get(0, 2) - (raw.get(0, 2) - my * my)).abs() < 1e-12);
    }

    #[test]
    fn exact_tables_have_zero_se() {
        let t = MomentTable::exact(RawMoments::from_fn(2, |a, b| (a + b) as f64));
        let e = t.estimate(|m| m.get(1, 1));
        assert_eq!(e.value, 2.0);
        assert_eq!(e.se, 0.0);
    }

    #[test]
    fn jackknife_se_of_mean_matches_textbook() {
        let x: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
        let t = MomentTable::from_samples(&x, &x, 2, 1000).unwrap();
        // delete-one jackknife of the (centered) second moment ~ sd(x_i^2 dev) / sqrt(n);
        // check the mean functional via the uncentered route instead
        let sd = {
            let m = x.iter().sum::<f64>() / 1000.0;
            (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 999.0).sqrt()
        };
        let var_est = t.estimate(|m| m.get(2, 0));
        assert!(var_est.se > 0.0);
        assert!((var_est.value - sd * sd * 999.0 / 1000.0).abs() < 1e-12);
    }
}
