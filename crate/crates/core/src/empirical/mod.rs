//! Sample moments, joint cumulants and the statistical tests that stand in
//! for the exact equalities of the population algorithms.

mod table;

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use table::{MomentTable, PairMoments, RawMoments, DEFAULT_BLOCKS};

/// Default highest moment order the order searches try.
pub const DEFAULT_MAX_ORDER: usize = 8;

#[derive(Debug, Error)]
pub enum EmpiricalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("unsupported order {order}: {reason}")]
    UnsupportedOrder { order: usize, reason: &'static str },
    #[error("dataset row {row}: environment must be 1 or 2, got {env}")]
    BadEnvironment { row: usize, env: i64 },
    #[error("dataset CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub(crate) fn check_pair(x: &[f64], y: &[f64]) -> Result<(), EmpiricalError> {
    if x.len() != y.len() {
        return Err(EmpiricalError::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(EmpiricalError::TooFewSamples(x.len()));
    }
    if let Some(i) = x.iter().zip(y).position(|(a, b)| !(a.is_finite() && b.is_finite())) {
        return Err(EmpiricalError::NonFinite(i));
    }
    Ok(())
}

/// Paired treatment/outcome samples from two environments.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvPairDataset {
    pub t1: Vec<f64>,
    pub y1: Vec<f64>,
    pub t2: Vec<f64>,
    pub y2: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    env: i64,
    t: f64,
    y: f64,
}

impl EnvPairDataset {
    pub fn new(t1: Vec<f64>, y1: Vec<f64>, t2: Vec<f64>, y2: Vec<f64>) -> Result<Self, EmpiricalError> {
        check_pair(&t1, &y1)?;
        check_pair(&t2, &y2)?;
        Ok(EnvPairDataset { t1, y1, t2, y2 })
    }

    pub fn env(&self, env: usize) -> (&[f64], &[f64]) {
        match env {
            1 => (&self.t1, &self.y1),
            2 => (&self.t2, &self.y2),
            _ => panic!("environment index must be 1 or 2, got {env}"),
        }
    }

    /// Reads the `env,t,y` CSV format.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, EmpiricalError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let (mut t1, mut y1, mut t2, mut y2) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row?;
            match row.env {
                1 => {
                    t1.push(row.t);
                    y1.push(row.y);
                }
                2 => {
                    t2.push(row.t);
                    y2.push(row.y);
                }
                env => return Err(EmpiricalError::BadEnvironment { row: i + 1, env }),
            }
        }
        EnvPairDataset::new(t1, y1, t2, y2)
    }

    pub fn load(path: &Path) -> Result<Self, EmpiricalError> {
        let file = std::fs::File::open(path)
            .map_err(|source| EmpiricalError::Io { path: path.display().to_string(), source })?;
        EnvPairDataset::read_csv(std::io::BufReader::new(file))
    }

    /// Writes the `env,t,y` CSV format. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EmpiricalError> {
        let mut wtr = csv::Writer::from_writer(writer);
        for (env, (t, y)) in [(1, (&self.t1, &self.y1)), (2, (&self.t2, &self.y2))] {
            for (&t, &y) in t.iter().zip(y.iter()) {
                wtr.serialize(Row { env, t, y })?;
            }
        }
        wtr.flush().map_err(|source| EmpiricalError::Io { path: "<output>".into(), source })?;
        Ok(())
    }
}

/// A statistic with its standard error and the sample size behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub value: f64,
    pub se: f64,
    pub n: usize,
}

impl MomentEstimate {
    pub fn exact(value: f64) -> Self {
        MomentEstimate { value, se: 0.0, n: 0 }
    }
}

/// Plug-in `(1/n) sum t^p y^q` with `se = sd(t^p y^q) / sqrt(n)`.
pub fn mixed_moment(t: &[f64], y: &[f64], p: usize, q: usize) -> Result<MomentEstimate, EmpiricalError> {
    check_pair(t, y)?;
    let n = t.len();
    let terms: Vec<f64> = t.iter().zip(y).map(|(a, b)| a.powi(p as i32) * b.powi(q as i32)).collect();
    let value = terms.iter().sum::<f64>() / n as f64;
    let ss: f64 = terms.iter().map(|v| (v - value) * (v - value)).sum();
    let se = (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt();
    Ok(MomentEstimate { value, se, n })
}

/// How "nonzero" and "different" are decided from an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRule {
    pub z: f64,
    pub abs_floor: f64,
}

impl Default for DecisionRule {
    fn default() -> Self {
        DecisionRule { z: 4.0, abs_floor: 1e-9 }
    }
}

impl DecisionRule {
    pub fn with_z(z: f64) -> Self {
        DecisionRule { z, ..DecisionRule::default() }
    }

    pub fn nonzero(&self, e: &MomentEstimate) -> bool {
        e.value.is_finite() && e.value.abs() > self.z * e.se + self.abs_floor
    }

    pub fn differ(&self, a: &MomentEstimate, b: &MomentEstimate) -> bool {
        let diff = MomentEstimate { value: a.value - b.value, se: a.se.hypot(b.se), n: a.n + b.n };
        self.nonzero(&diff)
    }
}

/// True when `a` and `b` are statistically different at threshold `z`.
pub fn moment_diff_test(a: &MomentEstimate, b: &MomentEstimate, z: f64) -> bool {
    DecisionRule::with_z(z).differ(a, b)
}

/// Joint cumulant with `px` copies of `x` and `py` copies of `y`, with a
/// block-jackknife standard error.
pub fn joint_cumulant(x: &[f64], y: &[f64], px: usize, py: usize) -> Result<MomentEstimate, EmpiricalError> {
    let order = px + py;
    if order < 2 {
        return Err(EmpiricalError::UnsupportedOrder { order, reason: "cumulants of centered data start at order 2" });
    }
    if order > crate::noise::MAX_NOISE_ORDER {
        return Err(EmpiricalError::UnsupportedOrder { order, reason: "beyond maximum order" });
    }
    let table = MomentTable::from_samples(x, y, order, DEFAULT_BLOCKS)?;
    Ok(table.estimate(|m| m.joint_cumulant(px, py)))
}

/// Result of a two-sample Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsOutcome {
    pub statistic: f64,
    pub critical: f64,
    pub differ: bool,
}

/// Asymptotic two-sample KS test at level `alpha_level`.
pub fn ks_test(a: &[f64], b: &[f64], alpha_level: f64) -> KsOutcome {
    assert!(!a.is_empty() && !b.is_empty(), "KS test needs nonempty samples");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let c = (-0.5 * (alpha_level / 2.0).ln()).sqrt();
    let critical = c * ((n + m) / (n * m)).sqrt();
    KsOutcome { statistic: d, critical, differ: d > critical }
}

/// True when the KS test says the distributions differ.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha_level: f64) -> bool {
    ks_test(a, b, alpha_level).differ
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseSpec;

    #[test]
    fn mixed_moment_trivial_cases() {
        let e = mixed_moment(&[1.0, 1.0], &[2.0, 2.0], 1, 1).unwrap();
        assert_eq!((e.value, e.se), (2.0, 0.0));
        assert_eq!(mixed_moment(&[1.0, -1.0], &[1.0, 1.0], 2, 0).unwrap().value, 1.0);
        assert!(matches!(mixed_moment(&[1.0], &[1.0, 2.0], 1, 0), Err(EmpiricalError::LengthMismatch { .. })));
        assert!(matches!(mixed_moment(&[1.0, f64::NAN], &[1.0, 2.0], 1, 0), Err(EmpiricalError::NonFinite(1))));
    }

    #[test]
    fn diff_test_trivial_cases() {
        let a = MomentEstimate { value: 0.0, se: 0.01, n: 10 };
        let b = MomentEstimate { value: 1.0, se: 0.01, n: 10 };
        assert!(!moment_diff_test(&a, &a, 4.0));
        assert!(moment_diff_test(&a, &b, 4.0));
    }

    #[test]
    fn ks_identical_and_shifted() {
        let a = NoiseSpec::exponential(1.0).sample(2000, 1);
        assert!(!ks_two_sample(&a, &a, 0.01));
        let b: Vec<f64> = a.iter().map(|v| v + 1.0).collect();
        assert!(ks_two_sample(&a, &b, 0.01));
        // critical value for alpha = 0.05 is 1.358 sqrt((n+m)/nm)
        let o = ks_test(&a, &a, 0.05);
        assert!((o.critical / (4000.0f64 / 4.0e6).sqrt() - 1.358).abs() < 1e-3);
    }

    #[test]
    fn ks_statistic_by_hand() {
        // ECDFs differ most at x = 2: 2/3 vs 0
        let o = ks_test(&[1.0, 2.0, 5.0], &[3.0, 4.0, 6.0], 0.05);
        assert!((o.statistic - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn csv_roundtrip() {
        let d = EnvPairDataset::new(vec![0.1, -2.5], vec![1.0 / 3.0, 4.0], vec![5e-300, 6.0, 7.0], vec![0.0, 1.0, 2.0])
            .unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"env,t,y\n"));
        assert_eq!(EnvPairDataset::read_csv(buf.as_slice()).unwrap(), d);
        let bad = "env,t,y\n3,1.0,2.0\n";
        assert!(matches!(
            EnvPairDataset::read_csv(bad.as_bytes()),
            Err(EmpiricalError::BadEnvironment { row: 1, env: 3 })
        ));
    }

    #[test]
    fn cumulant_order_checks() {
        let x = [1.0, 2.0, 3.0];
        assert!(joint_cumulant(&x, &x, 1, 0).is_err());
        assert!(joint_cumulant(&x, &x, 10, 10).is_err());
    }
}
