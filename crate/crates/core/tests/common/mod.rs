#![allow(dead_code)]

use moment_ident::harness::{draw_scenario, ScenarioTemplate};
use moment_ident::model::{ChangeKind, ScenarioSpec, ScmParams};
use moment_ident::noise::NoiseSpec;

pub fn scm(alpha: f64, beta: f64, gamma: f64, noise: NoiseSpec) -> ScmParams {
    ScmParams { alpha, beta, gamma, noise_u: noise, noise_t: noise, noise_y: noise }
}

pub fn exp1() -> NoiseSpec {
    NoiseSpec::exponential(1.0)
}

/// Scenarios drawn from the default ranges with exponential noises.
pub fn default_draws(change: ChangeKind, count: u64) -> Vec<ScenarioSpec> {
    let t = ScenarioTemplate::new(change);
    (0..count).map(|seed| draw_scenario(&t, "exponential", seed).unwrap()).collect()
}

pub fn variance(noise: &NoiseSpec) -> f64 {
    noise.raw_moment(2).unwrap()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
