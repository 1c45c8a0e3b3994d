use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{ChangeKind, ScenarioSpec, ScmParams};
use crate::noise::{stream_rng, Family, NoiseSpec};

use super::HarnessError;

/// Closed interval `[lo, hi]`, written `[lo, hi]` in TOML.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        self.lo + (self.hi - self.lo) * rng.random::<f64>()
    }
}

impl TryFrom<[f64; 2]> for Range {
    type Error = String;

    fn try_from([lo, hi]: [f64; 2]) -> Result<Self, String> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(format!("range [{lo}, {hi}] must be finite with lo <= hi"));
        }
        Ok(Range { lo, hi })
    }
}

impl From<Range> for [f64; 2] {
    fn from(r: Range) -> Self {
        [r.lo, r.hi]
    }
}

/// Parameter ranges from which a two-environment scenario is drawn.
///
/// Every noise gets the family under test with its free parameter (the
/// rate of an exponential, the scale or half-width otherwise) drawn from
/// `noise_param`. The changed mechanism in environment 2 is redrawn from
/// the matching `alt_*` range, and a changed noise may switch to
/// `alt_family`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioTemplate {
    pub change: ChangeKind,
    #[serde(default = "ScenarioTemplate::default_alpha")]
    pub alpha: Range,
    #[serde(default = "ScenarioTemplate::default_beta")]
    pub beta: Range,
    #[serde(default = "ScenarioTemplate::default_gamma")]
    pub gamma: Range,
    #[serde(default = "ScenarioTemplate::default_noise_param")]
    pub noise_param: Range,
    #[serde(default = "ScenarioTemplate::default_alt_alpha")]
    pub alt_alpha: Range,
    #[serde(default = "ScenarioTemplate::default_alt_gamma")]
    pub alt_gamma: Range,
    #[serde(default = "ScenarioTemplate::default_alt_noise_param")]
    pub alt_noise_param: Range,
    /// Leading parameters for families with more than one, e.g. the gamma shape.
    #[serde(default)]
    pub fixed_params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alt_family: Option<String>,
}

impl ScenarioTemplate {
    fn default_alpha() -> Range {
        Range::new(0.4, 0.6)
    }
    fn default_beta() -> Range {
        Range::new(0.6, 0.7)
    }
    fn default_gamma() -> Range {
        Range::new(0.8, 0.9)
    }
    fn default_noise_param() -> Range {
        Range::new(0.9, 1.1)
    }
    fn default_alt_alpha() -> Range {
        Range::new(0.8, 0.9)
    }
    fn default_alt_gamma() -> Range {
        Range::new(2.0, 2.1)
    }
    fn default_alt_noise_param() -> Range {
        Range::new(0.45, 0.55)
    }

    /// Template with the default ranges.
    pub fn new(change: ChangeKind) -> Self {
        ScenarioTemplate {
            change,
            alpha: Self::default_alpha(),
            beta: Self::default_beta(),
            gamma: Self::default_gamma(),
            noise_param: Self::default_noise_param(),
            alt_alpha: Self::default_alt_alpha(),
            alt_gamma: Self::default_alt_gamma(),
            alt_noise_param: Self::default_alt_noise_param(),
            fixed_params: Vec::new(),
            alt_family: None,
        }
    }

    /// Name for the results table, e.g. `exponential` or `exponential/logistic`.
    pub fn family_label(&self, family: &str) -> String {
        match &self.alt_family {
            Some(alt) if alt != family => format!("{family}/{alt}"),
            _ => family.to_string(),
        }
    }

    fn noise(&self, family: &str, param: f64) -> Result<NoiseSpec, HarnessError> {
        let mut params = self.fixed_params.clone();
        if family != "point_mass" {
            params.push(param);
        }
        Ok(NoiseSpec::new(Family::from_name(family, &params)?)?)
    }
}

/// Draws one scenario from `template`, deterministically in `seed`.
pub fn draw_scenario(template: &ScenarioTemplate, family: &str, seed: u64) -> Result<ScenarioSpec, HarnessError> {
    let mut rng = stream_rng(seed, 0);
    // fixed draw order so every field's value depends only on the seed
    let alpha = template.alpha.draw(&mut rng);
    let beta = template.beta.draw(&mut rng);
    let gamma = template.gamma.draw(&mut rng);
    let p_u = template.noise_param.draw(&mut rng);
    let p_t = template.noise_param.draw(&mut rng);
    let p_y = template.noise_param.draw(&mut rng);
    let alt_alpha = template.alt_alpha.draw(&mut rng);
    let alt_gamma = template.alt_gamma.draw(&mut rng);
    let alt_p = template.alt_noise_param.draw(&mut rng);
    let alt_p2 = template.alt_noise_param.draw(&mut rng);

    let alt_family = template.alt_family.as_deref().unwrap_or(family);
    let env1 = ScmParams {
        alpha,
        beta,
        gamma,
        noise_u: template.noise(family, p_u)?,
        noise_t: template.noise(family, p_t)?,
        noise_y: template.noise(family, p_y)?,
    };
    let mut env2 = env1;
    match template.change {
        ChangeKind::EpsT => env2.noise_t = template.noise(alt_family, alt_p)?,
        ChangeKind::EpsU => env2.noise_u = template.noise(alt_family, alt_p)?,
        ChangeKind::EpsY => env2.noise_y = template.noise(alt_family, alt_p)?,
        ChangeKind::EpsTAndEpsU => {
            env2.noise_t = template.noise(alt_family, alt_p)?;
            env2.noise_u = template.noise(alt_family, alt_p2)?;
        }
        ChangeKind::Gamma => env2.gamma = alt_gamma,
        ChangeKind::Alpha => env2.alpha = alt_alpha,
    }
    let scenario = ScenarioSpec::new(template.change, env1, env2);
    scenario.validate()?;
    Ok(scenario)
}
