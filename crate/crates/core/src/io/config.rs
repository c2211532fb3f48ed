//! TOML run configuration.

use crate::dist::ErrorDist;
use crate::error::{Error, Result};
use crate::estimation::{Estimator, FitSpec, FixedEffects};
use crate::model::{IndexParams, Intercepts, PolicyScenario};
use crate::spatial::SpatialSpec;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Workflow {
    Simulate,
    Estimate,
    Policy,
    Convergence,
    ComparativeStatics,
}

impl Workflow {
    pub fn name(self) -> &'static str {
        match self {
            Workflow::Simulate => "simulate",
            Workflow::Estimate => "estimate",
            Workflow::Policy => "policy",
            Workflow::Convergence => "convergence",
            Workflow::ComparativeStatics => "comparative-statics",
        }
    }
}

/// Index parameters given directly, used to simulate data or to evaluate a
/// policy without estimation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub error: ErrorDist,
    pub price: f64,
    pub wealth: f64,
    #[serde(default)]
    pub covariates: Vec<f64>,
    #[serde(default)]
    pub interaction: f64,
    #[serde(default)]
    pub intercept: Option<f64>,
    #[serde(default)]
    pub village_intercepts: BTreeMap<String, f64>,
}

impl ModelSection {
    pub fn params(&self) -> Result<IndexParams> {
        let intercepts = if self.village_intercepts.is_empty() {
            Intercepts::Common(self.intercept.unwrap_or(0.0))
        } else {
            Intercepts::PerVillage(parse_village_map(&self.village_intercepts)?)
        };
        Ok(IndexParams {
            price_coef: self.price,
            wealth_coef: self.wealth,
            covariate_coefs: self.covariates.clone(),
            interaction: self.interaction,
            intercepts,
            error: self.error,
        })
    }
}

fn parse_village_map<T: Copy>(m: &BTreeMap<String, T>) -> Result<BTreeMap<u32, T>> {
    m.iter()
        .map(|(k, v)| {
            k.parse::<u32>()
                .map(|id| (id, *v))
                .map_err(|_| Error::Config(format!("`{k}` is not a village id")))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default = "default_villages")]
    pub villages: usize,
    #[serde(default = "default_households")]
    pub households: usize,
    #[serde(default)]
    pub nonparticipants: usize,
    #[serde(default)]
    pub spatial: Option<SpatialSpec>,
}

fn default_villages() -> usize {
    11
}
fn default_households() -> usize {
    2000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    /// `br`, `fpl`, `cre` or `sd`.
    pub estimator: String,
    pub error: ErrorDist,
    #[serde(default = "default_fe")]
    pub fixed_effects: String,
    #[serde(default)]
    pub tied: Option<[u32; 2]>,
    #[serde(default = "yes")]
    pub include_belief: bool,
    #[serde(default)]
    pub scale_beliefs: bool,
    /// Correlation range for the spatial estimator.
    #[serde(default)]
    pub correlation_range: Option<f64>,
}

fn default_fe() -> String {
    "none".into()
}
fn yes() -> bool {
    true
}

impl EstimateSection {
    pub fn is_spatial(&self) -> bool {
        self.estimator == "sd"
    }

    pub fn spec(&self) -> Result<FitSpec> {
        let estimator = match self.estimator.as_str() {
            "br" => Estimator::Br,
            "fpl" | "sd" => Estimator::Fpl,
            "cre" => Estimator::Cre,
            other => return Err(Error::Config(format!("unknown estimator `{other}`"))),
        };
        let fixed_effects = match (self.fixed_effects.as_str(), self.tied) {
            ("none", _) => FixedEffects::None,
            ("homogeneity" | "dummies", Some([a, b])) => FixedEffects::Homogeneity { tied: (a, b) },
            ("homogeneity" | "dummies", None) => {
                return Err(Error::Config(
                    "village dummies need a tied pair of villages (`tied = [a, b]`)".into(),
                ))
            }
            (other, _) => return Err(Error::Config(format!("unknown fixed_effects `{other}`"))),
        };
        Ok(FitSpec {
            estimator,
            error: self.error,
            fixed_effects,
            include_belief: self.include_belief,
            scale_beliefs: self.scale_beliefs,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub base_price: f64,
    pub subsidized_price: f64,
    /// Wealth threshold; alternatively give `eligible_share`.
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub eligible_share: Option<f64>,
    #[serde(default)]
    pub alpha1_grid: Vec<f64>,
    /// Eligibility shares for comparative statics.
    #[serde(default)]
    pub shares: Vec<f64>,
}

impl PolicySection {
    pub fn scenario(&self, ds: &crate::model::Dataset) -> Result<PolicyScenario> {
        let tau = match (self.threshold, self.eligible_share) {
            (Some(t), None) => t,
            (None, Some(s)) => crate::welfare::threshold_for_share(ds, s)?,
            (None, None) => f64::INFINITY,
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either threshold or eligible_share, not both".into()))
            }
        };
        PolicyScenario::new(self.base_price, self.subsidized_price, tau)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    pub sizes: Vec<usize>,
    pub ranges: Vec<f64>,
    #[serde(default = "one")]
    pub density: f64,
    #[serde(default = "twenty")]
    pub replications: usize,
    #[serde(default = "grid")]
    pub grid_size: usize,
}

fn one() -> f64 {
    1.0
}
fn twenty() -> usize {
    20
}
fn grid() -> usize {
    crate::spatial::DEFAULT_GRID_SIZE
}

/// Full run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Household CSV; when absent the data are simulated from `[model]`.
    #[serde(default)]
    pub data: Option<PathBuf>,
    /// Total households per village, when larger than the listed rows.
    #[serde(default)]
    pub village_sizes: BTreeMap<String, usize>,
    /// Drop the belief term from estimation and policy evaluation.
    #[serde(default)]
    pub no_spillover: bool,
    #[serde(default)]
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
    #[serde(default)]
    pub estimate: Option<EstimateSection>,
    #[serde(default)]
    pub policy: Option<PolicySection>,
    #[serde(default)]
    pub convergence: Option<ConvergenceSection>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; a relative `data` path is taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(d) = &cfg.data {
            if d.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.data = Some(dir.join(d));
                }
            }
        }
        Ok(cfg)
    }

    pub fn village_sizes(&self) -> Result<BTreeMap<u32, usize>> {
        parse_village_map(&self.village_sizes)
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
