//! Optional top-level config file overriding hyperparameter defaults.
//!
//! ```toml
//! [intersection]
//! saturation_rate = 0.5
//! [dqn]
//! episodes = 50
//! [meta]
//! adapt_steps = 3
//! [metrics]
//! kl_epsilon = 1e-6
//! [baselines]
//! green_split = [30.0]
//! ```
//!
//! Every section and key is optional; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dqn::DqnHyper;
use crate::error::{Error, Result};
use crate::meta::MetaHyper;
use crate::metrics::DEFAULT_KL_EPSILON;
use crate::scenario::read_text;
use crate::sim::IntersectionConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSettings {
    pub kl_epsilon: f64,
}

impl Default for MetricsSettings {
    fn default() -> Self {
        Self {
            kl_epsilon: DEFAULT_KL_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSettings {
    /// Green seconds per phase for fixed-time control; one value applies to all phases.
    pub green_split: Vec<f64>,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        Self {
            green_split: vec![30.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub intersection: IntersectionConfig,
    pub dqn: DqnHyper,
    pub meta: MetaHyper,
    pub metrics: MetricsSettings,
    pub baselines: BaselineSettings,
}

impl Settings {
    pub fn from_toml(text: &str, source: &str) -> Result<Self> {
        let s: Settings = toml::from_str(text).map_err(|e| Error::parse(source, 0, e.message()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_text(path)?, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.intersection.validate()?;
        self.dqn.validate()?;
        self.meta.validate()?;
        if !(self.metrics.kl_epsilon >= 0.0) {
            return Err(Error::Config("kl_epsilon must be non-negative".into()));
        }
        crate::dqn::fixed_time_policy(&self.intersection, &self.baselines.green_split)
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings serialize")
    }
}
