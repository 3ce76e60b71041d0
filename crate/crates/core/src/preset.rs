//! Named hyperparameter bundles.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    Fast,
    Normal,
    Slow,
    /// Single-level training without coarsening.
    NoCoarse,
}

/// Medium graphs fit the memory budget; large ones must be partitioned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphScale {
    Medium,
    Large,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Fast, Preset::Normal, Preset::Slow, Preset::NoCoarse];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fast => "fast",
            Preset::Normal => "normal",
            Preset::Slow => "slow",
            Preset::NoCoarse => "nocoarse",
        }
    }

    /// Smoothing ratio; `None` when there is only one level to train.
    pub fn smoothing(self) -> Option<f64> {
        match self {
            Preset::Fast => Some(0.1),
            Preset::Normal => Some(0.3),
            Preset::Slow => Some(0.5),
            Preset::NoCoarse => None,
        }
    }

    pub fn learning_rate(self) -> f32 {
        match self {
            Preset::Fast => 0.050,
            Preset::Normal => 0.035,
            Preset::Slow => 0.025,
            Preset::NoCoarse => 0.045,
        }
    }

    pub fn epochs(self, scale: GraphScale) -> usize {
        match (self, scale) {
            (Preset::Fast, GraphScale::Medium) => 600,
            (Preset::Fast, GraphScale::Large) => 100,
            (Preset::Normal | Preset::NoCoarse, GraphScale::Medium) => 1000,
            (Preset::Normal | Preset::NoCoarse, GraphScale::Large) => 200,
            (Preset::Slow, GraphScale::Medium) => 1400,
            (Preset::Slow, GraphScale::Large) => 300,
        }
    }

    pub fn coarsens(self) -> bool {
        self != Preset::NoCoarse
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset {s:?}")))
    }
}
