use std::fmt;

use serde::{Deserialize, Serialize};

use crate::comparative_statics::Marker;
use crate::error::{Error, Result};
use crate::model_core::RatioDynamics;

/// Where a preset's numbers come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Calibrated market values.
    Paper,
    /// Editorial values placing a qualitatively described market on the map.
    Illustrative,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Paper => "paper",
            Provenance::Illustrative => "illustrative",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketPreset {
    pub name: &'static str,
    pub ratio: RatioDynamics,
    pub lambda: f64,
    pub provenance: Provenance,
}

impl MarketPreset {
    pub fn marker(&self) -> Marker {
        Marker {
            name: self.name.to_string(),
            lambda: self.lambda,
            sigma: self.ratio.sigma_x,
            note: self.provenance.as_str().to_string(),
        }
    }
}

pub const PRESET_NAMES: [&str; 4] = ["atlanta", "columbus", "fayetteville", "san_diego"];

pub fn builtin_preset(name: &str) -> Result<MarketPreset> {
    let (mu_x, sigma_x, lambda, provenance) = match name {
        "atlanta" => (0.01, 0.15, 0.10, Provenance::Paper),
        "columbus" => (0.005, 0.25, 0.20, Provenance::Paper),
        // Base-dependent town: flat growth, volatile, frequent moves.
        "fayetteville" => (0.0, 0.30, 0.25, Provenance::Illustrative),
        // Expensive but calm coastal market.
        "san_diego" => (0.015, 0.12, 0.12, Provenance::Illustrative),
        _ => {
            return Err(Error::Config(format!(
                "unknown preset `{name}`; valid presets: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    let name = PRESET_NAMES.iter().find(|&&n| n == name).copied().unwrap_or_default();
    Ok(MarketPreset {
        name,
        ratio: RatioDynamics::new(mu_x, sigma_x),
        lambda,
        provenance,
    })
}

pub fn all_presets() -> Vec<MarketPreset> {
    PRESET_NAMES
        .iter()
        .map(|n| builtin_preset(n).expect("builtin preset"))
        .collect()
}
