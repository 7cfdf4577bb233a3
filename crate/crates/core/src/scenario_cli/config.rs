//! Scenario files: a TOML (or JSON) document with `market`, `household`,
//! `sim` and `output` sections.
//!
//! ```toml
//! [market]
//! preset = "atlanta"
//!
//! [household]
//! lambda = 0.15
//!
//! [sim]
//! n_paths = 50000
//! ```
//!
//! A preset supplies the ratio dynamics and the hazard; every explicit key
//! overrides it. `market.ratio` and `market.primitives` are exclusive.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::presets::{builtin_preset, Provenance};
use super::table::Format;
use crate::error::{Error, Result};
use crate::free_boundary::{HouseholdEnv, PayoffMode, RentFlow};
use crate::model_core::{reduce_to_ratio, MarketPrimitives, RatioDynamics, ResaleMode};
use crate::monte_carlo::{Dynamics, PathConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub market: MarketSection,
    pub household: HouseholdSection,
    pub sim: SimSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketSection {
    pub preset: Option<String>,
    pub ratio: Option<RatioSection>,
    pub primitives: Option<MarketPrimitives>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatioSection {
    pub mu_x: Option<f64>,
    pub sigma_x: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HouseholdSection {
    pub r: Option<f64>,
    pub lambda: Option<f64>,
    pub k: Option<f64>,
    pub delta: Option<f64>,
    pub h: Option<f64>,
    pub c_op: Option<f64>,
    pub k_abs: Option<f64>,
    pub hc_flow: Option<f64>,
    pub payoff_mode: Option<PayoffMode>,
    pub resale_mode: Option<ResaleMode>,
    pub include_post_relocation_rent: Option<bool>,
    pub rent_flow: Option<RentFlow>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub n_paths: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    pub chunk_size: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub format: Option<Format>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Syntax {
    Toml,
    Json,
}

impl Syntax {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Syntax::Json,
            _ => Syntax::Toml,
        }
    }

    /// JSON when the text opens with `{`, TOML otherwise.
    pub fn sniff(text: &str) -> Self {
        if text.trim_start().starts_with('{') {
            Syntax::Json
        } else {
            Syntax::Toml
        }
    }
}

pub fn parse_scenario_file(text: &str, syntax: Syntax) -> Result<ScenarioFile> {
    fn located<E: std::fmt::Display>(e: serde_path_to_error::Error<E>) -> Error {
        let path = e.path().to_string();
        if path == "." {
            Error::Config(e.inner().to_string())
        } else {
            Error::Config(format!("{path}: {}", e.inner()))
        }
    }
    match syntax {
        Syntax::Json => {
            let mut de = serde_json::Deserializer::from_str(text);
            let file = serde_path_to_error::deserialize(&mut de).map_err(located)?;
            de.end().map_err(|e| Error::Config(e.to_string()))?;
            Ok(file)
        }
        Syntax::Toml => {
            let de = toml::Deserializer::parse(text).map_err(|e| Error::Config(e.to_string()))?;
            serde_path_to_error::deserialize(de).map_err(located)
        }
    }
}

/// Parse and resolve a scenario document.
pub fn load_scenario_str(text: &str, syntax: Syntax) -> Result<Scenario> {
    parse_scenario_file(text, syntax)?.resolve()
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    load_scenario_str(&text, Syntax::from_path(path))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Market {
    Ratio(RatioDynamics),
    Primitives(MarketPrimitives),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub preset: Option<String>,
    pub market: Market,
    pub household: HouseholdEnv,
    pub sim: PathConfig,
    pub format: Format,
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr; $($field:ident),+) => {
        $(if let Some(v) = $src.$field.clone() {
            $dst.$field = v;
        })+
    };
}

impl ScenarioFile {
    /// Expand the preset, apply explicit keys, validate.
    pub fn resolve(&self) -> Result<Scenario> {
        let m = &self.market;
        let preset = m.preset.as_deref().map(builtin_preset).transpose()?;
        let mut household = HouseholdEnv::default();
        if let Some(p) = &preset {
            household.lambda = p.lambda;
        }
        overlay!(household, self.household;
            r, lambda, k, delta, h, c_op, k_abs, hc_flow,
            payoff_mode, resale_mode, include_post_relocation_rent, rent_flow);

        let market = match (&m.ratio, &m.primitives) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "market: `ratio` and `primitives` are mutually exclusive".into(),
                ))
            }
            (None, Some(prim)) => Market::Primitives(prim.clone()),
            (ratio, None) => {
                let ratio = ratio.clone().unwrap_or_default();
                let base = preset.as_ref().map(|p| p.ratio);
                let pick = |v: Option<f64>, from_preset: Option<f64>, key: &str| {
                    v.or(from_preset).ok_or_else(|| {
                        Error::Config(match &preset {
                            None if m.ratio.is_none() => {
                                "market: set `preset`, `ratio` or `primitives`".to_string()
                            }
                            _ => format!("market.ratio.{key}: required without a preset"),
                        })
                    })
                };
                Market::Ratio(RatioDynamics::new(
                    pick(ratio.mu_x, base.map(|b| b.mu_x), "mu_x")?,
                    pick(ratio.sigma_x, base.map(|b| b.sigma_x), "sigma_x")?,
                ))
            }
        };

        let mut sim = PathConfig::default();
        overlay!(sim, self.sim; n_paths, dt, horizon, seed, chunk_size);

        let scenario = Scenario {
            preset: m.preset.clone(),
            market,
            household,
            sim,
            format: self.output.format.unwrap_or_default(),
            out: self.output.path.clone(),
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Prefix a parameter name with its section.
fn scoped(prefix: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::InvalidParameter { name, reason } if !name.starts_with(prefix) => {
            Error::InvalidParameter {
                name: format!("{prefix}{name}"),
                reason,
            }
        }
        other => other,
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        match &self.market {
            Market::Ratio(d) => d.validate().map_err(scoped("market.ratio."))?,
            Market::Primitives(p) => p.validate().map_err(scoped("market.primitives."))?,
        }
        self.household.validate().map_err(scoped("household."))?;
        self.sim.validate()
    }

    /// Ratio dynamics for the closed form; fails for regime-shifted markets.
    pub fn ratio_dynamics(&self) -> Result<RatioDynamics> {
        match &self.market {
            Market::Ratio(d) => Ok(*d),
            Market::Primitives(p) => reduce_to_ratio(p),
        }
    }

    pub fn dynamics(&self) -> Dynamics {
        match &self.market {
            Market::Ratio(d) => Dynamics::Ratio(*d),
            Market::Primitives(p) => Dynamics::Joint(p.clone()),
        }
    }

    /// Provenance of the market numbers: the preset's, as long as a paper
    /// preset is used unmodified.
    pub fn provenance(&self) -> Option<Provenance> {
        let preset = builtin_preset(self.preset.as_deref()?).ok()?;
        match preset.provenance {
            Provenance::Illustrative => Some(Provenance::Illustrative),
            Provenance::Paper => {
                let untouched = self.market == Market::Ratio(preset.ratio)
                    && self.household.lambda == preset.lambda;
                untouched.then_some(Provenance::Paper)
            }
        }
    }

    pub fn is_illustrative(&self) -> bool {
        self.provenance() == Some(Provenance::Illustrative)
    }

    /// Fully explicit document that resolves back to this scenario.
    pub fn to_file(&self) -> ScenarioFile {
        let h = &self.household;
        let (ratio, primitives) = match &self.market {
            Market::Ratio(d) => (
                Some(RatioSection {
                    mu_x: Some(d.mu_x),
                    sigma_x: Some(d.sigma_x),
                }),
                None,
            ),
            Market::Primitives(p) => (None, Some(p.clone())),
        };
        ScenarioFile {
            market: MarketSection {
                preset: self.preset.clone(),
                ratio,
                primitives,
            },
            household: HouseholdSection {
                r: Some(h.r),
                lambda: Some(h.lambda),
                k: Some(h.k),
                delta: Some(h.delta),
                h: Some(h.h),
                c_op: Some(h.c_op),
                k_abs: Some(h.k_abs),
                hc_flow: Some(h.hc_flow),
                payoff_mode: Some(h.payoff_mode),
                resale_mode: Some(h.resale_mode),
                include_post_relocation_rent: Some(h.include_post_relocation_rent),
                rent_flow: Some(h.rent_flow),
            },
            sim: SimSection {
                n_paths: Some(self.sim.n_paths),
                dt: Some(self.sim.dt),
                horizon: Some(self.sim.horizon),
                seed: Some(self.sim.seed),
                chunk_size: Some(self.sim.chunk_size),
            },
            output: OutputSection {
                format: Some(self.format),
                path: self.out.clone(),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_file()).expect("scenario serializes to TOML")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("scenario serializes to JSON")
    }

    /// SHA-256 of the canonical JSON of the model inputs. Output settings
    /// are excluded so the same model written to two places hashes alike.
    pub fn hash(&self) -> String {
        let mut file = self.to_file();
        file.output = OutputSection::default();
        let canonical = serde_json::to_string(&file).expect("scenario serializes to JSON");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
