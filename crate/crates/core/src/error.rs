use thiserror::Error;

use crate::free_boundary::Regime;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("ratio reduction undefined with demand-shock loadings or an attached regime (alpha={alpha}, beta={beta}, regime={has_regime})")]
    RegimeSwitching {
        alpha: f64,
        beta: f64,
        has_regime: bool,
    },

    #[error("degenerate dynamics: sigma_x = 0 gives a deterministic ratio, no characteristic roots")]
    DegenerateDynamics,

    #[error("expected discounted resale value diverges: r + lambda = {r_plus_lambda} <= drift {drift}")]
    DivergentResale { r_plus_lambda: f64, drift: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("operation requires an interior solution, got regime {0}")]
    UnsupportedRegime(Regime),

    #[error("ratio {x} is not inside the continuation region (x_star = {x_star})")]
    OutsideContinuation { x: f64, x_star: f64 },

    #[error("sensitivity of x_star to {param} undefined: solution at {param}={value} is {regime}")]
    SensitivityUndefined {
        param: String,
        value: f64,
        regime: Regime,
    },

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
