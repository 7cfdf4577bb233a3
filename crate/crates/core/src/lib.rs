//! Rent-versus-buy as a perpetual optimal-stopping problem on the
//! price-to-rent ratio under an exogenous relocation hazard.
//!
//! * [`model_core`]: market primitives, ratio reduction, characteristic roots.
//! * [`free_boundary`]: buy payoff, closed-form threshold, residual checks.
//! * [`comparative_statics`]: sensitivities, sweeps, threshold maps.
//! * [`monte_carlo`]: path simulation and policy evaluation.
//! * [`scenario_cli`]: configuration, presets, tables, and the CLI.

pub mod comparative_statics;
pub mod error;
pub mod free_boundary;
pub mod monte_carlo;
pub mod model_core;
pub mod scenario_cli;

pub use error::{Error, Result};
