//! Monte Carlo simulation of the market and of threshold purchase policies.
//!
//! Every path draws from its own ChaCha stream keyed by `(seed, path index,
//! purpose)`, so a path's randomness does not depend on which thread ran it
//! or on how far earlier paths were simulated. Paths are grouped into
//! chunks of `chunk_size`; chunk statistics are merged in chunk order.

mod paths;
mod policy;
mod relocation;
mod rng;
mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_core::{MarketPrimitives, RatioDynamics};

pub use paths::{
    sample_joint_path, sample_ratio_path, simulate_joint_paths, simulate_ratio_paths,
    JointEnsemble, JointPath, LogMoments, RatioEnsemble,
};
pub use policy::{
    evaluate_threshold_policy, grid_search_threshold, CurvePoint, GridSearchResult,
    PolicyValueEstimate,
};
pub use relocation::{
    estimate_exact_resale_multiplier, estimate_relocation_discount, estimate_relocation_time,
};
pub use stats::MeanEstimate;

/// Sampling configuration shared by every simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    pub n_paths: usize,
    /// Step in years.
    pub dt: f64,
    /// Simulated time in years; rounded to a whole number of steps.
    pub horizon: f64,
    pub seed: u64,
    /// Paths per reduction chunk.
    pub chunk_size: usize,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            n_paths: 20_000,
            dt: 1.0 / 252.0,
            horizon: 100.0,
            seed: 42,
            chunk_size: 1024,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::param("sim.n_paths", "must be >= 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("sim.dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(Error::param(
                "sim.horizon",
                format!("must be >= dt ({}), got {}", self.dt, self.horizon),
            ));
        }
        if self.chunk_size == 0 {
            return Err(Error::param("sim.chunk_size", "must be >= 1"));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        ((self.horizon / self.dt).round() as usize).max(1)
    }

    /// Horizon actually simulated, `n_steps * dt`.
    pub fn effective_horizon(&self) -> f64 {
        self.n_steps() as f64 * self.dt
    }

    pub(crate) fn n_chunks(&self) -> usize {
        self.n_paths.div_ceil(self.chunk_size)
    }

    pub(crate) fn chunk_range(&self, chunk: usize) -> std::ops::Range<usize> {
        let start = chunk * self.chunk_size;
        start..(start + self.chunk_size).min(self.n_paths)
    }
}

/// Market model driving a policy simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    /// Ratio diffusion with rent held at one.
    Ratio(RatioDynamics),
    /// Joint price and rent, optionally regime-shifted.
    Joint(MarketPrimitives),
}

impl From<RatioDynamics> for Dynamics {
    fn from(d: RatioDynamics) -> Self {
        Dynamics::Ratio(d)
    }
}

impl From<MarketPrimitives> for Dynamics {
    fn from(m: MarketPrimitives) -> Self {
        Dynamics::Joint(m)
    }
}
