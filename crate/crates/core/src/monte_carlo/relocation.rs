use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use super::stats::{estimate_iid, MeanEstimate};
use super::PathConfig;
use crate::error::Result;
use crate::model_core::{non_negative, positive, RatioDynamics};

/// Mean of `T ~ Exp(λ)` over `cfg.n_paths` draws.
pub fn estimate_relocation_time(lambda: f64, cfg: &PathConfig) -> Result<MeanEstimate> {
    positive("lambda", lambda)?;
    cfg.validate()?;
    Ok(estimate_iid(cfg, |rng| {
        let e: f64 = rng.sample(Exp1);
        e / lambda
    }))
}

/// Mean of `e^{-rT}` for `T ~ Exp(λ)`.
pub fn estimate_relocation_discount(lambda: f64, r: f64, cfg: &PathConfig) -> Result<MeanEstimate> {
    positive("r", r)?;
    non_negative("lambda", lambda)?;
    cfg.validate()?;
    if lambda == 0.0 {
        return Ok(MeanEstimate {
            mean: 0.0,
            std_error: 0.0,
            n: cfg.n_paths,
        });
    }
    Ok(estimate_iid(cfg, |rng| {
        let e: f64 = rng.sample(Exp1);
        (-r * e / lambda).exp()
    }))
}

/// Mean of `e^{-rT} X_T / X_0` with `T ~ Exp(λ)` independent of the
/// geometric ratio, `X_T` sampled exactly at the relocation time.
pub fn estimate_exact_resale_multiplier(
    d: &RatioDynamics,
    lambda: f64,
    r: f64,
    cfg: &PathConfig,
) -> Result<MeanEstimate> {
    d.validate()?;
    positive("r", r)?;
    positive("lambda", lambda)?;
    cfg.validate()?;
    let (drift, sigma) = (d.log_drift(), d.sigma_x);
    Ok(estimate_iid(cfg, |rng| {
        let e: f64 = rng.sample(Exp1);
        let z: f64 = rng.sample(StandardNormal);
        let t = e / lambda;
        (-r * t + drift * t + sigma * t.sqrt() * z).exp()
    }))
}
