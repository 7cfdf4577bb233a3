use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use super::paths::{MarketState, Stepper};
use super::rng::{stream, Purpose};
use super::stats::CoMoments;
use super::{Dynamics, PathConfig};
use crate::error::{Error, Result};
use crate::free_boundary::{buy_value_coefficients, BuyValue, HouseholdEnv, PayoffMode};
use crate::model_core::{positive, RatioDynamics, ResaleMode};

/// Unresolved-relocation share above which an estimate is flagged.
const UNRESOLVED_WARN: f64 = 0.01;

/// Sampled objective of a "buy at the first step with `X <= x_thr`" policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValueEstimate {
    pub x_thr: f64,
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    /// Share of paths that bought before the horizon.
    pub fraction_stopped: f64,
    /// Share of buying paths whose relocation fell past the horizon and was
    /// closed out analytically.
    pub unresolved_fraction: f64,
    /// `unresolved_fraction` above 1%: the horizon is short for this policy.
    pub horizon_warning: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub estimate: PolicyValueEstimate,
    /// Standard error of `best.mean - this.mean` under common random numbers.
    pub paired_se_vs_best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub best_threshold: f64,
    pub best_index: usize,
    pub curve: Vec<CurvePoint>,
    /// No grid point is separated from the argmax by two paired standard
    /// errors.
    pub flat_within_noise: bool,
    /// The curve rises then falls, allowing reversals within two paired
    /// standard errors of adjacent points.
    pub unimodal_within_noise: bool,
}

pub fn evaluate_threshold_policy(
    dynamics: &Dynamics,
    env: &HouseholdEnv,
    x0: f64,
    x_thr: f64,
    cfg: &PathConfig,
) -> Result<PolicyValueEstimate> {
    if !(x_thr >= 0.0 && x_thr.is_finite()) {
        return Err(Error::param("x_thr", format!("must be finite and >= 0, got {x_thr}")));
    }
    let batch = simulate_policies(dynamics, env, x0, &[x_thr], cfg)?;
    Ok(batch.estimate(0))
}

/// Evaluate every threshold on the same paths and return the best one.
pub fn grid_search_threshold(
    dynamics: &Dynamics,
    env: &HouseholdEnv,
    x0: f64,
    thr_grid: &[f64],
    cfg: &PathConfig,
) -> Result<GridSearchResult> {
    if thr_grid.is_empty() {
        return Err(Error::param("thr_grid", "must be nonempty"));
    }
    if thr_grid.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::param("thr_grid", "thresholds must be finite and > 0"));
    }
    if thr_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("thr_grid", "must be strictly increasing"));
    }
    let batch = simulate_policies(dynamics, env, x0, thr_grid, cfg)?;
    let k = thr_grid.len();
    let mut best_index = 0;
    for i in 1..k {
        if batch.moments.mean(i) > batch.moments.mean(best_index) {
            best_index = i;
        }
    }
    let m = &batch.moments;
    let curve: Vec<CurvePoint> = (0..k)
        .map(|i| CurvePoint {
            estimate: batch.estimate(i),
            paired_se_vs_best: m.paired_std_error(best_index, i),
        })
        .collect();
    let flat_within_noise = k > 1
        && (0..k)
            .filter(|&i| i != best_index)
            .all(|i| m.mean(best_index) - m.mean(i) < 2.0 * m.paired_std_error(best_index, i));
    let unimodal_within_noise = (0..k.saturating_sub(1)).all(|i| {
        let rise = m.mean(i + 1) - m.mean(i);
        let slack = 2.0 * m.paired_std_error(i, i + 1);
        if i < best_index {
            rise > -slack
        } else {
            rise < slack
        }
    });
    Ok(GridSearchResult {
        best_threshold: thr_grid[best_index],
        best_index,
        curve,
        flat_within_noise,
        unimodal_within_noise,
    })
}

struct Batch {
    thresholds: Vec<f64>,
    moments: CoMoments,
    stopped: Vec<usize>,
    unresolved: Vec<usize>,
}

impl Batch {
    fn new(thresholds: &[f64]) -> Self {
        let k = thresholds.len();
        Self {
            thresholds: thresholds.to_vec(),
            moments: CoMoments::new(k),
            stopped: vec![0; k],
            unresolved: vec![0; k],
        }
    }

    fn merge(&mut self, other: &Batch) {
        self.moments.merge(&other.moments);
        for i in 0..self.stopped.len() {
            self.stopped[i] += other.stopped[i];
            self.unresolved[i] += other.unresolved[i];
        }
    }

    fn estimate(&self, i: usize) -> PolicyValueEstimate {
        let n = self.moments.count();
        let est = self.moments.estimate(i);
        let unresolved_fraction = if self.stopped[i] == 0 {
            0.0
        } else {
            self.unresolved[i] as f64 / self.stopped[i] as f64
        };
        PolicyValueEstimate {
            x_thr: self.thresholds[i],
            mean: est.mean,
            std_error: est.std_error,
            n_paths: n,
            fraction_stopped: self.stopped[i] as f64 / n as f64,
            unresolved_fraction,
            horizon_warning: unresolved_fraction > UNRESOLVED_WARN,
        }
    }
}

fn simulate_policies(
    dynamics: &Dynamics,
    env: &HouseholdEnv,
    x0: f64,
    thresholds: &[f64],
    cfg: &PathConfig,
) -> Result<Batch> {
    positive("x0", x0)?;
    cfg.validate()?;
    env.validate()?;
    let stepper = Stepper::new(dynamics, cfg.dt)?;
    let ctx = PolicyContext::new(dynamics, stepper, env, x0, thresholds, cfg)?;
    let chunks: Vec<Batch> = (0..cfg.n_chunks())
        .into_par_iter()
        .map(|c| {
            let mut batch = Batch::new(thresholds);
            let mut path = PathBuffer::new(cfg.n_steps());
            let mut values = vec![0.0; thresholds.len()];
            for index in cfg.chunk_range(c) {
                ctx.run_path(index, &mut path, &mut values, &mut batch);
                batch.moments.push(&values);
            }
            batch
        })
        .collect();
    let mut total = Batch::new(thresholds);
    for c in &chunks {
        total.merge(c);
    }
    Ok(total)
}

struct PathBuffer {
    log_p: Vec<f64>,
    log_r: Vec<f64>,
    regime: Vec<usize>,
    // Discounted rent paid over [0, j*dt], rent held at its left-point level.
    cum_rent: Vec<f64>,
}

impl PathBuffer {
    fn new(n_steps: usize) -> Self {
        Self {
            log_p: Vec::with_capacity(n_steps + 1),
            log_r: Vec::with_capacity(n_steps + 1),
            regime: Vec::with_capacity(n_steps + 1),
            cum_rent: Vec::with_capacity(n_steps + 1),
        }
    }

    fn clear(&mut self) {
        self.log_p.clear();
        self.log_r.clear();
        self.regime.clear();
        self.cum_rent.clear();
    }
}

struct Rngs {
    market: ChaCha8Rng,
    regime: Option<ChaCha8Rng>,
}

struct PolicyContext<'a> {
    stepper: Stepper,
    env: &'a HouseholdEnv,
    cfg: &'a PathConfig,
    start: MarketState,
    /// Ascending thresholds in log space.
    ln_thr: Vec<f64>,
    /// Analytic buy payoff for the tower-property branch.
    buy_value: BuyValue,
    n_steps: usize,
    horizon: f64,
    step_discount: f64,
    rho: f64,
    rho_perp: f64,
    sigma_p: f64,
    sigma_r: f64,
}

impl<'a> PolicyContext<'a> {
    fn new(
        dynamics: &Dynamics,
        stepper: Stepper,
        env: &'a HouseholdEnv,
        x0: f64,
        thresholds: &[f64],
        cfg: &'a PathConfig,
    ) -> Result<Self> {
        let (start, rho, sigma_p, sigma_r, ratio) = match dynamics {
            Dynamics::Ratio(d) => (stepper.initial(None, x0, 1.0), 0.0, d.sigma_x, 0.0, *d),
            Dynamics::Joint(m) => {
                // Ratio measured in rent units: start with unit rent.
                let ratio = RatioDynamics::new(m.mu_p, m.sigma_p);
                (stepper.initial(Some(m), x0, 1.0), m.rho, m.sigma_p, m.sigma_r, ratio)
            }
        };
        if env.resale_mode == ResaleMode::Exact {
            let regimes = match dynamics {
                Dynamics::Joint(m) => m.regime.as_ref().map_or(1, |s| s.states.len()),
                Dynamics::Ratio(_) => 1,
            };
            for reg in 0..regimes {
                let drift = stepper.price_drift(reg);
                if env.r + env.lambda <= drift {
                    return Err(Error::DivergentResale {
                        r_plus_lambda: env.r + env.lambda,
                        drift,
                    });
                }
            }
        }
        // Only consulted in paper-approx resale mode, where the dynamics do
        // not enter the coefficients.
        let buy_value = buy_value_coefficients(
            &HouseholdEnv {
                resale_mode: ResaleMode::PaperApprox,
                ..env.clone()
            },
            &ratio,
        )?;
        let mut ln_thr: Vec<f64> = thresholds.iter().map(|t| t.ln()).collect();
        debug_assert!(ln_thr.windows(2).all(|w| w[0] <= w[1]));
        ln_thr.shrink_to_fit();
        Ok(Self {
            stepper,
            env,
            cfg,
            start,
            ln_thr,
            buy_value,
            n_steps: cfg.n_steps(),
            horizon: cfg.effective_horizon(),
            step_discount: (1.0 - (-env.r * cfg.dt).exp()) / env.r,
            rho,
            rho_perp: (1.0 - rho * rho).max(0.0).sqrt(),
            sigma_p,
            sigma_r,
        })
    }

    fn joint(&self) -> bool {
        self.stepper.is_joint()
    }

    fn push(&self, path: &mut PathBuffer, s: &MarketState) {
        path.log_p.push(s.log_p);
        if self.joint() {
            let j = path.cum_rent.len();
            let prev = match j {
                0 => 0.0,
                _ => {
                    let t = (j - 1) as f64 * self.cfg.dt;
                    path.cum_rent[j - 1]
                        + path.log_r[j - 1].exp() * (-self.env.r * t).exp() * self.step_discount
                }
            };
            path.cum_rent.push(prev);
            path.log_r.push(s.log_r);
            path.regime.push(s.regime);
        }
    }

    fn state_at(&self, path: &PathBuffer, j: usize) -> MarketState {
        MarketState {
            log_p: path.log_p[j],
            log_r: if self.joint() { path.log_r[j] } else { 0.0 },
            regime: if self.joint() { path.regime[j] } else { 0 },
        }
    }

    /// Simulate up to step `j` (capped at the horizon).
    fn extend_to(&self, path: &mut PathBuffer, rngs: &mut Rngs, j: usize) {
        let j = j.min(self.n_steps);
        if path.log_p.len() > j {
            return;
        }
        let mut s = self.state_at(path, path.log_p.len() - 1);
        while path.log_p.len() <= j {
            self.stepper.step(&mut s, &mut rngs.market, rngs.regime.as_mut());
            self.push(path, &s);
        }
    }

    /// `∫_0^u e^{-rv} R_v dv` on the simulated path.
    fn rent_integral(&self, path: &PathBuffer, u: f64) -> f64 {
        let r = self.env.r;
        if !self.joint() {
            return (1.0 - (-r * u).exp()) / r;
        }
        let j = ((u / self.cfg.dt).floor() as usize).min(path.cum_rent.len() - 1);
        let tj = j as f64 * self.cfg.dt;
        path.cum_rent[j] + path.log_r[j].exp() * (-r * tj).exp() * (1.0 - (-r * (u - tj)).exp()) / r
    }

    fn run_path(&self, index: usize, path: &mut PathBuffer, values: &mut [f64], batch: &mut Batch) {
        let seed = self.cfg.seed;
        let mut rngs = Rngs {
            market: stream(seed, index, Purpose::Market),
            regime: self.joint().then(|| stream(seed, index, Purpose::Regime)),
        };
        let mut reloc = stream(seed, index, Purpose::Relocation);
        let duration = if self.env.lambda > 0.0 {
            let e: f64 = reloc.sample(Exp1);
            e / self.env.lambda
        } else {
            f64::INFINITY
        };
        let z1: f64 = reloc.sample(StandardNormal);
        let z2: f64 = reloc.sample(StandardNormal);

        path.clear();
        self.push(path, &self.start);

        let k = self.ln_thr.len();
        let mut hits: Vec<Option<usize>> = vec![None; k];
        let mut pending = k;
        let mut i = 0;
        if let Stepper::Ratio {
            step_drift,
            step_vol,
            ..
        } = self.stepper
        {
            // Hot loop for the one-factor model.
            let market = &mut rngs.market;
            let log_x = &mut path.log_p;
            let mut lx = self.start.log_p;
            let next = |pending: usize| match pending {
                0 => f64::NEG_INFINITY,
                p => self.ln_thr[p - 1],
            };
            let mut next_thr = next(pending);
            loop {
                if lx <= next_thr {
                    while pending > 0 && lx <= self.ln_thr[pending - 1] {
                        hits[pending - 1] = Some(i);
                        pending -= 1;
                    }
                    next_thr = next(pending);
                }
                if pending == 0 || i == self.n_steps {
                    break;
                }
                let z: f64 = market.sample(StandardNormal);
                lx += step_drift + step_vol * z;
                log_x.push(lx);
                i += 1;
            }
        } else {
            let mut s = self.start;
            loop {
                let lx = s.log_p - s.log_r;
                while pending > 0 && lx <= self.ln_thr[pending - 1] {
                    hits[pending - 1] = Some(i);
                    pending -= 1;
                }
                if pending == 0 || i == self.n_steps {
                    break;
                }
                self.stepper.step(&mut s, &mut rngs.market, rngs.regime.as_mut());
                self.push(path, &s);
                i += 1;
            }
        }

        let sign = self.env.rent_flow.sign();
        let r = self.env.r;
        for (slot, hit) in hits.iter().enumerate() {
            values[slot] = match hit {
                None => {
                    self.extend_to(path, &mut rngs, self.n_steps);
                    let end = self.state_at(path, self.n_steps);
                    sign * self.rent_integral(path, self.horizon)
                        + sign * (-r * self.horizon).exp() * end.log_r.exp() / r
                }
                Some(step) => {
                    batch.stopped[slot] += 1;
                    let (value, unresolved) = self.stopped_value(path, &mut rngs, *step, duration, z1, z2);
                    if unresolved {
                        batch.unresolved[slot] += 1;
                    }
                    value
                }
            };
        }
    }

    /// Objective for a path that buys at `step`; also reports whether the
    /// relocation fell past the horizon.
    fn stopped_value(
        &self,
        path: &mut PathBuffer,
        rngs: &mut Rngs,
        step: usize,
        duration: f64,
        z1: f64,
        z2: f64,
    ) -> (f64, bool) {
        let env = self.env;
        let r = env.r;
        let dt = self.cfg.dt;
        let t = step as f64 * dt;
        let disc_t = (-r * t).exp();
        let at_buy = self.state_at(path, step);
        let price = at_buy.log_p.exp();
        let rent = at_buy.log_r.exp();
        let renting = env.rent_flow.sign() * self.rent_integral(path, t);

        if env.resale_mode == ResaleMode::PaperApprox {
            let x = price / rent;
            return (renting + disc_t * rent * self.buy_value.eval(x), false);
        }

        let end = t + duration;
        let post_rent = match env.payoff_mode {
            PayoffMode::LifecycleCash if env.include_post_relocation_rent => 1.0,
            _ => 0.0,
        };
        let entry = match env.payoff_mode {
            PayoffMode::LifecycleCash => -(1.0 + env.k) * price * disc_t,
            PayoffMode::PaperLiteral => -env.k_abs * rent * disc_t,
        };
        let (service, carrying, resale_share) = match env.payoff_mode {
            PayoffMode::LifecycleCash => (env.h, env.c_op, 1.0 - env.delta),
            PayoffMode::PaperLiteral => (env.hc_flow, 0.0, 1.0),
        };

        if end < self.horizon {
            let j = (end / dt).floor() as usize;
            self.extend_to(path, rngs, j);
            let base = self.state_at(path, j);
            let frac = end - j as f64 * dt;
            let root = frac.sqrt();
            let end_price = (base.log_p
                + (self.stepper.price_drift(base.regime) - 0.5 * self.sigma_p * self.sigma_p) * frac
                + self.sigma_p * root * z1)
                .exp();
            let end_rent = if self.joint() {
                let rent_drift = self.rent_log_drift(base.regime);
                (base.log_r
                    + rent_drift * frac
                    + self.sigma_r * root * (self.rho * z1 + self.rho_perp * z2))
                    .exp()
            } else {
                1.0
            };
            let disc_end = (-r * end).exp();
            let flows = self.rent_integral(path, end) - self.rent_integral(path, t);
            let value = renting
                + entry
                + service * flows
                - carrying * price * (disc_t - disc_end) / r
                + disc_end * resale_share * end_price
                - post_rent * disc_end * end_rent / r;
            (value, false)
        } else {
            // Relocation past the horizon: close out the remaining memoryless
            // ownership spell at horizon levels with rent held fixed.
            self.extend_to(path, rngs, self.n_steps);
            let at_h = self.state_at(path, self.n_steps);
            let (p_h, r_h) = (at_h.log_p.exp(), at_h.log_r.exp());
            let lambda = env.lambda;
            let disc_h = (-r * self.horizon).exp();
            let mult = lambda / (r + lambda - self.stepper.price_drift(at_h.regime));
            let flows = self.rent_integral(path, self.horizon) - self.rent_integral(path, t);
            let continuation = service * r_h / (r + lambda) - carrying * price / (r + lambda)
                + resale_share * p_h * mult
                - post_rent * r_h * lambda / (r * (r + lambda));
            let value = renting + entry + service * flows
                - carrying * price * (disc_t - disc_h) / r
                + disc_h * continuation;
            (value, true)
        }
    }

    fn rent_log_drift(&self, regime: usize) -> f64 {
        match &self.stepper {
            Stepper::Joint { r_log_drift, .. } => r_log_drift[regime],
            Stepper::Ratio { .. } => 0.0,
        }
    }
}
