use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::rng::{stream, Purpose};
use super::{Dynamics, PathConfig};
use crate::error::{Error, Result};
use crate::model_core::{positive, DemandRegimeSpec, MarketPrimitives, RatioDynamics};

/// Largest `intensity * dt` accepted for per-step regime sampling.
const MAX_SWITCH_PROB: f64 = 0.1;

/// Log-level state of the market. In ratio mode `log_p` is `ln X` and the
/// rent stays at one.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MarketState {
    pub log_p: f64,
    pub log_r: f64,
    pub regime: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct RegimeChain {
    levels: Vec<f64>,
    // Per state: probability of leaving within one step, and cumulative
    // destination weights.
    leave_prob: Vec<f64>,
    destinations: Vec<Vec<(usize, f64)>>,
}

impl RegimeChain {
    fn new(spec: &DemandRegimeSpec, dt: f64) -> Result<Self> {
        spec.validate()?;
        let max_rate = spec.max_exit_rate();
        if max_rate * dt >= MAX_SWITCH_PROB {
            return Err(Error::Config(format!(
                "dt = {dt} too coarse for regime intensities: max exit rate {max_rate} gives \
                 intensity*dt = {} >= {MAX_SWITCH_PROB}",
                max_rate * dt
            )));
        }
        let n = spec.states.len();
        let mut leave_prob = Vec::with_capacity(n);
        let mut destinations = Vec::with_capacity(n);
        for i in 0..n {
            let total = spec.exit_rate(i);
            leave_prob.push(1.0 - (-total * dt).exp());
            let mut cum = 0.0;
            let mut dest = Vec::new();
            for (j, &q) in spec.switch_rates[i].iter().enumerate() {
                if j != i && q > 0.0 {
                    cum += q / total;
                    dest.push((j, cum));
                }
            }
            destinations.push(dest);
        }
        Ok(Self {
            levels: spec.states.clone(),
            leave_prob,
            destinations,
        })
    }

    fn switch(&self, state: usize, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        if u >= self.leave_prob[state] {
            return state;
        }
        let dest = &self.destinations[state];
        dest.iter()
            .find(|&&(_, cum)| v < cum)
            .or(dest.last())
            .map_or(state, |&(j, _)| j)
    }
}

/// Exact log-scheme stepper for either market model.
#[derive(Debug, Clone)]
pub(crate) enum Stepper {
    Ratio {
        log_drift: f64,
        sigma: f64,
        step_drift: f64,
        step_vol: f64,
    },
    Joint {
        // Log drift per regime state (a single entry without a regime).
        p_log_drift: Vec<f64>,
        r_log_drift: Vec<f64>,
        sigma_p: f64,
        sigma_r: f64,
        rho: f64,
        rho_perp: f64,
        chain: Option<RegimeChain>,
        dt: f64,
        sqrt_dt: f64,
    },
}

impl Stepper {
    pub fn new(dynamics: &Dynamics, dt: f64) -> Result<Self> {
        match dynamics {
            Dynamics::Ratio(d) => Self::ratio(d, dt),
            Dynamics::Joint(m) => Self::joint(m, dt),
        }
    }

    pub fn ratio(d: &RatioDynamics, dt: f64) -> Result<Self> {
        d.validate()?;
        Ok(Stepper::Ratio {
            log_drift: d.log_drift(),
            sigma: d.sigma_x,
            step_drift: d.log_drift() * dt,
            step_vol: d.sigma_x * dt.sqrt(),
        })
    }

    pub fn joint(m: &MarketPrimitives, dt: f64) -> Result<Self> {
        m.validate()?;
        let chain = m.regime.as_ref().map(|s| RegimeChain::new(s, dt)).transpose()?;
        let levels: Vec<f64> = chain.as_ref().map_or(vec![0.0], |c| c.levels.clone());
        let p_log_drift = levels
            .iter()
            .map(|&lvl| m.mu_p + m.beta * lvl - 0.5 * m.sigma_p * m.sigma_p)
            .collect();
        let r_log_drift = levels
            .iter()
            .map(|&lvl| m.mu_r + m.alpha * lvl - 0.5 * m.sigma_r * m.sigma_r)
            .collect();
        Ok(Stepper::Joint {
            p_log_drift,
            r_log_drift,
            sigma_p: m.sigma_p,
            sigma_r: m.sigma_r,
            rho: m.rho,
            rho_perp: (1.0 - m.rho * m.rho).max(0.0).sqrt(),
            chain,
            dt,
            sqrt_dt: dt.sqrt(),
        })
    }

    pub fn initial(&self, m: Option<&MarketPrimitives>, p0: f64, r0: f64) -> MarketState {
        let regime = m
            .and_then(|m| m.regime.as_ref())
            .map_or(0, |s| s.initial_state);
        match self {
            Stepper::Ratio { .. } => MarketState {
                log_p: p0.ln(),
                log_r: 0.0,
                regime: 0,
            },
            Stepper::Joint { .. } => MarketState {
                log_p: p0.ln(),
                log_r: r0.ln(),
                regime,
            },
        }
    }

    pub fn is_joint(&self) -> bool {
        matches!(self, Stepper::Joint { .. })
    }

    /// Advance one step using the current regime, then let the regime switch.
    #[inline]
    pub fn step(&self, s: &mut MarketState, market: &mut ChaCha8Rng, regime_rng: Option<&mut ChaCha8Rng>) {
        match self {
            Stepper::Ratio {
                step_drift,
                step_vol,
                ..
            } => {
                let z: f64 = market.sample(StandardNormal);
                s.log_p += step_drift + step_vol * z;
            }
            Stepper::Joint {
                p_log_drift,
                r_log_drift,
                sigma_p,
                sigma_r,
                rho,
                rho_perp,
                chain,
                dt,
                sqrt_dt,
            } => {
                let z1: f64 = market.sample(StandardNormal);
                let z2: f64 = market.sample(StandardNormal);
                let zr = rho * z1 + rho_perp * z2;
                s.log_p += p_log_drift[s.regime] * dt + sigma_p * sqrt_dt * z1;
                s.log_r += r_log_drift[s.regime] * dt + sigma_r * sqrt_dt * zr;
                if let (Some(chain), Some(rng)) = (chain, regime_rng) {
                    s.regime = chain.switch(s.regime, rng);
                }
            }
        }
    }

    /// Price drift (not log drift) in the given regime, for continuations.
    pub fn price_drift(&self, regime: usize) -> f64 {
        match self {
            Stepper::Ratio {
                log_drift, sigma, ..
            } => log_drift + 0.5 * sigma * sigma,
            Stepper::Joint {
                p_log_drift,
                sigma_p,
                ..
            } => p_log_drift[regime] + 0.5 * sigma_p * sigma_p,
        }
    }
}

/// Sample mean and variance of `ln(X_H / x0)` with standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogMoments {
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
}

impl LogMoments {
    fn of(samples: impl Iterator<Item = f64> + Clone) -> Self {
        let n = samples.clone().count() as f64;
        let mean = samples.clone().sum::<f64>() / n;
        let m2 = samples.clone().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let m4 = samples.map(|v| (v - mean).powi(4)).sum::<f64>() / n;
        Self {
            mean,
            mean_se: (m2 / n).sqrt(),
            variance: m2,
            // Var of the sample variance: (m4 - m2^2) / n.
            variance_se: ((m4 - m2 * m2).max(0.0) / n).sqrt(),
        }
    }
}

/// Terminal ratios of a simulated ensemble, in path order.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioEnsemble {
    pub x0: f64,
    pub horizon: f64,
    pub terminal: Vec<f64>,
}

impl RatioEnsemble {
    pub fn log_increment_moments(&self) -> LogMoments {
        let x0 = self.x0;
        LogMoments::of(self.terminal.iter().map(move |x| (x / x0).ln()))
    }
}

/// Terminal price, rent, and regime index per path.
#[derive(Debug, Clone, PartialEq)]
pub struct JointEnsemble {
    pub p0: f64,
    pub r0: f64,
    pub horizon: f64,
    pub terminal_price: Vec<f64>,
    pub terminal_rent: Vec<f64>,
    pub terminal_regime: Vec<usize>,
}

impl JointEnsemble {
    /// Moments of `ln(X_H / X_0)` with `X = P / R`.
    pub fn ratio_log_moments(&self) -> LogMoments {
        let x0 = self.p0 / self.r0;
        LogMoments::of(
            self.terminal_price
                .iter()
                .zip(&self.terminal_rent)
                .map(move |(p, r)| (p / r / x0).ln()),
        )
    }

    /// Sample correlation of the log-returns of price and rent.
    pub fn log_return_correlation(&self) -> f64 {
        let lp: Vec<f64> = self.terminal_price.iter().map(|p| (p / self.p0).ln()).collect();
        let lr: Vec<f64> = self.terminal_rent.iter().map(|r| (r / self.r0).ln()).collect();
        let n = lp.len() as f64;
        let mp = lp.iter().sum::<f64>() / n;
        let mr = lr.iter().sum::<f64>() / n;
        let (mut cov, mut vp, mut vr) = (0.0, 0.0, 0.0);
        for (a, b) in lp.iter().zip(&lr) {
            cov += (a - mp) * (b - mr);
            vp += (a - mp).powi(2);
            vr += (b - mr).powi(2);
        }
        cov / (vp * vr).sqrt()
    }
}

/// One full joint path, `n_steps + 1` points.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPath {
    pub price: Vec<f64>,
    pub rent: Vec<f64>,
    pub regime: Vec<usize>,
}

fn run_path(
    stepper: &Stepper,
    start: MarketState,
    cfg: &PathConfig,
    index: usize,
    mut visit: impl FnMut(&MarketState),
) -> MarketState {
    let mut market = stream(cfg.seed, index, Purpose::Market);
    let mut regime = stepper
        .is_joint()
        .then(|| stream(cfg.seed, index, Purpose::Regime));
    let mut s = start;
    visit(&s);
    for _ in 0..cfg.n_steps() {
        stepper.step(&mut s, &mut market, regime.as_mut());
        visit(&s);
    }
    s
}

fn par_terminals(cfg: &PathConfig, f: impl Fn(usize) -> MarketState + Sync) -> Vec<MarketState> {
    (0..cfg.n_chunks())
        .into_par_iter()
        .flat_map_iter(|c| cfg.chunk_range(c).map(&f).collect::<Vec<_>>())
        .collect()
}

pub fn simulate_ratio_paths(d: &RatioDynamics, x0: f64, cfg: &PathConfig) -> Result<RatioEnsemble> {
    positive("x0", x0)?;
    cfg.validate()?;
    let stepper = Stepper::ratio(d, cfg.dt)?;
    let start = stepper.initial(None, x0, 1.0);
    let terminal = par_terminals(cfg, |i| run_path(&stepper, start, cfg, i, |_| {}))
        .into_iter()
        .map(|s| s.log_p.exp())
        .collect();
    Ok(RatioEnsemble {
        x0,
        horizon: cfg.effective_horizon(),
        terminal,
    })
}

/// The ratio path with the given index, as it appears in the ensemble.
pub fn sample_ratio_path(d: &RatioDynamics, x0: f64, cfg: &PathConfig, index: usize) -> Result<Vec<f64>> {
    positive("x0", x0)?;
    cfg.validate()?;
    let stepper = Stepper::ratio(d, cfg.dt)?;
    let mut out = Vec::with_capacity(cfg.n_steps() + 1);
    run_path(&stepper, stepper.initial(None, x0, 1.0), cfg, index, |s| {
        out.push(s.log_p.exp())
    });
    Ok(out)
}

pub fn simulate_joint_paths(
    m: &MarketPrimitives,
    p0: f64,
    r0: f64,
    cfg: &PathConfig,
) -> Result<JointEnsemble> {
    positive("p0", p0)?;
    positive("r0", r0)?;
    cfg.validate()?;
    let stepper = Stepper::joint(m, cfg.dt)?;
    let start = stepper.initial(Some(m), p0, r0);
    let states = par_terminals(cfg, |i| run_path(&stepper, start, cfg, i, |_| {}));
    Ok(JointEnsemble {
        p0,
        r0,
        horizon: cfg.effective_horizon(),
        terminal_price: states.iter().map(|s| s.log_p.exp()).collect(),
        terminal_rent: states.iter().map(|s| s.log_r.exp()).collect(),
        terminal_regime: states.iter().map(|s| s.regime).collect(),
    })
}

pub fn sample_joint_path(
    m: &MarketPrimitives,
    p0: f64,
    r0: f64,
    cfg: &PathConfig,
    index: usize,
) -> Result<JointPath> {
    positive("p0", p0)?;
    positive("r0", r0)?;
    cfg.validate()?;
    let stepper = Stepper::joint(m, cfg.dt)?;
    let mut path = JointPath {
        price: Vec::new(),
        rent: Vec::new(),
        regime: Vec::new(),
    };
    run_path(&stepper, stepper.initial(Some(m), p0, r0), cfg, index, |s| {
        path.price.push(s.log_p.exp());
        path.rent.push(s.log_r.exp());
        path.regime.push(s.regime);
    });
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_core::reduce_to_ratio;

    fn cfg(n_paths: usize, dt: f64, horizon: f64) -> PathConfig {
        PathConfig {
            n_paths,
            dt,
            horizon,
            seed: 42,
            chunk_size: 512,
        }
    }

    #[test]
    fn deterministic_limit() {
        let d = RatioDynamics::new(0.01, 0.0);
        let ens = simulate_ratio_paths(&d, 20.0, &cfg(50, 1.0 / 252.0, 1.0)).unwrap();
        let expect = 20.0 * 0.01f64.exp();
        for x in &ens.terminal {
            assert!((x - expect).abs() < 1e-10, "{x}");
        }
    }

    #[test]
    fn ratio_moments_match_gbm() {
        let d = RatioDynamics::new(0.01, 0.15);
        let ens = simulate_ratio_paths(&d, 20.0, &cfg(100_000, 0.25, 1.0)).unwrap();
        let mo = ens.log_increment_moments();
        assert!((mo.mean - (-0.00125)).abs() < 3.0 * mo.mean_se, "{mo:?}");
        assert!((mo.variance - 0.0225).abs() < 3.0 * mo.variance_se, "{mo:?}");
    }

    #[test]
    fn ensembles_are_reproducible() {
        let d = RatioDynamics::new(0.01, 0.15);
        let c = cfg(3000, 0.1, 2.0);
        let a = simulate_ratio_paths(&d, 20.0, &c).unwrap();
        let b = simulate_ratio_paths(&d, 20.0, &c).unwrap();
        assert_eq!(a, b);
        let path = sample_ratio_path(&d, 20.0, &c, 1234).unwrap();
        assert_eq!(path.len(), c.n_steps() + 1);
        assert_eq!(*path.last().unwrap(), a.terminal[1234]);
        // Independent of chunking.
        let rechunked = simulate_ratio_paths(&d, 20.0, &PathConfig { chunk_size: 7, ..c }).unwrap();
        assert_eq!(a, rechunked);
    }

    #[test]
    fn hedged_market_keeps_ratio_constant() {
        let m = MarketPrimitives::new(0.03, 0.2, 0.03, 0.2, 1.0);
        let path = sample_joint_path(&m, 300.0, 12.0, &cfg(1, 1.0 / 52.0, 5.0), 3).unwrap();
        for (p, r) in path.price.iter().zip(&path.rent) {
            assert!((p / r - 25.0).abs() < 1e-11, "{}", p / r);
        }
        assert!((path.price.last().unwrap() - 300.0).abs() > 1e-6);
    }

    #[test]
    fn joint_correlation_and_ito_reduction() {
        let m = MarketPrimitives::new(0.03, 0.10, 0.02, 0.05, 0.3);
        let ens = simulate_joint_paths(&m, 20.0, 1.0, &cfg(100_000, 0.5, 1.0)).unwrap();
        let n = ens.terminal_price.len() as f64;
        let rho_hat = ens.log_return_correlation();
        let se = (1.0 - 0.09) / n.sqrt();
        assert!((rho_hat - 0.3).abs() < 3.0 * se, "{rho_hat}");
        let d = reduce_to_ratio(&m).unwrap();
        let mo = ens.ratio_log_moments();
        assert!((mo.mean - d.log_drift()).abs() < 3.0 * mo.mean_se, "{mo:?}");
        assert!((mo.variance - d.sigma_x.powi(2)).abs() < 3.0 * mo.variance_se, "{mo:?}");
    }

    #[test]
    fn zero_loadings_regime_is_inert() {
        let plain = MarketPrimitives::new(0.03, 0.10, 0.02, 0.05, 0.3);
        let mut with_regime = plain.clone();
        with_regime.regime = Some(DemandRegimeSpec::two_state(0.8));
        let c = cfg(200, 1.0 / 52.0, 3.0);
        let a = simulate_joint_paths(&plain, 20.0, 1.0, &c).unwrap();
        let b = simulate_joint_paths(&with_regime, 20.0, 1.0, &c).unwrap();
        assert_eq!(a.terminal_price, b.terminal_price);
        assert_eq!(a.terminal_rent, b.terminal_rent);
        assert!(b.terminal_regime.iter().any(|&s| s == 1));
    }

    #[test]
    fn regime_loadings_shift_drift() {
        // Start in the +1 state with a slow chain: price drift rises by beta.
        let mut m = MarketPrimitives::new(0.03, 0.0, 0.0, 0.0, 0.0);
        m.beta = 0.02;
        m.regime = Some(DemandRegimeSpec {
            states: vec![-1.0, 1.0],
            switch_rates: vec![vec![0.0, 1e-9], vec![1e-9, 0.0]],
            initial_state: 1,
        });
        let ens = simulate_joint_paths(&m, 1.0, 1.0, &cfg(10, 0.01, 1.0)).unwrap();
        for p in &ens.terminal_price {
            assert!((p - 0.05f64.exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn regime_occupancy_matches_chain() {
        // Symmetric chain started in state 0: P(state 1 at t) = (1 - e^{-2qt}) / 2.
        let mut m = MarketPrimitives::new(0.0, 0.0, 0.0, 0.0, 0.0);
        m.regime = Some(DemandRegimeSpec::two_state(0.5));
        let ens = simulate_joint_paths(&m, 1.0, 1.0, &cfg(20_000, 0.01, 1.0)).unwrap();
        let frac = ens.terminal_regime.iter().filter(|&&s| s == 1).count() as f64 / 20_000.0;
        let p = 0.5 * (1.0 - (-1.0f64).exp());
        let se = (p * (1.0 - p) / 20_000.0).sqrt();
        assert!((frac - p).abs() < 4.0 * se, "{frac} vs {p}");
    }

    #[test]
    fn coarse_dt_for_regime_rejected() {
        let mut m = MarketPrimitives::new(0.03, 0.1, 0.02, 0.05, 0.3);
        m.regime = Some(DemandRegimeSpec::two_state(2.0));
        let err = simulate_joint_paths(&m, 1.0, 1.0, &cfg(10, 0.1, 1.0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
