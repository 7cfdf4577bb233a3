//! Market primitives, the reduction of joint price/rent dynamics to the
//! price-to-rent ratio, and the relocation-discount quantities built on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Joint price and rent dynamics, optionally shifted by a demand-shock regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketPrimitives {
    pub mu_p: f64,
    pub sigma_p: f64,
    pub mu_r: f64,
    pub sigma_r: f64,
    pub rho: f64,
    /// Rent-drift loading on the demand shock.
    #[serde(default)]
    pub alpha: f64,
    /// Price-drift loading on the demand shock.
    #[serde(default)]
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<DemandRegimeSpec>,
}

impl MarketPrimitives {
    /// Primitives without any demand-shock extension.
    pub fn new(mu_p: f64, sigma_p: f64, mu_r: f64, sigma_r: f64, rho: f64) -> Self {
        Self {
            mu_p,
            sigma_p,
            mu_r,
            sigma_r,
            rho,
            alpha: 0.0,
            beta: 0.0,
            regime: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        finite("mu_p", self.mu_p)?;
        finite("mu_r", self.mu_r)?;
        finite("alpha", self.alpha)?;
        finite("beta", self.beta)?;
        non_negative("sigma_p", self.sigma_p)?;
        non_negative("sigma_r", self.sigma_r)?;
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::param("rho", format!("must lie in [-1, 1], got {}", self.rho)));
        }
        if let Some(regime) = &self.regime {
            regime.validate()?;
        }
        Ok(())
    }

    pub fn has_demand_shock(&self) -> bool {
        self.alpha != 0.0 || self.beta != 0.0 || self.regime.is_some()
    }
}

/// Finite-state continuous-time Markov chain for the demand shock `M_t`.
///
/// `switch_rates[i][j]` is the intensity of jumping from state `i` to `j`;
/// the diagonal is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandRegimeSpec {
    pub states: Vec<f64>,
    pub switch_rates: Vec<Vec<f64>>,
    #[serde(default)]
    pub initial_state: usize,
}

impl DemandRegimeSpec {
    /// Symmetric two-state chain on {-1, +1}.
    pub fn two_state(rate: f64) -> Self {
        Self {
            states: vec![-1.0, 1.0],
            switch_rates: vec![vec![0.0, rate], vec![rate, 0.0]],
            initial_state: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.states.len();
        if n == 0 {
            return Err(Error::param("regime.states", "at least one state required"));
        }
        if self.states.iter().any(|s| !s.is_finite()) {
            return Err(Error::param("regime.states", "levels must be finite"));
        }
        if self.switch_rates.len() != n || self.switch_rates.iter().any(|row| row.len() != n) {
            return Err(Error::param(
                "regime.switch_rates",
                format!("must be a {n}x{n} matrix"),
            ));
        }
        for (i, row) in self.switch_rates.iter().enumerate() {
            for (j, &q) in row.iter().enumerate() {
                if i != j && !(q >= 0.0 && q.is_finite()) {
                    return Err(Error::param(
                        "regime.switch_rates",
                        format!("off-diagonal intensity [{i}][{j}] must be finite and >= 0, got {q}"),
                    ));
                }
            }
        }
        if self.initial_state >= n {
            return Err(Error::param(
                "regime.initial_state",
                format!("index {} out of range for {n} states", self.initial_state),
            ));
        }
        Ok(())
    }

    /// Total exit intensity of state `i`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        self.switch_rates[i]
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, q)| q)
            .sum()
    }

    pub fn max_exit_rate(&self) -> f64 {
        (0..self.states.len())
            .map(|i| self.exit_rate(i))
            .fold(0.0, f64::max)
    }
}

/// Drift and volatility of the geometric diffusion followed by `X = P / R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatioDynamics {
    pub mu_x: f64,
    pub sigma_x: f64,
}

impl RatioDynamics {
    pub fn new(mu_x: f64, sigma_x: f64) -> Self {
        Self { mu_x, sigma_x }
    }

    pub fn validate(&self) -> Result<()> {
        finite("mu_x", self.mu_x)?;
        non_negative("sigma_x", self.sigma_x)
    }

    /// Drift of `ln X`.
    pub fn log_drift(&self) -> f64 {
        self.mu_x - 0.5 * self.sigma_x * self.sigma_x
    }
}

/// The two roots of `½σ²γ(γ−1) + μγ − r = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicRoots {
    pub gamma_neg: f64,
    pub gamma_pos: f64,
}

/// How `E[e^{-rT} X_T]` is turned into a multiple of the current ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResaleMode {
    /// `λ/(r+λ)`: the ratio is held at its purchase value.
    #[default]
    PaperApprox,
    /// `λ/(r+λ−μ_X)`: exponential `T` independent of a geometric `X`.
    Exact,
}

/// Itô reduction of `(P, R)` to the ratio diffusion.
///
/// Only defined for the plain model; any demand-shock loading or attached
/// regime is rejected because the ratio is then no longer a one-dimensional
/// diffusion.
pub fn reduce_to_ratio(m: &MarketPrimitives) -> Result<RatioDynamics> {
    m.validate()?;
    if m.has_demand_shock() {
        return Err(Error::RegimeSwitching {
            alpha: m.alpha,
            beta: m.beta,
            has_regime: m.regime.is_some(),
        });
    }
    let cross = m.rho * m.sigma_p * m.sigma_r;
    let mu_x = m.mu_p - m.mu_r + m.sigma_r * m.sigma_r - cross;
    // Clamp tiny negative values from rounding when rho = 1 and sigmas match.
    let var_x = (m.sigma_p * m.sigma_p + m.sigma_r * m.sigma_r - 2.0 * cross).max(0.0);
    Ok(RatioDynamics {
        mu_x,
        sigma_x: var_x.sqrt(),
    })
}

/// Roots of the characteristic quadratic, computed without cancellation.
pub fn characteristic_roots(d: &RatioDynamics, r: f64) -> Result<CharacteristicRoots> {
    d.validate()?;
    positive("r", r)?;
    if d.sigma_x == 0.0 {
        return Err(Error::DegenerateDynamics);
    }
    let quad = 0.5 * d.sigma_x * d.sigma_x;
    let lin = d.mu_x - quad;
    let constant = -r;
    let disc = lin * lin - 4.0 * quad * constant;
    let q = -0.5 * (lin + lin.signum() * disc.sqrt());
    let big = q / quad;
    let small = constant / q;
    let (gamma_neg, gamma_pos) = if big < small { (big, small) } else { (small, big) };
    Ok(CharacteristicRoots {
        gamma_neg,
        gamma_pos,
    })
}

/// Residual of the characteristic quadratic at `gamma`.
pub fn characteristic_residual(d: &RatioDynamics, r: f64, gamma: f64) -> f64 {
    0.5 * d.sigma_x * d.sigma_x * gamma * (gamma - 1.0) + d.mu_x * gamma - r
}

/// `E[e^{-rT}]` for `T ~ Exp(λ)`, i.e. `λ/(r+λ)`.
pub fn expected_relocation_discount(lambda: f64, r: f64) -> Result<f64> {
    positive("r", r)?;
    non_negative("lambda", lambda)?;
    Ok(lambda / (r + lambda))
}

/// Expected discounted resale value per unit of the current ratio.
pub fn resale_multiplier(d: &RatioDynamics, lambda: f64, r: f64, mode: ResaleMode) -> Result<f64> {
    let approx = expected_relocation_discount(lambda, r)?;
    match mode {
        ResaleMode::PaperApprox => Ok(approx),
        ResaleMode::Exact => {
            finite("mu_x", d.mu_x)?;
            let denom = r + lambda - d.mu_x;
            if denom <= 0.0 {
                return Err(Error::DivergentResale {
                    r_plus_lambda: r + lambda,
                    drift: d.mu_x,
                });
            }
            Ok(lambda / denom)
        }
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite, got {v}")))
    }
}

pub(crate) fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite and >= 0, got {v}")))
    }
}

pub(crate) fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite and > 0, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Bisection on the characteristic quadratic over a bracket; shares no
    /// code with the closed-form root.
    fn bisect_root(d: &RatioDynamics, r: f64, mut lo: f64, mut hi: f64) -> f64 {
        let f = |g: f64| characteristic_residual(d, r, g);
        assert!(f(lo) * f(hi) <= 0.0, "bracket does not straddle a root");
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn reduction_matches_ito_quotient() {
        let m = MarketPrimitives::new(0.03, 0.10, 0.02, 0.05, 0.3);
        let d = reduce_to_ratio(&m).unwrap();
        assert!((d.mu_x - 0.0110).abs() < 1e-12);
        assert!((d.sigma_x - 0.097468).abs() < 1e-6);
    }

    #[test]
    fn constant_rent_passes_price_through() {
        let m = MarketPrimitives::new(0.03, 0.10, 0.0, 0.0, 0.0);
        let d = reduce_to_ratio(&m).unwrap();
        assert_eq!(d, RatioDynamics::new(0.03, 0.10));
    }

    #[test]
    fn perfectly_hedged_volatility_cancels() {
        let m = MarketPrimitives::new(0.04, 0.2, 0.01, 0.2, 1.0);
        let d = reduce_to_ratio(&m).unwrap();
        assert!((d.mu_x - 0.03).abs() < 1e-15);
        assert_eq!(d.sigma_x, 0.0);
    }

    #[test]
    fn reduction_rejects_demand_shock() {
        let mut m = MarketPrimitives::new(0.03, 0.10, 0.02, 0.05, 0.3);
        m.alpha = 0.01;
        assert!(matches!(reduce_to_ratio(&m), Err(Error::RegimeSwitching { .. })));
        let mut m = MarketPrimitives::new(0.03, 0.10, 0.02, 0.05, 0.3);
        m.regime = Some(DemandRegimeSpec::two_state(0.5));
        assert!(matches!(reduce_to_ratio(&m), Err(Error::RegimeSwitching { .. })));
    }

    #[test]
    fn invalid_primitives_rejected() {
        let m = MarketPrimitives::new(0.03, -0.1, 0.02, 0.05, 0.3);
        assert!(reduce_to_ratio(&m).is_err());
        let m = MarketPrimitives::new(0.03, 0.1, 0.02, 0.05, 1.2);
        assert!(reduce_to_ratio(&m).is_err());
    }

    #[test]
    fn regime_spec_validation() {
        let mut spec = DemandRegimeSpec::two_state(0.5);
        assert!(spec.validate().is_ok());
        spec.switch_rates[0][1] = -0.1;
        assert!(spec.validate().is_err());
        let mut spec = DemandRegimeSpec::two_state(0.5);
        spec.initial_state = 2;
        assert!(spec.validate().is_err());
        let mut spec = DemandRegimeSpec::two_state(0.5);
        spec.switch_rates.pop();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn golden_ratio_root() {
        let d = RatioDynamics::new(0.0, 2f64.sqrt());
        let roots = characteristic_roots(&d, 1.0).unwrap();
        let expect = (1.0 - 5f64.sqrt()) / 2.0;
        assert!((roots.gamma_neg - expect).abs() < 1e-14);
        assert!((roots.gamma_pos - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn table_roots_agree_with_bisection() {
        for &(mu, sigma, expect) in &[(0.01, 0.15, -2.0534), (0.005, 0.25, -0.91283)] {
            let d = RatioDynamics::new(mu, sigma);
            let roots = characteristic_roots(&d, 0.05).unwrap();
            let oracle = bisect_root(&d, 0.05, -50.0, 0.0);
            assert!((roots.gamma_neg - oracle).abs() < 1e-12);
            assert!((roots.gamma_neg - expect).abs() < 5e-5, "{}", roots.gamma_neg);
            assert!(characteristic_residual(&d, 0.05, roots.gamma_neg).abs() < 1e-12);
            assert!(characteristic_residual(&d, 0.05, roots.gamma_pos).abs() < 1e-12);
        }
    }

    #[test]
    fn small_volatility_root_is_stable() {
        // lin dominates the discriminant; the naive formula loses the positive root.
        let d = RatioDynamics::new(0.02, 1e-6);
        let roots = characteristic_roots(&d, 0.05).unwrap();
        assert!((roots.gamma_pos - 2.5).abs() < 1e-9);
        let rel = characteristic_residual(&d, 0.05, roots.gamma_pos).abs();
        assert!(rel < 1e-12);
    }

    #[test]
    fn zero_volatility_is_degenerate() {
        let d = RatioDynamics::new(0.01, 0.0);
        assert_eq!(characteristic_roots(&d, 0.05), Err(Error::DegenerateDynamics));
    }

    #[test]
    fn relocation_discount_values() {
        assert!((expected_relocation_discount(0.1, 0.05).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(expected_relocation_discount(0.0, 0.05).unwrap(), 0.0);
        assert!((expected_relocation_discount(0.2, 0.05).unwrap() - 0.8).abs() < 1e-15);
        assert!(expected_relocation_discount(0.1, 0.0).is_err());
        assert!(expected_relocation_discount(-0.1, 0.05).is_err());
    }

    #[test]
    fn resale_modes() {
        let d = RatioDynamics::new(0.01, 0.15);
        let approx = resale_multiplier(&d, 0.1, 0.05, ResaleMode::PaperApprox).unwrap();
        assert!((approx - 2.0 / 3.0).abs() < 1e-12);
        let exact = resale_multiplier(&d, 0.1, 0.05, ResaleMode::Exact).unwrap();
        assert!((exact - 0.1 / 0.14).abs() < 1e-12);
        let flat = RatioDynamics::new(0.0, 0.15);
        assert_eq!(
            resale_multiplier(&flat, 0.1, 0.05, ResaleMode::Exact).unwrap(),
            resale_multiplier(&flat, 0.1, 0.05, ResaleMode::PaperApprox).unwrap()
        );
        let fast = RatioDynamics::new(0.2, 0.15);
        assert!(matches!(
            resale_multiplier(&fast, 0.1, 0.05, ResaleMode::Exact),
            Err(Error::DivergentResale { .. })
        ));
    }

    #[test]
    fn gamma_neg_increases_with_volatility() {
        for &mu in &[-0.02, 0.0, 0.01, 0.03] {
            let mut prev = f64::NEG_INFINITY;
            for i in 1..=60 {
                let sigma = 0.01 * i as f64;
                let g = characteristic_roots(&RatioDynamics::new(mu, sigma), 0.05)
                    .unwrap()
                    .gamma_neg;
                assert!(g > prev, "mu={mu} sigma={sigma}");
                prev = g;
            }
        }
    }

    #[test]
    fn relocation_discount_monotone() {
        let grid: Vec<f64> = (0..30).map(|i| 0.01 + 0.02 * i as f64).collect();
        for w in grid.windows(2) {
            let lo = expected_relocation_discount(w[0], 0.05).unwrap();
            let hi = expected_relocation_discount(w[1], 0.05).unwrap();
            assert!(hi > lo);
            let lo_r = expected_relocation_discount(0.1, w[0]).unwrap();
            let hi_r = expected_relocation_discount(0.1, w[1]).unwrap();
            assert!(hi_r < lo_r);
        }
    }

    proptest! {
        #[test]
        fn root_identities_hold(mu in -0.1f64..0.1, sigma in 0.02f64..0.8, r in 0.005f64..0.2) {
            let d = RatioDynamics::new(mu, sigma);
            let roots = characteristic_roots(&d, r).unwrap();
            let s2 = sigma * sigma;
            let sum = 1.0 - 2.0 * mu / s2;
            let prod = -2.0 * r / s2;
            let tol = |v: f64| 1e-10 * v.abs().max(1.0);
            prop_assert!((roots.gamma_neg + roots.gamma_pos - sum).abs() <= tol(sum));
            prop_assert!((roots.gamma_neg * roots.gamma_pos - prod).abs() <= tol(prod));
            prop_assert!(roots.gamma_neg < 0.0 && roots.gamma_pos > 0.0);
            // Residual scaled by the coefficient magnitudes at the root.
            for g in [roots.gamma_neg, roots.gamma_pos] {
                let scale = (0.5 * s2 * g * g).abs() + (mu * g).abs() + r;
                prop_assert!(characteristic_residual(&d, r, g).abs() < 1e-10 * scale.max(1.0));
            }
        }
    }
}
