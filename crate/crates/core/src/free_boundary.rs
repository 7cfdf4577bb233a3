//! Buy payoff, free-boundary solution, and checks on the resulting value
//! function.
//!
//! All values are per unit of current annual rent, so `X` is the annual
//! price-to-rent ratio and the renting flow is a constant `±1` per year.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_core::{
    non_negative, positive, resale_multiplier, CharacteristicRoots, RatioDynamics, ResaleMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffMode {
    /// Pay `(1+k)X` up front, carry `c_op` on the purchase price, collect the
    /// service flow `h` until relocation, then resell at a haircut.
    #[default]
    LifecycleCash,
    /// `-K + (H-C)/(r+λ) + E[e^{-rT}X_T]` with lump-sum `K` and flow `H-C`.
    PaperLiteral,
}

/// Sign of the rent flow while renting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RentFlow {
    /// Rent is a cost: flow `-1`.
    #[default]
    Cost,
    /// Flow `+1`, as the HJB equation is sometimes written.
    Benefit,
}

impl RentFlow {
    pub fn sign(self) -> f64 {
        match self {
            RentFlow::Cost => -1.0,
            RentFlow::Benefit => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HouseholdEnv {
    pub r: f64,
    pub lambda: f64,
    /// Transaction cost as a fraction of the purchase price.
    pub k: f64,
    /// Resale haircut.
    pub delta: f64,
    /// Ownership service flow as a multiple of the rent flow.
    pub h: f64,
    /// Carrying cost per year as a fraction of the purchase price.
    pub c_op: f64,
    /// Lump-sum entry cost in rent units (paper-literal mode).
    pub k_abs: f64,
    /// Net ownership flow `H - C` in rent units (paper-literal mode).
    pub hc_flow: f64,
    pub payoff_mode: PayoffMode,
    pub resale_mode: ResaleMode,
    pub include_post_relocation_rent: bool,
    pub rent_flow: RentFlow,
}

impl Default for HouseholdEnv {
    fn default() -> Self {
        Self {
            r: 0.05,
            lambda: 0.10,
            k: 0.08,
            delta: 0.10,
            h: 1.0,
            c_op: 0.03,
            k_abs: 1.6,
            hc_flow: 0.5,
            payoff_mode: PayoffMode::LifecycleCash,
            resale_mode: ResaleMode::PaperApprox,
            include_post_relocation_rent: true,
            rent_flow: RentFlow::Cost,
        }
    }
}

impl HouseholdEnv {
    pub fn validate(&self) -> Result<()> {
        positive("r", self.r)?;
        non_negative("lambda", self.lambda)?;
        match self.payoff_mode {
            PayoffMode::LifecycleCash => {
                non_negative("k", self.k)?;
                non_negative("c_op", self.c_op)?;
                if !(0.0..=1.0).contains(&self.delta) {
                    return Err(Error::param(
                        "delta",
                        format!("must lie in [0, 1], got {}", self.delta),
                    ));
                }
                if !self.h.is_finite() {
                    return Err(Error::param("h", "must be finite"));
                }
            }
            PayoffMode::PaperLiteral => {
                if !self.k_abs.is_finite() {
                    return Err(Error::param("k_abs", "must be finite"));
                }
                if !self.hc_flow.is_finite() {
                    return Err(Error::param("hc_flow", "must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Present value of the renting flow forever, `±1/r`.
    pub fn rent_perpetuity(&self) -> f64 {
        self.rent_flow.sign() / self.r
    }
}

/// Affine buy payoff `G(X) = a + m·X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuyValue {
    pub a: f64,
    pub m: f64,
}

impl BuyValue {
    pub fn eval(&self, x: f64) -> f64 {
        self.a + self.m * x
    }
}

pub fn buy_value_coefficients(env: &HouseholdEnv, d: &RatioDynamics) -> Result<BuyValue> {
    env.validate()?;
    let (r, lambda) = (env.r, env.lambda);
    let resale = resale_multiplier(d, lambda, r, env.resale_mode)?;
    let bv = match env.payoff_mode {
        PayoffMode::LifecycleCash => {
            let post_rent = if env.include_post_relocation_rent {
                lambda / (r * (r + lambda))
            } else {
                0.0
            };
            BuyValue {
                a: env.h / (r + lambda) - post_rent,
                m: (1.0 - env.delta) * resale - (1.0 + env.k) - env.c_op / (r + lambda),
            }
        }
        PayoffMode::PaperLiteral => BuyValue {
            a: -env.k_abs + env.hc_flow / (r + lambda),
            m: resale,
        },
    };
    Ok(bv)
}

/// Classification of the stopping problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Buy iff `X <= x_star`.
    Interior,
    /// No positive boundary: the payoff does not fall with `X`, or buying
    /// is dominated at every ratio.
    NoFiniteThreshold,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Interior => "interior",
            Regime::NoFiniteThreshold => "no_finite_threshold",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSolution {
    /// Critical ratio; `None` off the interior regime.
    pub x_star: Option<f64>,
    /// Option coefficient `A` in `V(X) = A·X^γ + rent_perpetuity`.
    pub a_coef: Option<f64>,
    pub gamma: f64,
    pub regime: Regime,
    pub rent_perpetuity: f64,
    pub diagnostic: Option<String>,
}

impl ThresholdSolution {
    /// `(x_star, a_coef)`, or an error when not interior.
    pub fn interior(&self) -> Result<(f64, f64)> {
        match (self.regime, self.x_star, self.a_coef) {
            (Regime::Interior, Some(x), Some(a)) => Ok((x, a)),
            _ => Err(Error::UnsupportedRegime(self.regime)),
        }
    }

    fn option_value(&self, a_coef: f64, x: f64) -> f64 {
        a_coef * x.powf(self.gamma)
    }
}

/// Solve value matching and smooth pasting with rent as a cost.
pub fn solve_threshold(bv: &BuyValue, roots: &CharacteristicRoots, r: f64) -> Result<ThresholdSolution> {
    solve_threshold_with_flow(bv, roots, r, RentFlow::Cost)
}

pub fn solve_threshold_with_flow(
    bv: &BuyValue,
    roots: &CharacteristicRoots,
    r: f64,
    flow: RentFlow,
) -> Result<ThresholdSolution> {
    positive("r", r)?;
    let gamma = roots.gamma_neg;
    if !(gamma < 0.0) {
        return Err(Error::Contract(format!(
            "threshold solver needs the negative characteristic root, got {gamma}"
        )));
    }
    let rent_perpetuity = flow.sign() / r;
    let degenerate = |why: String| ThresholdSolution {
        x_star: None,
        a_coef: None,
        gamma,
        regime: Regime::NoFiniteThreshold,
        rent_perpetuity,
        diagnostic: Some(why),
    };
    if bv.m >= 0.0 {
        return Ok(degenerate(format!(
            "buy payoff slope m = {} is not negative; no low-ratio stopping region",
            bv.m
        )));
    }
    // Eliminating A between V(X*) = G(X*) and V'(X*) = m.
    let x_star = gamma * (bv.a - rent_perpetuity) / (bv.m * (1.0 - gamma));
    if !(x_star > 0.0) || !x_star.is_finite() {
        return Ok(degenerate(format!(
            "a - rent_perpetuity = {} <= 0; buying is dominated by renting at every ratio",
            bv.a - rent_perpetuity
        )));
    }
    let a_coef = bv.m * x_star.powf(1.0 - gamma) / gamma;
    Ok(ThresholdSolution {
        x_star: Some(x_star),
        a_coef: Some(a_coef),
        gamma,
        regime: Regime::Interior,
        rent_perpetuity,
        diagnostic: None,
    })
}

/// `V(x)`: the buy payoff at or below the boundary, the renting value above.
pub fn value_function_at(sol: &ThresholdSolution, bv: &BuyValue, x: f64) -> Result<f64> {
    let (x_star, a_coef) = sol.interior()?;
    positive("x", x)?;
    if x <= x_star {
        Ok(bv.eval(x))
    } else {
        Ok(sol.option_value(a_coef, x) + sol.rent_perpetuity)
    }
}

/// `V'(x)`, analytic, on either side of the boundary.
pub fn value_derivative_at(sol: &ThresholdSolution, bv: &BuyValue, x: f64) -> Result<f64> {
    let (x_star, a_coef) = sol.interior()?;
    positive("x", x)?;
    if x <= x_star {
        Ok(bv.m)
    } else {
        Ok(sol.gamma * a_coef * x.powf(sol.gamma - 1.0))
    }
}

/// `(V(X*) − G(X*), V'(X*) − m)` with `V` taken from the renting branch.
pub fn verify_boundary_conditions(sol: &ThresholdSolution, bv: &BuyValue) -> Result<(f64, f64)> {
    let (x_star, a_coef) = sol.interior()?;
    Ok(boundary_residuals_at(sol.gamma, a_coef, sol.rent_perpetuity, bv, x_star))
}

/// Boundary residuals for an arbitrary candidate `(A, γ)` pasted at `x`.
pub fn boundary_residuals_at(
    gamma: f64,
    a_coef: f64,
    rent_perpetuity: f64,
    bv: &BuyValue,
    x: f64,
) -> (f64, f64) {
    let v = a_coef * x.powf(gamma) + rent_perpetuity;
    let dv = gamma * a_coef * x.powf(gamma - 1.0);
    (v - bv.eval(x), dv - bv.m)
}

/// Break-even ratio where `G(X)` equals the renting-forever value.
pub fn break_even_ratio(bv: &BuyValue, rent_perpetuity: f64) -> Option<f64> {
    if bv.m == 0.0 {
        return None;
    }
    Some((rent_perpetuity - bv.a) / bv.m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HjbResidual {
    /// Largest `|rV − flow − μxV' − ½σ²x²V''|` over the grid.
    pub max_abs: f64,
    /// Largest of the same, each divided by `|rV(x)| + 1`.
    pub max_rel: f64,
}

const FD_REL_STEP: f64 = 1e-5;

/// HJB residual of the solution's renting branch on `grid`, via central
/// finite differences.
pub fn hjb_residual(
    sol: &ThresholdSolution,
    bv: &BuyValue,
    r: f64,
    d: &RatioDynamics,
    grid: &[f64],
) -> Result<HjbResidual> {
    let (x_star, _) = sol.interior()?;
    for &x in grid {
        if !(x > x_star * (1.0 + 1e-6)) {
            return Err(Error::OutsideContinuation { x, x_star });
        }
    }
    let flow = sol.rent_perpetuity * r;
    let v = |x: f64| value_function_at(sol, bv, x).expect("checked interior");
    Ok(hjb_residual_of(v, flow, r, d, grid))
}

/// HJB residual of any candidate function, no region checks.
pub fn hjb_residual_of(
    v: impl Fn(f64) -> f64,
    flow: f64,
    r: f64,
    d: &RatioDynamics,
    grid: &[f64],
) -> HjbResidual {
    let mut out = HjbResidual {
        max_abs: 0.0,
        max_rel: 0.0,
    };
    for &x in grid {
        let h = FD_REL_STEP * x;
        let (lo, mid, hi) = (v(x - h), v(x), v(x + h));
        let d1 = (hi - lo) / (2.0 * h);
        let d2 = (hi - 2.0 * mid + lo) / (h * h);
        let res = r * mid - flow - d.mu_x * x * d1 - 0.5 * d.sigma_x * d.sigma_x * x * x * d2;
        out.max_abs = out.max_abs.max(res.abs());
        out.max_rel = out.max_rel.max(res.abs() / ((r * mid).abs() + 1.0));
    }
    out
}
