//! Sensitivities of the buying threshold, one-dimensional sweeps, the
//! (λ, σ) threshold map, and the linearized buy-minus-rent difference.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_boundary::{
    buy_value_coefficients, solve_threshold_with_flow, BuyValue, HouseholdEnv, Regime,
    ThresholdSolution,
};
use crate::model_core::{characteristic_roots, CharacteristicRoots, RatioDynamics};

/// A scalar input of the threshold problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    SigmaX,
    MuX,
    Lambda,
    R,
    K,
    Delta,
    H,
    COp,
    KAbs,
    HcFlow,
}

impl Param {
    pub const ALL: [Param; 10] = [
        Param::SigmaX,
        Param::MuX,
        Param::Lambda,
        Param::R,
        Param::K,
        Param::Delta,
        Param::H,
        Param::COp,
        Param::KAbs,
        Param::HcFlow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::SigmaX => "sigma_x",
            Param::MuX => "mu_x",
            Param::Lambda => "lambda",
            Param::R => "r",
            Param::K => "k",
            Param::Delta => "delta",
            Param::H => "h",
            Param::COp => "c_op",
            Param::KAbs => "k_abs",
            Param::HcFlow => "hc_flow",
        }
    }

    /// Whether changing this parameter changes the characteristic roots.
    pub fn moves_roots(self) -> bool {
        matches!(self, Param::SigmaX | Param::MuX | Param::R)
    }

    pub fn get(self, env: &HouseholdEnv, d: &RatioDynamics) -> f64 {
        match self {
            Param::SigmaX => d.sigma_x,
            Param::MuX => d.mu_x,
            Param::Lambda => env.lambda,
            Param::R => env.r,
            Param::K => env.k,
            Param::Delta => env.delta,
            Param::H => env.h,
            Param::COp => env.c_op,
            Param::KAbs => env.k_abs,
            Param::HcFlow => env.hc_flow,
        }
    }

    pub fn set(self, env: &mut HouseholdEnv, d: &mut RatioDynamics, value: f64) {
        match self {
            Param::SigmaX => d.sigma_x = value,
            Param::MuX => d.mu_x = value,
            Param::Lambda => env.lambda = value,
            Param::R => env.r = value,
            Param::K => env.k = value,
            Param::Delta => env.delta = value,
            Param::H => env.h = value,
            Param::COp => env.c_op = value,
            Param::KAbs => env.k_abs = value,
            Param::HcFlow => env.hc_flow = value,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let alias = match s {
            "sigma" => "sigma_x",
            "mu" => "mu_x",
            other => other,
        };
        Param::ALL
            .into_iter()
            .find(|p| p.name() == alias)
            .ok_or_else(|| {
                let valid: Vec<_> = Param::ALL.iter().map(|p| p.name()).collect();
                Error::param("param", format!("unknown parameter `{s}`; valid: {}", valid.join(", ")))
            })
    }
}

/// Outcome of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Threshold(f64),
    NoFiniteThreshold,
    /// The cell's parameters are outside the model's domain.
    Invalid(String),
}

impl Cell {
    pub fn x_star(&self) -> Option<f64> {
        match self {
            Cell::Threshold(x) => Some(*x),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Cell::Threshold(_) => Regime::Interior.as_str(),
            Cell::NoFiniteThreshold => Regime::NoFiniteThreshold.as_str(),
            Cell::Invalid(_) => "invalid",
        }
    }

    fn from_solution(sol: Result<ThresholdSolution>) -> Self {
        match sol {
            Ok(sol) => match sol.x_star {
                Some(x) => Cell::Threshold(x),
                None => Cell::NoFiniteThreshold,
            },
            Err(e) => Cell::Invalid(e.to_string()),
        }
    }
}

/// Closed-form threshold for one parameter point.
pub fn solve_point(env: &HouseholdEnv, d: &RatioDynamics) -> Result<ThresholdSolution> {
    let roots = characteristic_roots(d, env.r)?;
    solve_with_roots(env, d, &roots)
}

fn solve_with_roots(env: &HouseholdEnv, d: &RatioDynamics, roots: &CharacteristicRoots) -> Result<ThresholdSolution> {
    let bv = buy_value_coefficients(env, d)?;
    solve_threshold_with_flow(&bv, roots, env.r, env.rent_flow)
}

pub const DEFAULT_SENSITIVITY_STEP: f64 = 1e-3;

/// Central difference of `x_star` in `param`, with step `rel_step` times
/// the base value.
pub fn threshold_sensitivity(
    env: &HouseholdEnv,
    d: &RatioDynamics,
    param: Param,
    rel_step: f64,
) -> Result<f64> {
    if !(rel_step > 0.0 && rel_step.is_finite()) {
        return Err(Error::param("step", format!("must be > 0, got {rel_step}")));
    }
    let base = param.get(env, d);
    let h = match base {
        0.0 => rel_step,
        b => rel_step * b.abs(),
    };
    let at = |value: f64| -> Result<f64> {
        let (mut e, mut dd) = (env.clone(), *d);
        param.set(&mut e, &mut dd, value);
        let sol = solve_point(&e, &dd)?;
        sol.x_star.ok_or(Error::SensitivityUndefined {
            param: param.name().to_string(),
            value,
            regime: sol.regime,
        })
    };
    at(base)?;
    let up = at(base + h)?;
    let down = at(base - h)?;
    Ok((up - down) / (2.0 * h))
}

/// Named set of parameter overrides applied to one sweep series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSpec {
    pub label: String,
    pub overrides: Vec<(Param, f64)>,
}

impl SeriesSpec {
    pub fn single(param: Param, value: f64) -> Self {
        Self {
            label: format!("{}={}", param.name(), value),
            overrides: vec![(param, value)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: Param,
    pub axis_values: Vec<f64>,
    pub series: Vec<Series>,
}

impl SweepResult {
    /// Every series is interior everywhere and strictly decreasing.
    pub fn all_strictly_decreasing(&self) -> bool {
        self.series.iter().all(|s| strictly_decreasing(&s.cells))
    }
}

pub fn sweep_threshold(
    env: &HouseholdEnv,
    d: &RatioDynamics,
    axis: Param,
    grid: &[f64],
    series: &[SeriesSpec],
) -> Result<SweepResult> {
    check_grid("grid", grid)?;
    let base_series = [SeriesSpec {
        label: "base".to_string(),
        overrides: Vec::new(),
    }];
    let specs = if series.is_empty() { &base_series[..] } else { series };
    let series = specs
        .iter()
        .map(|spec| {
            let (mut e, mut dd) = (env.clone(), *d);
            for &(p, v) in &spec.overrides {
                p.set(&mut e, &mut dd, v);
            }
            let shared_roots = (!axis.moves_roots()).then(|| characteristic_roots(&dd, e.r));
            let cells = grid
                .par_iter()
                .map(|&v| {
                    let (mut ce, mut cd) = (e.clone(), dd);
                    axis.set(&mut ce, &mut cd, v);
                    let sol = match &shared_roots {
                        Some(Ok(roots)) => solve_with_roots(&ce, &cd, roots),
                        Some(Err(err)) => Err(err.clone()),
                        None => solve_point(&ce, &cd),
                    };
                    Cell::from_solution(sol)
                })
                .collect();
            Series {
                label: spec.label.clone(),
                cells,
            }
        })
        .collect();
    Ok(SweepResult {
        axis,
        axis_values: grid.to_vec(),
        series,
    })
}

/// Annotated point on the threshold map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub name: String,
    pub lambda: f64,
    pub sigma: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdMap {
    pub lambda_grid: Vec<f64>,
    pub sigma_grid: Vec<f64>,
    /// Row per λ, column per σ.
    pub cells: Vec<Vec<Cell>>,
    pub markers: Vec<Marker>,
}

impl ThresholdMap {
    /// Strictly decreasing along every row (in σ) and every column (in λ).
    pub fn monotone_both_axes(&self) -> bool {
        let rows_ok = self.cells.iter().all(|row| strictly_decreasing(row));
        let cols_ok = (0..self.sigma_grid.len()).all(|j| {
            let col: Vec<Cell> = self.cells.iter().map(|row| row[j].clone()).collect();
            strictly_decreasing(&col)
        });
        rows_ok && cols_ok
    }
}

pub fn threshold_map(
    env: &HouseholdEnv,
    d_base: &RatioDynamics,
    lambda_grid: &[f64],
    sigma_grid: &[f64],
    markers: &[Marker],
) -> Result<ThresholdMap> {
    check_grid("lambda_grid", lambda_grid)?;
    check_grid("sigma_grid", sigma_grid)?;
    let column_roots: Vec<Result<CharacteristicRoots>> = sigma_grid
        .iter()
        .map(|&s| characteristic_roots(&RatioDynamics::new(d_base.mu_x, s), env.r))
        .collect();
    let cells = lambda_grid
        .par_iter()
        .map(|&lambda| {
            let e = HouseholdEnv {
                lambda,
                ..env.clone()
            };
            sigma_grid
                .iter()
                .zip(&column_roots)
                .map(|(&sigma, roots)| {
                    let d = RatioDynamics::new(d_base.mu_x, sigma);
                    let sol = roots.clone().and_then(|roots| solve_with_roots(&e, &d, &roots));
                    Cell::from_solution(sol)
                })
                .collect()
        })
        .collect();
    Ok(ThresholdMap {
        lambda_grid: lambda_grid.to_vec(),
        sigma_grid: sigma_grid.to_vec(),
        cells,
        markers: markers.to_vec(),
    })
}

/// `D(x) = G(x) + 1/r`: buying now minus renting forever.
pub fn linearized_difference(bv: &BuyValue, r: f64, x_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if !(r > 0.0) {
        return Err(Error::param("r", format!("must be > 0, got {r}")));
    }
    if let Some(&x) = x_grid.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::param("x_grid", format!("ratios must be > 0, got {x}")));
    }
    Ok(x_grid.iter().map(|&x| (x, bv.eval(x) + 1.0 / r)).collect())
}

/// `count` evenly spaced points from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        n => (0..n)
            .map(|i| {
                if i == n - 1 {
                    stop
                } else {
                    start + (stop - start) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

pub fn default_lambda_grid() -> Vec<f64> {
    linspace(0.05, 0.30, 26)
}

pub fn default_sigma_grid() -> Vec<f64> {
    linspace(0.10, 0.35, 26)
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::param(name, "must be nonempty"));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::param(name, "values must be finite"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param(name, "must be strictly increasing"));
    }
    Ok(())
}

fn strictly_decreasing(cells: &[Cell]) -> bool {
    let xs: Option<Vec<f64>> = cells.iter().map(Cell::x_star).collect();
    xs.is_some_and(|xs| xs.windows(2).all(|w| w[1] < w[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::free_boundary::PayoffMode;

    fn atlanta() -> (HouseholdEnv, RatioDynamics) {
        (HouseholdEnv::default(), RatioDynamics::new(0.01, 0.15))
    }

    fn x_star(env: &HouseholdEnv, d: &RatioDynamics) -> f64 {
        solve_point(env, d).unwrap().x_star.unwrap()
    }

    #[test]
    fn bracketing_values() {
        let (env, d) = atlanta();
        assert!((x_star(&env, &RatioDynamics::new(0.01, 0.25)) - 9.653).abs() < 1e-3);
        let high_lambda = HouseholdEnv {
            lambda: 0.2,
            ..env.clone()
        };
        assert!((x_star(&high_lambda, &d) - 11.208).abs() < 1e-3);
        let high_r = HouseholdEnv {
            r: 0.06,
            ..env.clone()
        };
        let roots = characteristic_roots(&d, 0.06).unwrap();
        assert!((roots.gamma_neg - (-2.25451)).abs() < 1e-5, "{}", roots.gamma_neg);
        assert!((x_star(&high_r, &d) - 12.2825).abs() < 1e-3);
    }

    #[test]
    fn signs_at_atlanta() {
        let (env, d) = atlanta();
        for p in [Param::SigmaX, Param::Lambda, Param::R] {
            let s = threshold_sensitivity(&env, &d, p, DEFAULT_SENSITIVITY_STEP).unwrap();
            assert!(s < 0.0, "{p}: {s}");
        }
    }

    #[test]
    fn sensitivity_matches_wide_difference() {
        // The central difference should sit between one-sided secants.
        let (env, d) = atlanta();
        let s = threshold_sensitivity(&env, &d, Param::SigmaX, 1e-3).unwrap();
        let base = x_star(&env, &d);
        let secant = (x_star(&env, &RatioDynamics::new(0.01, 0.1515)) - base) / 0.0015;
        assert!((s - secant).abs() < 0.02 * s.abs(), "{s} vs {secant}");
    }

    #[test]
    fn sensitivity_undefined_at_degenerate_point() {
        let env = HouseholdEnv {
            payoff_mode: PayoffMode::PaperLiteral,
            ..HouseholdEnv::default()
        };
        let d = RatioDynamics::new(0.01, 0.15);
        assert!(matches!(
            threshold_sensitivity(&env, &d, Param::Lambda, 1e-3),
            Err(Error::SensitivityUndefined { .. })
        ));
    }

    #[test]
    fn figure_one_shape() {
        let (env, d) = atlanta();
        let grid = linspace(0.05, 0.30, 6);
        let series = [
            SeriesSpec::single(Param::SigmaX, 0.15),
            SeriesSpec::single(Param::SigmaX, 0.25),
        ];
        let sweep = sweep_threshold(&env, &d, Param::Lambda, &grid, &series).unwrap();
        assert!(sweep.all_strictly_decreasing());
        for (lo, hi) in sweep.series[1].cells.iter().zip(&sweep.series[0].cells) {
            assert!(lo.x_star().unwrap() < hi.x_star().unwrap());
        }
    }

    #[test]
    fn sweep_cells_match_independent_solves() {
        let (env, d) = atlanta();
        for axis in [Param::Lambda, Param::SigmaX, Param::R, Param::K] {
            let base = axis.get(&env, &d);
            let grid = linspace(0.8 * base, 1.2 * base, 5);
            let sweep = sweep_threshold(&env, &d, axis, &grid, &[]).unwrap();
            assert_eq!(sweep.series[0].label, "base");
            for (&v, cell) in grid.iter().zip(&sweep.series[0].cells) {
                let (mut e, mut dd) = (env.clone(), d);
                axis.set(&mut e, &mut dd, v);
                assert_eq!(cell.x_star(), solve_point(&e, &dd).unwrap().x_star);
            }
        }
    }

    #[test]
    fn single_cell_sweep() {
        let (env, d) = atlanta();
        let sweep = sweep_threshold(&env, &d, Param::Lambda, &[0.1], &[]).unwrap();
        assert_eq!(sweep.series[0].cells[0].x_star(), solve_point(&env, &d).unwrap().x_star);
    }

    #[test]
    fn degenerate_cells_are_marked() {
        let env = HouseholdEnv {
            payoff_mode: PayoffMode::PaperLiteral,
            ..HouseholdEnv::default()
        };
        let d = RatioDynamics::new(0.01, 0.15);
        let sweep = sweep_threshold(&env, &d, Param::Lambda, &[0.0, 0.5, 2.0], &[]).unwrap();
        // lambda = 0 drops the resale term, so m = 0: still no finite boundary.
        assert!(sweep.series[0].cells.iter().all(|c| *c == Cell::NoFiniteThreshold));
        let sweep = sweep_threshold(&HouseholdEnv::default(), &d, Param::SigmaX, &[0.0, 0.15], &[]).unwrap();
        assert!(matches!(sweep.series[0].cells[0], Cell::Invalid(_)));
        assert!(sweep.series[0].cells[1].x_star().is_some());
    }

    #[test]
    fn grid_validation() {
        let (env, d) = atlanta();
        assert!(sweep_threshold(&env, &d, Param::Lambda, &[], &[]).is_err());
        assert!(sweep_threshold(&env, &d, Param::Lambda, &[0.2, 0.1], &[]).is_err());
        assert!(threshold_map(&env, &d, &[0.1], &[], &[]).is_err());
    }

    #[test]
    fn map_monotone_over_default_ranges() {
        let (env, d) = atlanta();
        let map = threshold_map(
            &env,
            &d,
            &linspace(0.05, 0.30, 21),
            &linspace(0.10, 0.35, 21),
            &[],
        )
        .unwrap();
        assert_eq!(map.cells.len() * map.cells[0].len(), 441);
        assert!(map.monotone_both_axes());
        for (i, &lambda) in map.lambda_grid.iter().enumerate().step_by(5) {
            for (j, &sigma) in map.sigma_grid.iter().enumerate().step_by(5) {
                let e = HouseholdEnv {
                    lambda,
                    ..env.clone()
                };
                let expect = solve_point(&e, &RatioDynamics::new(d.mu_x, sigma)).unwrap().x_star;
                assert_eq!(map.cells[i][j].x_star(), expect);
            }
        }
    }

    #[test]
    fn one_by_one_map() {
        let (env, d) = atlanta();
        let markers = vec![Marker {
            name: "atlanta".into(),
            lambda: 0.1,
            sigma: 0.15,
            note: "paper".into(),
        }];
        let map = threshold_map(&env, &d, &[0.1], &[0.15], &markers).unwrap();
        assert_eq!(map.cells[0][0].x_star(), solve_point(&env, &d).unwrap().x_star);
        assert_eq!(map.markers, markers);
    }

    #[test]
    fn linearized_difference_roots() {
        let (env, d) = atlanta();
        let bv = buy_value_coefficients(&env, &d).unwrap();
        let sol = solve_point(&env, &d).unwrap();
        let (x_star, a_coef) = sol.interior().unwrap();
        let x0 = (env.h + 1.0) / ((env.r + env.lambda) * -bv.m);
        assert!((x0 - 19.608).abs() < 1e-3);
        let pts = linearized_difference(&bv, env.r, &[x0, x_star]).unwrap();
        assert!(pts[0].1.abs() < 1e-12);
        let premium = a_coef * x_star.powf(sol.gamma);
        assert!((pts[1].1 - premium).abs() < 1e-9 && premium > 0.0);
        // Single sign change along a fine grid, at x0.
        let grid = linspace(1.0, 40.0, 400);
        let d_vals = linearized_difference(&bv, env.r, &grid).unwrap();
        let changes = d_vals.windows(2).filter(|w| w[0].1.signum() != w[1].1.signum()).count();
        assert_eq!(changes, 1);
        assert!(x_star < x0);
    }

    #[test]
    fn flat_payoff_difference() {
        let bv = BuyValue { a: -3.0, m: 0.0 };
        let pts = linearized_difference(&bv, 0.05, &[1.0, 10.0, 100.0]).unwrap();
        assert!(pts.iter().all(|&(_, v)| v == 17.0));
        assert!(linearized_difference(&bv, 0.05, &[0.0]).is_err());
    }

    #[test]
    fn atlanta_above_columbus() {
        let (env, atl) = atlanta();
        let col = RatioDynamics::new(0.005, 0.25);
        let col_env = HouseholdEnv {
            lambda: 0.2,
            ..env.clone()
        };
        assert!(x_star(&env, &atl) > x_star(&col_env, &col));
    }

    #[test]
    fn param_names_round_trip() {
        for p in Param::ALL {
            assert_eq!(p.name().parse::<Param>().unwrap(), p);
        }
        assert_eq!("sigma".parse::<Param>().unwrap(), Param::SigmaX);
        assert!("frobnicate".parse::<Param>().is_err());
    }

    #[test]
    fn linspace_endpoints() {
        assert_eq!(linspace(0.05, 0.30, 21).len(), 21);
        assert_eq!(*linspace(0.05, 0.30, 21).last().unwrap(), 0.30);
        assert_eq!(linspace(2.0, 5.0, 1), vec![2.0]);
    }
}
