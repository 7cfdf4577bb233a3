use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::config::{parse_scenario_file, Market, Scenario, ScenarioFile, Syntax};
use super::presets::{all_presets, builtin_preset};
use super::table::{Format, Table, Value};
use crate::comparative_statics::{
    default_lambda_grid, default_sigma_grid, linearized_difference, linspace, sweep_threshold,
    threshold_map, threshold_sensitivity, Cell, Param, SeriesSpec, DEFAULT_SENSITIVITY_STEP,
};
use crate::error::Error;
use crate::free_boundary::{
    break_even_ratio, buy_value_coefficients, hjb_residual, solve_threshold_with_flow,
    value_function_at, verify_boundary_conditions, BuyValue, ThresholdSolution,
};
use crate::model_core::{characteristic_roots, RatioDynamics};
use crate::monte_carlo::{evaluate_threshold_policy, grid_search_threshold};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_DEGENERATE: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "rentbuy",
    version,
    about = "Rent-versus-buy thresholds on the price-to-rent ratio",
    after_help = "Grids are written start:stop:count, endpoints included.\n\
                  Exit codes: 0 ok, 2 usage, 3 validation, 4 degenerate regime, 5 I/O."
)]
struct Cli {
    /// Scenario file (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Market preset: atlanta, columbus, fayetteville, san_diego.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// RNG seed for simulations [default: 42].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the table here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form threshold, boundary residuals and sensitivities.
    Threshold,
    /// Value function and buy-minus-rent difference on a ratio grid.
    Value {
        #[arg(long, default_value = "1:40:40", value_parser = parse_grid)]
        x: Grid,
    },
    /// Threshold along one parameter, one series per override set.
    Sweep {
        #[arg(long, default_value = "lambda", value_parser = parse_param)]
        axis: Param,
        /// Defaults to 0.05:0.30:26 for lambda and 0.10:0.35:26 for sigma_x.
        #[arg(long, value_parser = parse_grid)]
        grid: Option<Grid>,
        /// Overrides such as `sigma_x=0.25` or `sigma_x=0.25;mu_x=0.02`.
        #[arg(long = "series")]
        series: Vec<String>,
    },
    /// Threshold over a lambda by sigma_x grid.
    Map {
        #[arg(long, value_parser = parse_grid)]
        lambda: Option<Grid>,
        #[arg(long, value_parser = parse_grid)]
        sigma: Option<Grid>,
    },
    /// Linearized differences of two markets.
    ///
    /// A preset name on the right keeps the left household, with the
    /// preset's hazard; a file path is loaded as its own scenario.
    Compare {
        #[arg(long)]
        right: String,
        #[arg(long, default_value = "1:40:40", value_parser = parse_grid)]
        x: Grid,
    },
    /// Monte Carlo value of buying at the first visit below a threshold.
    Simulate {
        /// Defaults to the closed-form threshold.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value_t = 20.0)]
        x0: f64,
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Closed-form threshold against a simulated grid search.
    Verify {
        #[arg(long, default_value = "8:18:21", value_parser = parse_grid)]
        grid: Grid,
        #[arg(long, default_value_t = 20.0)]
        x0: f64,
        #[arg(long)]
        paths: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Grid(Vec<f64>);

fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [start, stop, count] = parts[..] else {
        return Err(format!("expected start:stop:count, got `{s}`"));
    };
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("`{t}` is not a finite number"))
    };
    let count: usize = count
        .trim()
        .parse()
        .map_err(|_| format!("count `{count}` is not a positive integer"))?;
    if count == 0 {
        return Err("count must be >= 1".into());
    }
    Ok(Grid(linspace(num(start)?, num(stop)?, count)))
}

fn parse_param(s: &str) -> Result<Param, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug)]
struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn degenerate(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DEGENERATE,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::UnsupportedRegime(_) | Error::SensitivityUndefined { .. } => EXIT_DEGENERATE,
            _ => EXIT_VALIDATION,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Run the CLI on `argv` (program name first) against the process streams.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let stderr = io::stderr();
    run_with_io(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with_io<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(CliError {
                code: EXIT_USAGE,
                message: format!("cannot start {n} threads: {e}"),
            }),
        },
        None => execute(&cli),
    };
    match result.and_then(|(table, scenario)| emit(&table, &scenario, out)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

fn emit(table: &Table, scenario: &Scenario, out: &mut dyn Write) -> CliResult<()> {
    let text = table.render(scenario.format);
    match &scenario.out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display()))),
        None => out
            .write_all(text.as_bytes())
            .and_then(|()| out.flush())
            .map_err(|e| CliError::io(format!("cannot write output: {e}"))),
    }
}

fn read_file(path: &Path) -> CliResult<ScenarioFile> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_scenario_file(&text, Syntax::from_path(path))?)
}

fn load(cli: &Cli) -> CliResult<Scenario> {
    let mut file = match &cli.config {
        Some(path) => read_file(path)?,
        None => ScenarioFile::default(),
    };
    if let Some(p) = &cli.preset {
        file.market.preset = Some(p.clone());
    }
    if let Some(seed) = cli.seed {
        file.sim.seed = Some(seed);
    }
    if let Some(format) = cli.format {
        file.output.format = Some(format);
    }
    if let Some(out) = &cli.out {
        file.output.path = Some(out.clone());
    }
    Ok(file.resolve()?)
}

fn execute(cli: &Cli) -> CliResult<(Table, Scenario)> {
    let scenario = load(cli)?;
    let table = match &cli.command {
        Command::Threshold => threshold(&scenario)?,
        Command::Value { x } => value(&scenario, &x.0)?,
        Command::Sweep { axis, grid, series } => sweep(&scenario, *axis, grid.as_ref(), series)?,
        Command::Map { lambda, sigma } => map(&scenario, lambda.as_ref(), sigma.as_ref())?,
        Command::Compare { right, x } => compare(&scenario, right, &x.0)?,
        Command::Simulate {
            threshold,
            x0,
            paths,
        } => simulate(&scenario, *threshold, *x0, *paths)?,
        Command::Verify { grid, x0, paths } => verify(&scenario, &grid.0, *x0, *paths)?,
    };
    Ok((table, scenario))
}

fn describe(t: &mut Table, command: &str, s: &Scenario) {
    t.meta("command", command);
    t.meta("scenario_sha256", s.hash());
    t.meta("seed", s.sim.seed as usize);
    t.meta("preset", s.preset.clone().unwrap_or_else(|| "custom".into()));
    t.meta(
        "provenance",
        s.provenance().map_or("custom", |p| p.as_str()),
    );
    t.meta("illustrative", s.is_illustrative());
}

struct Solved {
    d: RatioDynamics,
    bv: BuyValue,
    sol: ThresholdSolution,
}

fn solve(s: &Scenario) -> CliResult<Solved> {
    let d = s.ratio_dynamics()?;
    let roots = characteristic_roots(&d, s.household.r)?;
    let bv = buy_value_coefficients(&s.household, &d)?;
    let sol = solve_threshold_with_flow(&bv, &roots, s.household.r, s.household.rent_flow)?;
    Ok(Solved { d, bv, sol })
}

fn require_interior(solved: &Solved) -> CliResult<(f64, f64)> {
    solved.sol.interior().map_err(|_| {
        CliError::degenerate(format!(
            "regime={}: {}",
            solved.sol.regime,
            solved.sol.diagnostic.as_deref().unwrap_or("no interior threshold")
        ))
    })
}

fn threshold(s: &Scenario) -> CliResult<Table> {
    let solved = solve(s)?;
    let (x_star, a_coef) = require_interior(&solved)?;
    let Solved { d, bv, sol } = &solved;
    let (vm, sp) = verify_boundary_conditions(sol, bv)?;
    let grid: Vec<f64> = [1.5, 2.0, 4.0, 8.0].iter().map(|f| f * x_star).collect();
    let hjb = hjb_residual(sol, bv, s.household.r, d, &grid)?;

    let mut t = Table::new(&["quantity", "value"]);
    describe(&mut t, "threshold", s);
    let mut row = |k: &str, v: Value| t.push(vec![k.into(), v]);
    row("x_star", x_star.into());
    row("gamma", sol.gamma.into());
    row("regime", sol.regime.as_str().into());
    row("a_coef", a_coef.into());
    row("payoff_intercept", bv.a.into());
    row("payoff_slope", bv.m.into());
    row("break_even", break_even_ratio(bv, sol.rent_perpetuity).into());
    row("option_multiplier", (sol.gamma / (sol.gamma - 1.0)).into());
    row("mu_x", d.mu_x.into());
    row("sigma_x", d.sigma_x.into());
    row("value_matching_residual", vm.into());
    row("smooth_pasting_residual", sp.into());
    row("hjb_max_rel_residual", hjb.max_rel.into());
    let mut claims_hold = true;
    for p in [Param::SigmaX, Param::Lambda, Param::R] {
        let sens = threshold_sensitivity(&s.household, d, p, DEFAULT_SENSITIVITY_STEP).ok();
        claims_hold &= sens.is_some_and(|v| v < 0.0);
        row(&format!("dx_star_d{}", p.name()), sens.into());
    }
    // Volatility, mobility and discounting should each lower the threshold.
    row("negative_sensitivities_hold", claims_hold.into());
    Ok(t)
}

fn value(s: &Scenario, xs: &[f64]) -> CliResult<Table> {
    let solved = solve(s)?;
    let (x_star, _) = require_interior(&solved)?;
    let d_vals = linearized_difference(&solved.bv, s.household.r, xs)?;
    let mut t = Table::new(&["x", "v", "g", "d", "region"]);
    describe(&mut t, "value", s);
    t.meta("x_star", x_star);
    for (x, diff) in d_vals {
        let v = value_function_at(&solved.sol, &solved.bv, x)?;
        let region = if x <= x_star { "buy" } else { "rent" };
        t.push(vec![
            x.into(),
            v.into(),
            solved.bv.eval(x).into(),
            diff.into(),
            region.into(),
        ]);
    }
    Ok(t)
}

fn parse_series(text: &str) -> CliResult<SeriesSpec> {
    let overrides = text
        .split(';')
        .map(|part| {
            let (k, v) = part.split_once('=').ok_or_else(|| CliError {
                code: EXIT_USAGE,
                message: format!("series term `{part}` is not param=value"),
            })?;
            let p: Param = k.trim().parse()?;
            let v: f64 = v.trim().parse().map_err(|_| CliError {
                code: EXIT_USAGE,
                message: format!("series value `{v}` is not a number"),
            })?;
            Ok((p, v))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(SeriesSpec {
        label: text.to_string(),
        overrides,
    })
}

fn cell_row(t: &mut Table, head: Vec<Value>, cell: &Cell) {
    let mut row = head;
    row.push(cell.x_star().into());
    row.push(cell.label().into());
    t.push(row);
}

fn sweep(s: &Scenario, axis: Param, grid: Option<&Grid>, series: &[String]) -> CliResult<Table> {
    let d = s.ratio_dynamics()?;
    let grid = match (grid, axis) {
        (Some(g), _) => g.0.clone(),
        (None, Param::Lambda) => default_lambda_grid(),
        (None, Param::SigmaX) => default_sigma_grid(),
        (None, other) => {
            return Err(CliError {
                code: EXIT_USAGE,
                message: format!("--grid is required for axis {other}"),
            })
        }
    };
    let specs = series
        .iter()
        .map(|t| parse_series(t))
        .collect::<CliResult<Vec<_>>>()?;
    let result = sweep_threshold(&s.household, &d, axis, &grid, &specs)?;
    let mut t = Table::new(&["axis", "label", "x_star", "regime"]);
    describe(&mut t, "sweep", s);
    t.meta("axis_name", axis.name());
    t.meta("strictly_decreasing", result.all_strictly_decreasing());
    for series in &result.series {
        for (&v, cell) in result.axis_values.iter().zip(&series.cells) {
            cell_row(&mut t, vec![v.into(), series.label.clone().into()], cell);
        }
    }
    Ok(t)
}

fn map(s: &Scenario, lambda: Option<&Grid>, sigma: Option<&Grid>) -> CliResult<Table> {
    let d = s.ratio_dynamics()?;
    let lambda = lambda.map_or_else(default_lambda_grid, |g| g.0.clone());
    let sigma = sigma.map_or_else(default_sigma_grid, |g| g.0.clone());
    let markers: Vec<_> = all_presets().iter().map(|p| p.marker()).collect();
    let result = threshold_map(&s.household, &d, &lambda, &sigma, &markers)?;
    let mut t = Table::new(&["lambda", "sigma", "x_star", "regime"]);
    describe(&mut t, "map", s);
    t.meta("mu_x", d.mu_x);
    t.meta("monotone_both_axes", result.monotone_both_axes());
    for m in &result.markers {
        t.meta(
            "marker",
            format!(
                "{};lambda={};sigma={};provenance={}",
                m.name,
                super::table::fmt_g9(m.lambda),
                super::table::fmt_g9(m.sigma),
                m.note
            ),
        );
    }
    for (&l, row) in result.lambda_grid.iter().zip(&result.cells) {
        for (&sg, cell) in result.sigma_grid.iter().zip(row) {
            cell_row(&mut t, vec![l.into(), sg.into()], cell);
        }
    }
    Ok(t)
}

fn right_scenario(left: &Scenario, spec: &str) -> CliResult<Scenario> {
    let looks_like_file = spec.ends_with(".toml") || spec.ends_with(".json") || Path::new(spec).exists();
    if looks_like_file {
        return Ok(read_file(Path::new(spec))?.resolve()?);
    }
    let preset = builtin_preset(spec)?;
    let mut right = left.clone();
    right.preset = Some(spec.to_string());
    right.market = Market::Ratio(preset.ratio);
    right.household.lambda = preset.lambda;
    Ok(right)
}

fn compare(left: &Scenario, right_spec: &str, xs: &[f64]) -> CliResult<Table> {
    let right = right_scenario(left, right_spec)?;
    let (l, r) = (solve(left)?, solve(&right)?);
    let dl = linearized_difference(&l.bv, left.household.r, xs)?;
    let dr = linearized_difference(&r.bv, right.household.r, xs)?;
    let mut t = Table::new(&["x", "d_left", "d_right"]);
    describe(&mut t, "compare", left);
    t.meta("right_preset", right.preset.clone().unwrap_or_else(|| "custom".into()));
    t.meta("right_scenario_sha256", right.hash());
    t.meta("right_illustrative", right.is_illustrative());
    for (side, solved) in [("left", &l), ("right", &r)] {
        t.meta(format!("x_star_{side}"), solved.sol.x_star);
        t.meta(format!("regime_{side}"), solved.sol.regime.as_str());
    }
    for ((x, a), (_, b)) in dl.into_iter().zip(dr) {
        t.push(vec![x.into(), a.into(), b.into()]);
    }
    Ok(t)
}

fn sim_config(s: &Scenario, paths: Option<usize>) -> CliResult<crate::monte_carlo::PathConfig> {
    let mut cfg = s.sim.clone();
    if let Some(n) = paths {
        cfg.n_paths = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(s: &Scenario, threshold: Option<f64>, x0: f64, paths: Option<usize>) -> CliResult<Table> {
    let x_thr = match threshold {
        Some(x) => x,
        None => {
            let solved = solve(s)?;
            require_interior(&solved)?.0
        }
    };
    let cfg = sim_config(s, paths)?;
    let est = evaluate_threshold_policy(&s.dynamics(), &s.household, x0, x_thr, &cfg)?;
    let mut t = Table::new(&["quantity", "value"]);
    describe(&mut t, "simulate", s);
    t.meta("dt", cfg.dt);
    t.meta("horizon", cfg.effective_horizon());
    let mut row = |k: &str, v: Value| t.push(vec![k.into(), v]);
    row("x0", x0.into());
    row("x_thr", est.x_thr.into());
    row("mean", est.mean.into());
    row("std_error", est.std_error.into());
    row("n_paths", est.n_paths.into());
    row("fraction_stopped", est.fraction_stopped.into());
    row("unresolved_fraction", est.unresolved_fraction.into());
    row("horizon_warning", est.horizon_warning.into());
    Ok(t)
}

fn verify(s: &Scenario, grid: &[f64], x0: f64, paths: Option<usize>) -> CliResult<Table> {
    let solved = solve(s)?;
    let (x_star, _) = require_interior(&solved)?;
    let cfg = sim_config(s, paths)?;
    let search = grid_search_threshold(&s.dynamics(), &s.household, x0, grid, &cfg)?;
    let gap = (search.best_threshold - x_star) / x_star;
    let mut t = Table::new(&[
        "x_thr",
        "mean",
        "std_error",
        "paired_se_vs_best",
        "fraction_stopped",
        "unresolved_fraction",
    ]);
    describe(&mut t, "verify", s);
    t.meta("n_paths", cfg.n_paths);
    t.meta("dt", cfg.dt);
    t.meta("horizon", cfg.effective_horizon());
    t.meta("x0", x0);
    t.meta("x_star_closed_form", x_star);
    t.meta("argmax", search.best_threshold);
    t.meta("relative_gap", gap);
    t.meta("within_10pct", gap.abs() <= 0.10);
    t.meta("flat_within_noise", search.flat_within_noise);
    t.meta("unimodal_within_noise", search.unimodal_within_noise);
    t.meta(
        "horizon_warning",
        search.curve.iter().any(|c| c.estimate.horizon_warning),
    );
    for c in &search.curve {
        let e = &c.estimate;
        t.push(vec![
            e.x_thr.into(),
            e.mean.into(),
            e.std_error.into(),
            c.paired_se_vs_best.into(),
            e.fraction_stopped.into(),
            e.unresolved_fraction.into(),
        ]);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let argv = std::iter::once("rentbuy").chain(args.iter().copied());
        let code = run_with_io(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    fn quantity(csv: &str, key: &str) -> String {
        csv.lines()
            .find_map(|l| l.strip_prefix(&format!("{key},")))
            .unwrap_or_else(|| panic!("{key} missing in\n{csv}"))
            .to_string()
    }

    #[test]
    fn threshold_atlanta() {
        let (code, out, _) = run_capture(&["threshold", "--preset", "atlanta"]);
        assert_eq!(code, 0);
        let x: f64 = quantity(&out, "x_star").parse().unwrap();
        assert!((x - 13.186).abs() < 1e-3);
        assert_eq!(quantity(&out, "gamma"), "-2.05336143");
        assert_eq!(quantity(&out, "regime"), "interior");
        assert_eq!(quantity(&out, "negative_sensitivities_hold"), "true");
        assert!(out.contains("# seed=42\n"));
    }

    #[test]
    fn paper_literal_threshold_is_degenerate() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("lit.toml");
        fs::write(&cfg, "[market]\npreset = \"atlanta\"\n[household]\npayoff_mode = \"paper_literal\"\n").unwrap();
        let (code, out, err) = run_capture(&["threshold", "--config", cfg.to_str().unwrap()]);
        assert_eq!(code, EXIT_DEGENERATE);
        assert!(out.is_empty());
        assert!(err.contains("no_finite_threshold"), "{err}");
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_capture(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["threshold", "--bogus"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["map", "--lambda", "0.1:0.2"]).0, EXIT_USAGE);
        let (code, out, _) = run_capture(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("threshold"));
    }

    #[test]
    fn validation_errors_exit_3() {
        assert_eq!(run_capture(&["threshold"]).0, EXIT_VALIDATION);
        assert_eq!(run_capture(&["threshold", "--preset", "boston"]).0, EXIT_VALIDATION);
        assert_eq!(
            run_capture(&["map", "--preset", "atlanta", "--lambda", "0.3:0.1:5"]).0,
            EXIT_VALIDATION
        );
    }

    #[test]
    fn io_errors_exit_5() {
        let (code, _, _) = run_capture(&["threshold", "--config", "/nonexistent/cfg.toml"]);
        assert_eq!(code, EXIT_IO);
        let (code, _, _) = run_capture(&["threshold", "--preset", "atlanta", "--out", "/nonexistent/dir/out.csv"]);
        assert_eq!(code, EXIT_IO);
    }

    #[test]
    fn compare_embeds_both_thresholds() {
        let (code, out, _) = run_capture(&["compare", "--preset", "atlanta", "--right", "columbus"]);
        assert_eq!(code, 0);
        assert!(out.contains("# x_star_left=13.186"), "{out}");
        assert!(out.contains("# x_star_right=7.9535"), "{out}");
        assert!(out.contains("\nx,d_left,d_right\n"));
    }

    #[test]
    fn map_header_and_markers() {
        let (code, out, _) = run_capture(&[
            "map", "--preset", "atlanta", "--lambda", "0.05:0.30:6", "--sigma", "0.10:0.35:6",
        ]);
        assert_eq!(code, 0);
        assert!(out.contains("\nlambda,sigma,x_star,regime\n"));
        assert!(out.contains("# marker=fayetteville;lambda=0.25;sigma=0.3;provenance=illustrative"));
        assert!(out.contains("# monotone_both_axes=true"));
        assert_eq!(out.lines().filter(|l| !l.starts_with('#')).count(), 37);
    }

    #[test]
    fn sweep_with_series() {
        let (code, out, err) = run_capture(&[
            "sweep", "--preset", "atlanta", "--axis", "lambda", "--grid", "0.05:0.30:6",
            "--series", "sigma_x=0.15", "--series", "sigma_x=0.25",
        ]);
        assert_eq!(code, 0, "{err}");
        assert!(out.contains("\naxis,label,x_star,regime\n"));
        assert!(out.contains("# strictly_decreasing=true"));
        assert!(out.contains("0.05,sigma_x=0.25,"));
    }

    #[test]
    fn illustrative_flag_emitted() {
        let (_, out, _) = run_capture(&["threshold", "--preset", "san_diego"]);
        assert!(out.contains("# illustrative=true\n"));
        assert!(out.contains("# provenance=illustrative\n"));
    }

    #[test]
    fn value_regions() {
        let (code, out, _) = run_capture(&["value", "--preset", "atlanta", "--x", "10:20:3"]);
        assert_eq!(code, 0);
        let rows: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[0], "x,v,g,d,region");
        assert!(rows[1].ends_with(",buy") && rows[3].ends_with(",rent"));
    }

    #[test]
    fn json_format() {
        let (code, out, _) = run_capture(&["threshold", "--preset", "atlanta", "--format", "json"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["columns"][0], "quantity");
    }

    #[test]
    fn simulate_small() {
        let (code, out, err) = run_capture(&[
            "simulate", "--preset", "atlanta", "--paths", "200", "--x0", "12",
        ]);
        assert_eq!(code, 0, "{err}");
        // Starting below the threshold buys at once.
        assert_eq!(quantity(&out, "fraction_stopped"), "1");
    }

    #[test]
    fn grid_syntax() {
        assert_eq!(parse_grid("0:1:3").unwrap(), Grid(vec![0.0, 0.5, 1.0]));
        assert_eq!(parse_grid("2:2:1").unwrap(), Grid(vec![2.0]));
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("a:1:2").is_err());
        assert!(parse_grid("0:1").is_err());
    }
}
