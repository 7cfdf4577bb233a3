use rentbuy::comparative_statics::solve_point;
use rentbuy::free_boundary::HouseholdEnv;
use rentbuy::model_core::RatioDynamics;
use rentbuy::monte_carlo::{evaluate_threshold_policy, Dynamics, PathConfig};

// Log steps are exact, so halving dt only moves the first-hit monitoring.
#[test]
fn policy_value_stable_under_step_halving() {
    let env = HouseholdEnv::default();
    let d = RatioDynamics::new(0.01, 0.15);
    let x_star = solve_point(&env, &d).unwrap().x_star.unwrap();
    let run = |dt: f64| {
        let cfg = PathConfig {
            n_paths: 20_000,
            dt,
            horizon: 60.0,
            ..PathConfig::default()
        };
        evaluate_threshold_policy(&Dynamics::Ratio(d), &env, 16.0, x_star, &cfg).unwrap()
    };
    let (coarse, fine) = (run(1.0 / 252.0), run(1.0 / 504.0));
    let se = coarse.std_error.hypot(fine.std_error);
    assert!(
        (coarse.mean - fine.mean).abs() < 2.0 * se,
        "{} vs {} (se {se})",
        coarse.mean,
        fine.mean
    );
    assert_eq!(coarse.n_paths, fine.n_paths);
}
