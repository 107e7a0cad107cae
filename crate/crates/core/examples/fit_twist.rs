//! Weighted log-quadratic regression with ESS-calibrated tempering and PSD projection.

use nalgebra::dmatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twisted_smc::fk::ess;
use twisted_smc::learning::{default_target_ess, fit_log_quadratic, temper_exponent, RegressionProblem};
use twisted_smc::twist::{default_epsilon, TwistMode};

fn main() -> twisted_smc::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 400;
    let states: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    // log target: a bump around 1.2, not exactly quadratic
    let targets: Vec<f64> = states.iter().map(|x: &f64| -2.0 * (x - 1.2).powi(2) + 0.3 * x.sin()).collect();

    let exact = fit_log_quadratic(&RegressionProblem::new(&states, 1, &targets, TwistMode::Full))?;
    println!("unweighted fit: A = {:.4}, b = {:.4}, c = {:.4}", exact.twist.a[(0, 0)], exact.twist.b[0], exact.twist.c);

    // sharply peaked weights leave too few effective points; temper them first
    let log_w: Vec<f64> = targets.iter().map(|t| 400.0 * t).collect();
    let floor = default_target_ess(1, TwistMode::Full);
    let tempered = temper_exponent(&log_w, floor, 0.5)?;
    println!("ESS {:.2} -> {:.2} with alpha = {:.4}", ess(&log_w)?, tempered.achieved_ess, tempered.alpha);
    let weighted = RegressionProblem::new(&states, 1, &targets, TwistMode::Full).with_weights(&tempered.tempered_log_weights);
    println!("weighted fit: A = {:.4}", fit_log_quadratic(&weighted)?.twist.a[(0, 0)]);

    // convex targets give A < 0; projection keeps 1/S + A positive
    let convex: Vec<f64> = states.iter().map(|x| 2.0 * x * x).collect();
    let cov = dmatrix![0.5];
    let problem = RegressionProblem::new(&states, 1, &convex, TwistMode::Full).with_projection(&cov, default_epsilon(&cov));
    let fit = fit_log_quadratic(&problem)?;
    println!("projected = {}, A = {:.6} (1/S = 2)", fit.projected, fit.twist.a[(0, 0)]);
    Ok(())
}
