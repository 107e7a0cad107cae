//! Closed-form twisting of a Gaussian by a log-quadratic function, against Monte Carlo.

use nalgebra::{dmatrix, dvector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use twisted_smc::twist::{twist_gaussian, LogQuadraticTwist};

fn main() -> twisted_smc::Result<()> {
    let mean = dvector![0.5, -1.0];
    let cov = dmatrix![1.0, 0.3; 0.3, 0.5];
    // phi(x) = exp(-x'Ax/2 - x'b - c/2)
    let twist = LogQuadraticTwist::new(dmatrix![0.8, -0.2; -0.2, 0.4], dvector![0.3, -0.1], 0.2)?;
    let (twisted_mean, twisted_cov, log_eta) = twist_gaussian(&mean, &cov, &twist)?;
    println!("log int phi dN = {log_eta:.6}");
    println!("twisted mean = {:.4?}", twisted_mean.as_slice());
    println!("twisted cov = {:.4?}", twisted_cov.as_slice());

    let l = cov.clone().cholesky().expect("positive definite").l();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 1_000_000;
    let mut sum = 0.0;
    for _ in 0..n {
        let z = dvector![rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let x = &mean + &l * z;
        sum += twist.log_eval(x.as_slice()).exp();
    }
    println!("closed form {:.6}, Monte Carlo {:.6}", log_eta.exp(), sum / n as f64);

    // A concave twist needs cov^-1 + A positive definite
    let too_concave = LogQuadraticTwist::new(dmatrix![-3.0, 0.0; 0.0, 0.0], dvector![0.0, 0.0], 0.0)?;
    println!("invalid twist: {}", twist_gaussian(&mean, &cov, &too_concave).unwrap_err());
    Ok(())
}
