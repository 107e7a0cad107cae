//! The optimal twist of a linear-Gaussian model gives a zero-variance estimate of Z.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twisted_smc::fk::run_smc;
use twisted_smc::models::{simulate_lgssm, LgssmModel, LgssmParams};
use twisted_smc::rng::RngStreams;
use twisted_smc::schemes::exact_policy;
use twisted_smc::twist::TwistedModel;

fn main() -> twisted_smc::Result<()> {
    let params = LgssmParams::scalar(0.8, 1.0, 0.5, 2.0);
    let (_, ys) = simulate_lgssm(&params, 30, &mut ChaCha8Rng::seed_from_u64(5))?;
    let model = LgssmModel::new(params, ys)?;
    let log_z = model.kalman()?.log_z();

    // lag L only looks L steps ahead; the full horizon is exact
    for lag in [0, 2, 8, 29] {
        let policy = exact_policy(&model, lag)?;
        let twisted = TwistedModel::new(&model, &policy)?;
        let estimates: Vec<f64> = (0..20)
            .map(|k| run_smc(&twisted, 32, &RngStreams::from_seed(k)).map(|t| t.log_z()))
            .collect::<twisted_smc::Result<_>>()?;
        let mean = estimates.iter().sum::<f64>() / 20.0;
        let var = estimates.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 19.0;
        println!("L = {lag:>2}: mean log Z - Kalman = {:+.2e}, Var log Z = {var:.3e}", mean - log_z);
    }
    Ok(())
}
