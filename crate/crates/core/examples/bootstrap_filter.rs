//! Bootstrap particle filter on a scalar linear-Gaussian model, checked against the Kalman filter.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twisted_smc::fk::{run_smc, weighted_expectation};
use twisted_smc::models::{simulate_lgssm, LgssmModel, LgssmParams};
use twisted_smc::rng::RngStreams;
use twisted_smc::twist::TwistedModel;

fn main() -> twisted_smc::Result<()> {
    let params = LgssmParams::scalar(0.9, 0.5, 1.0, 1.0);
    let (_, ys) = simulate_lgssm(&params, 50, &mut ChaCha8Rng::seed_from_u64(1))?;
    let model = LgssmModel::new(params, ys)?;
    let kalman = model.kalman()?;

    let filter = TwistedModel::bootstrap(&model);
    let streams = RngStreams::from_seed(2);
    println!("Kalman log Z = {:.4}", kalman.log_z());
    for n in [64, 256, 1024, 4096] {
        let trace = run_smc(&filter, n, &streams.derive(n as u64))?;
        let mean = weighted_expectation(&trace, 50, |path| path[49]);
        println!(
            "N = {n:>4}: log Z = {:.4}, E[x_T | y] = {mean:.4} (Kalman {:.4}), min ESS = {:.1}",
            trace.log_z(),
            kalman.filter_means[49][0],
            trace.ess_min()
        );
    }
    Ok(())
}
