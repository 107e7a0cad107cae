//! Multivariate stochastic volatility: simulate a dataset and compare the
//! likelihood estimators used inside PMMH.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twisted_smc::models::{simulate_msv, MsvModel, MsvParams};
use twisted_smc::pmmh::{estimate_log_z, Estimator, EstimatorSpec};
use twisted_smc::rng::RngStreams;

fn main() -> twisted_smc::Result<()> {
    let d = 3;
    let params = MsvParams { m: vec![-1.0; d], alpha: vec![0.9; d], sigma2: vec![0.2; d], rho: vec![0.3; d - 1] };
    let (_, ys) = simulate_msv(&params, 102, &mut ChaCha8Rng::seed_from_u64(9))?;
    let model = MsvModel::new(params, ys)?;

    for estimator in [Estimator::Bootstrap, Estimator::Forward, Estimator::Backward] {
        let spec = EstimatorSpec::new(estimator);
        let logs: Vec<f64> = (0..10)
            .map(|k| estimate_log_z(&model, &spec, &RngStreams::from_seed(k)))
            .collect::<twisted_smc::Result<_>>()?;
        let mean = logs.iter().sum::<f64>() / 10.0;
        let var = logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0;
        println!("{estimator:?}: log Z {mean:.3}, Var log Z {var:.4}");
    }
    Ok(())
}
