//! Particle marginal Metropolis-Hastings for the autoregression of a scalar
//! linear-Gaussian model, with the bootstrap likelihood estimator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twisted_smc::models::{simulate_lgssm, LgssmParams};
use twisted_smc::pmmh::{pmmh_run, Estimator, EstimatorSpec, LgssmLikelihood, PmmhConfig, Prior, PriorSpec};
use twisted_smc::rng::RngStreams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (_, ys) = simulate_lgssm(&LgssmParams::scalar(0.7, 1.0, 1.0, 1.0), 100, &mut ChaCha8Rng::seed_from_u64(10))?;
    let likelihood = LgssmLikelihood {
        params_of: |theta: &[f64]| Ok(LgssmParams::scalar(theta[0], 1.0, 1.0, 1.0)),
        observations: ys,
        spec: EstimatorSpec { n_bootstrap: 128, ..EstimatorSpec::new(Estimator::Bootstrap) },
    };
    let prior = PriorSpec::new(vec![Prior::Uniform { lo: 0.0, hi: 1.0 }]);
    let config = PmmhConfig { steps: 3000, proposal_sd: vec![0.5], window_every: 500, ..PmmhConfig::default() };
    let chain = pmmh_run(&likelihood, &prior, &prior.transform()?, &[0.5], &config, &RngStreams::from_seed(11))?;

    let draws: Vec<f64> = chain.states[500..].iter().map(|s| s.theta[0]).collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    println!("posterior mean of a: {mean:.3} (true 0.7), acceptance {:.2}", chain.acceptance_rate());
    for w in &chain.windows {
        let var = w.variance.map_or("failed".to_string(), |v| format!("{v:.3}"));
        println!("step {:>4}: a = {:.3}, Var log Z = {var}", w.step, w.theta[0]);
    }
    Ok(())
}
