//! Learn a twist policy on the nonlinear-observation model with the forward and
//! backward (controlled SMC) schemes, and compare against the bootstrap filter.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twisted_smc::models::{simulate_nlobs, NlObsModel, NlObsParams, ObservationFn};
use twisted_smc::rng::RngStreams;
use twisted_smc::schemes::{train, Scheme, SchemeConfig};

fn main() -> twisted_smc::Result<()> {
    let params = NlObsParams { alpha: 0.95, sigma_x2: 0.1, sigma_y2: 0.05, horizon: 100 };
    let f = ObservationFn::ExpPlusLinear;
    let (_, ys) = simulate_nlobs(&params, f, None, &mut ChaCha8Rng::seed_from_u64(6));
    let model = NlObsModel::new(params, f, ys)?;
    let config = SchemeConfig { iterations: 3, ..SchemeConfig::default() };

    for scheme in [Scheme::Bootstrap, Scheme::Forward, Scheme::Backward] {
        let logs: Vec<f64> = (0..10)
            .filter_map(|k| train(scheme, &model, &config, &RngStreams::from_seed(100 + k)).ok())
            .filter_map(|run| run.iterations.last().map(|s| s.log_z))
            .collect();
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        let sd = (logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (logs.len() - 1) as f64).sqrt();
        println!("{scheme:?}: {} runs, log Z {mean:.3}, sd {sd:.4}", logs.len());
    }

    let run = train(Scheme::Forward, &model, &config, &RngStreams::from_seed(1))?;
    for s in &run.iterations {
        println!(
            "iteration {}: ESS min {:.1}, regressions {}, tempered {}, projected {}",
            s.iteration, s.ess_min, s.regressions, s.tempered, s.projected
        );
    }
    Ok(())
}
