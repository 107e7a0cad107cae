//! Online training: the streamed forward scheme reproduces the batch one, and the
//! fast variant keeps a bounded window of time slices in memory.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twisted_smc::models::{simulate_nlobs, NlObsModel, NlObsParams, ObservationFn};
use twisted_smc::rng::RngStreams;
use twisted_smc::schemes::{fast_online_forward, forward_train, online_forward, SchemeConfig};

fn main() -> twisted_smc::Result<()> {
    let params = NlObsParams { alpha: 0.99, sigma_x2: 0.1, sigma_y2: 0.005, horizon: 200 };
    let f = ObservationFn::ExpPlusLinear;
    let (_, ys) = simulate_nlobs(&params, f, None, &mut ChaCha8Rng::seed_from_u64(7));
    let model = NlObsModel::new(params, f, ys)?;
    let config = SchemeConfig { iterations: 4, ..SchemeConfig::default() };
    let streams = RngStreams::from_seed(8);

    let batch = forward_train(&model, &config, &streams)?;
    let online = online_forward(&model, &config, &streams)?;
    println!("online policies equal batch policies: {}", batch.policies == online.policies);

    let fast = fast_online_forward(&model, &config, &streams)?;
    println!("fast online retained at most {:?} time slices", fast.max_retained_slices);
    for (b, s) in batch.iterations.iter().zip(&fast.iterations) {
        println!(
            "iteration {}: batch log Z {:.3} ({} samples), fast log Z {:.3} ({} samples)",
            b.iteration, b.log_z, b.sample_count, s.log_z, s.sample_count
        );
    }
    Ok(())
}
