//! A small robustness grid on the nonlinear-observation model: relative spread of
//! each scheme's log Z estimate against the bootstrap filter.

use serde_json::{json, Value};
use twisted_smc::harness::{resolve, run_grid};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let overrides: Vec<(String, Value)> = [
        ("grid.alpha", json!([0.95, 0.99])),
        ("grid.sigma_x2", json!([0.1])),
        ("grid.sigma_y2", json!([0.005, 0.055])),
        ("grid.datasets_per_cell", json!(2)),
        ("replication.runs", json!(8)),
        ("training.iterations", json!(2)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let config = resolve(None, None, &overrides)?;
    let outcome = run_grid(&config, None)?;

    print!("{}", outcome.summary.datasets_csv());
    for p in &outcome.summary.proportions {
        println!(
            "{:<12} L = {}: sd <= bpf {:.2}, sd > 10 bpf {}/{}",
            p.scheme, p.iteration, p.le_bpf, p.above_ten_bpf, p.datasets
        );
    }
    Ok(())
}
