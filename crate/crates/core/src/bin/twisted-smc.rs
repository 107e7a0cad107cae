use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;
use twisted_smc::harness::{
    cmd_filter, cmd_simulate, cmd_train, preset, read_records, resolve, run_grid, run_msv_pmmh, summarize, write_summary,
    ExperimentConfig, HarnessError,
};

#[derive(Parser)]
#[command(version, about = "Twisted SMC experiments")]
struct Cli {
    /// JSON config file layered over the defaults and preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Allow presets whose runtime is hours to days.
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Override one key, e.g. `--set training.iterations=3`. The value is
    /// parsed as JSON and falls back to a string.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset from the model block.
    Simulate,
    /// Train the configured scheme and evaluate the final policy.
    Train,
    /// Filter with a saved policy, or the bootstrap filter without one.
    Filter,
    /// Run the nonlinear-observation grid study.
    GridNlobs,
    /// Run the PMMH study on the stochastic volatility model.
    MsvPmmh,
    /// Recompute grid summaries from a records file.
    Summarize {
        /// Defaults to `<out>/records.jsonl`.
        records: Option<PathBuf>,
    },
}

fn parse_override(raw: &str) -> Result<(String, Value), HarnessError> {
    let (key, value) =
        raw.split_once('=').ok_or_else(|| HarnessError::Config(format!("--set {raw:?}: expected KEY=VALUE")))?;
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    Ok((key.to_string(), value))
}

fn load(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let preset = cli.preset.as_deref().map(preset).transpose()?;
    if let Some(p) = &preset {
        if p.paper_scale && !cli.paper_scale {
            return Err(HarnessError::Config(format!(
                "preset {:?} runs for hours or days; pass --paper-scale to run it",
                p.name
            )));
        }
        if p.paper_scale {
            eprintln!("warning: preset {:?} is paper scale, expect a long wall-clock time", p.name);
        }
    }
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.clone(), source })?;
            Some(serde_json::from_str::<Value>(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };
    let mut overrides = cli.overrides.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.into()));
    }
    if let Some(out) = &cli.out {
        overrides.push(("output.dir".into(), Value::String(out.display().to_string())));
    }
    resolve(preset.as_ref(), file.as_ref(), &overrides)
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    let config = load(cli)?;
    let out = config.output.dir.clone();
    match &cli.command {
        Command::Simulate => {
            let path = cmd_simulate(&config)?;
            println!("{}", path.display());
        }
        Command::Train => {
            let o = cmd_train(&config)?;
            for s in &o.run.iterations {
                println!("iteration {:>2}  logZ {:.4}  failures {}", s.iteration, s.log_z, s.failures);
            }
            println!("policy written to {}", out.join("policy.json").display());
        }
        Command::Filter => {
            let o = cmd_filter(&config)?;
            let ok: Vec<f64> = o.records.iter().filter_map(|r| r.log_z).collect();
            let mean = ok.iter().sum::<f64>() / ok.len() as f64;
            println!("{} runs, {} failed, mean logZ {mean:.4}", o.records.len(), o.records.len() - ok.len());
        }
        Command::GridNlobs => {
            let o = run_grid(&config, Some(&out))?;
            print!("{}", o.summary.proportions_csv());
        }
        Command::MsvPmmh => {
            let o = run_msv_pmmh(&config, Some(&out))?;
            for c in &o.chains {
                println!(
                    "{:<14} acceptance {:.3}  failed proposals {}  windows {}",
                    c.label, c.acceptance_rate, c.failed_proposals, c.windows
                );
            }
        }
        Command::Summarize { records } => {
            let path = records.clone().unwrap_or_else(|| out.join("records.jsonl"));
            let summary = summarize(&read_records(&path)?);
            write_summary(path.parent().unwrap_or(Path::new(".")), &summary)?;
            print!("{}", summary.proportions_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
