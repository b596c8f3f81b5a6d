use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use da_guidance::cli::{run_study, Study, StudySpec};

/// Pursuit-evasion guidance studies under disturbance attenuation.
#[derive(Parser, Debug)]
#[command(name = "da-guidance", version, about)]
struct Args {
    /// Study to run: sbgp-gains, sbgp-saddle, mge-compare, mge-gamma,
    /// mge-nprime, mge-shaping, gamma-search.
    #[arg(long)]
    study: String,

    /// Scenario configuration file (TOML with [scenario], [noise], [run]).
    #[arg(long)]
    config: PathBuf,

    /// Output directory for CSVs, summary.txt and meta.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,

    /// Monte Carlo worker threads (default: machine parallelism).
    #[arg(long)]
    workers: Option<usize>,

    /// Config override, repeatable: --set section.key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let study: Study = match args.study.parse() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let mut overrides = Vec::new();
    for kv in &args.set {
        match kv.split_once('=') {
            Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
            None => {
                eprintln!("error: --set expects key=value, got '{kv}'");
                return ExitCode::from(1);
            }
        }
    }
    let spec = StudySpec {
        study,
        config_path: args.config,
        out_dir: args.out,
        seed: args.seed,
        overrides,
        workers: args.workers,
    };
    ExitCode::from(run_study(&spec) as u8)
}
