//! `cil <command> --config <path> [overrides]`
//!
//! Exit status: 0 when every verdict passes, 1 when one fails, 2 on error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use cil::experiments::{self, ExperimentConfig, COMMANDS};

#[derive(Parser, Debug)]
#[command(name = "cil", about = "Monte Carlo experiments for the multitype contact process interface")]
struct Cli {
    /// One of: duality_check, tightness, clt, fdd, sigma_dual, regeneration,
    /// coalescence, truncation, survival.
    command: String,
    /// `key = value` file; command defaults apply to absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    range: Option<i64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve(cli: &Cli) -> cil::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_file(&cli.command, p)?,
        None => ExperimentConfig::defaults(&cli.command)?,
    };
    let overrides = [
        ("lambda", cli.lambda.map(|x| x.to_string())),
        ("range", cli.range.map(|x| x.to_string())),
        ("reps", cli.reps.map(|x| x.to_string())),
        ("seed", cli.seed.map(|x| x.to_string())),
        ("horizon", cli.horizon.map(|x| x.to_string())),
        ("out", cli.out.as_ref().map(|p| p.display().to_string())),
    ];
    for (k, v) in overrides {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if !COMMANDS.contains(&cli.command.as_str()) {
        eprintln!("error: unknown command {:?}; expected one of {}", cli.command, COMMANDS.join(", "));
        return ExitCode::from(2);
    }
    let outcome = resolve(&cli).and_then(|cfg| {
        print!("{}", cfg.canonical());
        let res = experiments::run(&cfg)?;
        let dir = res.write()?;
        Ok((res, dir))
    });
    match outcome {
        Ok((res, dir)) => {
            for v in &res.verdicts {
                println!("{} {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.name, v.detail);
            }
            println!("output: {}", dir.display());
            if res.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
