use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use lipbandit::cli::{
    emit_preset, emit_results, lower_bound_rate, parse_config, preset, summary_row, CliArgs, RunManifest,
    SUMMARY_HEADER,
};
use lipbandit::harness::{run_experiment, ExperimentConfig, RewardChoice};
use lipbandit::{AggregateResult, Error, Result};

fn run_cell(cfg: &ExperimentConfig) -> Result<(AggregateResult, RunManifest)> {
    let start = Instant::now();
    let result = run_experiment(cfg)?;
    let mut manifest = RunManifest::new(cfg, &result, start.elapsed().as_secs_f64());
    if cfg.reward == RewardChoice::LowerBound {
        let rate = lower_bound_rate(cfg.budget, cfg.horizon, cfg.effective_dim());
        manifest.notes.push(("lower_bound_rate".into(), format!("{rate}")));
        manifest.notes.push(("regret_over_rate".into(), format!("{}", result.mean_final_regret / rate)));
    }
    Ok((result, manifest))
}

fn main_inner() -> Result<()> {
    let args = CliArgs::parse();
    let file = match &args.config {
        Some(path) => Some(fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?),
        None => None,
    };
    println!("{SUMMARY_HEADER}");
    if let Some(name) = &args.preset {
        let mut done = Vec::new();
        for cell in preset(name)? {
            let (result, manifest) = run_cell(&cell.config)?;
            println!("{}", summary_row(&cell.config, &result));
            done.push((cell, result, manifest));
        }
        emit_preset(&done, &args.out)?;
    } else {
        let cfg = parse_config(&args, file.as_deref())?;
        let (result, manifest) = run_cell(&cfg)?;
        println!("{}", summary_row(&cfg, &result));
        emit_results(&cfg, &result, &manifest, &args.out)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
