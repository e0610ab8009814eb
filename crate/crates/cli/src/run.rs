//! `mkofl run`.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime};

use mkofl::orchestrator::{run_experiment, ExperimentResult};
use mkofl::trace_io::{write_json, write_mse_csv, write_selection_csv, write_trace_csv, Summary};

use crate::config;
use crate::manifest::{ensure_dir, relative, RunEntry, RunManifest, Seeds};
use crate::{CliResult, RunArgs};

pub const MSE_FILE: &str = "mse_trace.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const SELECTION_FILE: &str = "selection_fraction.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.toml";

pub fn execute(args: &RunArgs, argv: &[String]) -> CliResult<ExperimentResult> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let cfg = config::load(&args.config)?;
    let result = run_experiment(&cfg)?;

    let out = &args.out;
    ensure_dir(out)?;
    let outputs = write_outputs(&result, out)?;
    let snapshot = config::write_snapshot(&cfg, &out.join(CONFIG_FILE))?;
    let entry = RunEntry { name: cfg.algorithm.to_string(), config: cfg.clone(), config_file: Some(CONFIG_FILE.into()), seeds: Seeds::of(&cfg) };
    let mut files = relative(out, &outputs);
    files.push(CONFIG_FILE.into());
    let replay = format!("mkofl run --config {} --out <dir>", snapshot.display());
    RunManifest::new("run", argv, vec![entry], files, started, clock.elapsed(), replay).write(out)?;
    println!(
        "{}: terminal MSE {:.6} over {} trials -> {}",
        cfg.algorithm,
        result.terminal_mse(),
        cfg.trials,
        out.display()
    );
    Ok(result)
}

/// MSE trace, trial-0 trace, selection fraction (synthetic data) and summary.
pub fn write_outputs(result: &ExperimentResult, out: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mse = out.join(MSE_FILE);
    write_mse_csv(&mse, result)?;
    files.push(mse);
    let trace = out.join(TRACE_FILE);
    write_trace_csv(&trace, &result.trials[0], result.config.kernels)?;
    files.push(trace);
    if let Some(fraction) = &result.selection_fraction {
        let sel = out.join(SELECTION_FILE);
        write_selection_csv(&sel, fraction)?;
        files.push(sel);
    }
    let summary = out.join(SUMMARY_FILE);
    write_json(&summary, &Summary::from_result(result))?;
    files.push(summary);
    Ok(files)
}
