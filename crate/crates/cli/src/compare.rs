//! `mkofl compare`: several algorithms on one data stream.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime};

use mkofl::orchestrator::{prepare_data, run_prepared, ExperimentResult};
use mkofl::trace_io::{write_comm_csv, write_compare_csv, write_json, CommRow, Summary};
use mkofl::{Algorithm, ExperimentConfig};
use serde::Serialize;
use toml::Table;

use crate::config;
use crate::manifest::{ensure_dir, RunEntry, RunManifest, Seeds};
use crate::{CliError, CliResult, CompareArgs};

pub const COMPARE_MSE_FILE: &str = "compare_mse.csv";
pub const COMPARE_COMM_FILE: &str = "compare_comm.csv";
pub const COMPARE_SUMMARY_FILE: &str = "compare_summary.json";
pub const RUNS_DIR: &str = "runs";

#[derive(Debug, Clone)]
pub struct NamedRun {
    pub name: String,
    pub config: ExperimentConfig,
}

#[derive(Debug)]
pub struct Comparison {
    pub runs: Vec<NamedRun>,
    /// Results with only trial 0 kept; the MSE curves are trial means.
    pub results: Vec<ExperimentResult>,
    pub summaries: Vec<Summary>,
}

impl Comparison {
    pub fn result(&self, name: &str) -> Option<&ExperimentResult> {
        self.runs.iter().position(|r| r.name == name).map(|i| &self.results[i])
    }
}

#[derive(Serialize)]
struct NamedSummary<'a> {
    run: &'a str,
    #[serde(flatten)]
    summary: Summary,
}

/// Column name of a run: the algorithm, with the kernel for SK-OFL.
pub fn run_name(cfg: &ExperimentConfig) -> String {
    match (cfg.algorithm, cfg.sk_kernel) {
        (Algorithm::SkOfl, Some(p)) => format!("sk_ofl_p{p}"),
        (a, _) => a.to_string(),
    }
}

/// Expands a base config into the requested run families.
pub fn expand(base: &ExperimentConfig, families: &[String]) -> CliResult<Vec<ExperimentConfig>> {
    let mut out = Vec::new();
    for family in families {
        let with = |algorithm, sk_kernel| ExperimentConfig { algorithm, sk_kernel, ..base.clone() };
        match family.trim() {
            "mk" | "mk_ofl" => out.push(with(Algorithm::MkOfl, None)),
            "sk" | "sk_ofl" => out.extend((1..=base.kernels).map(|p| with(Algorithm::SkOfl, Some(p)))),
            "naive" | "naive_mk" => out.push(with(Algorithm::NaiveMk, None)),
            "central" | "central_omkl" => out.push(with(Algorithm::CentralOmkl, None)),
            other => return Err(CliError::config(format!("unknown run family {other:?} (expected mk, sk, naive or central)"))),
        }
    }
    if out.is_empty() {
        return Err(CliError::config("nothing to compare"));
    }
    Ok(out)
}

fn comparable(cfg: &ExperimentConfig) -> CliResult<Table> {
    let normalized = ExperimentConfig {
        algorithm: Algorithm::MkOfl,
        sk_kernel: None,
        num_features: None,
        verbose_trace: false,
        ..cfg.clone()
    };
    Table::try_from(&normalized).map_err(|e| CliError::runtime(format!("cannot serialize config: {e}")))
}

/// Refuses run sets that do not share a data stream or that differ in
/// anything other than the algorithm and kernel fields.
pub fn check_compatible(runs: &[NamedRun]) -> CliResult<()> {
    let Some(first) = runs.first() else {
        return Err(CliError::config("nothing to compare"));
    };
    let reference = comparable(&first.config)?;
    for run in &runs[1..] {
        let (a, b) = (first.config.dataset.seed(), run.config.dataset.seed());
        if a != b {
            return Err(CliError::config(format!(
                "data seed mismatch: run {} uses data seed {a} but run {} uses data seed {b}; compared runs must see the same sample stream",
                first.name, run.name
            )));
        }
        let other = comparable(&run.config)?;
        let keys: BTreeSet<&String> = reference.keys().chain(other.keys()).collect();
        let differing: Vec<&str> = keys.into_iter().filter(|k| reference.get(*k) != other.get(*k)).map(|k| k.as_str()).collect();
        if !differing.is_empty() {
            return Err(CliError::config(format!(
                "runs {} and {} differ in {}; only the algorithm and kernel fields may vary",
                first.name,
                run.name,
                differing.join(", ")
            )));
        }
    }
    Ok(())
}

fn name_runs(configs: Vec<ExperimentConfig>) -> Vec<NamedRun> {
    let mut seen = BTreeSet::new();
    configs
        .into_iter()
        .map(|config| {
            let base = run_name(&config);
            let mut name = base.clone();
            let mut i = 2;
            while !seen.insert(name.clone()) {
                name = format!("{base}_{i}");
                i += 1;
            }
            NamedRun { name, config }
        })
        .collect()
}

/// Runs every config on data prepared once.
pub fn compare(runs: Vec<NamedRun>) -> CliResult<Comparison> {
    check_compatible(&runs)?;
    let data = prepare_data(&runs[0].config)?;
    let mut results = Vec::with_capacity(runs.len());
    let mut summaries = Vec::with_capacity(runs.len());
    for run in &runs {
        let mut res = run_prepared(&run.config, &data, &[])?;
        summaries.push(Summary::from_result(&res));
        res.trials.truncate(1);
        results.push(res);
    }
    Ok(Comparison { runs, results, summaries })
}

pub fn execute(args: &CompareArgs, argv: &[String]) -> CliResult<Comparison> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let configs = if args.configs.is_empty() {
        expand(&config::load(&args.config)?, &args.runs)?
    } else {
        if args.config.config.is_some() {
            return Err(CliError::config("pass either positional configs or --config, not both"));
        }
        args.configs.iter().map(|p| config::load_file(Some(p), &args.config)).collect::<CliResult<Vec<_>>>()?
    };
    let comparison = compare(name_runs(configs))?;

    let out = &args.out;
    ensure_dir(&out.join(RUNS_DIR))?;
    let series: Vec<(String, Vec<f64>)> =
        comparison.runs.iter().zip(&comparison.results).map(|(r, res)| (r.name.clone(), res.mean_mse.clone())).collect();
    write_compare_csv(&out.join(COMPARE_MSE_FILE), &series)?;
    let comm: Vec<CommRow> = comparison
        .runs
        .iter()
        .zip(&comparison.results)
        .map(|(r, res)| CommRow {
            run: r.name.clone(),
            uplink_scalars_per_node_round: r.config.uplink_scalars_per_node(),
            uplink_scalars_total: res.total_uplink_scalars(),
            downlink_scalars_total: res.total_downlink_scalars(),
        })
        .collect();
    write_comm_csv(&out.join(COMPARE_COMM_FILE), &comm)?;
    let summaries: Vec<NamedSummary> = comparison
        .runs
        .iter()
        .zip(&comparison.summaries)
        .map(|(r, s)| NamedSummary { run: &r.name, summary: s.clone() })
        .collect();
    write_json(&out.join(COMPARE_SUMMARY_FILE), &summaries)?;

    let mut files: Vec<PathBuf> = vec![COMPARE_MSE_FILE.into(), COMPARE_COMM_FILE.into(), COMPARE_SUMMARY_FILE.into()];
    let mut entries = Vec::new();
    for run in &comparison.runs {
        let rel = PathBuf::from(RUNS_DIR).join(format!("{}.toml", run.name));
        config::write_snapshot(&run.config, &out.join(&rel))?;
        files.push(rel.clone());
        entries.push(RunEntry { name: run.name.clone(), config: run.config.clone(), config_file: Some(rel), seeds: Seeds::of(&run.config) });
    }
    let listed: Vec<String> = entries.iter().map(|e| out.join(e.config_file.as_deref().unwrap_or(Path::new(""))).display().to_string()).collect();
    let replay = format!("mkofl compare {} --out <dir>", listed.join(" "));
    RunManifest::new("compare", argv, entries, files, started, clock.elapsed(), replay).write(out)?;

    for (run, res) in comparison.runs.iter().zip(&comparison.results) {
        println!("{:<16} terminal MSE {:.6}", run.name, res.terminal_mse());
    }
    Ok(comparison)
}
