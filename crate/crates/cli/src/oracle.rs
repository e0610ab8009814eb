//! `mkofl oracle`: regret, centralized PMF and martingale diagnostics
//! recomputed from a saved trace.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime};

use mkofl::evaluation::{centralized_pmf, martingale_check, tv_trace, MartingaleReport, RegretReport};
use mkofl::kernel_features::dictionary_bandwidth_sq;
use mkofl::orchestrator::{global_steps, hindsight_regret, prepare_data, run_trial, PreparedData};
use mkofl::rng::{substream, Domain};
use mkofl::trace_io::{read_trace_csv, write_json, TraceTable, SCHEMA_VERSION};
use mkofl::{Algorithm, ExperimentConfig};
use serde::{Deserialize, Serialize};

use crate::config;
use crate::manifest::{ensure_dir, RunEntry, RunManifest, Seeds};
use crate::{CliError, CliResult, OracleArgs};

pub const REGRET_FILE: &str = "regret.csv";
pub const HINDSIGHT_FILE: &str = "hindsight.csv";
pub const CENTRAL_PMF_FILE: &str = "central_pmf.csv";
pub const MARTINGALE_FILE: &str = "martingale.csv";
pub const REPORT_FILE: &str = "oracle_report.json";
pub const MANIFEST_FILE: &str = "oracle_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvSummary {
    pub mean: f64,
    pub max: f64,
    pub last: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub schema_version: u32,
    pub algorithm: String,
    pub rounds: usize,
    pub nodes: usize,
    pub regret: RegretReport,
    /// Per-round TV between node PMFs and the centralized PMF.
    pub tv: Option<Vec<f64>>,
    pub tv_summary: Option<TvSummary>,
    pub martingale: Vec<MartingaleReport>,
    pub martingale_within_band: Option<bool>,
}

/// `(round, node)` pairs spread over the middle of the run, one-based round
/// and zero-based node.
pub fn frozen_points(rounds: usize, nodes: usize, count: usize) -> Vec<(usize, usize)> {
    let mut points: Vec<(usize, usize)> = (0..count)
        .map(|i| (((i + 1) * rounds / (count + 1)).clamp(1, rounds), i % nodes))
        .collect();
    points.sort_unstable();
    points.dedup();
    points
}

fn check_trace(cfg: &ExperimentConfig, data: &PreparedData, trace: &TraceTable, path: &Path) -> CliResult<()> {
    let mismatch = |what: String| {
        CliError::config(format!("trace {} does not match the config: {what}", path.display()))
    };
    if trace.rounds.len() != cfg.rounds {
        return Err(mismatch(format!("{} rounds in the trace, {} in the config", trace.rounds.len(), cfg.rounds)));
    }
    for (t, rows) in trace.rounds.iter().enumerate() {
        let expected = data.streams.round(t);
        if rows.len() != expected.len() {
            return Err(mismatch(format!("round {} has {} nodes, the config has {}", t + 1, rows.len(), expected.len())));
        }
        if let Some((row, s)) = rows.iter().zip(&expected).find(|(r, s)| r.sample_row != s.row) {
            return Err(mismatch(format!(
                "round {} node {} saw sample row {}, the config's data stream has row {}",
                t + 1,
                row.node,
                row.sample_row,
                s.row
            )));
        }
    }
    Ok(())
}

pub fn analyze(cfg: &ExperimentConfig, trace_path: &Path, samples: usize, frozen: usize) -> CliResult<OracleReport> {
    let trace = read_trace_csv(trace_path)?;
    // node PMFs exist only for the federated multi-kernel runs
    let multi_kernel = matches!(cfg.algorithm, Algorithm::MkOfl | Algorithm::NaiveMk);
    if multi_kernel {
        trace.kernel_losses()?;
        if trace.kernels != Some(cfg.kernels) {
            return Err(CliError::config(format!(
                "trace {} has {} kernel columns, the config has P = {}",
                trace_path.display(),
                trace.kernels.unwrap_or(0),
                cfg.kernels
            )));
        }
    }
    let data = prepare_data(cfg)?;
    check_trace(cfg, &data, &trace, trace_path)?;

    let regret = hindsight_regret(cfg, &data, 0, trace.algorithm_loss(), cfg.rounds)?;
    let mut report = OracleReport {
        schema_version: SCHEMA_VERSION,
        algorithm: cfg.algorithm.to_string(),
        rounds: cfg.rounds,
        nodes: cfg.nodes,
        regret,
        tv: None,
        tv_summary: None,
        martingale: Vec::new(),
        martingale_within_band: None,
    };
    if multi_kernel {
        let central = centralized_pmf(&trace.kernel_losses()?, &global_steps(cfg), &cfg.loss_config())?;
        let tv = tv_trace(&trace.pmfs()?, &central);
        report.tv_summary = Some(TvSummary {
            mean: tv.iter().sum::<f64>() / tv.len() as f64,
            max: tv.iter().copied().fold(0.0, f64::max),
            last: tv.last().copied().unwrap_or(0.0),
        });
        report.tv = Some(tv);
    }
    if cfg.algorithm == Algorithm::MkOfl && frozen > 0 {
        let points = frozen_points(cfg.rounds, cfg.nodes, frozen);
        let replay = run_trial(cfg, &data, 0, &points)?;
        let diverged = replay
            .records
            .iter()
            .zip(&trace.rounds)
            .any(|(rec, rows)| rec.predictions.iter().zip(rows).any(|(p, r)| *p != r.prediction));
        if diverged {
            return Err(CliError::config(format!(
                "replaying trial 0 of the config does not reproduce the predictions in {}; was it written with a different seed?",
                trace_path.display()
            )));
        }
        report.martingale = replay
            .frozen
            .iter()
            .enumerate()
            .map(|(i, state)| {
                let mut rng = substream(cfg.seed, Domain::Oracle, i as u64);
                martingale_check(state, &cfg.loss_config(), samples, &mut rng)
            })
            .collect::<mkofl::Result<Vec<_>>>()?;
        report.martingale_within_band = Some(report.martingale.iter().all(MartingaleReport::within_band));
    }
    Ok(report)
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<PathBuf> {
    let fail = |e: csv::Error| CliError::runtime(format!("cannot write {}: {e}", path.display()));
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(&row).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(path.to_path_buf())
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Writes the report's CSV tables and JSON next to each other.
pub fn write_report(report: &OracleReport, out: &Path) -> CliResult<Vec<PathBuf>> {
    let r = &report.regret;
    let mut files = vec![write_rows(
        &out.join(REGRET_FILE),
        &strings(&["rounds", "algorithm_loss", "comparator_kernel", "hindsight_loss", "regret", "regret_over_t", "regret_over_sqrt_t"]),
        [vec![
            r.rounds.to_string(),
            r.algorithm_loss.to_string(),
            (r.comparator + 1).to_string(),
            r.hindsight_losses[r.comparator].to_string(),
            r.regret.to_string(),
            r.regret_over_t.to_string(),
            r.regret_over_sqrt_t.to_string(),
        ]],
    )?];
    files.push(write_rows(
        &out.join(HINDSIGHT_FILE),
        &strings(&["kernel", "bandwidth_sq", "hindsight_loss", "regret"]),
        r.hindsight_losses.iter().zip(&r.per_kernel_gaps).enumerate().map(|(p, (h, g))| {
            vec![(p + 1).to_string(), dictionary_bandwidth_sq(p).to_string(), h.to_string(), g.to_string()]
        }),
    )?);
    if let Some(tv) = &report.tv {
        files.push(write_rows(
            &out.join(CENTRAL_PMF_FILE),
            &strings(&["round", "tv"]),
            tv.iter().enumerate().map(|(t, d)| vec![(t + 1).to_string(), d.to_string()]),
        )?);
    }
    if !report.martingale.is_empty() {
        files.push(write_rows(
            &out.join(MARTINGALE_FILE),
            &strings(&["round", "node", "samples", "mean", "std_dev", "band", "within_band", "expected_loss"]),
            report.martingale.iter().map(|m| {
                vec![
                    m.round.to_string(),
                    (m.node + 1).to_string(),
                    m.samples.to_string(),
                    m.mean.to_string(),
                    m.std_dev.to_string(),
                    m.band.to_string(),
                    m.within_band().to_string(),
                    m.expected_loss.to_string(),
                ]
            }),
        )?);
    }
    let json = out.join(REPORT_FILE);
    write_json(&json, report)?;
    files.push(json);
    Ok(files)
}

pub fn execute(args: &OracleArgs, argv: &[String]) -> CliResult<OracleReport> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let cfg = config::load(&args.config)?;
    if !args.trace.is_file() {
        return Err(CliError::config(format!("trace not found: {}", args.trace.display())));
    }
    let report = analyze(&cfg, &args.trace, args.samples, args.frozen)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.trace.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf));
    ensure_dir(&out)?;
    let files = crate::manifest::relative(&out, &write_report(&report, &out)?);
    let entry = RunEntry { name: cfg.algorithm.to_string(), config: cfg.clone(), config_file: None, seeds: Seeds::of(&cfg) };
    let replay = format!("mkofl oracle --trace {} --config <config of the traced run>", args.trace.display());
    RunManifest::new("oracle", argv, vec![entry], files, started, clock.elapsed(), replay).write_as(&out, MANIFEST_FILE)?;

    let r = &report.regret;
    println!("regret R_T = {:.6}, R_T/T = {:.6}, R_T/sqrt(T) = {:.6} (comparator kernel {})", r.regret, r.regret_over_t, r.regret_over_sqrt_t, r.comparator + 1);
    if let Some(tv) = &report.tv_summary {
        println!("TV to centralized PMF: mean {:.4}, max {:.4}, final {:.4}", tv.mean, tv.max, tv.last);
    }
    if let Some(ok) = report.martingale_within_band {
        println!("martingale check on {} frozen states: {}", report.martingale.len(), if ok { "all within 3 sigma" } else { "outside band" });
    }
    Ok(report)
}
