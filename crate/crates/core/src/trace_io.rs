//! CSV and JSON artifacts of an experiment.
//!
//! Every CSV starts with a header row. Floats are written in the shortest
//! form that parses back to the same value, so identical runs give
//! byte-identical files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orchestrator::{ExperimentResult, TrialTrace};

/// Version of the CSV/JSON layouts below.
pub const SCHEMA_VERSION: u32 = 1;

pub const MSE_TRACE_HEADER: [&str; 4] = ["round", "mse", "uplink_scalars", "downlink_scalars"];
pub const TRACE_BASE_HEADER: [&str; 12] = [
    "round",
    "node",
    "sample_row",
    "label",
    "prediction",
    "squared_error",
    "loss",
    "selected_kernel",
    "next_kernel",
    "proposal",
    "uplink_scalars",
    "downlink_scalars",
];
pub const SELECTION_HEADER: [&str; 2] = ["round", "fraction"];

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::ingestion(path, format!("{other:?}")),
    })
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn opt(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `round,mse,uplink_scalars,downlink_scalars`: trial-mean MSE and the
/// per-round totals over all nodes.
pub fn write_mse_csv(path: &Path, result: &ExperimentResult) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(MSE_TRACE_HEADER)?;
    for (rec, mse) in result.trials[0].records.iter().zip(&result.mean_mse) {
        w.write_record([rec.round.to_string(), mse.to_string(), rec.uplink_scalars.to_string(), rec.downlink_scalars.to_string()])?;
    }
    finish(w, path)
}

/// Long-format trace of one trial: one row per `(round, node)`. Kernels are
/// one-based. Verbose traces append `loss_k1..loss_kP` and `pmf_k1..pmf_kP`.
pub fn write_trace_csv(path: &Path, trace: &TrialTrace, kernels: usize) -> Result<()> {
    let verbose = trace.records.first().is_some_and(|r| r.detail.is_some());
    let mut w = writer(path)?;
    let mut header: Vec<String> = TRACE_BASE_HEADER.iter().map(|s| s.to_string()).collect();
    if verbose {
        header.extend((1..=kernels).map(|p| format!("loss_k{p}")));
        header.extend((1..=kernels).map(|p| format!("pmf_k{p}")));
    }
    w.write_record(&header)?;
    for rec in &trace.records {
        let n = rec.predictions.len();
        for i in 0..n {
            let err = rec.predictions[i] - rec.labels[i];
            let mut row = vec![
                rec.round.to_string(),
                (i + 1).to_string(),
                rec.sample_rows[i].to_string(),
                rec.labels[i].to_string(),
                rec.predictions[i].to_string(),
                (err * err).to_string(),
                rec.losses[i].to_string(),
                (rec.selected_kernel + 1).to_string(),
                opt(rec.next_kernel.map(|p| p + 1)),
                opt(rec.proposals.get(i).map(|p| p + 1)),
                (rec.uplink_scalars / n).to_string(),
                (rec.downlink_scalars / n).to_string(),
            ];
            if let Some(detail) = &rec.detail {
                row.extend(detail.kernel_losses[i].iter().map(f64::to_string));
                row.extend(detail.pmfs[i].iter().map(f64::to_string));
            }
            w.write_record(&row)?;
        }
    }
    finish(w, path)
}

/// `round,fraction`.
pub fn write_selection_csv(path: &Path, fraction: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(SELECTION_HEADER)?;
    for (t, f) in fraction.iter().enumerate() {
        w.write_record([(t + 1).to_string(), f.to_string()])?;
    }
    finish(w, path)
}

/// Wide MSE comparison: `round` then one column per run.
pub fn write_compare_csv(path: &Path, runs: &[(String, Vec<f64>)]) -> Result<()> {
    let rounds = runs.iter().map(|r| r.1.len()).min().unwrap_or(0);
    let mut w = writer(path)?;
    let mut header = vec!["round".to_string()];
    header.extend(runs.iter().map(|r| r.0.clone()));
    w.write_record(&header)?;
    for t in 0..rounds {
        let mut row = vec![(t + 1).to_string()];
        row.extend(runs.iter().map(|r| r.1[t].to_string()));
        w.write_record(&row)?;
    }
    finish(w, path)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommRow {
    pub run: String,
    pub uplink_scalars_per_node_round: usize,
    pub uplink_scalars_total: usize,
    pub downlink_scalars_total: usize,
}

/// Communication accounting of compared runs, one row per run.
pub fn write_comm_csv(path: &Path, rows: &[CommRow]) -> Result<()> {
    let mut w = writer(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(["run", "uplink_scalars_per_node_round", "uplink_scalars_total", "downlink_scalars_total"])?;
    }
    finish(w, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub algorithm: String,
    pub nodes: usize,
    pub rounds: usize,
    pub kernels: usize,
    pub num_features: usize,
    pub budget: usize,
    pub trials: usize,
    pub seed: u64,
    pub data_seed: u64,
    pub terminal_mse: f64,
    pub terminal_mse_per_trial: Vec<f64>,
    /// One-based generating kernel of synthetic data.
    pub best_kernel: Option<usize>,
    pub terminal_selection_fraction: Option<f64>,
    pub uplink_scalars_per_node_round: usize,
    pub uplink_scalars_total: usize,
    pub downlink_scalars_total: usize,
    pub dropped_rows: usize,
}

impl Summary {
    pub fn from_result(result: &ExperimentResult) -> Self {
        let cfg = &result.config;
        Self {
            schema_version: SCHEMA_VERSION,
            algorithm: cfg.algorithm.to_string(),
            nodes: cfg.nodes,
            rounds: cfg.rounds,
            kernels: cfg.kernels,
            num_features: result.num_features,
            budget: cfg.budget,
            trials: cfg.trials,
            seed: cfg.seed,
            data_seed: cfg.dataset.seed(),
            terminal_mse: result.terminal_mse(),
            terminal_mse_per_trial: result.trials.iter().map(TrialTrace::terminal_mse).collect(),
            best_kernel: result.best_kernel.map(|p| p + 1),
            terminal_selection_fraction: result.selection_fraction.as_ref().and_then(|f| f.last().copied()),
            uplink_scalars_per_node_round: cfg.uplink_scalars_per_node(),
            uplink_scalars_total: result.total_uplink_scalars(),
            downlink_scalars_total: result.total_downlink_scalars(),
            dropped_rows: result.dataset.dropped_rows,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One row of a long-format trace read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub round: usize,
    pub node: usize,
    pub sample_row: usize,
    pub label: f64,
    pub prediction: f64,
    pub loss: f64,
    /// One-based.
    pub selected_kernel: usize,
    pub kernel_losses: Option<Vec<f64>>,
    pub pmf: Option<Vec<f64>>,
}

/// A trace CSV grouped by round.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub kernels: Option<usize>,
    pub rounds: Vec<Vec<TraceRow>>,
}

impl TraceTable {
    pub fn is_verbose(&self) -> bool {
        self.kernels.is_some()
    }

    pub fn algorithm_loss(&self) -> f64 {
        self.rounds.iter().flatten().map(|r| r.loss).sum()
    }

    /// `[t][k][p]` pre-step kernel losses.
    pub fn kernel_losses(&self) -> Result<Vec<Vec<Vec<f64>>>> {
        self.verbose_field(|r| r.kernel_losses.clone())
    }

    /// `[t][k]` node PMFs after each round's Hedge update.
    pub fn pmfs(&self) -> Result<Vec<Vec<Vec<f64>>>> {
        self.verbose_field(|r| r.pmf.clone())
    }

    fn verbose_field(&self, get: impl Fn(&TraceRow) -> Option<Vec<f64>>) -> Result<Vec<Vec<Vec<f64>>>> {
        self.rounds
            .iter()
            .map(|round| {
                round
                    .iter()
                    .map(|r| get(r).ok_or_else(|| Error::config(VERBOSE_HINT)))
                    .collect()
            })
            .collect()
    }
}

const VERBOSE_HINT: &str = "trace has no per-kernel losses or PMFs; rerun with --verbose-trace";

/// Reads a trace written by [`write_trace_csv`].
pub fn read_trace_csv(path: &Path) -> Result<TraceTable> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::ingestion(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| Error::ingestion(path, e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::ingestion(path, format!("trace column {name:?} missing")))
    };
    let idx: BTreeMap<&str, usize> = ["round", "node", "sample_row", "label", "prediction", "loss", "selected_kernel"]
        .into_iter()
        .map(|n| col(n).map(|i| (n, i)))
        .collect::<Result<_>>()?;
    let loss_cols: Vec<usize> = (1..).map_while(|p| headers.iter().position(|h| h == format!("loss_k{p}"))).collect();
    let pmf_cols: Vec<usize> = (1..).map_while(|p| headers.iter().position(|h| h == format!("pmf_k{p}"))).collect();
    let kernels = (!loss_cols.is_empty() && loss_cols.len() == pmf_cols.len()).then_some(loss_cols.len());

    let mut rounds: Vec<Vec<TraceRow>> = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::ingestion(path, e.to_string()))?;
        let bad = |what: &str| Error::ingestion(path, format!("data row {}: bad {what}", line + 1));
        let num = |name: &str| rec.get(idx[name]).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| bad(name));
        let int = |name: &str| rec.get(idx[name]).and_then(|s| s.parse::<usize>().ok()).ok_or_else(|| bad(name));
        let vec_of = |cols: &[usize], what: &str| -> Result<Vec<f64>> {
            cols.iter().map(|&c| rec.get(c).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| bad(what))).collect()
        };
        let row = TraceRow {
            round: int("round")?,
            node: int("node")?,
            sample_row: int("sample_row")?,
            label: num("label")?,
            prediction: num("prediction")?,
            loss: num("loss")?,
            selected_kernel: int("selected_kernel")?,
            kernel_losses: kernels.map(|_| vec_of(&loss_cols, "kernel loss")).transpose()?,
            pmf: kernels.map(|_| vec_of(&pmf_cols, "pmf")).transpose()?,
        };
        if row.round == 0 || row.round > rounds.len() + 1 {
            return Err(bad("round order"));
        }
        if row.round > rounds.len() {
            rounds.push(Vec::new());
        }
        rounds[row.round - 1].push(row);
    }
    if rounds.is_empty() {
        return Err(Error::ingestion(path, "trace has no rows"));
    }
    Ok(TraceTable { kernels, rounds })
}
