//! Round-by-round drivers for SK-OFL, MK-OFL, the naive multi-kernel
//! extension and centralized OMKL, with step-size schedules, seeding and
//! communication accounting.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_pipeline::{partition, DatasetMeta, DatasetSpec, IngestReport, NodeStreams};
use crate::edge_node::{predict_mixture, FullExchange, NodeState, UplinkMessage};
use crate::error::{Error, Result};
use crate::evaluation::{self, FrozenState, RegretReport};
use crate::kernel_features::{build_dictionary, dictionary_bandwidth_sq, FeatureVector, KernelDictionary};
use crate::math;
use crate::objective::{LossConfig, ModelParams};
use crate::rng::trial_seed;
use crate::server::{aggregate_full, fedavg, GlobalState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    SkOfl,
    #[default]
    MkOfl,
    NaiveMk,
    CentralOmkl,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::SkOfl, Algorithm::MkOfl, Algorithm::NaiveMk, Algorithm::CentralOmkl];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::SkOfl => "sk_ofl",
            Algorithm::MkOfl => "mk_ofl",
            Algorithm::NaiveMk => "naive_mk",
            Algorithm::CentralOmkl => "central_omkl",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown algorithm {s:?} (expected sk_ofl, mk_ofl, naive_mk or central_omkl)")))
    }
}

fn one() -> f64 {
    1.0
}

/// Step sizes. `Anytime` uses `η_ℓ = a/√t`, `η_g = g/√t`; `Fixed` uses
/// `a/√T` and `g/√T` for the known horizon `T`. `g` defaults to `ln P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    Anytime {
        #[serde(default = "one")]
        local_scale: f64,
        #[serde(default)]
        global_scale: Option<f64>,
    },
    Fixed {
        #[serde(default = "one")]
        local_scale: f64,
        #[serde(default)]
        global_scale: Option<f64>,
    },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Anytime { local_scale: 1.0, global_scale: None }
    }
}

impl StepSchedule {
    fn scales(&self, num_kernels: usize) -> (f64, f64) {
        let (StepSchedule::Anytime { local_scale, global_scale } | StepSchedule::Fixed { local_scale, global_scale }) = *self;
        (local_scale, global_scale.unwrap_or((num_kernels as f64).ln()))
    }

    fn denominator(&self, t: usize, horizon: usize) -> f64 {
        match self {
            StepSchedule::Anytime { .. } => (t as f64).sqrt(),
            StepSchedule::Fixed { .. } => (horizon as f64).sqrt(),
        }
    }

    /// OGD step at one-based step `t` of `horizon`.
    pub fn local(&self, t: usize, horizon: usize) -> f64 {
        self.scales(1).0 / self.denominator(t, horizon)
    }

    /// Hedge step at one-based step `t` of `horizon`.
    pub fn global(&self, t: usize, horizon: usize, num_kernels: usize) -> f64 {
        self.scales(num_kernels).1 / self.denominator(t, horizon)
    }
}

/// Declarative experiment description. Kernel numbers are one-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    /// Number of edge nodes `K`.
    pub nodes: usize,
    /// Number of rounds `T`.
    pub rounds: usize,
    /// Dictionary size `P`.
    pub kernels: usize,
    /// Per-message scalar budget `r`.
    pub budget: usize,
    /// Explicit `D`; derived from the budget when absent.
    pub num_features: Option<usize>,
    pub lambda: f64,
    pub radius: Option<f64>,
    pub clip_for_hedge: bool,
    pub schedule: StepSchedule,
    /// Algorithm seed (dictionary, nodes, server). Data randomness is seeded
    /// by the dataset spec.
    pub seed: u64,
    pub trials: usize,
    pub dataset: DatasetSpec,
    /// One-based kernel for `sk_ofl`.
    pub sk_kernel: Option<usize>,
    /// Leading rounds excluded from the MSE.
    pub burn_in: usize,
    /// Keep per-kernel losses and PMFs in the trace.
    pub verbose_trace: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::MkOfl,
            nodes: 20,
            rounds: 500,
            kernels: 11,
            budget: 100,
            num_features: None,
            lambda: 0.01,
            radius: None,
            clip_for_hedge: true,
            schedule: StepSchedule::default(),
            seed: 0,
            trials: 50,
            dataset: DatasetSpec::default(),
            sk_kernel: None,
            burn_in: 0,
            verbose_trace: false,
        }
    }
}

impl ExperimentConfig {
    /// `D`: explicit, or `⌊r/2⌋` for SK-OFL and `⌊r/2⌋ - 1` otherwise.
    pub fn num_features(&self) -> usize {
        self.num_features.unwrap_or(match self.algorithm {
            Algorithm::SkOfl => self.budget / 2,
            _ => (self.budget / 2).saturating_sub(1),
        })
    }

    pub fn model_len(&self) -> usize {
        2 * self.num_features()
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig { lambda: self.lambda, radius: self.radius, clip_for_hedge: self.clip_for_hedge }
    }

    /// Zero-based slot of the SK-OFL kernel.
    pub fn sk_slot(&self) -> Result<usize> {
        match self.sk_kernel {
            Some(p) if (1..=self.kernels).contains(&p) => Ok(p - 1),
            Some(p) => Err(Error::config(format!("sk_kernel = {p} outside 1..={}", self.kernels))),
            None => Err(Error::config("sk_ofl needs `sk_kernel` (one-based dictionary index)")),
        }
    }

    /// Scalars one node uploads per round.
    pub fn uplink_scalars_per_node(&self) -> usize {
        let len = self.model_len();
        match self.algorithm {
            Algorithm::SkOfl => len,
            Algorithm::MkOfl => len + 1,
            Algorithm::NaiveMk => self.kernels * len + self.kernels,
            Algorithm::CentralOmkl => 0,
        }
    }

    /// Scalars one node receives per round.
    pub fn downlink_scalars_per_node(&self) -> usize {
        self.uplink_scalars_per_node()
    }

    /// Samples consumed over the whole run.
    pub fn total_samples(&self) -> usize {
        self.nodes * self.rounds
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("nodes", self.nodes), ("rounds", self.rounds), ("kernels", self.kernels), ("trials", self.trials)] {
            if v == 0 {
                return Err(Error::config(format!("`{name}` must be >= 1")));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!("lambda = {} must be finite and >= 0", self.lambda)));
        }
        if let Some(c) = self.radius {
            if !(c > 0.0) {
                return Err(Error::config(format!("radius = {c} must be positive")));
            }
        }
        let (local, global) = self.schedule.scales(self.kernels);
        if !(local > 0.0 && local.is_finite()) || !(global >= 0.0 && global.is_finite()) {
            return Err(Error::config("step-size scales must be finite with local_scale > 0 and global_scale >= 0"));
        }
        if self.burn_in >= self.rounds {
            return Err(Error::config(format!("burn_in = {} leaves no rounds out of {}", self.burn_in, self.rounds)));
        }
        let d = self.num_features();
        if d == 0 {
            return Err(Error::config(format!("budget r = {} leaves no room for features (D = 0)", self.budget)));
        }
        match self.algorithm {
            Algorithm::SkOfl => {
                self.sk_slot()?;
                if 2 * d > self.budget {
                    return Err(Error::config(format!(
                        "D = {d} exceeds the budget: a single-kernel message carries 2D = {} > r = {} scalars",
                        2 * d,
                        self.budget
                    )));
                }
            }
            Algorithm::MkOfl => {
                if 2 * d + 1 > self.budget {
                    return Err(Error::config(format!(
                        "D = {d} exceeds the budget: a multi-kernel message carries 2D + 1 = {} > r = {} scalars",
                        2 * d + 1,
                        self.budget
                    )));
                }
            }
            Algorithm::NaiveMk | Algorithm::CentralOmkl => {}
        }
        self.dataset.synthetic_bandwidth_sq()?;
        Ok(())
    }
}

/// Per-kernel detail of one round, kept when verbose tracing is on.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundDetail {
    /// `kernel_losses[k][p]`: loss of node `k`'s kernel-`p` model before its
    /// OGD step.
    pub kernel_losses: Vec<Vec<f64>>,
    /// `pmfs[k]`: node `k`'s Hedge PMF after this round's update.
    pub pmfs: Vec<Vec<f64>>,
}

/// Metrics of one round. Per-node vectors are indexed by node (or by
/// position within the round for centralized OMKL).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// One-based round.
    pub round: usize,
    pub sample_rows: Vec<usize>,
    pub labels: Vec<f64>,
    pub predictions: Vec<f64>,
    /// Loss of the algorithm's prediction, including the ridge term.
    pub losses: Vec<f64>,
    /// Kernel slot used for the prediction (`p̂_t`; the fixed kernel for
    /// SK-OFL; the Hedge mode for the full-exchange variants).
    pub selected_kernel: usize,
    /// Slot announced for the next round (`p̂_{t+1}`), MK-OFL only.
    pub next_kernel: Option<usize>,
    /// Node proposals, MK-OFL only.
    pub proposals: Vec<usize>,
    pub uplink_scalars: usize,
    pub downlink_scalars: usize,
    /// Cumulative MSE through this round.
    pub mse: f64,
    pub detail: Option<RoundDetail>,
}

impl TraceRecord {
    pub fn squared_errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.predictions.iter().zip(&self.labels).map(|(p, y)| (p - y) * (p - y))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialTrace {
    pub trial: usize,
    pub seed: u64,
    pub records: Vec<TraceRecord>,
    pub frozen: Vec<FrozenState>,
}

impl TrialTrace {
    pub fn terminal_mse(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.mse)
    }

    pub fn algorithm_loss(&self) -> f64 {
        self.records.iter().flat_map(|r| &r.losses).sum()
    }

    pub fn selected(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.selected_kernel).collect()
    }
}

/// Node streams plus provenance, shared by every trial.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub streams: NodeStreams,
    pub input_dim: usize,
    pub meta: DatasetMeta,
    pub report: Option<IngestReport>,
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let loaded = cfg.dataset.load(cfg.total_samples())?;
    let streams = partition(&loaded.dataset, cfg.nodes, cfg.rounds, loaded.policy, cfg.dataset.seed())?;
    Ok(PreparedData {
        streams,
        input_dim: loaded.dataset.input_dim(),
        meta: loaded.dataset.meta,
        report: loaded.report,
    })
}

/// Dictionary slot whose bandwidth generated a synthetic dataset.
pub fn best_kernel(cfg: &ExperimentConfig, meta: &DatasetMeta) -> Option<usize> {
    let target = meta.synthetic_bandwidth_sq?;
    (0..cfg.kernels).find(|&p| ((dictionary_bandwidth_sq(p) - target) / target).abs() < 1e-9)
}

/// Dictionary of a trial.
pub fn trial_dictionary(cfg: &ExperimentConfig, input_dim: usize, trial: usize) -> Result<KernelDictionary> {
    build_dictionary(cfg.kernels, cfg.num_features(), input_dim, trial_seed(cfg.seed, trial as u64))
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub num_features: usize,
    pub best_kernel: Option<usize>,
    pub trials: Vec<TrialTrace>,
    /// Per-round MSE averaged over trials.
    pub mean_mse: Vec<f64>,
    pub selection_fraction: Option<Vec<f64>>,
    pub dataset: DatasetMeta,
    pub ingest: Option<IngestReport>,
}

impl ExperimentResult {
    pub fn terminal_mse(&self) -> f64 {
        self.mean_mse.last().copied().unwrap_or(f64::NAN)
    }

    pub fn total_uplink_scalars(&self) -> usize {
        self.trials[0].records.iter().map(|r| r.uplink_scalars).sum()
    }

    pub fn total_downlink_scalars(&self) -> usize {
        self.trials[0].records.iter().map(|r| r.downlink_scalars).sum()
    }
}

/// Loads the data and runs every trial in parallel.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    run_prepared(cfg, &data, &[])
}

/// Runs all trials on already prepared data. `capture` lists `(round, node)`
/// pairs (one-based round, zero-based node) whose MK-OFL state is frozen
/// into the trial trace (trial 0 only).
pub fn run_prepared(cfg: &ExperimentConfig, data: &PreparedData, capture: &[(usize, usize)]) -> Result<ExperimentResult> {
    cfg.validate()?;
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| run_trial(cfg, data, trial, if trial == 0 { capture } else { &[] }))
        .collect::<Result<Vec<_>>>()?;

    let inv = 1.0 / trials.len() as f64;
    let mean_mse = (0..cfg.rounds).map(|t| trials.iter().map(|tr| tr.records[t].mse).sum::<f64>() * inv).collect();
    let best = best_kernel(cfg, &data.meta);
    let selection_fraction = best.map(|p| {
        let selected: Vec<Vec<usize>> = trials.iter().map(TrialTrace::selected).collect();
        evaluation::selection_fraction(&selected, p)
    });
    Ok(ExperimentResult {
        config: cfg.clone(),
        num_features: cfg.num_features(),
        best_kernel: best,
        trials,
        mean_mse,
        selection_fraction,
        dataset: data.meta.clone(),
        ingest: data.report,
    })
}

/// One trial with its own algorithm seed; the sample streams are shared.
pub fn run_trial(cfg: &ExperimentConfig, data: &PreparedData, trial: usize, capture: &[(usize, usize)]) -> Result<TrialTrace> {
    let seed = trial_seed(cfg.seed, trial as u64);
    let dict = build_dictionary(cfg.kernels, cfg.num_features(), data.input_dim, seed)?;
    let run = Run { cfg, dict: &dict, loss: cfg.loss_config(), streams: &data.streams, seed };
    let (mut records, frozen) = match cfg.algorithm {
        Algorithm::MkOfl => run.mk_ofl(capture)?,
        Algorithm::SkOfl => (run.sk_ofl()?, Vec::new()),
        Algorithm::NaiveMk => (run.naive_mk()?, Vec::new()),
        Algorithm::CentralOmkl => (run.central_omkl()?, Vec::new()),
    };
    let preds: Vec<Vec<f64>> = records.iter().map(|r| r.predictions.clone()).collect();
    let labels: Vec<Vec<f64>> = records.iter().map(|r| r.labels.clone()).collect();
    for (rec, mse) in records.iter_mut().zip(evaluation::mse_trace(&preds, &labels, cfg.burn_in)) {
        rec.mse = mse;
    }
    Ok(TrialTrace { trial, seed, records, frozen })
}

/// Regret of a finished trial against the exact ridge solution of every
/// kernel in its dictionary, fitted on all samples of the run. Single-kernel
/// runs are compared with their own kernel.
pub fn trial_regret(cfg: &ExperimentConfig, data: &PreparedData, trace: &TrialTrace) -> Result<RegretReport> {
    hindsight_regret(cfg, data, trace.trial, trace.algorithm_loss(), trace.records.len())
}

/// [`trial_regret`] for an algorithm loss accumulated over the first
/// `rounds` rounds of trial `trial`.
pub fn hindsight_regret(cfg: &ExperimentConfig, data: &PreparedData, trial: usize, algorithm_loss: f64, rounds: usize) -> Result<RegretReport> {
    if rounds > data.streams.rounds() {
        return Err(Error::config(format!("{rounds} rounds requested but the streams hold {}", data.streams.rounds())));
    }
    let dict = trial_dictionary(cfg, data.input_dim, trial)?;
    let samples: Vec<_> = (0..rounds).flat_map(|t| data.streams.round(t)).collect();
    let labels: Vec<f64> = samples.iter().map(|s| s.y).collect();
    let hindsight = (0..dict.len())
        .into_par_iter()
        .map(|p| {
            let feats = samples.iter().map(|s| dict.feature_map(p, &s.x)).collect::<Result<Vec<_>>>()?;
            Ok(evaluation::best_hindsight(&feats, &labels, cfg.lambda, cfg.radius)?.loss)
        })
        .collect::<Result<Vec<f64>>>()?;
    let fixed = match cfg.algorithm {
        Algorithm::SkOfl => Some(cfg.sk_slot()?),
        _ => None,
    };
    evaluation::regret(algorithm_loss, hindsight, rounds, fixed)
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    dict: &'a KernelDictionary,
    loss: LossConfig,
    streams: &'a NodeStreams,
    seed: u64,
}

struct MkOutcome {
    prediction: f64,
    loss: f64,
    kernel_losses: Vec<f64>,
    pmf: Vec<f64>,
    proposal: usize,
    uplink: UplinkMessage,
    frozen: Option<FrozenState>,
}

struct FullOutcome {
    prediction: f64,
    loss: f64,
    kernel_losses: Vec<f64>,
    pmf: Vec<f64>,
    uplink: FullExchange,
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0))).map_or(0, |(i, _)| i)
}

/// Ridge-inclusive loss of a Hedge mixture prediction.
fn mixture_loss(prediction: f64, y: f64, models: &[ModelParams], pmf: &[f64], lambda: f64) -> f64 {
    let reg: f64 = models.iter().zip(pmf).map(|(w, q)| q * math::norm_sq(w.as_slice())).sum();
    (prediction - y) * (prediction - y) + lambda * reg
}

impl Run<'_> {
    fn base_record(&self, t: usize, selected: usize) -> TraceRecord {
        let samples = self.streams.round(t - 1);
        let k = samples.len();
        TraceRecord {
            round: t,
            sample_rows: samples.iter().map(|s| s.row).collect(),
            labels: samples.iter().map(|s| s.y).collect(),
            predictions: Vec::with_capacity(k),
            losses: Vec::with_capacity(k),
            selected_kernel: selected,
            next_kernel: None,
            proposals: Vec::new(),
            uplink_scalars: k * self.cfg.uplink_scalars_per_node(),
            downlink_scalars: k * self.cfg.downlink_scalars_per_node(),
            mse: f64::NAN,
            detail: None,
        }
    }

    fn mk_ofl(&self, capture: &[(usize, usize)]) -> Result<(Vec<TraceRecord>, Vec<FrozenState>)> {
        let (k, rounds, p) = (self.streams.num_nodes(), self.cfg.rounds, self.cfg.kernels);
        let len = self.dict.model_len();
        let mut nodes: Vec<NodeState> = (0..k).map(|id| NodeState::new(id, p, len, self.seed)).collect();
        let mut server = GlobalState::new(p, len, self.seed);
        let mut records = Vec::with_capacity(rounds);
        let mut frozen = Vec::new();
        for t in 1..=rounds {
            let eta_l = self.cfg.schedule.local(t, rounds);
            let eta_g = self.cfg.schedule.global(t, rounds, p);
            let down = server.downlink();
            let current = server.current_index();
            let samples = self.streams.round(t - 1);
            let outcomes = nodes
                .par_iter_mut()
                .zip(samples.par_iter())
                .map(|(node, sample)| -> Result<MkOutcome> {
                    node.apply_downlink(&down, current)?;
                    let feats = self.dict.feature_maps(&sample.x)?;
                    let frozen = capture.contains(&(t, node.id())).then(|| FrozenState {
                        round: t,
                        node: node.id(),
                        pmf: node.pmf(),
                        models: node.local_models().to_vec(),
                        features: feats.clone(),
                        label: sample.y,
                    });
                    let prediction = down.global_model.predict(&feats[current]);
                    let loss = self.loss.loss_at(prediction, &down.global_model, sample.y);
                    let kernel_losses = node.local_update(&feats, sample.y, eta_l, &self.loss)?.to_vec();
                    node.update_hedge(eta_g, k, &self.loss);
                    let proposal = node.propose_kernel();
                    let uplink = node.build_uplink(down.next_index)?;
                    let pmf = if self.cfg.verbose_trace { node.pmf() } else { Vec::new() };
                    Ok(MkOutcome { prediction, loss, kernel_losses, pmf, proposal, uplink, frozen })
                })
                .collect::<Result<Vec<_>>>()?;

            let mut rec = self.base_record(t, current);
            rec.next_kernel = Some(down.next_index);
            let mut uplinks = Vec::with_capacity(k);
            let mut detail = RoundDetail { kernel_losses: Vec::new(), pmfs: Vec::new() };
            for o in outcomes {
                rec.predictions.push(o.prediction);
                rec.losses.push(o.loss);
                rec.proposals.push(o.proposal);
                uplinks.push(o.uplink);
                frozen.extend(o.frozen);
                if self.cfg.verbose_trace {
                    detail.kernel_losses.push(o.kernel_losses);
                    detail.pmfs.push(o.pmf);
                }
            }
            if self.cfg.verbose_trace {
                rec.detail = Some(detail);
            }
            server.global_round(&uplinks, k)?;
            records.push(rec);
        }
        Ok((records, frozen))
    }

    fn sk_ofl(&self) -> Result<Vec<TraceRecord>> {
        let slot = self.cfg.sk_slot()?;
        let sample = self.dict.sample(slot);
        let rounds = self.cfg.rounds;
        let mut global = ModelParams::zeros(self.dict.model_len());
        let mut records = Vec::with_capacity(rounds);
        for t in 1..=rounds {
            let eta_l = self.cfg.schedule.local(t, rounds);
            let samples = self.streams.round(t - 1);
            let outcomes = samples
                .par_iter()
                .map(|s| -> Result<(f64, f64, ModelParams)> {
                    let z = sample.feature_map(&s.x)?;
                    let prediction = global.predict(&z);
                    let loss = self.loss.loss_at(prediction, &global, s.y);
                    let mut local = global.clone();
                    self.loss.ogd_step_in_place(&mut local, &z, s.y, eta_l);
                    Ok((prediction, loss, local))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut rec = self.base_record(t, slot);
            for (prediction, loss, _) in &outcomes {
                rec.predictions.push(*prediction);
                rec.losses.push(*loss);
            }
            global = fedavg(outcomes.iter().map(|o| &o.2))?;
            records.push(rec);
        }
        Ok(records)
    }

    fn naive_mk(&self) -> Result<Vec<TraceRecord>> {
        let (k, rounds, p) = (self.streams.num_nodes(), self.cfg.rounds, self.cfg.kernels);
        let len = self.dict.model_len();
        let mut nodes: Vec<NodeState> = (0..k).map(|id| NodeState::new(id, p, len, self.seed)).collect();
        let mut global = FullExchange { models: vec![ModelParams::zeros(len); p], log_weights: vec![0.0; p] };
        let mut records = Vec::with_capacity(rounds);
        for t in 1..=rounds {
            let eta_l = self.cfg.schedule.local(t, rounds);
            let eta_g = self.cfg.schedule.global(t, rounds, p);
            let pmf = math::softmax(&global.log_weights);
            let samples = self.streams.round(t - 1);
            let outcomes = nodes
                .par_iter_mut()
                .zip(samples.par_iter())
                .map(|(node, s)| -> Result<FullOutcome> {
                    node.apply_full_downlink(&global)?;
                    let feats = self.dict.feature_maps(&s.x)?;
                    let prediction = predict_mixture(&global.models, &pmf, &feats);
                    let loss = mixture_loss(prediction, s.y, &global.models, &pmf, self.loss.lambda);
                    let kernel_losses = node.local_update(&feats, s.y, eta_l, &self.loss)?.to_vec();
                    node.update_hedge(eta_g, k, &self.loss);
                    let post = if self.cfg.verbose_trace { node.pmf() } else { Vec::new() };
                    Ok(FullOutcome { prediction, loss, kernel_losses, pmf: post, uplink: node.build_full_uplink() })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut rec = self.base_record(t, argmax(&pmf));
            let mut uplinks = Vec::with_capacity(k);
            let mut detail = RoundDetail { kernel_losses: Vec::new(), pmfs: Vec::new() };
            for o in outcomes {
                rec.predictions.push(o.prediction);
                rec.losses.push(o.loss);
                uplinks.push(o.uplink);
                if self.cfg.verbose_trace {
                    detail.kernel_losses.push(o.kernel_losses);
                    detail.pmfs.push(o.pmf);
                }
            }
            if self.cfg.verbose_trace {
                rec.detail = Some(detail);
            }
            global = aggregate_full(&uplinks)?;
            records.push(rec);
        }
        Ok(records)
    }

    /// One learner over the round-major concatenation of all node streams;
    /// the `K` samples of a round are processed one after another.
    fn central_omkl(&self) -> Result<Vec<TraceRecord>> {
        let (k, rounds, p) = (self.streams.num_nodes(), self.cfg.rounds, self.cfg.kernels);
        let horizon = k * rounds;
        let mut learner = NodeState::new(0, p, self.dict.model_len(), self.seed);
        let mut records = Vec::with_capacity(rounds);
        for t in 1..=rounds {
            let mut rec = self.base_record(t, argmax(&learner.pmf()));
            let mut detail = RoundDetail { kernel_losses: Vec::new(), pmfs: Vec::new() };
            for (i, s) in self.streams.round(t - 1).into_iter().enumerate() {
                let step = (t - 1) * k + i + 1;
                let pmf = learner.pmf();
                let feats: Vec<FeatureVector> = self.dict.feature_maps(&s.x)?;
                let prediction = predict_mixture(learner.local_models(), &pmf, &feats);
                rec.losses.push(mixture_loss(prediction, s.y, learner.local_models(), &pmf, self.loss.lambda));
                rec.predictions.push(prediction);
                let kernel_losses = learner.local_update(&feats, s.y, self.cfg.schedule.local(step, horizon), &self.loss)?.to_vec();
                learner.update_hedge(self.cfg.schedule.global(step, horizon, p), 1, &self.loss);
                if self.cfg.verbose_trace {
                    detail.kernel_losses.push(kernel_losses);
                    detail.pmfs.push(learner.pmf());
                }
            }
            if self.cfg.verbose_trace {
                rec.detail = Some(detail);
            }
            records.push(rec);
        }
        Ok(records)
    }
}

/// Per-round `η_g` of a run, as used by the nodes.
pub fn global_steps(cfg: &ExperimentConfig) -> Vec<f64> {
    (1..=cfg.rounds).map(|t| cfg.schedule.global(t, cfg.rounds, cfg.kernels)).collect()
}
