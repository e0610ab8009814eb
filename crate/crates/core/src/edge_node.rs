//! Per-round behavior of one edge node.
//!
//! A node keeps one local model per dictionary kernel and log-domain Hedge
//! weights over the kernels. Each round it
//!
//! 1. overwrites the model of the globally trained kernel `p̂_t` with the
//!    received global model (all other kernels keep their local models),
//! 2. runs one OGD step on every kernel model, recording the pre-step losses,
//! 3. updates its Hedge weights with `-η_g · K · loss`,
//! 4. samples a kernel proposal from its Hedge distribution,
//! 5. uploads the proposal and its model for the kernel the server paired
//!    with the next global model.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel_features::FeatureVector;
use crate::math;
use crate::objective::{LossConfig, ModelParams};
use crate::rng::{substream, Domain};

/// Server to node broadcast: the kernel for the next round and the current
/// global model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownlinkMessage {
    pub next_index: usize,
    pub global_model: ModelParams,
}

impl DownlinkMessage {
    /// `2D + 1`: the model plus one index.
    pub fn scalar_count(&self) -> usize {
        self.global_model.len() + 1
    }
}

/// Node to server message: the node's kernel proposal and one local model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UplinkMessage {
    pub proposal: usize,
    pub local_model: ModelParams,
}

impl UplinkMessage {
    pub fn scalar_count(&self) -> usize {
        self.local_model.len() + 1
    }
}

/// Full exchange used by the naive multi-kernel extension: every kernel
/// model plus the log-domain weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FullExchange {
    pub models: Vec<ModelParams>,
    pub log_weights: Vec<f64>,
}

impl FullExchange {
    /// `P · 2D + P`.
    pub fn scalar_count(&self) -> usize {
        self.models.iter().map(ModelParams::len).sum::<usize>() + self.log_weights.len()
    }
}

#[derive(Debug, Clone)]
pub struct NodeState {
    id: usize,
    local_models: Vec<ModelParams>,
    log_weights: Vec<f64>,
    last_losses: Vec<f64>,
    pending_proposal: Option<usize>,
    rng: ChaCha8Rng,
}

impl NodeState {
    /// Fresh node with zero models and uniform Hedge weights. Randomness
    /// comes from the node's own substream of `seed`.
    pub fn new(id: usize, num_kernels: usize, model_len: usize, seed: u64) -> Self {
        Self::with_rng(id, num_kernels, model_len, substream(seed, Domain::Node, id as u64))
    }

    pub fn with_rng(id: usize, num_kernels: usize, model_len: usize, rng: ChaCha8Rng) -> Self {
        Self {
            id,
            local_models: vec![ModelParams::zeros(model_len); num_kernels],
            log_weights: vec![0.0; num_kernels],
            last_losses: vec![0.0; num_kernels],
            pending_proposal: None,
            rng,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn num_kernels(&self) -> usize {
        self.local_models.len()
    }

    pub fn local_models(&self) -> &[ModelParams] {
        &self.local_models
    }

    pub fn local_model(&self, slot: usize) -> &ModelParams {
        &self.local_models[slot]
    }

    pub fn set_local_model(&mut self, slot: usize, model: ModelParams) {
        self.local_models[slot] = model;
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn last_losses(&self) -> &[f64] {
        &self.last_losses
    }

    /// Overrides the recorded losses, e.g. to replay a loss sequence through
    /// [`update_hedge`](Self::update_hedge).
    pub fn set_last_losses(&mut self, losses: &[f64]) -> Result<()> {
        if losses.len() != self.num_kernels() {
            return Err(Error::Shape { expected: self.num_kernels(), actual: losses.len() });
        }
        self.last_losses.copy_from_slice(losses);
        Ok(())
    }

    pub fn pending_proposal(&self) -> Option<usize> {
        self.pending_proposal
    }

    /// Hedge distribution `q̂_k` over the kernels.
    pub fn pmf(&self) -> Vec<f64> {
        math::softmax(&self.log_weights)
    }

    fn check_slot(&self, slot: usize) -> Result<()> {
        if slot >= self.num_kernels() {
            return Err(Error::protocol(format!(
                "kernel index {} outside dictionary of size {}",
                slot + 1,
                self.num_kernels()
            )));
        }
        Ok(())
    }

    /// Replaces the model of the globally trained kernel `current_index` by
    /// the received global model. The other kernels keep their local models.
    pub fn apply_downlink(&mut self, msg: &DownlinkMessage, current_index: usize) -> Result<()> {
        self.check_slot(current_index)?;
        self.check_slot(msg.next_index)?;
        let target = &mut self.local_models[current_index];
        if target.len() != msg.global_model.len() {
            return Err(Error::Shape { expected: target.len(), actual: msg.global_model.len() });
        }
        target.clone_from(&msg.global_model);
        Ok(())
    }

    /// One OGD step for every kernel on `(x, y)`, given the embeddings of `x`
    /// under each kernel. Losses are measured before the step and kept for
    /// the Hedge update.
    pub fn local_update(&mut self, features: &[FeatureVector], y: f64, step: f64, loss: &LossConfig) -> Result<&[f64]> {
        if features.len() != self.num_kernels() {
            return Err(Error::Shape { expected: self.num_kernels(), actual: features.len() });
        }
        for ((model, z), last) in self.local_models.iter_mut().zip(features).zip(self.last_losses.iter_mut()) {
            if z.len() != model.len() {
                return Err(Error::Shape { expected: model.len(), actual: z.len() });
            }
            *last = loss.ogd_step_in_place(model, z, y, step);
        }
        Ok(&self.last_losses)
    }

    /// Hedge update `log m(p) -= η_g · K · ℓ_p` with the last recorded
    /// losses (clipped to `[0, 1]` when the loss config asks for it).
    pub fn update_hedge(&mut self, eta_global: f64, num_nodes: usize, loss: &LossConfig) {
        let scale = eta_global * num_nodes as f64;
        for (w, &l) in self.log_weights.iter_mut().zip(&self.last_losses) {
            *w -= scale * loss.hedge_loss(l);
        }
    }

    /// Draws this node's kernel proposal from its Hedge distribution.
    pub fn propose_kernel(&mut self) -> usize {
        let u: f64 = self.rng.random();
        let p = math::sample_index(&self.pmf(), u);
        self.pending_proposal = Some(p);
        p
    }

    /// Uploads the pending proposal with the local model of `next_index`.
    pub fn build_uplink(&self, next_index: usize) -> Result<UplinkMessage> {
        self.check_slot(next_index)?;
        let proposal = self
            .pending_proposal
            .ok_or_else(|| Error::protocol(format!("node {} has no pending kernel proposal", self.id)))?;
        Ok(UplinkMessage { proposal, local_model: self.local_models[next_index].clone() })
    }

    /// Naive extension: adopt every global model and the shared weights.
    pub fn apply_full_downlink(&mut self, msg: &FullExchange) -> Result<()> {
        if msg.models.len() != self.num_kernels() || msg.log_weights.len() != self.num_kernels() {
            return Err(Error::Shape { expected: self.num_kernels(), actual: msg.models.len() });
        }
        self.local_models.clone_from(&msg.models);
        self.log_weights.clone_from(&msg.log_weights);
        Ok(())
    }

    pub fn build_full_uplink(&self) -> FullExchange {
        FullExchange { models: self.local_models.clone(), log_weights: self.log_weights.clone() }
    }
}

/// Prediction `ŵ_tᵀ z_{p̂_t}(x)` of the shared model.
pub fn predict(global_model: &ModelParams, features_for_index: &FeatureVector) -> f64 {
    global_model.predict(features_for_index)
}

/// Hedge-weighted combination `Σ_p q(p) (w^p)ᵀ z_p(x)`.
pub fn predict_mixture(models: &[ModelParams], pmf: &[f64], features: &[FeatureVector]) -> f64 {
    models
        .iter()
        .zip(pmf)
        .zip(features)
        .map(|((w, q), z)| q * w.predict(z))
        .sum()
}
