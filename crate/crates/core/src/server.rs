//! Server-side aggregation: FedAvg over uploaded models and the count-power
//! rule that picks the next global kernel from the node proposals.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::edge_node::{DownlinkMessage, FullExchange, UplinkMessage};
use crate::error::{Error, Result};
use crate::math;
use crate::objective::ModelParams;
use crate::rng::{substream, Domain};

/// Coordinate-wise arithmetic mean of the given models.
pub fn fedavg<'a>(models: impl IntoIterator<Item = &'a ModelParams>) -> Result<ModelParams> {
    let mut iter = models.into_iter();
    let first = iter.next().ok_or_else(|| Error::protocol("cannot average an empty set of models"))?;
    let mut sum = first.as_slice().to_vec();
    let mut count = 1usize;
    for m in iter {
        if m.len() != sum.len() {
            return Err(Error::protocol(format!(
                "ragged models: expected length {}, got {}",
                sum.len(),
                m.len()
            )));
        }
        sum.iter_mut().zip(m.as_slice()).for_each(|(s, v)| *s += v);
        count += 1;
    }
    let inv = 1.0 / count as f64;
    sum.iter_mut().for_each(|s| *s *= inv);
    Ok(ModelParams::from_vec(sum))
}

/// Number of nodes proposing each kernel.
pub fn proposal_counts(proposals: &[usize], num_kernels: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; num_kernels];
    for &p in proposals {
        *counts
            .get_mut(p)
            .ok_or_else(|| Error::protocol(format!("proposal {} outside dictionary of size {num_kernels}", p + 1)))? += 1;
    }
    Ok(counts)
}

/// Distribution of the next global kernel: `c_p^K / Σ_q c_q^K`, where `c_p`
/// counts the nodes proposing `p` and `K` is the number of proposals.
///
/// This is the kernel-level view of picking node `k` with weight
/// `α_k = c_{p̂_k}^{K-1} / Σ_q c_q^K`. Evaluated in the log domain since
/// `c^K` overflows quickly.
pub fn count_power_pmf(proposals: &[usize], num_kernels: usize) -> Result<Vec<f64>> {
    if proposals.is_empty() {
        return Err(Error::protocol("no kernel proposals to aggregate"));
    }
    let k = proposals.len() as f64;
    let logs: Vec<f64> = proposal_counts(proposals, num_kernels)?
        .into_iter()
        .map(|c| if c == 0 { f64::NEG_INFINITY } else { k * (c as f64).ln() })
        .collect();
    Ok(math::softmax(&logs))
}

/// Node weights `α_k = c_{p̂_k}^{K-1} / Σ_q c_q^K`.
pub fn node_weights(proposals: &[usize], num_kernels: usize) -> Result<Vec<f64>> {
    if proposals.is_empty() {
        return Err(Error::protocol("no kernel proposals to aggregate"));
    }
    let k = proposals.len() as f64;
    let counts = proposal_counts(proposals, num_kernels)?;
    let denom: Vec<f64> = counts.iter().filter(|&&c| c > 0).map(|&c| k * (c as f64).ln()).collect();
    let log_denom = math::logsumexp(&denom);
    Ok(proposals
        .iter()
        .map(|&p| ((k - 1.0) * (counts[p] as f64).ln() - log_denom).exp())
        .collect())
}

/// Draws the next global kernel from the count-power distribution.
pub fn aggregate_indices<R: Rng + ?Sized>(proposals: &[usize], num_kernels: usize, rng: &mut R) -> Result<usize> {
    let pmf = count_power_pmf(proposals, num_kernels)?;
    Ok(math::sample_index(&pmf, rng.random()))
}

/// Server state: the global model `ŵ_t`, the kernel `p̂_t` it belongs to,
/// and the already chosen kernel `p̂_{t+1}` for the next round.
#[derive(Debug, Clone)]
pub struct GlobalState {
    global_model: ModelParams,
    current_index: usize,
    next_index: usize,
    num_kernels: usize,
    rng: ChaCha8Rng,
}

impl GlobalState {
    /// `ŵ_1 = 0` and `p̂_1 = p̂_2` = the first kernel.
    pub fn new(num_kernels: usize, model_len: usize, seed: u64) -> Self {
        Self {
            global_model: ModelParams::zeros(model_len),
            current_index: 0,
            next_index: 0,
            num_kernels,
            rng: substream(seed, Domain::Server, 0),
        }
    }

    pub fn global_model(&self) -> &ModelParams {
        &self.global_model
    }

    pub fn current_index(&self) -> usize {
        self.current_index
    }

    pub fn next_index(&self) -> usize {
        self.next_index
    }

    /// Broadcast for the current round: `(p̂_{t+1}, ŵ_t)`.
    pub fn downlink(&self) -> DownlinkMessage {
        DownlinkMessage { next_index: self.next_index, global_model: self.global_model.clone() }
    }

    /// Averages the uploaded models into `ŵ_{t+1}`, draws `p̂_{t+2}` from the
    /// proposals and advances the index pipeline.
    pub fn global_round(&mut self, uplinks: &[UplinkMessage], expected_nodes: usize) -> Result<DownlinkMessage> {
        if uplinks.len() != expected_nodes {
            return Err(Error::protocol(format!("expected {expected_nodes} uplinks, received {}", uplinks.len())));
        }
        let model = fedavg(uplinks.iter().map(|u| &u.local_model))?;
        if model.len() != self.global_model.len() {
            return Err(Error::Shape { expected: self.global_model.len(), actual: model.len() });
        }
        let proposals: Vec<usize> = uplinks.iter().map(|u| u.proposal).collect();
        let chosen = aggregate_indices(&proposals, self.num_kernels, &mut self.rng)?;
        self.global_model = model;
        self.current_index = self.next_index;
        self.next_index = chosen;
        Ok(self.downlink())
    }
}

/// Naive extension: average every kernel model and the log-domain weights.
///
/// Averaging the log weights of nodes that each applied `-η_g K ℓ_k` gives
/// `-η_g Σ_k ℓ_k`, i.e. the Hedge update on the pooled losses of all nodes.
pub fn aggregate_full(uplinks: &[FullExchange]) -> Result<FullExchange> {
    let first = uplinks.first().ok_or_else(|| Error::protocol("no uplinks to aggregate"))?;
    let p = first.models.len();
    if uplinks.iter().any(|u| u.models.len() != p || u.log_weights.len() != p) {
        return Err(Error::protocol("uplinks disagree on the dictionary size"));
    }
    let models = (0..p)
        .map(|slot| fedavg(uplinks.iter().map(|u| &u.models[slot])))
        .collect::<Result<Vec<_>>>()?;
    let inv = 1.0 / uplinks.len() as f64;
    let log_weights = (0..p)
        .map(|slot| uplinks.iter().map(|u| u.log_weights[slot]).sum::<f64>() * inv)
        .collect();
    Ok(FullExchange { models, log_weights })
}
