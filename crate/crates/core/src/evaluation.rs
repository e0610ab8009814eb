//! Metrics and analysis oracles: cumulative MSE, exact best-in-hindsight
//! ridge solutions, regret, the centralized Hedge PMF, selection fractions
//! and the Monte-Carlo martingale check.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel_features::FeatureVector;
use crate::math;
use crate::objective::{LossConfig, ModelParams};

/// Running MSE over rounds and nodes: entry `t` is the mean squared error of
/// all predictions in rounds `burn_in+1 ..= t+1`. Rounds inside the burn-in
/// are `NaN`.
pub fn mse_trace(predictions: &[Vec<f64>], labels: &[Vec<f64>], burn_in: usize) -> Vec<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    predictions
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(t, (pred, lab))| {
            if t < burn_in {
                return f64::NAN;
            }
            sum += pred.iter().zip(lab).map(|(p, y)| (p - y) * (p - y)).sum::<f64>();
            count += pred.len();
            sum / count as f64
        })
        .collect()
}

/// `Σ_i (wᵀz_i - y_i)² + λ‖w‖²` over a batch, i.e. the loss summed per sample.
pub fn cumulative_loss(w: &ModelParams, features: &[FeatureVector], labels: &[f64], lambda: f64) -> f64 {
    let reg = lambda * math::norm_sq(w.as_slice());
    features
        .iter()
        .zip(labels)
        .map(|(z, y)| {
            let r = w.predict(z) - y;
            r * r + reg
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hindsight {
    pub weights: ModelParams,
    /// Cumulative loss of `weights` over the batch.
    pub loss: f64,
    /// First-order stationarity: gradient norm, or the projected-gradient
    /// residual when constrained to a ball.
    pub stationarity: f64,
}

fn design(features: &[FeatureVector]) -> Result<DMatrix<f64>> {
    let m = features.first().map(FeatureVector::len).ok_or_else(|| Error::config("hindsight oracle needs samples"))?;
    if let Some(bad) = features.iter().find(|z| z.len() != m) {
        return Err(Error::Shape { expected: m, actual: bad.len() });
    }
    Ok(DMatrix::from_fn(features.len(), m, |i, j| features[i].as_slice()[j]))
}

/// Exact minimizer of `Σ_i [(wᵀz_i - y_i)² + λ‖w‖²]`, optionally over the
/// ball `‖w‖ ≤ C`.
///
/// With `λ > 0` the normal equations `(ZᵀZ + nλI) w = Zᵀy` are solved by
/// Cholesky. With `λ = 0` the minimum-norm least-squares solution is taken
/// from an SVD of `Z`. On the ball the solution is `(A + μI)⁻¹ b` with the
/// multiplier `μ ≥ 0` found on the eigenbasis of `A`.
pub fn best_hindsight(features: &[FeatureVector], labels: &[f64], lambda: f64, radius: Option<f64>) -> Result<Hindsight> {
    if features.len() != labels.len() {
        return Err(Error::Shape { expected: features.len(), actual: labels.len() });
    }
    if lambda < 0.0 {
        return Err(Error::config("lambda must be >= 0"));
    }
    let z = design(features)?;
    let y = DVector::from_column_slice(labels);
    let m = z.ncols();
    let n = z.nrows() as f64;
    let a = z.tr_mul(&z) + DMatrix::identity(m, m) * (n * lambda);
    let b = z.tr_mul(&y);

    let mut w = if lambda > 0.0 {
        match a.clone().cholesky() {
            Some(chol) => chol.solve(&b),
            None => eigen_solve(&SymmetricEigen::new(a.clone()), &b, 0.0),
        }
    } else {
        let svd = z.clone().svd(true, true);
        let tol = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
        svd.solve(&y, tol).map_err(|e| Error::config(format!("least-squares solve failed: {e}")))?
    };

    let gradient = |w: &DVector<f64>| (&a * w - &b) * 2.0;
    let stationarity = match radius {
        Some(c) if c <= 0.0 => return Err(Error::config("projection radius must be positive")),
        Some(c) if w.norm() > c => {
            let eig = SymmetricEigen::new(a.clone());
            let coef = eig.eigenvectors.tr_mul(&b);
            let norm_at = |mu: f64| {
                coef.iter()
                    .zip(eig.eigenvalues.iter())
                    .map(|(c, s)| (c / (s.max(0.0) + mu)).powi(2))
                    .sum::<f64>()
                    .sqrt()
            };
            let (mut lo, mut hi) = (0.0f64, coef.norm() / c + 1.0);
            for _ in 0..300 {
                let mid = 0.5 * (lo + hi);
                if norm_at(mid) > c {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            w = eigen_solve(&eig, &b, hi);
            let n_w = w.norm();
            if n_w > c {
                w *= c / n_w;
            }
            let step = 0.5 / eig.eigenvalues.max().max(f64::MIN_POSITIVE);
            let mut moved = &w - gradient(&w) * step;
            let n_m = moved.norm();
            if n_m > c {
                moved *= c / n_m;
            }
            (&w - moved).norm() / step
        }
        _ => gradient(&w).norm(),
    };

    let weights = ModelParams::from_vec(w.iter().copied().collect());
    let loss = cumulative_loss(&weights, features, labels, lambda);
    Ok(Hindsight { weights, loss, stationarity })
}

fn eigen_solve(eig: &SymmetricEigen<f64, nalgebra::Dyn>, b: &DVector<f64>, shift: f64) -> DVector<f64> {
    let coef = eig.eigenvectors.tr_mul(b);
    let scaled = DVector::from_iterator(
        coef.len(),
        coef.iter().zip(eig.eigenvalues.iter()).map(|(c, s)| {
            let d = s.max(0.0) + shift;
            if d > 0.0 {
                c / d
            } else {
                0.0
            }
        }),
    );
    &eig.eigenvectors * scaled
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub rounds: usize,
    /// Per-kernel hindsight losses, indexed by dictionary slot.
    pub hindsight_losses: Vec<f64>,
    pub algorithm_loss: f64,
    /// Slot of the comparator kernel.
    pub comparator: usize,
    pub regret: f64,
    pub regret_over_sqrt_t: f64,
    pub regret_over_t: f64,
    /// `algorithm_loss - hindsight_losses[p]` for every slot.
    pub per_kernel_gaps: Vec<f64>,
}

/// Regret against the best kernel in hindsight, or against `fixed_kernel`
/// for single-kernel runs.
pub fn regret(algorithm_loss: f64, hindsight_losses: Vec<f64>, rounds: usize, fixed_kernel: Option<usize>) -> Result<RegretReport> {
    if hindsight_losses.is_empty() {
        return Err(Error::config("regret needs at least one hindsight loss"));
    }
    let comparator = match fixed_kernel {
        Some(p) if p < hindsight_losses.len() => p,
        Some(p) => return Err(Error::config(format!("kernel {} outside dictionary", p + 1))),
        None => hindsight_losses
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("non-empty"),
    };
    let regret = algorithm_loss - hindsight_losses[comparator];
    let t = rounds.max(1) as f64;
    Ok(RegretReport {
        rounds,
        per_kernel_gaps: hindsight_losses.iter().map(|h| algorithm_loss - h).collect(),
        hindsight_losses,
        algorithm_loss,
        comparator,
        regret,
        regret_over_sqrt_t: regret / t.sqrt(),
        regret_over_t: regret / t,
    })
}

/// Network-wide Hedge distribution driven by the losses of all nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralPmfTrace {
    /// `pmfs[t]` has absorbed the losses of rounds `1..=t+1`.
    pub pmfs: Vec<Vec<f64>>,
}

/// Log-domain recursion `log m̄(p) -= η_g(t) Σ_k ℓ_{k,t}(p)` from uniform
/// weights. `kernel_losses[t][k][p]` are the pre-step losses; they pass
/// through the same Hedge clipping as on the nodes.
pub fn centralized_pmf(kernel_losses: &[Vec<Vec<f64>>], eta_global: &[f64], loss: &LossConfig) -> Result<CentralPmfTrace> {
    if kernel_losses.len() != eta_global.len() {
        return Err(Error::Shape { expected: kernel_losses.len(), actual: eta_global.len() });
    }
    let p = kernel_losses.first().and_then(|r| r.first()).map_or(0, Vec::len);
    let mut log_m = vec![0.0; p];
    let mut pmfs = Vec::with_capacity(kernel_losses.len());
    for (round, &eta) in kernel_losses.iter().zip(eta_global) {
        for (slot, lm) in log_m.iter_mut().enumerate() {
            let pooled: f64 = round.iter().map(|node| loss.hedge_loss(node[slot])).sum();
            *lm -= eta * pooled;
        }
        pmfs.push(math::softmax(&log_m));
    }
    Ok(CentralPmfTrace { pmfs })
}

/// Mean over nodes of `TV(q̂_{k,t}, q̄_t)` per round.
pub fn tv_trace(node_pmfs: &[Vec<Vec<f64>>], central: &CentralPmfTrace) -> Vec<f64> {
    node_pmfs
        .iter()
        .zip(&central.pmfs)
        .map(|(nodes, q)| nodes.iter().map(|qk| math::total_variation(qk, q)).sum::<f64>() / nodes.len() as f64)
        .collect()
}

/// Mean of the node PMFs.
pub fn network_pmf(node_pmfs: &[Vec<f64>]) -> Vec<f64> {
    let p = node_pmfs.first().map_or(0, Vec::len);
    let inv = 1.0 / node_pmfs.len() as f64;
    (0..p).map(|i| node_pmfs.iter().map(|q| q[i]).sum::<f64>() * inv).collect()
}

/// Fraction of trials whose selected kernel equals `best` at each round.
pub fn selection_fraction(selected: &[Vec<usize>], best: usize) -> Vec<f64> {
    let rounds = selected.iter().map(Vec::len).min().unwrap_or(0);
    let trials = selected.len() as f64;
    (0..rounds)
        .map(|t| selected.iter().filter(|s| s[t] == best).count() as f64 / trials)
        .collect()
}

/// One node at one round with everything fixed except the kernel draw.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenState {
    pub round: usize,
    pub node: usize,
    pub pmf: Vec<f64>,
    /// The node's per-kernel models at the start of the round, after the
    /// global model replaced the globally trained kernel.
    pub models: Vec<ModelParams>,
    pub features: Vec<FeatureVector>,
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub round: usize,
    pub node: usize,
    pub samples: usize,
    pub mean: f64,
    pub std_dev: f64,
    /// `3σ/√N`.
    pub band: f64,
    pub expected_loss: f64,
}

impl MartingaleReport {
    pub fn within_band(&self) -> bool {
        self.mean.abs() <= self.band
    }
}

/// Monte-Carlo mean of `X = L(w^I ᵀ z_I(x), y) - Σ_p q(p) L(w^pᵀ z_p(x), y)`
/// over `samples` draws `I ~ q`.
pub fn martingale_check<R: Rng + ?Sized>(state: &FrozenState, loss: &LossConfig, samples: usize, rng: &mut R) -> Result<MartingaleReport> {
    let p = state.pmf.len();
    if state.models.len() != p || state.features.len() != p {
        return Err(Error::Shape { expected: p, actual: state.models.len().min(state.features.len()) });
    }
    if samples == 0 {
        return Err(Error::config("martingale check needs at least one sample"));
    }
    let losses: Vec<f64> = state.models.iter().zip(&state.features).map(|(w, z)| loss.loss(w, z, state.label)).collect();
    let expected: f64 = state.pmf.iter().zip(&losses).map(|(q, l)| q * l).sum();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let x = losses[math::sample_index(&state.pmf, rng.random())] - expected;
        sum += x;
        sum_sq += x * x;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = if samples > 1 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    let std_dev = var.sqrt();
    Ok(MartingaleReport {
        round: state.round,
        node: state.node,
        samples,
        mean,
        std_dev,
        band: 3.0 * std_dev / n.sqrt(),
        expected_loss: expected,
    })
}
