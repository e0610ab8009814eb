//! Gaussian kernel dictionary and random Fourier feature embeddings.
//!
//! For `κ(x, x') = exp(-‖x - x'‖² / (2σ²))` the spectral density is
//! `N(0, σ⁻² I)`. Each kernel keeps a `D × d` frequency matrix `V` and maps
//! an input to
//!
//! ```text
//! z(x) = D^{-1/2} [sin(v₁ᵀx), …, sin(v_Dᵀx), cos(v₁ᵀx), …, cos(v_Dᵀx)]
//! ```
//!
//! so `‖z(x)‖ = 1` for every `x` and `E_V[z(x)ᵀz(x')] = κ(x, x')`.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::rng::{substream, Domain};

pub const DICTIONARY_FORMAT: &str = "mkofl.dictionary.v1";

/// Bandwidth of dictionary slot `slot` (zero-based): `σ² = 10^(slot - 5)`,
/// which is the conventional `10^(p-6)` for one-based `p`.
pub fn dictionary_bandwidth_sq(slot: usize) -> f64 {
    10f64.powi(slot as i32 - 5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    /// Zero-based dictionary slot.
    pub slot: usize,
    pub bandwidth_sq: f64,
}

impl GaussianKernel {
    pub fn new(slot: usize, bandwidth_sq: f64) -> Result<Self> {
        if !(bandwidth_sq > 0.0 && bandwidth_sq.is_finite()) {
            return Err(Error::config(format!("kernel bandwidth must be positive, got {bandwidth_sq}")));
        }
        Ok(Self { slot, bandwidth_sq })
    }

    /// Closed-form kernel value.
    pub fn eval(&self, x: &[f64], x_prime: &[f64]) -> f64 {
        let dist_sq: f64 = x.iter().zip(x_prime).map(|(a, b)| (a - b).powi(2)).sum();
        (-dist_sq / (2.0 * self.bandwidth_sq)).exp()
    }
}

/// Spectral frequencies for one kernel, stored row-major (`D` rows of
/// length `d`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSample {
    num_features: usize,
    input_dim: usize,
    frequencies: Vec<f64>,
}

impl SpectralSample {
    /// Draws `num_features` i.i.d. frequency rows from `N(0, σ⁻² I_d)`.
    pub fn draw<R: Rng + ?Sized>(kernel: &GaussianKernel, num_features: usize, input_dim: usize, rng: &mut R) -> Self {
        let inv_sigma = kernel.bandwidth_sq.sqrt().recip();
        let frequencies = (0..num_features * input_dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * inv_sigma)
            .collect();
        Self { num_features, input_dim, frequencies }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let num_features = rows.len();
        if num_features == 0 {
            return Err(Error::config("spectral sample needs at least one frequency row"));
        }
        let input_dim = rows[0].len();
        let mut frequencies = Vec::with_capacity(num_features * input_dim);
        for row in rows {
            if row.len() != input_dim {
                return Err(Error::Shape { expected: input_dim, actual: row.len() });
            }
            frequencies.extend_from_slice(row);
        }
        Ok(Self { num_features, input_dim, frequencies })
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.frequencies[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.frequencies.chunks_exact(self.input_dim)
    }

    /// Embedding `z(x)` of length `2D`.
    pub fn feature_map(&self, x: &[f64]) -> Result<FeatureVector> {
        if x.len() != self.input_dim {
            return Err(Error::Shape { expected: self.input_dim, actual: x.len() });
        }
        let d = self.num_features;
        let scale = (d as f64).sqrt().recip();
        let mut z = vec![0.0; 2 * d];
        for (i, v) in self.rows().enumerate() {
            let (s, c) = math::dot(v, x).sin_cos();
            z[i] = s * scale;
            z[d + i] = c * scale;
        }
        Ok(FeatureVector(z))
    }
}

/// Unit-norm random Fourier embedding of one input.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn from_vec(z: Vec<f64>) -> Self {
        Self(z)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        math::norm(&self.0)
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        math::dot(&self.0, other)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// `P` Gaussian kernels with their spectral samples. Shared read-only by
/// every node and the server of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDictionary {
    kernels: Vec<GaussianKernel>,
    samples: Vec<SpectralSample>,
    num_features: usize,
    input_dim: usize,
    seed: u64,
}

/// Builds the `P`-kernel dictionary with `σ_p² = 10^(p-6)`.
///
/// Kernel `p` draws its frequencies from its own substream of `seed`, so a
/// dictionary with a smaller `D` is a row prefix of one with a larger `D`.
pub fn build_dictionary(num_kernels: usize, num_features: usize, input_dim: usize, seed: u64) -> Result<KernelDictionary> {
    let bandwidths: Vec<f64> = (0..num_kernels).map(dictionary_bandwidth_sq).collect();
    KernelDictionary::with_bandwidths(&bandwidths, num_features, input_dim, seed)
}

impl KernelDictionary {
    pub fn with_bandwidths(bandwidths_sq: &[f64], num_features: usize, input_dim: usize, seed: u64) -> Result<Self> {
        if bandwidths_sq.is_empty() {
            return Err(Error::config("kernel dictionary needs P >= 1"));
        }
        if num_features == 0 {
            return Err(Error::config("random feature count D must be >= 1"));
        }
        if input_dim == 0 {
            return Err(Error::config("input dimension d must be >= 1"));
        }
        let mut kernels = Vec::with_capacity(bandwidths_sq.len());
        let mut samples = Vec::with_capacity(bandwidths_sq.len());
        for (slot, &bw) in bandwidths_sq.iter().enumerate() {
            let kernel = GaussianKernel::new(slot, bw)?;
            let mut rng = substream(seed, Domain::Dictionary, slot as u64);
            samples.push(SpectralSample::draw(&kernel, num_features, input_dim, &mut rng));
            kernels.push(kernel);
        }
        Ok(Self { kernels, samples, num_features, input_dim, seed })
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    /// Length of every feature vector and model, `2D`.
    pub fn model_len(&self) -> usize {
        2 * self.num_features
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kernels(&self) -> &[GaussianKernel] {
        &self.kernels
    }

    pub fn kernel(&self, slot: usize) -> &GaussianKernel {
        &self.kernels[slot]
    }

    pub fn sample(&self, slot: usize) -> &SpectralSample {
        &self.samples[slot]
    }

    pub fn bandwidths_sq(&self) -> Vec<f64> {
        self.kernels.iter().map(|k| k.bandwidth_sq).collect()
    }

    pub fn feature_map(&self, slot: usize, x: &[f64]) -> Result<FeatureVector> {
        self.samples
            .get(slot)
            .ok_or_else(|| Error::protocol(format!("kernel slot {slot} outside dictionary of size {}", self.len())))?
            .feature_map(x)
    }

    /// Embeddings of `x` under every kernel, indexed by slot.
    pub fn feature_maps(&self, x: &[f64]) -> Result<Vec<FeatureVector>> {
        self.samples.iter().map(|s| s.feature_map(x)).collect()
    }

    pub fn to_artifact(&self) -> DictionaryArtifact {
        DictionaryArtifact {
            format: DICTIONARY_FORMAT.to_string(),
            seed: self.seed,
            num_features: self.num_features,
            input_dim: self.input_dim,
            kernels: self
                .kernels
                .iter()
                .zip(&self.samples)
                .map(|(k, s)| KernelArtifact {
                    kernel: k.slot + 1,
                    bandwidth_sq: k.bandwidth_sq,
                    frequencies: s.rows().map(<[f64]>::to_vec).collect(),
                })
                .collect(),
        }
    }

    pub fn from_artifact(artifact: &DictionaryArtifact) -> Result<Self> {
        if artifact.format != DICTIONARY_FORMAT {
            return Err(Error::config(format!(
                "unsupported dictionary format {:?} (expected {DICTIONARY_FORMAT})",
                artifact.format
            )));
        }
        if artifact.kernels.is_empty() {
            return Err(Error::config("dictionary artifact has no kernels"));
        }
        let mut kernels = Vec::new();
        let mut samples = Vec::new();
        for (slot, k) in artifact.kernels.iter().enumerate() {
            if k.kernel != slot + 1 {
                return Err(Error::config(format!("kernel numbers must be 1..=P in order, found {} at position {}", k.kernel, slot + 1)));
            }
            let sample = SpectralSample::from_rows(&k.frequencies)?;
            if sample.num_features() != artifact.num_features || sample.input_dim() != artifact.input_dim {
                return Err(Error::config(format!("kernel {} has a {}x{} frequency matrix, expected {}x{}",
                    k.kernel, sample.num_features(), sample.input_dim(), artifact.num_features, artifact.input_dim)));
            }
            kernels.push(GaussianKernel::new(slot, k.bandwidth_sq)?);
            samples.push(sample);
        }
        Ok(Self {
            kernels,
            samples,
            num_features: artifact.num_features,
            input_dim: artifact.input_dim,
            seed: artifact.seed,
        })
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), &self.to_artifact())?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let artifact: DictionaryArtifact = serde_json::from_reader(std::io::BufReader::new(file))?;
        Self::from_artifact(&artifact)
    }
}

/// Versioned on-disk form of a [`KernelDictionary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryArtifact {
    pub format: String,
    pub seed: u64,
    pub num_features: usize,
    pub input_dim: usize,
    pub kernels: Vec<KernelArtifact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelArtifact {
    /// One-based kernel number.
    pub kernel: usize,
    pub bandwidth_sq: f64,
    pub frequencies: Vec<Vec<f64>>,
}
