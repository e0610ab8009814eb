//! Datasets, normalization, AR(s) featurization, per-node stream
//! partitioning and the synthetic kernel-realizable generator.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel_features::{GaussianKernel, SpectralSample};
use crate::math;
use crate::rng::{substream, Domain};

/// One labelled example; `row` is its position in the source dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
    pub row: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizationMeta {
    pub feature_min: Vec<f64>,
    pub feature_max: Vec<f64>,
    pub features_normalized: bool,
    pub label_min: f64,
    pub label_max: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub source: String,
    pub normalization: Option<NormalizationMeta>,
    /// Bandwidth of the generating kernel for synthetic data.
    pub synthetic_bandwidth_sq: Option<f64>,
    pub dropped_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Shape { expected: features.len(), actual: labels.len() });
        }
        if let Some(d) = features.first().map(Vec::len) {
            if let Some(bad) = features.iter().find(|r| r.len() != d) {
                return Err(Error::Shape { expected: d, actual: bad.len() });
            }
        }
        Ok(Self { features, labels, meta: DatasetMeta { source: source.into(), ..DatasetMeta::default() } })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn sample(&self, row: usize) -> Sample {
        Sample { x: self.features[row].clone(), y: self.labels[row], row }
    }
}

/// A CSV column addressed by header name or zero-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl std::fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ColumnRef::Index(i) => write!(f, "#{i}"),
            ColumnRef::Name(n) => write!(f, "{n:?}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub label_column: ColumnRef,
    /// `None` selects every column except the label.
    pub feature_columns: Option<Vec<ColumnRef>>,
    pub delimiter: u8,
    pub has_header: bool,
}

impl CsvOptions {
    pub fn new(label_column: ColumnRef) -> Self {
        Self { label_column, feature_columns: None, delimiter: b',', has_header: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
}

fn resolve_column(col: &ColumnRef, headers: Option<&csv::StringRecord>, width: usize, path: &Path) -> Result<usize> {
    match col {
        ColumnRef::Index(i) if *i < width => Ok(*i),
        ColumnRef::Index(i) => Err(Error::ingestion(path, format!("column #{i} missing (file has {width} columns)"))),
        ColumnRef::Name(name) => headers
            .and_then(|h| h.iter().position(|c| c.trim() == name))
            .ok_or_else(|| Error::ingestion(path, format!("column {name:?} missing"))),
    }
}

fn parse_field(field: Option<&str>) -> Option<f64> {
    field.and_then(|s| s.trim().parse::<f64>().ok()).filter(|v| v.is_finite())
}

/// Reads a numeric CSV. Rows with missing or non-numeric selected fields are
/// dropped and counted in the report.
pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<(Dataset, IngestReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(opts.has_header)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::ingestion(path, e.to_string()))?;
    let headers = if opts.has_header {
        Some(reader.headers().map_err(|e| Error::ingestion(path, e.to_string()))?.clone())
    } else {
        None
    };

    let mut records = reader.records();
    let mut first_record = None;
    let width = match &headers {
        Some(h) => h.len(),
        None => {
            let rec = records
                .next()
                .transpose()
                .map_err(|e| Error::ingestion(path, e.to_string()))?
                .ok_or_else(|| Error::ingestion(path, "file contains no rows"))?;
            let w = rec.len();
            first_record = Some(rec);
            w
        }
    };

    let label_idx = resolve_column(&opts.label_column, headers.as_ref(), width, path)?;
    let feature_idx: Vec<usize> = match &opts.feature_columns {
        Some(cols) => cols
            .iter()
            .map(|c| resolve_column(c, headers.as_ref(), width, path))
            .collect::<Result<_>>()?,
        None => (0..width).filter(|&i| i != label_idx).collect(),
    };

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut report = IngestReport { rows_read: 0, rows_dropped: 0 };
    for rec in first_record.into_iter().map(Ok).chain(records) {
        report.rows_read += 1;
        let Ok(rec) = rec else {
            report.rows_dropped += 1;
            continue;
        };
        let label = parse_field(rec.get(label_idx));
        let row: Option<Vec<f64>> = feature_idx.iter().map(|&i| parse_field(rec.get(i))).collect();
        match (label, row) {
            (Some(y), Some(x)) => {
                features.push(x);
                labels.push(y);
            }
            _ => report.rows_dropped += 1,
        }
    }
    if labels.is_empty() {
        return Err(Error::ingestion(path, "no numeric rows"));
    }
    let mut ds = Dataset::new(features, labels, path.display().to_string())?;
    ds.meta.dropped_rows = report.rows_dropped;
    Ok((ds, report))
}

/// Writes `x1,…,xd,y` with a header row. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::ingestion(path, e.to_string()))?;
    let mut header: Vec<String> = (1..=ds.input_dim()).map(|i| format!("x{i}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for (x, y) in ds.features.iter().zip(&ds.labels) {
        let mut rec: Vec<String> = x.iter().map(f64::to_string).collect();
        rec.push(y.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn rescale(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.0
    }
}

/// Min-max scales every feature column and the label to `[0, 1]`.
/// Constant columns become 0.
pub fn normalize_minmax(ds: &Dataset) -> Dataset {
    normalize(ds, true)
}

/// Min-max scaling of the label, and of the features when `features` is
/// set. The scaling parameters are recorded in the dataset metadata.
pub fn normalize(ds: &Dataset, features: bool) -> Dataset {
    let d = ds.input_dim();
    let (label_min, label_max) = min_max(ds.labels.iter().copied());
    let (feature_min, feature_max): (Vec<f64>, Vec<f64>) =
        (0..d).map(|j| min_max(ds.features.iter().map(|r| r[j]))).unzip();
    let labels = ds.labels.iter().map(|&y| rescale(y, label_min, label_max)).collect();
    let rows = if features {
        ds.features
            .iter()
            .map(|r| r.iter().enumerate().map(|(j, &v)| rescale(v, feature_min[j], feature_max[j])).collect())
            .collect()
    } else {
        ds.features.clone()
    };
    let mut meta = ds.meta.clone();
    meta.normalization = Some(NormalizationMeta {
        feature_min,
        feature_max,
        features_normalized: features,
        label_min,
        label_max,
    });
    Dataset { features: rows, labels, meta }
}

/// AR(s) examples from a series: `x_t = [y_{t-1}, …, y_{t-s}]`, label `y_t`,
/// for `t = s, …, n-1`. The example's `row` is `t`.
pub fn ar_featurize(series: &[f64], order: usize) -> Result<Dataset> {
    if order == 0 {
        return Err(Error::config("AR order s must be >= 1"));
    }
    if series.len() <= order {
        return Err(Error::config(format!(
            "series of length {} is too short for AR({order}); need more than {order} values",
            series.len()
        )));
    }
    let features = (order..series.len()).map(|t| (1..=order).map(|lag| series[t - lag]).collect()).collect();
    let labels = series[order..].to_vec();
    let mut ds = Dataset::new(features, labels, format!("AR({order})"))?;
    ds.meta.source = format!("AR({order}) of {} values", series.len());
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionPolicy {
    /// Shuffle rows once with the data seed, then interleave.
    Shuffled,
    /// Keep row order (time series), then interleave.
    Ordered,
}

/// `K` per-node streams of `T` samples each.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStreams {
    streams: Vec<Vec<Sample>>,
}

impl NodeStreams {
    pub fn from_streams(streams: Vec<Vec<Sample>>) -> Result<Self> {
        let t = streams.first().map_or(0, Vec::len);
        if streams.is_empty() || streams.iter().any(|s| s.len() != t) {
            return Err(Error::config("node streams must be non-empty and of equal length"));
        }
        Ok(Self { streams })
    }

    pub fn num_nodes(&self) -> usize {
        self.streams.len()
    }

    pub fn rounds(&self) -> usize {
        self.streams[0].len()
    }

    pub fn stream(&self, node: usize) -> &[Sample] {
        &self.streams[node]
    }

    /// Samples of all nodes at zero-based round `t`.
    pub fn round(&self, t: usize) -> Vec<&Sample> {
        self.streams.iter().map(|s| &s[t]).collect()
    }

    /// All samples in round-major order `(t, k)`.
    pub fn round_major(&self) -> impl Iterator<Item = &Sample> {
        (0..self.rounds()).flat_map(move |t| self.streams.iter().map(move |s| &s[t]))
    }
}

/// Splits a dataset into `K` streams of length `T`: after the optional
/// shuffle, row `t·K + k` goes to node `k` at round `t` (zero-based).
pub fn partition(ds: &Dataset, num_nodes: usize, rounds: usize, policy: PartitionPolicy, seed: u64) -> Result<NodeStreams> {
    if num_nodes == 0 || rounds == 0 {
        return Err(Error::config("partition needs K >= 1 and T >= 1"));
    }
    let needed = num_nodes * rounds;
    if ds.len() < needed {
        return Err(Error::config(format!(
            "dataset has {} rows but K*T = {num_nodes}*{rounds} = {needed} are needed; maximal feasible T is {}",
            ds.len(),
            ds.len() / num_nodes
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    if policy == PartitionPolicy::Shuffled {
        order.shuffle(&mut substream(seed, Domain::Data, 1));
    }
    let mut streams = vec![Vec::with_capacity(rounds); num_nodes];
    for (i, &row) in order.iter().take(needed).enumerate() {
        streams[i % num_nodes].push(ds.sample(row));
    }
    Ok(NodeStreams { streams })
}

/// Ground-truth function for synthetic data: a high-dimensional random
/// Fourier model `w*ᵀz*(x)` of one Gaussian kernel.
///
/// With `centers = m > 0` the weights are `w* = Σ_j a_j z*(c_j)` for random
/// centers `c_j ~ U[0,1]^d` and amplitudes `a_j ~ U[0.5, 1]`, so the latent is
/// a sum of `m` nonnegative kernel bumps on a zero baseline. With
/// `centers = 0` the entries of `w*` are standard normal and the latent has
/// roughly unit variance around zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub bandwidth_sq: f64,
    pub samples: usize,
    pub input_dim: usize,
    pub noise_sd: f64,
    pub centers: usize,
    /// Multiplier on the latent `w*ᵀz*(x)`.
    pub signal_scale: f64,
    pub offset: f64,
    pub seed: u64,
}

pub const SYNTH_TARGET_FEATURES: usize = 512;

impl SynthSpec {
    pub fn new(bandwidth_sq: f64, samples: usize, input_dim: usize, noise_sd: f64, seed: u64) -> Self {
        Self {
            bandwidth_sq,
            samples,
            input_dim,
            noise_sd,
            centers: default_centers(),
            signal_scale: default_scale(),
            offset: default_offset(),
            seed,
        }
    }
}

/// Noise-free target function of a synthetic spec.
#[derive(Debug, Clone)]
pub struct SynthTarget {
    sample: SpectralSample,
    weights: Vec<f64>,
    scale: f64,
    offset: f64,
}

impl SynthTarget {
    pub fn new(spec: &SynthSpec) -> Result<Self> {
        let kernel = GaussianKernel::new(0, spec.bandwidth_sq)?;
        let mut rng = substream(spec.seed, Domain::SyntheticTarget, 0);
        let sample = SpectralSample::draw(&kernel, SYNTH_TARGET_FEATURES, spec.input_dim, &mut rng);
        let weights = if spec.centers == 0 {
            (0..2 * SYNTH_TARGET_FEATURES).map(|_| rng.sample(StandardNormal)).collect()
        } else {
            let mut w = vec![0.0; 2 * SYNTH_TARGET_FEATURES];
            for _ in 0..spec.centers {
                let c: Vec<f64> = (0..spec.input_dim).map(|_| rng.random::<f64>()).collect();
                let a = rng.random_range(0.5..=1.0);
                let z = sample.feature_map(&c)?;
                w.iter_mut().zip(z.as_slice()).for_each(|(wi, zi)| *wi += a * zi);
            }
            w
        };
        Ok(Self { sample, weights, scale: spec.signal_scale, offset: spec.offset })
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let z = self.sample.feature_map(x)?;
        Ok(self.offset + self.scale * math::dot(&self.weights, z.as_slice()))
    }
}

/// Draws `x ~ U[0,1]^d` and `y = clip(offset + scale·w*ᵀz*(x) + noise, 0, 1)`.
pub fn synth_generate(spec: &SynthSpec) -> Result<Dataset> {
    if !(spec.bandwidth_sq > 0.0) {
        return Err(Error::config("synthetic bandwidth must be positive"));
    }
    if spec.input_dim == 0 {
        return Err(Error::config("synthetic input dimension must be >= 1"));
    }
    if spec.noise_sd < 0.0 {
        return Err(Error::config("noise standard deviation must be >= 0"));
    }
    let target = SynthTarget::new(spec)?;
    let mut rng = substream(spec.seed, Domain::Data, 0);
    let mut features = Vec::with_capacity(spec.samples);
    let mut labels = Vec::with_capacity(spec.samples);
    for _ in 0..spec.samples {
        let x: Vec<f64> = (0..spec.input_dim).map(|_| rng.random::<f64>()).collect();
        let noise = spec.noise_sd * rng.sample::<f64, _>(StandardNormal);
        labels.push((target.eval(&x)? + noise).clamp(0.0, 1.0));
        features.push(x);
    }
    let mut ds = Dataset::new(features, labels, format!("synthetic(sigma^2={})", spec.bandwidth_sq))?;
    ds.meta.synthetic_bandwidth_sq = Some(spec.bandwidth_sq);
    Ok(ds)
}

fn default_delimiter() -> char {
    ','
}

fn default_true() -> bool {
    true
}

fn default_ar_order() -> usize {
    5
}

fn default_noise() -> f64 {
    0.1
}

fn default_scale() -> f64 {
    0.5
}

fn default_offset() -> f64 {
    0.0
}

fn default_centers() -> usize {
    2
}

/// Data seed of the reference synthetic task.
pub const DEFAULT_SYNTH_SEED: u64 = 3;

fn default_synth_seed() -> u64 {
    DEFAULT_SYNTH_SEED
}

fn default_input_dim() -> usize {
    1
}

/// Declarative description of where an experiment's samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic {
        /// Generating bandwidth σ*²; alternatively `kernel` picks the
        /// bandwidth of one-based dictionary kernel `p`.
        #[serde(default)]
        bandwidth_sq: Option<f64>,
        #[serde(default)]
        kernel: Option<usize>,
        /// Row count; defaults to `K·T`.
        #[serde(default)]
        samples: Option<usize>,
        #[serde(default = "default_input_dim")]
        input_dim: usize,
        #[serde(default = "default_noise")]
        noise_sd: f64,
        #[serde(default = "default_centers")]
        centers: usize,
        #[serde(default = "default_scale")]
        signal_scale: f64,
        #[serde(default = "default_offset")]
        offset: f64,
        #[serde(default = "default_synth_seed")]
        seed: u64,
    },
    Csv {
        path: PathBuf,
        label_column: ColumnRef,
        #[serde(default)]
        feature_columns: Option<Vec<ColumnRef>>,
        #[serde(default = "default_delimiter")]
        delimiter: char,
        #[serde(default = "default_true")]
        has_header: bool,
        #[serde(default = "default_true")]
        normalize_features: bool,
        #[serde(default = "default_true")]
        shuffle: bool,
        #[serde(default)]
        seed: u64,
    },
    TimeSeries {
        path: PathBuf,
        column: ColumnRef,
        #[serde(default = "default_ar_order")]
        ar_order: usize,
        #[serde(default = "default_delimiter")]
        delimiter: char,
        #[serde(default = "default_true")]
        has_header: bool,
        #[serde(default)]
        seed: u64,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic {
            bandwidth_sq: None,
            kernel: Some(4),
            samples: None,
            input_dim: default_input_dim(),
            noise_sd: default_noise(),
            centers: default_centers(),
            signal_scale: default_scale(),
            offset: default_offset(),
            seed: DEFAULT_SYNTH_SEED,
        }
    }
}

/// A dataset ready for partitioning.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: Dataset,
    pub policy: PartitionPolicy,
    pub report: Option<IngestReport>,
}

fn delimiter_byte(c: char) -> Result<u8> {
    u8::try_from(c).map_err(|_| Error::config(format!("delimiter {c:?} is not a single-byte character")))
}

impl DatasetSpec {
    /// Seed of the data substreams (shuffling, synthetic draws).
    pub fn seed(&self) -> u64 {
        match self {
            DatasetSpec::Synthetic { seed, .. } | DatasetSpec::Csv { seed, .. } | DatasetSpec::TimeSeries { seed, .. } => *seed,
        }
    }

    pub fn path(&self) -> Option<&Path> {
        match self {
            DatasetSpec::Synthetic { .. } => None,
            DatasetSpec::Csv { path, .. } | DatasetSpec::TimeSeries { path, .. } => Some(path),
        }
    }

    pub fn set_path(&mut self, new_path: PathBuf) -> Result<()> {
        match self {
            DatasetSpec::Synthetic { .. } => Err(Error::config("synthetic datasets have no path")),
            DatasetSpec::Csv { path, .. } | DatasetSpec::TimeSeries { path, .. } => {
                *path = new_path;
                Ok(())
            }
        }
    }

    /// Generating bandwidth, for synthetic data.
    pub fn synthetic_bandwidth_sq(&self) -> Result<Option<f64>> {
        match self {
            DatasetSpec::Synthetic { bandwidth_sq: Some(b), kernel: None, .. } => Ok(Some(*b)),
            DatasetSpec::Synthetic { bandwidth_sq: None, kernel: Some(p), .. } if *p >= 1 => {
                Ok(Some(crate::kernel_features::dictionary_bandwidth_sq(p - 1)))
            }
            DatasetSpec::Synthetic { .. } => {
                Err(Error::config("synthetic dataset needs exactly one of `bandwidth_sq` or `kernel` (>= 1)"))
            }
            _ => Ok(None),
        }
    }

    /// Loads (or generates) and normalizes the data. `default_rows` sizes
    /// synthetic datasets without an explicit row count.
    pub fn load(&self, default_rows: usize) -> Result<LoadedData> {
        match self {
            DatasetSpec::Synthetic { samples, input_dim, noise_sd, centers, signal_scale, offset, seed, .. } => {
                let spec = SynthSpec {
                    bandwidth_sq: self.synthetic_bandwidth_sq()?.expect("synthetic"),
                    samples: samples.unwrap_or(default_rows),
                    input_dim: *input_dim,
                    noise_sd: *noise_sd,
                    centers: *centers,
                    signal_scale: *signal_scale,
                    offset: *offset,
                    seed: *seed,
                };
                Ok(LoadedData { dataset: synth_generate(&spec)?, policy: PartitionPolicy::Shuffled, report: None })
            }
            DatasetSpec::Csv { path, label_column, feature_columns, delimiter, has_header, normalize_features, shuffle, .. } => {
                let opts = CsvOptions {
                    label_column: label_column.clone(),
                    feature_columns: feature_columns.clone(),
                    delimiter: delimiter_byte(*delimiter)?,
                    has_header: *has_header,
                };
                let (raw, report) = load_csv(path, &opts)?;
                let policy = if *shuffle { PartitionPolicy::Shuffled } else { PartitionPolicy::Ordered };
                Ok(LoadedData { dataset: normalize(&raw, *normalize_features), policy, report: Some(report) })
            }
            DatasetSpec::TimeSeries { path, column, ar_order, delimiter, has_header, .. } => {
                let opts = CsvOptions {
                    label_column: column.clone(),
                    feature_columns: Some(Vec::new()),
                    delimiter: delimiter_byte(*delimiter)?,
                    has_header: *has_header,
                };
                let (raw, report) = load_csv(path, &opts)?;
                let scaled = normalize(&raw, false);
                let mut ds = ar_featurize(scaled.labels(), *ar_order)?;
                ds.meta.source = format!("AR({ar_order}) of {}", path.display());
                ds.meta.normalization = scaled.meta.normalization;
                ds.meta.dropped_rows = report.rows_dropped;
                Ok(LoadedData { dataset: ds, policy: PartitionPolicy::Ordered, report: Some(report) })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tmp_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_small_numeric_file() {
        let f = tmp_csv("a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        let (ds, report) = load_csv(f.path(), &CsvOptions::new(ColumnRef::Name("y".into()))).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.features()[1], vec![4.0, 5.0]);
        assert_eq!(ds.labels(), &[3.0, 6.0, 9.0]);
        assert_eq!(report.rows_dropped, 0);
    }

    #[test]
    fn drops_malformed_rows() {
        let mut text = String::from("x,y\n");
        for i in 0..100 {
            if i == 37 {
                text.push_str("oops,1\n");
            } else {
                text.push_str(&format!("{i},{}\n", i * 2));
            }
        }
        let f = tmp_csv(&text);
        let (ds, report) = load_csv(f.path(), &CsvOptions::new(ColumnRef::Index(1))).unwrap();
        assert_eq!(ds.len(), 99);
        assert_eq!(report.rows_dropped, 1);
        assert_eq!(ds.meta.dropped_rows, 1);
    }

    #[test]
    fn missing_fields_are_dropped() {
        let f = tmp_csv("x,y\n1,2\n3\n,4\n5,6\n");
        let (ds, report) = load_csv(f.path(), &CsvOptions::new(ColumnRef::Name("y".into()))).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(report.rows_dropped, 2);
    }

    #[test]
    fn ingestion_errors() {
        let missing = Path::new("/definitely/not/here.csv");
        assert!(matches!(load_csv(missing, &CsvOptions::new(ColumnRef::Index(0))), Err(Error::Ingestion { .. })));
        let f = tmp_csv("x,y\na,b\n");
        assert!(matches!(load_csv(f.path(), &CsvOptions::new(ColumnRef::Index(1))), Err(Error::Ingestion { .. })));
        let f = tmp_csv("x,y\n1,2\n");
        let err = load_csv(f.path(), &CsvOptions::new(ColumnRef::Name("label".into()))).unwrap_err();
        assert!(err.to_string().contains("label"));
    }

    #[test]
    fn headerless_files() {
        let f = tmp_csv("1;2\n3;4\n");
        let opts = CsvOptions { delimiter: b';', has_header: false, ..CsvOptions::new(ColumnRef::Index(0)) };
        let (ds, _) = load_csv(f.path(), &opts).unwrap();
        assert_eq!(ds.labels(), &[1.0, 3.0]);
        assert_eq!(ds.features(), &[vec![2.0], vec![4.0]]);
    }

    #[test]
    fn csv_round_trip() {
        let ds = Dataset::new(
            vec![vec![0.1, 1.0 / 3.0], vec![-2.5e-7, 12345.678901234]],
            vec![std::f64::consts::PI, -0.0],
            "mem",
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(&ds, f.path()).unwrap();
        let (back, _) = load_csv(f.path(), &CsvOptions::new(ColumnRef::Name("y".into()))).unwrap();
        for (a, b) in back.features().iter().flatten().zip(ds.features().iter().flatten()) {
            assert!((a - b).abs() <= 1e-12);
        }
        for (a, b) in back.labels().iter().zip(ds.labels()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn minmax_examples() {
        let ds = Dataset::new(vec![vec![0.0, 7.0], vec![5.0, 7.0], vec![10.0, 7.0]], vec![2.0, 4.0, 3.0], "m").unwrap();
        let n = normalize_minmax(&ds);
        let col0: Vec<f64> = n.features().iter().map(|r| r[0]).collect();
        assert_eq!(col0, vec![0.0, 0.5, 1.0]);
        assert!(n.features().iter().all(|r| r[1] == 0.0));
        assert_eq!(n.labels(), &[0.0, 1.0, 0.5]);
        assert_eq!(normalize_minmax(&n).features(), n.features());
        assert_eq!(normalize_minmax(&n).labels(), n.labels());
        let meta = n.meta.normalization.unwrap();
        assert_eq!((meta.label_min, meta.label_max), (2.0, 4.0));
    }

    #[test]
    fn ar_examples() {
        let ds = ar_featurize(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(ds.features(), &[vec![2.0, 1.0], vec![3.0, 2.0]]);
        assert_eq!(ds.labels(), &[3.0, 4.0]);
        assert_eq!(ar_featurize(&[1.0, 2.0, 3.0], 2).unwrap().len(), 1);
        assert!(matches!(ar_featurize(&[1.0, 2.0], 2), Err(Error::Config(_))));
        assert!(matches!(ar_featurize(&[1.0, 2.0], 0), Err(Error::Config(_))));
    }

    #[test]
    fn partition_interleaves() {
        let ds = Dataset::new((0..4).map(|i| vec![i as f64]).collect(), vec![0.0; 4], "r").unwrap();
        let s = partition(&ds, 2, 2, PartitionPolicy::Ordered, 0).unwrap();
        let rows = |k: usize| s.stream(k).iter().map(|x| x.row).collect::<Vec<_>>();
        assert_eq!(rows(0), vec![0, 2]);
        assert_eq!(rows(1), vec![1, 3]);
    }

    #[test]
    fn single_node_partition_is_the_shuffled_dataset() {
        let ds = Dataset::new((0..10).map(|i| vec![i as f64]).collect(), vec![0.0; 10], "r").unwrap();
        let s = partition(&ds, 1, 10, PartitionPolicy::Shuffled, 3).unwrap();
        let mut rows: Vec<usize> = s.stream(0).iter().map(|x| x.row).collect();
        assert_ne!(rows, (0..10).collect::<Vec<_>>());
        rows.sort_unstable();
        assert_eq!(rows, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn partition_reports_feasible_horizon() {
        let ds = Dataset::new((0..45).map(|i| vec![i as f64]).collect(), vec![0.0; 45], "r").unwrap();
        let err = partition(&ds, 20, 3, PartitionPolicy::Shuffled, 0).unwrap_err();
        assert!(err.to_string().contains("maximal feasible T is 2"), "{err}");
    }

    #[test]
    fn synthetic_labels_in_unit_interval_and_reproducible() {
        let spec = SynthSpec { noise_sd: 0.5, ..SynthSpec::new(0.01, 500, 2, 0.5, 4) };
        let a = synth_generate(&spec).unwrap();
        assert!(a.labels().iter().all(|y| (0.0..=1.0).contains(y)));
        assert_eq!(a, synth_generate(&spec).unwrap());
        assert_eq!(a.meta.synthetic_bandwidth_sq, Some(0.01));
        assert!(synth_generate(&SynthSpec::new(0.0, 5, 1, 0.0, 0)).is_err());
    }

    #[test]
    fn spec_resolves_bandwidth() {
        let spec = DatasetSpec::default();
        assert!((spec.synthetic_bandwidth_sq().unwrap().unwrap() - 1e-2).abs() < 1e-15);
        let both = DatasetSpec::Synthetic {
            bandwidth_sq: Some(1.0),
            kernel: Some(2),
            samples: None,
            input_dim: 1,
            noise_sd: 0.0,
            centers: 0,
            signal_scale: 0.2,
            offset: 0.5,
            seed: 0,
        };
        assert!(both.synthetic_bandwidth_sq().is_err());
    }

    #[test]
    fn time_series_spec_normalizes_then_featurizes() {
        let f = tmp_csv("v\n10\n20\n30\nNA\n40\n50\n");
        let spec = DatasetSpec::TimeSeries {
            path: f.path().to_path_buf(),
            column: ColumnRef::Name("v".into()),
            ar_order: 2,
            delimiter: ',',
            has_header: true,
            seed: 0,
        };
        let loaded = spec.load(0).unwrap();
        assert_eq!(loaded.policy, PartitionPolicy::Ordered);
        assert_eq!(loaded.report.unwrap().rows_dropped, 1);
        assert_eq!(loaded.dataset.len(), 3);
        assert_eq!(loaded.dataset.features()[0], vec![0.25, 0.0]);
        assert_eq!(loaded.dataset.labels()[0], 0.5);
    }
}
