//! Multiple-kernel online federated learning (MK-OFL).
//!
//! `K` simulated edge nodes learn random-Fourier-feature kernel regressors
//! from streaming data. Every round each node runs online gradient descent
//! for all `P` kernels of a shared Gaussian dictionary, keeps Hedge weights
//! over the kernels and proposes one kernel index to the server. The server
//! averages the uploaded models (FedAvg) and picks the next global kernel
//! from the proposals, so each message carries a single `2D`-vector plus one
//! index regardless of `P`.
//!
//! Kernel indices in this API are zero-based slots into the dictionary
//! (`0` is the narrowest kernel, σ² = 1e-5). Files written by the tooling
//! (CSV, JSON, TOML configs) use the conventional one-based numbering.

pub mod data_pipeline;
pub mod edge_node;
pub mod error;
pub mod evaluation;
pub mod kernel_features;
pub mod math;
pub mod objective;
pub mod orchestrator;
pub mod rng;
pub mod server;
pub mod trace_io;

pub use data_pipeline::{Dataset, DatasetSpec, NodeStreams, Sample};
pub use edge_node::{DownlinkMessage, NodeState, UplinkMessage};
pub use error::{Error, Result};
pub use kernel_features::{build_dictionary, FeatureVector, GaussianKernel, KernelDictionary, SpectralSample};
pub use objective::{LossConfig, ModelParams};
pub use orchestrator::{Algorithm, ExperimentConfig, ExperimentResult, StepSchedule, TraceRecord};
pub use server::GlobalState;
