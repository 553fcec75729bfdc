//! Discrete-event simulation of buffered asynchronous federated learning
//! (FedBuff) together with its synchronous (FedAvg, FedAvgM, FedProx) and
//! asynchronous (FedAsync) baselines.
//!
//! The crate is organised bottom-up:
//!
//! * [`numkit`]: splittable PRNG streams, dense vectors, duration samplers.
//! * [`datagen`]: synthetic non-IID federations and CSV ingestion.
//! * [`models`]: logistic regression and a one-hidden-layer MLP.
//! * [`client`]: local SGD with learning-rate normalization and FedProx.
//! * [`server`]: the secure buffer, staleness weighting and server steps.
//! * [`simulator`]: the async and sync event loops.
//! * [`harness`]: metrics, configs, CSV output, sweeps and the CLI.

pub mod client;
pub mod datagen;
mod error;
pub mod harness;
pub mod models;
pub mod numkit;
pub mod server;
pub mod simulator;

pub use error::{Error, Result};
