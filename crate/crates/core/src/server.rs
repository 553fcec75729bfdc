//! Server-side aggregation.
//!
//! Asynchronous strategies (FedBuff, FedAsync) push each arriving client
//! delta into a [`SecureBuffer`] after discounting it by its staleness; once
//! `K` deltas are buffered the server takes one step and the buffer resets.
//! Synchronous strategies (FedAvg, FedAvgM, FedProx) aggregate a whole
//! zero-staleness cohort at once. Both paths share the same summation and
//! step code, so FedBuff with `K` equal to the cohort size and fresh updates
//! reproduces FedAvg bit for bit.

use std::fmt;
use std::str::FromStr;

use crate::client::ClientUpdate;
use crate::error::{Error, Result};
use crate::numkit::DenseVec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    FedBuff,
    FedAsync,
    FedAvg,
    FedAvgM,
    FedProx,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::FedBuff,
        StrategyKind::FedAsync,
        StrategyKind::FedAvgM,
        StrategyKind::FedAvg,
        StrategyKind::FedProx,
    ];

    pub fn is_async(self) -> bool {
        matches!(self, StrategyKind::FedBuff | StrategyKind::FedAsync)
    }

    pub fn is_sync(self) -> bool {
        !self.is_async()
    }

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::FedBuff => "fedbuff",
            StrategyKind::FedAsync => "fedasync",
            StrategyKind::FedAvg => "fedavg",
            StrategyKind::FedAvgM => "fedavgm",
            StrategyKind::FedProx => "fedprox",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateMode {
    /// Step along the (weighted) sum of buffered deltas.
    Sum,
    /// Step along the sum divided by the number of deltas.
    Mean,
}

impl AggregateMode {
    pub fn name(self) -> &'static str {
        match self {
            AggregateMode::Sum => "sum",
            AggregateMode::Mean => "mean",
        }
    }
}

impl FromStr for AggregateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(AggregateMode::Sum),
            "mean" => Ok(AggregateMode::Mean),
            other => Err(Error::config(format!("unknown aggregate mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// `K`: deltas per server step (1 for FedAsync, cohort size for sync).
    pub buffer_size: usize,
    pub eta_global: f64,
    /// Heavy-ball coefficient; only FedAvgM may set it.
    pub momentum: f64,
    pub staleness_alpha: f64,
    pub aggregate_mode: AggregateMode,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        StrategyConfig {
            kind,
            buffer_size: if kind == StrategyKind::FedAsync {
                1
            } else {
                10
            },
            eta_global: 1.0,
            momentum: if kind == StrategyKind::FedAvgM {
                0.9
            } else {
                0.0
            },
            staleness_alpha: 0.5,
            aggregate_mode: AggregateMode::Sum,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.buffer_size == 0 {
            return Err(Error::config("strategy.buffer_size must be positive"));
        }
        if self.kind == StrategyKind::FedAsync && self.buffer_size != 1 {
            return Err(Error::config(
                "fedasync applies every update: buffer_size must be 1",
            ));
        }
        if !(self.eta_global.is_finite() && self.eta_global > 0.0) {
            return Err(Error::config("strategy.eta_global must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("strategy.momentum must lie in [0, 1)"));
        }
        if self.momentum != 0.0 && self.kind != StrategyKind::FedAvgM {
            return Err(Error::config(format!(
                "strategy.momentum must be 0 for {}",
                self.kind
            )));
        }
        if !(self.staleness_alpha.is_finite() && self.staleness_alpha >= 0.0) {
            return Err(Error::config(
                "strategy.staleness_alpha must be non-negative",
            ));
        }
        Ok(())
    }
}

/// Polynomial staleness discount `(1 + tau)^-alpha`.
pub fn staleness_weight(tau: u64, alpha: f64) -> f64 {
    1.0 / (1.0 + tau as f64).powf(alpha)
}

struct BufferEntry {
    client_id: usize,
    pull_version: u64,
    scaled: DenseVec,
}

/// Accumulator for weighted client deltas. Its running total is never
/// exposed: the only read is [`SecureBuffer::drain_sum`], used by the server
/// when it flushes.
pub struct SecureBuffer {
    entries: Vec<BufferEntry>,
}

impl SecureBuffer {
    fn new() -> Self {
        SecureBuffer {
            entries: Vec::new(),
        }
    }

    fn insert(&mut self, client_id: usize, pull_version: u64, scaled: DenseVec) {
        self.entries.push(BufferEntry {
            client_id,
            pull_version,
            scaled,
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sum of all entries, added in a canonical order so the result does not
    /// depend on arrival order; empties the buffer.
    fn drain_sum(&mut self, dim: usize) -> DenseVec {
        let mut entries = std::mem::take(&mut self.entries);
        entries.sort_by(|a, b| {
            a.client_id
                .cmp(&b.client_id)
                .then(a.pull_version.cmp(&b.pull_version))
                .then_with(|| {
                    let ab = a.scaled.as_slice().iter().map(|v| v.to_bits());
                    let bb = b.scaled.as_slice().iter().map(|v| v.to_bits());
                    ab.cmp(bb)
                })
        });
        let mut sum = DenseVec::zeros(dim);
        for e in &entries {
            for (s, v) in sum.as_mut_slice().iter_mut().zip(e.scaled.as_slice()) {
                *s += v;
            }
        }
        sum
    }
}

pub struct ServerState {
    model: DenseVec,
    buffer: SecureBuffer,
    momentum: DenseVec,
    step: u64,
    total_client_updates: u64,
}

impl ServerState {
    pub fn new(model: DenseVec) -> Self {
        let dim = model.dim();
        ServerState {
            model,
            buffer: SecureBuffer::new(),
            momentum: DenseVec::zeros(dim),
            step: 0,
            total_client_updates: 0,
        }
    }

    pub fn model(&self) -> &DenseVec {
        &self.model
    }

    pub fn into_model(self) -> DenseVec {
        self.model
    }

    /// Server step counter `t`.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Buffered deltas since the last flush (`k`).
    pub fn fill_count(&self) -> usize {
        self.buffer.len()
    }

    /// Whether the buffer holds nothing; reveals no contents.
    pub fn buffer_is_zero(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn momentum(&self) -> &DenseVec {
        &self.momentum
    }

    /// Deltas accepted by [`ServerState::buffer_add`] or aggregated by
    /// [`ServerState::sync_aggregate`].
    pub fn total_client_updates(&self) -> u64 {
        self.total_client_updates
    }

    fn check_delta(&self, update: &ClientUpdate) -> Result<()> {
        if update.delta.dim() != self.model.dim() {
            return Err(Error::DimMismatch {
                expected: self.model.dim(),
                actual: update.delta.dim(),
            });
        }
        Ok(())
    }

    /// Insert `s(tau) * weight * delta` into the buffer, where
    /// `tau = t - pull_version`. Returns `tau`.
    pub fn buffer_add(
        &mut self,
        update: &ClientUpdate,
        weight: f64,
        cfg: &StrategyConfig,
    ) -> Result<u64> {
        if !cfg.kind.is_async() {
            return Err(Error::Protocol(format!(
                "{} does not use the asynchronous buffer",
                cfg.kind
            )));
        }
        if update.pull_version > self.step {
            return Err(Error::Protocol(format!(
                "client {} pulled version {} but the server is at {}",
                update.client_id, update.pull_version, self.step
            )));
        }
        self.check_delta(update)?;
        let tau = self.step - update.pull_version;
        let factor = staleness_weight(tau, cfg.staleness_alpha) * weight;
        self.buffer.insert(
            update.client_id,
            update.pull_version,
            update.delta.scaled(factor),
        );
        self.total_client_updates += 1;
        Ok(tau)
    }

    /// Take a server step if the buffer holds `K` deltas.
    pub fn maybe_flush(&mut self, cfg: &StrategyConfig) -> bool {
        let k = self.buffer.len();
        if k < cfg.buffer_size {
            return false;
        }
        let mut direction = self.buffer.drain_sum(self.model.dim());
        if cfg.aggregate_mode == AggregateMode::Mean {
            direction
                .as_mut_slice()
                .iter_mut()
                .for_each(|v| *v /= k as f64);
        }
        self.apply_step(direction, cfg);
        true
    }

    /// FedAsync: buffer one delta and step immediately.
    pub fn fedasync_apply(
        &mut self,
        update: &ClientUpdate,
        weight: f64,
        cfg: &StrategyConfig,
    ) -> Result<u64> {
        if cfg.kind != StrategyKind::FedAsync {
            return Err(Error::Protocol(format!(
                "fedasync_apply called for {}",
                cfg.kind
            )));
        }
        let tau = self.buffer_add(update, weight, cfg)?;
        let flushed = self.maybe_flush(cfg);
        debug_assert!(flushed);
        Ok(tau)
    }

    /// One synchronous round over a staleness-free cohort. `weights[i]`
    /// scales `updates[i]`.
    pub fn sync_aggregate(
        &mut self,
        updates: &[ClientUpdate],
        weights: &[f64],
        cfg: &StrategyConfig,
    ) -> Result<()> {
        if updates.is_empty() {
            return Err(Error::Protocol("empty synchronous cohort".into()));
        }
        if updates.len() != weights.len() {
            return Err(Error::DimMismatch {
                expected: updates.len(),
                actual: weights.len(),
            });
        }
        if let Some(stale) = updates.iter().find(|u| u.pull_version != self.step) {
            return Err(Error::Protocol(format!(
                "synchronous round at step {} received an update pulled at {}",
                self.step, stale.pull_version
            )));
        }
        let mut round = SecureBuffer::new();
        for (u, &w) in updates.iter().zip(weights) {
            self.check_delta(u)?;
            round.insert(u.client_id, u.pull_version, u.delta.scaled(w));
        }
        let mut direction = round.drain_sum(self.model.dim());
        if cfg.aggregate_mode == AggregateMode::Mean {
            let n = updates.len() as f64;
            direction.as_mut_slice().iter_mut().for_each(|v| *v /= n);
        }
        self.total_client_updates += updates.len() as u64;
        self.apply_step(direction, cfg);
        Ok(())
    }

    fn apply_step(&mut self, direction: DenseVec, cfg: &StrategyConfig) {
        let step_dir = if cfg.momentum > 0.0 {
            for (u, d) in self
                .momentum
                .as_mut_slice()
                .iter_mut()
                .zip(direction.as_slice())
            {
                *u = cfg.momentum * *u + d;
            }
            &self.momentum
        } else {
            &direction
        };
        for (w, d) in self
            .model
            .as_mut_slice()
            .iter_mut()
            .zip(step_dir.as_slice())
        {
            *w -= cfg.eta_global * d;
        }
        self.step += 1;
    }
}
