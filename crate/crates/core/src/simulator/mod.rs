//! Deterministic discrete-event simulation of federated training.
//!
//! Time is measured in units of the mean client training time. The
//! asynchronous engine keeps `M` clients training at all times and feeds
//! each finished update to the server buffer; the synchronous engine runs
//! rounds of `ceil(f * M)` selected clients and keeps the fastest `M`.
//!
//! Randomness comes from four independent streams forked off the run seed:
//! client sampling, training durations, and one stream per dispatched client
//! for local shuffling. The `n`-th dispatched client uses the same local
//! stream in both engines, which is what makes FedBuff with `K = M` and
//! simultaneous constant-length training reproduce FedAvg exactly.

mod async_run;
mod events;
mod sync_run;

pub use async_run::run_async;
pub use events::{EventKind, EventQueue, Finished, SimEvent};
pub use sync_run::run_sync;

use crate::datagen::{ClientDataset, Example};
use crate::error::{Error, Result};
use crate::harness::metrics::{MetricsLog, MetricsRow, RunOutcome, UpdateCounts};
use crate::models::Architecture;
use crate::numkit::{DenseVec, DurationDist, PrngStream};
use crate::server::ServerState;

/// Loss blow-up factor, relative to the initial eval loss, that ends a run.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// `M`: clients training at once (async) or aggregated per round (sync).
    pub concurrency: usize,
    pub duration: DurationDist,
    pub budget_updates: u64,
    /// Bounded delay; stale updates beyond it are dropped.
    pub tau_max: Option<u64>,
    /// Sync only: select `ceil(f * M)` clients and keep the fastest `M`.
    pub overselection: f64,
    pub eval_every: f64,
    pub seed: u64,
    /// Async only: the `i`-th initial client starts at `i * start_stagger`.
    pub start_stagger: f64,
    /// Multiply each duration by the client's size over the mean size.
    pub duration_scales_with_data: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            concurrency: 100,
            duration: DurationDist::half_normal(),
            budget_updates: 50_000,
            tau_max: None,
            overselection: 1.0,
            eval_every: 1.0,
            seed: 0,
            start_stagger: 0.0,
            duration_scales_with_data: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.concurrency == 0 {
            return Err(Error::config("sim.concurrency must be positive"));
        }
        self.duration.validate()?;
        if !(self.overselection.is_finite() && self.overselection >= 1.0) {
            return Err(Error::config("sim.overselection must be >= 1"));
        }
        if !(self.eval_every.is_finite() && self.eval_every >= 0.0) {
            return Err(Error::config("sim.eval_every must be non-negative"));
        }
        if !(self.start_stagger.is_finite() && self.start_stagger >= 0.0) {
            return Err(Error::config("sim.start_stagger must be non-negative"));
        }
        if self.tau_max == Some(0) {
            return Err(Error::config("sim.tau_max must be positive"));
        }
        Ok(())
    }

    /// Clients selected per synchronous round.
    pub fn selected_per_round(&self) -> usize {
        ((self.overselection * self.concurrency as f64) - 1e-9).ceil() as usize
    }
}

/// Data and model shared by a run.
#[derive(Debug, Clone, Copy)]
pub struct RunContext<'a> {
    pub arch: Architecture,
    pub federation: &'a [ClientDataset],
    pub eval_data: &'a [Example],
    /// Stop as soon as an evaluation reaches this accuracy.
    pub stop_at_accuracy: Option<f64>,
    /// Keep a copy of the global model after every server step.
    pub record_trajectory: bool,
}

impl<'a> RunContext<'a> {
    pub fn new(
        arch: Architecture,
        federation: &'a [ClientDataset],
        eval_data: &'a [Example],
    ) -> Self {
        RunContext {
            arch,
            federation,
            eval_data,
            stop_at_accuracy: None,
            record_trajectory: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StalenessCheck {
    Accepted(u64),
    /// Exceeded `tau_max`; the update is dropped.
    Rejected(u64),
}

impl StalenessCheck {
    pub fn tau(self) -> u64 {
        match self {
            StalenessCheck::Accepted(t) | StalenessCheck::Rejected(t) => t,
        }
    }
}

/// `tau = apply_version - pull_version`, with bounded-delay enforcement.
pub fn compute_staleness(
    pull_version: u64,
    apply_version: u64,
    tau_max: Option<u64>,
) -> Result<StalenessCheck> {
    if apply_version < pull_version {
        return Err(Error::Protocol(format!(
            "negative staleness: pulled {pull_version}, applied at {apply_version}"
        )));
    }
    let tau = apply_version - pull_version;
    Ok(match tau_max {
        Some(max) if tau > max => StalenessCheck::Rejected(tau),
        _ => StalenessCheck::Accepted(tau),
    })
}

/// Counts of accepted-update staleness in bins `[i * w, (i + 1) * w)`.
pub fn staleness_histogram(log: &MetricsLog, bin_width: u64) -> Vec<u64> {
    let w = bin_width.max(1);
    let mut bins: Vec<u64> = Vec::new();
    for r in log.updates.iter().filter(|r| r.accepted) {
        let b = (r.tau / w) as usize;
        if b >= bins.len() {
            bins.resize(b + 1, 0);
        }
        bins[b] += 1;
    }
    bins
}

/// Random streams of one run.
pub(crate) struct Streams {
    pub init: PrngStream,
    pub sampler: PrngStream,
    pub durations: PrngStream,
    local: PrngStream,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        let root = PrngStream::new(seed, 0x51A1);
        Streams {
            init: root.fork(0),
            sampler: root.fork(1),
            durations: root.fork(2),
            local: root.fork(3),
        }
    }

    /// Local-training stream of the `n`-th dispatched client.
    pub fn local(&self, n: u64) -> PrngStream {
        self.local.fork(n)
    }
}

/// Uniform draw among clients not flagged busy.
pub(crate) fn draw_available(rng: &mut PrngStream, busy: &[bool]) -> usize {
    loop {
        let c = rng.below(busy.len() as u64) as usize;
        if !busy[c] {
            return c;
        }
    }
}

pub(crate) fn draw_duration(
    cfg: &SimConfig,
    rng: &mut PrngStream,
    client: &ClientDataset,
    mean_size: f64,
) -> f64 {
    let d = cfg.duration.sample(rng);
    if cfg.duration_scales_with_data {
        d * client.len() as f64 / mean_size
    } else {
        d
    }
}

pub(crate) fn check_federation(ctx: &RunContext<'_>, needed: usize) -> Result<()> {
    if ctx.federation.len() < needed {
        return Err(Error::config(format!(
            "federation has {} clients but the run needs {needed} at once",
            ctx.federation.len()
        )));
    }
    if ctx.eval_data.is_empty() {
        return Err(Error::config("evaluation pool is empty"));
    }
    Ok(())
}

/// Evaluation cadence, divergence and early-stop bookkeeping shared by both
/// engines. An evaluation happens after the first server step at or past
/// each multiple of `eval_every`.
pub(crate) struct Monitor<'a> {
    ctx: RunContext<'a>,
    eval_every: f64,
    next_eval: f64,
    initial_loss: f64,
    tau_sum: u64,
    tau_count: u64,
    last_eval_step: u64,
    pub log: MetricsLog,
}

impl<'a> Monitor<'a> {
    pub fn new(ctx: RunContext<'a>, sim: &SimConfig, model0: &DenseVec) -> Result<Self> {
        let mut m = Monitor {
            ctx,
            eval_every: sim.eval_every,
            next_eval: sim.eval_every,
            initial_loss: f64::NAN,
            tau_sum: 0,
            tau_count: 0,
            last_eval_step: 0,
            log: MetricsLog::new(model0.clone()),
        };
        let first = m.evaluate(0.0, 0, model0)?;
        m.initial_loss = first.loss;
        Ok(m)
    }

    pub fn record_tau(&mut self, tau: u64) {
        self.tau_sum += tau;
        self.tau_count += 1;
    }

    fn evaluate(&mut self, time: f64, step: u64, model: &DenseVec) -> Result<MetricsRow> {
        let eval = self
            .ctx
            .arch
            .evaluate(model.as_slice(), self.ctx.eval_data)?;
        let mean_staleness = if self.tau_count == 0 {
            0.0
        } else {
            self.tau_sum as f64 / self.tau_count as f64
        };
        let row = MetricsRow {
            sim_time: time,
            server_step: step,
            client_updates: self.log.counts.total(),
            accuracy: eval.accuracy,
            loss: eval.loss,
            mean_staleness,
            rejected: self.log.counts.rejected,
        };
        self.tau_sum = 0;
        self.tau_count = 0;
        self.last_eval_step = step;
        self.log.rows.push(row);
        Ok(row)
    }

    pub fn counts(&mut self) -> &mut UpdateCounts {
        &mut self.log.counts
    }

    /// Bookkeeping after a server step; `Some(outcome)` ends the run.
    pub fn after_step(&mut self, time: f64, server: &ServerState) -> Result<Option<RunOutcome>> {
        self.log.flushes.push(crate::harness::metrics::FlushRecord {
            sim_time: time,
            server_step: server.step(),
            client_updates: self.log.counts.total(),
        });
        if self.ctx.record_trajectory {
            self.log.trajectory.push(server.model().clone());
        }
        if !server.model().is_finite() {
            return Ok(Some(RunOutcome::Diverged));
        }
        if time < self.next_eval {
            return Ok(None);
        }
        self.next_eval = if self.eval_every > 0.0 {
            ((time / self.eval_every).floor() + 1.0) * self.eval_every
        } else {
            time
        };
        let row = self.evaluate(time, server.step(), server.model())?;
        Ok(self.judge(&row))
    }

    fn judge(&self, row: &MetricsRow) -> Option<RunOutcome> {
        if !row.loss.is_finite() || row.loss > DIVERGENCE_FACTOR * self.initial_loss {
            return Some(RunOutcome::Diverged);
        }
        match self.ctx.stop_at_accuracy {
            Some(target) if row.accuracy >= target => Some(RunOutcome::ReachedTarget),
            _ => None,
        }
    }

    /// Close the log; the final model gets an evaluation row unless its
    /// step was already evaluated.
    pub fn finish(
        mut self,
        time: f64,
        server: ServerState,
        outcome: RunOutcome,
    ) -> Result<MetricsLog> {
        let mut outcome = outcome;
        if outcome == RunOutcome::Completed && server.step() != self.last_eval_step {
            let row = self.evaluate(time, server.step(), server.model())?;
            if let Some(o) = self.judge(&row) {
                outcome = o;
            }
        }
        self.log.outcome = outcome;
        self.log.final_model = server.into_model();
        Ok(self.log)
    }
}
