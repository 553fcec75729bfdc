use std::fmt;

use crate::numkit::DenseVec;

/// One evaluation of the global model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub sim_time: f64,
    pub server_step: u64,
    /// Client updates consumed so far, including discards and rejections.
    pub client_updates: u64,
    pub accuracy: f64,
    pub loss: f64,
    /// Mean staleness of updates accepted since the previous row.
    pub mean_staleness: f64,
    /// Cumulative updates dropped by the bounded-delay policy.
    pub rejected: u64,
}

/// Provenance of one asynchronous client update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateRecord {
    pub client_id: usize,
    pub start_time: f64,
    pub finish_time: f64,
    pub pull_version: u64,
    pub apply_version: u64,
    pub tau: u64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlushRecord {
    pub sim_time: f64,
    /// Server step after the flush.
    pub server_step: u64,
    pub client_updates: u64,
}

/// How the consumed client updates break down.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateCounts {
    /// Async updates inserted into the buffer.
    pub buffered: u64,
    /// Async updates dropped for exceeding `tau_max`.
    pub rejected: u64,
    /// Sync updates aggregated into a round.
    pub aggregated: u64,
    /// Sync stragglers selected by over-selection and thrown away.
    pub discarded: u64,
}

impl UpdateCounts {
    pub fn total(&self) -> u64 {
        self.buffered + self.rejected + self.aggregated + self.discarded
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    /// The update budget was spent.
    Completed,
    /// Stopped early at the configured target accuracy.
    ReachedTarget,
    /// Non-finite parameters or a loss blow-up ended the run.
    Diverged,
}

impl RunOutcome {
    pub fn name(self) -> &'static str {
        match self {
            RunOutcome::Completed => "completed",
            RunOutcome::ReachedTarget => "reached_target",
            RunOutcome::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
    pub updates: Vec<UpdateRecord>,
    pub flushes: Vec<FlushRecord>,
    pub counts: UpdateCounts,
    pub outcome: RunOutcome,
    /// Global model after every server step, when requested.
    pub trajectory: Vec<DenseVec>,
    pub final_model: DenseVec,
    pub metadata: Vec<(String, String)>,
}

impl MetricsLog {
    pub fn new(initial_model: DenseVec) -> Self {
        MetricsLog {
            rows: Vec::new(),
            updates: Vec::new(),
            flushes: Vec::new(),
            counts: UpdateCounts::default(),
            outcome: RunOutcome::Completed,
            trajectory: Vec::new(),
            final_model: initial_model,
            metadata: Vec::new(),
        }
    }

    pub fn last_row(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }
}

/// Result of a time-to-target query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetOutcome<T> {
    Reached(T),
    NotReached,
    Diverged,
}

impl<T: Copy> TargetOutcome<T> {
    pub fn value(&self) -> Option<T> {
        match self {
            TargetOutcome::Reached(v) => Some(*v),
            _ => None,
        }
    }
}

impl<T: fmt::Display> TargetOutcome<T> {
    /// Table rendering; misses show as `>budget`.
    pub fn render(&self, budget: u64) -> String {
        match self {
            TargetOutcome::Reached(v) => v.to_string(),
            TargetOutcome::NotReached => format!(">{budget}"),
            TargetOutcome::Diverged => "diverged".to_string(),
        }
    }
}

fn first_hit(log: &MetricsLog, target: f64) -> Option<&MetricsRow> {
    log.rows.iter().find(|r| r.accuracy >= target)
}

fn miss<T>(log: &MetricsLog) -> TargetOutcome<T> {
    if log.outcome == RunOutcome::Diverged {
        TargetOutcome::Diverged
    } else {
        TargetOutcome::NotReached
    }
}

/// Client updates consumed when accuracy first reached `target`.
pub fn updates_to_target(log: &MetricsLog, target: f64) -> TargetOutcome<u64> {
    first_hit(log, target).map_or_else(|| miss(log), |r| TargetOutcome::Reached(r.client_updates))
}

/// Simulated time at which accuracy first reached `target`.
pub fn wallclock_to_target(log: &MetricsLog, target: f64) -> TargetOutcome<f64> {
    first_hit(log, target).map_or_else(|| miss(log), |r| TargetOutcome::Reached(r.sim_time))
}

/// Server steps taken when accuracy first reached `target`.
pub fn steps_to_target(log: &MetricsLog, target: f64) -> TargetOutcome<u64> {
    first_hit(log, target).map_or_else(|| miss(log), |r| TargetOutcome::Reached(r.server_step))
}
