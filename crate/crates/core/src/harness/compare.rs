//! Run every strategy under one federation, seed and timing model.

use std::path::Path;

use super::config::RunConfig;
use super::metrics::{
    steps_to_target, updates_to_target, wallclock_to_target, RunOutcome, TargetOutcome,
};
use super::output::emit_csv;
use super::prepare_data;
use super::sweep::run_points;
use crate::error::Result;
use crate::server::StrategyKind;

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub kind: StrategyKind,
    pub updates: TargetOutcome<u64>,
    pub wallclock: TargetOutcome<f64>,
    pub steps: TargetOutcome<u64>,
    pub final_accuracy: f64,
    pub outcome: RunOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub target_accuracy: f64,
    pub budget: u64,
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    /// Client updates to target per strategy, plus each baseline's ratio
    /// to FedBuff.
    pub fn render(&self) -> String {
        let buff = self
            .rows
            .iter()
            .find(|r| r.kind == StrategyKind::FedBuff)
            .and_then(|r| r.updates.value());
        let mut out = format!(
            "target accuracy {:.3}, budget {} client updates\n{:<10} {:>12} {:>8} {:>12} {:>8} {:>10}  outcome\n",
            self.target_accuracy, self.budget, "strategy", "updates", "ratio", "wallclock", "steps", "final_acc"
        );
        for r in &self.rows {
            let ratio = match (r.updates.value(), buff) {
                (Some(u), Some(b)) if b > 0 => format!("{:.2}x", u as f64 / b as f64),
                _ => "-".into(),
            };
            let wall = match r.wallclock {
                TargetOutcome::Reached(t) => format!("{t:.2}"),
                TargetOutcome::NotReached => "-".into(),
                TargetOutcome::Diverged => "diverged".into(),
            };
            out.push_str(&format!(
                "{:<10} {:>12} {:>8} {:>12} {:>8} {:>10.4}  {}\n",
                r.kind.name(),
                r.updates.render(self.budget),
                ratio,
                wall,
                r.steps.render(self.budget),
                r.final_accuracy,
                r.outcome.name()
            ));
        }
        out
    }
}

/// Run each configured strategy and write `<strategy>.csv` into `out_dir`.
pub fn run_compare(base: &RunConfig, out_dir: &Path, parallelism: usize) -> Result<CompareReport> {
    let configs = base
        .compare
        .kinds
        .iter()
        .map(|&k| base.for_strategy(k))
        .collect::<Result<Vec<_>>>()?;
    let data = prepare_data(base)?;
    let logs = run_points(&configs, Some(&data), parallelism)?;
    let mut rows = Vec::with_capacity(configs.len());
    for (cfg, log) in configs.iter().zip(logs) {
        let log = log?;
        emit_csv(
            &log,
            &out_dir.join(format!("{}.csv", cfg.strategy.kind.name())),
        )?;
        let t = base.target_accuracy;
        rows.push(CompareRow {
            kind: cfg.strategy.kind,
            updates: updates_to_target(&log, t),
            wallclock: wallclock_to_target(&log, t),
            steps: steps_to_target(&log, t),
            final_accuracy: log.last_row().map_or(f64::NAN, |r| r.accuracy),
            outcome: log.outcome,
        });
    }
    Ok(CompareReport {
        target_accuracy: base.target_accuracy,
        budget: base.sim.budget_updates,
        rows,
    })
}
