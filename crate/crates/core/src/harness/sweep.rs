//! Grid and random hyperparameter sweeps.
//!
//! Every point is a full run with its own seed, forked from the base seed by
//! point index. The federation is shared unless a point overrides a
//! `federation.*` or `model.*` key.

use std::path::Path;

use rayon::prelude::*;

use super::config::RunConfig;
use super::metrics::{
    updates_to_target, wallclock_to_target, MetricsLog, RunOutcome, TargetOutcome,
};
use super::output::emit_csv;
use super::{prepare_data, run_prepared, PreparedData};
use crate::error::{Error, Result};
use crate::numkit::PrngStream;

const SEED_STREAM: u64 = 0x5EE0_0001;
const RANDOM_STREAM: u64 = 0x5EE0_0002;

/// `(key, value)` overrides of one sweep point.
pub type Overrides = Vec<(String, String)>;

/// Cartesian product of the grid, crossed with the random samples.
pub fn expand_points(base: &RunConfig) -> Result<Vec<Overrides>> {
    let mut points: Vec<Overrides> = vec![Vec::new()];
    for (key, values) in &base.sweep.grid {
        points = points
            .iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    if !base.sweep.random.is_empty() {
        let root = PrngStream::new(base.sim.seed, RANDOM_STREAM);
        let mut crossed = Vec::with_capacity(points.len() * base.sweep.random_samples);
        for s in 0..base.sweep.random_samples {
            let mut rng = root.fork(s as u64);
            let draws: Overrides = base
                .sweep
                .random
                .iter()
                .map(|(key, r)| {
                    let u = rng.next_unit();
                    let v = if r.log_scale {
                        (r.lo.ln() + u * (r.hi.ln() - r.lo.ln())).exp()
                    } else {
                        r.lo + u * (r.hi - r.lo)
                    };
                    (key.clone(), v.to_string())
                })
                .collect();
            for p in &points {
                let mut q = p.clone();
                q.extend(draws.iter().cloned());
                crossed.push(q);
            }
        }
        points = crossed;
    }
    Ok(points)
}

/// Seed of sweep point `index`.
pub fn point_seed(base_seed: u64, index: usize) -> u64 {
    PrngStream::new(base_seed, SEED_STREAM)
        .fork(index as u64)
        .next_word()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub updates: TargetOutcome<u64>,
    pub wallclock: TargetOutcome<f64>,
    pub final_accuracy: f64,
    pub outcome: RunOutcome,
}

impl PointResult {
    pub fn from_log(log: &MetricsLog, target: f64) -> Self {
        PointResult {
            updates: updates_to_target(log, target),
            wallclock: wallclock_to_target(log, target),
            final_accuracy: log.last_row().map_or(f64::NAN, |r| r.accuracy),
            outcome: log.outcome,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub index: usize,
    pub overrides: Overrides,
    pub seed: u64,
    /// `Err` holds the message of a failed run.
    pub result: std::result::Result<PointResult, String>,
}

impl SweepEntry {
    fn rank_key(&self) -> (u8, u64) {
        match &self.result {
            Ok(r) => match r.updates {
                TargetOutcome::Reached(n) => (0, n),
                TargetOutcome::NotReached => (1, 0),
                TargetOutcome::Diverged => (2, 0),
            },
            Err(_) => (3, 0),
        }
    }
}

/// Entries ranked by updates-to-target; misses, divergences and failures
/// last, ties by point index.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
}

impl SweepReport {
    pub fn best(&self) -> Option<&SweepEntry> {
        self.entries.first()
    }

    pub fn render(&self, budget: u64) -> String {
        let mut out = String::from("rank  point  updates_to_target  final_acc  overrides\n");
        for (rank, e) in self.entries.iter().enumerate() {
            let (updates, acc) = match &e.result {
                Ok(r) => (r.updates.render(budget), format!("{:.4}", r.final_accuracy)),
                Err(msg) => (format!("failed: {msg}"), "-".into()),
            };
            let ov: Vec<String> = e
                .overrides
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            out.push_str(&format!(
                "{:>4}  {:>5}  {:>17}  {:>9}  {}\n",
                rank + 1,
                e.index,
                updates,
                acc,
                ov.join(" ")
            ));
        }
        out
    }
}

/// Run fully-formed configs in parallel; one result per config, in order.
pub fn run_points(
    configs: &[RunConfig],
    shared: Option<&PreparedData>,
    parallelism: usize,
) -> Result<Vec<Result<MetricsLog>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        configs
            .par_iter()
            .map(|cfg| match shared {
                Some(data) => run_prepared(cfg, data),
                None => run_prepared(cfg, &prepare_data(cfg)?),
            })
            .collect()
    }))
}

/// Expand the base config's sweep, run every point and rank the results.
/// Failed points are recorded and do not stop the sweep. With `out_dir`,
/// point `i` writes `point_{i:03}.csv`.
pub fn run_sweep(
    base: &RunConfig,
    out_dir: Option<&Path>,
    parallelism: usize,
) -> Result<SweepReport> {
    let points = expand_points(base)?;
    let mut configs = Vec::with_capacity(points.len());
    let mut setup_errors = Vec::with_capacity(points.len());
    for (i, overrides) in points.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.sim.seed = point_seed(base.sim.seed, i);
        let applied = overrides
            .iter()
            .try_for_each(|(k, v)| cfg.set(k, v))
            .and_then(|()| cfg.validate());
        setup_errors.push(applied.err().map(|e| e.to_string()));
        configs.push(cfg);
    }
    let per_point_data = points
        .iter()
        .flatten()
        .any(|(k, _)| k.starts_with("federation.") || k.starts_with("model."));
    let shared = if per_point_data {
        None
    } else {
        Some(prepare_data(base)?)
    };

    let runnable: Vec<usize> = (0..configs.len())
        .filter(|&i| setup_errors[i].is_none())
        .collect();
    let to_run: Vec<RunConfig> = runnable.iter().map(|&i| configs[i].clone()).collect();
    let logs = run_points(&to_run, shared.as_ref(), parallelism)?;

    let mut results: Vec<std::result::Result<PointResult, String>> = setup_errors
        .into_iter()
        .map(|e| Err(e.unwrap_or_default()))
        .collect();
    for (&i, log) in runnable.iter().zip(logs) {
        results[i] = match log {
            Ok(log) => {
                if let Some(dir) = out_dir {
                    emit_csv(&log, &dir.join(format!("point_{i:03}.csv")))?;
                }
                log::info!("sweep point {i} finished: {}", log.outcome.name());
                Ok(PointResult::from_log(&log, base.target_accuracy))
            }
            Err(e) => {
                log::warn!("sweep point {i} failed: {e}");
                Err(e.to_string())
            }
        };
    }
    let mut entries: Vec<SweepEntry> = points
        .into_iter()
        .zip(configs)
        .zip(results)
        .enumerate()
        .map(|(index, ((overrides, cfg), result))| SweepEntry {
            index,
            overrides,
            seed: cfg.sim.seed,
            result,
        })
        .collect();
    entries.sort_by_key(|e| (e.rank_key(), e.index));
    Ok(SweepReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_cartesian_in_file_order() {
        let cfg = RunConfig::parse(
            "sweep.grid.strategy.eta_global=0.1,1\nsweep.grid.local.eta_local=0.01,0.1,1",
        )
        .unwrap();
        let pts = expand_points(&cfg).unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(
            pts[0][0],
            ("strategy.eta_global".to_string(), "0.1".to_string())
        );
        assert_eq!(pts[0][1].1, "0.01");
        assert_eq!(pts[5][1].1, "1");
    }

    #[test]
    fn random_samples_stay_in_range() {
        let cfg =
            RunConfig::parse("sweep.random.local.eta_local=log:0.001:10\nsweep.random_samples=50")
                .unwrap();
        let pts = expand_points(&cfg).unwrap();
        assert_eq!(pts.len(), 50);
        for p in &pts {
            let v: f64 = p[0].1.parse().unwrap();
            assert!((0.001..=10.0).contains(&v));
        }
        assert_eq!(pts, expand_points(&cfg).unwrap());
    }

    #[test]
    fn empty_sweep_is_one_point() {
        assert_eq!(
            expand_points(&RunConfig::default()).unwrap(),
            vec![Vec::new()]
        );
    }

    #[test]
    fn seeds_differ_per_point() {
        let a = point_seed(7, 0);
        assert_ne!(a, point_seed(7, 1));
        assert_eq!(a, point_seed(7, 0));
    }
}
