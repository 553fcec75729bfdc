//! Experiment orchestration: configs, single runs, sweeps, strategy
//! comparisons, CSV output and the command-line front end.

pub mod cli;
pub mod compare;
pub mod config;
pub mod metrics;
pub mod output;
pub mod sweep;

pub use compare::{run_compare, CompareReport, CompareRow};
pub use config::{ModelKind, RunConfig};
pub use metrics::{
    steps_to_target, updates_to_target, wallclock_to_target, MetricsLog, MetricsRow, RunOutcome,
    TargetOutcome,
};
pub use output::{emit_csv, read_csv};
pub use sweep::{run_points, run_sweep, PointResult, SweepEntry, SweepReport};

use crate::datagen::{
    generate_federation, load_csv_federation, train_eval_split, ClientDataset, Example,
};
use crate::error::{Error, Result};
use crate::models::Architecture;
use crate::simulator::{run_async, run_sync, RunContext};

/// Identifies the binary that produced an output.
pub const BUILD_ID: &str = match option_env!("FEDBUFF_BUILD_ID") {
    Some(id) => id,
    None => env!("CARGO_PKG_VERSION"),
};

/// Training clients, the held-out pool and the model they imply.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub arch: Architecture,
    pub train: Vec<ClientDataset>,
    pub eval: Vec<Example>,
}

/// Build (or load) the federation and split off the evaluation pool.
pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData> {
    let (fed, features, classes) = match &cfg.csv {
        None => (
            generate_federation(&cfg.federation)?,
            cfg.federation.feature_dim,
            cfg.federation.num_classes,
        ),
        Some(src) => {
            let cols: Vec<&str> = src.feature_columns.iter().map(String::as_str).collect();
            let fed = load_csv_federation(&src.path, &cols, &src.label_column, &src.client_column)?;
            let classes = fed
                .iter()
                .flat_map(|c| c.examples.iter().map(|e| e.label + 1))
                .max()
                .unwrap_or(0)
                .max(2);
            (fed, cols.len(), classes)
        }
    };
    let (train, eval) = train_eval_split(&fed, cfg.eval_fraction, cfg.federation.seed)?;
    let arch = match cfg.model {
        ModelKind::Logistic => Architecture::Logistic { features, classes },
        ModelKind::Mlp { hidden } => Architecture::Mlp {
            features,
            hidden,
            classes,
        },
    };
    Ok(PreparedData { arch, train, eval })
}

/// Run one configuration on prepared data. The log's metadata carries the
/// full config, seed, build id and outcome.
pub fn run_prepared(cfg: &RunConfig, data: &PreparedData) -> Result<MetricsLog> {
    cfg.validate()?;
    if cfg.csv.is_some() {
        let needed = if cfg.strategy.kind.is_sync() {
            cfg.sim.selected_per_round()
        } else {
            cfg.sim.concurrency
        };
        if needed > data.train.len() {
            return Err(Error::config(format!(
                "{needed} concurrent clients requested but the federation has {}",
                data.train.len()
            )));
        }
    }
    let mut ctx = RunContext::new(data.arch, &data.train, &data.eval);
    ctx.stop_at_accuracy = cfg.stop_at_target.then_some(cfg.target_accuracy);
    let mut log = if cfg.strategy.kind.is_async() {
        run_async(ctx, &cfg.sim, &cfg.strategy, &cfg.local)?
    } else {
        run_sync(ctx, &cfg.sim, &cfg.strategy, &cfg.local)?
    };
    log.metadata = metadata(cfg, log.outcome);
    Ok(log)
}

/// Prepare data and run.
pub fn run_experiment(cfg: &RunConfig) -> Result<MetricsLog> {
    let data = prepare_data(cfg)?;
    run_prepared(cfg, &data)
}

fn metadata(cfg: &RunConfig, outcome: RunOutcome) -> Vec<(String, String)> {
    let mut meta: Vec<(String, String)> = cfg
        .to_kv()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    meta.push(("run.seed".into(), cfg.sim.seed.to_string()));
    meta.push(("run.build_id".into(), BUILD_ID.to_string()));
    meta.push(("run.outcome".into(), outcome.name().to_string()));
    meta
}
