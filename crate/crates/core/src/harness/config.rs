//! Flat `key=value` run configuration.
//!
//! Lines are `section.key=value`; blank lines and `#` comments are ignored.
//! Every key has a default, so a file only lists what it changes. The same
//! keys are accepted by sweep grids and per-strategy compare overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::client::{LocalConfig, LocalMode, Weighting};
use crate::datagen::FederationSpec;
use crate::error::{Error, Result};
use crate::numkit::{DurationDist, DurationKind};
use crate::server::{StrategyConfig, StrategyKind};
use crate::simulator::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Logistic,
    Mlp { hidden: usize },
}

/// Load clients from a CSV file instead of generating them.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSource {
    pub path: PathBuf,
    pub feature_columns: Vec<String>,
    pub label_column: String,
    pub client_column: String,
}

/// `lin:lo:hi` or `log:lo:hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomRange {
    pub log_scale: bool,
    pub lo: f64,
    pub hi: f64,
}

impl FromStr for RandomRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::config(format!("random range `{s}` is not lin:lo:hi or log:lo:hi"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let log_scale = match parts[0] {
            "log" => true,
            "lin" => false,
            _ => return Err(bad()),
        };
        let lo: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[2].trim().parse().map_err(|_| bad())?;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) || (log_scale && lo <= 0.0) {
            return Err(bad());
        }
        Ok(RandomRange { log_scale, lo, hi })
    }
}

impl std::fmt::Display for RandomRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let scale = if self.log_scale { "log" } else { "lin" };
        write!(f, "{scale}:{}:{}", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Cartesian product over these keys, in file order.
    pub grid: Vec<(String, Vec<String>)>,
    pub random: Vec<(String, RandomRange)>,
    pub random_samples: usize,
    pub parallelism: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            grid: Vec::new(),
            random: Vec::new(),
            random_samples: 0,
            parallelism: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSpec {
    pub kinds: Vec<StrategyKind>,
    /// `(kind, key, value)` applied on top of the base config for that kind.
    pub overrides: Vec<(StrategyKind, String, String)>,
}

impl Default for CompareSpec {
    fn default() -> Self {
        CompareSpec {
            kinds: StrategyKind::ALL.to_vec(),
            overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub federation: FederationSpec,
    pub csv: Option<CsvSource>,
    /// Share of each client's examples held out for evaluation.
    pub eval_fraction: f64,
    pub model: ModelKind,
    pub sim: SimConfig,
    pub strategy: StrategyConfig,
    pub local: LocalConfig,
    pub target_accuracy: f64,
    pub stop_at_target: bool,
    pub output: PathBuf,
    pub sweep: SweepSpec,
    pub compare: CompareSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            federation: FederationSpec::default(),
            csv: None,
            eval_fraction: 0.2,
            model: ModelKind::Logistic,
            sim: SimConfig::default(),
            strategy: StrategyConfig::new(StrategyKind::FedBuff),
            local: LocalConfig::default(),
            target_accuracy: 0.8,
            stop_at_target: false,
            output: PathBuf::from("run.csv"),
            sweep: SweepSpec::default(),
            compare: CompareSpec::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(format!(
            "`{key}`: expected true or false, got `{value}`"
        ))),
    }
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

impl RunConfig {
    /// Parse config text on top of the defaults, then validate.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key=value", i + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::config(format!("line {}: {}", i + 1, strip(e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::parse(&text)
            .map_err(|e| Error::config(format!("{}: {}", path.display(), strip(e))))
    }

    /// Set one key. Does not validate cross-field rules.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(rest) = key.strip_prefix("sweep.grid.") {
            let values = list(value);
            if values.is_empty() {
                return Err(Error::config(format!("`{key}` has no values")));
            }
            self.sweep.grid.retain(|(k, _)| k != rest);
            self.sweep.grid.push((rest.to_string(), values));
            return Ok(());
        }
        if let Some(rest) = key.strip_prefix("sweep.random.") {
            let range: RandomRange = value.parse()?;
            self.sweep.random.retain(|(k, _)| k != rest);
            self.sweep.random.push((rest.to_string(), range));
            return Ok(());
        }
        if let Some(rest) = key.strip_prefix("compare.") {
            if rest == "kinds" {
                self.compare.kinds = list(value)
                    .iter()
                    .map(|s| s.parse())
                    .collect::<Result<Vec<_>>>()?;
                return Ok(());
            }
            let (kind, sub) = rest
                .split_once('.')
                .ok_or_else(|| Error::config(format!("unknown key `{key}`")))?;
            let kind: StrategyKind = kind.parse()?;
            // check the override parses against a scratch config
            RunConfig::default().set(sub, value)?;
            self.compare
                .overrides
                .retain(|(k, s, _)| !(*k == kind && s == sub));
            self.compare
                .overrides
                .push((kind, sub.to_string(), value.to_string()));
            return Ok(());
        }

        let f = &mut self.federation;
        let s = &mut self.sim;
        let g = &mut self.strategy;
        let l = &mut self.local;
        match key {
            "federation.num_clients" => f.num_clients = parse(key, value)?,
            "federation.feature_dim" => f.feature_dim = parse(key, value)?,
            "federation.num_classes" => f.num_classes = parse(key, value)?,
            "federation.label_skew_alpha" => f.label_skew_alpha = parse(key, value)?,
            "federation.size_sigma" => f.size_lognormal_sigma = parse(key, value)?,
            "federation.mean_examples" => f.mean_examples_per_client = parse(key, value)?,
            "federation.class_separation" => f.class_separation = parse(key, value)?,
            "federation.seed" => f.seed = parse(key, value)?,
            "federation.eval_fraction" => self.eval_fraction = parse(key, value)?,
            "federation.csv_path" => self.csv_mut().path = PathBuf::from(value),
            "federation.csv_features" => self.csv_mut().feature_columns = list(value),
            "federation.csv_label" => self.csv_mut().label_column = value.to_string(),
            "federation.csv_client" => self.csv_mut().client_column = value.to_string(),
            "model.kind" => {
                self.model = match value {
                    "logistic" => ModelKind::Logistic,
                    "mlp" => ModelKind::Mlp {
                        hidden: match self.model {
                            ModelKind::Mlp { hidden } => hidden,
                            ModelKind::Logistic => 32,
                        },
                    },
                    _ => return Err(Error::config(format!("unknown model kind `{value}`"))),
                }
            }
            "model.hidden" => {
                let hidden = parse(key, value)?;
                if let ModelKind::Mlp { hidden: h } = &mut self.model {
                    *h = hidden;
                } else {
                    self.model = ModelKind::Mlp { hidden };
                }
            }
            "sim.concurrency" => s.concurrency = parse(key, value)?,
            "sim.duration" => {
                let kind: DurationKind = value.parse()?;
                s.duration = DurationDist {
                    kind,
                    shape: kind.default_shape(),
                    normalize_mean: s.duration.normalize_mean,
                };
            }
            "sim.duration_shape" => s.duration.shape = parse(key, value)?,
            "sim.duration_normalize" => s.duration.normalize_mean = parse_bool(key, value)?,
            "sim.budget_updates" => s.budget_updates = parse(key, value)?,
            "sim.tau_max" => {
                s.tau_max = match value {
                    "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "sim.overselection" => s.overselection = parse(key, value)?,
            "sim.eval_every" => s.eval_every = parse(key, value)?,
            "sim.seed" => s.seed = parse(key, value)?,
            "sim.start_stagger" => s.start_stagger = parse(key, value)?,
            "sim.duration_scales_with_data" => {
                s.duration_scales_with_data = parse_bool(key, value)?
            }
            "strategy.kind" => g.kind = value.parse()?,
            "strategy.buffer_size" => g.buffer_size = parse(key, value)?,
            "strategy.eta_global" => g.eta_global = parse(key, value)?,
            "strategy.momentum" => g.momentum = parse(key, value)?,
            "strategy.staleness_alpha" => g.staleness_alpha = parse(key, value)?,
            "strategy.aggregate" => g.aggregate_mode = value.parse()?,
            "local.eta_local" => l.eta_local = parse(key, value)?,
            "local.batch_size" => l.batch_size = parse(key, value)?,
            "local.steps" => {
                l.mode = match value {
                    "epoch" => LocalMode::OneEpoch,
                    v => LocalMode::FixedSteps(parse(key, v)?),
                }
            }
            "local.lr_norm" => l.lr_norm_enabled = parse_bool(key, value)?,
            "local.weighting" => l.weighting = value.parse::<Weighting>()?,
            "local.prox_mu" => l.prox_mu = parse(key, value)?,
            "run.target_accuracy" => self.target_accuracy = parse(key, value)?,
            "run.stop_at_target" => self.stop_at_target = parse_bool(key, value)?,
            "run.output" => self.output = PathBuf::from(value),
            "sweep.random_samples" => self.sweep.random_samples = parse(key, value)?,
            "sweep.parallelism" => self.sweep.parallelism = parse(key, value)?,
            _ => return Err(Error::config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    fn csv_mut(&mut self) -> &mut CsvSource {
        self.csv.get_or_insert_with(|| CsvSource {
            path: PathBuf::new(),
            feature_columns: Vec::new(),
            label_column: "label".into(),
            client_column: "client".into(),
        })
    }

    /// Cross-field checks on top of each component's own validation.
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.strategy.validate()?;
        self.local.validate()?;
        match &self.csv {
            None => {
                self.federation.validate()?;
                let needed = if self.strategy.kind.is_sync() {
                    self.sim.selected_per_round()
                } else {
                    self.sim.concurrency
                };
                if needed > self.federation.num_clients {
                    return Err(Error::config(format!(
                        "{needed} concurrent clients requested but the federation has {}",
                        self.federation.num_clients
                    )));
                }
            }
            Some(csv) => {
                if csv.path.as_os_str().is_empty() || csv.feature_columns.is_empty() {
                    return Err(Error::config(
                        "csv federations need federation.csv_path and federation.csv_features",
                    ));
                }
            }
        }
        if let ModelKind::Mlp { hidden: 0 } = self.model {
            return Err(Error::config("model.hidden must be positive"));
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 1.0) {
            return Err(Error::config("federation.eval_fraction must lie in (0, 1)"));
        }
        if !(self.target_accuracy > 0.0 && self.target_accuracy < 1.0) {
            return Err(Error::config("run.target_accuracy must lie in (0, 1)"));
        }
        if self.local.prox_mu != 0.0 && self.strategy.kind != StrategyKind::FedProx {
            return Err(Error::config(format!(
                "local.prox_mu must be 0 for {}",
                self.strategy.kind
            )));
        }
        if self.strategy.kind.is_async() && self.sim.overselection != 1.0 {
            return Err(Error::config(
                "sim.overselection applies to synchronous strategies only",
            ));
        }
        if self.sweep.parallelism == 0 {
            return Err(Error::config("sweep.parallelism must be positive"));
        }
        if !self.sweep.random.is_empty() && self.sweep.random_samples == 0 {
            return Err(Error::config("sweep.random needs sweep.random_samples > 0"));
        }
        Ok(())
    }

    /// Canonical `key=value` rendering; parsing it yields an equal config.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        let f = &self.federation;
        put("federation.num_clients", f.num_clients.to_string());
        put("federation.feature_dim", f.feature_dim.to_string());
        put("federation.num_classes", f.num_classes.to_string());
        put(
            "federation.label_skew_alpha",
            f.label_skew_alpha.to_string(),
        );
        put("federation.size_sigma", f.size_lognormal_sigma.to_string());
        put(
            "federation.mean_examples",
            f.mean_examples_per_client.to_string(),
        );
        put(
            "federation.class_separation",
            f.class_separation.to_string(),
        );
        put("federation.seed", f.seed.to_string());
        put("federation.eval_fraction", self.eval_fraction.to_string());
        if let Some(csv) = &self.csv {
            put("federation.csv_path", csv.path.display().to_string());
            put("federation.csv_features", csv.feature_columns.join(","));
            put("federation.csv_label", csv.label_column.clone());
            put("federation.csv_client", csv.client_column.clone());
        }
        match self.model {
            ModelKind::Logistic => put("model.kind", "logistic".into()),
            ModelKind::Mlp { hidden } => {
                put("model.kind", "mlp".into());
                put("model.hidden", hidden.to_string());
            }
        }
        let s = &self.sim;
        put("sim.concurrency", s.concurrency.to_string());
        put("sim.duration", s.duration.kind.to_string());
        put("sim.duration_shape", s.duration.shape.to_string());
        put(
            "sim.duration_normalize",
            s.duration.normalize_mean.to_string(),
        );
        put("sim.budget_updates", s.budget_updates.to_string());
        put(
            "sim.tau_max",
            s.tau_max
                .map_or_else(|| "none".to_string(), |t| t.to_string()),
        );
        put("sim.overselection", s.overselection.to_string());
        put("sim.eval_every", s.eval_every.to_string());
        put("sim.seed", s.seed.to_string());
        put("sim.start_stagger", s.start_stagger.to_string());
        put(
            "sim.duration_scales_with_data",
            s.duration_scales_with_data.to_string(),
        );
        let g = &self.strategy;
        put("strategy.kind", g.kind.to_string());
        put("strategy.buffer_size", g.buffer_size.to_string());
        put("strategy.eta_global", g.eta_global.to_string());
        put("strategy.momentum", g.momentum.to_string());
        put("strategy.staleness_alpha", g.staleness_alpha.to_string());
        put("strategy.aggregate", g.aggregate_mode.name().to_string());
        let l = &self.local;
        put("local.eta_local", l.eta_local.to_string());
        put("local.batch_size", l.batch_size.to_string());
        put(
            "local.steps",
            match l.mode {
                LocalMode::OneEpoch => "epoch".to_string(),
                LocalMode::FixedSteps(q) => q.to_string(),
            },
        );
        put("local.lr_norm", l.lr_norm_enabled.to_string());
        put("local.weighting", l.weighting.to_string());
        put("local.prox_mu", l.prox_mu.to_string());
        put("run.target_accuracy", self.target_accuracy.to_string());
        put("run.stop_at_target", self.stop_at_target.to_string());
        put("run.output", self.output.display().to_string());
        for (k, values) in &self.sweep.grid {
            put(&format!("sweep.grid.{k}"), values.join(","));
        }
        for (k, range) in &self.sweep.random {
            put(&format!("sweep.random.{k}"), range.to_string());
        }
        put(
            "sweep.random_samples",
            self.sweep.random_samples.to_string(),
        );
        put("sweep.parallelism", self.sweep.parallelism.to_string());
        put(
            "compare.kinds",
            self.compare
                .kinds
                .iter()
                .map(|k| k.name())
                .collect::<Vec<_>>()
                .join(","),
        );
        for (kind, k, v) in &self.compare.overrides {
            put(&format!("compare.{kind}.{k}"), v.clone());
        }
        out
    }

    /// The config `compare` runs for `kind`: the base with the strategy
    /// swapped, strategy-specific knobs reset, then the overrides applied.
    pub fn for_strategy(&self, kind: StrategyKind) -> Result<RunConfig> {
        let mut cfg = self.clone();
        let base = &self.strategy;
        cfg.strategy = StrategyConfig {
            kind,
            momentum: if kind == StrategyKind::FedAvgM {
                0.9
            } else {
                0.0
            },
            ..base.clone()
        };
        cfg.local.prox_mu = if kind == StrategyKind::FedProx {
            0.01
        } else {
            0.0
        };
        if kind == StrategyKind::FedAsync {
            cfg.strategy.buffer_size = 1;
        }
        if kind.is_async() {
            cfg.sim.overselection = 1.0;
        }
        for (k, key, value) in &self.compare.overrides {
            if *k == kind {
                cfg.set(key, value)?;
            }
        }
        if kind.is_sync() {
            cfg.strategy.buffer_size = cfg.sim.concurrency;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}
