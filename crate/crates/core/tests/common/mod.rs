//! Independent oracles and fixtures shared by the integration suites.
#![allow(dead_code)]

use fedbuff::client::{normalized_step_lr, sgd_step, ClientUpdate, LocalConfig};
use fedbuff::datagen::{
    generate_federation, train_eval_split, ClientDataset, Example, FederationSpec,
};
use fedbuff::harness::metrics::{MetricsLog, UpdateRecord};
use fedbuff::models::{Architecture, Objective};
use fedbuff::numkit::{DenseVec, DurationDist, PrngStream};
use fedbuff::server::{AggregateMode, ServerState, StrategyConfig, StrategyKind};
use fedbuff::simulator::{RunContext, SimConfig};
use fedbuff::Result;
use rand::Rng;

/// A small non-IID federation with its evaluation pool.
pub struct Fixture {
    pub arch: Architecture,
    pub train: Vec<ClientDataset>,
    pub eval: Vec<Example>,
}

impl Fixture {
    pub fn new(num_clients: usize, seed: u64) -> Fixture {
        let spec = FederationSpec {
            num_clients,
            mean_examples_per_client: 16,
            seed,
            ..FederationSpec::default()
        };
        let fed = generate_federation(&spec).unwrap();
        let (train, eval) = train_eval_split(&fed, 0.25, seed).unwrap();
        Fixture {
            arch: Architecture::Logistic {
                features: spec.feature_dim,
                classes: spec.num_classes,
            },
            train,
            eval,
        }
    }

    pub fn ctx(&self) -> RunContext<'_> {
        RunContext::new(self.arch, &self.train, &self.eval)
    }
}

pub fn sim(concurrency: usize, duration: DurationDist, budget: u64, seed: u64) -> SimConfig {
    SimConfig {
        concurrency,
        duration,
        budget_updates: budget,
        seed,
        eval_every: 1.0,
        ..SimConfig::default()
    }
}

pub fn fedbuff(k: usize) -> StrategyConfig {
    StrategyConfig {
        buffer_size: k,
        ..StrategyConfig::new(StrategyKind::FedBuff)
    }
}

pub fn local() -> LocalConfig {
    LocalConfig {
        eta_local: 0.05,
        ..LocalConfig::default()
    }
}

/// Versions a naive replay of the logged timeline assigns to one update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Replayed {
    pub pull_version: u64,
    pub tau: u64,
    pub accepted: bool,
}

/// Recompute staleness from start/finish times alone. Finishes are
/// processed in `(time, client)` order; a start at time `T` sees every
/// server step taken by a finish at time `<= T`; the server steps once per
/// `K` accepted updates.
pub fn replay_staleness(records: &[UpdateRecord], k: usize, tau_max: Option<u64>) -> Vec<Replayed> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        records[a]
            .finish_time
            .total_cmp(&records[b].finish_time)
            .then(records[a].client_id.cmp(&records[b].client_id))
    });
    // (time, version after the step)
    let mut steps: Vec<f64> = Vec::new();
    let mut accepted = 0usize;
    let mut out = vec![
        Replayed {
            pull_version: 0,
            tau: 0,
            accepted: false
        };
        records.len()
    ];
    for &i in &order {
        let r = &records[i];
        let pull = steps.iter().filter(|&&t| t <= r.start_time).count() as u64;
        let now = steps.len() as u64;
        let tau = now - pull;
        let ok = tau_max.is_none_or(|m| tau <= m);
        if ok {
            accepted += 1;
            if accepted.is_multiple_of(k) {
                steps.push(r.finish_time);
            }
        }
        out[i] = Replayed {
            pull_version: pull,
            tau,
            accepted: ok,
        };
    }
    out
}

/// Mismatches between the log and the replay.
pub fn replay_mismatches(log: &MetricsLog, k: usize, tau_max: Option<u64>) -> usize {
    let replay = replay_staleness(&log.updates, k, tau_max);
    log.updates
        .iter()
        .zip(&replay)
        .filter(|(r, p)| {
            r.pull_version != p.pull_version || r.tau != p.tau || r.accepted != p.accepted
        })
        .count()
}

/// Clients in flight at every midpoint between distinct event times, paired
/// with the expected `min(M, budget - finished)`.
pub fn active_counts(log: &MetricsLog, m: usize, budget: u64) -> Vec<(usize, usize)> {
    let mut times: Vec<f64> = log
        .updates
        .iter()
        .flat_map(|r| [r.start_time, r.finish_time])
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
        .windows(2)
        .map(|w| {
            let t = 0.5 * (w[0] + w[1]);
            let active = log
                .updates
                .iter()
                .filter(|r| r.start_time < t && t < r.finish_time)
                .count();
            let finished = log.updates.iter().filter(|r| r.finish_time < t).count() as u64;
            let expected = (m as u64).min(budget - finished) as usize;
            (active, expected)
        })
        .collect()
}

/// Per-sample loss `0.5 (y - xi)^2` on a scalar model: `L = 1`, minimiser
/// at the sample mean, per-sample gradient variance `sigma^2`.
pub struct LeastSquares1D;

impl Objective for LeastSquares1D {
    fn num_params(&self) -> usize {
        1
    }

    fn loss(&self, params: &[f64], batch: &[&Example]) -> Result<f64> {
        let y = params[0];
        Ok(batch
            .iter()
            .map(|e| 0.5 * (y - e.features[0]).powi(2))
            .sum::<f64>()
            / batch.len() as f64)
    }

    fn gradient(&self, params: &[f64], batch: &[&Example], grad: &mut [f64]) -> Result<()> {
        let y = params[0];
        grad[0] = batch.iter().map(|e| y - e.features[0]).sum::<f64>() / batch.len() as f64;
        Ok(())
    }
}

/// One seed of the variable-batch SGD experiment: returns the
/// step-weighted mean of `|grad F(y_q)|^2` and the bound
/// `2 (F(y_1) - F*) / A_Q + eta L sigma^2 / B`.
pub fn lr_norm_trial(seed: u64, q: usize, eta: f64, b: usize, sigma: f64, y1: f64) -> (f64, f64) {
    let mut rng = PrngStream::new(seed, 0x1D_5EED);
    let mut y = [y1];
    let mut grad = [0.0];
    let mut weighted = 0.0;
    let mut a_q = 0.0;
    let mut batch: Vec<Example> = Vec::with_capacity(b);
    for _ in 0..q {
        let n = 1 + rng.below(b as u64) as usize;
        let step = normalized_step_lr(eta, n, b).unwrap();
        // F(y) = 0.5 y^2 + const, so grad F(y) = y
        weighted += step * y[0] * y[0];
        a_q += step;
        batch.clear();
        for _ in 0..n {
            let xi: f64 = rng.sample(rand_distr::StandardNormal);
            batch.push(Example::new(vec![sigma * xi], 0));
        }
        let refs: Vec<&Example> = batch.iter().collect();
        sgd_step(&LeastSquares1D, &mut y, &refs, step, None, &mut grad).unwrap();
    }
    let lhs = weighted / a_q;
    let rhs = 2.0 * (0.5 * y1 * y1) / a_q + eta * sigma * sigma / b as f64;
    (lhs, rhs)
}

pub fn median<T: Copy + PartialOrd>(values: &[T]) -> T {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

pub fn random_update(
    rng: &mut PrngStream,
    dim: usize,
    client_id: usize,
    max_version: u64,
) -> ClientUpdate {
    let delta: Vec<f64> = (0..dim).map(|_| rng.next_unit() * 2.0 - 1.0).collect();
    ClientUpdate {
        delta: DenseVec::from_vec(delta),
        client_id,
        pull_version: rng.below(max_version + 1),
        num_examples: 1 + rng.below(50) as usize,
        num_steps_taken: 1,
    }
}

/// Drives a buffer with `events` random insertions and checks the state
/// machine after each one. A twin server receives each window of `K`
/// insertions in a shuffled order.
pub fn check_state_machine(seed: u64, events: usize, k: usize, dim: usize, mode: AggregateMode) {
    let cfg = StrategyConfig {
        buffer_size: k,
        aggregate_mode: mode,
        ..StrategyConfig::new(StrategyKind::FedBuff)
    };
    let mut rng = PrngStream::new(seed, 0xA1);
    let mut server = ServerState::new(DenseVec::zeros(dim));
    let mut twin = ServerState::new(DenseVec::zeros(dim));
    let mut window: Vec<ClientUpdate> = Vec::new();
    let mut flushes = 0u64;
    for e in 0..events {
        let client = rng.below(1000) as usize;
        let u = random_update(&mut rng, dim, client, server.step());
        let tau = server.buffer_add(&u, 1.0, &cfg).unwrap();
        assert_eq!(tau, server.step() - u.pull_version);
        window.push(u);
        if server.maybe_flush(&cfg) {
            flushes += 1;
            assert!(server.buffer_is_zero());
            assert_eq!(server.fill_count(), 0);
            let mut shuffled = window.clone();
            PrngStream::new(seed, e as u64).shuffle(&mut shuffled);
            for v in &shuffled {
                twin.buffer_add(v, 1.0, &cfg).unwrap();
            }
            assert!(twin.maybe_flush(&cfg));
            assert!(server.model().max_abs_diff(twin.model()).unwrap() <= 1e-12);
            window.clear();
        } else {
            assert!(server.fill_count() < k);
            assert_eq!(server.fill_count(), window.len());
        }
        assert_eq!(server.step(), flushes);
    }
}
