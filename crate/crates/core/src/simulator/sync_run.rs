use super::{
    check_federation, draw_available, draw_duration, Monitor, RunContext, SimConfig, Streams,
};
use crate::client::{local_train, update_weight, LocalConfig};
use crate::datagen::total_examples;
use crate::error::{Error, Result};
use crate::harness::metrics::{MetricsLog, RunOutcome};
use crate::server::{ServerState, StrategyConfig};

/// Round-based FedAvg / FedAvgM / FedProx run.
///
/// Each round selects `ceil(f * M)` distinct clients, draws their training
/// times, and aggregates the fastest `M`; the round lasts as long as the
/// `M`-th fastest. Rounds continue while a whole cohort fits in the budget.
pub fn run_sync(
    ctx: RunContext<'_>,
    sim: &SimConfig,
    strategy: &StrategyConfig,
    local: &LocalConfig,
) -> Result<MetricsLog> {
    sim.validate()?;
    strategy.validate()?;
    local.validate()?;
    if !strategy.kind.is_sync() {
        return Err(Error::config(format!(
            "{} is asynchronous; use the event-driven engine",
            strategy.kind
        )));
    }
    let n_select = sim.selected_per_round();
    check_federation(&ctx, n_select)?;

    let mut streams = Streams::new(sim.seed);
    let model0 = ctx.arch.init(&streams.init).flat;
    let mut server = ServerState::new(model0.clone());
    let mut monitor = Monitor::new(ctx, sim, &model0)?;
    let mean_size = total_examples(ctx.federation) as f64 / ctx.federation.len() as f64;

    let m = sim.concurrency;
    let mut chosen = vec![false; ctx.federation.len()];
    let mut dispatched: u64 = 0;
    let mut now = 0.0;
    let mut outcome = RunOutcome::Completed;
    'rounds: while monitor.log.counts.total() + n_select as u64 <= sim.budget_updates {
        // (duration, client, dispatch index)
        let mut cohort: Vec<(f64, usize, u64)> = Vec::with_capacity(n_select);
        for _ in 0..n_select {
            let c = draw_available(&mut streams.sampler, &chosen);
            chosen[c] = true;
            let d = draw_duration(sim, &mut streams.durations, &ctx.federation[c], mean_size);
            cohort.push((d, c, dispatched));
            dispatched += 1;
        }
        for &(_, c, _) in &cohort {
            chosen[c] = false;
        }
        cohort.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let round_time = cohort[m - 1].0;

        let mut updates = Vec::with_capacity(m);
        for &(_, c, n) in &cohort[..m] {
            let mut rng = streams.local(n);
            match local_train(
                &ctx.arch,
                server.model(),
                &ctx.federation[c],
                local,
                &mut rng,
                server.step(),
            ) {
                Ok(u) => updates.push(u),
                Err(Error::Numerical { .. }) => {
                    outcome = RunOutcome::Diverged;
                    break 'rounds;
                }
                Err(e) => return Err(e),
            }
        }
        let weights: Vec<f64> = updates
            .iter()
            .map(|u| update_weight(u, local.weighting))
            .collect();
        server.sync_aggregate(&updates, &weights, strategy)?;
        now += round_time;
        let counts = monitor.counts();
        counts.aggregated += m as u64;
        counts.discarded += (n_select - m) as u64;
        if let Some(o) = monitor.after_step(now, &server)? {
            outcome = o;
            break;
        }
    }
    monitor.finish(now, server, outcome)
}
