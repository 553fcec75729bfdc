use super::events::{EventKind, EventQueue, Finished, SimEvent};
use super::{
    check_federation, compute_staleness, draw_available, draw_duration, Monitor, RunContext,
    SimConfig, StalenessCheck, Streams,
};
use crate::client::{local_train, update_weight, LocalConfig};
use crate::datagen::total_examples;
use crate::error::{Error, Result};
use crate::harness::metrics::{MetricsLog, RunOutcome, UpdateRecord};
use crate::server::{ServerState, StrategyConfig};

/// Event-driven FedBuff / FedAsync run.
///
/// `M` start events open the run; every finish frees its client, feeds the
/// update to the server and, while budget remains, dispatches a replacement
/// at the same instant. The run ends when the budget is spent and all
/// in-flight clients have reported, or earlier on divergence or target.
pub fn run_async(
    ctx: RunContext<'_>,
    sim: &SimConfig,
    strategy: &StrategyConfig,
    local: &LocalConfig,
) -> Result<MetricsLog> {
    sim.validate()?;
    strategy.validate()?;
    local.validate()?;
    if !strategy.kind.is_async() {
        return Err(Error::config(format!(
            "{} is synchronous; use the round-based engine",
            strategy.kind
        )));
    }
    check_federation(&ctx, sim.concurrency)?;

    let mut streams = Streams::new(sim.seed);
    let model0 = ctx.arch.init(&streams.init).flat;
    let mut server = ServerState::new(model0.clone());
    let mut monitor = Monitor::new(ctx, sim, &model0)?;
    let mean_size = total_examples(ctx.federation) as f64 / ctx.federation.len() as f64;

    let mut busy = vec![false; ctx.federation.len()];
    let mut queue = EventQueue::new();
    let mut dispatched: u64 = 0;
    let initial = (sim.concurrency as u64).min(sim.budget_updates);
    // starts pushed so far, fired or not
    let mut scheduled = initial;
    for slot in 0..initial {
        queue.push(SimEvent {
            time: slot as f64 * sim.start_stagger,
            kind: EventKind::ClientStart,
            client_id: slot as usize,
            payload: None,
        });
    }

    let mut now = 0.0;
    let mut outcome = RunOutcome::Completed;
    while let Some(event) = queue.pop() {
        now = event.time;
        match event.kind {
            EventKind::ClientStart => {
                let c = draw_available(&mut streams.sampler, &busy);
                busy[c] = true;
                let data = &ctx.federation[c];
                let duration = draw_duration(sim, &mut streams.durations, data, mean_size);
                let mut rng = streams.local(dispatched);
                dispatched += 1;
                let update = match local_train(
                    &ctx.arch,
                    server.model(),
                    data,
                    local,
                    &mut rng,
                    server.step(),
                ) {
                    Ok(u) => u,
                    Err(Error::Numerical { .. }) => {
                        outcome = RunOutcome::Diverged;
                        break;
                    }
                    Err(e) => return Err(e),
                };
                queue.push(SimEvent {
                    time: now + duration,
                    kind: EventKind::ClientFinish,
                    client_id: c,
                    payload: Some(Finished {
                        update,
                        start_time: now,
                    }),
                });
            }
            EventKind::ClientFinish => {
                let Finished { update, start_time } = event
                    .payload
                    .ok_or_else(|| Error::Protocol("finish event without an update".into()))?;
                busy[event.client_id] = false;
                let check = compute_staleness(update.pull_version, server.step(), sim.tau_max)?;
                monitor.log.updates.push(UpdateRecord {
                    client_id: event.client_id,
                    start_time,
                    finish_time: now,
                    pull_version: update.pull_version,
                    apply_version: server.step(),
                    tau: check.tau(),
                    accepted: matches!(check, StalenessCheck::Accepted(_)),
                });
                if scheduled < sim.budget_updates {
                    scheduled += 1;
                    queue.push(SimEvent {
                        time: now,
                        kind: EventKind::ClientStart,
                        client_id: event.client_id,
                        payload: None,
                    });
                }
                match check {
                    StalenessCheck::Rejected(_) => monitor.counts().rejected += 1,
                    StalenessCheck::Accepted(tau) => {
                        server.buffer_add(
                            &update,
                            update_weight(&update, local.weighting),
                            strategy,
                        )?;
                        monitor.counts().buffered += 1;
                        monitor.record_tau(tau);
                        if server.maybe_flush(strategy) {
                            if let Some(o) = monitor.after_step(now, &server)? {
                                outcome = o;
                                break;
                            }
                        }
                    }
                }
            }
        }
    }
    monitor.finish(now, server, outcome)
}
