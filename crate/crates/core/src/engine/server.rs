//! The live scheduler loop: drains the client event queue before every tick
//! and paces ticks with a [`RunClock`].

use std::collections::HashSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::TryRecvError;
use std::sync::Arc;

use log::info;

use super::{Algorithm, Engine, EngineError, MemorySink, RunClock, TickReport};
use crate::model::ResponseRecord;
use crate::protocol::{ClientKind, Listeners, QueueItem};

#[derive(Debug, Clone)]
pub struct ServerOptions {
    /// Simulated time to keep running after the last ingest client leaves.
    pub grace_us: u64,
    /// Hard stop on simulated time.
    pub max_run_us: Option<u64>,
    /// Set from another thread to stop after the current tick.
    pub stop: Arc<AtomicBool>,
}

impl Default for ServerOptions {
    fn default() -> Self {
        ServerOptions {
            grace_us: 60_000_000,
            max_run_us: None,
            stop: Arc::new(AtomicBool::new(false)),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunTranscript {
    pub responses: Vec<ResponseRecord>,
    pub reports: Vec<TickReport>,
    pub events: u64,
    pub rejected_signals: u64,
    /// Simulated time at which the last ingest client disconnected.
    pub ingest_finished_us: Option<u64>,
}

/// Runs `engine` against live clients until every ingest client that
/// connected has left and the grace period has passed, the stop flag is
/// raised, or `max_run_us` is reached.
///
/// The listener's response hub is attached as a sink for the duration of the
/// run; response clients see end of stream when the run ends.
pub fn run_server<A: Algorithm>(
    engine: &mut Engine<A>,
    listeners: Listeners,
    mut clock: RunClock,
    opts: &ServerOptions,
) -> Result<RunTranscript, EngineError> {
    let Listeners { mut handle, events } = listeners;
    let hub = handle.hub();
    let memory = MemorySink::default();
    engine.add_sink(hub.clone());
    engine.add_sink(memory.clone());

    let mut transcript = RunTranscript::default();
    let mut open: HashSet<u64> = HashSet::new();
    let mut seen_ingest = false;
    let rejected_before = engine.rejected_signals();

    clock.start();
    let result = loop {
        if opts.stop.load(Ordering::SeqCst) {
            info!("stop requested");
            break Ok(());
        }
        let now = engine.now_us();
        if opts.max_run_us.is_some_and(|m| now >= m) {
            break Ok(());
        }
        if let Some(done) = transcript.ingest_finished_us {
            if open.is_empty() && now >= done + opts.grace_us {
                break Ok(());
            }
        }

        clock.wait_for_tick(engine.tick_index());
        loop {
            match events.try_recv() {
                Ok(QueueItem::Connected { conn, kind }) => {
                    if kind != ClientKind::Response {
                        open.insert(conn);
                        seen_ingest = true;
                        transcript.ingest_finished_us = None;
                    }
                }
                Ok(QueueItem::Disconnected { conn, .. }) => {
                    open.remove(&conn);
                    if seen_ingest && open.is_empty() {
                        transcript.ingest_finished_us = Some(engine.now_us());
                    }
                }
                Ok(QueueItem::Event(e)) => {
                    engine.apply(e.kind);
                    transcript.events += 1;
                }
                Err(TryRecvError::Empty) => break,
                // Listener gone; nothing more can arrive.
                Err(TryRecvError::Disconnected) => {
                    if transcript.ingest_finished_us.is_none() {
                        transcript.ingest_finished_us = Some(engine.now_us());
                    }
                    open.clear();
                    break;
                }
            }
        }

        match engine.advance() {
            Ok(r) => transcript.reports.push(r),
            Err(e) => break Err(e),
        }
    };

    hub.close();
    handle.shutdown();
    result?;
    engine.flush_probes()?;
    transcript.responses = memory.take();
    transcript.rejected_signals = engine.rejected_signals() - rejected_before;
    Ok(transcript)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{CycleContext, CallbackError, TissueRng};
    use crate::model::{AntigenValue, Cell, CellType, ParamError, TissueCompartment, TissueParams};
    use crate::protocol::{Client, Endpoint};

    /// Echoes every antigen it receives straight back as a response.
    struct Echo;
    impl Algorithm for Echo {
        type State = ();
        fn populate(
            &mut self,
            c: &mut TissueCompartment<()>,
            _: &mut TissueRng,
        ) -> Result<(), ParamError> {
            let cell = Cell::new(CellType(1), ())
                .with_antigen_store(1000)
                .with_antigen_receptors(1000)
                .with_response_producers(1);
            c.add_cell(cell).map(|_| ())
        }
        fn cycle(&mut self, ctx: CycleContext<'_, ()>) -> Result<(), CallbackError> {
            let taken: Vec<AntigenValue> = (0..ctx.cell.antigen_store.capacity())
                .filter_map(|i| ctx.cell.antigen_store.take(i))
                .collect();
            ctx.cell.response_producers[0].pending.extend(taken);
            Ok(())
        }
    }

    #[test]
    fn runs_until_ingest_clients_leave_plus_grace() {
        let params = TissueParams {
            antigen_multiplier: 1,
            ..TissueParams::reference()
        };
        let mut engine = Engine::new(params, Echo, 3).unwrap();
        let listeners = Listeners::bind(&Endpoint::Loopback, 64).unwrap();
        let stream = listeners.handle.connect_loopback();
        let opts = ServerOptions {
            grace_us: 500_000,
            max_run_us: Some(60_000_000),
            ..ServerOptions::default()
        };
        let sender = std::thread::spawn(move || {
            let mut c = Client::hello(stream, ClientKind::Antigen).unwrap();
            c.antigen(AntigenValue(42)).unwrap();
            c.bye().unwrap();
        });
        let clock = RunClock::accelerated(100_000, 100.0);
        let t = engine_run(&mut engine, listeners, clock, &opts);
        sender.join().unwrap();
        assert_eq!(t.events, 1);
        let done = t.ingest_finished_us.unwrap();
        assert!(engine.now_us() >= done + 500_000);
        assert!(engine.now_us() < 60_000_000);
        assert!(t.responses.iter().any(|r| r.antigen == AntigenValue(42)));
    }

    fn engine_run(
        engine: &mut Engine<Echo>,
        l: Listeners,
        clock: RunClock,
        opts: &ServerOptions,
    ) -> RunTranscript {
        run_server(engine, l, clock, opts).unwrap()
    }

    #[test]
    fn stop_flag_ends_the_run() {
        let mut engine = Engine::new(TissueParams::reference(), Echo, 3).unwrap();
        let listeners = Listeners::bind(&Endpoint::Loopback, 64).unwrap();
        let opts = ServerOptions::default();
        opts.stop.store(true, Ordering::SeqCst);
        let t = run_server(&mut engine, listeners, RunClock::realtime(100_000), &opts).unwrap();
        assert!(t.reports.is_empty());
    }
}
