//! The tissue server core: compartment initialisation, antigen
//! preprocessing, the cell scheduler and probe sampling.
//!
//! A tick runs in three phases, visiting cells in a fresh random order each
//! time:
//!
//! 1. every cell's receptors are updated (antigen, cytokine, cell, VR);
//! 2. each cell's cycle callback runs;
//! 3. producer effects are applied to the compartment (antigen display,
//!    cytokine writes, responses).
//!
//! Cytokines written in tick `t` are therefore first visible to receptors in
//! tick `t + 1`. Client events are queued and applied before the next tick.

mod clock;
mod probe;
mod server;
mod sink;

use std::fmt;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cells::{self, ExactMatch, Matcher, VrMatch};
use crate::model::{
    AntigenValue, Cell, CellType, EventKind, InvariantViolation, ParamError, ReplayEvent,
    TissueCompartment, TissueParams,
};

pub use clock::{ClockMode, RunClock};
pub use probe::{OccupancySampler, Probe, Sampler};
pub use server::{run_server, RunTranscript, ServerOptions};
pub use sink::{response_csv, CsvResponseSink, MemorySink, ResponseSink, SharedBuffer};

/// The engine's random stream: ChaCha with 8 rounds, seeded from a `u64`.
/// Its output is stable across platforms and crate releases.
pub type TissueRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> TissueRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Callback(#[from] CallbackError),
    #[error(transparent)]
    Invariant(#[from] InvariantViolation),
    #[error("signal id {id} out of range (max_cytokines = {max})")]
    SignalOutOfRange { id: usize, max: usize },
    #[error("sink write failed: {0}")]
    Sink(#[source] std::io::Error),
    #[error("probe write failed: {0}")]
    Probe(#[source] std::io::Error),
    #[error("listener failed: {0}")]
    Listener(#[source] std::io::Error),
}

#[derive(Debug, Clone, Error)]
#[error("cell {cell} callback failed: {message}")]
pub struct CallbackError {
    pub cell: usize,
    pub message: String,
}

/// Everything a cell's cycle callback may touch.
pub struct CycleContext<'a, S> {
    pub index: usize,
    pub cell: &'a mut Cell<S>,
    pub matches: &'a [VrMatch],
    pub signals: &'a [f64],
    pub rng: &'a mut TissueRng,
    pub tick: u64,
    pub t_us: u64,
}

/// An algorithm supplies the initial population and a per-cell controller.
pub trait Algorithm {
    type State: Clone + fmt::Debug;

    fn populate(
        &mut self,
        compartment: &mut TissueCompartment<Self::State>,
        rng: &mut TissueRng,
    ) -> Result<(), ParamError>;

    fn cycle(&mut self, ctx: CycleContext<'_, Self::State>) -> Result<(), CallbackError>;
}

/// Per-tick counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TickReport {
    pub tick: u64,
    pub t_us: u64,
    /// Antigen events ingested since the previous tick.
    pub ingested: u32,
    pub transfers: u32,
    pub bound: u32,
    pub matches: u32,
    pub presentations: u32,
    pub action_time_sum: u64,
    pub cleared: u32,
    pub responses: u32,
    pub tissue_occupancy: u32,
}

pub struct Engine<A: Algorithm> {
    compartment: TissueCompartment<A::State>,
    algorithm: A,
    matcher: Box<dyn Matcher>,
    rng: TissueRng,
    seed: u64,
    tick: u64,
    sinks: Vec<Box<dyn ResponseSink>>,
    probes: Vec<Probe<A::State>>,
    matches: Vec<Vec<VrMatch>>,
    order: Vec<usize>,
    ingested: u32,
    rejected_signals: u64,
    validate: bool,
}

impl<A: Algorithm> Engine<A> {
    /// Creates the compartment and lets the algorithm populate it.
    pub fn new(params: TissueParams, mut algorithm: A, seed: u64) -> Result<Self, EngineError> {
        let mut compartment = TissueCompartment::new(params)?;
        let mut rng = seeded_rng(seed);
        algorithm.populate(&mut compartment, &mut rng)?;
        Ok(Engine {
            compartment,
            algorithm,
            matcher: Box::new(ExactMatch),
            rng,
            seed,
            tick: 0,
            sinks: Vec::new(),
            probes: Vec::new(),
            matches: Vec::new(),
            order: Vec::new(),
            ingested: 0,
            rejected_signals: 0,
            validate: cfg!(debug_assertions),
        })
    }

    pub fn with_matcher(mut self, matcher: impl Matcher + 'static) -> Self {
        self.matcher = Box::new(matcher);
        self
    }

    /// Run the full invariant validator after every tick.
    pub fn validate_every_tick(&mut self, on: bool) {
        self.validate = on;
    }

    pub fn add_sink(&mut self, sink: impl ResponseSink + 'static) {
        self.sinks.push(Box::new(sink));
    }

    pub fn add_probe(&mut self, probe: Probe<A::State>) {
        self.probes.push(probe);
    }

    pub fn compartment(&self) -> &TissueCompartment<A::State> {
        &self.compartment
    }

    /// Direct mutable access, for fixtures and tests.
    pub fn compartment_mut(&mut self) -> &mut TissueCompartment<A::State> {
        &mut self.compartment
    }

    pub fn algorithm(&self) -> &A {
        &self.algorithm
    }

    pub fn rng_mut(&mut self) -> &mut TissueRng {
        &mut self.rng
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    pub fn now_us(&self) -> u64 {
        self.tick * self.compartment.params.cell_update_rate_us
    }

    pub fn rejected_signals(&self) -> u64 {
        self.rejected_signals
    }

    /// Places `antigen_multiplier` copies of `value` into independently
    /// chosen random tissue slots, overwriting whatever is there.
    pub fn ingest_antigen(&mut self, value: AntigenValue) {
        ingest_antigen(&mut self.compartment, value, &mut self.rng);
        self.ingested += 1;
    }

    pub fn set_signal(&mut self, id: usize, level: f64) -> Result<(), EngineError> {
        set_signal(&mut self.compartment, id, level)
    }

    /// Applies one client event. Out-of-range signals are counted and
    /// dropped rather than aborting the run.
    pub fn apply(&mut self, event: EventKind) {
        match event {
            EventKind::Antigen(v) => self.ingest_antigen(v),
            EventKind::Signal { id, level } => {
                if let Err(e) = self.set_signal(id, level) {
                    if self.rejected_signals == 0 {
                        warn!("{e}; further rejections are counted silently");
                    }
                    self.rejected_signals += 1;
                }
            }
        }
    }

    /// Runs due probes, then one scheduler tick.
    pub fn advance(&mut self) -> Result<TickReport, EngineError> {
        let now = self.now_us();
        let tick_us = self.compartment.params.cell_update_rate_us;
        for probe in &mut self.probes {
            if probe.due(self.tick, tick_us) {
                probe
                    .run(now, &self.compartment)
                    .map_err(EngineError::Probe)?;
            }
        }
        self.tick()
    }

    /// One scheduler pass over every cell.
    pub fn tick(&mut self) -> Result<TickReport, EngineError> {
        let t_us = self.now_us();
        let mut report = TickReport {
            tick: self.tick,
            t_us,
            ingested: std::mem::take(&mut self.ingested),
            ..TickReport::default()
        };
        let c = &mut self.compartment;
        let n = c.cells.len();

        self.order.clear();
        self.order.extend(0..n);
        self.order.shuffle(&mut self.rng);
        self.matches.resize_with(n, Vec::new);

        // Receptors.
        let population: Vec<CellType> = c.cells.iter().map(|cell| cell.cell_type).collect();
        let max_cells = c.params.max_cells;
        for &i in &self.order {
            let cell = &mut c.cells[i];
            report.transfers +=
                cells::antigen_receptor_step(cell, &mut c.antigen, &mut self.rng) as u32;
            cells::cytokine_receptor_step(cell, &c.signals);
            report.bound +=
                cells::cell_receptor_step(cell, i, &population, max_cells, &mut self.rng) as u32;
        }
        for &i in &self.order {
            self.matches[i].clear();
            cells::vr_receptor_step(&c.cells, i, self.matcher.as_ref(), &mut self.matches[i]);
            report.matches += self.matches[i].len() as u32;
        }
        for &i in &self.order {
            cells::set_activation(&mut c.cells[i], &self.matches[i]);
        }

        // Callbacks.
        for &i in &self.order {
            self.algorithm.cycle(CycleContext {
                index: i,
                cell: &mut c.cells[i],
                matches: &self.matches[i],
                signals: &c.signals,
                rng: &mut self.rng,
                tick: self.tick,
                t_us,
            })?;
        }

        // Producers.
        for &i in &self.order {
            let cell = &mut c.cells[i];
            let p = cells::antigen_producer_step(cell, &mut self.rng);
            report.presentations += p.presented as u32;
            report.cleared += p.cleared as u32;
            report.action_time_sum += p.action_time_sum;
            cells::cytokine_producer_step(cell, &mut c.signals);
            report.responses += cells::response_producer_step(cell, t_us, &mut self.sinks)
                .map_err(EngineError::Sink)? as u32;
        }

        report.tissue_occupancy = c.antigen.occupied() as u32;
        if self.validate {
            c.validate()?;
        }
        self.tick += 1;
        Ok(report)
    }

    /// Offline replay: before tick `t`, every event with
    /// `offset_us + t_us < t * cell_update_rate` is applied. Runs until the
    /// simulated clock reaches `until_us`.
    pub fn run_events(
        &mut self,
        events: &[ReplayEvent],
        offset_us: u64,
        until_us: u64,
    ) -> Result<Vec<TickReport>, EngineError> {
        let mut reports = Vec::new();
        let mut next = events.partition_point(|e| e.t_us + offset_us < self.now_us());
        while self.now_us() < until_us {
            let now = self.now_us();
            while next < events.len() && events[next].t_us + offset_us < now {
                self.apply(events[next].kind);
                next += 1;
            }
            reports.push(self.advance()?);
        }
        self.flush_probes()?;
        Ok(reports)
    }

    pub fn flush_probes(&mut self) -> Result<(), EngineError> {
        for p in &mut self.probes {
            p.flush().map_err(EngineError::Probe)?;
        }
        Ok(())
    }
}

pub fn ingest_antigen<S, R: rand::Rng + ?Sized>(
    compartment: &mut TissueCompartment<S>,
    value: AntigenValue,
    rng: &mut R,
) {
    for _ in 0..compartment.params.antigen_multiplier {
        if !compartment.antigen.put_random(value, rng) {
            break;
        }
    }
}

pub fn set_signal<S>(
    compartment: &mut TissueCompartment<S>,
    id: usize,
    level: f64,
) -> Result<(), EngineError> {
    let max = compartment.signals.len();
    match compartment.signals.get_mut(id) {
        Some(s) => {
            *s = level;
            Ok(())
        }
        None => Err(EngineError::SignalOutOfRange { id, max }),
    }
}
