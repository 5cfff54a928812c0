//! Domain types shared by every part of the engine: antigen, signals, cells
//! and the tissue compartment that houses them.

use std::fmt;

use rand::Rng;
use thiserror::Error;

/// An opaque discrete antigen token. In the syscall setting this is the
/// syscall number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct AntigenValue(pub u32);

impl fmt::Display for AntigenValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for AntigenValue {
    fn from(v: u32) -> Self {
        AntigenValue(v)
    }
}

/// Cell type tag. Cell receptors bind by type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellType(pub u16);

impl fmt::Display for CellType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalLevel {
    pub id: usize,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{0} must be greater than zero")]
    Zero(&'static str),
    #[error("antigen_multiplier must be at least 1")]
    Multiplier,
    #[error("signal id {id} out of range (max_cytokines = {max})")]
    SignalId { id: usize, max: usize },
    #[error("compartment is full ({0} cells)")]
    CellCapacity(usize),
    #[error("{0}")]
    Invalid(String),
}

/// Compartment-wide parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TissueParams {
    pub max_antigen: usize,
    pub max_cytokines: usize,
    pub max_cells: usize,
    pub cell_update_rate_us: u64,
    pub antigen_multiplier: u32,
    pub probe_rate_us: u64,
}

impl TissueParams {
    /// The reference settings used for the two-cell algorithm.
    pub const fn reference() -> Self {
        TissueParams {
            max_antigen: 1000,
            max_cytokines: 0,
            max_cells: 100,
            cell_update_rate_us: 100_000,
            antigen_multiplier: 10,
            probe_rate_us: 1_000_000,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if self.cell_update_rate_us == 0 {
            return Err(ParamError::Zero("cell_update_rate"));
        }
        if self.probe_rate_us == 0 {
            return Err(ParamError::Zero("probe_rate"));
        }
        if self.antigen_multiplier == 0 {
            return Err(ParamError::Multiplier);
        }
        Ok(())
    }
}

impl Default for TissueParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// Per-type repertoire sizes. Fixed for the lifetime of a cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellTypeParams {
    pub cell_type: CellType,
    pub num_cells: usize,
    pub num_antigen: usize,
    pub num_cytokines: usize,
    pub num_antigen_receptors: usize,
    pub num_antigen_producers: usize,
    pub num_cytokine_receptors: usize,
    pub num_cell_receptors: usize,
    pub num_vr_receptors: usize,
    pub num_response_producers: usize,
    pub num_cytokine_producers: usize,
    pub antigen_producer_action_time: u32,
    pub cell_lifespan: u64,
}

impl CellTypeParams {
    pub fn empty(cell_type: CellType) -> Self {
        CellTypeParams {
            cell_type,
            num_cells: 0,
            num_antigen: 0,
            num_cytokines: 0,
            num_antigen_receptors: 0,
            num_antigen_producers: 0,
            num_cytokine_receptors: 0,
            num_cell_receptors: 0,
            num_vr_receptors: 0,
            num_response_producers: 0,
            num_cytokine_producers: 0,
            antigen_producer_action_time: 1,
            cell_lifespan: 0,
        }
    }
}

/// A fixed-capacity store of optional antigen slots with stable addressing.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AntigenStore {
    slots: Vec<Option<AntigenValue>>,
}

impl AntigenStore {
    pub fn with_capacity(capacity: usize) -> Self {
        AntigenStore {
            slots: vec![None; capacity],
        }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> &[Option<AntigenValue>] {
        &self.slots
    }

    pub fn get(&self, idx: usize) -> Option<AntigenValue> {
        self.slots.get(idx).copied().flatten()
    }

    /// Writes `value` at `idx`, returning whatever was overwritten.
    pub fn put(&mut self, idx: usize, value: AntigenValue) -> Option<AntigenValue> {
        self.slots[idx].replace(value)
    }

    pub fn take(&mut self, idx: usize) -> Option<AntigenValue> {
        self.slots[idx].take()
    }

    pub fn occupied(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn occupied_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|_| i))
    }

    pub fn values(&self) -> impl Iterator<Item = AntigenValue> + '_ {
        self.slots.iter().filter_map(|s| *s)
    }

    /// Writes into a uniformly random slot, overwriting the occupant.
    pub fn put_random<R: Rng + ?Sized>(&mut self, value: AntigenValue, rng: &mut R) -> bool {
        if self.slots.is_empty() {
            return false;
        }
        let idx = rng.random_range(0..self.slots.len());
        self.slots[idx] = Some(value);
        true
    }

    pub fn clear(&mut self) {
        self.slots.iter_mut().for_each(|s| *s = None);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CytokineReceptor {
    pub signal: usize,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellReceptor {
    pub target: CellType,
    pub bound: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VrReceptor {
    pub lock: AntigenValue,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AntigenProducer {
    pub displayed: Option<AntigenValue>,
    pub remaining: u32,
    pub action_time: u32,
}

impl AntigenProducer {
    pub fn new(action_time: u32) -> Self {
        AntigenProducer {
            displayed: None,
            remaining: 0,
            action_time,
        }
    }

    pub fn is_free(&self) -> bool {
        self.remaining == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CytokineProducer {
    pub signal: usize,
    /// `None` leaves the tissue signal untouched this tick.
    pub level: Option<f64>,
}

/// Queues antigen values the cell callback decided to respond to; flushed to
/// the response sinks once every callback in the tick has completed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ResponseProducer {
    pub pending: Vec<AntigenValue>,
}

/// A typed agent. `S` is the algorithm's per-cell controller state.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell<S> {
    pub cell_type: CellType,
    pub antigen_store: AntigenStore,
    pub internal_cytokines: Vec<i64>,
    pub antigen_receptors: usize,
    pub cytokine_receptors: Vec<CytokineReceptor>,
    pub cell_receptors: Vec<CellReceptor>,
    pub vr_receptors: Vec<VrReceptor>,
    pub antigen_producers: Vec<AntigenProducer>,
    pub cytokine_producers: Vec<CytokineProducer>,
    pub response_producers: Vec<ResponseProducer>,
    /// Cycles since creation or the last lock reset.
    pub age: u64,
    pub state: S,
}

impl<S> Cell<S> {
    pub fn new(cell_type: CellType, state: S) -> Self {
        Cell {
            cell_type,
            antigen_store: AntigenStore::default(),
            internal_cytokines: Vec::new(),
            antigen_receptors: 0,
            cytokine_receptors: Vec::new(),
            cell_receptors: Vec::new(),
            vr_receptors: Vec::new(),
            antigen_producers: Vec::new(),
            cytokine_producers: Vec::new(),
            response_producers: Vec::new(),
            age: 0,
            state,
        }
    }

    pub fn with_antigen_store(mut self, capacity: usize) -> Self {
        self.antigen_store = AntigenStore::with_capacity(capacity);
        self
    }

    pub fn with_internal_cytokines(mut self, n: usize) -> Self {
        self.internal_cytokines = vec![0; n];
        self
    }

    pub fn with_antigen_receptors(mut self, n: usize) -> Self {
        self.antigen_receptors = n;
        self
    }

    pub fn with_antigen_producers(mut self, n: usize, action_time: u32) -> Self {
        self.antigen_producers = vec![AntigenProducer::new(action_time); n];
        self
    }

    pub fn with_cytokine_receptor(mut self, signal: usize) -> Self {
        self.cytokine_receptors.push(CytokineReceptor { signal, level: 0.0 });
        self
    }

    pub fn with_cytokine_producer(mut self, signal: usize) -> Self {
        self.cytokine_producers.push(CytokineProducer {
            signal,
            level: None,
        });
        self
    }

    pub fn with_cell_receptors(mut self, n: usize, target: CellType) -> Self {
        self.cell_receptors = vec![
            CellReceptor {
                target,
                bound: None
            };
            n
        ];
        self
    }

    pub fn with_vr_locks(mut self, locks: impl IntoIterator<Item = AntigenValue>) -> Self {
        self.vr_receptors = locks
            .into_iter()
            .map(|lock| VrReceptor {
                lock,
                active: false,
            })
            .collect();
        self
    }

    pub fn with_response_producers(mut self, n: usize) -> Self {
        self.response_producers = vec![ResponseProducer::default(); n];
        self
    }

    pub fn is_bound(&self) -> bool {
        self.cell_receptors.iter().any(|r| r.bound.is_some())
    }

    pub fn displayed(&self) -> impl Iterator<Item = AntigenValue> + '_ {
        self.antigen_producers.iter().filter_map(|p| p.displayed)
    }

    pub fn locks(&self) -> impl Iterator<Item = AntigenValue> + '_ {
        self.vr_receptors.iter().map(|r| r.lock)
    }
}

/// The shared environment: antigen store, signal array and cell population.
#[derive(Debug, Clone)]
pub struct TissueCompartment<S> {
    pub params: TissueParams,
    pub antigen: AntigenStore,
    pub signals: Vec<f64>,
    pub cells: Vec<Cell<S>>,
}

impl<S> TissueCompartment<S> {
    pub fn new(params: TissueParams) -> Result<Self, ParamError> {
        params.validate()?;
        Ok(TissueCompartment {
            antigen: AntigenStore::with_capacity(params.max_antigen),
            signals: vec![0.0; params.max_cytokines],
            cells: Vec::with_capacity(params.max_cells),
            params,
        })
    }

    /// Adds a cell, checking capacity and that every signal id it touches
    /// exists in this compartment.
    pub fn add_cell(&mut self, cell: Cell<S>) -> Result<usize, ParamError> {
        if self.cells.len() >= self.params.max_cells {
            return Err(ParamError::CellCapacity(self.params.max_cells));
        }
        let max = self.params.max_cytokines;
        let ids = cell
            .cytokine_receptors
            .iter()
            .map(|r| r.signal)
            .chain(cell.cytokine_producers.iter().map(|p| p.signal));
        for id in ids {
            if id >= max {
                return Err(ParamError::SignalId { id, max });
            }
        }
        self.cells.push(cell);
        Ok(self.cells.len() - 1)
    }

    pub fn cells_of(&self, ty: CellType) -> impl Iterator<Item = (usize, &Cell<S>)> {
        self.cells
            .iter()
            .enumerate()
            .filter(move |(_, c)| c.cell_type == ty)
    }

    /// Checks every structural invariant. Intended for tests and debug
    /// assertions after each tick.
    pub fn validate(&self) -> Result<(), InvariantViolation> {
        let v = |msg: String| Err(InvariantViolation(msg));
        if self.antigen.capacity() != self.params.max_antigen {
            return v(format!(
                "tissue store capacity {} != max_antigen {}",
                self.antigen.capacity(),
                self.params.max_antigen
            ));
        }
        if self.signals.len() != self.params.max_cytokines {
            return v("signal array resized".into());
        }
        if let Some(l) = self.signals.iter().find(|l| !l.is_finite() || **l < 0.0) {
            return v(format!("signal level {l} outside [0, inf)"));
        }
        if self.cells.len() > self.params.max_cells {
            return v(format!("{} cells exceed max_cells", self.cells.len()));
        }
        for (i, cell) in self.cells.iter().enumerate() {
            for r in &cell.cell_receptors {
                if let Some(b) = r.bound {
                    match self.cells.get(b) {
                        Some(c) if c.cell_type == r.target => {}
                        _ => return v(format!("cell {i} bound to {b} of the wrong type")),
                    }
                }
            }
            if !cell.is_bound() && cell.vr_receptors.iter().any(|r| r.active) {
                return v(format!("cell {i} has an active VR receptor while unbound"));
            }
            for (j, p) in cell.antigen_producers.iter().enumerate() {
                if (p.remaining > 0) != p.displayed.is_some() {
                    return v(format!(
                        "cell {i} producer {j}: remaining {} with display {:?}",
                        p.remaining, p.displayed
                    ));
                }
            }
            for r in &cell.cytokine_receptors {
                if r.signal >= self.params.max_cytokines {
                    return v(format!("cell {i} watches missing signal {}", r.signal));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invariant violated: {0}")]
pub struct InvariantViolation(pub String);

/// One response emitted by a response producer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ResponseRecord {
    pub t_us: u64,
    pub antigen: AntigenValue,
    pub cell_type: CellType,
}

/// Input to the tissue: either an antigen or a signal level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    Antigen(AntigenValue),
    Signal { id: usize, level: f64 },
}

impl EventKind {
    pub fn is_antigen(&self) -> bool {
        matches!(self, EventKind::Antigen(_))
    }
}

/// A timestamped input event, the unit of the replay log format.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayEvent {
    pub t_us: u64,
    pub kind: EventKind,
}

impl ReplayEvent {
    pub fn antigen(t_us: u64, v: u32) -> Self {
        ReplayEvent {
            t_us,
            kind: EventKind::Antigen(AntigenValue(v)),
        }
    }

    pub fn signal(t_us: u64, id: usize, level: f64) -> Self {
        ReplayEvent {
            t_us,
            kind: EventKind::Signal { id, level },
        }
    }
}
