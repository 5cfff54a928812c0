//! The two-cell response algorithm.
//!
//! Type 1 cells collect antigen from the tissue and present it. Type 2 cells
//! bind Type 1 cells, compare their VR locks with the presented antigen and
//! emit a response for every hit. A Type 2 cell that has never matched
//! redraws all of its locks every `cell_lifespan_2` cycles; once it has
//! matched, its locks are kept for the rest of the run.
//!
//! With `signal_enabled`, Type 1 cells read tissue signal 0 and adapt the
//! display time of their antigen producers to it (see
//! [`update_action_time`]).

use rand::Rng;

use crate::engine::{Algorithm, CallbackError, CycleContext, Sampler, TissueRng};
use crate::model::{AntigenValue, Cell, CellType, CellTypeParams, ParamError, TissueCompartment, TissueParams};

pub const TYPE1: CellType = CellType(1);
pub const TYPE2: CellType = CellType(2);
/// Tissue signal read by Type 1 cells when the signal is enabled.
pub const SIGNAL_ID: usize = 0;
/// Index of the match counter among a Type 2 cell's internal cytokines.
pub const MATCH_COUNTER: usize = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoCellParams {
    pub num_cells_1: usize,
    pub num_antigen_1: usize,
    pub num_antigen_receptors_1: usize,
    pub num_antigen_producers_1: usize,
    pub antigen_producer_action_time: u32,
    pub num_cells_2: usize,
    pub cell_lifespan_2: u64,
    pub num_cell_receptors_2: usize,
    pub num_vr_receptors_2: usize,
    pub num_response_producers_2: usize,
    pub signal_enabled: bool,
    /// Action time a signal-controlled producer starts at and resets to.
    pub initial_action_time: u32,
    /// Inclusive range VR locks are drawn from.
    pub lock_min: u32,
    pub lock_max: u32,
}

impl TwoCellParams {
    pub const fn reference() -> Self {
        TwoCellParams {
            num_cells_1: 50,
            num_antigen_1: 100,
            num_antigen_receptors_1: 10,
            num_antigen_producers_1: 10,
            antigen_producer_action_time: 10,
            num_cells_2: 50,
            cell_lifespan_2: 100,
            num_cell_receptors_2: 2,
            num_vr_receptors_2: 20,
            num_response_producers_2: 1,
            signal_enabled: false,
            initial_action_time: 100,
            lock_min: 0,
            lock_max: 340,
        }
    }

    pub fn validate(&self, tissue: &TissueParams) -> Result<(), ParamError> {
        if self.num_cells_1 + self.num_cells_2 > tissue.max_cells {
            return Err(ParamError::CellCapacity(tissue.max_cells));
        }
        if self.lock_min > self.lock_max {
            return Err(ParamError::Invalid(format!(
                "lock_min {} exceeds lock_max {}",
                self.lock_min, self.lock_max
            )));
        }
        // Stays correct if the signal id ever moves off 0.
        #[allow(clippy::absurd_extreme_comparisons)]
        if self.signal_enabled && tissue.max_cytokines <= SIGNAL_ID {
            return Err(ParamError::SignalId {
                id: SIGNAL_ID,
                max: tissue.max_cytokines,
            });
        }
        if self.antigen_producer_action_time == 0 {
            return Err(ParamError::Zero("antigen_producer_action_time"));
        }
        if self.signal_enabled && self.initial_action_time == 0 {
            return Err(ParamError::Zero("initial_action_time"));
        }
        Ok(())
    }

    pub fn type1(&self) -> CellTypeParams {
        CellTypeParams {
            num_cells: self.num_cells_1,
            num_antigen: self.num_antigen_1,
            num_antigen_receptors: self.num_antigen_receptors_1,
            num_antigen_producers: self.num_antigen_producers_1,
            num_cytokine_receptors: self.signal_enabled as usize,
            antigen_producer_action_time: if self.signal_enabled {
                self.initial_action_time
            } else {
                self.antigen_producer_action_time
            },
            ..CellTypeParams::empty(TYPE1)
        }
    }

    pub fn type2(&self) -> CellTypeParams {
        CellTypeParams {
            num_cells: self.num_cells_2,
            num_cytokines: 1,
            num_cell_receptors: self.num_cell_receptors_2,
            num_vr_receptors: self.num_vr_receptors_2,
            num_response_producers: self.num_response_producers_2,
            cell_lifespan: self.cell_lifespan_2,
            ..CellTypeParams::empty(TYPE2)
        }
    }
}

impl Default for TwoCellParams {
    fn default() -> Self {
        Self::reference()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Type1State {
    pub signal_enabled: bool,
    pub current_action_time: u32,
    pub last_signal_level: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Type2State {
    /// Number of times all locks have been redrawn.
    pub redraws: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TwoCellState {
    Type1(Type1State),
    Type2(Type2State),
}

/// Signal-controlled display time: unchanged while the level holds, halved
/// (never below 1) when it falls, back to `reset` when it rises.
pub fn update_action_time(current: u32, last_level: f64, new_level: f64, reset: u32) -> u32 {
    if new_level < last_level {
        (current / 2).max(1)
    } else if new_level > last_level {
        reset
    } else {
        current
    }
}

pub struct TwoCell {
    params: TwoCellParams,
}

impl TwoCell {
    pub fn new(params: TwoCellParams) -> Self {
        TwoCell { params }
    }

    pub fn params(&self) -> &TwoCellParams {
        &self.params
    }

    fn draw_lock(&self, rng: &mut TissueRng) -> AntigenValue {
        AntigenValue(rng.random_range(self.params.lock_min..=self.params.lock_max))
    }

    fn type1_cycle(&self, ctx: CycleContext<'_, TwoCellState>) {
        let cell = ctx.cell;
        let TwoCellState::Type1(st) = &mut cell.state else {
            return;
        };
        if !st.signal_enabled {
            return;
        }
        let Some(level) = cell.cytokine_receptors.first().map(|r| r.level) else {
            return;
        };
        st.current_action_time = update_action_time(
            st.current_action_time,
            st.last_signal_level,
            level,
            self.params.initial_action_time,
        );
        st.last_signal_level = level;
        // Displays already in progress keep their countdown.
        for p in &mut cell.antigen_producers {
            p.action_time = st.current_action_time;
        }
    }

    fn type2_cycle(&self, ctx: CycleContext<'_, TwoCellState>) {
        let CycleContext {
            cell, matches, rng, ..
        } = ctx;
        for m in matches {
            if let Some(p) = cell.response_producers.first_mut() {
                p.pending.push(m.antigen);
            }
            cell.internal_cytokines[MATCH_COUNTER] += 1;
        }
        self.lifespan_rule(cell, rng);
    }

    /// Ages the cell by one cycle and redraws every lock if it has reached
    /// its lifespan without ever matching.
    pub fn lifespan_rule(&self, cell: &mut Cell<TwoCellState>, rng: &mut TissueRng) {
        cell.age += 1;
        if cell.internal_cytokines[MATCH_COUNTER] != 0 || cell.age < self.params.cell_lifespan_2 {
            return;
        }
        for i in 0..cell.vr_receptors.len() {
            cell.vr_receptors[i].lock = self.draw_lock(rng);
        }
        cell.age = 0;
        if let TwoCellState::Type2(st) = &mut cell.state {
            st.redraws += 1;
        }
    }
}

impl Algorithm for TwoCell {
    type State = TwoCellState;

    fn populate(
        &mut self,
        c: &mut TissueCompartment<TwoCellState>,
        rng: &mut TissueRng,
    ) -> Result<(), ParamError> {
        self.params.validate(&c.params)?;
        let t1 = self.params.type1();
        for _ in 0..t1.num_cells {
            let mut cell = Cell::new(
                TYPE1,
                TwoCellState::Type1(Type1State {
                    signal_enabled: self.params.signal_enabled,
                    current_action_time: t1.antigen_producer_action_time,
                    last_signal_level: 0.0,
                }),
            )
            .with_antigen_store(t1.num_antigen)
            .with_antigen_receptors(t1.num_antigen_receptors)
            .with_antigen_producers(t1.num_antigen_producers, t1.antigen_producer_action_time);
            if self.params.signal_enabled {
                cell = cell.with_cytokine_receptor(SIGNAL_ID);
            }
            c.add_cell(cell)?;
        }
        let t2 = self.params.type2();
        for _ in 0..t2.num_cells {
            let locks: Vec<AntigenValue> =
                (0..t2.num_vr_receptors).map(|_| self.draw_lock(rng)).collect();
            let cell = Cell::new(TYPE2, TwoCellState::Type2(Type2State::default()))
                .with_internal_cytokines(t2.num_cytokines)
                .with_cell_receptors(t2.num_cell_receptors, TYPE1)
                .with_vr_locks(locks)
                .with_response_producers(t2.num_response_producers);
            c.add_cell(cell)?;
        }
        Ok(())
    }

    fn cycle(&mut self, ctx: CycleContext<'_, TwoCellState>) -> Result<(), CallbackError> {
        match ctx.cell.cell_type {
            TYPE1 => self.type1_cycle(ctx),
            TYPE2 => self.type2_cycle(ctx),
            other => {
                return Err(CallbackError {
                    cell: ctx.index,
                    message: format!("unexpected cell type {other}"),
                })
            }
        }
        Ok(())
    }
}

/// Records the VR locks of every Type 2 cell, one row per cell.
pub struct RepertoireSampler {
    locks: usize,
}

impl RepertoireSampler {
    pub fn new(params: &TwoCellParams) -> Self {
        RepertoireSampler {
            locks: params.num_vr_receptors_2,
        }
    }
}

impl Sampler<TwoCellState> for RepertoireSampler {
    fn columns(&self) -> Vec<String> {
        let mut cols = vec!["cell".to_string(), "matched".to_string()];
        cols.extend((0..self.locks).map(|i| format!("lock_{i}")));
        cols
    }

    fn sample(&mut self, c: &TissueCompartment<TwoCellState>, rows: &mut Vec<Vec<String>>) {
        for (i, cell) in c.cells_of(TYPE2) {
            let mut row = vec![
                i.to_string(),
                cell.internal_cytokines[MATCH_COUNTER].to_string(),
            ];
            row.extend(cell.locks().map(|l| l.to_string()));
            rows.push(row);
        }
    }
}
