//! Receptor and producer mechanics. Each step is a small operation on one
//! cell that the scheduler composes into a tick; none of them know about
//! cell types or algorithms.
//!
//! All random choices draw from the caller's RNG in a fixed order (receptors
//! in index order) so that a seeded run is reproducible.

use std::io;

use rand::Rng;

use crate::engine::ResponseSink;
use crate::model::{AntigenStore, AntigenValue, Cell, CellType, ResponseRecord};

/// Decides whether a presented key opens a VR lock.
pub trait Matcher: Send {
    fn matches(&self, lock: AntigenValue, key: AntigenValue) -> bool;
}

/// Lock and key must be the same value.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatch;

impl Matcher for ExactMatch {
    fn matches(&self, lock: AntigenValue, key: AntigenValue) -> bool {
        lock == key
    }
}

impl<F> Matcher for F
where
    F: Fn(AntigenValue, AntigenValue) -> bool + Send,
{
    fn matches(&self, lock: AntigenValue, key: AntigenValue) -> bool {
        self(lock, key)
    }
}

/// For each antigen receptor, probe one random tissue slot and move its
/// antigen (if any) into a random slot of the cell's store, overwriting the
/// previous occupant. Returns the number of transfers.
pub fn antigen_receptor_step<S, R: Rng + ?Sized>(
    cell: &mut Cell<S>,
    tissue: &mut AntigenStore,
    rng: &mut R,
) -> usize {
    if tissue.capacity() == 0 || cell.antigen_store.capacity() == 0 {
        return 0;
    }
    let mut transfers = 0;
    for _ in 0..cell.antigen_receptors {
        let slot = rng.random_range(0..tissue.capacity());
        if let Some(v) = tissue.take(slot) {
            let dst = rng.random_range(0..cell.antigen_store.capacity());
            cell.antigen_store.put(dst, v);
            transfers += 1;
        }
    }
    transfers
}

/// Copies the watched tissue signal into each cytokine receptor.
pub fn cytokine_receptor_step<S>(cell: &mut Cell<S>, signals: &[f64]) {
    for r in &mut cell.cytokine_receptors {
        r.level = signals[r.signal];
    }
}

/// Re-probes every cell receptor: a random index of the compartment's cell
/// store is chosen and the receptor binds if a cell of its target type sits
/// there. A cell never binds itself. Returns the number of bound receptors.
pub fn cell_receptor_step<S, R: Rng + ?Sized>(
    cell: &mut Cell<S>,
    own_index: usize,
    population: &[CellType],
    max_cells: usize,
    rng: &mut R,
) -> usize {
    let mut bound = 0;
    for r in &mut cell.cell_receptors {
        r.bound = None;
        if max_cells == 0 {
            continue;
        }
        let idx = rng.random_range(0..max_cells);
        if idx != own_index && population.get(idx) == Some(&r.target) {
            r.bound = Some(idx);
            bound += 1;
        }
    }
    bound
}

/// A lock/key hit found by [`vr_receptor_step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VrMatch {
    pub cell_receptor: usize,
    pub vr: usize,
    pub partner: usize,
    pub producer: usize,
    pub antigen: AntigenValue,
}

/// Tests every VR lock of `cells[idx]` against every antigen currently
/// displayed by each bound partner. Matches are appended in (cell receptor,
/// VR receptor, producer) index order. Read-only; see [`set_activation`].
pub fn vr_receptor_step<S>(
    cells: &[Cell<S>],
    idx: usize,
    matcher: &dyn Matcher,
    out: &mut Vec<VrMatch>,
) {
    let cell = &cells[idx];
    for (ri, receptor) in cell.cell_receptors.iter().enumerate() {
        let Some(partner) = receptor.bound else {
            continue;
        };
        let producers = &cells[partner].antigen_producers;
        for (vi, vr) in cell.vr_receptors.iter().enumerate() {
            for (pi, p) in producers.iter().enumerate() {
                if let Some(key) = p.displayed {
                    if matcher.matches(vr.lock, key) {
                        out.push(VrMatch {
                            cell_receptor: ri,
                            vr: vi,
                            partner,
                            producer: pi,
                            antigen: key,
                        });
                    }
                }
            }
        }
    }
}

/// Sets VR activation flags from this tick's matches.
pub fn set_activation<S>(cell: &mut Cell<S>, matches: &[VrMatch]) {
    for r in &mut cell.vr_receptors {
        r.active = false;
    }
    for m in matches {
        cell.vr_receptors[m.vr].active = true;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PresentationReport {
    /// New displays started this step.
    pub presented: usize,
    /// Displays that expired (antigen destroyed).
    pub cleared: usize,
    /// Sum of the action times of the new displays.
    pub action_time_sum: u64,
}

/// Counts down active displays, clears expired ones, and lets every free
/// producer pull a uniformly random antigen out of the cell's store.
pub fn antigen_producer_step<S, R: Rng + ?Sized>(
    cell: &mut Cell<S>,
    rng: &mut R,
) -> PresentationReport {
    let mut report = PresentationReport::default();
    let mut available: Option<Vec<usize>> = None;
    for p in &mut cell.antigen_producers {
        if p.remaining > 0 {
            p.remaining -= 1;
            if p.remaining == 0 {
                p.displayed = None;
                report.cleared += 1;
            } else {
                continue;
            }
        }
        let avail =
            available.get_or_insert_with(|| cell.antigen_store.occupied_indices().collect());
        if avail.is_empty() {
            continue;
        }
        let k = rng.random_range(0..avail.len());
        let slot = avail.swap_remove(k);
        let v = cell.antigen_store.take(slot);
        debug_assert!(v.is_some());
        p.displayed = v;
        p.remaining = p.action_time.max(1);
        report.presented += 1;
        report.action_time_sum += u64::from(p.remaining);
    }
    report
}

/// Writes each producer's emitted level into the tissue (last writer wins).
pub fn cytokine_producer_step<S>(cell: &Cell<S>, signals: &mut [f64]) {
    for p in &cell.cytokine_producers {
        if let Some(level) = p.level {
            signals[p.signal] = level;
        }
    }
}

/// Flushes queued responses to every sink, one record per queued antigen,
/// in producer then queue order.
pub fn response_producer_step<S>(
    cell: &mut Cell<S>,
    t_us: u64,
    sinks: &mut [Box<dyn ResponseSink>],
) -> io::Result<usize> {
    let mut n = 0;
    for p in &mut cell.response_producers {
        for antigen in p.pending.drain(..) {
            let rec = ResponseRecord {
                t_us,
                antigen,
                cell_type: cell.cell_type,
            };
            for sink in sinks.iter_mut() {
                sink.record(&rec)?;
            }
            n += 1;
        }
    }
    Ok(n)
}
