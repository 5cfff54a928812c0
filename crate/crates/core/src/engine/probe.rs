use std::io::{self, Write};

use crate::model::TissueCompartment;

/// User-supplied sampling callback. Receives a read-only compartment and
/// appends zero or more rows; the engine prefixes each row with `t_us`.
pub trait Sampler<S> {
    fn columns(&self) -> Vec<String>;
    fn sample(&mut self, compartment: &TissueCompartment<S>, rows: &mut Vec<Vec<String>>);
}

/// Periodic sampler writing CSV with a leading `t_us` column.
pub struct Probe<S> {
    rate_us: u64,
    sampler: Box<dyn Sampler<S>>,
    sink: Box<dyn Write>,
    rows: Vec<Vec<String>>,
}

impl<S> Probe<S> {
    /// Writes the header immediately, so a probe that never fires still
    /// produces a valid (header-only) file.
    pub fn new(
        rate_us: u64,
        sampler: Box<dyn Sampler<S>>,
        mut sink: Box<dyn Write>,
    ) -> io::Result<Self> {
        assert!(rate_us > 0, "probe rate must be positive");
        let mut header = vec!["t_us".to_string()];
        header.extend(sampler.columns());
        writeln!(sink, "{}", header.join(","))?;
        Ok(Probe {
            rate_us,
            sampler,
            sink,
            rows: Vec::new(),
        })
    }

    pub fn rate_us(&self) -> u64 {
        self.rate_us
    }

    /// True when a probe period boundary falls in `(prev_us, now_us]`, or on
    /// the very first tick.
    pub fn due(&self, tick: u64, tick_us: u64) -> bool {
        if tick == 0 {
            return true;
        }
        let now = tick * tick_us;
        let prev = (tick - 1) * tick_us;
        now / self.rate_us != prev / self.rate_us
    }

    pub fn run(&mut self, t_us: u64, compartment: &TissueCompartment<S>) -> io::Result<()> {
        self.rows.clear();
        self.sampler.sample(compartment, &mut self.rows);
        for row in &self.rows {
            write!(self.sink, "{t_us}")?;
            for field in row {
                write!(self.sink, ",{field}")?;
            }
            writeln!(self.sink)?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.sink.flush()
    }
}

/// Samples tissue antigen occupancy and the signal array.
pub struct OccupancySampler;

impl<S> Sampler<S> for OccupancySampler {
    fn columns(&self) -> Vec<String> {
        vec!["tissue_antigen".into(), "cells".into()]
    }

    fn sample(&mut self, c: &TissueCompartment<S>, rows: &mut Vec<Vec<String>>) {
        rows.push(vec![c.antigen.occupied().to_string(), c.cells.len().to_string()]);
    }
}
