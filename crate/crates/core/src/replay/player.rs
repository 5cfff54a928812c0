//! Sends a replay log to a server over antigen and signal connections.

use std::io::Write;
use std::time::{Duration, Instant};

use super::ReplayError;
use crate::model::{EventKind, ReplayEvent};
use crate::protocol::Client;

/// Decides when each event is due.
pub trait Pacer {
    /// Time still to wait before an event stamped `t_us` may be sent.
    fn delay(&mut self, t_us: u64) -> Duration;
}

/// Event `t_us` is sent `t_us / rate` after the pacer was created.
pub struct WallClockPacer {
    start: Instant,
    rate: f64,
}

impl WallClockPacer {
    pub fn new(rate: f64) -> Result<Self, ReplayError> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(ReplayError::Rate(rate));
        }
        Ok(WallClockPacer {
            start: Instant::now(),
            rate,
        })
    }
}

impl Pacer for WallClockPacer {
    fn delay(&mut self, t_us: u64) -> Duration {
        let due = Duration::from_secs_f64(t_us as f64 / 1e6 / self.rate);
        due.saturating_sub(self.start.elapsed())
    }
}

/// Sends everything as fast as the connection accepts it.
pub struct NoDelay;

impl Pacer for NoDelay {
    fn delay(&mut self, _: u64) -> Duration {
        Duration::ZERO
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayStats {
    pub antigen_sent: usize,
    pub signal_sent: usize,
}

/// Plays `events` in order, antigen to `antigen`, signals to `signal`.
/// Pending output is flushed before every wait so the server sees events
/// on time. Both connections are closed with `BYE` at the end.
pub fn replay<A: Write, S: Write>(
    events: &[ReplayEvent],
    pacer: &mut dyn Pacer,
    antigen: &mut Client<A>,
    mut signal: Option<&mut Client<S>>,
) -> Result<ReplayStats, ReplayError> {
    let has_signals = events.iter().any(|e| !e.kind.is_antigen());
    if has_signals && signal.is_none() {
        return Err(ReplayError::NoSignalConnection);
    }
    let mut stats = ReplayStats::default();
    let lost = |sent: usize, e: std::io::Error| ReplayError::ConnectionLost {
        sent,
        unsent: events.len() - sent,
        source: e,
    };
    for (i, e) in events.iter().enumerate() {
        let wait = pacer.delay(e.t_us);
        if !wait.is_zero() {
            antigen.flush().map_err(|err| lost(i, err))?;
            if let Some(s) = signal.as_deref_mut() {
                s.flush().map_err(|err| lost(i, err))?;
            }
            std::thread::sleep(wait);
        }
        match e.kind {
            EventKind::Antigen(v) => {
                antigen.antigen(v).map_err(|err| lost(i, err))?;
                stats.antigen_sent += 1;
            }
            EventKind::Signal { id, level } => {
                let s = signal.as_deref_mut().expect("checked above");
                s.signal(id as u32, level).map_err(|err| lost(i, err))?;
                stats.signal_sent += 1;
            }
        }
    }
    let n = events.len();
    antigen.bye().map_err(|err| lost(n, err))?;
    if let Some(s) = signal {
        s.bye().map_err(|err| lost(n, err))?;
    }
    Ok(stats)
}
