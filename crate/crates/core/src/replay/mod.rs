//! Trace replay: monitor log conversion, the replay file format, paced
//! playback to a server and synthetic dataset generation.

mod format;
mod player;
mod synth;
mod trace;

use thiserror::Error;

use crate::kv::KvError;

pub use format::{Dataset, Group, Labels, ReplayLog};
pub use player::{replay, NoDelay, Pacer, ReplayStats, WallClockPacer};
pub use synth::{attack_fraction, generate_synthetic, read_spec, SynthSpec};
pub use trace::{
    ingest, merge_logs, parse_cpu_log, parse_strace, parse_strace_absolute, parse_timestamp_us,
    rebase, SyscallTable, TraceStats, CPU_SIGNAL, MAX_SKIPPED_FRACTION,
};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{skipped} of {total} trace lines could not be used")]
    TooManySkipped { skipped: usize, total: usize },
    #[error("invalid spec: {0}")]
    Spec(#[from] KvError),
    #[error("replay rate must be positive, got {0}")]
    Rate(f64),
    #[error("log contains signal events but no signal connection was given")]
    NoSignalConnection,
    #[error("connection lost after {sent} events, {unsent} unsent: {source}")]
    ConnectionLost {
        sent: usize,
        unsent: usize,
        #[source]
        source: std::io::Error,
    },
}

impl ReplayError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        ReplayError::Parse {
            line,
            message: message.into(),
        }
    }
}
