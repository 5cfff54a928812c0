//! An immune-inspired multi-agent runtime: a tissue compartment of cells
//! driven by antigen and signal streams, a line protocol for feeding it,
//! trace replay tooling, the two-cell response algorithm and a harness for
//! deriving syscall policies from its responses.

pub mod cells;
pub mod config;
pub mod engine;
pub mod kv;
pub mod model;
pub mod policy;
pub mod protocol;
pub mod replay;
pub mod twocell;

pub use cells::{ExactMatch, Matcher};
pub use engine::{Algorithm, Engine, EngineError, TissueRng};
pub use model::{AntigenValue, CellType, EventKind, ReplayEvent, ResponseRecord, TissueParams};
pub use config::Config;
pub use twocell::{TwoCell, TwoCellParams};
