//! Run configuration: the tissue and two-cell parameters plus the few
//! settings a live run needs. Keys are the parameter names themselves.

use std::fmt::Write as _;

use thiserror::Error;

use crate::kv::{self, Entry, KvError};
use crate::model::{ParamError, TissueParams};
use crate::twocell::TwoCellParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Syntax(#[from] KvError),
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    Duplicate { line: usize, key: String },
    #[error(transparent)]
    Param(#[from] ParamError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub tissue: TissueParams,
    pub twocell: TwoCellParams,
    /// Simulated µs to keep running after the last ingest client leaves.
    pub grace_period: u64,
    /// Wall-clock µs between server start and replay start in experiments.
    pub replay_delay: u64,
    pub listen: String,
    pub queue_capacity: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            tissue: TissueParams::reference(),
            twocell: TwoCellParams::reference(),
            grace_period: 60_000_000,
            replay_delay: 10_000_000,
            listen: "127.0.0.1:7777".into(),
            queue_capacity: crate::protocol::DEFAULT_QUEUE_CAPACITY,
        }
    }
}

/// Every accepted key, in canonical output order.
pub const KEYS: &[&str] = &[
    "max_antigen",
    "max_cytokines",
    "max_cells",
    "cell_update_rate",
    "antigen_multiplier",
    "probe_rate",
    "num_cells_1",
    "num_antigen_1",
    "num_antigen_receptors_1",
    "num_antigen_producers_1",
    "antigen_producer_action_time",
    "num_cells_2",
    "cell_lifespan_2",
    "num_cell_receptors_2",
    "num_vr_receptors_2",
    "num_response_producers_2",
    "signal_enabled",
    "initial_action_time",
    "lock_min",
    "lock_max",
    "grace_period",
    "replay_delay",
    "listen",
    "queue_capacity",
];

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Config::default();
        let mut seen = std::collections::HashSet::new();
        for e in kv::parse(text)? {
            if !seen.insert(e.key.clone()) {
                return Err(ConfigError::Duplicate {
                    line: e.line,
                    key: e.key,
                });
            }
            c.set(&e)?;
        }
        c.validate()?;
        Ok(c)
    }

    fn set(&mut self, e: &Entry) -> Result<(), ConfigError> {
        let t = &mut self.tissue;
        let p = &mut self.twocell;
        match e.key.as_str() {
            "max_antigen" => t.max_antigen = e.parse()?,
            "max_cytokines" => t.max_cytokines = e.parse()?,
            "max_cells" => t.max_cells = e.parse()?,
            "cell_update_rate" => t.cell_update_rate_us = e.parse()?,
            "antigen_multiplier" => t.antigen_multiplier = e.parse()?,
            "probe_rate" => t.probe_rate_us = e.parse()?,
            "num_cells_1" => p.num_cells_1 = e.parse()?,
            "num_antigen_1" => p.num_antigen_1 = e.parse()?,
            "num_antigen_receptors_1" => p.num_antigen_receptors_1 = e.parse()?,
            "num_antigen_producers_1" => p.num_antigen_producers_1 = e.parse()?,
            "antigen_producer_action_time" => p.antigen_producer_action_time = e.parse()?,
            "num_cells_2" => p.num_cells_2 = e.parse()?,
            "cell_lifespan_2" => p.cell_lifespan_2 = e.parse()?,
            "num_cell_receptors_2" => p.num_cell_receptors_2 = e.parse()?,
            "num_vr_receptors_2" => p.num_vr_receptors_2 = e.parse()?,
            "num_response_producers_2" => p.num_response_producers_2 = e.parse()?,
            "signal_enabled" => p.signal_enabled = e.parse_bool()?,
            "initial_action_time" => p.initial_action_time = e.parse()?,
            "lock_min" => p.lock_min = e.parse()?,
            "lock_max" => p.lock_max = e.parse()?,
            "grace_period" => self.grace_period = e.parse()?,
            "replay_delay" => self.replay_delay = e.parse()?,
            "listen" => self.listen = e.value.clone(),
            "queue_capacity" => self.queue_capacity = e.parse()?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line: e.line,
                    key: e.key.clone(),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        self.tissue.validate()?;
        self.twocell.validate(&self.tissue)?;
        if self.queue_capacity == 0 {
            return Err(ParamError::Zero("queue_capacity"));
        }
        Ok(())
    }

    /// Canonical text: every key, one per line, in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let t = &self.tissue;
        let p = &self.twocell;
        let values: [String; 24] = [
            t.max_antigen.to_string(),
            t.max_cytokines.to_string(),
            t.max_cells.to_string(),
            t.cell_update_rate_us.to_string(),
            t.antigen_multiplier.to_string(),
            t.probe_rate_us.to_string(),
            p.num_cells_1.to_string(),
            p.num_antigen_1.to_string(),
            p.num_antigen_receptors_1.to_string(),
            p.num_antigen_producers_1.to_string(),
            p.antigen_producer_action_time.to_string(),
            p.num_cells_2.to_string(),
            p.cell_lifespan_2.to_string(),
            p.num_cell_receptors_2.to_string(),
            p.num_vr_receptors_2.to_string(),
            p.num_response_producers_2.to_string(),
            p.signal_enabled.to_string(),
            p.initial_action_time.to_string(),
            p.lock_min.to_string(),
            p.lock_max.to_string(),
            self.grace_period.to_string(),
            self.replay_delay.to_string(),
            self.listen.clone(),
            self.queue_capacity.to_string(),
        ];
        let mut out = String::new();
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_reference_and_round_trips() {
        let c = Config::default();
        assert_eq!(c.tissue.max_antigen, 1000);
        assert_eq!(c.twocell.num_vr_receptors_2, 20);
        let text = c.to_text();
        let back = Config::parse(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn partial_files_override_defaults() {
        let c = Config::parse("antigen_multiplier=3\nsignal_enabled=true\nmax_cytokines=1\n").unwrap();
        assert_eq!(c.tissue.antigen_multiplier, 3);
        assert!(c.twocell.signal_enabled);
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert!(matches!(
            Config::parse("max_antigen=1\nmax_antigens=2\n"),
            Err(ConfigError::UnknownKey { line: 2, .. })
        ));
        assert!(matches!(
            Config::parse("max_antigen=1\nmax_antigen=2\n"),
            Err(ConfigError::Duplicate { .. })
        ));
        assert!(matches!(
            Config::parse("cell_update_rate=0\n"),
            Err(ConfigError::Param(_))
        ));
        assert!(Config::parse("signal_enabled=yes\n").is_err());
        // The signal arm needs a tissue signal to read.
        assert!(Config::parse("signal_enabled=true\n").is_err());
    }
}
