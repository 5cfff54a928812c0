//! Replay log and label sidecar text formats.
//!
//! ```text
//! # group=normal
//! # seed=7
//! 0 ANTIGEN 6
//! 500000 ANTIGEN 5
//! 1000000 SIGNAL 0 0.25
//! ```
//!
//! The sidecar `<log>.labels` holds `# group=<name>` followed by one `0` or
//! `1` per event line of the log.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::ReplayError;
use crate::model::{AntigenValue, EventKind, ReplayEvent};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayLog {
    /// `# key=value` header lines, in file order.
    pub meta: Vec<(String, String)>,
    pub events: Vec<ReplayEvent>,
}

impl ReplayLog {
    pub fn new(events: Vec<ReplayEvent>) -> Self {
        ReplayLog {
            meta: Vec::new(),
            events,
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn antigen_count(&self) -> usize {
        self.events.iter().filter(|e| e.kind.is_antigen()).count()
    }

    /// Last event time, or 0 for an empty log.
    pub fn duration_us(&self) -> u64 {
        self.events.last().map_or(0, |e| e.t_us)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}={v}");
        }
        for e in &self.events {
            let _ = writeln!(out, "{}", EventLine(e));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ReplayError> {
        let mut log = ReplayLog::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                if let Some((k, v)) = c.trim().split_once('=') {
                    log.meta.push((k.trim().to_string(), v.trim().to_string()));
                }
                continue;
            }
            let e = parse_event(line).map_err(|m| ReplayError::parse(i + 1, m))?;
            if log.events.last().is_some_and(|p| p.t_us > e.t_us) {
                return Err(ReplayError::parse(i + 1, "events out of time order"));
            }
            log.events.push(e);
        }
        Ok(log)
    }

    pub fn read(path: &Path) -> Result<Self, ReplayError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), ReplayError> {
        Ok(std::fs::write(path, self.to_text())?)
    }
}

struct EventLine<'a>(&'a ReplayEvent);

impl fmt::Display for EventLine<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0.kind {
            EventKind::Antigen(v) => write!(f, "{} ANTIGEN {v}", self.0.t_us),
            EventKind::Signal { id, level } => write!(f, "{} SIGNAL {id} {level}", self.0.t_us),
        }
    }
}

fn parse_event(line: &str) -> Result<ReplayEvent, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let num = |s: &str| -> Result<u64, String> {
        s.parse().map_err(|_| format!("bad number {s:?}"))
    };
    match fields.as_slice() {
        [t, "ANTIGEN", v] => Ok(ReplayEvent {
            t_us: num(t)?,
            kind: EventKind::Antigen(AntigenValue(
                v.parse().map_err(|_| format!("bad antigen {v:?}"))?,
            )),
        }),
        [t, "SIGNAL", id, level] => {
            let level: f64 = level.parse().map_err(|_| format!("bad level {level:?}"))?;
            if !level.is_finite() || level < 0.0 {
                return Err(format!("signal level {level} must be finite and non-negative"));
            }
            Ok(ReplayEvent {
                t_us: num(t)?,
                kind: EventKind::Signal {
                    id: num(id)? as usize,
                    level,
                },
            })
        }
        _ => Err(format!("unrecognised event line {line:?}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Normal,
    Success,
    Failure,
}

impl Group {
    pub fn as_str(&self) -> &'static str {
        match self {
            Group::Normal => "normal",
            Group::Success => "success",
            Group::Failure => "failure",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "normal" => Ok(Group::Normal),
            "success" => Ok(Group::Success),
            "failure" => Ok(Group::Failure),
            _ => Err(format!("unknown dataset group {s:?}")),
        }
    }
}

/// Dataset group plus one attack flag per log event. `flags` is empty when
/// the dataset carries no per-event labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels {
    pub group: Group,
    pub flags: Vec<bool>,
}

impl Labels {
    pub fn sidecar_path(log: &Path) -> PathBuf {
        let mut s = log.as_os_str().to_owned();
        s.push(".labels");
        PathBuf::from(s)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# group={}\n", self.group);
        for &f in &self.flags {
            out.push(if f { '1' } else { '0' });
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ReplayError> {
        let mut group = None;
        let mut flags = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                if let Some(("group", v)) = c.trim().split_once('=').map(|(k, v)| (k.trim(), v.trim())) {
                    group = Some(v.parse().map_err(|m| ReplayError::parse(i + 1, m))?);
                }
                continue;
            }
            flags.push(match line {
                "0" => false,
                "1" => true,
                _ => return Err(ReplayError::parse(i + 1, format!("bad flag {line:?}"))),
            });
        }
        let group = group.ok_or_else(|| ReplayError::parse(1, "missing # group= header"))?;
        Ok(Labels { group, flags })
    }

    pub fn read(path: &Path) -> Result<Self, ReplayError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), ReplayError> {
        Ok(std::fs::write(path, self.to_text())?)
    }
}

/// A replay log with its labels, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub log: ReplayLog,
    pub labels: Option<Labels>,
}

impl Dataset {
    /// Reads `path` and, if present, its `.labels` sidecar. The group falls
    /// back to the log's `# group=` header.
    pub fn load(path: &Path) -> Result<Self, ReplayError> {
        let log = ReplayLog::read(path)?;
        let side = Labels::sidecar_path(path);
        let labels = if side.exists() {
            let l = Labels::read(&side)?;
            if !l.flags.is_empty() && l.flags.len() != log.events.len() {
                return Err(ReplayError::parse(
                    0,
                    format!(
                        "{} has {} flags for {} events",
                        side.display(),
                        l.flags.len(),
                        log.events.len()
                    ),
                ));
            }
            Some(l)
        } else {
            log.meta("group")
                .and_then(|g| g.parse().ok())
                .map(|group| Labels {
                    group,
                    flags: Vec::new(),
                })
        };
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Dataset { name, log, labels })
    }

    /// Writes the log and, when labelled, its sidecar.
    pub fn save(&self, path: &Path) -> Result<(), ReplayError> {
        self.log.write(path)?;
        if let Some(l) = &self.labels {
            l.write(&Labels::sidecar_path(path))?;
        }
        Ok(())
    }

    pub fn group(&self) -> Option<Group> {
        self.labels.as_ref().map(|l| l.group)
    }
}
