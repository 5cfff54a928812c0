//! Conversion of raw monitor output (timestamped strace logs and CPU
//! samples) into replay events.

use std::collections::HashMap;
use std::sync::OnceLock;

use log::warn;

use super::ReplayError;
use crate::model::{EventKind, ReplayEvent};

const TABLE: &str = include_str!("../../data/syscalls_i386.txt");

/// Signal id that CPU samples are replayed on.
pub const CPU_SIGNAL: usize = 0;
/// Skipped lines above this fraction make a trace unusable.
pub const MAX_SKIPPED_FRACTION: f64 = 0.10;

/// Name → number lookup over the bundled i386 table.
pub struct SyscallTable {
    by_name: HashMap<&'static str, u32>,
    names: HashMap<u32, &'static str>,
}

impl SyscallTable {
    pub fn get() -> &'static SyscallTable {
        static T: OnceLock<SyscallTable> = OnceLock::new();
        T.get_or_init(|| Self::parse(TABLE))
    }

    fn parse(text: &'static str) -> Self {
        let mut by_name = HashMap::new();
        let mut names = HashMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let n: u32 = it
                .next()
                .and_then(|s| s.parse().ok())
                .expect("syscall table: bad number");
            for (i, name) in it.enumerate() {
                if i == 0 {
                    names.insert(n, name);
                }
                by_name.insert(name, n);
            }
        }
        SyscallTable { by_name, names }
    }

    pub fn number(&self, name: &str) -> Option<u32> {
        self.by_name.get(name).copied()
    }

    /// Canonical name, as strace prints it.
    pub fn name(&self, number: u32) -> Option<&'static str> {
        self.names.get(&number).copied()
    }

    /// `name(number)`, or just the number when it is not in the table.
    pub fn label(&self, number: u32) -> String {
        match self.name(number) {
            Some(n) => format!("{n}({number})"),
            None => number.to_string(),
        }
    }
}

/// Parses `<seconds>.<fraction>` into whole microseconds without going
/// through floating point. Also accepts `HH:MM:SS.fraction`.
pub fn parse_timestamp_us(tok: &str) -> Option<u64> {
    let (whole, frac) = tok.split_once('.').unwrap_or((tok, ""));
    if frac.len() > 9 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let secs: u64 = if whole.contains(':') {
        let parts: Vec<&str> = whole.split(':').collect();
        let [h, m, s] = parts.as_slice() else {
            return None;
        };
        let p = |x: &str| -> Option<u64> {
            (!x.is_empty() && x.bytes().all(|b| b.is_ascii_digit()))
                .then(|| x.parse().ok())
                .flatten()
        };
        p(h)? * 3600 + p(m)? * 60 + p(s)?
    } else {
        if whole.is_empty() || !whole.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        whole.parse().ok()?
    };
    let mut micros = 0u64;
    for (i, b) in frac.bytes().take(6).enumerate() {
        micros += u64::from(b - b'0') * 10u64.pow(5 - i as u32);
    }
    secs.checked_mul(1_000_000)?.checked_add(micros)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceStats {
    pub lines: usize,
    pub parsed: usize,
    /// Lines that carried no syscall (signals, exits, resumptions).
    pub ignored: usize,
    pub skipped: usize,
}

enum Line<'a> {
    Call(u64, &'a str),
    Ignore,
    Bad(&'static str),
}

fn classify(line: &str) -> Line<'_> {
    let mut rest = line.trim();
    if rest.is_empty() {
        return Line::Ignore;
    }
    // `[pid 123] ` or a bare leading pid from `strace -f`.
    if let Some(r) = rest.strip_prefix("[pid") {
        match r.split_once(']') {
            Some((_, r)) => rest = r.trim_start(),
            None => return Line::Bad("unterminated pid prefix"),
        }
    }
    let (first, after) = rest.split_once(' ').unwrap_or((rest, ""));
    let (ts, body) = if !first.contains('.') && !first.contains(':') && first.bytes().all(|b| b.is_ascii_digit()) {
        let after = after.trim_start();
        after.split_once(' ').unwrap_or((after, ""))
    } else {
        (first, after)
    };
    let Some(t) = parse_timestamp_us(ts) else {
        return Line::Bad("no timestamp");
    };
    let body = body.trim_start();
    if body.starts_with("<...") || body.starts_with("---") || body.starts_with("+++") {
        return Line::Ignore;
    }
    let Some(paren) = body.find('(') else {
        return Line::Bad("no syscall");
    };
    let name = &body[..paren];
    if name.is_empty() || !name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_') {
        return Line::Bad("malformed syscall name");
    }
    Line::Call(t, name)
}

/// Parses a timestamped strace log into `(t_us, syscall)` with absolute
/// timestamps. Unknown names and unparseable lines are skipped with a
/// warning; more than 10% skipped is an error.
pub fn parse_strace_absolute(text: &str) -> Result<(Vec<(u64, u32)>, TraceStats), ReplayError> {
    let table = SyscallTable::get();
    let mut out = Vec::new();
    let mut st = TraceStats::default();
    for (i, line) in text.lines().enumerate() {
        st.lines += 1;
        match classify(line) {
            Line::Ignore => st.ignored += 1,
            Line::Bad(why) => {
                warn!("strace line {}: {why}: {line:?}", i + 1);
                st.skipped += 1;
            }
            Line::Call(t, name) => match table.number(name) {
                Some(n) => {
                    out.push((t, n));
                    st.parsed += 1;
                }
                None => {
                    warn!("strace line {}: unknown syscall {name:?}", i + 1);
                    st.skipped += 1;
                }
            },
        }
    }
    check_skipped(st.skipped, st.parsed + st.skipped)?;
    // strace -f can interleave slightly out of order; keep ties stable.
    out.sort_by_key(|&(t, _)| t);
    Ok((out, st))
}

fn check_skipped(skipped: usize, total: usize) -> Result<(), ReplayError> {
    if total > 0 && skipped as f64 > MAX_SKIPPED_FRACTION * total as f64 {
        return Err(ReplayError::TooManySkipped { skipped, total });
    }
    Ok(())
}

/// Like [`parse_strace_absolute`], with timestamps rebased so the first
/// call is at 0.
pub fn parse_strace(text: &str) -> Result<Vec<(u64, u32)>, ReplayError> {
    let (mut calls, _) = parse_strace_absolute(text)?;
    let origin = calls.first().map_or(0, |c| c.0);
    rebase(&mut calls, origin);
    Ok(calls)
}

/// Parses `<seconds>.<fraction> <cpu> [more columns]` process-monitor
/// lines into absolute `(t_us, level)` samples.
pub fn parse_cpu_log(text: &str) -> Result<Vec<(u64, f64)>, ReplayError> {
    let mut out = Vec::new();
    let mut skipped = 0;
    let mut total = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        total += 1;
        let mut f = line.split_whitespace();
        let t = f.next().and_then(parse_timestamp_us);
        let level = f
            .next()
            .and_then(|s| s.parse::<f64>().ok())
            .filter(|l| l.is_finite() && *l >= 0.0);
        match (t, level) {
            (Some(t), Some(l)) => out.push((t, l)),
            _ => {
                warn!("cpu log line {}: unparseable: {line:?}", i + 1);
                skipped += 1;
            }
        }
    }
    check_skipped(skipped, total)?;
    out.sort_by_key(|&(t, _)| t);
    Ok(out)
}

/// Subtracts `origin` from every timestamp (saturating at 0).
pub fn rebase<T>(items: &mut [(u64, T)], origin: u64) {
    for it in items {
        it.0 = it.0.saturating_sub(origin);
    }
}

/// Merges time-sorted syscalls and CPU samples sharing one time origin into
/// a single replay event list. At equal times antigen comes first.
pub fn merge_logs(syscalls: &[(u64, u32)], cpu: &[(u64, f64)]) -> Vec<ReplayEvent> {
    let mut out = Vec::with_capacity(syscalls.len() + cpu.len());
    let (mut i, mut j) = (0, 0);
    while i < syscalls.len() || j < cpu.len() {
        let take_antigen = match (syscalls.get(i), cpu.get(j)) {
            (Some(a), Some(s)) => a.0 <= s.0,
            (Some(_), None) => true,
            _ => false,
        };
        if take_antigen {
            out.push(ReplayEvent::antigen(syscalls[i].0, syscalls[i].1));
            i += 1;
        } else {
            out.push(ReplayEvent {
                t_us: cpu[j].0,
                kind: EventKind::Signal {
                    id: CPU_SIGNAL,
                    level: cpu[j].1,
                },
            });
            j += 1;
        }
    }
    out
}

/// Parses both monitor logs, rebases them to their common earliest
/// timestamp and merges them.
pub fn ingest(strace: &str, cpu: Option<&str>) -> Result<Vec<ReplayEvent>, ReplayError> {
    let (mut calls, _) = parse_strace_absolute(strace)?;
    let mut samples = match cpu {
        Some(text) => parse_cpu_log(text)?,
        None => Vec::new(),
    };
    let origin = match (calls.first(), samples.first()) {
        (Some(a), Some(b)) => a.0.min(b.0),
        (Some(a), None) => a.0,
        (None, Some(b)) => b.0,
        (None, None) => 0,
    };
    rebase(&mut calls, origin);
    rebase(&mut samples, origin);
    Ok(merge_logs(&calls, &samples))
}
