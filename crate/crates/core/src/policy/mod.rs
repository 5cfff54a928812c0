//! Syscall policies derived from datasets and from the responses of the
//! two-cell algorithm, their evaluation on labelled data, and the experiment
//! runner that produces them.

mod experiment;
pub mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::model::{AntigenValue, EventKind, ResponseRecord};
use crate::replay::{Dataset, SyscallTable};

pub use experiment::{
    dataset_seed, rates_csv, run_deterministic, run_experiment, run_live, signal_comparison, trace_csv,
    train_policies, ArmSummary, ExperimentError, ExperimentReport, Plan, RunMode, RunOutput,
    Runner, SignalComparison, TrainedRun, Training, Transport, RATE_BUCKET_US,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Naive,
    Generated(Vec<u64>),
}

/// A permit list; everything else is denied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    pub permitted: BTreeSet<AntigenValue>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Permit,
    Deny,
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("policy line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Policy {
    pub fn deny_all(provenance: Provenance) -> Self {
        Policy {
            permitted: BTreeSet::new(),
            provenance,
        }
    }

    pub fn decide(&self, v: AntigenValue) -> Decision {
        if self.permitted.contains(&v) {
            Decision::Permit
        } else {
            Decision::Deny
        }
    }

    pub fn is_subset(&self, other: &Policy) -> bool {
        self.permitted.is_subset(&other.permitted)
    }

    pub fn len(&self) -> usize {
        self.permitted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permitted.is_empty()
    }

    /// `permit <n>` per rule, closed by `default deny`. Rules are annotated
    /// with the syscall name where known.
    pub fn to_text(&self) -> String {
        let table = SyscallTable::get();
        let mut out = String::new();
        match &self.provenance {
            Provenance::Naive => out.push_str("# provenance=naive\n"),
            Provenance::Generated(runs) => {
                let ids: Vec<String> = runs.iter().map(|r| r.to_string()).collect();
                let _ = writeln!(out, "# provenance=generated runs={}", ids.join(","));
            }
        }
        for v in &self.permitted {
            match table.name(v.0) {
                Some(name) => {
                    let _ = writeln!(out, "permit {v} # {name}");
                }
                None => {
                    let _ = writeln!(out, "permit {v}");
                }
            }
        }
        out.push_str("default deny\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self, PolicyError> {
        let err = |line: usize, m: &str| PolicyError::Parse {
            line,
            message: m.to_string(),
        };
        let mut permitted = BTreeSet::new();
        let mut provenance = Provenance::Naive;
        let mut closed = false;
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            if let Some(c) = raw.trim().strip_prefix('#') {
                let c = c.trim();
                if let Some(rest) = c.strip_prefix("provenance=generated") {
                    let ids = rest.trim().strip_prefix("runs=").unwrap_or("");
                    let runs = ids
                        .split(',')
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse().map_err(|_| err(n, "bad run id")))
                        .collect::<Result<_, _>>()?;
                    provenance = Provenance::Generated(runs);
                }
                continue;
            }
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if closed {
                return Err(err(n, "rule after default deny"));
            }
            match line.split_whitespace().collect::<Vec<_>>().as_slice() {
                ["permit", v] => {
                    permitted.insert(AntigenValue(v.parse().map_err(|_| err(n, "bad value"))?));
                }
                ["default", "deny"] => closed = true,
                _ => return Err(err(n, "expected `permit <n>` or `default deny`")),
            }
        }
        if !closed {
            return Err(err(text.lines().count(), "missing `default deny`"));
        }
        Ok(Policy {
            permitted,
            provenance,
        })
    }

    pub fn read(path: &Path) -> Result<Self, PolicyError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), PolicyError> {
        Ok(std::fs::write(path, self.to_text())?)
    }
}

fn antigen_values(d: &Dataset) -> impl Iterator<Item = AntigenValue> + '_ {
    d.log.events.iter().filter_map(|e| match e.kind {
        EventKind::Antigen(v) => Some(v),
        EventKind::Signal { .. } => None,
    })
}

/// Permits every syscall seen in the datasets.
pub fn naive_policy(datasets: &[Dataset]) -> Policy {
    Policy {
        permitted: datasets.iter().flat_map(antigen_values).collect(),
        provenance: Provenance::Naive,
    }
}

/// Permits exactly the values responded to.
pub fn policy_from_responses(run: u64, responses: &[ResponseRecord]) -> Policy {
    Policy {
        permitted: responses.iter().map(|r| r.antigen).collect(),
        provenance: Provenance::Generated(vec![run]),
    }
}

/// Union of generated policies.
pub fn union_policy(policies: &[Policy]) -> Policy {
    let mut runs = Vec::new();
    let mut permitted = BTreeSet::new();
    for p in policies {
        permitted.extend(p.permitted.iter().copied());
        if let Provenance::Generated(r) = &p.provenance {
            runs.extend(r.iter().copied());
        }
    }
    Policy {
        permitted,
        provenance: Provenance::Generated(runs),
    }
}

/// Dataset frequency and response statistics for one syscall.
#[derive(Debug, Clone, PartialEq)]
pub struct SyscallStats {
    pub syscall: AntigenValue,
    pub freq: u64,
    pub counts: Vec<u64>,
    pub mean: f64,
    pub sd: f64,
    pub cv: Option<u32>,
}

impl SyscallStats {
    /// Runs whose policy permits this syscall.
    pub fn inclusions(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolicyStats {
    pub rows: Vec<SyscallStats>,
}

impl PolicyStats {
    /// One row per syscall occurring in `datasets` or responded to in any
    /// run; ordered by frequency, then mean, then value.
    pub fn compute(datasets: &[Dataset], runs: &[&[ResponseRecord]]) -> Self {
        let mut freq: BTreeMap<AntigenValue, u64> = BTreeMap::new();
        for v in datasets.iter().flat_map(antigen_values) {
            *freq.entry(v).or_default() += 1;
        }
        for r in runs.iter().flat_map(|r| r.iter()) {
            freq.entry(r.antigen).or_default();
        }
        let mut rows: Vec<SyscallStats> = freq
            .into_iter()
            .map(|(syscall, f)| {
                let counts: Vec<u64> = runs
                    .iter()
                    .map(|r| r.iter().filter(|x| x.antigen == syscall).count() as u64)
                    .collect();
                let xs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
                let mean = stats::mean(&xs);
                let sd = stats::sample_sd(&xs);
                SyscallStats {
                    syscall,
                    freq: f,
                    counts,
                    mean,
                    sd,
                    cv: stats::cv_percent(mean, sd),
                }
            })
            .collect();
        rows.sort_by(|a, b| {
            a.freq
                .cmp(&b.freq)
                .then(a.mean.total_cmp(&b.mean))
                .then(a.syscall.cmp(&b.syscall))
        });
        PolicyStats { rows }
    }

    pub fn to_csv(&self) -> String {
        let table = SyscallTable::get();
        let mut out = String::from("syscall,freq,mean,sd,cv,runs_permitting\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.2},{:.2},{},{}",
                table.label(r.syscall.0),
                r.freq,
                r.mean,
                r.sd,
                r.cv.map(|c| c.to_string()).unwrap_or_default(),
                r.inclusions()
            );
        }
        out
    }
}

/// Outcome of applying a policy to a labelled dataset. Percentages are of
/// antigen events and truncated to integers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluation {
    pub dataset: String,
    pub events: u64,
    pub attack: u64,
    pub permitted: u64,
    pub normal_pct: u32,
    pub attack_pct: u32,
    pub permit_pct: u32,
    pub deny_pct: u32,
}

fn pct(part: u64, whole: u64) -> u32 {
    (100 * part).checked_div(whole).unwrap_or(0) as u32
}

pub fn evaluate_policy(policy: &Policy, dataset: &Dataset) -> Evaluation {
    let flags = dataset.labels.as_ref().map(|l| l.flags.as_slice()).unwrap_or(&[]);
    let (mut events, mut attack, mut permitted) = (0u64, 0u64, 0u64);
    for (i, e) in dataset.log.events.iter().enumerate() {
        let EventKind::Antigen(v) = e.kind else { continue };
        events += 1;
        attack += flags.get(i).copied().unwrap_or(false) as u64;
        permitted += (policy.decide(v) == Decision::Permit) as u64;
    }
    Evaluation {
        dataset: dataset.name.clone(),
        events,
        attack,
        permitted,
        normal_pct: pct(events - attack, events),
        attack_pct: pct(attack, events),
        permit_pct: pct(permitted, events),
        deny_pct: pct(events - permitted, events),
    }
}

/// Table-shaped evaluation: one column per dataset, one row per measure.
pub fn evaluation_csv(naive: &[Evaluation], generated: &[Evaluation]) -> String {
    let mut out = String::from("dataset");
    for e in naive {
        out.push(',');
        out.push_str(&e.dataset);
    }
    out.push('\n');
    let mut row = |label: &str, evs: &[Evaluation], f: fn(&Evaluation) -> u32| {
        out.push_str(label);
        for e in evs {
            let _ = write!(out, ",{}%", f(e));
        }
        out.push('\n');
    };
    row("normal syscalls", naive, |e| e.normal_pct);
    row("attack syscalls", naive, |e| e.attack_pct);
    row("naive permit", naive, |e| e.permit_pct);
    row("naive deny", naive, |e| e.deny_pct);
    row("twocell permit", generated, |e| e.permit_pct);
    row("twocell deny", generated, |e| e.deny_pct);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CellType, ReplayEvent};
    use crate::replay::{Group, Labels, ReplayLog};

    fn ds(values: &[u32], flags: &[bool]) -> Dataset {
        Dataset {
            name: "d".into(),
            log: ReplayLog::new(
                values
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| ReplayEvent::antigen(i as u64, v))
                    .collect(),
            ),
            labels: Some(Labels {
                group: Group::Success,
                flags: flags.to_vec(),
            }),
        }
    }

    fn resp(vals: &[u32]) -> Vec<ResponseRecord> {
        vals.iter()
            .map(|&v| ResponseRecord {
                t_us: 0,
                antigen: AntigenValue(v),
                cell_type: CellType(2),
            })
            .collect()
    }

    fn set(v: &[u32]) -> BTreeSet<AntigenValue> {
        v.iter().map(|&x| AntigenValue(x)).collect()
    }

    #[test]
    fn naive_is_union_of_seen_values() {
        assert_eq!(naive_policy(&[ds(&[3, 4], &[]), ds(&[5, 3], &[])]).permitted, set(&[3, 4, 5]));
        assert!(naive_policy(&[ds(&[], &[])]).is_empty());
    }

    #[test]
    fn generated_and_union() {
        let p = policy_from_responses(0, &resp(&[5, 6, 6, 78]));
        assert_eq!(p.permitted, set(&[5, 6, 78]));
        assert!(policy_from_responses(1, &[]).is_empty());
        let u = union_policy(&[
            policy_from_responses(0, &resp(&[5])),
            policy_from_responses(1, &resp(&[6])),
        ]);
        assert_eq!(u.permitted, set(&[5, 6]));
        assert_eq!(u.provenance, Provenance::Generated(vec![0, 1]));
    }

    #[test]
    fn policy_text_round_trip() {
        let p = policy_from_responses(3, &resp(&[6, 5, 400]));
        let text = p.to_text();
        assert!(text.contains("permit 6 # close\n"));
        assert!(text.ends_with("default deny\n"));
        assert_eq!(Policy::parse(&text).unwrap(), p);
        assert!(Policy::parse("permit 1\n").is_err());
        assert!(Policy::parse("default deny\npermit 1\n").is_err());
        assert!(Policy::parse("allow 1\ndefault deny\n").is_err());
    }

    #[test]
    fn evaluation_percentages() {
        let d = ds(&[1, 1, 2, 3], &[true, true, true, false]);
        let deny = Policy::deny_all(Provenance::Naive);
        let e = evaluate_policy(&deny, &d);
        assert_eq!((e.permit_pct, e.deny_pct, e.attack_pct, e.normal_pct), (0, 100, 75, 25));
        let all = naive_policy(std::slice::from_ref(&d));
        assert_eq!(evaluate_policy(&all, &d).permit_pct, 100);
        // 1 of 3 permitted: 33 + 66 = 99, as a truncating table shows.
        let d3 = ds(&[1, 2, 3], &[false; 3]);
        let e = evaluate_policy(&policy_from_responses(0, &resp(&[1])), &d3);
        assert_eq!((e.permit_pct, e.deny_pct), (33, 66));
    }

    #[test]
    fn stats_rows() {
        let d = ds(&[6, 6, 6, 12], &[]);
        let r0 = resp(&[6, 6]);
        let r1 = resp(&[]);
        let s = PolicyStats::compute(&[d], &[&r0, &r1]);
        assert_eq!(s.rows.len(), 2);
        assert_eq!(s.rows[0].syscall, AntigenValue(12));
        let close = &s.rows[1];
        assert_eq!((close.freq, close.mean), (3, 1.0));
        assert!((close.sd - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(close.inclusions(), 1);
        assert!(s.to_csv().starts_with("syscall,freq,mean,sd,cv,runs_permitting\nchdir(12),1,0.00,0.00,,0\n"));
    }
}
