//! Browser bindings for the demo page. Each export takes plain values and
//! returns JSON; the same functions are usable natively for testing.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use wasm_bindgen::prelude::*;

use tissue::policy::{run_deterministic, signal_comparison, ArmSummary, PolicyStats, Runner};
use tissue::replay::{generate_synthetic, Dataset, SynthSpec, SyscallTable};
use tissue::twocell::update_action_time;
use tissue::Config;

/// A minute of short bursts 20 s apart with one attack window.
pub const DEFAULT_SPEC: &str = "group=success
duration_s=60
active=0-0.4
active=20-20.4
active=40-40.4
normal=6:40
normal=3:30
normal=4:25
normal=5:20
normal=197:12
normal=192:8
normal=45:5
normal=54:4
normal=13:2
attack_window=30-30.5
attack=11:70
attack=63:60
attack=42:55
attack=213:20
cpu_period_s=1
cpu_baseline=0.05
cpu_per_event=0.001
cpu_attack_burst=0.3
cpu_quantum=0.01
";

#[derive(Debug, Serialize)]
pub struct RatePoint {
    pub t_s: u64,
    pub antigen: f64,
    pub responses: f64,
}

#[derive(Debug, Serialize)]
pub struct SyscallRow {
    pub label: String,
    pub freq: u64,
    pub responses: u64,
}

#[derive(Debug, Serialize)]
pub struct Simulation {
    pub antigen_events: usize,
    pub total_responses: usize,
    pub rates: Vec<RatePoint>,
    /// Ordered by dataset frequency, most frequent first.
    pub syscalls: Vec<SyscallRow>,
    pub permitted: Vec<String>,
    /// `[t_s, lock value, responded to]` for every lock value expressed by
    /// some Type 2 cell at a probe time.
    pub repertoire: Vec<(u64, u32, bool)>,
}

#[derive(Debug, Serialize)]
pub struct Arm {
    pub mean_action_time: f64,
    pub mean_burst_s: f64,
    pub peak_s: Option<u64>,
    pub mean_responses: f64,
    pub rate: Vec<f64>,
}

impl From<&ArmSummary> for Arm {
    fn from(a: &ArmSummary) -> Self {
        Arm {
            mean_action_time: a.mean_action_time,
            mean_burst_s: a.mean_burst_s,
            peak_s: a.peak_s,
            mean_responses: a.mean_responses,
            rate: a.rate.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub fixed_action_time: u32,
    pub signal: Arm,
    pub fixed: Arm,
}

fn dataset(spec: &str, seed: u64) -> Result<Dataset, String> {
    let spec = SynthSpec::parse(spec).map_err(|e| e.to_string())?;
    Ok(generate_synthetic(&spec, seed))
}

/// A shorter replay delay and grace period keep the demo responsive.
fn demo_config() -> Config {
    Config {
        replay_delay: 2_000_000,
        grace_period: 20_000_000,
        ..Config::default()
    }
}

/// Distinct `(second, lock)` pairs from the repertoire probe CSV.
fn repertoire_points(csv: &str, permitted: &BTreeSet<u32>) -> Vec<(u64, u32, bool)> {
    let mut seen = BTreeSet::new();
    for line in csv.lines().skip(1) {
        let mut fields = line.split(',');
        let Some(t_us) = fields.next().and_then(|t| t.parse::<u64>().ok()) else {
            continue;
        };
        // Skip the cell index and match counter.
        for lock in fields.skip(2).filter_map(|l| l.parse::<u32>().ok()) {
            seen.insert((t_us / 1_000_000, lock));
        }
    }
    seen.into_iter()
        .map(|(t, v)| (t, v, permitted.contains(&v)))
        .collect()
}

pub fn simulate_native(spec: &str, seed: u64) -> Result<Simulation, String> {
    let d = dataset(spec, seed)?;
    let out = run_deterministic(&demo_config(), &d.log.events, seed, true).map_err(|e| e.to_string())?;
    let stats = PolicyStats::compute(std::slice::from_ref(&d), &[out.responses.as_slice()]);
    let table = SyscallTable::get();
    let policy = out.policy();
    let permitted_values: BTreeSet<u32> = policy.permitted.iter().map(|v| v.0).collect();
    Ok(Simulation {
        antigen_events: d.log.antigen_count(),
        total_responses: out.responses.len(),
        rates: out
            .rate_series()
            .into_iter()
            .map(|(t_s, antigen, responses)| RatePoint { t_s, antigen, responses })
            .collect(),
        syscalls: stats
            .rows
            .iter()
            .rev()
            .map(|r| SyscallRow {
                label: table.label(r.syscall.0),
                freq: r.freq,
                responses: r.counts[0],
            })
            .collect(),
        permitted: policy.permitted.iter().map(|v| table.label(v.0)).collect(),
        repertoire: out
            .repertoire
            .as_deref()
            .map(|csv| repertoire_points(csv, &permitted_values))
            .unwrap_or_default(),
    })
}

pub fn compare_native(spec: &str, seed: u64, runs: u32) -> Result<Comparison, String> {
    let d = dataset(spec, seed)?;
    let c = signal_comparison(&demo_config(), &d, u64::from(runs.max(1)), seed, &Runner::deterministic(1))
        .map_err(|e| e.to_string())?;
    Ok(Comparison {
        fixed_action_time: c.fixed_action_time,
        signal: (&c.signal).into(),
        fixed: (&c.fixed).into(),
    })
}

/// Action time after each level in turn, starting from `initial`, with the
/// previous level taken as 0 before the first.
pub fn action_times_native(levels: &[f64], initial: u32) -> Vec<u32> {
    let mut current = initial;
    let mut last = 0.0;
    levels
        .iter()
        .map(|&l| {
            current = update_action_time(current, last, l, initial);
            last = l;
            current
        })
        .collect()
}

/// Per-syscall counts as `{label: freq}`, for the spec editor preview.
pub fn spec_summary_native(spec: &str, seed: u64) -> Result<BTreeMap<String, u64>, String> {
    let d = dataset(spec, seed)?;
    let table = SyscallTable::get();
    let mut m = BTreeMap::new();
    for e in &d.log.events {
        if let tissue::EventKind::Antigen(v) = e.kind {
            *m.entry(table.label(v.0)).or_insert(0) += 1;
        }
    }
    Ok(m)
}

fn json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn default_spec() -> String {
    DEFAULT_SPEC.to_string()
}

/// Runs one deterministic simulation of a synthetic dataset.
#[wasm_bindgen]
pub fn simulate(spec: &str, seed: u32) -> Result<String, JsError> {
    json(simulate_native(spec, u64::from(seed)))
}

/// Signal-driven versus fixed action time over `runs` seeds.
#[wasm_bindgen]
pub fn compare_signal(spec: &str, seed: u32, runs: u32) -> Result<String, JsError> {
    json(compare_native(spec, u64::from(seed), runs))
}

/// Applies the action-time rule to a comma separated list of levels.
#[wasm_bindgen]
pub fn action_times(levels: &str, initial: u32) -> Result<String, JsError> {
    let parsed: Result<Vec<f64>, String> = levels
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("not a number: {s:?}")))
        .collect();
    json(parsed.map(|l| action_times_native(&l, initial.max(1))))
}

#[wasm_bindgen]
pub fn spec_summary(spec: &str, seed: u32) -> Result<String, JsError> {
    json(spec_summary_native(spec, u64::from(seed)))
}
