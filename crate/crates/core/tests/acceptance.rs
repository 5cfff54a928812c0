//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Datasets come from the specs in `experiments/`, generated with the same
//! seeds the sample plan uses, or are built here where a criterion fixes
//! their shape.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tissue::cells::antigen_receptor_step;
use tissue::engine::{response_csv, run_server, Engine, RunClock, ServerOptions};
use tissue::model::{AntigenStore, Cell, CellType, TissueCompartment};
use tissue::policy::stats::{cross_correlation, median, peak_lag, spearman};
use tissue::policy::{
    evaluate_policy, naive_policy, run_deterministic, run_live, signal_comparison, Plan,
    PolicyStats, Runner, Transport,
};
use tissue::protocol::{decode, encode, ClientKind, Endpoint, Listeners, WireMessage};
use tissue::replay::{generate_synthetic, Dataset, Group, SynthSpec, SyscallTable};
use tissue::twocell::{update_action_time, TwoCellState, MATCH_COUNTER, TYPE2};
use tissue::{AntigenValue, Config, ReplayEvent, TwoCell};

/// Seed shared by every criterion that runs the model.
const SEED: u64 = 42;
/// Binomial tolerance for the transfer oracle, in standard deviations.
const TRANSFER_SIGMAS: f64 = 3.0;
const TRANSFER_TRIALS: u32 = 100_000;
const SELECTIVITY_MIN_RHO: f64 = 0.7;
const MAX_TRACKING_LAG_S: i64 = 5;
const DRAIN_LIMIT_S: f64 = 60.0;
const NAIVE_SUCCESS_MIN_PERMIT: u32 = 85;
const TWOCELL_SUCCESS_MIN_DENY: u32 = 40;
const FAILURE_MAX_ATTACK: u32 = 20;
const LIVE_RUN_LIMIT: Duration = Duration::from_secs(10);
const WORKERS: usize = 8;

fn experiments_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../experiments")
}

fn plan() -> Plan {
    Plan::read(&experiments_dir().join("plan.txt")).expect("sample plan")
}

fn dataset(name: &str) -> Dataset {
    let p = plan();
    p.load_dataset(&experiments_dir().join(format!("{name}.spec")))
        .expect("sample dataset")
}

fn reference() -> Config {
    plan().load_config().expect("reference config")
}

/// Runs `f` over `items` on a few threads, keeping order.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let out: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    let next = std::sync::atomic::AtomicUsize::new(0);
    thread::scope(|s| {
        for _ in 0..WORKERS {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                out.lock().unwrap()[i] = Some(r);
            });
        }
    });
    out.into_inner().unwrap().into_iter().map(Option::unwrap).collect()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn determinism() -> Outcome {
    let config = reference();
    let d = dataset("success1");
    let a = run_deterministic(&config, &d.log.events, SEED, true).unwrap();
    let b = run_deterministic(&config, &d.log.events, SEED, true).unwrap();
    let same_responses = response_csv(&a.responses) == response_csv(&b.responses);
    let same_probe = a.repertoire == b.repertoire && a.repertoire.is_some();

    let start = Instant::now();
    let live = run_live(&config, &d.log.events, SEED, false, 100.0, Transport::Loopback).unwrap();
    let wall = start.elapsed();
    let ingested: u32 = live.reports.iter().map(|r| r.ingested).sum();
    let complete = ingested as usize == d.log.antigen_count();
    outcome(
        same_responses && same_probe && wall < LIVE_RUN_LIMIT && complete && !a.responses.is_empty(),
        format!(
            "{} responses identical={same_responses} probe identical={same_probe}; 100x live run {:.2?} (limit {LIVE_RUN_LIMIT:?}), {ingested} antigen ingested",
            a.responses.len(),
            wall
        ),
    )
}

fn transfer_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for k in [10usize, 100, 500] {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + k as u64);
        let mut tissue = AntigenStore::with_capacity(1000);
        for i in 0..k {
            tissue.put(i, AntigenValue(1));
        }
        let mut cell: Cell<()> = Cell::new(CellType(1), ())
            .with_antigen_store(100)
            .with_antigen_receptors(1);
        let mut hits = 0u32;
        for _ in 0..TRANSFER_TRIALS {
            if antigen_receptor_step(&mut cell, &mut tissue, &mut rng) == 1 {
                hits += 1;
                // Restore occupancy k for the next trial.
                let slot = (0..k).find(|&i| tissue.get(i).is_none()).unwrap();
                tissue.put(slot, AntigenValue(1));
            }
        }
        let p = k as f64 / 1000.0;
        let n = f64::from(TRANSFER_TRIALS);
        let sigma = (n * p * (1.0 - p)).sqrt();
        let z = (f64::from(hits) - n * p).abs() / sigma;
        worst = worst.max(z);
        details.push(format!("k={k}: {:.4} vs {p} ({z:.2} sigma)", f64::from(hits) / n));
    }
    outcome(worst <= TRANSFER_SIGMAS, details.join(", "))
}

fn population(c: &TissueCompartment<TwoCellState>) -> BTreeMap<AntigenValue, u64> {
    let mut m = BTreeMap::new();
    let cells = c
        .cells
        .iter()
        .flat_map(|cell| cell.antigen_store.values().chain(cell.displayed()));
    for v in c.antigen.values().chain(cells) {
        *m.entry(v).or_insert(0) += 1;
    }
    m
}

/// Violations of "no value's population grows outside ingest" over one run.
fn conservation_run(config: &Config, events: &[ReplayEvent], seed: u64) -> usize {
    let mut e = Engine::new(config.tissue.clone(), TwoCell::new(config.twocell.clone()), seed).unwrap();
    let offset = config.replay_delay;
    let until = offset + events.last().map_or(0, |e| e.t_us) + config.grace_period;
    let mut next = 0;
    let mut violations = 0;
    while e.now_us() < until {
        while next < events.len() && events[next].t_us + offset < e.now_us() {
            e.apply(events[next].kind);
            next += 1;
        }
        let before = population(e.compartment());
        e.advance().unwrap();
        let after = population(e.compartment());
        violations += after
            .iter()
            .filter(|(v, &n)| n > before.get(v).copied().unwrap_or(0))
            .count();
    }
    violations
}

fn conservation() -> Outcome {
    let config = reference();
    let d = dataset("success1");
    let seeds: Vec<u64> = (0..20).map(|i| SEED + i).collect();
    let v: usize = par_map(&seeds, |&s| conservation_run(&config, &d.log.events, s))
        .into_iter()
        .sum();
    outcome(v == 0, format!("{v} violations over 20 runs"))
}

fn type2_snapshot(e: &Engine<TwoCell>) -> Vec<(usize, i64, u64, Vec<AntigenValue>)> {
    e.compartment()
        .cells_of(TYPE2)
        .map(|(i, c)| {
            let redraws = match &c.state {
                TwoCellState::Type2(s) => s.redraws,
                TwoCellState::Type1(_) => unreachable!(),
            };
            (i, c.internal_cytokines[MATCH_COUNTER], redraws, c.locks().collect())
        })
        .collect()
}

fn lifespan_case(seed: u64) -> Result<(), TestCaseError> {
    let config = reference();
    let lifespan = config.twocell.cell_lifespan_2;
    let mut e = Engine::new(config.tissue.clone(), TwoCell::new(config.twocell.clone()), seed).unwrap();
    // Without antigen nothing matches: every cell redraws exactly at the end
    // of each lifespan and keeps its locks in between.
    let mut prev = type2_snapshot(&e);
    for t in 1..=(3 * lifespan + 50) {
        e.advance().unwrap();
        let now = type2_snapshot(&e);
        for (p, n) in prev.iter().zip(&now) {
            prop_assert_eq!(n.2, t / lifespan);
            if t % lifespan == 0 {
                prop_assert_eq!(n.2, p.2 + 1);
            } else {
                prop_assert_eq!(&n.3, &p.3);
            }
        }
        prev = now;
    }
    // Feed every lock value so cells start matching, then check that a cell
    // never changes its locks after its first match.
    let values: Vec<AntigenValue> = prev.iter().flat_map(|c| c.3.iter().copied()).collect();
    let mut frozen: BTreeMap<usize, Vec<AntigenValue>> = BTreeMap::new();
    for t in 0..(3 * lifespan) {
        if t < lifespan {
            for v in values.iter().skip((t as usize * 7) % values.len()).step_by(97) {
                e.ingest_antigen(*v);
            }
        }
        e.advance().unwrap();
        for (i, counter, _, locks) in type2_snapshot(&e) {
            if let Some(f) = frozen.get(&i) {
                prop_assert_eq!(f, &locks);
            } else if counter > 0 {
                frozen.insert(i, locks);
            }
        }
    }
    prop_assert!(!frozen.is_empty());
    Ok(())
}

fn lifespan() -> Outcome {
    let mut runner = TestRunner::new(PropConfig {
        cases: 16,
        failure_persistence: None,
        ..PropConfig::default()
    });
    match runner.run(&any::<u64>(), lifespan_case) {
        Ok(()) => outcome(true, "16 seeds: redraw exactly every 100 ticks, matched cells frozen"),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn action_time_law() -> Outcome {
    let stay = update_action_time(100, 0.5, 0.5, 100);
    let halve = update_action_time(100, 0.5, 0.3, 100);
    let reset = update_action_time(50, 0.3, 0.6, 100);
    let mut at = 100;
    let mut level = 1.0;
    let mut halvings = 0;
    while at > 1 {
        let next = level / 2.0;
        at = update_action_time(at, level, next, 100);
        level = next;
        halvings += 1;
    }
    let floor_holds = update_action_time(1, 0.2, 0.1, 100) == 1;
    outcome(
        stay == 100 && halve == 50 && reset == 100 && halvings <= 7 && floor_holds,
        format!("stay {stay}, halve {halve}, reset {reset}; floor 1 after {halvings} halvings"),
    )
}

fn random_spec(rng: &mut ChaCha8Rng) -> SynthSpec {
    let duration = rng.random_range(5.0..30.0);
    let mut spec = SynthSpec {
        group: Group::Normal,
        duration_s: duration,
        ..SynthSpec::default()
    };
    for _ in 0..rng.random_range(1..4) {
        let a: f64 = rng.random_range(0.0..duration - 1.0);
        spec.active.push((a, a + rng.random_range(0.1..1.0)));
    }
    for _ in 0..rng.random_range(1..25) {
        spec.normal.push((rng.random_range(0..341), rng.random_range(0.5..200.0)));
    }
    spec
}

fn containment() -> Outcome {
    let config = reference();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let cases: Vec<(u64, Dataset)> = (0..100)
        .map(|i| (SEED + i, generate_synthetic(&random_spec(&mut rng), SEED + i)))
        .collect();
    let results = par_map(&cases, |(seed, d)| {
        let out = run_deterministic(&config, &d.log.events, *seed, false).unwrap();
        let policy = out.policy();
        let naive = naive_policy(std::slice::from_ref(d));
        (policy.is_subset(&naive), policy.len(), naive.len())
    });
    let violations = results.iter().filter(|r| !r.0).count();
    let permitted: usize = results.iter().map(|r| r.1).sum();
    let seen: usize = results.iter().map(|r| r.2).sum();
    outcome(
        violations == 0,
        format!("{violations} violations in 100 runs ({permitted} permitted of {seen} seen)"),
    )
}

/// Twenty syscalls with Poisson means spread geometrically over 2..=500,
/// arriving in five short bursts like the normal datasets.
fn selectivity_dataset() -> Dataset {
    let table = SyscallTable::get();
    let names = [
        "chdir", "execve", "uname", "time", "access", "getpid", "getdents", "getcwd",
        "rt_sigprocmask", "rt_sigaction", "gettimeofday", "poll", "ioctl", "brk", "stat64",
        "munmap", "mmap2", "fstat64", "open", "close",
    ];
    let mut spec = SynthSpec {
        group: Group::Normal,
        duration_s: 100.0,
        active: (0..5).map(|i| (20.0 * i as f64, 20.0 * i as f64 + 0.4)).collect(),
        ..SynthSpec::default()
    };
    for (i, n) in names.iter().enumerate() {
        let mean = 2.0 * 250f64.powf(i as f64 / (names.len() - 1) as f64);
        spec.normal.push((table.number(n).expect("known syscall"), mean));
    }
    let mut d = generate_synthetic(&spec, SEED);
    d.name = "selectivity".into();
    d
}

fn selectivity_stats() -> PolicyStats {
    let config = reference();
    let d = selectivity_dataset();
    let seeds: Vec<u64> = (0..20).map(|i| SEED + i).collect();
    let runs = par_map(&seeds, |&s| run_deterministic(&config, &d.log.events, s, false).unwrap().responses);
    let refs: Vec<&[tissue::ResponseRecord]> = runs.iter().map(Vec::as_slice).collect();
    PolicyStats::compute(std::slice::from_ref(&d), &refs)
}

fn frequency_selectivity(stats: &PolicyStats) -> Outcome {
    let freq: Vec<f64> = stats.rows.iter().map(|r| r.freq as f64).collect();
    let mean: Vec<f64> = stats.rows.iter().map(|r| r.mean).collect();
    let incl: Vec<f64> = stats.rows.iter().map(|r| r.inclusions() as f64).collect();
    let rho = spearman(&freq, &mean).unwrap_or(0.0);
    let rho_incl = spearman(&freq, &incl).unwrap_or(f64::NAN);
    outcome(
        rho >= SELECTIVITY_MIN_RHO,
        format!(
            "{} syscalls, freq {}..{}; rho(freq, mean responses per run) = {rho:.3} (min {SELECTIVITY_MIN_RHO}); rho(freq, runs permitting) = {rho_incl:.3} (informational)",
            stats.rows.len(),
            freq.first().copied().unwrap_or(0.0),
            freq.last().copied().unwrap_or(0.0)
        ),
    )
}

fn cv_trend(stats: &PolicyStats) -> Outcome {
    // Rows are ordered by frequency.
    let cv: Vec<f64> = stats.rows.iter().map(|r| r.cv.map_or(f64::NAN, f64::from)).collect();
    let half = cv.len() / 2;
    let lower: Vec<f64> = cv[..half].iter().copied().filter(|x| !x.is_nan()).collect();
    let upper: Vec<f64> = cv[cv.len() - half..].iter().copied().filter(|x| !x.is_nan()).collect();
    let (lo, hi) = (median(&lower), median(&upper));
    outcome(
        matches!((lo, hi), (Some(l), Some(h)) if l > h),
        format!("median cv lower half {lo:?}, upper half {hi:?}"),
    )
}

fn rate_tracking() -> Outcome {
    let config = reference();
    let p = plan();
    let d = dataset("normal2");
    // The sample plan's trace run: the first run on normal2.
    let run = p.trace_run;
    let out = run_deterministic(&config, &d.log.events, p.seed + run, false).unwrap();
    let series = out.rate_series();
    let antigen: Vec<f64> = series.iter().map(|s| s.1).collect();
    let responses: Vec<f64> = series.iter().map(|s| s.2).collect();
    let lag = peak_lag(&cross_correlation(&antigen, &responses, 10));
    let last_antigen = out.reports.iter().rev().find(|r| r.ingested > 0).map(|r| r.t_us);
    let last_response = out.responses.last().map(|r| r.t_us);
    let drained = match (last_antigen, last_response) {
        (Some(a), Some(r)) => (r.saturating_sub(a)) as f64 / 1e6,
        _ => f64::INFINITY,
    };
    let quiet_end = responses.last() == Some(&0.0);
    outcome(
        matches!(lag, Some(l) if (0..=MAX_TRACKING_LAG_S).contains(&l))
            && drained <= DRAIN_LIMIT_S
            && quiet_end,
        format!(
            "peak lag {lag:?} s (0..={MAX_TRACKING_LAG_S}); last response {drained:.1} s after last antigen (limit {DRAIN_LIMIT_S}); silent at end {quiet_end}"
        ),
    )
}

fn signal_sharpening() -> Outcome {
    let config = reference();
    let p = plan();
    let d = dataset("success1");
    let cmp = signal_comparison(&config, &d, 20, p.seed, &Runner::deterministic(WORKERS)).unwrap();
    let (s, f) = (&cmp.signal, &cmp.fixed);
    let shorter = s.responding_runs == s.runs && f.responding_runs == f.runs && s.mean_burst_s < f.mean_burst_s;
    let earlier = matches!((s.peak_s, f.peak_s), (Some(a), Some(b)) if a < b);
    outcome(
        shorter && earlier,
        format!(
            "mean action time {:.2} -> fixed {}; burst {:.2} s vs {:.2} s; peak at {:?} s vs {:?} s",
            s.mean_action_time, cmp.fixed_action_time, s.mean_burst_s, f.mean_burst_s, s.peak_s, f.peak_s
        ),
    )
}

fn arb_message() -> impl Strategy<Value = WireMessage> {
    let kind = prop_oneof![
        Just(ClientKind::Antigen),
        Just(ClientKind::Signal),
        Just(ClientKind::Response)
    ];
    prop_oneof![
        (kind, any::<u32>()).prop_map(|(kind, version)| WireMessage::Hello { kind, version }),
        any::<u32>().prop_map(|v| WireMessage::Antigen(AntigenValue(v))),
        (any::<u32>(), 0.0..1e9f64).prop_map(|(id, level)| WireMessage::Signal { id, level }),
        (any::<u32>(), any::<u64>())
            .prop_map(|(v, t_us)| WireMessage::Response { antigen: AntigenValue(v), t_us }),
        Just(WireMessage::Bye),
    ]
}

fn mutate(line: &[u8], rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut l = line.to_vec();
    for _ in 0..rng.random_range(1..4) {
        match rng.random_range(0..4) {
            0 if !l.is_empty() => {
                let i = rng.random_range(0..l.len());
                l[i] = rng.random();
            }
            1 if !l.is_empty() => {
                l.remove(rng.random_range(0..l.len()));
            }
            2 => {
                let i = rng.random_range(0..=l.len());
                l.insert(i, rng.random());
            }
            _ => l.truncate(rng.random_range(0..=l.len())),
        }
    }
    // A line cannot contain its own terminator.
    l.retain(|&b| b != b'\n');
    l
}

fn protocol() -> Outcome {
    let mut runner = TestRunner::new(PropConfig {
        cases: 10_000,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let roundtrip = runner.run(&arb_message(), |m| {
        prop_assert_eq!(decode(encode(&m).as_bytes()).unwrap(), m);
        Ok(())
    });

    // Fuzz a live server: each mutated line is followed by a valid one so
    // the connection is not dropped for consecutive errors.
    let config = reference();
    let mut engine = Engine::new(config.tissue.clone(), TwoCell::new(config.twocell.clone()), SEED).unwrap();
    engine.validate_every_tick(true);
    let listeners = Listeners::bind(&Endpoint::Loopback, 1 << 16).unwrap();
    let handle = &listeners.handle;
    let conns: Vec<_> = (0..101).map(|_| handle.connect_loopback()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let valid = [
        "ANTIGEN 6", "SIGNAL 0 0.5", "HELLO antigen 1", "RESPONSE 5 10", "ANTIGEN 4294967295",
    ];
    let client = thread::spawn(move || {
        let mut mutated = 0;
        let mut conns = conns.into_iter();
        // Held open throughout so the run cannot end early.
        let mut last = conns.next().unwrap();
        last.write_all(b"HELLO antigen 1\n").unwrap();
        for _ in 0..100 {
            let mut s = conns.next().unwrap();
            let _ = s.write_all(b"HELLO antigen 1\n");
            for _ in 0..100 {
                let base = valid[rng.random_range(0..valid.len())];
                let mut line = mutate(base.as_bytes(), &mut rng);
                line.extend_from_slice(b"\nANTIGEN 3\n");
                if s.write_all(&line).is_err() {
                    break;
                }
                mutated += 1;
            }
            let _ = s.write_all(b"BYE\n");
        }
        // The server still serves well-formed clients afterwards.
        last.write_all(b"ANTIGEN 7\nANTIGEN 7\nBYE\n").unwrap();
        mutated
    });
    let opts = ServerOptions {
        grace_us: 1_000_000,
        // 60 s of wall time at 1000x; only a backstop against a hang.
        max_run_us: Some(60_000_000_000),
        ..ServerOptions::default()
    };
    let clock = RunClock::accelerated(config.tissue.cell_update_rate_us, 1000.0);
    let transcript = run_server(&mut engine, listeners, clock, &opts);
    let mutated = client.join().unwrap();
    let valid_state = engine.compartment().validate().is_ok();
    let (ok, detail) = match &transcript {
        Ok(t) => (
            valid_state && t.events >= 100 * 100 + 2,
            format!("{} events applied, {} signals rejected", t.events, t.rejected_signals),
        ),
        Err(e) => (false, e.to_string()),
    };
    outcome(
        roundtrip.is_ok() && mutated == 10_000 && ok,
        format!(
            "10000 round trips {}; {mutated} mutated lines sent, {detail}, compartment valid {valid_state}",
            if roundtrip.is_ok() { "exact" } else { "FAILED" }
        ),
    )
}

fn table_iv() -> Outcome {
    let config = reference();
    let p = plan();
    let naive = naive_policy(&[dataset("normal1"), dataset("normal2")]);
    let trace = run_deterministic(&config, &dataset("normal2").log.events, p.seed + p.trace_run, false)
        .unwrap()
        .policy();
    let mut pass = true;
    let mut details = Vec::new();
    for name in ["success1", "success2", "failure1", "failure2"] {
        let d = dataset(name);
        let n = evaluate_policy(&naive, &d);
        let g = evaluate_policy(&trace, &d);
        pass &= if d.group() == Some(Group::Success) {
            n.permit_pct > NAIVE_SUCCESS_MIN_PERMIT && g.deny_pct >= TWOCELL_SUCCESS_MIN_DENY
        } else {
            n.attack_pct <= FAILURE_MAX_ATTACK && g.permit_pct > g.deny_pct
        };
        details.push(format!(
            "{name}: attack {}%, naive permit {}%, twocell permit {}% deny {}%",
            n.attack_pct, n.permit_pct, g.permit_pct, g.deny_pct
        ));
    }
    outcome(pass, details.join("; "))
}

type Check<'a> = (&'static str, Box<dyn FnOnce() -> Outcome + 'a>);

fn main() {
    let stats = selectivity_stats();
    let checks: Vec<Check> = vec![
        ("determinism", Box::new(determinism)),
        ("transfer probability", Box::new(transfer_oracle)),
        ("antigen conservation", Box::new(conservation)),
        ("lifespan mechanics", Box::new(lifespan)),
        ("action-time law", Box::new(action_time_law)),
        ("policy containment", Box::new(containment)),
        ("frequency selectivity", Box::new(|| frequency_selectivity(&stats))),
        ("cv trend", Box::new(|| cv_trend(&stats))),
        ("response-rate tracking", Box::new(rate_tracking)),
        ("signal sharpening", Box::new(signal_sharpening)),
        ("protocol round trip and fuzzing", Box::new(protocol)),
        ("policy evaluation ordering", Box::new(table_iv)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.into_iter().enumerate() {
        let start = Instant::now();
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "AC{:<2} {} {name} ({:.1?}): {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed(),
            o.detail
        );
    }
    println!("{} of 12 criteria passed", 12 - failed);
    std::process::exit(i32::from(failed > 0));
}
