//! Experiment runner: repeated training runs, policy aggregation, policy
//! evaluation and the signal versus fixed action time comparison.
//!
//! A plan is a `key=value` file; paths are relative to the plan:
//!
//! ```text
//! # optional; reference parameters otherwise
//! config=reference.conf
//! # deterministic | realtime | accelerated
//! mode=deterministic
//! # replay speed; also the clock factor when accelerated
//! rate=1
//! # loopback | tcp (live modes only)
//! transport=loopback
//! repeats=20
//! # run i uses seed + i
//! seed=42
//! # parallel deterministic runs
//! jobs=1
//! # repeatable; a .spec is generated with a seed derived from `seed`
//! train=normal1.log
//! evaluate=success1.log
//! # single (the trace run) | union
//! eval_policy=single
//! trace_run=0
//! # optional signal comparison dataset
//! signal=success1.log
//! signal_repeats=20
//! out=results
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use log::info;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::stats::{self, bucket_counts};
use super::{
    evaluate_policy, evaluation_csv, naive_policy, policy_from_responses, union_policy, Evaluation,
    Policy, PolicyError, PolicyStats,
};
use crate::config::{Config, ConfigError};
use crate::engine::{
    response_csv, run_server, Engine, EngineError, MemorySink, Probe, RunClock, ServerOptions,
    SharedBuffer, TickReport,
};
use crate::kv::{self, KvError};
use crate::model::{ParamError, ReplayEvent, ResponseRecord};
use crate::protocol::{Client, ClientKind, Endpoint, Listeners};
use crate::replay::{generate_synthetic, read_spec, replay, Dataset, ReplayError, WallClockPacer};
use crate::twocell::{RepertoireSampler, TwoCell};

/// Width of the rate series buckets.
pub const RATE_BUCKET_US: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("plan: {0}")]
    Plan(#[from] KvError),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("run {run}: {message}")]
    Run { run: u64, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunMode {
    /// Events applied by timestamp on a simulated clock; no threads.
    Deterministic,
    /// Live server and replay client on the wall clock, sped up by `rate`.
    Realtime,
    Accelerated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    Loopback,
    Tcp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub base_dir: PathBuf,
    pub config: Option<PathBuf>,
    pub mode: RunMode,
    pub rate: f64,
    pub transport: Transport,
    pub repeats: u64,
    pub seed: u64,
    pub jobs: usize,
    pub train: Vec<PathBuf>,
    pub evaluate: Vec<PathBuf>,
    pub eval_union: bool,
    pub trace_run: u64,
    pub signal: Option<PathBuf>,
    pub signal_repeats: u64,
    pub out: PathBuf,
}

impl Plan {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, KvError> {
        let mut p = Plan {
            base_dir: base_dir.to_path_buf(),
            config: None,
            mode: RunMode::Deterministic,
            rate: 1.0,
            transport: Transport::Loopback,
            repeats: 20,
            seed: 0,
            jobs: 1,
            train: Vec::new(),
            evaluate: Vec::new(),
            eval_union: false,
            trace_run: 0,
            signal: None,
            signal_repeats: 0,
            out: PathBuf::from("results"),
        };
        let mut signal_repeats = None;
        for e in kv::parse(text)? {
            let path = || base_dir.join(&e.value);
            match e.key.as_str() {
                "config" => p.config = Some(path()),
                "mode" => {
                    p.mode = match e.value.as_str() {
                        "deterministic" => RunMode::Deterministic,
                        "realtime" => RunMode::Realtime,
                        "accelerated" => RunMode::Accelerated,
                        _ => return Err(KvError::new(e.line, "mode must be deterministic, realtime or accelerated")),
                    }
                }
                "rate" => p.rate = e.parse()?,
                "transport" => {
                    p.transport = match e.value.as_str() {
                        "loopback" => Transport::Loopback,
                        "tcp" => Transport::Tcp,
                        _ => return Err(KvError::new(e.line, "transport must be loopback or tcp")),
                    }
                }
                "repeats" => p.repeats = e.parse()?,
                "seed" => p.seed = e.parse()?,
                "jobs" => p.jobs = e.parse()?,
                "train" => p.train.push(path()),
                "evaluate" => p.evaluate.push(path()),
                "eval_policy" => {
                    p.eval_union = match e.value.as_str() {
                        "single" => false,
                        "union" => true,
                        _ => return Err(KvError::new(e.line, "eval_policy must be single or union")),
                    }
                }
                "trace_run" => p.trace_run = e.parse()?,
                "signal" => p.signal = Some(path()),
                "signal_repeats" => signal_repeats = Some(e.parse()?),
                "out" => p.out = path(),
                _ => return Err(KvError::new(e.line, format!("unknown key {:?}", e.key))),
            }
        }
        if !(p.rate > 0.0 && p.rate.is_finite()) {
            return Err(KvError::new(0, "rate must be positive"));
        }
        if p.repeats == 0 || p.jobs == 0 {
            return Err(KvError::new(0, "repeats and jobs must be at least 1"));
        }
        if p.train.is_empty() {
            return Err(KvError::new(0, "at least one train dataset is required"));
        }
        p.signal_repeats = signal_repeats.unwrap_or(p.repeats);
        Ok(p)
    }

    pub fn read(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Ok(Self::parse(&text, dir)?)
    }

    pub fn load_config(&self) -> Result<Config, ExperimentError> {
        match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(io_err(path))?;
                Ok(Config::parse(&text)?)
            }
            None => Ok(Config::default()),
        }
    }

    /// Loads a dataset. A `.spec` file is generated with a seed derived from
    /// the plan seed and the file name, so each spec yields its own sample.
    pub fn load_dataset(&self, path: &Path) -> Result<Dataset, ExperimentError> {
        if path.extension().is_some_and(|e| e == "spec") {
            let spec = read_spec(path)?;
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let mut d = generate_synthetic(&spec, dataset_seed(self.seed, &name));
            d.name = name;
            Ok(d)
        } else {
            Ok(Dataset::load(path)?)
        }
    }
}

/// Everything one run produced.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub run: u64,
    pub seed: u64,
    pub responses: Vec<ResponseRecord>,
    pub reports: Vec<TickReport>,
    /// Type 2 repertoire probe CSV, when requested.
    pub repertoire: Option<String>,
}

impl RunOutput {
    pub fn policy(&self) -> Policy {
        policy_from_responses(self.run, &self.responses)
    }

    /// Mean action time of the displays started during the run.
    pub fn action_time_totals(&self) -> (u64, u64) {
        self.reports.iter().fold((0, 0), |(s, n), r| {
            (s + r.action_time_sum, n + u64::from(r.presentations))
        })
    }

    /// `(t_s, antigen ingested, responses)` per second of simulated time.
    pub fn rate_series(&self) -> Vec<(u64, f64, f64)> {
        let end = self.reports.last().map(|r| r.t_us + 1).unwrap_or(0);
        let n = end.div_ceil(RATE_BUCKET_US) as usize;
        let mut antigen = vec![0.0; n];
        let mut responses = vec![0.0; n];
        for r in &self.reports {
            let b = (r.t_us / RATE_BUCKET_US) as usize;
            antigen[b] += f64::from(r.ingested);
            responses[b] += f64::from(r.responses);
        }
        (0..n).map(|i| (i as u64, antigen[i], responses[i])).collect()
    }

    /// Seconds between the first and last response.
    pub fn burst_s(&self) -> Option<f64> {
        let first = self.responses.first()?.t_us;
        let last = self.responses.last()?.t_us;
        Some((last - first) as f64 / 1e6)
    }
}

fn engine_for(config: &Config, seed: u64) -> Result<Engine<TwoCell>, ExperimentError> {
    config.validate()?;
    let mut e = Engine::new(config.tissue.clone(), TwoCell::new(config.twocell.clone()), seed)?;
    e.validate_every_tick(false);
    Ok(e)
}

fn attach_repertoire(
    engine: &mut Engine<TwoCell>,
    config: &Config,
) -> Result<SharedBuffer, ExperimentError> {
    let buf = SharedBuffer::default();
    let probe = Probe::new(
        config.tissue.probe_rate_us,
        Box::new(RepertoireSampler::new(&config.twocell)),
        Box::new(buf.clone()),
    )
    .map_err(|e| ExperimentError::Engine(EngineError::Probe(e)))?;
    engine.add_probe(probe);
    Ok(buf)
}

fn log_duration(events: &[ReplayEvent]) -> u64 {
    events.last().map(|e| e.t_us).unwrap_or(0)
}

/// One offline run: replay starts `replay_delay` into the run and the run
/// ends `grace_period` after the last event.
pub fn run_deterministic(
    config: &Config,
    events: &[ReplayEvent],
    seed: u64,
    record_repertoire: bool,
) -> Result<RunOutput, ExperimentError> {
    let mut engine = engine_for(config, seed)?;
    let sink = MemorySink::default();
    engine.add_sink(sink.clone());
    let probe = record_repertoire
        .then(|| attach_repertoire(&mut engine, config))
        .transpose()?;
    let offset = config.replay_delay;
    let until = offset + log_duration(events) + config.grace_period;
    let reports = engine.run_events(events, offset, until)?;
    Ok(RunOutput {
        run: 0,
        seed,
        responses: sink.take(),
        reports,
        repertoire: probe.map(|b| b.to_string_lossy()),
    })
}

/// One live run: a server on `transport` and a replay client started after
/// `replay_delay`, both paced by the wall clock sped up by `rate`.
pub fn run_live(
    config: &Config,
    events: &[ReplayEvent],
    seed: u64,
    record_repertoire: bool,
    rate: f64,
    transport: Transport,
) -> Result<RunOutput, ExperimentError> {
    let mut engine = engine_for(config, seed)?;
    let probe = record_repertoire
        .then(|| attach_repertoire(&mut engine, config))
        .transpose()?;
    let endpoint = match transport {
        Transport::Loopback => Endpoint::Loopback,
        Transport::Tcp => Endpoint::Tcp(config.listen.clone()),
    };
    let listeners = Listeners::bind(&endpoint, config.queue_capacity)
        .map_err(io_err(Path::new(&config.listen)))?;
    let has_signals = events.iter().any(|e| !e.kind.is_antigen());

    let delay = Duration::from_secs_f64(config.replay_delay as f64 / 1e6 / rate);
    let duration = log_duration(events);
    let events = events.to_vec();
    let replayer: thread::JoinHandle<Result<(), ReplayError>> = match transport {
        Transport::Loopback => {
            let a = listeners.handle.connect_loopback();
            let s = has_signals.then(|| listeners.handle.connect_loopback());
            thread::spawn(move || {
                thread::sleep(delay);
                let mut a = Client::hello(a, ClientKind::Antigen)?;
                let mut s = s.map(|s| Client::hello(s, ClientKind::Signal)).transpose()?;
                let mut pacer = WallClockPacer::new(rate)?;
                replay(&events, &mut pacer, &mut a, s.as_mut()).map(|_| ())
            })
        }
        Transport::Tcp => {
            let addr = listeners.handle.local_addr().expect("tcp listener has an address");
            thread::spawn(move || {
                thread::sleep(delay);
                let mut a = Client::connect(addr, ClientKind::Antigen)?;
                let mut s = has_signals
                    .then(|| Client::connect(addr, ClientKind::Signal))
                    .transpose()?;
                let mut pacer = WallClockPacer::new(rate)?;
                replay(&events, &mut pacer, &mut a, s.as_mut()).map(|_| ())
            })
        }
    };

    let tick = config.tissue.cell_update_rate_us;
    let clock = if rate == 1.0 {
        RunClock::realtime(tick)
    } else {
        RunClock::accelerated(tick, rate)
    };
    let opts = ServerOptions {
        grace_us: config.grace_period,
        // Backstop in case the client never connects.
        max_run_us: Some(2 * (config.replay_delay + duration) + config.grace_period + 60_000_000),
        ..ServerOptions::default()
    };
    let transcript = run_server(&mut engine, listeners, clock, &opts);
    let replayed = replayer.join().unwrap_or_else(|_| {
        Err(ReplayError::Io(std::io::Error::other("replay thread panicked")))
    });
    let transcript = transcript?;
    replayed?;
    Ok(RunOutput {
        run: 0,
        seed,
        responses: transcript.responses,
        reports: transcript.reports,
        repertoire: probe.map(|b| b.to_string_lossy()),
    })
}

/// How runs are executed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Runner {
    pub mode: RunMode,
    pub rate: f64,
    pub transport: Transport,
    /// Parallel workers; live runs always go one at a time.
    pub jobs: usize,
}

impl Runner {
    pub fn deterministic(jobs: usize) -> Self {
        Runner {
            mode: RunMode::Deterministic,
            rate: 1.0,
            transport: Transport::Loopback,
            jobs: jobs.max(1),
        }
    }

    pub fn from_plan(plan: &Plan) -> Self {
        Runner {
            mode: plan.mode,
            rate: if plan.mode == RunMode::Realtime { 1.0 } else { plan.rate },
            transport: plan.transport,
            jobs: plan.jobs,
        }
    }

    pub fn run(
        &self,
        config: &Config,
        events: &[ReplayEvent],
        seed: u64,
        record_repertoire: bool,
    ) -> Result<RunOutput, ExperimentError> {
        match self.mode {
            RunMode::Deterministic => run_deterministic(config, events, seed, record_repertoire),
            RunMode::Realtime | RunMode::Accelerated => {
                run_live(config, events, seed, record_repertoire, self.rate, self.transport)
            }
        }
    }

    /// Runs every job, in parallel when allowed. Results keep job order; after
    /// the first failure no new job is started.
    fn run_all(&self, config: &Config, jobs: &[Job<'_>]) -> (Vec<RunOutput>, Option<ExperimentError>) {
        let workers = if self.mode == RunMode::Deterministic {
            self.jobs.min(jobs.len()).max(1)
        } else {
            1
        };
        let next = AtomicUsize::new(0);
        let failed = AtomicUsize::new(usize::MAX);
        let slots: Mutex<Vec<Option<Result<RunOutput, ExperimentError>>>> =
            Mutex::new((0..jobs.len()).map(|_| None).collect());
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= jobs.len() || failed.load(Ordering::SeqCst) < i {
                        break;
                    }
                    let j = &jobs[i];
                    info!("run {} (seed {}) on {}", j.run, j.seed, j.dataset.name);
                    let r = self
                        .run(config, &j.dataset.log.events, j.seed, j.record_repertoire)
                        .map(|mut o| {
                            o.run = j.run;
                            o
                        });
                    if r.is_err() {
                        failed.fetch_min(i, Ordering::SeqCst);
                    }
                    slots.lock().expect("result slots")[i] = Some(r);
                });
            }
        });
        let mut out = Vec::new();
        for r in slots.into_inner().expect("result slots").into_iter().flatten() {
            match r {
                Ok(o) => out.push(o),
                Err(e) => return (out, Some(e)),
            }
        }
        (out, None)
    }
}

struct Job<'a> {
    run: u64,
    seed: u64,
    dataset: &'a Dataset,
    record_repertoire: bool,
}

#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub dataset: String,
    pub output: RunOutput,
}

/// Result of repeated runs over the training datasets.
#[derive(Debug, Clone)]
pub struct Training {
    pub runs: Vec<TrainedRun>,
    pub naive: Policy,
    pub union: Policy,
    pub stats: PolicyStats,
}

impl Training {
    fn new(datasets: &[Dataset], outputs: Vec<RunOutput>, repeats: u64) -> Self {
        let runs: Vec<TrainedRun> = outputs
            .into_iter()
            .map(|o| TrainedRun {
                dataset: datasets[(o.run / repeats) as usize].name.clone(),
                output: o,
            })
            .collect();
        let policies: Vec<Policy> = runs.iter().map(|r| r.output.policy()).collect();
        let responses: Vec<&[ResponseRecord]> =
            runs.iter().map(|r| r.output.responses.as_slice()).collect();
        Training {
            naive: naive_policy(datasets),
            union: union_policy(&policies),
            stats: PolicyStats::compute(datasets, &responses),
            runs,
        }
    }

    pub fn run(&self, id: u64) -> Option<&TrainedRun> {
        self.runs.iter().find(|r| r.output.run == id)
    }
}

fn training_jobs(datasets: &[Dataset], repeats: u64, base_seed: u64, trace_run: Option<u64>) -> Vec<Job<'_>> {
    let mut jobs = Vec::new();
    for (d, dataset) in datasets.iter().enumerate() {
        for i in 0..repeats {
            let run = d as u64 * repeats + i;
            jobs.push(Job {
                run,
                seed: base_seed.wrapping_add(run),
                dataset,
                record_repertoire: trace_run == Some(run),
            });
        }
    }
    jobs
}

/// `repeats` runs per dataset; run `i` overall uses seed `base_seed + i`.
pub fn train_policies(
    config: &Config,
    datasets: &[Dataset],
    repeats: u64,
    base_seed: u64,
    trace_run: Option<u64>,
    runner: &Runner,
) -> Result<Training, ExperimentError> {
    let jobs = training_jobs(datasets, repeats, base_seed, trace_run);
    match runner.run_all(config, &jobs) {
        (outputs, None) => Ok(Training::new(datasets, outputs, repeats)),
        (_, Some(e)) => Err(e),
    }
}

/// Per-arm summary of the signal comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSummary {
    pub runs: usize,
    /// Runs with at least one response; burst statistics cover only these.
    pub responding_runs: usize,
    pub mean_action_time: f64,
    pub mean_responses: f64,
    pub mean_burst_s: f64,
    /// Responses per second averaged over runs.
    pub rate: Vec<f64>,
    /// Second at which the mean rate peaks.
    pub peak_s: Option<u64>,
    pub seeds: Vec<u64>,
}

impl ArmSummary {
    fn new(outputs: &[RunOutput]) -> Self {
        let (sum, n) = outputs.iter().fold((0, 0), |(s, n), o| {
            let (a, b) = o.action_time_totals();
            (s + a, n + b)
        });
        let bursts: Vec<f64> = outputs.iter().filter_map(RunOutput::burst_s).collect();
        let len = outputs
            .iter()
            .map(|o| o.reports.last().map(|r| r.t_us / RATE_BUCKET_US + 1).unwrap_or(0))
            .max()
            .unwrap_or(0) as usize;
        let mut rate = vec![0.0; len];
        for o in outputs {
            let b = bucket_counts(o.responses.iter().map(|r| r.t_us), RATE_BUCKET_US, len);
            for (acc, x) in rate.iter_mut().zip(b) {
                *acc += x / outputs.len() as f64;
            }
        }
        let totals: Vec<f64> = outputs.iter().map(|o| o.responses.len() as f64).collect();
        ArmSummary {
            runs: outputs.len(),
            responding_runs: bursts.len(),
            mean_action_time: if n == 0 { 0.0 } else { sum as f64 / n as f64 },
            mean_responses: stats::mean(&totals),
            mean_burst_s: stats::mean(&bursts),
            peak_s: stats::argmax(&rate).filter(|&i| rate[i] > 0.0).map(|i| i as u64),
            rate,
            seeds: outputs.iter().map(|o| o.seed).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalComparison {
    pub dataset: String,
    pub signal: ArmSummary,
    pub fixed: ArmSummary,
    /// Action time of the fixed arm: the signal arm's mean, rounded.
    pub fixed_action_time: u32,
}

impl SignalComparison {
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "arm,runs,responding_runs,action_time,mean_responses,mean_burst_s,peak_s\n",
        );
        for (name, arm) in [("signal", &self.signal), ("fixed", &self.fixed)] {
            let _ = writeln!(
                out,
                "{name},{},{},{:.2},{:.2},{:.2},{}",
                arm.runs,
                arm.responding_runs,
                arm.mean_action_time,
                arm.mean_responses,
                arm.mean_burst_s,
                arm.peak_s.map(|p| p.to_string()).unwrap_or_default()
            );
        }
        out
    }

    pub fn rates_csv(&self) -> String {
        let mut out = String::from("t_s,signal,fixed\n");
        let n = self.signal.rate.len().max(self.fixed.rate.len());
        for i in 0..n {
            let a = self.signal.rate.get(i).copied().unwrap_or(0.0);
            let b = self.fixed.rate.get(i).copied().unwrap_or(0.0);
            let _ = writeln!(out, "{i},{a:.2},{b:.2}");
        }
        out
    }
}

/// The configurations of the two arms: signal-driven action time, and the
/// fixed arm's base. The signal arm reads tissue signal 0, so at least one
/// cytokine slot is enabled.
fn signal_config(config: &Config) -> Config {
    let mut c = config.clone();
    c.tissue.max_cytokines = c.tissue.max_cytokines.max(1);
    c.twocell.signal_enabled = true;
    c
}

/// Runs the signal arm, then a fixed arm whose action time is the signal
/// arm's mean observed action time rounded to the nearest integer. Both arms
/// use seeds `base_seed + i`.
pub fn signal_comparison(
    config: &Config,
    dataset: &Dataset,
    repeats: u64,
    base_seed: u64,
    runner: &Runner,
) -> Result<SignalComparison, ExperimentError> {
    let jobs: Vec<Job<'_>> = (0..repeats)
        .map(|i| Job {
            run: i,
            seed: base_seed.wrapping_add(i),
            dataset,
            record_repertoire: false,
        })
        .collect();
    let sig_config = signal_config(config);
    let (outputs, err) = runner.run_all(&sig_config, &jobs);
    if let Some(e) = err {
        return Err(e);
    }
    let signal = ArmSummary::new(&outputs);
    let fixed_action_time = (signal.mean_action_time.round() as u32).max(1);

    let mut fixed_config = sig_config;
    fixed_config.twocell.signal_enabled = false;
    fixed_config.twocell.antigen_producer_action_time = fixed_action_time;
    let (outputs, err) = runner.run_all(&fixed_config, &jobs);
    if let Some(e) = err {
        return Err(e);
    }
    Ok(SignalComparison {
        dataset: dataset.name.clone(),
        signal,
        fixed: ArmSummary::new(&outputs),
        fixed_action_time,
    })
}

/// Per-syscall responses of one run next to the dataset frequency.
pub fn trace_csv(dataset: &Dataset, run: &RunOutput) -> String {
    let stats = PolicyStats::compute(std::slice::from_ref(dataset), &[run.responses.as_slice()]);
    let table = crate::replay::SyscallTable::get();
    let mut out = String::from("syscall,freq,responses\n");
    for r in stats.rows.iter().filter(|r| r.counts[0] > 0) {
        let _ = writeln!(out, "{},{},{}", table.label(r.syscall.0), r.freq, r.counts[0]);
    }
    out
}

pub fn rates_csv(run: &RunOutput) -> String {
    let mut out = String::from("t_s,antigen,responses\n");
    for (t, a, r) in run.rate_series() {
        let _ = writeln!(out, "{t},{a},{r}");
    }
    out
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub training: Training,
    /// `(naive, twocell)` per evaluation dataset.
    pub evaluations: Vec<(Evaluation, Evaluation)>,
    pub signal: Option<SignalComparison>,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

struct Output {
    dir: PathBuf,
    files: BTreeMap<PathBuf, String>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self, ExperimentError> {
        std::fs::create_dir_all(dir.join("runs")).map_err(io_err(dir))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    fn write(&mut self, name: impl AsRef<Path>, contents: &str) -> Result<(), ExperimentError> {
        let path = self.dir.join(name.as_ref());
        std::fs::write(&path, contents).map_err(io_err(&path))?;
        self.files.insert(name.as_ref().to_path_buf(), sha256(contents.as_bytes()));
        Ok(())
    }

    fn write_runs(&mut self, outputs: &[RunOutput]) -> Result<(), ExperimentError> {
        for o in outputs {
            self.write(format!("runs/run_{:03}.csv", o.run), &response_csv(&o.responses))?;
            self.write(format!("runs/run_{:03}.policy.txt", o.run), &o.policy().to_text())?;
        }
        Ok(())
    }
}

/// Seed for a generated dataset called `name`.
pub fn dataset_seed(base: u64, name: &str) -> u64 {
    let h = Sha256::digest(name.as_bytes());
    base ^ u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
}

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs a whole plan and writes its outputs to `plan.out`. A failed run
/// aborts the plan; the runs finished before it are still written.
pub fn run_experiment(plan: &Plan) -> Result<ExperimentReport, ExperimentError> {
    let config = plan.load_config()?;
    config.validate()?;
    let runner = Runner::from_plan(plan);
    let train: Vec<Dataset> = plan
        .train
        .iter()
        .map(|p| plan.load_dataset(p))
        .collect::<Result<_, _>>()?;
    let evaluate: Vec<Dataset> = plan
        .evaluate
        .iter()
        .map(|p| plan.load_dataset(p))
        .collect::<Result<_, _>>()?;
    let signal_set = plan.signal.as_deref().map(|p| plan.load_dataset(p)).transpose()?;
    let total = plan.repeats * train.len() as u64;
    if plan.trace_run >= total {
        return Err(KvError::new(0, format!("trace_run {} but only {total} runs", plan.trace_run)).into());
    }

    let mut out = Output::new(&plan.out)?;
    let mut manifest = String::new();
    let config_text = config.to_text();
    let _ = writeln!(manifest, "config_sha256={}", sha256(config_text.as_bytes()));
    let _ = writeln!(manifest, "mode={:?} rate={} seed={} repeats={}", plan.mode, runner.rate, plan.seed, plan.repeats);
    for d in train.iter().chain(&evaluate).chain(signal_set.iter()) {
        let _ = writeln!(manifest, "input {} sha256={}", d.name, sha256(d.log.to_text().as_bytes()));
    }
    out.write("config.txt", &config_text)?;

    let jobs = training_jobs(&train, plan.repeats, plan.seed, Some(plan.trace_run));
    for j in &jobs {
        let _ = writeln!(manifest, "run {} dataset={} seed={}", j.run, j.dataset.name, j.seed);
    }
    let (outputs, err) = runner.run_all(&config, &jobs);
    out.write_runs(&outputs)?;
    if let Some(e) = err {
        out.write("manifest.txt", &manifest)?;
        return Err(e);
    }
    let training = Training::new(&train, outputs, plan.repeats);

    out.write("policy.txt", &training.union.to_text())?;
    out.write("naive_policy.txt", &training.naive.to_text())?;
    out.write("stats.csv", &training.stats.to_csv())?;
    let trace = training.run(plan.trace_run).expect("trace run exists");
    let trace_set = &train[(plan.trace_run / plan.repeats) as usize];
    out.write("trace_policy.txt", &trace.output.policy().to_text())?;
    out.write("trace.csv", &trace_csv(trace_set, &trace.output))?;
    out.write("rates.csv", &rates_csv(&trace.output))?;
    if let Some(rep) = &trace.output.repertoire {
        out.write("repertoire.csv", rep)?;
    }

    let generated = if plan.eval_union {
        training.union.clone()
    } else {
        trace.output.policy()
    };
    let evaluations: Vec<(Evaluation, Evaluation)> = evaluate
        .iter()
        .map(|d| (evaluate_policy(&training.naive, d), evaluate_policy(&generated, d)))
        .collect();
    if !evaluations.is_empty() {
        let (naive, gen): (Vec<_>, Vec<_>) = evaluations.iter().cloned().unzip();
        out.write("eval.csv", &evaluation_csv(&naive, &gen))?;
    }

    let signal = match &signal_set {
        Some(d) => {
            let cmp = signal_comparison(&config, d, plan.signal_repeats, plan.seed, &runner)?;
            let _ = writeln!(
                manifest,
                "signal dataset={} seeds={}..{} fixed_action_time={}",
                d.name,
                plan.seed,
                plan.seed + plan.signal_repeats,
                cmp.fixed_action_time
            );
            out.write("signal.csv", &cmp.summary_csv())?;
            out.write("signal_rates.csv", &cmp.rates_csv())?;
            Some(cmp)
        }
        None => None,
    };

    for (name, hash) in &out.files {
        let _ = writeln!(manifest, "output {} sha256={hash}", name.display());
    }
    out.write("manifest.txt", &manifest)?;
    Ok(ExperimentReport {
        training,
        evaluations,
        signal,
        out_dir: plan.out.clone(),
        files: out.files.into_keys().collect(),
    })
}
