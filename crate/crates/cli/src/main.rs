//! Command line front end: live server, replay client, dataset tools and the
//! experiment runner.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use thiserror::Error;

use tissue::engine::{response_csv, run_server, Engine, EngineError, Probe, RunClock, ServerOptions};
use tissue::policy::{evaluate_policy, run_experiment, ExperimentError, Plan, Policy, PolicyError};
use tissue::protocol::{Client, ClientKind, Endpoint, Listeners, ResponseListener};
use tissue::replay::{
    generate_synthetic, ingest, replay, Dataset, ReplayError, ReplayLog, SynthSpec, WallClockPacer,
};
use tissue::twocell::RepertoireSampler;
use tissue::{Config, TwoCell};

#[derive(Parser)]
#[command(name = "tissue", version, about = "Tissue simulation server, replay client and policy experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the two-cell server until its clients finish and the grace period passes.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's listen address.
        #[arg(long)]
        listen: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Wall clock speed-up; 1 is realtime.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Stop after this many simulated seconds regardless of clients.
        #[arg(long)]
        max_run_s: Option<f64>,
        #[arg(long, default_value = "responses.csv")]
        responses: PathBuf,
        /// Type 2 repertoire probe output.
        #[arg(long)]
        repertoire: Option<PathBuf>,
        /// Run manifest: config hash, seed and output files.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Replay a log to a server, antigen and signals on separate connections.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7777")]
        server: String,
        /// Playback speed relative to the log's timestamps.
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
    },
    /// Print responses from a running server as `t_us,antigen` lines.
    Responses {
        #[arg(long, default_value = "127.0.0.1:7777")]
        server: String,
    },
    /// Generate a labelled synthetic dataset from a spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert an strace log and an optional CPU log into a replay log.
    Ingest {
        #[arg(long)]
        strace: PathBuf,
        #[arg(long)]
        cpu: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment plan and write its outputs.
    Experiment {
        #[arg(long)]
        plan: PathBuf,
        /// Overrides the plan's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply a policy file to a labelled log.
    Evaluate {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        log: PathBuf,
    },
    /// Print the reference configuration.
    Config,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Net(#[source] io::Error),
    #[error(transparent)]
    Config(#[from] tissue::config::ConfigError),
    #[error(transparent)]
    Param(#[from] tissue::model::ParamError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("{0}")]
    Usage(String),
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(io_at(path))
}

fn load_config(path: Option<&Path>) -> Result<Config, CliError> {
    let c = match path {
        Some(p) => Config::parse(&read(p)?)?,
        None => Config::default(),
    };
    c.validate()?;
    Ok(c)
}

fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::Digest;
    hex::encode(sha2::Sha256::digest(bytes))
}

#[allow(clippy::too_many_arguments)]
fn serve(
    config: Option<&Path>,
    listen: Option<String>,
    seed: u64,
    speed: f64,
    max_run_s: Option<f64>,
    responses: &Path,
    repertoire: Option<&Path>,
    manifest: Option<&Path>,
) -> Result<(), CliError> {
    let mut config = load_config(config)?;
    if let Some(l) = listen {
        config.listen = l;
    }
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(CliError::Usage(format!("speed must be positive, got {speed}")));
    }
    let mut engine = Engine::new(config.tissue.clone(), TwoCell::new(config.twocell.clone()), seed)?;
    if let Some(path) = repertoire {
        let file = File::create(path).map_err(io_at(path))?;
        let probe = Probe::new(
            config.tissue.probe_rate_us,
            Box::new(RepertoireSampler::new(&config.twocell)),
            Box::new(BufWriter::new(file)),
        )
        .map_err(io_at(path))?;
        engine.add_probe(probe);
    }
    let listeners = Listeners::bind(&Endpoint::Tcp(config.listen.clone()), config.queue_capacity)
        .map_err(|e| CliError::Net(io::Error::new(e.kind(), format!("cannot listen on {}: {e}", config.listen))))?;
    if let Some(addr) = listeners.handle.local_addr() {
        eprintln!("listening on {addr}");
    }
    let tick = config.tissue.cell_update_rate_us;
    let clock = if speed == 1.0 {
        RunClock::realtime(tick)
    } else {
        RunClock::accelerated(tick, speed)
    };
    let opts = ServerOptions {
        grace_us: config.grace_period,
        max_run_us: max_run_s.map(|s| (s * 1e6) as u64),
        ..ServerOptions::default()
    };
    let t = run_server(&mut engine, listeners, clock, &opts)?;
    let csv = response_csv(&t.responses);
    std::fs::write(responses, &csv).map_err(io_at(responses))?;
    eprintln!(
        "{} events, {} responses, {} rejected signals, {} ticks",
        t.events,
        t.responses.len(),
        t.rejected_signals,
        t.reports.len()
    );
    if let Some(path) = manifest {
        let mut m = format!(
            "config_sha256={}\nseed={seed}\nspeed={speed}\nresponses={} sha256={}\n",
            sha256_hex(config.to_text().as_bytes()),
            responses.display(),
            sha256_hex(csv.as_bytes())
        );
        if let Some(r) = repertoire {
            m.push_str(&format!("repertoire={}\n", r.display()));
        }
        std::fs::write(path, m).map_err(io_at(path))?;
    }
    Ok(())
}

fn replay_log(log: &Path, server: &str, rate: f64) -> Result<(), CliError> {
    let log = ReplayLog::read(log)?;
    let mut pacer = WallClockPacer::new(rate)?;
    let mut antigen = Client::connect(server, ClientKind::Antigen).map_err(CliError::Net)?;
    let mut signal = if log.events.iter().any(|e| !e.kind.is_antigen()) {
        Some(Client::connect(server, ClientKind::Signal).map_err(CliError::Net)?)
    } else {
        None
    };
    info!("replaying {} events at {rate}x", log.events.len());
    let stats = replay(&log.events, &mut pacer, &mut antigen, signal.as_mut())?;
    eprintln!("sent {} antigen and {} signal events", stats.antigen_sent, stats.signal_sent);
    Ok(())
}

fn print_responses(server: &str) -> Result<(), CliError> {
    let listener = ResponseListener::connect(server).map_err(CliError::Net)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for r in listener {
        let (antigen, t_us) = r.map_err(CliError::Net)?;
        if writeln!(out, "{t_us},{antigen}").and_then(|_| out.flush()).is_err() {
            break;
        }
    }
    Ok(())
}

fn experiment(plan_path: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let mut plan = Plan::read(plan_path)?;
    if let Some(o) = out {
        plan.out = o;
    }
    let r = run_experiment(&plan)?;
    let t = &r.training;
    println!(
        "{} runs; naive policy {} syscalls, union policy {}",
        t.runs.len(),
        t.naive.len(),
        t.union.len()
    );
    for (n, g) in &r.evaluations {
        println!(
            "{}: attack {}%, naive permit {}% deny {}%, twocell permit {}% deny {}%",
            n.dataset, n.attack_pct, n.permit_pct, n.deny_pct, g.permit_pct, g.deny_pct
        );
    }
    if let Some(s) = &r.signal {
        println!(
            "signal arm: mean action time {:.2}, burst {:.2} s, peak {:?} s; fixed arm ({}): burst {:.2} s, peak {:?} s",
            s.signal.mean_action_time,
            s.signal.mean_burst_s,
            s.signal.peak_s,
            s.fixed_action_time,
            s.fixed.mean_burst_s,
            s.fixed.peak_s
        );
    }
    println!("outputs in {}", r.out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Serve {
            config,
            listen,
            seed,
            speed,
            max_run_s,
            responses,
            repertoire,
            manifest,
        } => serve(
            config.as_deref(),
            listen,
            seed,
            speed,
            max_run_s,
            &responses,
            repertoire.as_deref(),
            manifest.as_deref(),
        ),
        Command::Replay { log, server, rate } => replay_log(&log, &server, rate),
        Command::Responses { server } => print_responses(&server),
        Command::Synth { spec, seed, out } => {
            let s = SynthSpec::parse(&read(&spec)?).map_err(ReplayError::Spec)?;
            let mut d = generate_synthetic(&s, seed);
            d.name = out
                .file_stem()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            d.save(&out)?;
            eprintln!(
                "{}: {} antigen events, {} signal samples",
                out.display(),
                d.log.antigen_count(),
                d.log.events.len() - d.log.antigen_count()
            );
            Ok(())
        }
        Command::Ingest { strace, cpu, out } => {
            let cpu_text = cpu.as_deref().map(read).transpose()?;
            let events = ingest(&read(&strace)?, cpu_text.as_deref())?;
            ReplayLog::new(events).write(&out)?;
            Ok(())
        }
        Command::Experiment { plan, out } => experiment(&plan, out),
        Command::Evaluate { policy, log } => {
            let p = Policy::read(&policy)?;
            let d = Dataset::load(&log)?;
            let e = evaluate_policy(&p, &d);
            println!("dataset,events,attack,permitted,normal_pct,attack_pct,permit_pct,deny_pct");
            println!(
                "{},{},{},{},{},{},{},{}",
                e.dataset, e.events, e.attack, e.permitted, e.normal_pct, e.attack_pct, e.permit_pct, e.deny_pct
            );
            Ok(())
        }
        Command::Config => {
            print!("{}", Config::default().to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
