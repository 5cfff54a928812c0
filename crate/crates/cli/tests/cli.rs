use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn tissue(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tissue"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run tissue")
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SPEC: &str = "group=success
duration_s=4
active=0-0.5
normal=6:60
normal=3:30
attack_window=2-2.5
attack=11:40
cpu_period_s=1
cpu_per_event=0.01
cpu_quantum=0.01
";

#[test]
fn config_prints_reference_values() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&tissue(&["config"], dir.path()));
    assert!(text.contains("max_antigen=1000\n"));
    assert!(text.contains("num_vr_receptors_2=20\n"));
}

#[test]
fn synth_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.spec"), SPEC).unwrap();
    ok(&tissue(&["synth", "--spec", "s.spec", "--seed", "3", "--out", "s.log"], dir.path()));
    assert!(dir.path().join("s.log.labels").exists());
    std::fs::write(dir.path().join("p.txt"), "permit 6\npermit 3\ndefault deny\n").unwrap();
    let out = ok(&tissue(&["evaluate", "--policy", "p.txt", "--log", "s.log"], dir.path()));
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    let (attack, permit, deny): (u32, u32, u32) =
        (row[5].parse().unwrap(), row[6].parse().unwrap(), row[7].parse().unwrap());
    // Only the attack syscall is denied.
    assert!(attack > 0);
    assert!((99..=100).contains(&(permit + deny)));
    assert!(deny.abs_diff(attack) <= 1);
}

#[test]
fn ingest_merges_strace_and_cpu() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("t.strace"),
        "10:00:00.000100 close(3) = 0\n10:00:00.250000 read(3, \"\", 10) = 0\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("c.log"), "36000.100000 0.25\n").unwrap();
    ok(&tissue(&["ingest", "--strace", "t.strace", "--cpu", "c.log", "--out", "t.log"], dir.path()));
    let log = std::fs::read_to_string(dir.path().join("t.log")).unwrap();
    let events: Vec<&str> = log.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(events.len(), 3, "{log}");
}

#[test]
fn bad_inputs_fail_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let o = tissue(&["synth", "--spec", "missing.spec", "--out", "x.log"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.spec"));
    std::fs::write(dir.path().join("plan.txt"), "repeats=2\n").unwrap();
    assert!(!tissue(&["experiment", "--plan", "plan.txt"], dir.path()).status.success());
}

#[test]
fn experiment_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.spec"), SPEC).unwrap();
    std::fs::write(
        dir.path().join("plan.txt"),
        "repeats=2\nseed=5\ntrain=s.spec\nevaluate=s.spec\nsignal=s.spec\nout=res\n",
    )
    .unwrap();
    let out = ok(&tissue(&["experiment", "--plan", "plan.txt"], dir.path()));
    assert!(out.contains("2 runs"), "{out}");
    let res = dir.path().join("res");
    for f in [
        "policy.txt", "naive_policy.txt", "stats.csv", "eval.csv", "rates.csv", "repertoire.csv",
        "trace.csv", "signal.csv", "signal_rates.csv", "manifest.txt", "runs/run_000.csv",
        "runs/run_001.policy.txt",
    ] {
        assert!(res.join(f).exists(), "missing {f}");
    }
    let manifest = std::fs::read_to_string(res.join("manifest.txt")).unwrap();
    assert!(manifest.contains("run 1 dataset=s seed=6"), "{manifest}");
    assert!(manifest.contains("output policy.txt sha256="));
    let policy = std::fs::read_to_string(res.join("policy.txt")).unwrap();
    assert!(policy.ends_with("default deny\n"));
}

#[test]
fn serve_and_replay_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.spec"), SPEC).unwrap();
    ok(&tissue(&["synth", "--spec", "s.spec", "--out", "s.log"], dir.path()));
    std::fs::write(dir.path().join("fast.conf"), "grace_period=2000000\n").unwrap();
    let mut server = Command::new(env!("CARGO_BIN_EXE_tissue"))
        .args([
            "serve", "--config", "fast.conf", "--listen", "127.0.0.1:0", "--speed", "20",
            "--max-run-s", "120", "--repertoire", "rep.csv", "--manifest", "run.manifest",
        ])
        .current_dir(dir.path())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut err = BufReader::new(server.stderr.take().unwrap());
    let mut line = String::new();
    err.read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").expect("address line").to_string();
    ok(&tissue(&["replay", "--log", "s.log", "--server", &addr, "--rate", "20"], dir.path()));
    let status = server.wait().unwrap();
    let mut rest = String::new();
    std::io::Read::read_to_string(&mut err, &mut rest).unwrap();
    assert!(status.success(), "{rest}");
    let responses = std::fs::read_to_string(dir.path().join("responses.csv")).unwrap();
    assert!(responses.starts_with("t_us,antigen,cell_type\n"));
    assert!(responses.lines().count() > 1, "{rest}");
    assert!(std::fs::read_to_string(dir.path().join("rep.csv")).unwrap().starts_with("t_us,cell,matched,lock_0"));
    assert!(std::fs::read_to_string(dir.path().join("run.manifest")).unwrap().contains("seed=0"));
}
