use tissue_wasm::{action_times, action_times_native, compare_native, simulate_native, spec_summary_native, DEFAULT_SPEC};

#[test]
fn simulate_default_spec() {
    let s = simulate_native(DEFAULT_SPEC, 7).unwrap();
    assert!(s.antigen_events > 0);
    assert!(!s.rates.is_empty());
    let total: u64 = s.syscalls.iter().map(|r| r.freq).sum();
    assert_eq!(total as usize, s.antigen_events);
    assert!(s.syscalls.windows(2).all(|w| w[0].freq >= w[1].freq));
    let responded: u64 = s.syscalls.iter().map(|r| r.responses).sum();
    assert_eq!(responded as usize, s.total_responses);
    assert_eq!(s.permitted.len(), s.syscalls.iter().filter(|r| r.responses > 0).count());
    assert!(!s.repertoire.is_empty());
}

#[test]
fn simulate_is_deterministic() {
    let a = serde_json::to_string(&simulate_native(DEFAULT_SPEC, 3).unwrap()).unwrap();
    let b = serde_json::to_string(&simulate_native(DEFAULT_SPEC, 3).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn compare_runs_both_arms() {
    let c = compare_native(DEFAULT_SPEC, 1, 2).unwrap();
    assert!(c.fixed_action_time >= 1);
    assert_eq!(c.signal.rate.len(), c.fixed.rate.len());
}

#[test]
fn action_time_rule() {
    // equal keeps, lower halves, higher resets
    assert_eq!(action_times_native(&[0.0, 0.0, 1.0, 0.5, 0.2, 0.2], 100), vec![100, 100, 100, 50, 25, 25]);
    assert_eq!(action_times_native(&[5.0, 4.0, 3.0, 2.0, 1.0, 0.5, 0.1, 0.0], 100), vec![100, 50, 25, 12, 6, 3, 1, 1]);
}

#[test]
fn bad_input_is_rejected() {
    assert!(simulate_native("duration_s=oops", 1).is_err());
    assert!(spec_summary_native("nonsense", 1).is_err());
    assert!(spec_summary_native(DEFAULT_SPEC, 1).unwrap().len() > 3);
    assert_eq!(action_times("1, 2,", 100).ok().unwrap(), "[100,100]");
}
