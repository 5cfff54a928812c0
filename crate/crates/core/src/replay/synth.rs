//! Synthetic labelled datasets.
//!
//! A spec is a `key=value` file:
//!
//! ```text
//! group=success
//! duration_s=30
//! active=2-2.5            # repeatable; normal traffic is spread over these
//! normal=6:40             # syscall:mean count, repeatable
//! attack_window=12-12.5
//! attack=11:3             # repeatable; flagged as attack
//! cpu_period_s=1
//! cpu_baseline=0
//! cpu_noise=0
//! cpu_per_event=0.001
//! cpu_attack_burst=0.2
//! cpu_quantum=0.01
//! ```
//!
//! Event counts are Poisson with the given means; event times are uniform
//! over the windows. One CPU sample is taken per period from the end of the
//! first period onwards: baseline, plus uniform noise in `±cpu_noise`, plus
//! `cpu_per_event` per antigen in the period just ended, plus
//! `cpu_attack_burst` if that period overlaps the attack window.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::format::{Dataset, Group, Labels, ReplayLog};
use super::trace::CPU_SIGNAL;
use super::ReplayError;
use crate::engine::seeded_rng;
use crate::kv::{self, KvError};
use crate::model::{AntigenValue, EventKind, ReplayEvent};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub group: Group,
    pub duration_s: f64,
    pub active: Vec<(f64, f64)>,
    pub normal: Vec<(u32, f64)>,
    pub attack_window: Option<(f64, f64)>,
    pub attack: Vec<(u32, f64)>,
    pub cpu_period_s: f64,
    pub cpu_baseline: f64,
    pub cpu_noise: f64,
    pub cpu_per_event: f64,
    pub cpu_attack_burst: f64,
    pub cpu_quantum: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            group: Group::Normal,
            duration_s: 0.0,
            active: Vec::new(),
            normal: Vec::new(),
            attack_window: None,
            attack: Vec::new(),
            cpu_period_s: 0.0,
            cpu_baseline: 0.0,
            cpu_noise: 0.0,
            cpu_per_event: 0.0,
            cpu_attack_burst: 0.0,
            cpu_quantum: 0.0,
        }
    }
}

fn window(e: &kv::Entry) -> Result<(f64, f64), KvError> {
    let bad = || KvError::new(e.line, format!("{} must be start-end seconds", e.key));
    let (a, b) = e.value.split_once('-').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(a.is_finite() && b.is_finite() && 0.0 <= a && a <= b) {
        return Err(bad());
    }
    Ok((a, b))
}

fn rate(e: &kv::Entry) -> Result<(u32, f64), KvError> {
    let bad = |m: &str| KvError::new(e.line, format!("{}: {m}", e.key));
    let (s, m) = e
        .value
        .split_once(':')
        .ok_or_else(|| bad("expected syscall:mean_count"))?;
    let s: u32 = s.trim().parse().map_err(|_| bad("bad syscall number"))?;
    let m: f64 = m.trim().parse().map_err(|_| bad("bad mean count"))?;
    if !(m.is_finite() && m >= 0.0) {
        return Err(bad("mean count must be non-negative"));
    }
    Ok((s, m))
}

impl SynthSpec {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut s = SynthSpec::default();
        for e in kv::parse(text)? {
            let nonneg = |e: &kv::Entry| -> Result<f64, KvError> {
                let v: f64 = e.parse()?;
                if v.is_finite() && v >= 0.0 {
                    Ok(v)
                } else {
                    Err(KvError::new(e.line, format!("{} must be non-negative", e.key)))
                }
            };
            match e.key.as_str() {
                "group" => {
                    s.group = e.value.parse().map_err(|m: String| KvError::new(e.line, m))?
                }
                "duration_s" => s.duration_s = nonneg(&e)?,
                "active" => s.active.push(window(&e)?),
                "normal" => s.normal.push(rate(&e)?),
                "attack_window" => s.attack_window = Some(window(&e)?),
                "attack" => s.attack.push(rate(&e)?),
                "cpu_period_s" => s.cpu_period_s = nonneg(&e)?,
                "cpu_baseline" => s.cpu_baseline = nonneg(&e)?,
                "cpu_noise" => s.cpu_noise = nonneg(&e)?,
                "cpu_per_event" => s.cpu_per_event = nonneg(&e)?,
                "cpu_attack_burst" => s.cpu_attack_burst = nonneg(&e)?,
                "cpu_quantum" => s.cpu_quantum = nonneg(&e)?,
                other => return Err(KvError::new(e.line, format!("unknown key {other:?}"))),
            }
        }
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), KvError> {
        let within = |w: &(f64, f64)| w.1 <= self.duration_s;
        if !self.active.iter().all(within) || !self.attack_window.iter().all(within) {
            return Err(KvError::new(0, "window extends past duration_s"));
        }
        if !self.attack.is_empty() && self.attack_window.is_none() {
            return Err(KvError::new(0, "attack rates need an attack_window"));
        }
        Ok(())
    }

    fn normal_windows(&self) -> Vec<(f64, f64)> {
        if self.active.is_empty() {
            vec![(0.0, self.duration_s)]
        } else {
            self.active.clone()
        }
    }
}

fn poisson<R: Rng>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map_or(0, |p| p.sample(rng) as u64)
}

/// Uniform time over the union of `windows`, in microseconds.
fn place<R: Rng>(windows: &[(f64, f64)], rng: &mut R) -> Option<u64> {
    let total: f64 = windows.iter().map(|w| w.1 - w.0).sum();
    if total <= 0.0 {
        return None;
    }
    let mut x = rng.random_range(0.0..total);
    for w in windows {
        let len = w.1 - w.0;
        if x < len {
            return Some(((w.0 + x) * 1e6) as u64);
        }
        x -= len;
    }
    windows.last().map(|w| (w.1 * 1e6) as u64)
}

fn quantize(level: f64, q: f64) -> f64 {
    if q <= 0.0 {
        return level;
    }
    let steps = (level / q).round();
    let decimals = (-q.log10()).ceil().clamp(0.0, 9.0) as usize;
    format!("{:.*}", decimals, steps * q).parse().unwrap_or(level)
}

/// Generates a dataset; a pure function of `(spec, seed)`.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Dataset {
    let mut rng = seeded_rng(seed);
    let duration_us = (spec.duration_s * 1e6) as u64;
    // (t_us, value, attack)
    let mut calls: Vec<(u64, u32, bool)> = Vec::new();
    let normal_windows = spec.normal_windows();
    for &(sys, mean) in &spec.normal {
        for _ in 0..poisson(mean, &mut rng) {
            if let Some(t) = place(&normal_windows, &mut rng) {
                calls.push((t.min(duration_us), sys, false));
            }
        }
    }
    if let Some(w) = spec.attack_window {
        for &(sys, mean) in &spec.attack {
            for _ in 0..poisson(mean, &mut rng) {
                if let Some(t) = place(&[w], &mut rng) {
                    calls.push((t.min(duration_us), sys, true));
                }
            }
        }
    }
    calls.sort_by_key(|c| c.0);

    let mut events: Vec<(ReplayEvent, bool)> = Vec::with_capacity(calls.len());
    let mut cpu = Vec::new();
    if spec.cpu_period_s > 0.0 {
        let period_us = (spec.cpu_period_s * 1e6) as u64;
        let mut t = period_us;
        let mut k = 0;
        while period_us > 0 && t <= duration_us {
            let start = t - period_us;
            let mut n = 0;
            while k < calls.len() && calls[k].0 < t {
                if calls[k].0 >= start {
                    n += 1;
                }
                k += 1;
            }
            let mut level = spec.cpu_baseline + spec.cpu_per_event * n as f64;
            if spec.cpu_noise > 0.0 {
                level += rng.random_range(-spec.cpu_noise..=spec.cpu_noise);
            }
            if let Some(w) = spec.attack_window {
                let (ws, we) = ((w.0 * 1e6) as u64, (w.1 * 1e6) as u64);
                if ws < t && we >= start {
                    level += spec.cpu_attack_burst;
                }
            }
            cpu.push((t, quantize(level.max(0.0), spec.cpu_quantum)));
            t += period_us;
        }
    }

    // Merge with antigen first on ties, carrying flags along.
    let (mut i, mut j) = (0, 0);
    while i < calls.len() || j < cpu.len() {
        let antigen_next = match (calls.get(i), cpu.get(j)) {
            (Some(c), Some(s)) => c.0 <= s.0,
            (Some(_), None) => true,
            _ => false,
        };
        if antigen_next {
            let (t, v, attack) = calls[i];
            events.push((
                ReplayEvent {
                    t_us: t,
                    kind: EventKind::Antigen(AntigenValue(v)),
                },
                attack,
            ));
            i += 1;
        } else {
            let (t, level) = cpu[j];
            events.push((
                ReplayEvent {
                    t_us: t,
                    kind: EventKind::Signal {
                        id: CPU_SIGNAL,
                        level,
                    },
                },
                false,
            ));
            j += 1;
        }
    }

    let (events, flags): (Vec<ReplayEvent>, Vec<bool>) = events.into_iter().unzip();
    let mut log = ReplayLog::new(events);
    log.set_meta("group", spec.group);
    log.set_meta("seed", seed);
    Dataset {
        name: String::new(),
        log,
        labels: Some(Labels {
            group: spec.group,
            flags,
        }),
    }
}

/// Fraction of antigen events flagged as attack.
pub fn attack_fraction(d: &Dataset) -> f64 {
    let Some(l) = &d.labels else { return 0.0 };
    let mut n = 0usize;
    let mut a = 0usize;
    for (e, &f) in d.log.events.iter().zip(&l.flags) {
        if e.kind.is_antigen() {
            n += 1;
            a += f as usize;
        }
    }
    if n == 0 {
        0.0
    } else {
        a as f64 / n as f64
    }
}

pub fn read_spec(path: &std::path::Path) -> Result<SynthSpec, ReplayError> {
    let text = std::fs::read_to_string(path)?;
    Ok(SynthSpec::parse(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_duration_is_empty() {
        let s = SynthSpec::parse("duration_s=0\nnormal=6:100\n").unwrap();
        assert!(generate_synthetic(&s, 1).log.events.is_empty());
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(SynthSpec::parse("normal=6:-1\n").is_err());
        assert!(SynthSpec::parse("duration_s=-1\n").is_err());
        assert!(SynthSpec::parse("duration_s=5\nactive=4-6\n").is_err());
        assert!(SynthSpec::parse("duration_s=5\nattack=3:1\n").is_err());
        assert!(SynthSpec::parse("colour=blue\n").is_err());
    }

    #[test]
    fn pure_function_of_spec_and_seed() {
        let s = SynthSpec::parse(
            "duration_s=10\nnormal=6:50\nnormal=5:5\ncpu_period_s=1\ncpu_per_event=0.01\ncpu_noise=0.05\ncpu_quantum=0.01\n",
        )
        .unwrap();
        let a = generate_synthetic(&s, 3);
        assert_eq!(a, generate_synthetic(&s, 3));
        assert_ne!(a.log.events, generate_synthetic(&s, 4).log.events);
        assert_eq!(a.log.events.iter().filter(|e| !e.kind.is_antigen()).count(), 10);
        let text = a.log.to_text();
        assert_eq!(ReplayLog::parse(&text).unwrap(), a.log);
    }

    #[test]
    fn attack_flags_follow_repertoire() {
        let s = SynthSpec::parse(
            "group=success\nduration_s=10\nactive=0-1\nnormal=6:200\nattack_window=5-6\nattack=11:600\n",
        )
        .unwrap();
        let d = generate_synthetic(&s, 9);
        let f = attack_fraction(&d);
        assert!((f - 0.75).abs() < 0.05, "{f}");
        let l = d.labels.unwrap();
        for (e, flag) in d.log.events.iter().zip(l.flags) {
            let t = e.t_us;
            if flag {
                assert!((5_000_000..=6_000_000).contains(&t));
                assert_eq!(e.kind, EventKind::Antigen(AntigenValue(11)));
            } else {
                assert!(t <= 1_000_000);
            }
        }
    }

    #[test]
    fn quantized_levels_are_tidy() {
        assert_eq!(quantize(0.347, 0.01), 0.35);
        assert_eq!(quantize(0.3, 0.1).to_string(), "0.3");
        assert_eq!(quantize(0.123, 0.0), 0.123);
    }
}
