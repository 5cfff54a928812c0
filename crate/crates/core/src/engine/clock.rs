use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClockMode {
    /// One tick per `cell_update_rate` of wall time.
    Realtime,
    /// Wall time runs `factor` times faster than simulated time.
    Accelerated(f64),
    /// Time advances only by ticking; the wall clock is never read.
    DeterministicTick,
}

/// Paces the scheduler. Simulated time is always `tick * tick_us`; the mode
/// only decides how long the scheduler waits between ticks.
#[derive(Debug, Clone)]
pub struct RunClock {
    mode: ClockMode,
    tick_us: u64,
    start: Option<Instant>,
}

impl RunClock {
    pub fn new(mode: ClockMode, tick_us: u64) -> Self {
        if let ClockMode::Accelerated(f) = mode {
            assert!(f > 0.0 && f.is_finite(), "acceleration factor must be positive");
        }
        RunClock {
            mode,
            tick_us,
            start: None,
        }
    }

    pub fn deterministic(tick_us: u64) -> Self {
        Self::new(ClockMode::DeterministicTick, tick_us)
    }

    pub fn realtime(tick_us: u64) -> Self {
        Self::new(ClockMode::Realtime, tick_us)
    }

    pub fn accelerated(tick_us: u64, factor: f64) -> Self {
        Self::new(ClockMode::Accelerated(factor), tick_us)
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    pub fn tick_us(&self) -> u64 {
        self.tick_us
    }

    fn factor(&self) -> Option<f64> {
        match self.mode {
            ClockMode::Realtime => Some(1.0),
            ClockMode::Accelerated(f) => Some(f),
            ClockMode::DeterministicTick => None,
        }
    }

    /// Marks the run start. Called once by the scheduler.
    pub fn start(&mut self) {
        if self.factor().is_some() {
            self.start = Some(Instant::now());
        }
    }

    /// Wall-clock offset at which `tick` is due.
    pub fn deadline(&self, tick: u64) -> Option<Duration> {
        let f = self.factor()?;
        let sim = tick as f64 * self.tick_us as f64;
        Some(Duration::from_secs_f64(sim / f / 1e6))
    }

    /// Blocks until `tick` is due. Returns immediately in deterministic mode.
    pub fn wait_for_tick(&self, tick: u64) {
        let (Some(start), Some(deadline)) = (self.start, self.deadline(tick)) else {
            return;
        };
        let elapsed = start.elapsed();
        if deadline > elapsed {
            std::thread::sleep(deadline - elapsed);
        }
    }

    /// Simulated microseconds elapsed, derived from the wall clock. Zero in
    /// deterministic mode.
    pub fn wall_sim_us(&self) -> u64 {
        match (self.start, self.factor()) {
            (Some(s), Some(f)) => (s.elapsed().as_secs_f64() * 1e6 * f) as u64,
            _ => 0,
        }
    }
}
