//! Virtual and real clocks behind one pacing interface.
//!
//! The scheduler plans on a millisecond timeline either way; the virtual
//! clock jumps, the real clock sleeps. Scheduling decisions are identical
//! under both, which is what makes the latency math reproducible.

use std::time::{Duration, Instant};

/// A time source the scheduler paces itself against.
pub trait Clock {
    /// Current position on the millisecond timeline.
    fn now_ms(&self) -> u64;

    /// Block (or jump) until the timeline reaches `t_ms`. Never moves
    /// backwards.
    fn advance_to(&mut self, t_ms: u64);
}

/// Deterministic simulated clock.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock {
    now: u64,
}

impl VirtualClock {
    pub fn new() -> VirtualClock {
        VirtualClock::default()
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> u64 {
        self.now
    }

    fn advance_to(&mut self, t_ms: u64) {
        self.now = self.now.max(t_ms);
    }
}

/// Wall-clock pacing for demos; the timeline origin is construction time.
#[derive(Debug, Clone)]
pub struct RealClock {
    start: Instant,
}

impl RealClock {
    pub fn new() -> RealClock {
        RealClock {
            start: Instant::now(),
        }
    }
}

impl Default for RealClock {
    fn default() -> Self {
        RealClock::new()
    }
}

impl Clock for RealClock {
    fn now_ms(&self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }

    fn advance_to(&mut self, t_ms: u64) {
        let now = self.now_ms();
        if t_ms > now {
            std::thread::sleep(Duration::from_millis(t_ms - now));
        }
    }
}
