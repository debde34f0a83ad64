//! Time source shared by the engine, provisioner, gateway, and QPU.
//!
//! Under `simulated` mode the clock is a millisecond counter advanced
//! explicitly by the runtime's event pump, which makes every timing-sensitive
//! test deterministic. Under `wall` mode it reads the system clock.

use serde::{Deserialize, Serialize};
use std::time::{SystemTime, UNIX_EPOCH};

/// Milliseconds — simulated ticks or Unix epoch millis depending on mode.
pub type TimeMs = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    #[default]
    Simulated,
    Wall,
}

#[derive(Debug)]
pub struct Clock {
    mode: ClockMode,
    sim_now: TimeMs,
}

impl Clock {
    pub fn new(mode: ClockMode) -> Self {
        Clock { mode, sim_now: 0 }
    }

    pub fn simulated() -> Self {
        Clock::new(ClockMode::Simulated)
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    pub fn now_ms(&self) -> TimeMs {
        match self.mode {
            ClockMode::Simulated => self.sim_now,
            ClockMode::Wall => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .expect("system clock before Unix epoch")
                .as_millis() as TimeMs,
        }
    }

    /// Advance simulated time to `t`. The clock never runs backwards; in wall
    /// mode this is a no-op because time advances on its own.
    pub fn advance_to(&mut self, t: TimeMs) {
        if self.mode == ClockMode::Simulated && t > self.sim_now {
            self.sim_now = t;
        }
    }
}
