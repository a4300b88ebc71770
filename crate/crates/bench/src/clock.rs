use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Seconds charged per scalar multiply-add under [`ClockMode::Work`].
pub const WORK_SECONDS_PER_FLOP: f64 = 1e-9;

/// How elapsed time is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// Monotonic wall-clock time.
    #[default]
    Wall,
    /// Deterministic cost model: distance evaluations (plus vectors moved
    /// by updates) times the dimension, at [`WORK_SECONDS_PER_FLOP`].
    Work,
}

impl ClockMode {
    pub fn work_seconds(self, units: u64, dim: usize) -> f64 {
        units as f64 * dim as f64 * WORK_SECONDS_PER_FLOP
    }

    /// Run `f`, returning its value and the charged seconds. `units` maps
    /// the value to work units for the work clock.
    pub fn measure<R>(self, dim: usize, f: impl FnOnce() -> R, units: impl FnOnce(&R) -> u64) -> (R, f64) {
        let start = Instant::now();
        let out = f();
        let wall = start.elapsed().as_secs_f64();
        let seconds = match self {
            ClockMode::Wall => wall,
            ClockMode::Work => self.work_seconds(units(&out), dim),
        };
        (out, seconds)
    }
}
