//! File formats, wall-clock benchmarking and experiment drivers on top of
//! [`blockprune_core`].

pub mod checkpoint;
pub mod cli;
pub mod efficiency;
pub mod error;
pub mod report;
pub mod sweep;
pub mod xyz;

pub use blockprune_core as engine;
pub use error::{Error, Result};

use std::time::Instant;

/// [`engine::training::Clock`] backed by [`Instant`].
#[derive(Debug, Clone, Copy)]
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        WallClock(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::start()
    }
}

impl engine::training::Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}
