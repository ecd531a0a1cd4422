//! Wall-clock stopwatch. `std::time::Instant` is unavailable on
//! `wasm32-unknown-unknown`, where the stopwatch always reads zero and time
//! limits never fire.

use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    pub(crate) fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    pub(crate) fn elapsed_secs(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}

/// Time limit and cancellation flag for a long computation.
#[derive(Debug, Clone, Copy)]
pub struct Deadline<'a> {
    clock: Stopwatch,
    limit_secs: Option<f64>,
    cancel: Option<&'a AtomicBool>,
}

impl<'a> Deadline<'a> {
    /// Starts the clock now. `None` means no time limit.
    pub fn new(limit_secs: Option<f64>, cancel: Option<&'a AtomicBool>) -> Self {
        Self {
            clock: Stopwatch::start(),
            limit_secs,
            cancel,
        }
    }

    pub fn unlimited() -> Self {
        Self::new(None, None)
    }

    pub fn elapsed_secs(&self) -> f64 {
        self.clock.elapsed_secs()
    }

    /// Seconds left before the limit, if there is one.
    pub fn remaining_secs(&self) -> Option<f64> {
        self.limit_secs.map(|l| l - self.elapsed_secs())
    }

    pub fn check(&self) -> Result<()> {
        if self.cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
            return Err(Error::Cancelled);
        }
        if self.limit_secs.is_some_and(|l| self.elapsed_secs() > l) {
            return Err(Error::TimeLimit);
        }
        Ok(())
    }
}
