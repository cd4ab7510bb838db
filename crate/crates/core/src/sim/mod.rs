//! Deterministic discrete-event engine.
//!
//! Time is kept in integer microseconds. Events are ordered by
//! `(fire_at, seq)` where `seq` is the insertion counter, so two runs that
//! schedule the same events in the same order dispatch them identically.

mod engine;
mod rng;

pub use engine::{Engine, Event, EventId, Message, SimSummary};
pub use rng::{mix64, RngStream};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Microseconds since simulation start.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    pub const fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }

    /// Smallest multiple of `step` that is `>= self`.
    pub fn ceil_to(self, step: u64) -> SimTime {
        if step == 0 {
            return self;
        }
        SimTime(self.0.div_ceil(step) * step)
    }
}

impl std::ops::Add<u64> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: u64) -> SimTime {
        SimTime(self.0 + rhs)
    }
}

impl std::ops::Sub for SimTime {
    type Output = u64;
    fn sub(self, rhs: SimTime) -> u64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Handle of a simulated entity (RAN node, core function, UE, RIC, ...).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct EntityId(pub u32);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("cannot schedule at t={fire_at}us, clock is already at t={clock}us")]
    SchedulingInPast { fire_at: SimTime, clock: SimTime },
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
}
