//! Timestamps used throughout the protocol.
//!
//! All protocol code takes "now" as an explicit argument; nothing reads the
//! wall clock. A [`Timestamp`] counts microseconds since the Unix epoch so the
//! 102.4 ms beacon interval is exactly representable.

use std::fmt;
use std::ops::{Add, Sub};
use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub const fn from_micros(us: u64) -> Self {
        Timestamp(us)
    }

    pub const fn from_secs(secs: u64) -> Self {
        Timestamp(secs * 1_000_000)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    /// Whole seconds, floored.
    pub const fn as_secs(self) -> u64 {
        self.0 / 1_000_000
    }

    pub fn saturating_sub(self, d: Duration) -> Self {
        Timestamp(self.0.saturating_sub(d.as_micros() as u64))
    }

    /// Shift by a signed number of seconds, clamping at zero.
    pub fn offset_secs(self, secs: i64) -> Self {
        let us = secs.saturating_mul(1_000_000);
        if us >= 0 {
            Timestamp(self.0.saturating_add(us as u64))
        } else {
            Timestamp(self.0.saturating_sub(us.unsigned_abs()))
        }
    }

    pub fn duration_since(self, earlier: Timestamp) -> Duration {
        Duration::from_micros(self.0.saturating_sub(earlier.0))
    }
}

impl Add<Duration> for Timestamp {
    type Output = Timestamp;

    fn add(self, d: Duration) -> Timestamp {
        Timestamp(self.0.saturating_add(d.as_micros() as u64))
    }
}

impl Sub<Timestamp> for Timestamp {
    type Output = Duration;

    fn sub(self, rhs: Timestamp) -> Duration {
        self.duration_since(rhs)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beacon_interval_is_exact() {
        let t = Timestamp::from_micros(0) + Duration::from_micros(102_400);
        assert_eq!(t.as_micros(), 102_400);
    }

    #[test]
    fn signed_offsets_clamp() {
        let t = Timestamp::from_secs(10);
        assert_eq!(t.offset_secs(-20), Timestamp::ZERO);
        assert_eq!(t.offset_secs(5).as_secs(), 15);
        assert_eq!(t.offset_secs(-3).as_secs(), 7);
    }
}
