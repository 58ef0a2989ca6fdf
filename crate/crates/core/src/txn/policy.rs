use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use rand::Rng;

use super::TxnError;

/// Speculative footprint limit, in cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapacityProfile {
    Short,
    Long,
    Cells(usize),
}

impl CapacityProfile {
    pub const SHORT_CELLS: usize = 64;
    pub const LONG_CELLS: usize = 1024;

    pub fn cells(self) -> usize {
        match self {
            CapacityProfile::Short => Self::SHORT_CELLS,
            CapacityProfile::Long => Self::LONG_CELLS,
            CapacityProfile::Cells(n) => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    /// Retry with exponential backoff; serialize once `max_retries` attempts
    /// have aborted.
    RtmBackoff { max_retries: u32, base_backoff: Duration },
    /// Serialize after the first abort.
    HleSerializeAfterFirst,
    /// Retry immediately; serialize after `max_rollbacks` aborts.
    BgqAutoRetry { max_rollbacks: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub kind: PolicyKind,
    pub capacity: CapacityProfile,
    /// Probability that an attempt is doomed to abort with `Other`.
    pub other_abort_probability: f64,
}

impl RetryPolicy {
    pub const RTM_MAX_RETRIES: u32 = 8;
    pub const BGQ_MAX_ROLLBACKS: u32 = 10;

    pub fn rtm() -> Self {
        RetryPolicy {
            kind: PolicyKind::RtmBackoff {
                max_retries: Self::RTM_MAX_RETRIES,
                base_backoff: Duration::from_micros(1),
            },
            capacity: CapacityProfile::Long,
            other_abort_probability: 0.0,
        }
    }

    pub fn hle() -> Self {
        RetryPolicy { kind: PolicyKind::HleSerializeAfterFirst, capacity: CapacityProfile::Long, other_abort_probability: 0.0 }
    }

    pub fn bgq(capacity: CapacityProfile) -> Self {
        RetryPolicy {
            kind: PolicyKind::BgqAutoRetry { max_rollbacks: Self::BGQ_MAX_ROLLBACKS },
            capacity,
            other_abort_probability: 0.0,
        }
    }

    pub fn with_capacity(mut self, capacity: CapacityProfile) -> Self {
        self.capacity = capacity;
        self
    }

    pub fn with_other_aborts(mut self, probability: f64) -> Self {
        assert!((0.0..=1.0).contains(&probability), "probability {probability} outside [0,1]");
        self.other_abort_probability = probability;
        self
    }

    /// Number of aborts of one transaction after which it runs serialized.
    pub fn serialize_after(&self) -> u32 {
        match self.kind {
            PolicyKind::RtmBackoff { max_retries, .. } => max_retries.max(1),
            PolicyKind::HleSerializeAfterFirst => 1,
            PolicyKind::BgqAutoRetry { max_rollbacks } => max_rollbacks.max(1),
        }
    }

    pub fn capacity_cells(&self) -> usize {
        self.capacity.cells()
    }

    pub fn backoff(&self) -> Option<ExpBackoff> {
        match self.kind {
            PolicyKind::RtmBackoff { base_backoff, .. } => Some(ExpBackoff::new(base_backoff, Duration::from_millis(1))),
            _ => None,
        }
    }
}

/// Doubling backoff with ±50% jitter, capped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpBackoff {
    pub base: Duration,
    pub cap: Duration,
}

impl ExpBackoff {
    pub fn new(base: Duration, cap: Duration) -> Self {
        ExpBackoff { base, cap }
    }

    /// Delay before retry number `attempt` (1-based).
    pub fn delay(&self, attempt: u32, rng: &mut impl Rng) -> Duration {
        let shift = attempt.saturating_sub(1).min(30);
        let nominal = self.base.saturating_mul(1 << shift).min(self.cap);
        nominal.mul_f64(rng.gen_range(0.5..=1.5)).min(self.cap)
    }
}

/// How an activity is made atomic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mechanism {
    Htm(RetryPolicy),
    /// Per-operator single-word atomics, no transactions.
    Atomics,
    /// Every activity under the one global lock.
    GlobalLock,
}

impl Mechanism {
    pub fn name(&self) -> &'static str {
        match self {
            Mechanism::Htm(p) => match (p.kind, p.capacity) {
                (PolicyKind::RtmBackoff { .. }, _) => "rtm",
                (PolicyKind::HleSerializeAfterFirst, _) => "hle",
                (PolicyKind::BgqAutoRetry { .. }, CapacityProfile::Short) => "bgq-short",
                (PolicyKind::BgqAutoRetry { .. }, _) => "bgq-long",
            },
            Mechanism::Atomics => "atomics",
            Mechanism::GlobalLock => "locks",
        }
    }

    pub fn is_htm(&self) -> bool {
        matches!(self, Mechanism::Htm(_))
    }

    pub fn all() -> Vec<Mechanism> {
        ["rtm", "hle", "bgq-short", "bgq-long", "atomics", "locks"].iter().map(|s| s.parse().expect("known")).collect()
    }
}

impl FromStr for Mechanism {
    type Err = TxnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rtm" => Ok(Mechanism::Htm(RetryPolicy::rtm())),
            "hle" => Ok(Mechanism::Htm(RetryPolicy::hle())),
            "bgq-short" => Ok(Mechanism::Htm(RetryPolicy::bgq(CapacityProfile::Short))),
            "bgq-long" => Ok(Mechanism::Htm(RetryPolicy::bgq(CapacityProfile::Long))),
            "atomics" => Ok(Mechanism::Atomics),
            "locks" => Ok(Mechanism::GlobalLock),
            other => Err(TxnError::UnknownPolicy(other.to_string())),
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
