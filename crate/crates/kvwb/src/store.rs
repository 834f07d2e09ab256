//! The contract every store under test implements, plus the indicator
//! counters and crash-test hooks the gate and bench drive.

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::spec::SpecCard;

#[derive(Debug, Error)]
pub enum StoreError {
    /// Index or log space exhausted; a capped design refusing more work.
    #[error("capacity: {0}")]
    Capacity(String),
    /// Internal invariant breach or I/O failure. Always a gate failure.
    #[error("store fault: {0}")]
    Fault(String),
    #[error("recovery: {0}")]
    Recovery(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Found,
    NotFound,
    Ok,
}

/// One completion structure serves both paths: inline/RAM hits complete
/// synchronously, file misses complete through the same struct with
/// `synchronous == false`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Completion {
    pub status: Status,
    pub synchronous: bool,
}

impl Completion {
    pub fn found(synchronous: bool) -> Self {
        Completion { status: Status::Found, synchronous }
    }
    pub fn not_found() -> Self {
        Completion { status: Status::NotFound, synchronous: true }
    }
    pub fn ok() -> Self {
        Completion { status: Status::Ok, synchronous: true }
    }
    pub fn is_found(&self) -> bool {
        self.status == Status::Found
    }
}

#[derive(Debug, Clone, Copy)]
pub enum CrashMode {
    /// Crash in a run that took checkpoints; recovery may use the newest
    /// complete one.
    FuzzyCheckpoint,
    /// Recovery must rebuild from durable log bytes alone.
    NoCheckpoint,
}

pub type CheckpointId = u64;

/// Point-in-time snapshot of a store's leading indicators. All fields are
/// monotone counters except `budget_bytes_in_use`, which is a gauge covering
/// every store-managed allocation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IndicatorCounters {
    pub ring_hits: u64,
    pub inline_hits: u64,
    pub file_reads: u64,
    pub seqlock_retries: u64,
    pub probe_steps: u64,
    pub bytes_appended: u64,
    pub budget_bytes_in_use: u64,
}

impl IndicatorCounters {
    /// Counter deltas since `earlier`; the gauge carries the later value.
    pub fn delta_since(&self, earlier: &IndicatorCounters) -> IndicatorCounters {
        IndicatorCounters {
            ring_hits: self.ring_hits - earlier.ring_hits,
            inline_hits: self.inline_hits - earlier.inline_hits,
            file_reads: self.file_reads - earlier.file_reads,
            seqlock_retries: self.seqlock_retries - earlier.seqlock_retries,
            probe_steps: self.probe_steps - earlier.probe_steps,
            bytes_appended: self.bytes_appended - earlier.bytes_appended,
            budget_bytes_in_use: self.budget_bytes_in_use,
        }
    }
}

/// Mutator for read-modify-write: maps the current value (or absence) to the
/// successor value, written into `out`. Applied atomically per key.
pub type RmwModifier<'a> = dyn FnMut(Option<&[u8]>, &mut Vec<u8>) + 'a;

/// A single-node key-value store under evaluation.
///
/// Keys arriving here are already scrambled; values are opaque bytes. The
/// four point operations may be called concurrently from up to the
/// registered number of driver threads, each passing its own stable
/// `thread_id` in `[0, owner_threads)`. `checkpoint` may run concurrently
/// with writers; `simulate_crash`/`recover` are exclusive.
pub trait Store: Send + Sync {
    /// Read the current value for `key` into `out` (cleared first).
    fn read(&self, thread_id: u16, key: u64, out: &mut Vec<u8>) -> Result<Completion, StoreError>;

    fn upsert(&self, thread_id: u16, key: u64, value: &[u8]) -> Result<Completion, StoreError>;

    fn rmw(&self, thread_id: u16, key: u64, modifier: &mut RmwModifier<'_>)
        -> Result<Completion, StoreError>;

    fn delete(&self, thread_id: u16, key: u64) -> Result<Completion, StoreError>;

    fn checkpoint(&self) -> Result<CheckpointId, StoreError>;

    /// Discard all volatile state, retaining only bytes durably flushed.
    fn simulate_crash(&self, mode: CrashMode) -> Result<(), StoreError>;

    /// Rebuild a servable state from durable bytes. Only legal after
    /// [`Store::simulate_crash`].
    fn recover(&self) -> Result<(), StoreError>;

    fn snapshot_indicators(&self) -> IndicatorCounters;
}

/// Opens fresh store instances; the gate and bench create one per test so
/// crash experiments never share state.
pub trait StoreFactory: Send + Sync {
    /// `owner_threads` is the number of driver threads that will issue
    /// writes (each owning its `thread_id` slot).
    fn open(
        &self,
        card: &SpecCard,
        dir: &Path,
        owner_threads: u16,
    ) -> Result<Box<dyn Store>, StoreError>;

    fn name(&self) -> &'static str;
}
