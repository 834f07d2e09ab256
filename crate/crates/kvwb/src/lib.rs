//! kvwb: an evaluation workbench for single-node key-value stores.
//!
//! The workbench is driven by three spec cards (environment, workload,
//! requirement) and splits evaluation into two halves:
//!
//! - a **correctness gate** ([`gate`]): post-load retention, a five-test
//!   crash/monotonicity suite, and a torn-read stress in which every byte a
//!   store returns is validated against a keyed envelope format;
//! - a **performance evaluator** ([`bench`]): load + timed closed-loop runs,
//!   throughput and latency, leading-indicator counters, memory-budget
//!   enforcement, and apparatus-hardening checks (driver parity, environment
//!   snapshot diffs, paired-run dispersion).
//!
//! Workload generation is hardened against benchmark gaming: keys pass
//! through a per-run secret permutation and values are self-validating
//! envelopes filled with keyed-PRF output, so a store cannot substitute
//! recomputation for storage or exploit key-density regularities.
//!
//! Three families of stores ship with the workbench:
//!
//! - [`baseline`]: sharded maps under per-shard locks with write-through
//!   durability — the obviously-correct oracle and performance floor;
//! - [`reference`]: a specialized engine (single-word slot metadata with
//!   inline values, per-thread ring logs that are the log's in-memory
//!   prefix, seqlock-checked lock-free reads, flush-and-drop budgeting);
//! - [`gallery`]: deliberately defective variants reproducing known
//!   benchmark-gaming patterns, used as positive controls for the gate.

pub mod baseline;
pub mod bench;
pub mod fabric;
pub mod gallery;
pub mod gate;
pub mod meta;
pub mod reference;
pub mod spec;
pub mod store;
pub mod workload;
