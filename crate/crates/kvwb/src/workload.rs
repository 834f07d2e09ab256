//! Workload generation: deterministic, replayable operation streams from a
//! workload card.
//!
//! Each driver thread gets an independent sub-generator seeded from
//! (run secret, thread id), so streams are byte-identical across runs and
//! independent of thread interleaving. Keys are sampled as Zipfian ranks (or
//! uniformly) over the logical key space; the driver scrambles them at the
//! store boundary.
//!
//! Zipf sampling uses rejection inversion over the hat-function integral
//! `H(x) = ((x^(1-theta)) - 1) / (1 - theta)` (with the `theta -> 1` limit
//! handled separately), so constructing a sampler for a 250 M-key card needs
//! no O(n) table. `theta == 0` degenerates to uniform.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fabric::RunSecret;
use crate::spec::{KeyDistribution, OpKind, SpecCard, ValueSizeSpec};

// ChaCha stream indices carving one per-thread seed into independent
// sub-generators.
const STREAM_RUN: u64 = 0;
const STREAM_LOAD: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperationRecord {
    pub op: OpKind,
    pub logical_key: u64,
    /// Payload bytes for Upsert/RMW; 0 otherwise.
    pub payload_len: u32,
    pub thread_id: u16,
    /// Per-thread counter, strictly increasing within a stream.
    pub seq: u64,
}

#[derive(Debug, Error)]
#[error("trace format error at line {line}: {detail}")]
pub struct TraceFormatError {
    pub line: usize,
    pub detail: String,
}

// ---------------------------------------------------------------------------
// Zipf sampler
// ---------------------------------------------------------------------------

/// Zipfian rank sampler over `[1, n]` with `P(rank i) ~ i^-theta`,
/// normalized by the generalized harmonic number `H(n, theta)`.
#[derive(Debug, Clone, Copy)]
pub struct ZipfSampler {
    n: u64,
    theta: f64,
    h_integral_x1: f64,
    h_integral_n: f64,
    s: f64,
}

impl ZipfSampler {
    pub fn new(n: u64, theta: f64) -> Result<Self, String> {
        if n == 0 {
            return Err("zipf sampler needs n >= 1".into());
        }
        if !(theta >= 0.0) || !theta.is_finite() {
            return Err(format!("zipf theta {theta} must be finite and >= 0"));
        }
        Ok(ZipfSampler {
            n,
            theta,
            h_integral_x1: h_integral(1.5, theta) - 1.0,
            h_integral_n: h_integral(n as f64 + 0.5, theta),
            s: 2.0 - h_integral_inv(h_integral(2.5, theta) - h(2.0, theta), theta),
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Draw a rank in `[1, n]`; deterministic given the RNG state.
    pub fn sample<R: RngCore>(&self, rng: &mut R) -> u64 {
        if self.theta == 0.0 {
            return rng.gen_range(1..=self.n);
        }
        loop {
            let u: f64 =
                self.h_integral_n + rng.gen::<f64>() * (self.h_integral_x1 - self.h_integral_n);
            let x = h_integral_inv(u, self.theta);
            // Round to the nearest rank and clamp numerical spill.
            let k64 = (x + 0.5).floor().clamp(1.0, self.n as f64);
            if k64 - x <= self.s
                || u >= h_integral(k64 + 0.5, self.theta) - h(k64, self.theta)
            {
                return k64 as u64;
            }
        }
    }
}

/// `H(x)`: integral of the hat function `h(x) = x^-theta`, shifted so a
/// finite limit exists at `theta == 1`.
fn h_integral(x: f64, theta: f64) -> f64 {
    let log_x = x.ln();
    exp_m1_over_x((1.0 - theta) * log_x) * log_x
}

fn h(x: f64, theta: f64) -> f64 {
    (-theta * x.ln()).exp()
}

fn h_integral_inv(x: f64, theta: f64) -> f64 {
    let mut t = x * (1.0 - theta);
    if t < -1.0 {
        // Numerical noise can push t marginally below the domain.
        t = -1.0;
    }
    (ln_1p_over_x(t) * x).exp()
}

/// `log(1 + x) / x`, Taylor-expanded near zero.
fn ln_1p_over_x(x: f64) -> f64 {
    if x.abs() > 1e-8 {
        x.ln_1p() / x
    } else {
        1.0 - x * (0.5 - x * (1.0 / 3.0 - 0.25 * x))
    }
}

/// `(exp(x) - 1) / x`, Taylor-expanded near zero.
fn exp_m1_over_x(x: f64) -> f64 {
    if x.abs() > 1e-8 {
        x.exp_m1() / x
    } else {
        1.0 + x * 0.5 * (1.0 + x / 3.0 * (1.0 + 0.25 * x))
    }
}

// ---------------------------------------------------------------------------
// Payload sizes
// ---------------------------------------------------------------------------

pub fn sample_payload_len<R: RngCore>(spec: &ValueSizeSpec, rng: &mut R) -> u32 {
    match *spec {
        ValueSizeSpec::Fixed(n) => n,
        ValueSizeSpec::Bimodal { size_a, size_b, frac_a } => {
            if rng.gen::<f64>() < frac_a {
                size_a
            } else {
                size_b
            }
        }
        ValueSizeSpec::InlineTail { frac_zero, frac_small } => {
            let u = rng.gen::<f64>();
            if u < frac_zero {
                0
            } else if u < frac_zero + frac_small {
                rng.gen_range(1..=7)
            } else {
                rng.gen_range(8..=200)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Run streams
// ---------------------------------------------------------------------------

/// Infinite per-thread operation stream for the timed phase. Single
/// consumer; distinct thread ids may run concurrently.
pub struct OpStream {
    rng: ChaCha8Rng,
    zipf: Option<ZipfSampler>,
    num_keys: u64,
    value_sizes: ValueSizeSpec,
    mix_cdf: [(OpKind, f64); 4],
    thread_id: u16,
    seq: u64,
    // Time-series state (burst_len > 0): a sliding window of live keys,
    // namespaced per thread, with FIFO deletes chasing inserts.
    burst_len: u32,
    read_fraction: f64,
    ts_insert_cursor: u64,
    ts_delete_cursor: u64,
    ts_toggle_delete: bool,
    ts_in_burst: u32,
    ts_read_credit: f64,
    ts_reads_pending: u32,
}

/// Build the stream for one driver thread.
pub fn stream(card: &SpecCard, secret: &RunSecret, thread_id: u16) -> OpStream {
    let mut rng = ChaCha8Rng::from_seed(secret.stream_seed(thread_id));
    rng.set_stream(STREAM_RUN);
    let zipf = match card.workload.distribution {
        KeyDistribution::Zipfian { theta } if theta > 0.0 => {
            Some(ZipfSampler::new(card.workload.num_keys, theta).expect("validated card"))
        }
        _ => None,
    };
    let mix = card.workload.mix;
    let mut acc = 0.0;
    let mut mix_cdf = [(OpKind::Read, 0.0); 4];
    for (slot, op) in mix_cdf.iter_mut().zip(OpKind::ALL) {
        acc += mix.fraction(op);
        *slot = (op, acc);
    }
    OpStream {
        rng,
        zipf,
        num_keys: card.workload.num_keys,
        value_sizes: card.workload.value_size_spec,
        mix_cdf,
        thread_id,
        seq: 0,
        burst_len: card.workload.burst_len,
        read_fraction: mix.read,
        ts_insert_cursor: 0,
        ts_delete_cursor: 0,
        ts_toggle_delete: false,
        ts_in_burst: 0,
        ts_read_credit: 0.0,
        ts_reads_pending: 0,
    }
}

impl OpStream {
    fn sample_key(&mut self) -> u64 {
        match &self.zipf {
            Some(z) => z.sample(&mut self.rng) - 1,
            None => self.rng.gen_range(0..self.num_keys),
        }
    }

    /// Time-series keys live in a per-thread namespace so concurrent
    /// streams never contend on ownership of a growing key range.
    fn ts_key(&self, counter: u64) -> u64 {
        ((self.thread_id as u64) << 40) | counter
    }

    fn next_time_series(&mut self) -> OperationRecord {
        self.seq += 1;
        if self.ts_reads_pending > 0 {
            self.ts_reads_pending -= 1;
            let live = self.ts_insert_cursor - self.ts_delete_cursor;
            let key = if live > 0 {
                let offset = self.rng.gen_range(0..live);
                self.ts_key(self.ts_delete_cursor + offset)
            } else {
                self.ts_key(self.ts_insert_cursor.saturating_sub(1))
            };
            return OperationRecord {
                op: OpKind::Read,
                logical_key: key,
                payload_len: 0,
                thread_id: self.thread_id,
                seq: self.seq,
            };
        }

        let record = if self.ts_toggle_delete && self.ts_delete_cursor < self.ts_insert_cursor {
            let key = self.ts_key(self.ts_delete_cursor);
            self.ts_delete_cursor += 1;
            OperationRecord {
                op: OpKind::Delete,
                logical_key: key,
                payload_len: 0,
                thread_id: self.thread_id,
                seq: self.seq,
            }
        } else {
            let key = self.ts_key(self.ts_insert_cursor);
            self.ts_insert_cursor += 1;
            let len = sample_payload_len(&self.value_sizes, &mut self.rng);
            OperationRecord {
                op: OpKind::Upsert,
                logical_key: key,
                payload_len: len,
                thread_id: self.thread_id,
                seq: self.seq,
            }
        };
        self.ts_toggle_delete = !self.ts_toggle_delete;

        self.ts_in_burst += 1;
        if self.ts_in_burst >= self.burst_len {
            self.ts_in_burst = 0;
            if self.read_fraction > 0.0 && self.read_fraction < 1.0 {
                self.ts_read_credit +=
                    self.burst_len as f64 * self.read_fraction / (1.0 - self.read_fraction);
                let reads = self.ts_read_credit.floor();
                self.ts_read_credit -= reads;
                self.ts_reads_pending = reads as u32;
            }
        }
        record
    }
}

impl Iterator for OpStream {
    type Item = OperationRecord;

    fn next(&mut self) -> Option<OperationRecord> {
        if self.burst_len > 0 {
            return Some(self.next_time_series());
        }
        self.seq += 1;
        let u = self.rng.gen::<f64>();
        let op = self
            .mix_cdf
            .iter()
            .find(|(_, cum)| u < *cum)
            .map(|(op, _)| *op)
            .unwrap_or(OpKind::Delete);
        let logical_key = self.sample_key();
        let payload_len = match op {
            OpKind::Upsert | OpKind::Rmw => sample_payload_len(&self.value_sizes, &mut self.rng),
            _ => 0,
        };
        Some(OperationRecord { op, logical_key, payload_len, thread_id: self.thread_id, seq: self.seq })
    }
}

// ---------------------------------------------------------------------------
// Load phase
// ---------------------------------------------------------------------------

/// The contiguous slice of the logical key space thread `tid` loads.
pub fn load_partition(num_keys: u64, threads: u16, tid: u16) -> std::ops::Range<u64> {
    let threads = threads as u64;
    let tid = tid as u64;
    let base = num_keys / threads;
    let rem = num_keys % threads;
    let start = tid * base + tid.min(rem);
    let len = base + if tid < rem { 1 } else { 0 };
    start..start + len
}

/// Upserts covering thread `tid`'s partition exactly once.
pub fn load_phase_thread(
    card: &SpecCard,
    secret: &RunSecret,
    threads: u16,
    tid: u16,
) -> impl Iterator<Item = OperationRecord> {
    let mut rng = ChaCha8Rng::from_seed(secret.stream_seed(tid));
    rng.set_stream(STREAM_LOAD);
    let sizes = card.workload.value_size_spec;
    load_partition(card.workload.num_keys, threads, tid).enumerate().map(move |(i, key)| {
        OperationRecord {
            op: OpKind::Upsert,
            logical_key: key,
            payload_len: sample_payload_len(&sizes, &mut rng),
            thread_id: tid,
            seq: i as u64 + 1,
        }
    })
}

/// All load records across threads; covers every logical key exactly once.
pub fn load_phase<'a>(
    card: &'a SpecCard,
    secret: &'a RunSecret,
) -> impl Iterator<Item = OperationRecord> + 'a {
    let threads = card.environment.cpu_threads as u16;
    (0..threads).flat_map(move |tid| load_phase_thread(card, secret, threads, tid))
}

// ---------------------------------------------------------------------------
// Trace replay
// ---------------------------------------------------------------------------

/// Replay a newline-delimited trace of `GET|SET|DEL <key:u64> [<size>]`
/// records in file order. Blank lines and `#` comments are skipped.
pub fn replay_trace(
    path: &Path,
) -> Result<impl Iterator<Item = Result<OperationRecord, TraceFormatError>>, TraceFormatError> {
    let file = File::open(path).map_err(|e| TraceFormatError {
        line: 0,
        detail: format!("cannot open {}: {e}", path.display()),
    })?;
    let reader = BufReader::new(file);
    let mut seq = 0u64;
    Ok(reader.lines().enumerate().filter_map(move |(idx, line)| {
        let line_no = idx + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                return Some(Err(TraceFormatError { line: line_no, detail: e.to_string() }))
            }
        };
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            return None;
        }
        seq += 1;
        Some(parse_trace_line(trimmed, line_no, seq))
    }))
}

fn parse_trace_line(
    line: &str,
    line_no: usize,
    seq: u64,
) -> Result<OperationRecord, TraceFormatError> {
    let err = |detail: String| TraceFormatError { line: line_no, detail };
    let mut parts = line.split_whitespace();
    let op_tok = parts.next().ok_or_else(|| err("missing op token".into()))?;
    let key_tok = parts.next().ok_or_else(|| err("missing key".into()))?;
    let logical_key: u64 =
        key_tok.parse().map_err(|_| err(format!("bad key `{key_tok}`")))?;
    let (op, payload_len) = match op_tok {
        "GET" => (OpKind::Read, 0),
        "DEL" => (OpKind::Delete, 0),
        "SET" => {
            let size_tok = parts.next().ok_or_else(|| err("SET missing size".into()))?;
            let size: u32 =
                size_tok.parse().map_err(|_| err(format!("bad size `{size_tok}`")))?;
            (OpKind::Upsert, size)
        }
        other => return Err(err(format!("malformed op token `{other}`"))),
    };
    if parts.next().is_some() {
        return Err(err("trailing tokens".into()));
    }
    Ok(OperationRecord { op, logical_key, payload_len, thread_id: 0, seq })
}

// ---------------------------------------------------------------------------
