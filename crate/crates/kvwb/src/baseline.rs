//! The baseline store: sharded hash maps under per-shard mutual exclusion
//! with write-through durability to an append-only log file per shard.
//!
//! Deliberately simple and obviously correct — this is the oracle for
//! differential testing and the performance floor, not a contender. Every
//! acknowledged write is appended (length-prefixed, CRC-protected) before
//! the shard lock is released, so strong durability trivially satisfies
//! per-thread prefix durability.
//!
//! Log record format: `len(4) || key(8) || op(1) || bytes || crc(4)` where
//! `len` counts `key || op || bytes` and the CRC covers the same span. Torn
//! tails are truncated at recovery.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use crate::fabric::{mix64, MAX_PAYLOAD_LEN};
use crate::spec::SpecCard;
use crate::store::{
    CheckpointId, Completion, CrashMode, IndicatorCounters, RmwModifier, Store, StoreError,
    StoreFactory,
};

const OP_PUT: u8 = 1;
const OP_DEL: u8 = 2;

// Rough per-entry bookkeeping cost charged to the budget gauge.
const ENTRY_OVERHEAD: u64 = 48;

fn crc32(bytes: &[u8]) -> u32 {
    const fn table() -> [u32; 256] {
        let mut t = [0u32; 256];
        let mut i = 0;
        while i < 256 {
            let mut c = i as u32;
            let mut k = 0;
            while k < 8 {
                c = if c & 1 != 0 { 0xedb8_8320 ^ (c >> 1) } else { c >> 1 };
                k += 1;
            }
            t[i] = c;
            i += 1;
        }
        t
    }
    static TABLE: [u32; 256] = table();
    let mut c = 0xffff_ffffu32;
    for &b in bytes {
        c = TABLE[((c ^ b as u32) & 0xff) as usize] ^ (c >> 8);
    }
    !c
}

enum RunState {
    Running,
    Crashed,
}

struct ShardInner {
    map: HashMap<u64, Vec<u8>>,
    log: File,
}

pub struct BaselineStore {
    shards: Vec<Mutex<ShardInner>>,
    shard_mask: u64,
    state: RwLock<RunState>,
    dir: PathBuf,
    bytes_appended: AtomicU64,
    budget_bytes: AtomicU64,
    ckpt_seq: AtomicU64,
}

impl BaselineStore {
    /// Shard count is the next power of two >= 4x the driver thread count.
    pub fn open(card: &SpecCard, dir: &Path, owner_threads: u16) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir).map_err(io_fault)?;
        let shard_count = (4 * owner_threads.max(1) as u64).next_power_of_two() as usize;
        let mut shards = Vec::with_capacity(shard_count);
        for i in 0..shard_count {
            let log = OpenOptions::new()
                .create(true)
                .truncate(true)
                .read(true)
                .write(true)
                .open(dir.join(format!("shard.{i}.log")))
                .map_err(io_fault)?;
            shards.push(Mutex::new(ShardInner { map: HashMap::new(), log }));
        }
        let _ = card;
        Ok(BaselineStore {
            shards,
            shard_mask: shard_count as u64 - 1,
            state: RwLock::new(RunState::Running),
            dir: dir.to_path_buf(),
            bytes_appended: AtomicU64::new(0),
            budget_bytes: AtomicU64::new(0),
            ckpt_seq: AtomicU64::new(0),
        })
    }

    fn shard(&self, key: u64) -> &Mutex<ShardInner> {
        &self.shards[(mix64(key) & self.shard_mask) as usize]
    }

    fn running_guard(&self) -> Result<std::sync::RwLockReadGuard<'_, RunState>, StoreError> {
        let guard = self.state.read().unwrap();
        match *guard {
            RunState::Running => Ok(guard),
            RunState::Crashed => Err(StoreError::Fault("store is crashed".into())),
        }
    }

    /// Append-then-apply under the shard lock; acknowledgment implies the
    /// record is on the file.
    fn write_through(
        &self,
        shard: &mut ShardInner,
        key: u64,
        op: u8,
        value: &[u8],
    ) -> Result<(), StoreError> {
        let body_len = 9 + value.len();
        let mut rec = Vec::with_capacity(4 + body_len + 4);
        rec.extend_from_slice(&(body_len as u32).to_le_bytes());
        rec.extend_from_slice(&key.to_le_bytes());
        rec.push(op);
        rec.extend_from_slice(value);
        let crc = crc32(&rec[4..]);
        rec.extend_from_slice(&crc.to_le_bytes());
        shard.log.write_all(&rec).map_err(io_fault)?;
        self.bytes_appended.fetch_add(rec.len() as u64, Ordering::Relaxed);

        match op {
            OP_PUT => {
                let new_cost = value.len() as u64 + ENTRY_OVERHEAD;
                match shard.map.insert(key, value.to_vec()) {
                    Some(old) => {
                        let old_cost = old.len() as u64 + ENTRY_OVERHEAD;
                        if new_cost >= old_cost {
                            self.budget_bytes.fetch_add(new_cost - old_cost, Ordering::Relaxed);
                        } else {
                            self.budget_bytes.fetch_sub(old_cost - new_cost, Ordering::Relaxed);
                        }
                    }
                    None => {
                        self.budget_bytes.fetch_add(new_cost, Ordering::Relaxed);
                    }
                }
            }
            _ => {
                if let Some(old) = shard.map.remove(&key) {
                    self.budget_bytes
                        .fetch_sub(old.len() as u64 + ENTRY_OVERHEAD, Ordering::Relaxed);
                }
            }
        }
        Ok(())
    }

    fn check_len(value: &[u8]) -> Result<(), StoreError> {
        if value.len() > MAX_PAYLOAD_LEN {
            return Err(StoreError::Capacity(format!("value of {} bytes", value.len())));
        }
        Ok(())
    }
}

impl Store for BaselineStore {
    fn read(&self, _tid: u16, key: u64, out: &mut Vec<u8>) -> Result<Completion, StoreError> {
        let _run = self.running_guard()?;
        let shard = self.shard(key).lock().unwrap();
        out.clear();
        match shard.map.get(&key) {
            Some(v) => {
                out.extend_from_slice(v);
                Ok(Completion::found(true))
            }
            None => Ok(Completion::not_found()),
        }
    }

    fn upsert(&self, _tid: u16, key: u64, value: &[u8]) -> Result<Completion, StoreError> {
        let _run = self.running_guard()?;
        Self::check_len(value)?;
        let mut shard = self.shard(key).lock().unwrap();
        self.write_through(&mut shard, key, OP_PUT, value)?;
        Ok(Completion::ok())
    }

    fn rmw(
        &self,
        _tid: u16,
        key: u64,
        modifier: &mut RmwModifier<'_>,
    ) -> Result<Completion, StoreError> {
        let _run = self.running_guard()?;
        let mut shard = self.shard(key).lock().unwrap();
        let mut next = Vec::new();
        modifier(shard.map.get(&key).map(|v| v.as_slice()), &mut next);
        Self::check_len(&next)?;
        self.write_through(&mut shard, key, OP_PUT, &next)?;
        Ok(Completion::ok())
    }

    fn delete(&self, _tid: u16, key: u64) -> Result<Completion, StoreError> {
        let _run = self.running_guard()?;
        let mut shard = self.shard(key).lock().unwrap();
        self.write_through(&mut shard, key, OP_DEL, &[])?;
        Ok(Completion::ok())
    }

    fn checkpoint(&self) -> Result<CheckpointId, StoreError> {
        // Write-through means every acknowledged write is already durable;
        // a checkpoint is just a sync point.
        let _run = self.running_guard()?;
        for shard in &self.shards {
            shard.lock().unwrap().log.sync_data().map_err(io_fault)?;
        }
        Ok(self.ckpt_seq.fetch_add(1, Ordering::SeqCst))
    }

    fn simulate_crash(&self, _mode: CrashMode) -> Result<(), StoreError> {
        let mut state = self.state.write().unwrap();
        if matches!(*state, RunState::Crashed) {
            return Err(StoreError::Fault("already crashed".into()));
        }
        for shard in &self.shards {
            shard.lock().unwrap().map = HashMap::new();
        }
        self.budget_bytes.store(0, Ordering::Relaxed);
        *state = RunState::Crashed;
        Ok(())
    }

    fn recover(&self) -> Result<(), StoreError> {
        let mut state = self.state.write().unwrap();
        if matches!(*state, RunState::Running) {
            return Err(StoreError::Recovery("recover without prior crash".into()));
        }
        for (i, shard) in self.shards.iter().enumerate() {
            let mut inner = shard.lock().unwrap();
            let path = self.dir.join(format!("shard.{i}.log"));
            let mut raw = Vec::new();
            File::open(&path).and_then(|mut f| f.read_to_end(&mut raw)).map_err(io_fault)?;

            let mut map = HashMap::new();
            let mut pos = 0usize;
            let mut valid_end = 0usize;
            loop {
                if pos + 4 > raw.len() {
                    break;
                }
                let body_len =
                    u32::from_le_bytes(raw[pos..pos + 4].try_into().unwrap()) as usize;
                let total = 4 + body_len + 4;
                if body_len < 9 || pos + total > raw.len() {
                    break;
                }
                let body = &raw[pos + 4..pos + 4 + body_len];
                let crc = u32::from_le_bytes(raw[pos + 4 + body_len..pos + total].try_into().unwrap());
                if crc32(body) != crc {
                    break;
                }
                let key = u64::from_le_bytes(body[0..8].try_into().unwrap());
                match body[8] {
                    OP_PUT => {
                        map.insert(key, body[9..].to_vec());
                    }
                    OP_DEL => {
                        map.remove(&key);
                    }
                    _ => break,
                }
                pos += total;
                valid_end = pos;
            }
            // Drop any torn tail so future appends start at a clean boundary.
            inner.log.set_len(valid_end as u64).map_err(io_fault)?;
            inner.log.seek(SeekFrom::End(0)).map_err(io_fault)?;
            let cost: u64 =
                map.values().map(|v| v.len() as u64 + ENTRY_OVERHEAD).sum();
            self.budget_bytes.fetch_add(cost, Ordering::Relaxed);
            inner.map = map;
        }
        *state = RunState::Running;
        Ok(())
    }

    fn snapshot_indicators(&self) -> IndicatorCounters {
        IndicatorCounters {
            ring_hits: 0,
            inline_hits: 0,
            file_reads: 0,
            seqlock_retries: 0,
            probe_steps: 0,
            bytes_appended: self.bytes_appended.load(Ordering::Relaxed),
            budget_bytes_in_use: self.budget_bytes.load(Ordering::Relaxed),
        }
    }
}

fn io_fault(e: std::io::Error) -> StoreError {
    StoreError::Fault(format!("io: {e}"))
}

pub struct BaselineFactory;

impl StoreFactory for BaselineFactory {
    fn open(
        &self,
        card: &SpecCard,
        dir: &Path,
        owner_threads: u16,
    ) -> Result<Box<dyn Store>, StoreError> {
        Ok(Box::new(BaselineStore::open(card, dir, owner_threads)?))
    }

    fn name(&self) -> &'static str {
        "baseline"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::parse_spec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn card() -> SpecCard {
        parse_spec(crate::spec::tests::EXAMPLE_DOC).unwrap()
    }

    fn open(dir: &Path) -> BaselineStore {
        BaselineStore::open(&card(), dir, 4).unwrap()
    }

    #[test]
    fn read_write_delete_semantics() {
        let dir = tempfile::tempdir().unwrap();
        let store = open(dir.path());
        let mut out = Vec::new();
        assert!(!store.read(0, 1, &mut out).unwrap().is_found());
        store.upsert(0, 1, b"hello").unwrap();
        assert!(store.read(0, 1, &mut out).unwrap().is_found());
        assert_eq!(out, b"hello");
        store.delete(0, 1).unwrap();
        assert!(!store.read(0, 1, &mut out).unwrap().is_found());
    }

    #[test]
    fn random_script_matches_map_replay_oracle() {
        let dir = tempfile::tempdir().unwrap();
        let store = open(dir.path());
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut oracle: HashMap<u64, Vec<u8>> = HashMap::new();
        for i in 0..100_000u64 {
            let key = rng.gen_range(0..500u64);
            match rng.gen_range(0..10) {
                0..=5 => {
                    let len = rng.gen_range(0..128);
                    let val: Vec<u8> = (0..len).map(|j| (i as u8).wrapping_add(j as u8)).collect();
                    store.upsert(0, key, &val).unwrap();
                    oracle.insert(key, val);
                }
                6 => {
                    store.delete(0, key).unwrap();
                    oracle.remove(&key);
                }
                7 => {
                    let mut modifier = |cur: Option<&[u8]>, out: &mut Vec<u8>| {
                        out.clear();
                        out.extend_from_slice(cur.unwrap_or(b""));
                        out.push(i as u8);
                    };
                    store.rmw(0, key, &mut modifier).unwrap();
                    let mut next = oracle.get(&key).cloned().unwrap_or_default();
                    next.push(i as u8);
                    oracle.insert(key, next);
                }
                _ => {
                    let mut out = Vec::new();
                    let c = store.read(0, key, &mut out).unwrap();
                    match oracle.get(&key) {
                        Some(v) => {
                            assert!(c.is_found());
                            assert_eq!(&out, v);
                        }
                        None => assert!(!c.is_found()),
                    }
                }
            }
        }
        for (key, val) in &oracle {
            let mut out = Vec::new();
            assert!(store.read(0, *key, &mut out).unwrap().is_found());
            assert_eq!(&out, val);
        }
    }

    #[test]
    fn crash_recover_reproduces_acknowledged_writes() {
        let dir = tempfile::tempdir().unwrap();
        let store = open(dir.path());
        for k in 0..1000u64 {
            store.upsert(0, k, &k.to_le_bytes()).unwrap();
        }
        store.delete(0, 7).unwrap();
        store.simulate_crash(CrashMode::NoCheckpoint).unwrap();
        assert!(store.read(0, 3, &mut Vec::new()).is_err());
        store.recover().unwrap();
        let mut out = Vec::new();
        for k in 0..1000u64 {
            let c = store.read(0, k, &mut out).unwrap();
            if k == 7 {
                assert!(!c.is_found());
            } else {
                assert!(c.is_found(), "key {k} lost");
                assert_eq!(out, k.to_le_bytes());
            }
        }
    }

    #[test]
    fn torn_log_tail_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let store = open(dir.path());
        store.upsert(0, 99, b"stable").unwrap();
        store.simulate_crash(CrashMode::NoCheckpoint).unwrap();
        // Append garbage to every shard log to simulate a torn tail.
        for entry in std::fs::read_dir(dir.path()).unwrap() {
            let p = entry.unwrap().path();
            let mut f = OpenOptions::new().append(true).open(&p).unwrap();
            f.write_all(&[0xde, 0xad, 0xbe]).unwrap();
        }
        store.recover().unwrap();
        let mut out = Vec::new();
        assert!(store.read(0, 99, &mut out).unwrap().is_found());
        assert_eq!(out, b"stable");
        store.upsert(0, 100, b"after").unwrap();
        store.simulate_crash(CrashMode::NoCheckpoint).unwrap();
        store.recover().unwrap();
        assert!(store.read(0, 100, &mut out).unwrap().is_found());
        assert_eq!(out, b"after");
    }

    #[test]
    fn recover_without_crash_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let store = open(dir.path());
        assert!(matches!(store.recover(), Err(StoreError::Recovery(_))));
        store.simulate_crash(CrashMode::NoCheckpoint).unwrap();
        store.recover().unwrap();
        assert!(matches!(store.recover(), Err(StoreError::Recovery(_))));
    }

    #[test]
    fn disjoint_key_threads_match_single_thread_runs() {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(open(dir.path()));
        let handles: Vec<_> = (0..4u16)
            .map(|tid| {
                let store = Arc::clone(&store);
                std::thread::spawn(move || {
                    let base = tid as u64 * 10_000;
                    for i in 0..2000u64 {
                        let key = base + (i % 100);
                        store.upsert(tid, key, &i.to_le_bytes()).unwrap();
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        // Each key's final value is the last write of its only writer.
        let mut out = Vec::new();
        for tid in 0..4u64 {
            for k in 0..100u64 {
                let key = tid * 10_000 + k;
                assert!(store.read(0, key, &mut out).unwrap().is_found());
                let expected = 1900 + k;
                assert_eq!(out, expected.to_le_bytes());
            }
        }
    }

    #[test]
    fn indicators_start_zero_and_stay_monotone() {
        let dir = tempfile::tempdir().unwrap();
        let store = open(dir.path());
        let fresh = store.snapshot_indicators();
        assert_eq!(fresh, IndicatorCounters::default());
        store.upsert(0, 1, b"abc").unwrap();
        let after = store.snapshot_indicators();
        assert!(after.bytes_appended > 0);
        assert!(after.budget_bytes_in_use > 0);
    }
}
