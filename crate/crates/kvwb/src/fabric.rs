//! Value fabric: per-run secrets, key scrambling, and self-validating value
//! envelopes.
//!
//! Two hardening measures live here. First, logical keys pass through a
//! keyed 64-bit permutation before a store ever sees them, so key-density
//! regularities in a workload cannot be exploited as a free hash function.
//! Second, every value is an envelope whose fill is keyed-PRF output and
//! whose trailing checksum is a keyed digest: a store that fabricates,
//! regenerates, or truncates bytes cannot produce values that validate,
//! because it never holds the fill key.
//!
//! Envelope layout for `payload_len >= 28`:
//!
//! ```text
//! key(8) || thread_id(2) || seq(8) || payload_len(2) || fill || checksum(8)
//! ```
//!
//! where `key` is the scrambled key and the checksum covers everything
//! before it. Payloads shorter than 28 bytes cannot carry the full header:
//! they consist of a truncated header prefix with a keyed checksum folded
//! into the final `min(8, payload_len)` bytes, making the whole envelope a
//! deterministic function of (key, length) that is still unforgeable
//! without the fill key. Zero-length payloads are legal and validated by
//! index state alone.

use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use siphasher::sip::SipHasher24;
use std::hash::Hasher;
use thiserror::Error;

/// Fixed header byte count of a full envelope.
pub const ENVELOPE_HEADER_LEN: usize = 20;
/// Trailing keyed checksum byte count.
pub const ENVELOPE_CSUM_LEN: usize = 8;
/// Smallest payload that carries the full header and checksum.
pub const ENVELOPE_FULL_MIN: usize = ENVELOPE_HEADER_LEN + ENVELOPE_CSUM_LEN;
/// Largest payload the fabric will produce (16-bit size fields downstream).
pub const MAX_PAYLOAD_LEN: usize = 65_535;

#[derive(Debug, Error)]
#[error("payload length {0} exceeds {MAX_PAYLOAD_LEN}")]
pub struct LengthError(pub usize);

/// Outcome of validating bytes a store returned for `probed_key`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validity {
    Ok,
    KeyMismatch,
    ChecksumMismatch,
    LengthMismatch { expected: u16 },
}

impl Validity {
    pub fn is_ok(self) -> bool {
        matches!(self, Validity::Ok)
    }
}

/// splitmix64 finalizer; full-avalanche 64-bit mixer.
pub fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 31;
    x
}

/// Per-run secrets. Freshly drawn from the OS entropy source per run unless
/// an explicit repro seed is requested; never handed to a store under test.
pub struct RunSecret {
    scramble_key: [u8; 16],
    fill_key: [u8; 16],
    run_tag: [u8; 16],
    feistel_keys: [u64; 4],
    sip_k0: u64,
    sip_k1: u64,
}

impl RunSecret {
    pub fn generate() -> Self {
        let mut buf = [0u8; 48];
        OsRng.fill_bytes(&mut buf);
        Self::from_material(buf)
    }

    /// Deterministic secret for `--repro` runs. A fixed seed reopens the
    /// derivable-ground-truth class of exploits, so callers must watermark
    /// any report produced under it.
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut buf = [0u8; 48];
        rng.fill_bytes(&mut buf);
        Self::from_material(buf)
    }

    fn from_material(buf: [u8; 48]) -> Self {
        let mut scramble_key = [0u8; 16];
        let mut fill_key = [0u8; 16];
        let mut run_tag = [0u8; 16];
        scramble_key.copy_from_slice(&buf[0..16]);
        fill_key.copy_from_slice(&buf[16..32]);
        run_tag.copy_from_slice(&buf[32..48]);

        let fk = Sha256::new_with_prefix(scramble_key).chain_update(b"feistel").finalize();
        let feistel_keys = [
            u64::from_le_bytes(fk[0..8].try_into().unwrap()),
            u64::from_le_bytes(fk[8..16].try_into().unwrap()),
            u64::from_le_bytes(fk[16..24].try_into().unwrap()),
            u64::from_le_bytes(fk[24..32].try_into().unwrap()),
        ];
        let sk = Sha256::new_with_prefix(fill_key).chain_update(b"digest").finalize();
        let sip_k0 = u64::from_le_bytes(sk[0..8].try_into().unwrap());
        let sip_k1 = u64::from_le_bytes(sk[8..16].try_into().unwrap());

        RunSecret { scramble_key, fill_key, run_tag, feistel_keys, sip_k0, sip_k1 }
    }

    /// Keyed bijection on the 64-bit key space (4-round Feistel network over
    /// 32-bit halves). Same input maps to the same output for the run's
    /// lifetime; [`RunSecret::unscramble`] inverts it exactly.
    pub fn scramble(&self, key: u64) -> u64 {
        let mut l = (key >> 32) as u32;
        let mut r = key as u32;
        for k in self.feistel_keys {
            let next = l ^ feistel_f(r, k);
            l = r;
            r = next;
        }
        ((l as u64) << 32) | r as u64
    }

    pub fn unscramble(&self, key: u64) -> u64 {
        let mut l = (key >> 32) as u32;
        let mut r = key as u32;
        for k in self.feistel_keys.iter().rev() {
            let prev = r ^ feistel_f(l, *k);
            r = l;
            l = prev;
        }
        ((l as u64) << 32) | r as u64
    }

    /// Seed for the per-thread workload stream generators.
    pub fn stream_seed(&self, thread_id: u16) -> [u8; 32] {
        let d = Sha256::new_with_prefix(self.run_tag)
            .chain_update(b"stream")
            .chain_update(thread_id.to_le_bytes())
            .finalize();
        d.into()
    }

    pub fn make_envelope(
        &self,
        logical_key: u64,
        thread_id: u16,
        seq: u64,
        payload_len: usize,
    ) -> Result<Vec<u8>, LengthError> {
        let mut out = Vec::new();
        self.make_envelope_into(logical_key, thread_id, seq, payload_len, &mut out)?;
        Ok(out)
    }

    /// Build an envelope into a caller-owned buffer (cleared first). Exactly
    /// `payload_len` bytes are produced; the result is deterministic for a
    /// fixed (secret, inputs) tuple.
    pub fn make_envelope_into(
        &self,
        logical_key: u64,
        thread_id: u16,
        seq: u64,
        payload_len: usize,
        out: &mut Vec<u8>,
    ) -> Result<(), LengthError> {
        if payload_len > MAX_PAYLOAD_LEN {
            return Err(LengthError(payload_len));
        }
        out.clear();
        let key = self.scramble(logical_key);
        if payload_len < ENVELOPE_FULL_MIN {
            self.short_envelope_into(key, payload_len, out);
            return Ok(());
        }
        out.reserve(payload_len);
        out.extend_from_slice(&key.to_le_bytes());
        out.extend_from_slice(&thread_id.to_le_bytes());
        out.extend_from_slice(&seq.to_le_bytes());
        out.extend_from_slice(&(payload_len as u16).to_le_bytes());
        let fill_len = payload_len - ENVELOPE_FULL_MIN;
        if fill_len > 0 {
            let start = out.len();
            out.resize(start + fill_len, 0);
            self.fill_prf(key, thread_id, seq).fill_bytes(&mut out[start..]);
        }
        let mut h = SipHasher24::new_with_keys(self.sip_k0, self.sip_k1);
        h.write_u8(0x01);
        h.write(out);
        out.extend_from_slice(&h.finish().to_le_bytes());
        Ok(())
    }

    // Short payloads: a prefix of `key(8) || zeros(10) || len(2)` with the
    // keyed checksum occupying the final min(8, len) bytes. Deterministic in
    // (key, len), so a validator can reconstruct the exact expected bytes.
    fn short_envelope_into(&self, key: u64, payload_len: usize, out: &mut Vec<u8>) {
        debug_assert!(payload_len < ENVELOPE_FULL_MIN);
        if payload_len == 0 {
            return;
        }
        let csum_len = payload_len.min(ENVELOPE_CSUM_LEN);
        let prefix_len = payload_len - csum_len;
        let mut pseudo = [0u8; ENVELOPE_HEADER_LEN];
        pseudo[0..8].copy_from_slice(&key.to_le_bytes());
        pseudo[18..20].copy_from_slice(&(payload_len as u16).to_le_bytes());
        out.extend_from_slice(&pseudo[..prefix_len]);
        let mut h = SipHasher24::new_with_keys(self.sip_k0, self.sip_k1);
        h.write_u8(0x02);
        h.write_u64(key);
        h.write_u16(payload_len as u16);
        out.extend_from_slice(&h.finish().to_le_bytes()[..csum_len]);
    }

    /// Validate bytes a store returned when probed with (scrambled) key
    /// `probed_key`. Never panics; every failure mode is a return value.
    pub fn validate(&self, bytes: &[u8], probed_key: u64) -> Validity {
        let len = bytes.len();
        if len == 0 {
            return Validity::Ok;
        }
        if len < ENVELOPE_FULL_MIN {
            let mut expected = Vec::with_capacity(len);
            self.short_envelope_into(probed_key, len, &mut expected);
            if expected == bytes {
                return Validity::Ok;
            }
            // A wrong key shows up in the key prefix when one is present.
            let key_region = len.saturating_sub(ENVELOPE_CSUM_LEN).min(8);
            if key_region > 0 && expected[..key_region] != bytes[..key_region] {
                return Validity::KeyMismatch;
            }
            return Validity::ChecksumMismatch;
        }
        if len > MAX_PAYLOAD_LEN {
            return Validity::LengthMismatch { expected: 0 };
        }
        let stated = u16::from_le_bytes(bytes[18..20].try_into().unwrap());
        if stated as usize != len {
            return Validity::LengthMismatch { expected: stated };
        }
        let body = &bytes[..len - ENVELOPE_CSUM_LEN];
        let mut h = SipHasher24::new_with_keys(self.sip_k0, self.sip_k1);
        h.write_u8(0x01);
        h.write(body);
        let csum = u64::from_le_bytes(bytes[len - ENVELOPE_CSUM_LEN..].try_into().unwrap());
        if h.finish() != csum {
            return Validity::ChecksumMismatch;
        }
        let key = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
        if key != probed_key {
            return Validity::KeyMismatch;
        }
        Validity::Ok
    }

    fn fill_prf(&self, key: u64, thread_id: u16, seq: u64) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[0..16].copy_from_slice(&self.fill_key);
        seed[16..24].copy_from_slice(&key.to_le_bytes());
        seed[24..32].copy_from_slice(&seq.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(thread_id as u64);
        rng
    }
}

fn feistel_f(half: u32, round_key: u64) -> u32 {
    (mix64(half as u64 ^ round_key) >> 32) as u32
}

/// Writer identity embedded in a full envelope. Only meaningful after
/// [`RunSecret::validate`] returned [`Validity::Ok`]; short envelopes do not
/// carry one.
pub fn decode_writer(bytes: &[u8]) -> Option<(u16, u64)> {
    if bytes.len() < ENVELOPE_FULL_MIN {
        return None;
    }
    let thread_id = u16::from_le_bytes(bytes[8..10].try_into().unwrap());
    let seq = u64::from_le_bytes(bytes[10..18].try_into().unwrap());
    Some((thread_id, seq))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn secret() -> RunSecret {
        RunSecret::from_seed(0xfeed_beef)
    }

    #[test]
    fn scramble_round_trips_zero_and_samples() {
        let s = secret();
        assert_eq!(s.unscramble(s.scramble(0)), 0);
        for k in [1u64, 42, u64::MAX, 0xdead_beef, 1 << 63] {
            assert_eq!(s.unscramble(s.scramble(k)), k);
        }
    }

    #[test]
    fn scramble_is_injective_on_sample() {
        let s = secret();
        let mut seen = std::collections::HashSet::new();
        for k in 0u64..10_000 {
            assert!(seen.insert(s.scramble(k)));
        }
        assert_eq!(seen.len(), 10_000);
    }

    #[test]
    fn distinct_secrets_scramble_differently() {
        let a = RunSecret::from_seed(1);
        let b = RunSecret::from_seed(2);
        let differing = (0u64..1000).filter(|&k| a.scramble(k) != b.scramble(k)).count();
        assert!(differing >= 999, "only {differing}/1000 keys differ across secrets");
        assert_ne!(a.scramble(42), b.scramble(42));
    }

    #[test]
    fn envelope_construction_validates() {
        let s = secret();
        for (k, t, q, len) in [(7u64, 3u16, 9u64, 100usize), (0, 0, 1, 28), (999, 15, 1 << 40, 4096)] {
            let env = s.make_envelope(k, t, q, len).unwrap();
            assert_eq!(env.len(), len);
            assert_eq!(s.validate(&env, s.scramble(k)), Validity::Ok);
            assert_eq!(decode_writer(&env), Some((t, q)));
        }
    }

    #[test]
    fn every_single_bit_flip_is_rejected() {
        let s = secret();
        let env = s.make_envelope(1234, 2, 77, 100).unwrap();
        let probed = s.scramble(1234);
        let mut rejected = 0;
        for byte in 0..env.len() {
            for bit in 0..8 {
                let mut tampered = env.clone();
                tampered[byte] ^= 1 << bit;
                if s.validate(&tampered, probed) != Validity::Ok {
                    rejected += 1;
                }
            }
        }
        assert_eq!(rejected, 800, "all 800 single-bit flips must be rejected");
    }

    #[test]
    fn oversized_payload_is_a_length_error() {
        let s = secret();
        assert!(s.make_envelope(1, 0, 1, 70_000).is_err());
        assert!(s.make_envelope(1, 0, 1, MAX_PAYLOAD_LEN).is_ok());
    }

    #[test]
    fn wrong_probed_key_is_key_mismatch() {
        let s = secret();
        let env = s.make_envelope(5, 0, 1, 100).unwrap();
        assert_eq!(s.validate(&env, s.scramble(6)), Validity::KeyMismatch);
    }

    #[test]
    fn truncated_byte_count_is_length_mismatch() {
        let s = secret();
        let env = s.make_envelope(5, 0, 1, 100).unwrap();
        assert_eq!(s.validate(&env[..90], s.scramble(5)), Validity::LengthMismatch { expected: 100 });
    }

    #[test]
    fn unkeyed_synthesis_fails_checksum() {
        let s = secret();
        let probed = s.scramble(11);
        // A store that synthesizes plausible-looking bytes from the probed
        // key alone (no fill key) must be caught.
        let mut fake = Vec::new();
        fake.extend_from_slice(&probed.to_le_bytes());
        fake.extend_from_slice(&0u16.to_le_bytes());
        fake.extend_from_slice(&1u64.to_le_bytes());
        fake.extend_from_slice(&(100u16).to_le_bytes());
        let mut prng = ChaCha8Rng::seed_from_u64(probed);
        let mut rest = vec![0u8; 80];
        prng.fill_bytes(&mut rest);
        fake.extend_from_slice(&rest);
        assert_eq!(s.validate(&fake, probed), Validity::ChecksumMismatch);
    }

    #[test]
    fn stored_prefix_with_regenerated_tail_fails_checksum() {
        // A store that keeps only a prefix and recomputes the rest with its
        // own deterministic generator (it has no fill key) must be caught.
        let s = secret();
        let env = s.make_envelope(21, 1, 5, 100).unwrap();
        let probed = s.scramble(21);
        let mut hacked = env[..ENVELOPE_HEADER_LEN].to_vec();
        let mut prng = ChaCha8Rng::seed_from_u64(probed ^ 0x1111);
        let mut tail = vec![0u8; 100 - ENVELOPE_HEADER_LEN];
        prng.fill_bytes(&mut tail);
        hacked.extend_from_slice(&tail);
        assert_eq!(s.validate(&hacked, probed), Validity::ChecksumMismatch);
    }

    #[test]
    fn short_envelopes_cover_every_length_below_header() {
        let s = secret();
        for len in 0..ENVELOPE_FULL_MIN {
            let env = s.make_envelope(77, 4, 9, len).unwrap();
            assert_eq!(env.len(), len);
            assert_eq!(s.validate(&env, s.scramble(77)), Validity::Ok, "len {len}");
            if len > 0 {
                let mut tampered = env.clone();
                *tampered.last_mut().unwrap() ^= 0x80;
                assert_ne!(s.validate(&tampered, s.scramble(77)), Validity::Ok, "len {len}");
            }
            // Probing with a different key must not validate (lengths > 8
            // expose the key prefix; shorter ones differ in the checksum).
            if len > 0 {
                assert_ne!(s.validate(&env, s.scramble(78)), Validity::Ok, "len {len}");
            }
        }
    }

    #[test]
    fn fill_entropy_is_near_eight_bits_per_byte() {
        let s = secret();
        let mut histogram = [0u64; 256];
        let mut total = 0u64;
        let mut k = 0u64;
        while total < (1 << 20) {
            let env = s.make_envelope(k, (k % 16) as u16, k, 128).unwrap();
            for &b in &env[ENVELOPE_HEADER_LEN..128 - ENVELOPE_CSUM_LEN] {
                histogram[b as usize] += 1;
                total += 1;
            }
            k += 1;
        }
        let mut entropy = 0.0f64;
        for count in histogram {
            if count > 0 {
                let p = count as f64 / total as f64;
                entropy -= p * p.log2();
            }
        }
        assert!(entropy >= 7.9, "fill entropy {entropy:.4} bits/byte below 7.9");
    }

    #[test]
    fn envelopes_are_deterministic_per_secret() {
        let s = secret();
        let a = s.make_envelope(9, 1, 2, 64).unwrap();
        let b = s.make_envelope(9, 1, 2, 64).unwrap();
        assert_eq!(a, b);
        let t = RunSecret::from_seed(0xfeed_beef);
        assert_eq!(t.make_envelope(9, 1, 2, 64).unwrap(), a);
    }

    mod prop {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(256))]

            #[test]
            fn scramble_bijection(seed in any::<u64>(), key in any::<u64>()) {
                let s = RunSecret::from_seed(seed);
                prop_assert_eq!(s.unscramble(s.scramble(key)), key);
                prop_assert_eq!(s.scramble(s.unscramble(key)), key);
            }

            #[test]
            fn envelopes_validate_for_all_lengths(
                key in any::<u64>(),
                tid in 0u16..64,
                seq in any::<u64>(),
                len in 0usize..=512,
            ) {
                let s = RunSecret::from_seed(7);
                let env = s.make_envelope(key, tid, seq, len).unwrap();
                prop_assert_eq!(env.len(), len);
                prop_assert!(s.validate(&env, s.scramble(key)).is_ok());
            }
        }
    }
}
