//! The 64-bit slot meta word of the reference engine.
//!
//! One atomic word triple-encodes a slot's state — a log pointer, an inline
//! value of up to seven bytes, or a tombstone — and doubles as the seqlock
//! version for readers: every legal mutation of a slot changes at least one
//! bit of the word, so a reader comparing the word before and after a copy
//! detects any concurrent update.
//!
//! Layout (bit 63 = msb):
//!
//! ```text
//! tag [63:62]   00 Empty (whole word zero)  01 Inline  10 LogPtr  11 Tombstone
//! Inline        len [61:59], spare [58:56], value bytes [55:0]
//! LogPtr        thread_id [61:56], offset [55:16], size [15:0]
//! ```
//!
//! The 40-bit offset is an absolute log byte offset within the owning
//! thread's log, never reused, so it addresses the ring and the backing file
//! interchangeably.

/// Largest value that stores inline.
pub const INLINE_MAX: usize = 7;
/// Exclusive bound of the 40-bit offset space (1 TiB per thread).
pub const OFFSET_SPACE: u64 = 1 << 40;
/// Largest owner thread id (6-bit field).
pub const MAX_THREAD_ID: u16 = 63;

const TAG_SHIFT: u32 = 62;
const TAG_INLINE: u64 = 0b01;
const TAG_LOGPTR: u64 = 0b10;
const TAG_TOMBSTONE: u64 = 0b11;

/// Decoded view of a slot word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaWord {
    Empty,
    Inline { len: u8, bytes: [u8; INLINE_MAX] },
    LogPtr { thread_id: u16, offset: u64, size: u16 },
    Tombstone,
}

impl MetaWord {
    pub fn inline(value: &[u8]) -> MetaWord {
        debug_assert!(value.len() <= INLINE_MAX);
        let mut bytes = [0u8; INLINE_MAX];
        bytes[..value.len()].copy_from_slice(value);
        MetaWord::Inline { len: value.len() as u8, bytes }
    }

    pub fn encode(self) -> u64 {
        match self {
            MetaWord::Empty => 0,
            MetaWord::Inline { len, bytes } => {
                debug_assert!(len as usize <= INLINE_MAX);
                let mut value = 0u64;
                for (i, b) in bytes.iter().enumerate() {
                    value |= (*b as u64) << (8 * i);
                }
                (TAG_INLINE << TAG_SHIFT) | ((len as u64) << 59) | value
            }
            MetaWord::LogPtr { thread_id, offset, size } => {
                debug_assert!(thread_id <= MAX_THREAD_ID);
                debug_assert!(offset < OFFSET_SPACE);
                (TAG_LOGPTR << TAG_SHIFT)
                    | ((thread_id as u64) << 56)
                    | (offset << 16)
                    | size as u64
            }
            MetaWord::Tombstone => TAG_TOMBSTONE << TAG_SHIFT,
        }
    }

    pub fn decode(word: u64) -> MetaWord {
        match word >> TAG_SHIFT {
            0 => MetaWord::Empty,
            TAG_INLINE => {
                let len = ((word >> 59) & 0x7) as u8;
                let mut bytes = [0u8; INLINE_MAX];
                for (i, b) in bytes.iter_mut().enumerate() {
                    *b = (word >> (8 * i)) as u8;
                }
                MetaWord::Inline { len, bytes }
            }
            TAG_LOGPTR => MetaWord::LogPtr {
                thread_id: ((word >> 56) & 0x3f) as u16,
                offset: (word >> 16) & (OFFSET_SPACE - 1),
                size: word as u16,
            },
            _ => MetaWord::Tombstone,
        }
    }

    pub fn inline_value(self) -> Option<([u8; INLINE_MAX], u8)> {
        match self {
            MetaWord::Inline { len, bytes } => Some((bytes, len)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_all_zero() {
        assert_eq!(MetaWord::Empty.encode(), 0);
        assert_eq!(MetaWord::decode(0), MetaWord::Empty);
    }

    #[test]
    fn inline_round_trip() {
        for len in 0..=INLINE_MAX {
            let value: Vec<u8> = (0..len as u8).map(|i| i.wrapping_mul(37) ^ 0x5a).collect();
            let w = MetaWord::inline(&value).encode();
            match MetaWord::decode(w) {
                MetaWord::Inline { len: l, bytes } => {
                    assert_eq!(l as usize, len);
                    assert_eq!(&bytes[..len], &value[..]);
                }
                other => panic!("decoded {other:?}"),
            }
        }
    }

    #[test]
    fn logptr_round_trip_at_field_extremes() {
        for (tid, off, size) in [
            (0u16, 0u64, 0u16),
            (63, OFFSET_SPACE - 1, u16::MAX),
            (17, 0x12_3456_7890, 1024),
        ] {
            let w = MetaWord::LogPtr { thread_id: tid, offset: off, size }.encode();
            assert_eq!(
                MetaWord::decode(w),
                MetaWord::LogPtr { thread_id: tid, offset: off, size }
            );
        }
    }

    #[test]
    fn tombstone_is_distinct_from_everything() {
        let t = MetaWord::Tombstone.encode();
        assert_ne!(t, 0);
        assert_ne!(t, MetaWord::inline(&[]).encode());
        assert_eq!(MetaWord::decode(t), MetaWord::Tombstone);
    }

    /// Every legal transition changes the word. Shrink-only in-place updates
    /// are what make this hold for LogPtr -> LogPtr at a fixed offset.
    #[test]
    fn legal_transitions_always_change_the_word() {
        let inline_a = MetaWord::inline(&[1, 2, 3]);
        let inline_b = MetaWord::inline(&[1, 2, 4]);
        let inline_c = MetaWord::inline(&[1, 2]);
        let ptr_a = MetaWord::LogPtr { thread_id: 1, offset: 4096, size: 100 };
        let ptr_shrunk = MetaWord::LogPtr { thread_id: 1, offset: 4096, size: 50 };
        let ptr_fresh = MetaWord::LogPtr { thread_id: 1, offset: 8192, size: 100 };
        let cases: &[(MetaWord, MetaWord, &str)] = &[
            (MetaWord::Empty, inline_a, "empty->inline"),
            (MetaWord::Empty, ptr_a, "empty->logptr"),
            (inline_a, inline_b, "inline->inline different bytes"),
            (inline_a, inline_c, "inline->inline different len"),
            (inline_a, MetaWord::Tombstone, "inline->tombstone"),
            (ptr_a, MetaWord::Tombstone, "logptr->tombstone"),
            (ptr_a, ptr_shrunk, "logptr->logptr strict shrink"),
            (ptr_a, ptr_fresh, "logptr->logptr fresh append"),
            (inline_a, ptr_a, "inline->logptr"),
            (ptr_a, inline_a, "logptr->inline"),
            (MetaWord::Tombstone, inline_a, "tombstone->inline"),
            (MetaWord::Tombstone, ptr_a, "tombstone->logptr"),
        ];
        for (old, new, what) in cases {
            assert_ne!(old.encode(), new.encode(), "transition {what} left the word unchanged");
        }
    }
}
