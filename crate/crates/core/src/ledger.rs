//! Append-only hash-chained ledger of admissions, trust updates, confirmed
//! verdicts, and isolations.
//!
//! Every block digests `(index ‖ timestamp ‖ prev_hash ‖ payload)` with
//! SHA-256: the index as 4 big-endian bytes, the timestamp as 8, then the
//! 32-byte previous digest and the raw payload. Block 0 chains from 32 zero
//! bytes. The on-disk form is JSON lines, one block per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Non-payload bytes per block in the canonical layout: 4 (index) +
/// 8 (timestamp) + 32 (prev hash) + 32 (hash).
pub const HEADER_BYTES: u64 = 76;

const ZERO_HASH: [u8; 32] = [0u8; 32];

/// One recorded event, canonically serialized into a block payload as a tag
/// byte followed by length-prefixed big-endian fields in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Admission {
        node: u32,
        accepted: bool,
    },
    TrustUpdate {
        node: u32,
        indicator: bool,
        rank: f64,
        activity: f64,
    },
    Verdict {
        observer: u32,
        neighbor: u32,
        statistic: f64,
        flagged: bool,
    },
    Isolation {
        observer: u32,
        neighbor: u32,
    },
}

impl Event {
    /// Canonical payload bytes; identical event sequences always serialize
    /// identically.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Self::Admission { node, accepted } => {
                out.push(0x01);
                push_field(&mut out, &node.to_be_bytes());
                push_field(&mut out, &[*accepted as u8]);
            }
            Self::TrustUpdate {
                node,
                indicator,
                rank,
                activity,
            } => {
                out.push(0x02);
                push_field(&mut out, &node.to_be_bytes());
                push_field(&mut out, &[*indicator as u8]);
                push_field(&mut out, &rank.to_bits().to_be_bytes());
                push_field(&mut out, &activity.to_bits().to_be_bytes());
            }
            Self::Verdict {
                observer,
                neighbor,
                statistic,
                flagged,
            } => {
                out.push(0x03);
                push_field(&mut out, &observer.to_be_bytes());
                push_field(&mut out, &neighbor.to_be_bytes());
                push_field(&mut out, &statistic.to_bits().to_be_bytes());
                push_field(&mut out, &[*flagged as u8]);
            }
            Self::Isolation { observer, neighbor } => {
                out.push(0x04);
                push_field(&mut out, &observer.to_be_bytes());
                push_field(&mut out, &neighbor.to_be_bytes());
            }
        }
        out
    }
}

fn push_field(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

/// One chained block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerBlock {
    index: u32,
    timestamp: u64,
    prev_hash: [u8; 32],
    payload: Vec<u8>,
    hash: [u8; 32],
}

impl LedgerBlock {
    /// Reassemble a block from stored fields without recomputing the digest;
    /// used by the load path and by tamper tests. [`Ledger::verify`] is the
    /// integrity gate.
    pub fn from_raw(
        index: u32,
        timestamp: u64,
        prev_hash: [u8; 32],
        payload: Vec<u8>,
        hash: [u8; 32],
    ) -> Self {
        Self {
            index,
            timestamp,
            prev_hash,
            payload,
            hash,
        }
    }

    pub fn index(&self) -> u32 {
        self.index
    }

    pub fn timestamp(&self) -> u64 {
        self.timestamp
    }

    pub fn prev_hash(&self) -> &[u8; 32] {
        &self.prev_hash
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn hash(&self) -> &[u8; 32] {
        &self.hash
    }
}

/// Digest over the canonical block layout.
pub fn block_digest(index: u32, timestamp: u64, prev_hash: &[u8; 32], payload: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(index.to_be_bytes());
    hasher.update(timestamp.to_be_bytes());
    hasher.update(prev_hash);
    hasher.update(payload);
    hasher.finalize().into()
}

/// Append-only chain of blocks. The only mutation is [`Ledger::append`];
/// existing blocks are never rewritten or removed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ledger {
    blocks: Vec<LedgerBlock>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Wrap already-serialized blocks (e.g. read from disk) without
    /// verification.
    pub fn from_blocks(blocks: Vec<LedgerBlock>) -> Self {
        Self { blocks }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[LedgerBlock] {
        &self.blocks
    }

    /// Append a payload as a new tail block and return it.
    pub fn append(&mut self, payload: Vec<u8>, timestamp: u64) -> &LedgerBlock {
        let index = self.blocks.len() as u32;
        let prev_hash = self
            .blocks
            .last()
            .map_or(ZERO_HASH, |block| block.hash);
        let hash = block_digest(index, timestamp, &prev_hash, &payload);
        self.blocks.push(LedgerBlock {
            index,
            timestamp,
            prev_hash,
            payload,
            hash,
        });
        self.blocks.last().expect("just pushed")
    }

    pub fn append_event(&mut self, event: &Event, timestamp: u64) -> &LedgerBlock {
        self.append(event.encode(), timestamp)
    }

    /// Smallest index whose block breaks the chain invariants, or `None` when
    /// the whole ledger is intact.
    pub fn first_invalid(&self) -> Option<u32> {
        let mut expected_prev = ZERO_HASH;
        for (position, block) in self.blocks.iter().enumerate() {
            let position = position as u32;
            if block.index != position
                || block.prev_hash != expected_prev
                || block_digest(block.index, block.timestamp, &block.prev_hash, &block.payload)
                    != block.hash
            {
                return Some(position);
            }
            expected_prev = block.hash;
        }
        None
    }

    pub fn verify(&self) -> bool {
        self.first_invalid().is_none()
    }

    /// Total serialized size in the canonical layout plus the ratio of
    /// header bytes to payload bytes. An empty ledger reports `(0, 0.0)`.
    pub fn overhead_bytes(&self) -> (u64, f64) {
        if self.blocks.is_empty() {
            return (0, 0.0);
        }
        let payload_bytes: u64 = self.blocks.iter().map(|b| b.payload.len() as u64).sum();
        let header_bytes = HEADER_BYTES * self.blocks.len() as u64;
        let ratio = if payload_bytes == 0 {
            0.0
        } else {
            header_bytes as f64 / payload_bytes as f64
        };
        (header_bytes + payload_bytes, ratio)
    }

    /// Write as JSON lines:
    /// `{"index":k,"ts":t,"prev":"<hex64>","payload":"<hex>","hash":"<hex64>"}`.
    pub fn write_jsonl<W: Write>(&self, out: &mut W) -> Result<()> {
        for block in &self.blocks {
            let raw = RawBlock {
                index: block.index,
                ts: block.timestamp,
                prev: hex::encode(block.prev_hash),
                payload: hex::encode(&block.payload),
                hash: hex::encode(block.hash),
            };
            serde_json::to_writer(&mut *out, &raw)?;
            writeln!(out)?;
        }
        Ok(())
    }

    /// Read the JSON-lines form. No integrity check happens here; call
    /// [`Ledger::verify`] afterwards.
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut blocks = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawBlock = serde_json::from_str(&line)?;
            blocks.push(LedgerBlock {
                index: raw.index,
                timestamp: raw.ts,
                prev_hash: decode_digest(&raw.prev)?,
                payload: hex::decode(&raw.payload).map_err(bad_hex)?,
                hash: decode_digest(&raw.hash)?,
            });
        }
        Ok(Self { blocks })
    }
}

#[derive(Serialize, Deserialize)]
struct RawBlock {
    index: u32,
    ts: u64,
    prev: String,
    payload: String,
    hash: String,
}

fn bad_hex(err: hex::FromHexError) -> Error {
    Error::InvalidConfig {
        field: "ledger".into(),
        reason: format!("invalid hex field: {err}"),
    }
}

fn decode_digest(text: &str) -> Result<[u8; 32]> {
    let bytes = hex::decode(text).map_err(bad_hex)?;
    bytes.try_into().map_err(|_| Error::InvalidConfig {
        field: "ledger".into(),
        reason: "digest fields must be 32 bytes".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_append_to_empty_ledger() {
        let mut ledger = Ledger::new();
        let block = ledger.append(b"genesis".to_vec(), 0);
        assert_eq!(block.index(), 0);
        assert_eq!(block.prev_hash(), &[0u8; 32]);
        assert_eq!(ledger.len(), 1);
    }

    #[test]
    fn test_append_chains_previous_hash() {
        let mut ledger = Ledger::new();
        ledger.append(b"a".to_vec(), 1);
        ledger.append(b"b".to_vec(), 2);
        let blocks = ledger.blocks();
        assert_eq!(blocks[1].prev_hash(), blocks[0].hash());
    }

    #[test]
    fn test_empty_ledger_verifies() {
        assert!(Ledger::new().verify());
    }

    #[test]
    fn test_payload_tamper_detected_at_index() {
        let mut ledger = Ledger::new();
        for i in 0..5u8 {
            ledger.append(vec![i; 4], i as u64);
        }
        let mut blocks = ledger.blocks().to_vec();
        let mut payload = blocks[2].payload().to_vec();
        payload[0] ^= 0x40;
        blocks[2] = LedgerBlock::from_raw(
            blocks[2].index(),
            blocks[2].timestamp(),
            *blocks[2].prev_hash(),
            payload,
            *blocks[2].hash(),
        );
        let tampered = Ledger::from_blocks(blocks);
        assert_eq!(tampered.first_invalid(), Some(2));
    }

    #[test]
    fn test_reordered_blocks_detected() {
        let mut ledger = Ledger::new();
        for i in 0..4u8 {
            ledger.append(vec![i], 0);
        }
        let mut blocks = ledger.blocks().to_vec();
        blocks.swap(1, 2);
        let reordered = Ledger::from_blocks(blocks);
        assert_eq!(reordered.first_invalid(), Some(1));
    }

    #[test]
    fn test_overhead_empty_ledger() {
        assert_eq!(Ledger::new().overhead_bytes(), (0, 0.0));
    }

    #[test]
    fn test_overhead_single_block_ratio() {
        let mut ledger = Ledger::new();
        ledger.append(vec![0xAB; 100], 7);
        let (total, ratio) = ledger.overhead_bytes();
        assert_eq!(total, 176);
        assert!((ratio - 0.76).abs() < 1e-15);
    }

    #[test]
    fn test_overhead_ignores_payload_content() {
        let mut a = Ledger::new();
        a.append(vec![1, 2, 3], 0);
        let mut b = Ledger::new();
        b.append(vec![3, 2, 1], 0);
        assert_eq!(a.overhead_bytes(), b.overhead_bytes());
    }

    #[test]
    fn test_jsonl_round_trip_and_determinism() {
        let mut ledger = Ledger::new();
        ledger.append_event(&Event::Admission { node: 3, accepted: true }, 0);
        ledger.append_event(
            &Event::Verdict {
                observer: 1,
                neighbor: 3,
                statistic: 2.5,
                flagged: true,
            },
            10,
        );
        let mut first = Vec::new();
        ledger.write_jsonl(&mut first).unwrap();
        let reloaded = Ledger::read_jsonl(first.as_slice()).unwrap();
        assert!(reloaded.verify());
        let mut second = Vec::new();
        reloaded.write_jsonl(&mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn test_event_encoding_is_stable() {
        let event = Event::Isolation {
            observer: 1,
            neighbor: 2,
        };
        let encoded = event.encode();
        assert_eq!(
            encoded,
            vec![0x04, 0, 0, 0, 4, 0, 0, 0, 1, 0, 0, 0, 4, 0, 0, 0, 2]
        );
        assert_eq!(encoded, event.encode());
    }
}
