//! XOR coding of two equal-length payloads and the per-node store of
//! overheard packets.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::NodeId;

/// Packet identity: originating station plus a per-station sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PacketId {
    pub origin: NodeId,
    pub seq: u64,
}

impl PacketId {
    pub fn new(origin: NodeId, seq: u64) -> Self {
        Self { origin, seq }
    }
}

impl fmt::Display for PacketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.origin, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payload {
    pub id: PacketId,
    pub bytes: Vec<u8>,
}

impl Payload {
    pub fn new(id: PacketId, bytes: Vec<u8>) -> Self {
        Self { id, bytes }
    }

    /// Deterministic pseudo-random content keyed by the packet id, so any
    /// party can regenerate what the application originally injected.
    pub fn synthetic(id: PacketId, len: usize) -> Self {
        let mut state = (id.origin as u64) << 56 ^ id.seq ^ 0x9E37_79B9_7F4A_7C15;
        let mut bytes = Vec::with_capacity(len + 8);
        while bytes.len() < len {
            // splitmix64
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            bytes.extend_from_slice(&z.to_le_bytes());
        }
        bytes.truncate(len);
        Self { id, bytes }
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

/// XOR of two payloads; remembers which two packets went into it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedPayload {
    pub ids: (PacketId, PacketId),
    pub bytes: Vec<u8>,
}

impl CodedPayload {
    pub fn contains(&self, id: PacketId) -> bool {
        self.ids.0 == id || self.ids.1 == id
    }

    /// The id paired with `known`, if `known` is one of the two.
    pub fn counterpart(&self, known: PacketId) -> Option<PacketId> {
        if self.ids.0 == known {
            Some(self.ids.1)
        } else if self.ids.1 == known {
            Some(self.ids.0)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodingError {
    #[error("payload lengths differ: {left} vs {right} bytes")]
    LengthMismatch { left: usize, right: usize },
    #[error("cannot combine packet {0} with itself")]
    SameId(PacketId),
    #[error("packet {known} is not one of the coded pair ({}, {})", .coded.0, .coded.1)]
    NotDecodable {
        known: PacketId,
        coded: (PacketId, PacketId),
    },
}

pub fn xor_encode(a: &Payload, b: &Payload) -> Result<CodedPayload, CodingError> {
    if a.id == b.id {
        return Err(CodingError::SameId(a.id));
    }
    if a.len() != b.len() {
        return Err(CodingError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let bytes = a.bytes.iter().zip(&b.bytes).map(|(x, y)| x ^ y).collect();
    Ok(CodedPayload {
        ids: (a.id, b.id),
        bytes,
    })
}

/// Recovers the packet paired with `known` inside `coded`.
pub fn xor_decode(coded: &CodedPayload, known: &Payload) -> Result<Payload, CodingError> {
    let other = coded
        .counterpart(known.id)
        .ok_or(CodingError::NotDecodable {
            known: known.id,
            coded: coded.ids,
        })?;
    if coded.bytes.len() != known.len() {
        return Err(CodingError::LengthMismatch {
            left: coded.bytes.len(),
            right: known.len(),
        });
    }
    let bytes = coded
        .bytes
        .iter()
        .zip(&known.bytes)
        .map(|(x, y)| x ^ y)
        .collect();
    Ok(Payload { id: other, bytes })
}

/// Copies of data packets a node has sent or overheard, kept until the
/// packet's acknowledgment is observed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OverheardStore {
    entries: HashMap<PacketId, Payload>,
    order: VecDeque<PacketId>,
    capacity: Option<usize>,
}

impl OverheardStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bounded store; the oldest entry is evicted when full.
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            capacity: Some(capacity.max(1)),
            ..Self::default()
        }
    }

    /// Inserts `p`, replacing any entry with the same id. Returns the entry
    /// evicted to make room, if any.
    pub fn store(&mut self, p: Payload) -> Option<Payload> {
        let id = p.id;
        if self.entries.insert(id, p).is_some() {
            return None;
        }
        self.order.push_back(id);
        match self.capacity {
            Some(cap) if self.entries.len() > cap => {
                let oldest = self.order.pop_front()?;
                self.entries.remove(&oldest)
            }
            _ => None,
        }
    }

    pub fn lookup(&self, id: PacketId) -> Option<&Payload> {
        self.entries.get(&id)
    }

    /// Drops the entry for `id`. `None` means there was nothing to release.
    pub fn release(&mut self, id: PacketId) -> Option<Payload> {
        let p = self.entries.remove(&id)?;
        self.order.retain(|x| *x != id);
        Some(p)
    }

    /// Oldest stored packet originating at `origin`.
    pub fn find_from(&self, origin: NodeId) -> Option<&Payload> {
        self.order
            .iter()
            .find(|id| id.origin == origin)
            .and_then(|id| self.entries.get(id))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = PacketId> + '_ {
        self.order.iter().copied()
    }
}
