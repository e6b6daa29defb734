//! Identifiers and value types shared by every layer of the engine.

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

/// Identity of one log. Assigned monotonically by the metadata layer and
/// never reused; `0` is reserved to mean "no parent".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LogId(pub u64);

impl LogId {
    pub const NONE: LogId = LogId(0);

    pub fn get(self) -> u64 {
        self.0
    }
}

impl fmt::Display for LogId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "log#{}", self.0)
    }
}

/// Zero-based slot in one log's total order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Position(pub u64);

impl Position {
    pub const ZERO: Position = Position(0);

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn next(self) -> Position {
        Position(self.0 + 1)
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for Position {
    fn from(v: u64) -> Self {
        Position(v)
    }
}

/// 128-bit object identifier, printed as 32 lowercase hex characters.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectId(pub [u8; 16]);

impl ObjectId {
    pub fn random() -> ObjectId {
        let mut bytes = [0u8; 16];
        rand::thread_rng().fill_bytes(&mut bytes);
        ObjectId(bytes)
    }

    pub fn from_rng<R: RngCore>(rng: &mut R) -> ObjectId {
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        ObjectId(bytes)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<ObjectId> {
        let raw = hex::decode(s).ok()?;
        let bytes: [u8; 16] = raw.try_into().ok()?;
        Some(ObjectId(bytes))
    }
}

impl fmt::Debug for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ObjectId({})", self.to_hex())
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Location of one record's payload inside a shared-storage object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectRef {
    pub object_id: ObjectId,
    pub byte_offset: u64,
    pub byte_length: u32,
}

impl ObjectRef {
    pub fn new(object_id: ObjectId, byte_offset: u64, byte_length: u32) -> Self {
        ObjectRef { object_id, byte_offset, byte_length }
    }

    pub fn end(&self) -> u64 {
        self.byte_offset + u64::from(self.byte_length)
    }
}

/// True iff `r` names a non-empty byte range inside an object of `object_size` bytes.
pub fn validate_object_ref(r: &ObjectRef, object_size: u64) -> bool {
    r.byte_length > 0 && r.byte_offset.checked_add(u64::from(r.byte_length)).is_some_and(|end| end <= object_size)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LogKind {
    Root,
    CFork,
    SFork,
}

impl LogKind {
    pub fn as_u8(self) -> u8 {
        match self {
            LogKind::Root => 0,
            LogKind::CFork => 1,
            LogKind::SFork => 2,
        }
    }

    pub fn from_u8(v: u8) -> Option<LogKind> {
        match v {
            0 => Some(LogKind::Root),
            1 => Some(LogKind::CFork),
            2 => Some(LogKind::SFork),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LogStatus {
    Live,
    Squashed,
    PromotedAway,
}

impl LogStatus {
    pub fn as_u8(self) -> u8 {
        match self {
            LogStatus::Live => 0,
            LogStatus::Squashed => 1,
            LogStatus::PromotedAway => 2,
        }
    }

    pub fn from_u8(v: u8) -> Option<LogStatus> {
        match v {
            0 => Some(LogStatus::Live),
            1 => Some(LogStatus::Squashed),
            2 => Some(LogStatus::PromotedAway),
            _ => None,
        }
    }
}

/// Everything the metadata layer knows about one log apart from its index and tail.
///
/// `fork_point` is `None` for roots, so a fork taken at position 0 is still
/// distinguishable from "no fork point".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogDescriptor {
    pub id: LogId,
    pub kind: LogKind,
    pub parent: Option<LogId>,
    pub fork_point: Option<Position>,
    pub promotable: bool,
    pub status: LogStatus,
}

impl LogDescriptor {
    pub fn root(id: LogId) -> Self {
        LogDescriptor { id, kind: LogKind::Root, parent: None, fork_point: None, promotable: false, status: LogStatus::Live }
    }

    pub fn is_live(&self) -> bool {
        self.status == LogStatus::Live
    }

    pub fn is_promotable_cfork(&self) -> bool {
        self.kind == LogKind::CFork && self.promotable
    }
}

/// One cell of a log's index: where the record lives plus the cumulative
/// number of records appended locally to the owning log up to and including it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub object_ref: ObjectRef,
    pub local_count: u64,
}

/// The position handed back for an append or tail query. A position is
/// withheld while a pending promote could still renumber it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Assigned {
    At(Position),
    Withheld,
}

impl Assigned {
    pub fn position(self) -> Option<Position> {
        match self {
            Assigned::At(p) => Some(p),
            Assigned::Withheld => None,
        }
    }

    pub fn is_withheld(self) -> bool {
        matches!(self, Assigned::Withheld)
    }
}

impl fmt::Display for Assigned {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assigned::At(p) => write!(f, "{p}"),
            Assigned::Withheld => f.write_str("withheld"),
        }
    }
}
