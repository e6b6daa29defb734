use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{LogId, Position};

/// Error taxonomy shared by the engine, the wire protocol and the oracles.
/// The numeric values are the wire status bytes; `0` means ok.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum ErrorCode {
    UnknownLog = 1,
    LogSquashed = 2,
    PositionOutOfRange = 3,
    BlockedByPromotableFork = 4,
    NotPromotable = 5,
    PromoteRaceLost = 6,
    SquashRootForbidden = 7,
    StorageFailure = 8,
    ProtocolError = 9,
}

impl ErrorCode {
    pub fn from_u8(v: u8) -> Option<ErrorCode> {
        use ErrorCode::*;
        Some(match v {
            1 => UnknownLog,
            2 => LogSquashed,
            3 => PositionOutOfRange,
            4 => BlockedByPromotableFork,
            5 => NotPromotable,
            6 => PromoteRaceLost,
            7 => SquashRootForbidden,
            8 => StorageFailure,
            9 => ProtocolError,
            _ => return None,
        })
    }

    pub fn is_retryable(self) -> bool {
        matches!(self, ErrorCode::BlockedByPromotableFork | ErrorCode::StorageFailure)
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// An engine error. `boundary` is set for `BlockedByPromotableFork` and is the
/// first position (in the caller's log coordinates) that is currently blocked.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{code}: {detail}")]
pub struct EngineError {
    pub code: ErrorCode,
    pub detail: String,
    pub boundary: Option<Position>,
}

pub type Result<T, E = EngineError> = std::result::Result<T, E>;

impl EngineError {
    pub fn new(code: ErrorCode, detail: impl Into<String>) -> Self {
        EngineError { code, detail: detail.into(), boundary: None }
    }

    pub fn unknown_log(log: LogId) -> Self {
        Self::new(ErrorCode::UnknownLog, format!("{log} does not exist"))
    }

    pub fn squashed(log: LogId) -> Self {
        Self::new(ErrorCode::LogSquashed, format!("{log} is no longer live"))
    }

    pub fn out_of_range(log: LogId, from: Position, to: Position, tail: Position) -> Self {
        Self::new(ErrorCode::PositionOutOfRange, format!("range [{from}, {to}) invalid for {log} with tail {tail}"))
    }

    pub fn blocked(log: LogId, boundary: Position) -> Self {
        EngineError {
            code: ErrorCode::BlockedByPromotableFork,
            detail: format!("{log} is blocked at position {boundary} by a promotable fork"),
            boundary: Some(boundary),
        }
    }

    pub fn not_promotable(log: LogId) -> Self {
        Self::new(ErrorCode::NotPromotable, format!("{log} is not a promotable cFork"))
    }

    pub fn race_lost(log: LogId) -> Self {
        Self::new(ErrorCode::PromoteRaceLost, format!("a sibling of {log} was promoted first"))
    }

    pub fn squash_root(log: LogId) -> Self {
        Self::new(ErrorCode::SquashRootForbidden, format!("{log} is a root log"))
    }

    pub fn storage(detail: impl Into<String>) -> Self {
        Self::new(ErrorCode::StorageFailure, detail)
    }

    pub fn protocol(detail: impl Into<String>) -> Self {
        Self::new(ErrorCode::ProtocolError, detail)
    }
}

impl From<std::io::Error> for EngineError {
    fn from(e: std::io::Error) -> Self {
        EngineError::storage(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_round_trip_through_wire_byte() {
        for v in 1..=9u8 {
            let code = ErrorCode::from_u8(v).unwrap();
            assert_eq!(code as u8, v);
        }
        assert!(ErrorCode::from_u8(0).is_none());
        assert!(ErrorCode::from_u8(10).is_none());
    }

    #[test]
    fn blocked_carries_boundary() {
        let e = EngineError::blocked(LogId(3), Position(12));
        assert_eq!(e.boundary, Some(Position(12)));
        assert!(e.code.is_retryable());
        assert!(e.to_string().starts_with("BlockedByPromotableFork"));
    }
}
