//! Real-time ordering checker for concurrent append histories.
//!
//! For every log, the final position order must respect real time: if an
//! append X was acknowledged before append Y was invoked and both appear in
//! the log (directly or inherited), X must come first.

use std::collections::{BTreeMap, HashMap};

use crate::types::{Assigned, LogId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistoryEntry {
    /// Unique record id, also embedded in the payload.
    pub id: u64,
    pub session: u32,
    pub log: LogId,
    pub invoke_ns: u64,
    pub response_ns: u64,
    /// `None` if the append failed.
    pub result: Option<Assigned>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub log: LogId,
    /// Completed first but ordered after `later`.
    pub earlier: u64,
    pub later: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Verdict {
    pub violations: Vec<Violation>,
    pub records_checked: u64,
    /// Records read back that no acknowledged history entry accounts for.
    pub unknown_records: u64,
    /// Acknowledged appends missing from their own log.
    pub lost_records: u64,
}

impl Verdict {
    pub fn ok(&self) -> bool {
        self.violations.is_empty() && self.lost_records == 0
    }
}

/// An 8-byte big-endian id, padded to `len` bytes (at least 8).
pub fn record_payload(id: u64, len: usize) -> Vec<u8> {
    let mut p = id.to_be_bytes().to_vec();
    p.resize(len.max(8), 0x5a);
    p
}

pub fn record_id(payload: &[u8]) -> Option<u64> {
    Some(u64::from_be_bytes(payload.get(..8)?.try_into().ok()?))
}

/// `sequences` maps each log to the record ids it holds, in position order.
pub fn check_interleaving(history: &[HistoryEntry], sequences: &BTreeMap<LogId, Vec<u64>>) -> Verdict {
    let acked: HashMap<u64, &HistoryEntry> = history.iter().filter(|h| h.result.is_some()).map(|h| (h.id, h)).collect();
    let mut verdict = Verdict::default();
    for (log, seq) in sequences {
        // Scan backwards keeping the earliest acknowledgment seen further down.
        let mut min_after: Option<(u64, u64)> = None;
        for id in seq.iter().rev() {
            let Some(h) = acked.get(id) else {
                verdict.unknown_records += 1;
                continue;
            };
            verdict.records_checked += 1;
            if let Some((resp, other)) = min_after {
                if resp < h.invoke_ns {
                    verdict.violations.push(Violation { log: *log, earlier: other, later: *id });
                }
            }
            if min_after.is_none_or(|(r, _)| h.response_ns < r) {
                min_after = Some((h.response_ns, *id));
            }
        }
        let present: std::collections::HashSet<u64> = seq.iter().copied().collect();
        verdict.lost_records += history.iter().filter(|h| h.log == *log && h.result.is_some() && !present.contains(&h.id)).count() as u64;
    }
    verdict
}
