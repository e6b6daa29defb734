//! Hierarchical log index.
//!
//! Each log indexes only the records appended to it directly. A position
//! that is not in a log's own index belongs to its parent: the lookup takes
//! the cumulative local count `l` of the nearest smaller local entry and
//! continues at `pos - l` in the parent. Forks start with an empty index, so
//! creating one copies no metadata at all.

use std::collections::BTreeMap;
use std::ops::Bound;

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::types::{IndexEntry, LogId, ObjectRef, Position};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogIndex {
    owner: LogId,
    entries: BTreeMap<Position, IndexEntry>,
}

impl LogIndex {
    pub fn new_root_index(owner: LogId) -> Self {
        LogIndex { owner, entries: BTreeMap::new() }
    }

    /// A fork's index is empty; ancestry lives in the descriptor's parent link.
    pub fn new_fork_index(owner: LogId) -> Self {
        LogIndex { owner, entries: BTreeMap::new() }
    }

    pub fn owner(&self) -> LogId {
        self.owner
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, pos: Position) -> Option<&IndexEntry> {
        self.entries.get(&pos)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Position, &IndexEntry)> + '_ {
        self.entries.iter().map(|(p, e)| (*p, e))
    }

    pub fn iter_from(&self, from: Position) -> impl Iterator<Item = (Position, &IndexEntry)> + '_ {
        self.entries.range(from..).map(|(p, e)| (*p, e))
    }

    pub fn last_key(&self) -> Option<Position> {
        self.entries.keys().next_back().copied()
    }

    /// Record a local append at `pos`, which must exceed every existing key.
    /// Returns the new entry's cumulative local count.
    pub fn insert_local(&mut self, pos: Position, object_ref: ObjectRef) -> u64 {
        let prev = self.entries.iter().next_back();
        debug_assert!(prev.is_none_or(|(k, _)| *k < pos), "index keys must strictly increase");
        let local_count = prev.map_or(0, |(_, e)| e.local_count) + 1;
        self.entries.insert(pos, IndexEntry { object_ref, local_count });
        local_count
    }

    /// Local records strictly before `pos`.
    pub fn local_count_before(&self, pos: Position) -> u64 {
        self.entries.range(..pos).next_back().map_or(0, |(_, e)| e.local_count)
    }

    /// Local records at or before `pos`.
    pub fn local_count_at_or_before(&self, pos: Position) -> u64 {
        self.entries.range((Bound::Unbounded, Bound::Included(pos))).next_back().map_or(0, |(_, e)| e.local_count)
    }

    pub fn total_local(&self) -> u64 {
        self.entries.values().next_back().map_or(0, |e| e.local_count)
    }

    /// Detach every entry at or beyond `from`, returning how many were removed.
    pub fn truncate_from(&mut self, from: Position) -> usize {
        self.entries.split_off(&from).len()
    }

    /// Smallest position `p` of this (child) log with
    /// `p - local_count_at_or_before(p) >= parent_pos`, i.e. the child
    /// coordinate at which the parent's position `parent_pos` shows up.
    pub fn map_parent_barrier(&self, parent_pos: Position) -> Position {
        let b = parent_pos.0;
        // f(p) = p - lc(p) is non-decreasing and f(b + m) >= b for m local entries.
        let (mut lo, mut hi) = (b, b + self.total_local());
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if mid >= b + self.local_count_at_or_before(Position(mid)) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Position(lo)
    }
}

/// Read access to the set of indexes plus the parent links used for recursion.
pub trait IndexForest {
    fn index(&self, log: LogId) -> Option<&LogIndex>;
    fn parent(&self, log: LogId) -> Option<LogId>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    pub object_ref: ObjectRef,
    /// Parent hops taken; zero for a local hit.
    pub steps: u32,
    pub origin: LogId,
}

/// Find the record occupying `pos` in `log`'s total order. The caller has
/// already checked `pos` against the log's tail and its blocking boundary.
pub fn resolve<F: IndexForest + ?Sized>(forest: &F, log: LogId, pos: Position) -> Result<Resolution> {
    let mut cur = log;
    let mut at = pos;
    let mut steps = 0u32;
    loop {
        let index = forest.index(cur).ok_or_else(|| EngineError::unknown_log(cur))?;
        if let Some(entry) = index.get(at) {
            return Ok(Resolution { object_ref: entry.object_ref, steps, origin: cur });
        }
        at = Position(at.0 - index.local_count_before(at));
        cur = forest
            .parent(cur)
            .ok_or_else(|| EngineError::protocol(format!("position {pos} of {log} does not resolve (ran out of ancestors at {cur})")))?;
        steps += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ObjectId;
    use std::collections::HashMap;

    #[derive(Default)]
    struct Forest {
        indexes: HashMap<LogId, LogIndex>,
        parents: HashMap<LogId, LogId>,
    }

    impl IndexForest for Forest {
        fn index(&self, log: LogId) -> Option<&LogIndex> {
            self.indexes.get(&log)
        }
        fn parent(&self, log: LogId) -> Option<LogId> {
            self.parents.get(&log).copied()
        }
    }

    fn rec(tag: u8) -> ObjectRef {
        ObjectRef::new(ObjectId([tag; 16]), 0, 1)
    }

    const G: LogId = LogId(1);
    const R: LogId = LogId(2);

    /// G = [g0, g1, g2] and R = [g0, r0, g1, r1, g2], indexed the lazy way.
    fn three_log_forest() -> Forest {
        let mut f = Forest::default();
        let mut g = LogIndex::new_root_index(G);
        g.insert_local(Position(0), rec(0x10));
        g.insert_local(Position(1), rec(0x11));
        g.insert_local(Position(2), rec(0x12));
        let mut r = LogIndex::new_fork_index(R);
        r.insert_local(Position(1), rec(0x20));
        r.insert_local(Position(3), rec(0x21));
        f.indexes.insert(G, g);
        f.indexes.insert(R, r);
        f.parents.insert(R, G);
        f
    }

    #[test]
    fn empty_constructors() {
        assert_eq!(LogIndex::new_root_index(LogId(7)).len(), 0);
        assert_eq!(LogIndex::new_fork_index(LogId(7)).len(), 0);
    }

    #[test]
    fn dense_local_counts() {
        let mut idx = LogIndex::new_root_index(LogId(1));
        let counts: Vec<_> = (0..3).map(|p| idx.insert_local(Position(p), rec(p as u8))).collect();
        assert_eq!(counts, vec![1, 2, 3]);
        assert_eq!(idx.len(), 3);
    }

    #[test]
    fn fork_local_inserts_follow_tail() {
        let f = three_log_forest();
        let r = f.index(R).unwrap();
        assert_eq!(r.get(Position(1)).unwrap().local_count, 1);
        assert_eq!(r.get(Position(3)).unwrap().local_count, 2);
        assert_eq!(r.get(Position(3)).unwrap().object_ref, rec(0x21));
    }

    #[test]
    fn inherited_lookup_subtracts_local_count() {
        let f = three_log_forest();
        let got = resolve(&f, R, Position(2)).unwrap();
        assert_eq!(got.object_ref, rec(0x11));
        assert_eq!(got.steps, 1);
        assert_eq!(got.origin, G);
        assert_eq!(resolve(&f, R, Position(4)).unwrap().object_ref, rec(0x12));
        assert_eq!(resolve(&f, R, Position(0)).unwrap().object_ref, rec(0x10));
    }

    #[test]
    fn local_hit_needs_no_recursion() {
        let f = three_log_forest();
        let got = resolve(&f, R, Position(3)).unwrap();
        assert_eq!((got.object_ref, got.steps), (rec(0x21), 0));
    }

    #[test]
    fn unknown_log() {
        let f = three_log_forest();
        assert_eq!(resolve(&f, LogId(99), Position(0)).unwrap_err().code, crate::ErrorCode::UnknownLog);
    }

    #[test]
    fn barrier_identity_without_locals() {
        let idx = LogIndex::new_fork_index(R);
        for b in [0, 1, 17] {
            assert_eq!(idx.map_parent_barrier(Position(b)), Position(b));
        }
    }

    /// Child coordinate of the parent position `b`, by walking the merged sequence.
    fn brute_barrier(locals: &[u64], b: u64) -> u64 {
        let mut inherited = 0;
        let mut p = 0;
        loop {
            if !locals.contains(&p) {
                if inherited == b {
                    return p;
                }
                inherited += 1;
            }
            p += 1;
        }
    }

    #[test]
    fn barrier_matches_merged_sequence() {
        let f = three_log_forest();
        let r = f.index(R).unwrap();
        assert_eq!(brute_barrier(&[1, 3], 2), 4);
        assert_eq!(r.map_parent_barrier(Position(2)), Position(4));
        for b in 0..6 {
            assert_eq!(r.map_parent_barrier(Position(b)).0, brute_barrier(&[1, 3], b), "b={b}");
        }
    }

    proptest::proptest! {
        #[test]
        fn barrier_agrees_with_enumeration(
            mask in proptest::collection::vec(proptest::bool::ANY, 0..40),
            start in 0u64..5,
            b in 0u64..30,
        ) {
            let mut idx = LogIndex::new_fork_index(R);
            let mut locals = Vec::new();
            for (i, local) in mask.iter().enumerate() {
                if *local {
                    let p = start + i as u64;
                    idx.insert_local(Position(p), rec(1));
                    locals.push(p);
                }
            }
            proptest::prop_assert_eq!(idx.map_parent_barrier(Position(b)).0, brute_barrier(&locals, b));
        }
    }
}
