//! Deterministic metadata state machine.
//!
//! Applies [`Command`]s to the log descriptors, the per-log indexes and the
//! tail tree. Every command is all-or-nothing: validation happens before the
//! first mutation, so a failing command leaves the state untouched.
//!
//! Promotable cForks restrict their surroundings until they are promoted or
//! squashed:
//! * the parent keeps accepting appends but withholds positions at or beyond
//!   its `earliest_fp`, and rejects reads that reach it;
//! * every other descendant of the parent is frozen: appends are rejected and
//!   reads are limited to the child coordinate of the parent's barrier.
//!
//! Freezing is tracked with counters in the tail tree. Creating promotable
//! fork `X` of `P` adds one to `P`'s whole subtree and removes one from the
//! subtree of every live promotable child of `P`, so a log's counter minus the
//! number of its own live promotable children is positive exactly when some
//! ancestor's pending promote could change what it sees.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::Encoder;
use crate::command::{Command, RecordMeta};
use crate::error::{EngineError, Result};
use crate::hli::{self, IndexForest, LogIndex, Resolution};
use crate::ltt::{LazyTailTree, TailForest};
use crate::types::{Assigned, IndexEntry, LogDescriptor, LogId, LogKind, LogStatus, ObjectId, ObjectRef, Position};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApplyOutcome {
    Created(LogId),
    Sequenced(Vec<Assigned>),
    Promoted { squashed: Vec<LogId> },
    Squashed(Vec<LogId>),
}

impl ApplyOutcome {
    pub fn created(&self) -> Option<LogId> {
        match self {
            ApplyOutcome::Created(id) => Some(*id),
            _ => None,
        }
    }
}

/// One row of a state dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogInfo {
    pub descriptor: LogDescriptor,
    pub tail: Option<Assigned>,
}

/// Cost counters for complexity assertions. Not part of the fingerprint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ApplyStats {
    /// Index entries read, removed or written by the most recent promote.
    pub promote_entries_touched: u64,
    /// Index entries inserted over the state's lifetime.
    pub entries_inserted: u64,
}

pub struct ForestState<T: TailForest = LazyTailTree> {
    descriptors: BTreeMap<LogId, LogDescriptor>,
    indexes: BTreeMap<LogId, LogIndex>,
    tails: T,
    earliest_fp: BTreeMap<LogId, Position>,
    // Live children of every live log, cForks and sForks alike, in creation order.
    children: BTreeMap<LogId, Vec<LogId>>,
    // Promotable forks squashed because a sibling won the promote.
    lost_race: BTreeSet<LogId>,
    next_id: u64,
    stats: ApplyStats,
}

impl Default for ForestState<LazyTailTree> {
    fn default() -> Self {
        Self::new()
    }
}

impl ForestState<LazyTailTree> {
    pub fn new() -> Self {
        Self::with_tails(LazyTailTree::new())
    }
}

impl<T: TailForest> IndexForest for ForestState<T> {
    fn index(&self, log: LogId) -> Option<&LogIndex> {
        self.indexes.get(&log)
    }

    fn parent(&self, log: LogId) -> Option<LogId> {
        self.descriptors.get(&log).and_then(|d| d.parent)
    }
}

impl<T: TailForest> ForestState<T> {
    pub fn with_tails(tails: T) -> Self {
        ForestState {
            descriptors: BTreeMap::new(),
            indexes: BTreeMap::new(),
            tails,
            earliest_fp: BTreeMap::new(),
            children: BTreeMap::new(),
            lost_race: BTreeSet::new(),
            next_id: 1,
            stats: ApplyStats::default(),
        }
    }

    pub fn tails(&self) -> &T {
        &self.tails
    }

    pub fn stats(&self) -> ApplyStats {
        self.stats
    }

    pub fn descriptor(&self, log: LogId) -> Option<&LogDescriptor> {
        self.descriptors.get(&log)
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &LogDescriptor> {
        self.descriptors.values()
    }

    pub fn live_logs(&self) -> Vec<LogId> {
        self.descriptors.values().filter(|d| d.is_live()).map(|d| d.id).collect()
    }

    pub fn children_of(&self, log: LogId) -> &[LogId] {
        self.children.get(&log).map_or(&[], |v| v.as_slice())
    }

    /// Root log at the top of `log`'s descriptor chain.
    pub fn root_of(&self, log: LogId) -> Option<LogId> {
        let mut d = self.descriptors.get(&log)?;
        while let Some(p) = d.parent {
            d = self.descriptors.get(&p)?;
        }
        Some(d.id)
    }

    pub fn earliest_fp(&self, log: LogId) -> Option<Position> {
        self.earliest_fp.get(&log).copied()
    }

    /// Total index entries across every live log.
    pub fn index_entry_count(&self) -> usize {
        self.indexes.values().map(LogIndex::len).sum()
    }

    fn live(&self, log: LogId) -> Result<&LogDescriptor> {
        let d = self.descriptors.get(&log).ok_or_else(|| EngineError::unknown_log(log))?;
        if !d.is_live() {
            return Err(EngineError::squashed(log));
        }
        Ok(d)
    }

    fn own_promotable(&self, log: LogId) -> u64 {
        self.children_of(log).iter().filter(|c| self.descriptors[*c].is_promotable_cfork()).count() as u64
    }

    /// Frozen by some ancestor's promotable fork this log is not exempt from.
    fn is_frozen(&self, log: LogId) -> Result<bool> {
        let count = self.tails.freeze_count(log)?;
        Ok(count > self.own_promotable(log))
    }

    /// Barrier imposed on `log` by its ancestors, in `log`'s coordinates.
    fn inherited_limit(&self, log: LogId) -> Option<Position> {
        let d = &self.descriptors[&log];
        if d.kind != LogKind::CFork {
            return None;
        }
        let parent = d.parent.expect("cFork has a parent");
        let mut src = self.inherited_limit(parent);
        if !d.promotable {
            src = min_opt(src, self.earliest_fp(parent));
        }
        src.map(|b| self.indexes[&log].map_parent_barrier(b))
    }

    /// First position of `log` that reads may not reach, if any.
    pub fn read_limit(&self, log: LogId) -> Result<Option<Position>> {
        self.live(log)?;
        let inherited = if self.is_frozen(log)? { self.inherited_limit(log) } else { None };
        debug_assert_eq!(inherited.is_some(), self.is_frozen(log)?, "freeze counters disagree with barriers for {log}");
        Ok(min_opt(self.earliest_fp(log), inherited))
    }

    fn blocked_error(&self, log: LogId) -> EngineError {
        let boundary = self.read_limit(log).ok().flatten().or_else(|| self.tails.tail_query(log).ok()).unwrap_or_default();
        EngineError::blocked(log, boundary)
    }

    pub fn raw_tail(&self, log: LogId) -> Result<Position> {
        self.live(log)?;
        self.tails.tail_query(log)
    }

    pub fn get_tail(&self, log: LogId) -> Result<Assigned> {
        let tail = self.raw_tail(log)?;
        Ok(match self.earliest_fp(log) {
            Some(e) if tail >= e => Assigned::Withheld,
            _ => Assigned::At(tail),
        })
    }

    /// Object references for positions `[from, to)` of `log`.
    pub fn read_meta(&self, log: LogId, from: Position, to: Position) -> Result<Vec<ObjectRef>> {
        let tail = self.raw_tail(log)?;
        if from > to || to > tail {
            return Err(EngineError::out_of_range(log, from, to, tail));
        }
        if let Some(limit) = self.read_limit(log)? {
            if to > limit {
                return Err(EngineError::blocked(log, limit));
            }
        }
        (from.0..to.0).map(|p| hli::resolve(self, log, Position(p)).map(|r| r.object_ref)).collect()
    }

    /// Resolve one position ignoring blocking.
    pub fn resolve(&self, log: LogId, pos: Position) -> Result<Resolution> {
        let tail = self.raw_tail(log)?;
        if pos >= tail {
            return Err(EngineError::out_of_range(log, pos, pos.next(), tail));
        }
        hli::resolve(self, log, pos)
    }

    /// Every position of `log` in order, ignoring blocking.
    pub fn resolve_all(&self, log: LogId) -> Result<Vec<ObjectRef>> {
        let tail = self.raw_tail(log)?;
        (0..tail.0).map(|p| hli::resolve(self, log, Position(p)).map(|r| r.object_ref)).collect()
    }

    pub fn apply(&mut self, cmd: &Command) -> Result<ApplyOutcome> {
        match cmd {
            Command::CreateRoot => Ok(ApplyOutcome::Created(self.create_root())),
            Command::SequenceBatch { object_id, records } => self.sequence_batch(*object_id, records).map(ApplyOutcome::Sequenced),
            Command::CreateCFork { parent, promotable } => self.create_cfork(*parent, *promotable).map(ApplyOutcome::Created),
            Command::CreateSFork { parent, past } => self.create_sfork(*parent, *past).map(ApplyOutcome::Created),
            Command::Promote { child } => self.promote(*child).map(|squashed| ApplyOutcome::Promoted { squashed }),
            Command::Squash { log } => self.squash(*log).map(ApplyOutcome::Squashed),
        }
    }

    fn fresh_id(&mut self) -> LogId {
        let id = LogId(self.next_id);
        self.next_id += 1;
        id
    }

    pub fn create_root(&mut self) -> LogId {
        let id = self.fresh_id();
        self.descriptors.insert(id, LogDescriptor::root(id));
        self.indexes.insert(id, LogIndex::new_root_index(id));
        self.children.insert(id, Vec::new());
        self.tails.insert_root(id, Position::ZERO);
        id
    }

    pub fn sequence_batch(&mut self, object_id: ObjectId, records: &[RecordMeta]) -> Result<Vec<Assigned>> {
        for r in records {
            self.live(r.log)?;
            if r.byte_length == 0 {
                return Err(EngineError::protocol(format!("zero-length record for {}", r.log)));
            }
            if self.is_frozen(r.log)? {
                return Err(self.blocked_error(r.log));
            }
        }
        let mut out = Vec::with_capacity(records.len());
        for r in records {
            let pos = self.tails.tail_query(r.log)?;
            self.indexes.get_mut(&r.log).expect("live log has an index").insert_local(pos, r.object_ref(object_id));
            self.stats.entries_inserted += 1;
            self.tails.subtree_add(r.log, 1)?;
            out.push(match self.earliest_fp(r.log) {
                Some(e) if pos >= e => Assigned::Withheld,
                _ => Assigned::At(pos),
            });
        }
        Ok(out)
    }

    pub fn create_cfork(&mut self, parent: LogId, promotable: bool) -> Result<LogId> {
        self.live(parent)?;
        if self.is_frozen(parent)? {
            return Err(self.blocked_error(parent));
        }
        let fork_point = self.tails.tail_query(parent)?;
        let own = self.own_promotable(parent);
        let parent_count = self.tails.freeze_count(parent)?;
        let id = self.fresh_id();
        self.descriptors.insert(
            id,
            LogDescriptor {
                id,
                kind: LogKind::CFork,
                parent: Some(parent),
                fork_point: Some(fork_point),
                promotable,
                status: LogStatus::Live,
            },
        );
        self.indexes.insert(id, LogIndex::new_fork_index(id));
        self.children.insert(id, Vec::new());
        self.children.get_mut(&parent).expect("live parent").push(id);
        self.tails.insert_child(parent, id, fork_point)?;
        // A promotable child is exempt from its parent's own freezes.
        let base = if promotable { parent_count - own } else { parent_count };
        if base > 0 {
            self.tails.point_freeze(id, base as i64)?;
        }
        if promotable {
            self.tails.subtree_freeze(parent, 1)?;
            for c in self.promotable_children(parent) {
                self.tails.subtree_freeze(c, -1)?;
            }
            let e = min_opt(self.earliest_fp(parent), Some(fork_point)).expect("some");
            self.earliest_fp.insert(parent, e);
        }
        Ok(id)
    }

    pub fn create_sfork(&mut self, parent: LogId, past: Option<Position>) -> Result<LogId> {
        self.live(parent)?;
        let tail = self.tails.tail_query(parent)?;
        if let Some(p) = past {
            if p >= tail {
                return Err(EngineError::out_of_range(parent, p, p.next(), tail));
            }
        }
        if self.is_frozen(parent)? {
            return Err(self.blocked_error(parent));
        }
        let shared = past.map_or(tail, Position::next);
        if let Some(e) = self.earliest_fp(parent) {
            if shared > e {
                return Err(EngineError::blocked(parent, e));
            }
        }
        let id = self.fresh_id();
        self.descriptors.insert(
            id,
            LogDescriptor {
                id,
                kind: LogKind::SFork,
                parent: Some(parent),
                fork_point: Some(shared),
                promotable: false,
                status: LogStatus::Live,
            },
        );
        self.indexes.insert(id, LogIndex::new_fork_index(id));
        self.children.insert(id, Vec::new());
        self.children.get_mut(&parent).expect("live parent").push(id);
        self.tails.insert_root(id, shared);
        Ok(id)
    }

    fn promotable_children(&self, log: LogId) -> Vec<LogId> {
        self.children_of(log).iter().copied().filter(|c| self.descriptors[c].is_promotable_cfork()).collect()
    }

    fn recompute_earliest_fp(&mut self, log: LogId) {
        let e = self.promotable_children(log).into_iter().filter_map(|c| self.descriptors[&c].fork_point).min();
        match e {
            Some(e) => self.earliest_fp.insert(log, e),
            None => self.earliest_fp.remove(&log),
        };
    }

    /// Remove `log` and every descendant, returning them in depth-first order.
    fn remove_descendants(&mut self, log: LogId) -> Result<Vec<LogId>> {
        let mut order = Vec::new();
        let mut stack = vec![log];
        while let Some(x) = stack.pop() {
            order.push(x);
            stack.extend(self.children_of(x).iter().rev().copied());
        }
        for x in &order {
            if self.tails.contains(*x) {
                self.tails.remove_subtree(*x)?;
            }
        }
        for x in &order {
            self.indexes.remove(x);
            self.children.remove(x);
            self.earliest_fp.remove(x);
            self.descriptors.get_mut(x).expect("known").status = LogStatus::Squashed;
        }
        Ok(order)
    }

    pub fn squash(&mut self, log: LogId) -> Result<Vec<LogId>> {
        let d = self.live(log)?.clone();
        if d.kind == LogKind::Root {
            return Err(EngineError::squash_root(log));
        }
        let parent = d.parent.expect("fork has a parent");
        let removed = self.remove_descendants(log)?;
        self.children.get_mut(&parent).expect("live parent").retain(|c| *c != log);
        if d.is_promotable_cfork() {
            self.tails.subtree_freeze(parent, -1)?;
            for c in self.promotable_children(parent) {
                self.tails.subtree_freeze(c, 1)?;
            }
            self.recompute_earliest_fp(parent);
        }
        Ok(removed)
    }

    pub fn promote(&mut self, child: LogId) -> Result<Vec<LogId>> {
        let d = self.descriptors.get(&child).ok_or_else(|| EngineError::unknown_log(child))?.clone();
        if self.lost_race.contains(&child) {
            return Err(EngineError::race_lost(child));
        }
        self.live(child)?;
        if !d.is_promotable_cfork() {
            return Err(EngineError::not_promotable(child));
        }
        if self.is_frozen(child)? {
            return Err(self.blocked_error(child));
        }
        let parent = d.parent.expect("cFork has a parent");
        let fp = d.fork_point.expect("cFork has a fork point");
        let new_tail = self.tails.tail_query(child)?;
        let parent_own = self.own_promotable(parent) as i64;
        let child_own = self.own_promotable(child) as i64;

        let merged = merge_post_fork(&self.indexes[&child], &self.indexes[&parent], fp);
        let mut touched = merged.len() as u64;

        let mut squashed = Vec::new();
        for c in self.children_of(parent).to_vec() {
            if c != child && self.descriptors[&c].kind == LogKind::CFork {
                let gone = self.remove_descendants(c)?;
                self.lost_race.extend(gone.iter().copied());
                squashed.extend(gone);
            }
        }

        let pindex = self.indexes.get_mut(&parent).expect("live parent");
        let mut count = pindex.local_count_before(fp);
        touched += pindex.truncate_from(fp) as u64;
        for (pos, object_ref) in &merged {
            count += 1;
            let inserted = pindex.insert_local(*pos, *object_ref);
            debug_assert_eq!(inserted, count);
        }
        touched += merged.len() as u64;
        self.stats.promote_entries_touched = touched;

        let old_tail = self.tails.tail_query(parent)?;
        self.tails.point_add(parent, new_tail.0 as i64 - old_tail.0 as i64)?;
        if child_own != parent_own {
            self.tails.point_freeze(parent, child_own - parent_own)?;
        }
        self.tails.splice_out(child)?;

        let grandchildren = self.children.remove(&child).unwrap_or_default();
        for g in &grandchildren {
            self.descriptors.get_mut(g).expect("live child").parent = Some(parent);
        }
        let siblings = self.children.get_mut(&parent).expect("live parent");
        siblings.retain(|c| *c != child && !squashed.contains(c));
        siblings.extend(grandchildren);
        self.indexes.remove(&child);
        self.earliest_fp.remove(&child);
        self.descriptors.get_mut(&child).expect("known").status = LogStatus::PromotedAway;
        self.recompute_earliest_fp(parent);
        Ok(squashed)
    }

    pub fn describe(&self) -> Vec<LogInfo> {
        self.descriptors
            .values()
            .map(|d| LogInfo { descriptor: d.clone(), tail: if d.is_live() { self.get_tail(d.id).ok() } else { None } })
            .collect()
    }

    /// Canonical SHA-256 over descriptors, index entries, tails, freeze
    /// counters and bookkeeping. Identical states hash identically regardless
    /// of how the tail tree is shaped internally.
    pub fn fingerprint(&self) -> String {
        let mut e = Encoder::new();
        e.u64(self.next_id);
        for d in self.descriptors.values() {
            e.u64(d.id.0)
                .u8(d.kind.as_u8())
                .opt_u64(d.parent.map(|p| p.0))
                .opt_u64(d.fork_point.map(|p| p.0))
                .bool(d.promotable)
                .u8(d.status.as_u8());
            if d.is_live() {
                let tail = self.tails.tail_query(d.id).expect("live log has a tail");
                let freeze = self.tails.freeze_count(d.id).expect("live log has a freeze counter");
                e.u64(tail.0).u64(freeze).opt_u64(self.earliest_fp(d.id).map(|p| p.0));
                let kids = self.children_of(d.id);
                e.u32(kids.len() as u32);
                for k in kids {
                    e.u64(k.0);
                }
                let idx = &self.indexes[&d.id];
                e.u64(idx.len() as u64);
                for (pos, entry) in idx.iter() {
                    e.u64(pos.0)
                        .raw(&entry.object_ref.object_id.0)
                        .u64(entry.object_ref.byte_offset)
                        .u32(entry.object_ref.byte_length)
                        .u64(entry.local_count);
                }
            }
        }
        e.u64(self.lost_race.len() as u64);
        for l in &self.lost_race {
            e.u64(l.0);
        }
        hex::encode(Sha256::digest(e.finish()))
    }

    /// Serializable copy of the state, without the tail tree's internal shape.
    pub fn image(&self) -> StateImage {
        let logs = self
            .descriptors
            .values()
            .map(|d| {
                let live = d.is_live();
                LogImage {
                    descriptor: d.clone(),
                    tail: live.then(|| self.tails.tail_query(d.id).expect("tail").0),
                    freeze: live.then(|| self.tails.freeze_count(d.id).expect("freeze")),
                    children: self.children_of(d.id).to_vec(),
                    earliest_fp: self.earliest_fp(d.id),
                    entries: self.indexes.get(&d.id).map(|i| i.iter().map(|(p, e)| (p.0, *e)).collect()).unwrap_or_default(),
                }
            })
            .collect();
        StateImage { next_id: self.next_id, lost_race: self.lost_race.iter().copied().collect(), logs }
    }

    /// Rebuild a state from an image, reconstructing the tail tree.
    pub fn from_image(image: &StateImage, tails: T) -> Result<Self> {
        let mut s = Self::with_tails(tails);
        s.next_id = image.next_id;
        s.lost_race = image.lost_race.iter().copied().collect();
        let mut by_id = BTreeMap::new();
        for l in &image.logs {
            s.descriptors.insert(l.descriptor.id, l.descriptor.clone());
            if l.descriptor.is_live() {
                let mut idx = LogIndex::new_root_index(l.descriptor.id);
                for (p, e) in &l.entries {
                    let c = idx.insert_local(Position(*p), e.object_ref);
                    if c != e.local_count {
                        return Err(EngineError::protocol(format!("snapshot index of {} is not dense", l.descriptor.id)));
                    }
                }
                s.indexes.insert(l.descriptor.id, idx);
                s.children.insert(l.descriptor.id, l.children.clone());
                if let Some(e) = l.earliest_fp {
                    s.earliest_fp.insert(l.descriptor.id, e);
                }
            }
            by_id.insert(l.descriptor.id, l);
        }
        // Tail-tree roots are roots and sForks; cForks hang below their parents.
        let tree_roots: Vec<LogId> =
            by_id.values().filter(|l| l.descriptor.is_live() && l.descriptor.kind != LogKind::CFork).map(|l| l.descriptor.id).collect();
        for r in tree_roots {
            let mut stack = vec![(r, None::<LogId>)];
            while let Some((x, parent)) = stack.pop() {
                let l = by_id.get(&x).ok_or_else(|| EngineError::protocol(format!("snapshot misses {x}")))?;
                let tail = Position(l.tail.unwrap_or(0));
                match parent {
                    None => s.tails.insert_root(x, tail),
                    Some(p) => s.tails.insert_child(p, x, tail)?,
                }
                let freeze = l.freeze.unwrap_or(0);
                if freeze > 0 {
                    s.tails.point_freeze(x, freeze as i64)?;
                }
                for c in l.children.iter().rev() {
                    if by_id.get(c).is_some_and(|cl| cl.descriptor.kind == LogKind::CFork) {
                        stack.push((*c, Some(x)));
                    }
                }
            }
        }
        Ok(s)
    }

    /// Recount every live log's tail from first principles:
    /// locals plus whatever it shares with or inherits from its parent.
    pub fn check_conservation(&self) -> Result<()> {
        for d in self.descriptors.values().filter(|d| d.is_live()) {
            let locals = self.indexes[&d.id].total_local();
            let inherited = match d.kind {
                LogKind::Root => 0,
                LogKind::SFork => d.fork_point.expect("sFork fork point").0,
                LogKind::CFork => self.tails.tail_query(d.parent.expect("parent"))?.0,
            };
            let tail = self.tails.tail_query(d.id)?.0;
            if tail != locals + inherited {
                return Err(EngineError::protocol(format!("{}: tail {tail} != {locals} local + {inherited} inherited", d.id)));
            }
        }
        Ok(())
    }
}

fn min_opt(a: Option<Position>, b: Option<Position>) -> Option<Position> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Materialized records of `child` at positions `>= fp`, in child
/// coordinates: the child's own entries interleaved with the parent's local
/// entries past the fork point. Records the parent itself inherited stay
/// implicit, and the cumulative counts rebuilt from this list still map
/// them to the right grandparent positions.
fn merge_post_fork(child: &LogIndex, parent: &LogIndex, fp: Position) -> Vec<(Position, ObjectRef)> {
    let mut out = Vec::with_capacity(child.len());
    let mut locals = child.iter().peekable();
    let mut inherited = parent.iter_from(fp).peekable();
    let mut seen_local = 0u64;
    loop {
        match (locals.peek(), inherited.peek()) {
            (Some((cpos, centry)), Some((ppos, pentry))) => {
                if cpos.0 <= ppos.0 + seen_local {
                    out.push((*cpos, centry.object_ref));
                    seen_local += 1;
                    locals.next();
                } else {
                    out.push((Position(ppos.0 + seen_local), pentry.object_ref));
                    inherited.next();
                }
            }
            (Some((cpos, centry)), None) => {
                out.push((*cpos, centry.object_ref));
                seen_local += 1;
                locals.next();
            }
            (None, Some((ppos, pentry))) => {
                out.push((Position(ppos.0 + seen_local), pentry.object_ref));
                inherited.next();
            }
            (None, None) => return out,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogImage {
    pub descriptor: LogDescriptor,
    pub tail: Option<u64>,
    pub freeze: Option<u64>,
    pub children: Vec<LogId>,
    pub earliest_fp: Option<Position>,
    pub entries: Vec<(u64, IndexEntry)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateImage {
    pub next_id: u64,
    pub lost_race: Vec<LogId>,
    pub logs: Vec<LogImage>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ErrorCode;

    fn oid(tag: u8) -> ObjectId {
        ObjectId([tag; 16])
    }

    fn append(s: &mut ForestState, log: LogId, tag: u8) -> Assigned {
        let recs = [RecordMeta { log, byte_offset: 12, byte_length: 1 }];
        s.sequence_batch(oid(tag), &recs).unwrap()[0]
    }

    fn tags(s: &ForestState, log: LogId) -> Vec<u8> {
        s.resolve_all(log).unwrap().into_iter().map(|r| r.object_id.0[0]).collect()
    }

    fn at(p: u64) -> Assigned {
        Assigned::At(Position(p))
    }

    #[test]
    fn nested_fork_trace() {
        let mut s = ForestState::new();
        let g = s.create_root();
        assert_eq!(append(&mut s, g, 0xa0), at(0));
        let r = s.create_cfork(g, false).unwrap();
        assert_eq!(s.get_tail(r).unwrap(), at(1));
        assert_eq!(s.index_entry_count(), 1);
        assert_eq!(append(&mut s, r, 0xb0), at(1));
        assert_eq!(append(&mut s, g, 0xa1), at(1));
        assert_eq!(s.get_tail(r).unwrap(), at(3));
        assert_eq!(append(&mut s, r, 0xb1), at(3));
        assert_eq!(append(&mut s, g, 0xa2), at(2));
        assert_eq!(s.get_tail(r).unwrap(), at(5));
        assert_eq!(s.get_tail(g).unwrap(), at(3));
        assert_eq!(tags(&s, r), vec![0xa0, 0xb0, 0xa1, 0xb1, 0xa2]);
        assert_eq!(tags(&s, g), vec![0xa0, 0xa1, 0xa2]);
        let refs = s.read_meta(r, Position(2), Position(3)).unwrap();
        assert_eq!(refs[0].object_id, oid(0xa1));
        assert_eq!(s.index_entry_count(), 5);
        s.check_conservation().unwrap();
    }

    #[test]
    fn one_object_many_logs() {
        let mut s = ForestState::new();
        let a = s.create_root();
        let b = s.create_root();
        append(&mut s, b, 1);
        let recs = [
            RecordMeta { log: a, byte_offset: 12, byte_length: 3 },
            RecordMeta { log: b, byte_offset: 27, byte_length: 3 },
            RecordMeta { log: a, byte_offset: 42, byte_length: 3 },
        ];
        let got = s.sequence_batch(oid(9), &recs).unwrap();
        assert_eq!(got, vec![at(0), at(1), at(1)]);
    }

    #[test]
    fn squash_root_is_forbidden_and_state_unchanged() {
        let mut s = ForestState::new();
        let r = s.create_root();
        append(&mut s, r, 1);
        let before = s.fingerprint();
        let err = s.apply(&Command::Squash { log: r }).unwrap_err();
        assert_eq!(err.code, ErrorCode::SquashRootForbidden);
        assert_eq!(s.fingerprint(), before);
    }

    #[test]
    fn failing_batch_is_all_or_nothing() {
        let mut s = ForestState::new();
        let r = s.create_root();
        let before = s.fingerprint();
        let recs = [RecordMeta { log: r, byte_offset: 0, byte_length: 1 }, RecordMeta { log: LogId(77), byte_offset: 0, byte_length: 1 }];
        assert_eq!(s.sequence_batch(oid(1), &recs).unwrap_err().code, ErrorCode::UnknownLog);
        assert_eq!(s.fingerprint(), before);
    }

    #[test]
    fn promotable_fork_withholds_and_blocks_parent() {
        let mut s = ForestState::new();
        let p = s.create_root();
        for t in 0..3 {
            append(&mut s, p, t);
        }
        let c = s.create_cfork(p, true).unwrap();
        assert_eq!(s.earliest_fp(p), Some(Position(3)));
        assert_eq!(append(&mut s, p, 3), Assigned::Withheld);
        assert_eq!(append(&mut s, p, 4), Assigned::Withheld);
        assert_eq!(s.get_tail(p).unwrap(), Assigned::Withheld);
        let err = s.read_meta(p, Position(3), Position(4)).unwrap_err();
        assert_eq!((err.code, err.boundary), (ErrorCode::BlockedByPromotableFork, Some(Position(3))));
        assert_eq!(s.read_meta(p, Position(0), Position(3)).unwrap().len(), 3);
        // The promotable child itself is unrestricted.
        assert_eq!(s.read_meta(c, Position(0), Position(5)).unwrap().len(), 5);
        assert_eq!(append(&mut s, c, 9), at(5));
    }

    #[test]
    fn non_promotable_sibling_is_frozen_at_its_barrier() {
        let mut s = ForestState::new();
        let p = s.create_root();
        append(&mut s, p, 0);
        let n = s.create_cfork(p, false).unwrap();
        append(&mut s, n, 0x10); // n = [p0, n0]
        append(&mut s, p, 1); // n = [p0, n0, p1]
        let c = s.create_cfork(p, true).unwrap(); // fp 2
        append(&mut s, p, 2); // withheld, n sees it at 3
        assert_eq!(s.raw_tail(n).unwrap(), Position(4));
        let err = s.sequence_batch(oid(5), &[RecordMeta { log: n, byte_offset: 0, byte_length: 1 }]).unwrap_err();
        assert_eq!((err.code, err.boundary), (ErrorCode::BlockedByPromotableFork, Some(Position(3))));
        assert_eq!(s.read_meta(n, Position(0), Position(3)).unwrap().len(), 3);
        assert_eq!(s.read_meta(n, Position(0), Position(4)).unwrap_err().boundary, Some(Position(3)));
        assert_eq!(s.create_cfork(n, false).unwrap_err().code, ErrorCode::BlockedByPromotableFork);
        s.squash(c).unwrap();
        assert_eq!(s.read_meta(n, Position(0), Position(4)).unwrap().len(), 4);
        assert_eq!(append(&mut s, n, 0x11), at(4));
        assert_eq!(s.get_tail(p).unwrap(), at(3));
        s.check_conservation().unwrap();
    }

    #[test]
    fn promote_merges_child_interleaving() {
        let mut s = ForestState::new();
        let p = s.create_root();
        append(&mut s, p, b'a');
        append(&mut s, p, b'b');
        let c = s.create_cfork(p, true).unwrap();
        append(&mut s, c, b'c');
        assert_eq!(append(&mut s, p, b'd'), Assigned::Withheld);
        let expected = tags(&s, c);
        assert_eq!(expected, b"abcd".to_vec());
        assert_eq!(s.promote(c).unwrap(), vec![]);
        assert_eq!(tags(&s, p), expected);
        assert_eq!(s.get_tail(p).unwrap(), at(4));
        assert_eq!(s.read_meta(p, Position(0), Position(4)).unwrap().len(), 4);
        assert_eq!(s.descriptor(c).unwrap().status, LogStatus::PromotedAway);
        assert_eq!(s.read_meta(c, Position(0), Position(1)).unwrap_err().code, ErrorCode::LogSquashed);
        s.check_conservation().unwrap();
    }

    #[test]
    fn first_promote_wins() {
        let mut s = ForestState::new();
        let p = s.create_root();
        append(&mut s, p, 0);
        let a = s.create_cfork(p, true).unwrap();
        let b = s.create_cfork(p, true).unwrap();
        let n = s.create_cfork(p, false).unwrap();
        let squashed = s.promote(b).unwrap();
        assert_eq!(squashed, vec![a, n]);
        assert_eq!(s.promote(a).unwrap_err().code, ErrorCode::PromoteRaceLost);
        assert_eq!(
            s.sequence_batch(oid(1), &[RecordMeta { log: n, byte_offset: 0, byte_length: 1 }]).unwrap_err().code,
            ErrorCode::LogSquashed
        );
        assert_eq!(s.earliest_fp(p), None);
        assert_eq!(append(&mut s, p, 1), at(1));
    }

    #[test]
    fn promote_rejects_non_promotable() {
        let mut s = ForestState::new();
        let p = s.create_root();
        let sf = s.create_sfork(p, None).unwrap();
        let cf = s.create_cfork(p, false).unwrap();
        assert_eq!(s.promote(sf).unwrap_err().code, ErrorCode::NotPromotable);
        assert_eq!(s.promote(cf).unwrap_err().code, ErrorCode::NotPromotable);
        assert_eq!(s.promote(LogId(99)).unwrap_err().code, ErrorCode::UnknownLog);
    }

    #[test]
    fn promote_reparents_grandchildren() {
        let mut s = ForestState::new();
        let p = s.create_root();
        append(&mut s, p, 1);
        let c = s.create_cfork(p, true).unwrap();
        append(&mut s, c, 2);
        let g = s.create_cfork(c, false).unwrap();
        append(&mut s, g, 3);
        append(&mut s, p, 4);
        let before = tags(&s, g);
        assert_eq!(before, vec![1, 2, 3, 4]);
        s.promote(c).unwrap();
        assert_eq!(s.descriptor(g).unwrap().parent, Some(p));
        assert_eq!(tags(&s, g), before);
        append(&mut s, p, 5);
        assert_eq!(tags(&s, g), vec![1, 2, 3, 4, 5]);
        assert_eq!(tags(&s, p), vec![1, 2, 4, 5]);
        s.check_conservation().unwrap();
    }

    #[test]
    fn sfork_from_past_offset() {
        let mut s = ForestState::new();
        let p = s.create_root();
        for t in 0..5 {
            append(&mut s, p, t);
        }
        let a = s.create_sfork(p, None).unwrap();
        let b = s.create_sfork(p, Some(Position(1))).unwrap();
        assert_eq!(s.get_tail(a).unwrap(), at(5));
        assert_eq!(s.get_tail(b).unwrap(), at(2));
        append(&mut s, p, 9);
        assert_eq!(s.get_tail(a).unwrap(), at(5));
        append(&mut s, b, 0x77);
        assert_eq!(tags(&s, b), vec![0, 1, 0x77]);
        assert_eq!(tags(&s, p)[2], 2);
        assert_eq!(s.create_sfork(p, Some(Position(6))).unwrap_err().code, ErrorCode::PositionOutOfRange);
    }

    #[test]
    fn squash_is_recursive_and_ids_are_not_reused() {
        let mut s = ForestState::new();
        let p = s.create_root();
        let a = s.create_cfork(p, false).unwrap();
        let b = s.create_cfork(a, false).unwrap();
        let c = s.create_sfork(b, None).unwrap();
        let d = s.create_cfork(a, false).unwrap();
        let removed = s.squash(a).unwrap();
        assert_eq!(removed, vec![a, b, c, d]);
        for x in removed {
            assert_eq!(s.get_tail(x).unwrap_err().code, ErrorCode::LogSquashed);
        }
        let e = s.create_cfork(p, false).unwrap();
        assert!(e > d);
        assert_eq!(s.tails().len(), 2);
    }

    #[test]
    fn snapshot_image_round_trip() {
        let mut s = ForestState::new();
        let p = s.create_root();
        append(&mut s, p, 1);
        let c = s.create_cfork(p, true).unwrap();
        let n = s.create_cfork(p, false).unwrap();
        append(&mut s, c, 2);
        append(&mut s, p, 3);
        s.create_sfork(p, Some(Position(0))).unwrap();
        s.create_cfork(c, false).unwrap();
        let img = s.image();
        let json = serde_json::to_vec(&img).unwrap();
        let back: StateImage = serde_json::from_slice(&json).unwrap();
        let t = ForestState::from_image(&back, LazyTailTree::new()).unwrap();
        assert_eq!(t.fingerprint(), s.fingerprint());
        assert!(t.is_frozen(n).unwrap());
    }
}
