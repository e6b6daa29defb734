//! Copy-everything state machine used as an oracle.
//!
//! Every log keeps a dense list of entries for all positions from its start
//! onward; an append is copied into every continuously inheriting
//! descendant. Positions below a log's start belong to its parent at the same
//! position. Blocking is derived from the descriptors on every call, with no
//! freeze counters.

use std::collections::{BTreeMap, BTreeSet};

use crate::command::{Command, RecordMeta};
use crate::error::{EngineError, Result};
use crate::metastate::ApplyOutcome;
use crate::types::{Assigned, LogDescriptor, LogId, LogKind, LogStatus, ObjectId, ObjectRef, Position};

use super::MetaModel;

#[derive(Debug, Clone, Copy)]
struct Entry {
    object_ref: ObjectRef,
    /// Position in the parent this entry was copied from; `None` if local.
    parent_pos: Option<u64>,
}

#[derive(Debug, Clone)]
struct Log {
    desc: LogDescriptor,
    start: u64,
    entries: Vec<Entry>,
    children: Vec<LogId>,
}

impl Log {
    fn tail(&self) -> u64 {
        self.start + self.entries.len() as u64
    }
}

#[derive(Debug, Default)]
pub struct NaiveCf {
    logs: BTreeMap<LogId, Log>,
    lost_race: BTreeSet<LogId>,
    next_id: u64,
    copies: u64,
}

impl NaiveCf {
    pub fn new() -> Self {
        NaiveCf { next_id: 1, ..Default::default() }
    }

    fn live(&self, log: LogId) -> Result<&Log> {
        let l = self.logs.get(&log).ok_or_else(|| EngineError::unknown_log(log))?;
        if l.desc.status != LogStatus::Live {
            return Err(EngineError::squashed(log));
        }
        Ok(l)
    }

    fn promotable_kids(&self, log: LogId) -> impl Iterator<Item = &Log> + '_ {
        self.logs[&log].children.iter().map(|c| &self.logs[c]).filter(|c| c.desc.kind == LogKind::CFork && c.desc.promotable)
    }

    fn earliest(&self, log: LogId) -> Option<u64> {
        self.promotable_kids(log).map(|c| c.start).min()
    }

    /// Some ancestor on the continuous path has a promotable cFork, and the
    /// path does not pass through a promotable cFork at that level.
    fn frozen(&self, log: LogId) -> bool {
        let mut cur = log;
        loop {
            let l = &self.logs[&cur];
            if l.desc.kind != LogKind::CFork {
                return false;
            }
            let parent = l.desc.parent.expect("cFork parent");
            // Promotable siblings race each other instead of freezing.
            if !l.desc.promotable && self.promotable_kids(parent).next().is_some() {
                return true;
            }
            cur = parent;
        }
    }

    /// First own position that shows parent position `b` or later.
    fn map_barrier(&self, log: LogId, b: u64) -> u64 {
        let l = &self.logs[&log];
        if b < l.start {
            return b;
        }
        l.entries.iter().position(|e| e.parent_pos.is_some_and(|q| q >= b)).map_or(l.tail(), |i| l.start + i as u64)
    }

    fn inherited_limit(&self, log: LogId) -> Option<u64> {
        let l = &self.logs[&log];
        if l.desc.kind != LogKind::CFork {
            return None;
        }
        let parent = l.desc.parent.expect("cFork parent");
        let mut src = self.inherited_limit(parent);
        if !l.desc.promotable {
            src = match (src, self.earliest(parent)) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
        }
        src.map(|b| self.map_barrier(log, b))
    }

    fn limit(&self, log: LogId) -> Option<u64> {
        match (self.earliest(log), self.inherited_limit(log)) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn blocked(&self, log: LogId) -> EngineError {
        let b = self.limit(log).unwrap_or_else(|| self.logs[&log].tail());
        EngineError::blocked(log, Position(b))
    }

    fn resolve(&self, mut log: LogId, pos: u64) -> ObjectRef {
        loop {
            let l = &self.logs[&log];
            if pos >= l.start {
                return l.entries[(pos - l.start) as usize].object_ref;
            }
            log = l.desc.parent.expect("position below start has a parent");
        }
    }

    fn fresh(&mut self) -> LogId {
        let id = LogId(self.next_id);
        self.next_id += 1;
        id
    }

    /// Mark `log` and all its descendants squashed, depth-first.
    fn remove(&mut self, log: LogId) -> Vec<LogId> {
        let mut order = Vec::new();
        let mut stack = vec![log];
        while let Some(x) = stack.pop() {
            order.push(x);
            let l = self.logs.get_mut(&x).expect("known");
            l.desc.status = LogStatus::Squashed;
            l.entries = Vec::new();
            let kids = std::mem::take(&mut l.children);
            stack.extend(kids.into_iter().rev());
        }
        order
    }

    fn sequence(&mut self, object_id: ObjectId, records: &[RecordMeta]) -> Result<Vec<Assigned>> {
        for r in records {
            self.live(r.log)?;
            if r.byte_length == 0 {
                return Err(EngineError::protocol(format!("zero-length record for {}", r.log)));
            }
            if self.frozen(r.log) {
                return Err(self.blocked(r.log));
            }
        }
        let mut out = Vec::new();
        for r in records {
            let object_ref = r.object_ref(object_id);
            let pos = self.logs[&r.log].tail();
            self.logs.get_mut(&r.log).expect("live").entries.push(Entry { object_ref, parent_pos: None });
            self.copies += 1;
            let mut stack: Vec<(LogId, u64)> = self.inheritors(r.log).into_iter().map(|c| (c, pos)).collect();
            while let Some((c, parent_pos)) = stack.pop() {
                let child = self.logs.get_mut(&c).expect("live child");
                let at = child.tail();
                child.entries.push(Entry { object_ref, parent_pos: Some(parent_pos) });
                self.copies += 1;
                stack.extend(self.inheritors(c).into_iter().map(|g| (g, at)));
            }
            out.push(match self.earliest(r.log) {
                Some(e) if pos >= e => Assigned::Withheld,
                _ => Assigned::At(Position(pos)),
            });
        }
        Ok(out)
    }

    fn inheritors(&self, log: LogId) -> Vec<LogId> {
        self.logs[&log].children.iter().copied().filter(|c| self.logs[c].desc.kind == LogKind::CFork).collect()
    }

    fn add_fork(&mut self, parent: LogId, kind: LogKind, start: u64, promotable: bool) -> LogId {
        let id = self.fresh();
        let desc = LogDescriptor { id, kind, parent: Some(parent), fork_point: Some(Position(start)), promotable, status: LogStatus::Live };
        self.logs.insert(id, Log { desc, start, entries: Vec::new(), children: Vec::new() });
        self.logs.get_mut(&parent).expect("live parent").children.push(id);
        id
    }

    fn promote(&mut self, child: LogId) -> Result<Vec<LogId>> {
        let c = self.logs.get(&child).ok_or_else(|| EngineError::unknown_log(child))?;
        if self.lost_race.contains(&child) {
            return Err(EngineError::race_lost(child));
        }
        self.live(child)?;
        if !(c.desc.kind == LogKind::CFork && c.desc.promotable) {
            return Err(EngineError::not_promotable(child));
        }
        if self.frozen(child) {
            return Err(self.blocked(child));
        }
        let parent = c.desc.parent.expect("cFork parent");
        let fp = c.start;
        let p = &self.logs[&parent];
        let merged: Vec<Entry> = c
            .entries
            .iter()
            .map(|e| match e.parent_pos {
                None => Entry { object_ref: e.object_ref, parent_pos: None },
                Some(q) => Entry { object_ref: e.object_ref, parent_pos: p.entries[(q - p.start) as usize].parent_pos },
            })
            .collect();

        let mut squashed = Vec::new();
        for s in p.children.clone() {
            if s != child && self.logs[&s].desc.kind == LogKind::CFork {
                squashed.extend(self.remove(s));
            }
        }
        self.lost_race.extend(squashed.iter().copied());

        let c = self.logs.get_mut(&child).expect("child");
        c.desc.status = LogStatus::PromotedAway;
        c.entries = Vec::new();
        let grandkids = std::mem::take(&mut c.children);
        for g in &grandkids {
            self.logs.get_mut(g).expect("grandchild").desc.parent = Some(parent);
        }
        let p = self.logs.get_mut(&parent).expect("parent");
        let keep = (fp - p.start) as usize;
        p.entries.truncate(keep);
        p.entries.extend(merged);
        p.children.retain(|k| *k != child && !squashed.contains(k));
        p.children.extend(grandkids);
        Ok(squashed)
    }

    fn squash(&mut self, log: LogId) -> Result<Vec<LogId>> {
        let l = self.live(log)?;
        if l.desc.kind == LogKind::Root {
            return Err(EngineError::squash_root(log));
        }
        let parent = l.desc.parent.expect("fork parent");
        let removed = self.remove(log);
        self.logs.get_mut(&parent).expect("parent").children.retain(|c| *c != log);
        Ok(removed)
    }
}

impl MetaModel for NaiveCf {
    fn apply(&mut self, cmd: &Command) -> Result<ApplyOutcome> {
        match cmd {
            Command::CreateRoot => {
                let id = self.fresh();
                let desc = LogDescriptor::root(id);
                self.logs.insert(id, Log { desc, start: 0, entries: Vec::new(), children: Vec::new() });
                Ok(ApplyOutcome::Created(id))
            }
            Command::SequenceBatch { object_id, records } => self.sequence(*object_id, records).map(ApplyOutcome::Sequenced),
            Command::CreateCFork { parent, promotable } => {
                let tail = self.live(*parent)?.tail();
                if self.frozen(*parent) {
                    return Err(self.blocked(*parent));
                }
                Ok(ApplyOutcome::Created(self.add_fork(*parent, LogKind::CFork, tail, *promotable)))
            }
            Command::CreateSFork { parent, past } => {
                let tail = self.live(*parent)?.tail();
                if let Some(p) = past {
                    if p.0 >= tail {
                        return Err(EngineError::out_of_range(*parent, *p, p.next(), Position(tail)));
                    }
                }
                if self.frozen(*parent) {
                    return Err(self.blocked(*parent));
                }
                let shared = past.map_or(tail, |p| p.0 + 1);
                if let Some(e) = self.earliest(*parent) {
                    if shared > e {
                        return Err(EngineError::blocked(*parent, Position(e)));
                    }
                }
                Ok(ApplyOutcome::Created(self.add_fork(*parent, LogKind::SFork, shared, false)))
            }
            Command::Promote { child } => self.promote(*child).map(|squashed| ApplyOutcome::Promoted { squashed }),
            Command::Squash { log } => self.squash(*log).map(ApplyOutcome::Squashed),
        }
    }

    fn read_meta(&self, log: LogId, from: Position, to: Position) -> Result<Vec<ObjectRef>> {
        let tail = self.live(log)?.tail();
        if from > to || to.0 > tail {
            return Err(EngineError::out_of_range(log, from, to, Position(tail)));
        }
        if let Some(limit) = self.limit(log) {
            if to.0 > limit {
                return Err(EngineError::blocked(log, Position(limit)));
            }
        }
        Ok((from.0..to.0).map(|p| self.resolve(log, p)).collect())
    }

    fn get_tail(&self, log: LogId) -> Result<Assigned> {
        let tail = self.live(log)?.tail();
        Ok(match self.earliest(log) {
            Some(e) if tail >= e => Assigned::Withheld,
            _ => Assigned::At(Position(tail)),
        })
    }

    fn resolve_all(&self, log: LogId) -> Result<Vec<ObjectRef>> {
        let tail = self.live(log)?.tail();
        Ok((0..tail).map(|p| self.resolve(log, p)).collect())
    }

    fn live_logs(&self) -> Vec<LogId> {
        self.logs.values().filter(|l| l.desc.status == LogStatus::Live).map(|l| l.desc.id).collect()
    }

    fn index_entries(&self) -> u64 {
        self.logs.values().map(|l| l.entries.len() as u64).sum()
    }

    fn tail_work(&self) -> u64 {
        self.copies
    }
}
