//! Eager tail store: every tail and freeze counter is a plain per-node value
//! and a subtree update walks every descendant. No lazy tree.

use std::collections::BTreeMap;

use crate::error::{EngineError, Result};
use crate::ltt::TailForest;
use crate::types::{LogId, Position};

#[derive(Debug, Clone)]
struct Slot {
    parent: Option<LogId>,
    children: Vec<LogId>,
    tail: i64,
    freeze: i64,
}

#[derive(Debug, Default, Clone)]
pub struct EagerTails {
    slots: BTreeMap<LogId, Slot>,
    // Tails/freeze counters written, the per-append cost the lazy tree avoids.
    touched: u64,
}

impl EagerTails {
    pub fn new() -> Self {
        Self::default()
    }

    fn slot(&self, log: LogId) -> Result<&Slot> {
        self.slots.get(&log).ok_or_else(|| EngineError::unknown_log(log))
    }

    fn subtree(&self, log: LogId) -> Result<Vec<LogId>> {
        self.slot(log)?;
        let mut out = Vec::new();
        let mut stack = vec![log];
        while let Some(x) = stack.pop() {
            out.push(x);
            let kids = &self.slots[&x].children;
            stack.extend(kids.iter().rev().copied());
        }
        Ok(out)
    }

    fn for_subtree(&mut self, log: LogId, mut f: impl FnMut(&mut Slot)) -> Result<()> {
        for x in self.subtree(log)? {
            self.touched += 1;
            f(self.slots.get_mut(&x).expect("subtree member"));
        }
        Ok(())
    }

    pub fn children(&self, log: LogId) -> Result<&[LogId]> {
        Ok(&self.slot(log)?.children)
    }
}

impl TailForest for EagerTails {
    fn insert_root(&mut self, log: LogId, initial_tail: Position) {
        self.slots.insert(log, Slot { parent: None, children: Vec::new(), tail: initial_tail.0 as i64, freeze: 0 });
    }

    fn insert_child(&mut self, parent: LogId, child: LogId, initial_tail: Position) -> Result<()> {
        self.slots.get_mut(&parent).ok_or_else(|| EngineError::unknown_log(parent))?.children.push(child);
        self.slots.insert(child, Slot { parent: Some(parent), children: Vec::new(), tail: initial_tail.0 as i64, freeze: 0 });
        Ok(())
    }

    fn subtree_add(&mut self, log: LogId, delta: i64) -> Result<()> {
        self.for_subtree(log, |s| s.tail += delta)
    }

    fn point_add(&mut self, log: LogId, delta: i64) -> Result<()> {
        let s = self.slots.get_mut(&log).ok_or_else(|| EngineError::unknown_log(log))?;
        s.tail += delta;
        self.touched += 1;
        Ok(())
    }

    fn tail_query(&self, log: LogId) -> Result<Position> {
        Ok(Position(self.slot(log)?.tail as u64))
    }

    fn subtree_freeze(&mut self, log: LogId, delta: i64) -> Result<()> {
        self.for_subtree(log, |s| s.freeze += delta)
    }

    fn point_freeze(&mut self, log: LogId, delta: i64) -> Result<()> {
        let s = self.slots.get_mut(&log).ok_or_else(|| EngineError::unknown_log(log))?;
        s.freeze += delta;
        self.touched += 1;
        Ok(())
    }

    fn freeze_count(&self, log: LogId) -> Result<u64> {
        Ok(self.slot(log)?.freeze.max(0) as u64)
    }

    fn remove_subtree(&mut self, log: LogId) -> Result<Vec<LogId>> {
        let members = self.subtree(log)?;
        if let Some(p) = self.slots[&log].parent {
            self.slots.get_mut(&p).expect("parent").children.retain(|c| *c != log);
        }
        for m in &members {
            self.slots.remove(m);
        }
        Ok(members)
    }

    fn splice_out(&mut self, log: LogId) -> Result<()> {
        let slot = self.slots.remove(&log).ok_or_else(|| EngineError::unknown_log(log))?;
        for c in &slot.children {
            self.slots.get_mut(c).expect("child").parent = slot.parent;
        }
        if let Some(p) = slot.parent {
            let siblings = &mut self.slots.get_mut(&p).expect("parent").children;
            let at = siblings.iter().position(|c| *c == log).expect("listed child");
            siblings.splice(at..=at, slot.children.iter().copied());
        }
        Ok(())
    }

    fn contains(&self, log: LogId) -> bool {
        self.slots.contains_key(&log)
    }

    fn len(&self) -> usize {
        self.slots.len()
    }

    fn touched(&self) -> u64 {
        self.touched
    }
}
