//! Lazy tail tree.
//!
//! Every log in the inheritance forest contributes an entry and an exit
//! marker to an Euler tour; a log's subtree is the contiguous tour range
//! between its two markers. The tour lives in an implicit-key AVL tree whose
//! nodes carry lazy additive tags, so adding to every tail in a subtree,
//! freezing a subtree and querying one tail are all logarithmic in the number
//! of live logs.
//!
//! Tail and freeze values are only meaningful on entry markers. Exit markers
//! are structural and accumulate garbage under range adds, which is ignored.

use std::cell::Cell;
use std::collections::BTreeMap;

use crate::error::{EngineError, Result};
use crate::types::{LogId, Position};

/// Operations the metadata state machine needs from a tail store. The lazy
/// tree is the production implementation; the eager per-node store in the
/// harness is its oracle.
pub trait TailForest {
    /// Start a new inheritance tree.
    fn insert_root(&mut self, log: LogId, initial_tail: Position);
    /// Add `child` as the last child of `parent`.
    fn insert_child(&mut self, parent: LogId, child: LogId, initial_tail: Position) -> Result<()>;
    /// Add `delta` to the tail of every log in `log`'s subtree.
    fn subtree_add(&mut self, log: LogId, delta: i64) -> Result<()>;
    /// Add `delta` to `log`'s own tail only.
    fn point_add(&mut self, log: LogId, delta: i64) -> Result<()>;
    fn tail_query(&self, log: LogId) -> Result<Position>;
    fn subtree_freeze(&mut self, log: LogId, delta: i64) -> Result<()>;
    fn point_freeze(&mut self, log: LogId, delta: i64) -> Result<()>;
    fn freeze_count(&self, log: LogId) -> Result<u64>;
    fn frozen_query(&self, log: LogId) -> Result<bool> {
        Ok(self.freeze_count(log)? > 0)
    }
    /// Detach `log` and all its descendants, returning them in tour order.
    fn remove_subtree(&mut self, log: LogId) -> Result<Vec<LogId>>;
    /// Remove `log` alone; its children take its place under its parent.
    fn splice_out(&mut self, log: LogId) -> Result<()>;
    fn contains(&self, log: LogId) -> bool;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Cumulative count of internal nodes visited, for complexity assertions.
    fn touched(&self) -> u64;
}

const NIL: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    log: LogId,
    entry: bool,
    left: u32,
    right: u32,
    parent: u32,
    height: u8,
    size: u32,
    tail: i64,
    freeze: i64,
    // Pending adds for every element of this node's subtree, itself included.
    lazy_tail: i64,
    lazy_freeze: i64,
}

#[derive(Debug, Default)]
pub struct LazyTailTree {
    nodes: Vec<Node>,
    free: Vec<u32>,
    root: u32,
    handles: BTreeMap<LogId, (u32, u32)>,
    touched: Cell<u64>,
}

impl LazyTailTree {
    pub fn new() -> Self {
        LazyTailTree { root: NIL, ..Default::default() }
    }

    fn touch(&self) {
        self.touched.set(self.touched.get() + 1);
    }

    fn alloc(&mut self, log: LogId, entry: bool, tail: i64) -> u32 {
        let node =
            Node { log, entry, left: NIL, right: NIL, parent: NIL, height: 1, size: 1, tail, freeze: 0, lazy_tail: 0, lazy_freeze: 0 };
        match self.free.pop() {
            Some(i) => {
                self.nodes[i as usize] = node;
                i
            }
            None => {
                self.nodes.push(node);
                (self.nodes.len() - 1) as u32
            }
        }
    }

    fn n(&self, i: u32) -> &Node {
        &self.nodes[i as usize]
    }

    fn nm(&mut self, i: u32) -> &mut Node {
        &mut self.nodes[i as usize]
    }

    fn size(&self, i: u32) -> u32 {
        if i == NIL {
            0
        } else {
            self.n(i).size
        }
    }

    fn height(&self, i: u32) -> u8 {
        if i == NIL {
            0
        } else {
            self.n(i).height
        }
    }

    fn pull(&mut self, i: u32) {
        let (l, r) = (self.n(i).left, self.n(i).right);
        let size = self.size(l) + self.size(r) + 1;
        let height = self.height(l).max(self.height(r)) + 1;
        let node = self.nm(i);
        node.size = size;
        node.height = height;
    }

    fn push(&mut self, i: u32) {
        self.touch();
        let (lt, lf) = (self.n(i).lazy_tail, self.n(i).lazy_freeze);
        if lt == 0 && lf == 0 {
            return;
        }
        let (l, r) = (self.n(i).left, self.n(i).right);
        {
            let node = self.nm(i);
            node.tail += lt;
            node.freeze += lf;
            node.lazy_tail = 0;
            node.lazy_freeze = 0;
        }
        for c in [l, r] {
            if c != NIL {
                let child = self.nm(c);
                child.lazy_tail += lt;
                child.lazy_freeze += lf;
            }
        }
    }

    fn set_left(&mut self, i: u32, c: u32) {
        self.nm(i).left = c;
        if c != NIL {
            self.nm(c).parent = i;
        }
    }

    fn set_right(&mut self, i: u32, c: u32) {
        self.nm(i).right = c;
        if c != NIL {
            self.nm(c).parent = i;
        }
    }

    fn detach(&mut self, i: u32) -> u32 {
        if i != NIL {
            self.nm(i).parent = NIL;
        }
        i
    }

    fn rotate_left(&mut self, x: u32) -> u32 {
        self.push(x);
        let y = self.n(x).right;
        self.push(y);
        let b = self.n(y).left;
        self.set_right(x, b);
        self.pull(x);
        self.set_left(y, x);
        self.pull(y);
        self.detach(y)
    }

    fn rotate_right(&mut self, x: u32) -> u32 {
        self.push(x);
        let y = self.n(x).left;
        self.push(y);
        let b = self.n(y).right;
        self.set_left(x, b);
        self.pull(x);
        self.set_right(y, x);
        self.pull(y);
        self.detach(y)
    }

    fn balance_factor(&self, i: u32) -> i32 {
        i32::from(self.height(self.n(i).left)) - i32::from(self.height(self.n(i).right))
    }

    /// Restore the AVL property at `i`, whose children differ in height by at most 2.
    fn rebalance(&mut self, i: u32) -> u32 {
        self.touch();
        self.pull(i);
        let bf = self.balance_factor(i);
        if bf > 1 {
            let l = self.n(i).left;
            if self.balance_factor(l) < 0 {
                self.push(i);
                let nl = self.rotate_left(l);
                self.set_left(i, nl);
            }
            self.rotate_right(i)
        } else if bf < -1 {
            let r = self.n(i).right;
            if self.balance_factor(r) > 0 {
                self.push(i);
                let nr = self.rotate_right(r);
                self.set_right(i, nr);
            }
            self.rotate_left(i)
        } else {
            i
        }
    }

    /// Concatenate `l`, the single detached node `k`, and `r`.
    fn join(&mut self, l: u32, k: u32, r: u32) -> u32 {
        let (hl, hr) = (self.height(l), self.height(r));
        let t = if hl > hr + 1 {
            self.join_right(l, k, r)
        } else if hr > hl + 1 {
            self.join_left(l, k, r)
        } else {
            self.touch();
            self.set_left(k, l);
            self.set_right(k, r);
            self.pull(k);
            k
        };
        self.detach(t)
    }

    fn join_right(&mut self, l: u32, k: u32, r: u32) -> u32 {
        self.touch();
        if self.height(l) <= self.height(r) + 1 {
            self.set_left(k, l);
            self.set_right(k, r);
            self.pull(k);
            return k;
        }
        self.push(l);
        let c = self.n(l).right;
        let sub = self.join_right(c, k, r);
        self.set_right(l, sub);
        self.rebalance(l)
    }

    fn join_left(&mut self, l: u32, k: u32, r: u32) -> u32 {
        self.touch();
        if self.height(r) <= self.height(l) + 1 {
            self.set_left(k, l);
            self.set_right(k, r);
            self.pull(k);
            return k;
        }
        self.push(r);
        let c = self.n(r).left;
        let sub = self.join_left(l, k, c);
        self.set_left(r, sub);
        self.rebalance(r)
    }

    /// Split `t` into its first `k` elements and the rest.
    fn split(&mut self, t: u32, k: u32) -> (u32, u32) {
        if t == NIL {
            return (NIL, NIL);
        }
        self.push(t);
        let (l, r) = (self.detach(self.n(t).left), self.detach(self.n(t).right));
        let node = self.nm(t);
        node.left = NIL;
        node.right = NIL;
        node.parent = NIL;
        let ls = self.size(l);
        if k <= ls {
            let (a, b) = self.split(l, k);
            let right = self.join(b, t, r);
            (a, right)
        } else {
            let (a, b) = self.split(r, k - ls - 1);
            let left = self.join(l, t, a);
            (left, b)
        }
    }

    fn merge(&mut self, l: u32, r: u32) -> u32 {
        if l == NIL {
            return self.detach(r);
        }
        if r == NIL {
            return self.detach(l);
        }
        let n = self.size(l);
        let (rest, last) = self.split(l, n - 1);
        self.join(rest, last, r)
    }

    fn index_of(&self, mut i: u32) -> u32 {
        self.touch();
        let mut idx = self.size(self.n(i).left);
        loop {
            let p = self.n(i).parent;
            if p == NIL {
                return idx;
            }
            self.touch();
            if self.n(p).right == i {
                idx += self.size(self.n(p).left) + 1;
            }
            i = p;
        }
    }

    /// Own value plus every pending tag on the path to the root.
    fn effective(&self, mut i: u32) -> (i64, i64) {
        self.touch();
        let (mut tail, mut freeze) = (self.n(i).tail, self.n(i).freeze);
        loop {
            let node = self.n(i);
            tail += node.lazy_tail;
            freeze += node.lazy_freeze;
            if node.parent == NIL {
                return (tail, freeze);
            }
            self.touch();
            i = node.parent;
        }
    }

    fn range_add(&mut self, x: u32, lo: u32, l: u32, r: u32, dt: i64, df: i64) {
        self.touch();
        let hi = lo + self.size(x) - 1;
        if l <= lo && hi <= r {
            let node = self.nm(x);
            node.lazy_tail += dt;
            node.lazy_freeze += df;
            return;
        }
        let (left, right) = (self.n(x).left, self.n(x).right);
        let own = lo + self.size(left);
        if l <= own && own <= r {
            let node = self.nm(x);
            node.tail += dt;
            node.freeze += df;
        }
        if left != NIL && l < own {
            self.range_add(left, lo, l, r, dt, df);
        }
        if right != NIL && r > own {
            self.range_add(right, own + 1, l, r, dt, df);
        }
    }

    fn handles(&self, log: LogId) -> Result<(u32, u32)> {
        self.handles.get(&log).copied().ok_or_else(|| EngineError::unknown_log(log))
    }

    fn subtree_range(&self, log: LogId) -> Result<(u32, u32)> {
        let (en, ex) = self.handles(log)?;
        Ok((self.index_of(en), self.index_of(ex)))
    }

    fn add_range(&mut self, l: u32, r: u32, dt: i64, df: i64) {
        let root = self.root;
        self.range_add(root, 0, l, r, dt, df);
    }

    fn collect(&self, t: u32, out: &mut Vec<u32>) {
        if t == NIL {
            return;
        }
        self.collect(self.n(t).left, out);
        out.push(t);
        self.collect(self.n(t).right, out);
    }

    fn remove_range(&mut self, i: u32, j: u32) -> Vec<u32> {
        let root = self.root;
        let (a, b) = self.split(root, i);
        let (mid, c) = self.split(b, j - i + 1);
        self.root = self.merge(a, c);
        let mut out = Vec::with_capacity(self.size(mid) as usize);
        self.collect(mid, &mut out);
        self.free.extend_from_slice(&out);
        out
    }

    /// The tour as (log, is_entry) pairs, for structural assertions in tests.
    pub fn tour(&self) -> Vec<(LogId, bool)> {
        let mut ids = Vec::new();
        self.collect(self.root, &mut ids);
        ids.into_iter().map(|i| (self.n(i).log, self.n(i).entry)).collect()
    }

    /// Height of the underlying balanced tree.
    pub fn depth(&self) -> u8 {
        self.height(self.root)
    }

    #[cfg(test)]
    fn check_invariants(&self) {
        fn walk(t: &LazyTailTree, i: u32, parent: u32) -> (u32, u8) {
            if i == NIL {
                return (0, 0);
            }
            let n = t.n(i);
            assert_eq!(n.parent, parent, "parent link");
            let (ls, lh) = walk(t, n.left, i);
            let (rs, rh) = walk(t, n.right, i);
            assert_eq!(n.size, ls + rs + 1, "size");
            assert_eq!(n.height, lh.max(rh) + 1, "height");
            assert!((i32::from(lh) - i32::from(rh)).abs() <= 1, "avl balance");
            (n.size, n.height)
        }
        walk(self, self.root, NIL);
    }
}

impl TailForest for LazyTailTree {
    fn insert_root(&mut self, log: LogId, initial_tail: Position) {
        debug_assert!(!self.handles.contains_key(&log));
        let en = self.alloc(log, true, initial_tail.0 as i64);
        let ex = self.alloc(log, false, 0);
        let root = self.root;
        let t = self.join(root, en, NIL);
        self.root = self.join(t, ex, NIL);
        self.handles.insert(log, (en, ex));
    }

    fn insert_child(&mut self, parent: LogId, child: LogId, initial_tail: Position) -> Result<()> {
        let (_, pex) = self.handles(parent)?;
        debug_assert!(!self.handles.contains_key(&child));
        let at = self.index_of(pex);
        let en = self.alloc(child, true, initial_tail.0 as i64);
        let ex = self.alloc(child, false, 0);
        let root = self.root;
        let (a, b) = self.split(root, at);
        let t = self.join(a, en, NIL);
        self.root = self.join(t, ex, b);
        self.handles.insert(child, (en, ex));
        Ok(())
    }

    fn subtree_add(&mut self, log: LogId, delta: i64) -> Result<()> {
        let (i, j) = self.subtree_range(log)?;
        self.add_range(i, j, delta, 0);
        Ok(())
    }

    fn point_add(&mut self, log: LogId, delta: i64) -> Result<()> {
        let (en, _) = self.handles(log)?;
        let i = self.index_of(en);
        self.add_range(i, i, delta, 0);
        Ok(())
    }

    fn tail_query(&self, log: LogId) -> Result<Position> {
        let (en, _) = self.handles(log)?;
        let (tail, _) = self.effective(en);
        debug_assert!(tail >= 0);
        Ok(Position(tail as u64))
    }

    fn subtree_freeze(&mut self, log: LogId, delta: i64) -> Result<()> {
        let (i, j) = self.subtree_range(log)?;
        self.add_range(i, j, 0, delta);
        Ok(())
    }

    fn point_freeze(&mut self, log: LogId, delta: i64) -> Result<()> {
        let (en, _) = self.handles(log)?;
        let i = self.index_of(en);
        self.add_range(i, i, 0, delta);
        Ok(())
    }

    fn freeze_count(&self, log: LogId) -> Result<u64> {
        let (en, _) = self.handles(log)?;
        let (_, freeze) = self.effective(en);
        debug_assert!(freeze >= 0, "freeze count of {log} went negative");
        Ok(freeze.max(0) as u64)
    }

    fn remove_subtree(&mut self, log: LogId) -> Result<Vec<LogId>> {
        let (i, j) = self.subtree_range(log)?;
        let removed = self.remove_range(i, j);
        let logs: Vec<LogId> = removed.into_iter().filter(|&n| self.n(n).entry).map(|n| self.n(n).log).collect();
        for l in &logs {
            self.handles.remove(l);
        }
        Ok(logs)
    }

    fn splice_out(&mut self, log: LogId) -> Result<()> {
        let (en, ex) = self.handles(log)?;
        let i = self.index_of(en);
        self.remove_range(i, i);
        let j = self.index_of(ex);
        self.remove_range(j, j);
        self.handles.remove(&log);
        Ok(())
    }

    fn contains(&self, log: LogId) -> bool {
        self.handles.contains_key(&log)
    }

    fn len(&self) -> usize {
        self.handles.len()
    }

    fn touched(&self) -> u64 {
        self.touched.get()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(v: u64) -> LogId {
        LogId(v)
    }

    fn tail(t: &LazyTailTree, v: u64) -> u64 {
        t.tail_query(l(v)).unwrap().0
    }

    #[test]
    fn root_insert_and_query() {
        let mut t = LazyTailTree::new();
        t.insert_root(l(1), Position(0));
        assert_eq!(tail(&t, 1), 0);
        for _ in 0..3 {
            t.subtree_add(l(1), 1).unwrap();
        }
        assert_eq!(tail(&t, 1), 3);
    }

    #[test]
    fn roots_are_independent() {
        let mut t = LazyTailTree::new();
        t.insert_root(l(1), Position(0));
        t.insert_root(l(2), Position(2));
        t.subtree_add(l(1), 5).unwrap();
        assert_eq!((tail(&t, 1), tail(&t, 2)), (5, 2));
    }

    #[test]
    fn grandparent_child_tails() {
        // G tail 1 when cForked into R; r0 on R; g1 on G; r1 on R; g2 on G.
        let (g, r) = (1, 2);
        let mut t = LazyTailTree::new();
        t.insert_root(l(g), Position(0));
        t.subtree_add(l(g), 1).unwrap();
        t.insert_child(l(g), l(r), Position(1)).unwrap();
        assert_eq!(tail(&t, r), 1);
        t.subtree_add(l(r), 1).unwrap();
        t.subtree_add(l(g), 1).unwrap();
        assert_eq!(tail(&t, r), 3);
        t.subtree_add(l(r), 1).unwrap();
        t.subtree_add(l(g), 1).unwrap();
        assert_eq!((tail(&t, r), tail(&t, g)), (5, 3));
    }

    #[test]
    fn children_follow_parent_adds() {
        let mut t = LazyTailTree::new();
        t.insert_root(l(1), Position(4));
        for c in 2..6 {
            t.insert_child(l(1), l(c), Position(4)).unwrap();
        }
        t.subtree_add(l(1), 1).unwrap();
        for c in 1..6 {
            assert_eq!(tail(&t, c), 5);
        }
        t.subtree_add(l(3), 1).unwrap();
        assert_eq!(tail(&t, 3), 6);
        assert_eq!(tail(&t, 2), 5);
    }

    #[test]
    fn tour_is_nested() {
        let mut t = LazyTailTree::new();
        t.insert_root(l(1), Position(0));
        t.insert_child(l(1), l(2), Position(0)).unwrap();
        t.insert_child(l(1), l(3), Position(0)).unwrap();
        t.insert_child(l(2), l(4), Position(0)).unwrap();
        let tour: Vec<_> = t.tour().into_iter().map(|(x, e)| (x.0, e)).collect();
        assert_eq!(tour, vec![(1, true), (2, true), (4, true), (4, false), (2, false), (3, true), (3, false), (1, false)]);
    }

    #[test]
    fn freeze_and_promotable_exemption() {
        let mut t = LazyTailTree::new();
        t.insert_root(l(1), Position(0));
        t.insert_child(l(1), l(2), Position(0)).unwrap(); // promotable
        t.insert_child(l(1), l(3), Position(0)).unwrap(); // sibling
        t.subtree_freeze(l(1), 1).unwrap();
        assert!(t.frozen_query(l(3)).unwrap());
        t.subtree_freeze(l(2), -1).unwrap();
        assert!(!t.frozen_query(l(2)).unwrap());
        assert!(t.frozen_query(l(3)).unwrap());
        t.subtree_freeze(l(1), -1).unwrap();
        t.subtree_freeze(l(2), 1).unwrap();
        for x in 1..4 {
            assert_eq!(t.freeze_count(l(x)).unwrap(), 0);
        }
    }

    #[test]
    fn remove_subtree_returns_members() {
        let mut t = LazyTailTree::new();
        t.insert_root(l(1), Position(0));
        t.insert_child(l(1), l(2), Position(0)).unwrap();
        t.insert_child(l(2), l(3), Position(0)).unwrap();
        t.insert_child(l(3), l(4), Position(0)).unwrap();
        t.insert_child(l(2), l(5), Position(0)).unwrap();
        t.insert_child(l(1), l(6), Position(0)).unwrap();
        t.subtree_add(l(1), 7).unwrap();
        assert_eq!(t.remove_subtree(l(6)).unwrap(), vec![l(6)]);
        let gone = t.remove_subtree(l(2)).unwrap();
        assert_eq!(gone, vec![l(2), l(3), l(4), l(5)]);
        assert_eq!(tail(&t, 1), 7);
        assert_eq!(t.len(), 1);
        assert!(t.tail_query(l(3)).is_err());
        t.check_invariants();
    }

    #[test]
    fn splice_out_keeps_grandchildren() {
        let mut t = LazyTailTree::new();
        t.insert_root(l(1), Position(0));
        t.insert_child(l(1), l(2), Position(3)).unwrap();
        t.insert_child(l(2), l(3), Position(5)).unwrap();
        t.splice_out(l(2)).unwrap();
        t.subtree_add(l(1), 1).unwrap();
        assert_eq!(tail(&t, 3), 6);
        let tour: Vec<_> = t.tour().into_iter().map(|(x, e)| (x.0, e)).collect();
        assert_eq!(tour, vec![(1, true), (3, true), (3, false), (1, false)]);
    }

    #[test]
    fn unknown_logs_are_rejected() {
        let mut t = LazyTailTree::new();
        assert!(t.subtree_add(l(9), 1).is_err());
        assert!(t.insert_child(l(9), l(10), Position(0)).is_err());
        assert!(t.remove_subtree(l(9)).is_err());
    }

    #[test]
    fn deep_chain_stays_balanced() {
        let mut t = LazyTailTree::new();
        t.insert_root(l(1), Position(0));
        for c in 2..=1000 {
            t.insert_child(l(c - 1), l(c), Position(0)).unwrap();
        }
        t.check_invariants();
        // 2000 markers: an AVL tree of that size is at most ~1.44 log2 n tall.
        assert!(t.depth() <= 16, "depth {}", t.depth());
        let before = t.touched();
        t.subtree_add(l(1), 1).unwrap();
        let cost = t.touched() - before;
        assert!(cost <= 8 * 11 + 8, "cost {cost}");
        assert_eq!(tail(&t, 1000), 1);
    }

    #[test]
    fn wide_fanout_stays_balanced() {
        let mut t = LazyTailTree::new();
        t.insert_root(l(1), Position(0));
        for c in 2..=2000 {
            let parent = if c % 3 == 0 { l(c / 3) } else { l(1) };
            t.insert_child(parent, l(c), Position(0)).unwrap();
            t.subtree_add(parent, 1).unwrap();
        }
        t.check_invariants();
        for _ in 0..50 {
            t.remove_subtree(l(t.tour()[1].0 .0)).unwrap();
        }
        t.check_invariants();
    }
}
