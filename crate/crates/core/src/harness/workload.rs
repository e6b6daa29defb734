//! Seeded workload generation. The same seed always yields the same ops.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::command::{Command, RecordMeta};
use crate::metastate::ForestState;
use crate::store::OBJECT_HEADER_LEN;
use crate::types::{LogId, LogKind, ObjectId, Position};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Cmd(Command),
    Read { log: LogId, from: Position, to: Position },
    Tail { log: LogId },
}

/// Relative weights of each op kind.
#[derive(Debug, Clone, Copy)]
pub struct Weights {
    pub append: u32,
    pub read: u32,
    pub tail: u32,
    pub cfork: u32,
    pub sfork: u32,
    pub promote: u32,
    pub squash: u32,
    pub root: u32,
    pub invalid: u32,
}

impl Default for Weights {
    fn default() -> Self {
        Weights { append: 55, read: 12, tail: 5, cfork: 12, sfork: 4, promote: 3, squash: 4, root: 1, invalid: 4 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WorkloadConfig {
    pub ops: usize,
    pub seed: u64,
    pub weights: Weights,
    /// Fraction of cForks created promotable.
    pub promotable: f64,
    /// Chain of nested cForks built before the random phase.
    pub prelude_depth: usize,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig { ops: 10_000, seed: 0, weights: Weights::default(), promotable: 0.1, prelude_depth: 5 }
    }
}

#[derive(Debug, Clone)]
pub struct Workload {
    pub ops: Vec<Op>,
    pub forks_created: usize,
    /// Deepest descriptor chain reached (root = 0).
    pub max_depth: usize,
    pub failed_commands: usize,
}

struct Gen {
    rng: ChaCha8Rng,
    weights: Weights,
    promotable: f64,
    shadow: ForestState,
    depth: BTreeMap<LogId, usize>,
    out: Workload,
}

impl Gen {
    fn live(&self) -> Vec<LogId> {
        self.shadow.live_logs()
    }

    fn pick(&mut self, logs: &[LogId]) -> Option<LogId> {
        logs.choose(&mut self.rng).copied()
    }

    fn tail(&self, log: LogId) -> u64 {
        self.shadow.raw_tail(log).map_or(0, |p| p.0)
    }

    fn emit(&mut self, op: Op) {
        if let Op::Cmd(cmd) = &op {
            match self.shadow.apply(cmd) {
                Ok(outcome) => {
                    if let Some(id) = outcome.created() {
                        let d = self.shadow.descriptor(id).expect("created");
                        let depth = d.parent.map_or(0, |p| self.depth.get(&p).copied().unwrap_or(0) + 1);
                        if d.kind != LogKind::Root {
                            self.out.forks_created += 1;
                        }
                        self.depth.insert(id, depth);
                        self.out.max_depth = self.out.max_depth.max(depth);
                    }
                    if let crate::metastate::ApplyOutcome::Promoted { .. } = outcome {
                        // Re-parented grandchildren move up one level.
                        for l in self.shadow.live_logs() {
                            let d = self.shadow.descriptor(l).expect("live");
                            let depth = d.parent.map_or(0, |p| self.depth[&p] + 1);
                            self.depth.insert(l, depth);
                        }
                    }
                }
                Err(_) => self.out.failed_commands += 1,
            }
        }
        self.out.ops.push(op);
    }

    fn batch(&mut self, logs: &[LogId]) -> Command {
        let mut offset = OBJECT_HEADER_LEN as u64;
        let records = logs
            .iter()
            .map(|log| {
                let len = self.rng.gen_range(1..=64u32);
                let r = RecordMeta { log: *log, byte_offset: offset + 12, byte_length: len };
                offset += 12 + len as u64;
                r
            })
            .collect();
        Command::SequenceBatch { object_id: ObjectId::from_rng(&mut self.rng), records }
    }

    fn fork_parent(&mut self, live: &[LogId]) -> Option<LogId> {
        if self.rng.gen_bool(0.35) {
            // Lean towards deep logs so nesting keeps growing.
            let max = live.iter().map(|l| self.depth[l]).max()?;
            let deep: Vec<LogId> = live.iter().copied().filter(|l| self.depth[l] + 1 >= max).collect();
            self.pick(&deep)
        } else {
            self.pick(live)
        }
    }

    fn random_op(&mut self) {
        let w = self.out_weights();
        let total: u32 = w.iter().sum();
        let mut roll = self.rng.gen_range(0..total);
        let mut kind = 0;
        while roll >= w[kind] {
            roll -= w[kind];
            kind += 1;
        }
        let live = self.live();
        let Some(any) = self.pick(&live) else {
            self.emit(Op::Cmd(Command::CreateRoot));
            return;
        };
        match kind {
            0 => {
                let n = *[1usize, 1, 1, 2, 3].choose(&mut self.rng).expect("non-empty");
                let logs: Vec<LogId> = (0..n).map(|_| self.pick(&live).expect("live")).collect();
                let cmd = self.batch(&logs);
                self.emit(Op::Cmd(cmd));
            }
            1 => {
                let t = self.tail(any);
                let to = self.rng.gen_range(0..=t);
                let from = self.rng.gen_range(0..=to);
                self.emit(Op::Read { log: any, from: Position(from), to: Position(to) });
            }
            2 => self.emit(Op::Tail { log: any }),
            3 => {
                let parent = self.fork_parent(&live).expect("live");
                let promotable = self.rng.gen_bool(self.promotable);
                self.emit(Op::Cmd(Command::CreateCFork { parent, promotable }));
            }
            4 => {
                let parent = self.fork_parent(&live).expect("live");
                let t = self.tail(parent);
                let past = (t > 0 && self.rng.gen_bool(0.5)).then(|| Position(self.rng.gen_range(0..t)));
                self.emit(Op::Cmd(Command::CreateSFork { parent, past }));
            }
            5 => {
                let promotable: Vec<LogId> =
                    live.iter().copied().filter(|l| self.shadow.descriptor(*l).is_some_and(|d| d.is_promotable_cfork())).collect();
                let child = self.pick(&promotable).unwrap_or(any);
                self.emit(Op::Cmd(Command::Promote { child }));
            }
            6 => {
                let forks: Vec<LogId> =
                    live.iter().copied().filter(|l| self.shadow.descriptor(*l).is_some_and(|d| d.kind != LogKind::Root)).collect();
                if let Some(log) = self.pick(&forks) {
                    self.emit(Op::Cmd(Command::Squash { log }));
                }
            }
            7 => self.emit(Op::Cmd(Command::CreateRoot)),
            _ => self.invalid_op(any),
        }
    }

    fn out_weights(&self) -> [u32; 9] {
        let w = self.weights;
        [w.append, w.read, w.tail, w.cfork, w.sfork, w.promote, w.squash, w.root, w.invalid]
    }

    fn invalid_op(&mut self, any: LogId) {
        let everything: Vec<LogId> = self.shadow.descriptors().map(|d| d.id).collect();
        let dead: Vec<LogId> = self.shadow.descriptors().filter(|d| !d.is_live()).map(|d| d.id).collect();
        let unknown = LogId(everything.len() as u64 + 1000);
        let t = self.tail(any);
        let op = match self.rng.gen_range(0..8) {
            0 => Op::Cmd(Command::Squash { log: self.shadow.root_of(any).unwrap_or(any) }),
            1 => Op::Cmd(Command::Promote { child: any }),
            2 => {
                let cmd = self.batch(&[unknown]);
                Op::Cmd(cmd)
            }
            3 => Op::Cmd(Command::CreateSFork { parent: any, past: Some(Position(t + self.rng.gen_range(0..3))) }),
            4 => Op::Read { log: any, from: Position(0), to: Position(t + 1) },
            5 => Op::Read { log: any, from: Position(t.min(1)), to: Position(0) },
            6 => {
                let log = self.pick(&dead).unwrap_or(unknown);
                let cmd = self.batch(&[log]);
                Op::Cmd(cmd)
            }
            _ => Op::Cmd(Command::SequenceBatch {
                object_id: ObjectId::from_rng(&mut self.rng),
                records: vec![RecordMeta { log: any, byte_offset: 24, byte_length: 0 }],
            }),
        };
        self.emit(op);
    }
}

pub fn generate(cfg: &WorkloadConfig) -> Workload {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        weights: cfg.weights,
        promotable: cfg.promotable,
        shadow: ForestState::new(),
        depth: BTreeMap::new(),
        out: Workload { ops: Vec::with_capacity(cfg.ops), forks_created: 0, max_depth: 0, failed_commands: 0 },
    };
    g.emit(Op::Cmd(Command::CreateRoot));
    g.emit(Op::Cmd(Command::CreateRoot));
    let mut chain = LogId(1);
    for _ in 0..cfg.prelude_depth {
        let cmd = g.batch(&[chain]);
        g.emit(Op::Cmd(cmd));
        g.emit(Op::Cmd(Command::CreateCFork { parent: chain, promotable: false }));
        chain = LogId(g.shadow.descriptors().map(|d| d.id.0).max().expect("created"));
    }
    while g.out.ops.len() < cfg.ops {
        g.random_op();
    }
    g.out.ops.truncate(cfg.ops);
    g.out
}

/// Metadata-footprint workload: one root, `forks` cForks (some nested)
/// created during the first tenth of the appends, `records` appends mostly
/// to the root.
#[derive(Debug, Clone)]
pub struct MemoryWorkload {
    pub commands: Vec<Command>,
    pub records: u64,
    /// Copies a copy-on-append index would hold, counted here with an
    /// independent parent map: each record costs 1 + its log's live
    /// continuously inheriting descendants at append time.
    pub expected_naive_entries: u64,
}

pub fn memory_workload(records: u64, forks: usize, seed: u64) -> MemoryWorkload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let root = LogId(1);
    let mut commands = vec![Command::CreateRoot];
    let mut logs = vec![root];
    let mut parent: BTreeMap<LogId, LogId> = BTreeMap::new();
    let fork_every = (records / 10 / forks.max(1) as u64).max(1);
    let mut expected = 0;
    let mut next_id = 2;
    for i in 0..records {
        if parent.len() < forks && i % fork_every == 0 {
            let p = if rng.gen_bool(0.3) { *logs.choose(&mut rng).expect("non-empty") } else { root };
            commands.push(Command::CreateCFork { parent: p, promotable: false });
            let id = LogId(next_id);
            next_id += 1;
            parent.insert(id, p);
            logs.push(id);
        }
        let log = if rng.gen_bool(0.95) { root } else { *logs.choose(&mut rng).expect("non-empty") };
        let descendants = logs
            .iter()
            .filter(|l| {
                let mut cur = **l;
                while let Some(p) = parent.get(&cur) {
                    if *p == log {
                        return true;
                    }
                    cur = *p;
                }
                false
            })
            .count() as u64;
        expected += 1 + descendants;
        commands.push(Command::SequenceBatch {
            object_id: ObjectId::from_rng(&mut rng),
            records: vec![RecordMeta { log, byte_offset: OBJECT_HEADER_LEN as u64 + 12, byte_length: 8 }],
        });
    }
    MemoryWorkload { commands, records, expected_naive_entries: expected }
}
