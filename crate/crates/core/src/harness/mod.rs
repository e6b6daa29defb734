//! Verification tooling: alternative implementations of the metadata state
//! machine, workload generation, a differential runner, a real-time ordering
//! checker and the benchmarks.

pub mod bench;
pub mod differential;
pub mod eager;
pub mod interleave;
pub mod naive;
pub mod workload;

use std::fmt;
use std::str::FromStr;

use crate::command::Command;
use crate::error::Result;
use crate::ltt::{LazyTailTree, TailForest};
use crate::metastate::{ApplyOutcome, ForestState};
use crate::types::{Assigned, LogId, ObjectRef, Position};

use eager::EagerTails;
use naive::NaiveCf;

/// The command interface every variant exposes.
pub trait MetaModel {
    fn apply(&mut self, cmd: &Command) -> Result<ApplyOutcome>;
    fn read_meta(&self, log: LogId, from: Position, to: Position) -> Result<Vec<ObjectRef>>;
    fn get_tail(&self, log: LogId) -> Result<Assigned>;
    /// Every position of a live log, ignoring blocking.
    fn resolve_all(&self, log: LogId) -> Result<Vec<ObjectRef>>;
    fn live_logs(&self) -> Vec<LogId>;
    fn index_entries(&self) -> u64;
    /// Cumulative tail/freeze bookkeeping work.
    fn tail_work(&self) -> u64;
}

impl<T: TailForest> MetaModel for ForestState<T> {
    fn apply(&mut self, cmd: &Command) -> Result<ApplyOutcome> {
        ForestState::apply(self, cmd)
    }

    fn read_meta(&self, log: LogId, from: Position, to: Position) -> Result<Vec<ObjectRef>> {
        ForestState::read_meta(self, log, from, to)
    }

    fn get_tail(&self, log: LogId) -> Result<Assigned> {
        ForestState::get_tail(self, log)
    }

    fn resolve_all(&self, log: LogId) -> Result<Vec<ObjectRef>> {
        ForestState::resolve_all(self, log)
    }

    fn live_logs(&self) -> Vec<LogId> {
        ForestState::live_logs(self)
    }

    fn index_entries(&self) -> u64 {
        self.index_entry_count() as u64
    }

    fn tail_work(&self) -> u64 {
        self.tails().touched()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Lazy,
    EagerTail,
    NaiveCf,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Lazy, Variant::EagerTail, Variant::NaiveCf];

    pub fn build(self) -> Box<dyn MetaModel> {
        match self {
            Variant::Lazy => Box::new(ForestState::with_tails(LazyTailTree::new())),
            Variant::EagerTail => Box::new(ForestState::with_tails(EagerTails::new())),
            Variant::NaiveCf => Box::new(NaiveCf::new()),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Lazy => "lazy",
            Variant::EagerTail => "eager_tail",
            Variant::NaiveCf => "naive_cf",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lazy" => Ok(Variant::Lazy),
            "eager_tail" | "eager" => Ok(Variant::EagerTail),
            "naive_cf" | "naive" => Ok(Variant::NaiveCf),
            _ => Err(format!("unknown variant {s:?} (lazy, eager_tail, naive_cf)")),
        }
    }
}
