//! Desk-scale benchmarks. Every run yields a flat list of metrics; logical
//! counts are deterministic under a fixed seed, wall-clock numbers are not.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::command::{Command, RecordMeta};
use crate::error::{EngineError, Result};
use crate::harness::differential::{run_differential, DiffReport};
use crate::harness::eager::EagerTails;
use crate::harness::interleave::{check_interleaving, record_id, record_payload, HistoryEntry, Verdict};
use crate::harness::naive::NaiveCf;
use crate::harness::workload::{generate, memory_workload, WorkloadConfig};
use crate::harness::{MetaModel, Variant};
use crate::ltt::{LazyTailTree, TailForest};
use crate::metastate::ForestState;
use crate::sequencer::MetadataLayer;
use crate::service::{Client, Engine, EngineConfig, Server};
use crate::store::{BrokerConfig, ObjectBuilder, RequestRecord};
use crate::types::{LogId, ObjectId, Position};

#[derive(Debug, Clone, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub unit: String,
    pub deterministic: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Report {
    pub bench: String,
    pub seed: u64,
    pub metrics: Vec<Metric>,
}

impl Report {
    pub fn new(bench: &str, seed: u64) -> Self {
        Report { bench: bench.to_string(), seed, metrics: Vec::new() }
    }

    pub fn count(&mut self, name: impl Into<String>, value: impl Into<f64>, unit: &str) {
        self.metrics.push(Metric { name: name.into(), value: value.into(), unit: unit.into(), deterministic: true });
    }

    pub fn timing(&mut self, name: impl Into<String>, d: Duration) {
        self.metrics.push(Metric { name: name.into(), value: d.as_secs_f64() * 1e6, unit: "us".into(), deterministic: false });
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.name == name).map(|m| m.value)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{} (seed {})\n", self.bench, self.seed);
        for m in &self.metrics {
            let flag = if m.deterministic { "" } else { "  ~" };
            let _ = writeln!(s, "  {:<44} {:>14.3} {}{}", m.name, m.value, m.unit, flag);
        }
        s
    }
}

pub fn median(mut xs: Vec<Duration>) -> Duration {
    assert!(!xs.is_empty(), "median of nothing");
    xs.sort();
    xs[xs.len() / 2]
}

fn fake_batch(rng: &mut ChaCha8Rng, log: LogId, n: usize) -> Command {
    let records = (0..n).map(|i| RecordMeta { log, byte_offset: 12 + i as u64 * 8, byte_length: 8 }).collect();
    Command::SequenceBatch { object_id: ObjectId::from_rng(rng), records }
}

/// Fill `log` with `n` metadata-only records in batches.
fn fill(meta: &MetadataLayer, rng: &mut ChaCha8Rng, log: LogId, n: u64) -> Result<()> {
    let mut left = n;
    while left > 0 {
        let k = left.min(10_000);
        meta.submit(fake_batch(rng, log, k as usize))?;
        left -= k;
    }
    Ok(())
}

// ---- fork latency -------------------------------------------------------

/// Median cFork creation time on a parent of each size.
pub fn fork_latency(sizes: &[u64], trials: usize, seed: u64) -> Result<Vec<(u64, Duration)>> {
    sizes
        .iter()
        .map(|&size| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ size);
            let meta = MetadataLayer::in_memory();
            let root = meta.submit(Command::CreateRoot)?.created().expect("root");
            fill(&meta, &mut rng, root, size)?;
            let mut times = Vec::with_capacity(trials);
            for _ in 0..trials {
                let t = Instant::now();
                let fork = meta.submit(Command::CreateCFork { parent: root, promotable: false })?;
                times.push(t.elapsed());
                meta.submit(Command::Squash { log: fork.created().expect("fork") })?;
            }
            Ok((size, median(times)))
        })
        .collect()
}

// ---- tail bookkeeping ablation ------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblateResult {
    pub forks: usize,
    pub appends: usize,
    pub lazy_max: u64,
    pub lazy_total: u64,
    /// Touched count of every append to the root, eager variant.
    pub eager_root_min: u64,
    pub eager_root_max: u64,
    pub eager_total: u64,
}

impl AblateResult {
    pub fn lazy_bound(&self, c: f64) -> f64 {
        c * ((self.forks + 1) as f64).log2() + c
    }
}

fn per_append_costs<T: TailForest>(state: &mut ForestState<T>, ops: &[Command]) -> Result<Vec<u64>> {
    ops.iter()
        .map(|cmd| {
            let before = state.tails().touched();
            state.apply(cmd)?;
            Ok(state.tails().touched() - before)
        })
        .collect()
}

/// `forks` flat cForks under one root, then `appends` appends alternating
/// between the root and a random fork.
pub fn ablate(forks: usize, appends: usize, seed: u64) -> Result<AblateResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let root = LogId(1);
    let mut setup = vec![Command::CreateRoot];
    setup.extend((0..forks).map(|_| Command::CreateCFork { parent: root, promotable: false }));
    let mut targets = Vec::with_capacity(appends);
    let history: Vec<Command> = (0..appends)
        .map(|i| {
            let log = if i % 2 == 0 { root } else { LogId(rng.gen_range(2..=forks as u64 + 1)) };
            targets.push(log);
            fake_batch(&mut rng, log, 1)
        })
        .collect();

    let mut lazy = ForestState::with_tails(LazyTailTree::new());
    let mut eager = ForestState::with_tails(EagerTails::new());
    for cmd in &setup {
        lazy.apply(cmd)?;
        eager.apply(cmd)?;
    }
    let lazy_costs = per_append_costs(&mut lazy, &history)?;
    let eager_costs = per_append_costs(&mut eager, &history)?;
    let on_root: Vec<u64> = eager_costs.iter().zip(&targets).filter(|(_, t)| **t == root).map(|(c, _)| *c).collect();
    Ok(AblateResult {
        forks,
        appends,
        lazy_max: lazy_costs.iter().copied().max().unwrap_or(0),
        lazy_total: lazy_costs.iter().sum(),
        eager_root_min: on_root.iter().copied().min().unwrap_or(0),
        eager_root_max: on_root.iter().copied().max().unwrap_or(0),
        eager_total: eager_costs.iter().sum(),
    })
}

// ---- memory ---------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryResult {
    pub records: u64,
    pub lazy_entries: u64,
    pub naive_entries: u64,
    pub expected_naive_entries: u64,
}

pub fn memory(records: u64, forks: usize, seed: u64) -> Result<MemoryResult> {
    let w = memory_workload(records, forks, seed);
    let mut lazy = ForestState::new();
    let mut naive = NaiveCf::new();
    for cmd in &w.commands {
        lazy.apply(cmd)?;
        MetaModel::apply(&mut naive, cmd)?;
    }
    Ok(MemoryResult {
        records: w.records,
        lazy_entries: lazy.index_entry_count() as u64,
        naive_entries: naive.index_entries(),
        expected_naive_entries: w.expected_naive_entries,
    })
}

// ---- lookup depth ---------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DepthLevel {
    pub depth: usize,
    pub log: LogId,
    pub max_steps: u32,
    /// Median of single-record reads through the TCP service.
    pub read_median: Duration,
    /// Median of metadata-only resolves.
    pub resolve_median: Duration,
}

/// Put one object holding `n` records for `log` and sequence it directly.
fn bulk_load(engine: &Engine, log: LogId, n: usize, first_id: u64) -> Result<()> {
    let mut b = ObjectBuilder::new();
    let offsets: Vec<u64> = (0..n).map(|i| b.push(log, &record_payload(first_id + i as u64, 16))).collect();
    let object_id = engine.store().put_object(&b.finish())?;
    let records = offsets.into_iter().map(|o| RecordMeta { log, byte_offset: o, byte_length: 16 }).collect();
    engine.metadata().submit(Command::SequenceBatch { object_id, records })?;
    Ok(())
}

/// A chain of `levels` nested cForks with `per_level` own records at every
/// level; each level d reads positions owned by the root, d hops up.
pub fn depth(levels: usize, per_level: usize, trials: usize, seed: u64) -> Result<Vec<DepthLevel>> {
    let engine = Arc::new(Engine::in_memory(EngineConfig::default()));
    let server = Server::start(engine.clone(), "127.0.0.1:0")?;
    let client = Client::connect(server.local_addr())?;
    let mut chain = vec![engine.create_root()?];
    bulk_load(&engine, chain[0], per_level, 0)?;
    for d in 1..=levels {
        let fork = engine.cfork(chain[d - 1], false, false)?;
        bulk_load(&engine, fork, per_level, (d * per_level) as u64)?;
        chain.push(fork);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (d, &log) in chain.iter().enumerate().skip(1) {
        let positions: Vec<u64> = (0..trials).map(|_| rng.gen_range(0..per_level as u64)).collect();
        let max_steps = engine
            .metadata()
            .with_state(|s| -> Result<u32> { positions.iter().try_fold(0, |m, &p| Ok(m.max(s.resolve(log, Position(p))?.steps))) })?;
        // Warm the object cache and the connection.
        for &p in positions.iter().take(20) {
            client.read(log, Position(p), Position(p + 1))?;
        }
        let mut reads = Vec::with_capacity(trials);
        for &p in &positions {
            let t = Instant::now();
            let got = client.read(log, Position(p), Position(p + 1))?;
            reads.push(t.elapsed());
            if record_id(&got[0]) != Some(p) {
                return Err(EngineError::protocol(format!("depth {d} read wrong record at {p}")));
            }
        }
        let mut resolves = Vec::with_capacity(trials);
        engine.metadata().with_state(|s| {
            for &p in &positions {
                let t = Instant::now();
                let r = s.resolve(log, Position(p));
                resolves.push(t.elapsed());
                std::hint::black_box(r.ok());
            }
        });
        out.push(DepthLevel { depth: d, log, max_steps, read_median: median(reads), resolve_median: median(resolves) });
    }
    drop(client);
    server.shutdown();
    Ok(out)
}

// ---- concurrent interleaving --------------------------------------------

#[derive(Debug, Clone)]
pub struct LinearizeRun {
    pub verdict: Verdict,
    pub acked: u64,
    pub parent: LogId,
    pub forks: Vec<LogId>,
    pub history: Vec<HistoryEntry>,
    /// Every broker APPEND/READ by broker id.
    pub requests: BTreeMap<u32, Vec<RequestRecord>>,
    pub parent_broker: u32,
}

impl LinearizeRun {
    /// APPEND/READ requests for fork logs that reached the parent's broker.
    pub fn fork_frames_on_parent_broker(&self) -> usize {
        self.requests.get(&self.parent_broker).map_or(0, |r| r.iter().filter(|q| self.forks.contains(&q.log)).count())
    }

    pub fn fork_frames_total(&self) -> usize {
        self.requests.values().flatten().filter(|q| self.forks.contains(&q.log)).count()
    }
}

/// `sessions` clients append concurrently to one parent and its `forks`
/// cForks through a real server until `appends` acknowledgments, then the
/// final sequences are read back and checked.
pub fn linearize(seed: u64, sessions: usize, forks: usize, appends: u64) -> Result<LinearizeRun> {
    let cfg = EngineConfig { broker: BrokerConfig { flush_bytes: 1 << 20, linger: Duration::from_millis(1) }, ..Default::default() };
    let engine = Arc::new(Engine::in_memory(cfg));
    let server = Server::start(engine.clone(), "127.0.0.1:0")?;
    let addr = server.local_addr();
    let admin = Client::connect(addr)?;
    let parent = admin.create_root()?;
    let fork_ids: Vec<LogId> = (0..forks).map(|_| admin.cfork(parent, false)).collect::<Result<_>>()?;
    let mut targets = vec![parent; forks.max(1)];
    targets.extend(&fork_ids);

    let epoch = Instant::now();
    let per_session = appends.div_ceil(sessions as u64);
    let handles: Vec<_> = (0..sessions)
        .map(|s| {
            let targets = targets.clone();
            thread::spawn(move || -> Result<Vec<HistoryEntry>> {
                let client = Client::connect(addr)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003) ^ s as u64);
                let mut hist = Vec::with_capacity(per_session as usize);
                for k in 0..per_session {
                    let log = targets[rng.gen_range(0..targets.len())];
                    let id = ((s as u64) << 32) | k;
                    let invoke_ns = epoch.elapsed().as_nanos() as u64;
                    let result = client.append(log, record_payload(id, 16))?;
                    let response_ns = epoch.elapsed().as_nanos() as u64;
                    hist.push(HistoryEntry { id, session: s as u32, log, invoke_ns, response_ns, result: Some(result) });
                }
                Ok(hist)
            })
        })
        .collect();
    let mut history = Vec::new();
    for h in handles {
        history.extend(h.join().expect("session thread")?);
    }

    let mut sequences = BTreeMap::new();
    for &log in std::iter::once(&parent).chain(&fork_ids) {
        let tail = match admin.get_tail(log)? {
            crate::types::Assigned::At(p) => p,
            crate::types::Assigned::Withheld => return Err(EngineError::protocol("tail withheld".to_string())),
        };
        let ids = admin.read(log, Position::ZERO, tail)?.iter().map(|p| record_id(p).unwrap_or(u64::MAX)).collect::<Vec<_>>();
        sequences.insert(log, ids);
    }
    let verdict = check_interleaving(&history, &sequences);
    let requests = engine.brokers().iter().map(|b| (b.id().0, b.request_log())).collect();
    let parent_broker = engine.broker_of(parent).expect("parent placed").0;
    drop(admin);
    server.shutdown();
    Ok(LinearizeRun { verdict, acked: history.len() as u64, parent, forks: fork_ids, history, requests, parent_broker })
}

// ---- differential -------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DifferentialRun {
    pub seed: u64,
    pub forks_created: usize,
    pub max_depth: usize,
    pub report: DiffReport,
}

pub fn differential(seed: u64, ops: usize, variants: &[Variant]) -> std::result::Result<DifferentialRun, String> {
    let w = generate(&WorkloadConfig { ops, seed, ..Default::default() });
    let mut models: Vec<_> = variants.iter().map(|v| v.build()).collect();
    let report = run_differential(&w.ops, &mut models, 1000).map_err(|d| format!("seed {seed}: {d}"))?;
    Ok(DifferentialRun { seed, forks_created: w.forks_created, max_depth: w.max_depth, report })
}

// ---- CLI ------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(name = "boltbench", about = "Desk-scale benchmarks and checks")]
pub struct BenchArgs {
    #[command(subcommand)]
    pub bench: BenchKind,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Variant for single-variant benches; differential always runs all.
    #[arg(long, global = true, default_value = "lazy")]
    pub variant: Variant,
    #[arg(long, global = true)]
    pub forks: Option<usize>,
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    #[arg(long, global = true)]
    pub ops: Option<usize>,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Write the JSON report here as well as printing a summary.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum BenchKind {
    /// cFork creation time across parent sizes.
    Forklat,
    /// Tail bookkeeping work per append, lazy vs eager.
    Ablate,
    /// Index entries held, lazy vs copy-on-append.
    Memory,
    /// Lookup cost down a chain of nested cForks.
    Depth,
    /// Concurrent sessions through the service, checked for ordering.
    Linearize,
    /// All variants on one random history.
    Differential,
}

pub fn run_bench(args: &BenchArgs) -> Result<Report> {
    let c = &args.common;
    let seed = c.seed;
    let report = match args.bench {
        BenchKind::Forklat => {
            let mut r = Report::new("forklat", seed);
            let sizes = [1_000, 10_000, 100_000, 1_000_000];
            let res = fork_latency(&sizes, c.ops.unwrap_or(100), seed)?;
            for (size, t) in &res {
                r.timing(format!("fork_median_parent_{size}"), *t);
            }
            let ratio = res.last().expect("sizes").1.as_secs_f64() / res[0].1.as_secs_f64().max(1e-9);
            r.metrics.push(Metric { name: "ratio_largest_to_smallest".into(), value: ratio, unit: "x".into(), deterministic: false });
            r
        }
        BenchKind::Ablate => {
            let mut r = Report::new("ablate", seed);
            let a = ablate(c.forks.unwrap_or(1000), c.ops.unwrap_or(200), seed)?;
            r.count("forks", a.forks as f64, "logs");
            r.count("lazy_max_touched_per_append", a.lazy_max as f64, "nodes");
            r.count("lazy_bound_c8", a.lazy_bound(8.0), "nodes");
            r.count("eager_root_append_touched", a.eager_root_max as f64, "nodes");
            r.count("lazy_total_touched", a.lazy_total as f64, "nodes");
            r.count("eager_total_touched", a.eager_total as f64, "nodes");
            r
        }
        BenchKind::Memory => {
            let mut r = Report::new("memory", seed);
            let m = memory(c.ops.unwrap_or(100_000) as u64, c.forks.unwrap_or(100), seed)?;
            r.count("records", m.records as f64, "records");
            r.count("lazy_entries", m.lazy_entries as f64, "entries");
            r.count("naive_entries", m.naive_entries as f64, "entries");
            r.count("expected_naive_entries", m.expected_naive_entries as f64, "entries");
            r.count("naive_over_lazy", m.naive_entries as f64 / m.lazy_entries.max(1) as f64, "x");
            r
        }
        BenchKind::Depth => {
            let mut r = Report::new("depth", seed);
            let levels = depth(c.depth.unwrap_or(8), c.ops.unwrap_or(10_000), 200, seed)?;
            for l in &levels {
                r.count(format!("depth_{}_max_steps", l.depth), l.max_steps, "steps");
                r.timing(format!("depth_{}_read_median", l.depth), l.read_median);
                r.timing(format!("depth_{}_resolve_median", l.depth), l.resolve_median);
            }
            r
        }
        BenchKind::Linearize => {
            let mut r = Report::new("linearize", seed);
            let run = linearize(seed, 16, c.forks.unwrap_or(10), c.ops.unwrap_or(10_000) as u64)?;
            r.count("acked_appends", run.acked as f64, "appends");
            r.count("records_checked", run.verdict.records_checked as f64, "records");
            r.count("violations", run.verdict.violations.len() as f64, "pairs");
            r.count("lost_records", run.verdict.lost_records as f64, "records");
            r.count("fork_frames_on_parent_broker", run.fork_frames_on_parent_broker() as f64, "frames");
            r.count("fork_frames_total", run.fork_frames_total() as f64, "frames");
            r
        }
        BenchKind::Differential => {
            let mut r = Report::new("differential", seed);
            let run = differential(seed, c.ops.unwrap_or(10_000), &Variant::ALL).map_err(EngineError::protocol)?;
            r.count("ops", run.report.ops as f64, "ops");
            r.count("forks_created", run.forks_created as f64, "logs");
            r.count("max_depth", run.max_depth as f64, "levels");
            r.count("full_checks", run.report.full_checks as f64, "checks");
            r.count("positions_compared", run.report.positions_compared as f64, "positions");
            for (code, n) in &run.report.errors {
                r.count(format!("errors_{code}"), *n as f64, "ops");
            }
            r
        }
    };
    if let Some(path) = &c.report {
        std::fs::write(path, report.to_json()).map_err(|e| EngineError::storage(format!("write {}: {e}", path.display())))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_forks_cost_eager_the_whole_subtree() {
        let a = ablate(50, 20, 3).unwrap();
        assert_eq!((a.eager_root_min, a.eager_root_max), (51, 51));
        assert!((a.lazy_max as f64) <= a.lazy_bound(8.0), "{a:?}");
    }

    #[test]
    fn memory_counts_match_generator() {
        let m = memory(5_000, 10, 1).unwrap();
        assert_eq!(m.lazy_entries, 5_000);
        assert_eq!(m.naive_entries, m.expected_naive_entries);
    }

    #[test]
    fn small_linearize_run_is_clean() {
        let run = linearize(9, 4, 3, 200).unwrap();
        assert!(run.verdict.ok(), "{:?}", run.verdict);
        assert_eq!(run.acked, 200);
        assert_eq!(run.fork_frames_on_parent_broker(), 0);
        assert!(run.fork_frames_total() > 0);
    }

    #[test]
    fn report_json_has_every_metric() {
        let mut r = Report::new("x", 1);
        r.count("a", 2.0, "n");
        r.timing("b", Duration::from_micros(3));
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["metrics"].as_array().unwrap().len(), 2);
        assert!(r.summary().contains("a"));
    }
}
