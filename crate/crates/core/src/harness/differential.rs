//! Run one op sequence against several variants and insist they agree on
//! every outcome, error code and boundary, plus periodic full comparisons of
//! every live log's tail and resolve sequence.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{EngineError, ErrorCode};
use crate::harness::workload::Op;
use crate::harness::MetaModel;
use crate::types::LogId;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DiffReport {
    pub ops: usize,
    pub errors: BTreeMap<String, usize>,
    pub full_checks: usize,
    pub positions_compared: u64,
    pub final_live_logs: usize,
}

#[derive(Debug, Clone)]
pub struct Divergence {
    pub op_index: usize,
    pub detail: String,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "divergence at op {}: {}", self.op_index, self.detail)
    }
}

fn observe<T: fmt::Debug>(r: &Result<T, EngineError>) -> String {
    match r {
        Ok(v) => format!("ok {v:?}"),
        Err(e) => format!("err {:?} {:?}", e.code, e.boundary),
    }
}

fn agree(index: usize, what: impl Fn() -> String, seen: &[String]) -> Result<(), Divergence> {
    if seen.windows(2).all(|w| w[0] == w[1]) {
        return Ok(());
    }
    Err(Divergence { op_index: index, detail: format!("{}: {:?}", what(), seen) })
}

fn full_check(index: usize, models: &[Box<dyn MetaModel>], report: &mut DiffReport) -> Result<(), Divergence> {
    let live: Vec<Vec<LogId>> = models.iter().map(|m| m.live_logs()).collect();
    agree(index, || "live logs".into(), &live.iter().map(|l| format!("{l:?}")).collect::<Vec<_>>())?;
    for log in &live[0] {
        let tails: Vec<String> = models.iter().map(|m| observe(&m.get_tail(*log))).collect();
        agree(index, || format!("tail of {log}"), &tails)?;
        let seqs: Vec<_> = models.iter().map(|m| m.resolve_all(*log)).collect();
        if let Ok(s) = &seqs[0] {
            report.positions_compared += s.len() as u64;
        }
        for (i, s) in seqs.iter().enumerate().skip(1) {
            if s != &seqs[0] {
                return Err(Divergence {
                    op_index: index,
                    detail: format!("resolve sequence of {log} differs between model 0 and model {i}"),
                });
            }
        }
    }
    report.full_checks += 1;
    Ok(())
}

/// `full_check_every` of 0 only compares everything at the end.
pub fn run_differential(ops: &[Op], models: &mut [Box<dyn MetaModel>], full_check_every: usize) -> Result<DiffReport, Divergence> {
    let mut report = DiffReport::default();
    for (i, op) in ops.iter().enumerate() {
        let seen: Vec<(String, Option<ErrorCode>)> = match op {
            Op::Cmd(cmd) => models
                .iter_mut()
                .map(|m| {
                    let r = m.apply(cmd);
                    (observe(&r), r.err().map(|e| e.code))
                })
                .collect(),
            Op::Read { log, from, to } => models
                .iter()
                .map(|m| {
                    let r = m.read_meta(*log, *from, *to);
                    (observe(&r), r.err().map(|e| e.code))
                })
                .collect(),
            Op::Tail { log } => models
                .iter()
                .map(|m| {
                    let r = m.get_tail(*log);
                    (observe(&r), r.err().map(|e| e.code))
                })
                .collect(),
        };
        let texts: Vec<String> = seen.iter().map(|(s, _)| s.clone()).collect();
        agree(i, || format!("{op:?}"), &texts)?;
        if let Some(code) = seen[0].1 {
            *report.errors.entry(format!("{code:?}")).or_default() += 1;
        }
        if full_check_every > 0 && (i + 1) % full_check_every == 0 {
            full_check(i, models, &mut report)?;
        }
    }
    full_check(ops.len(), models, &mut report)?;
    report.ops = ops.len();
    report.final_live_logs = models[0].live_logs().len();
    Ok(report)
}
