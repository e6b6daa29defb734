//! Durable, strictly ordered command log with snapshots.
//!
//! File layout: a 16-byte header (`BOLTCLOG`, version, reserved) followed by
//! records `[u32 length][u64 sequence][payload][u32 crc32(payload)]`, all
//! big-endian. A record cut short by a crash is dropped on open; a checksum
//! failure anywhere before the last record is reported as corruption.
//!
//! Snapshots live next to the log in `<log>.snap`:
//! `BOLTSNAP`, version, reserved, `[u64 sequence][32-byte fingerprint]
//! [u32 length][state blob][u32 crc32]`, replaced atomically by rename.

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::codec::{Decoder, Encoder};
use crate::command::Command;
use crate::error::{EngineError, Result};

const LOG_MAGIC: &[u8; 8] = b"BOLTCLOG";
const SNAP_MAGIC: &[u8; 8] = b"BOLTSNAP";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;
const FRAME_OVERHEAD: usize = 4 + 8 + 4;

/// State captured at sequence number `seq` (all commands `<= seq` applied).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub seq: u64,
    pub fingerprint: [u8; 32],
    pub blob: Vec<u8>,
}

pub trait CommandLog: Send {
    /// Persist `cmd` and return its sequence number. Durable on return.
    fn append_command(&mut self, cmd: &Command) -> Result<u64>;

    /// Deliver every retained command with sequence `>= from`, in order.
    fn replay(&mut self, from: u64, sink: &mut dyn FnMut(u64, Command) -> Result<()>) -> Result<u64>;

    /// Drop commands with sequence `<= up_to`. Numbering continues densely.
    fn truncate(&mut self, up_to: u64) -> Result<()>;

    fn save_snapshot(&mut self, snap: &Snapshot) -> Result<()>;

    fn load_snapshot(&mut self) -> Result<Option<Snapshot>>;

    /// Highest sequence number ever assigned (0 when none).
    fn last_seq(&self) -> u64;
}

#[derive(Debug, Default)]
pub struct MemCommandLog {
    records: Vec<(u64, Command)>,
    last: u64,
    snapshot: Option<Snapshot>,
}

impl MemCommandLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl CommandLog for MemCommandLog {
    fn append_command(&mut self, cmd: &Command) -> Result<u64> {
        self.last += 1;
        self.records.push((self.last, cmd.clone()));
        Ok(self.last)
    }

    fn replay(&mut self, from: u64, sink: &mut dyn FnMut(u64, Command) -> Result<()>) -> Result<u64> {
        let mut n = 0;
        for (seq, cmd) in self.records.iter().filter(|(s, _)| *s >= from) {
            sink(*seq, cmd.clone())?;
            n += 1;
        }
        Ok(n)
    }

    fn truncate(&mut self, up_to: u64) -> Result<()> {
        self.records.retain(|(s, _)| *s > up_to);
        Ok(())
    }

    fn save_snapshot(&mut self, snap: &Snapshot) -> Result<()> {
        self.snapshot = Some(snap.clone());
        Ok(())
    }

    fn load_snapshot(&mut self) -> Result<Option<Snapshot>> {
        Ok(self.snapshot.clone())
    }

    fn last_seq(&self) -> u64 {
        self.last
    }
}

#[derive(Debug)]
pub struct FileCommandLog {
    path: PathBuf,
    file: File,
    last: u64,
    /// Bytes dropped from a torn tail when the log was opened.
    recovered_torn_bytes: u64,
}

fn header() -> Vec<u8> {
    let mut e = Encoder::with_capacity(HEADER_LEN);
    e.raw(LOG_MAGIC).u32(VERSION).u32(0);
    e.finish()
}

fn frame(seq: u64, payload: &[u8]) -> Vec<u8> {
    let mut e = Encoder::with_capacity(payload.len() + FRAME_OVERHEAD);
    e.u32(payload.len() as u32).u64(seq).raw(payload).u32(crc32fast::hash(payload));
    e.finish()
}

struct Scan {
    records: Vec<(u64, Vec<u8>)>,
    good_len: usize,
}

/// Parse a whole log image. A malformed final record is a torn tail.
fn scan(bytes: &[u8]) -> Result<Scan> {
    if bytes.len() < HEADER_LEN {
        // Crash while the header was being created.
        return Ok(Scan { records: Vec::new(), good_len: 0 });
    }
    if &bytes[..8] != LOG_MAGIC {
        return Err(EngineError::protocol("not a command log (bad magic)"));
    }
    let version = u32::from_be_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(EngineError::protocol(format!("unsupported command log version {version}")));
    }
    let mut at = HEADER_LEN;
    let mut records = Vec::new();
    while at < bytes.len() {
        let rest = &bytes[at..];
        if rest.len() < FRAME_OVERHEAD {
            break;
        }
        let len = u32::from_be_bytes(rest[..4].try_into().expect("4 bytes")) as usize;
        if rest.len() < FRAME_OVERHEAD + len {
            break;
        }
        let seq = u64::from_be_bytes(rest[4..12].try_into().expect("8 bytes"));
        let payload = &rest[12..12 + len];
        let crc = u32::from_be_bytes(rest[12 + len..16 + len].try_into().expect("4 bytes"));
        let end = at + FRAME_OVERHEAD + len;
        if crc32fast::hash(payload) != crc {
            if end == bytes.len() {
                break;
            }
            return Err(EngineError::protocol(format!("command log checksum mismatch at byte {at}")));
        }
        if let Some((prev, _)) = records.last() {
            if seq != prev + 1 {
                return Err(EngineError::protocol(format!("command log sequence jumps from {prev} to {seq}")));
            }
        }
        records.push((seq, payload.to_vec()));
        at = end;
    }
    Ok(Scan { records, good_len: at })
}

fn sync_dir(path: &Path) {
    if let Some(dir) = path.parent() {
        if let Ok(d) = File::open(if dir.as_os_str().is_empty() { Path::new(".") } else { dir }) {
            let _ = d.sync_all();
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    sync_dir(path);
    Ok(())
}

impl FileCommandLog {
    /// Open or create the log at `path`, dropping a torn final record.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut bytes = Vec::new();
        if path.exists() {
            File::open(&path)?.read_to_end(&mut bytes)?;
        }
        let scanned = scan(&bytes)?;
        let mut recovered_torn_bytes = 0;
        if scanned.good_len < HEADER_LEN {
            write_atomic(&path, &header())?;
            recovered_torn_bytes = bytes.len() as u64;
        } else if scanned.good_len < bytes.len() {
            recovered_torn_bytes = (bytes.len() - scanned.good_len) as u64;
            log::warn!("{}: dropping {recovered_torn_bytes} torn bytes", path.display());
            let f = OpenOptions::new().write(true).open(&path)?;
            f.set_len(scanned.good_len as u64)?;
            f.sync_all()?;
        }
        let file = OpenOptions::new().append(true).open(&path)?;
        let mut last = scanned.records.last().map_or(0, |(s, _)| *s);
        if last == 0 {
            if let Some(snap) = read_snapshot(&snapshot_path(&path))? {
                last = snap.seq;
            }
        }
        Ok(FileCommandLog { path, file, last, recovered_torn_bytes })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn recovered_torn_bytes(&self) -> u64 {
        self.recovered_torn_bytes
    }

    fn read_records(&self) -> Result<Vec<(u64, Vec<u8>)>> {
        let bytes = fs::read(&self.path)?;
        let scanned = scan(&bytes)?;
        if scanned.good_len != bytes.len() {
            return Err(EngineError::protocol("command log has a torn record in the middle of a session"));
        }
        Ok(scanned.records)
    }
}

pub fn snapshot_path(log_path: &Path) -> PathBuf {
    let mut s = log_path.as_os_str().to_owned();
    s.push(".snap");
    PathBuf::from(s)
}

pub fn encode_snapshot(snap: &Snapshot) -> Vec<u8> {
    let mut body = Encoder::with_capacity(snap.blob.len() + 64);
    body.u64(snap.seq).raw(&snap.fingerprint).bytes(&snap.blob);
    let body = body.finish();
    let mut e = Encoder::with_capacity(body.len() + 24);
    e.raw(SNAP_MAGIC).u32(VERSION).u32(0).raw(&body).u32(crc32fast::hash(&body));
    e.finish()
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot> {
    let mut d = Decoder::new(bytes);
    if d.raw(8)? != SNAP_MAGIC {
        return Err(EngineError::protocol("not a snapshot (bad magic)"));
    }
    let version = d.u32()?;
    if version != VERSION {
        return Err(EngineError::protocol(format!("unsupported snapshot version {version}")));
    }
    d.u32()?;
    let body_start = d.position();
    let seq = d.u64()?;
    let fingerprint = d.array::<32>()?;
    let blob = d.bytes()?.to_vec();
    let body = &bytes[body_start..d.position()];
    let crc = d.u32()?;
    d.finish()?;
    if crc32fast::hash(body) != crc {
        return Err(EngineError::protocol("snapshot checksum mismatch"));
    }
    Ok(Snapshot { seq, fingerprint, blob })
}

fn read_snapshot(path: &Path) -> Result<Option<Snapshot>> {
    match fs::read(path) {
        Ok(bytes) => decode_snapshot(&bytes).map(Some),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

impl CommandLog for FileCommandLog {
    fn append_command(&mut self, cmd: &Command) -> Result<u64> {
        let seq = self.last + 1;
        self.file.write_all(&frame(seq, &cmd.encode()))?;
        self.file.sync_data()?;
        self.last = seq;
        Ok(seq)
    }

    fn replay(&mut self, from: u64, sink: &mut dyn FnMut(u64, Command) -> Result<()>) -> Result<u64> {
        let mut n = 0;
        for (seq, payload) in self.read_records()? {
            if seq >= from {
                sink(seq, Command::decode(&payload)?)?;
                n += 1;
            }
        }
        Ok(n)
    }

    fn truncate(&mut self, up_to: u64) -> Result<()> {
        let records = self.read_records()?;
        if records.first().is_none_or(|(s, _)| *s > up_to) {
            return Ok(());
        }
        let mut out = header();
        for (seq, payload) in records.iter().filter(|(s, _)| *s > up_to) {
            out.extend_from_slice(&frame(*seq, payload));
        }
        write_atomic(&self.path, &out)?;
        self.file = OpenOptions::new().append(true).open(&self.path)?;
        Ok(())
    }

    fn save_snapshot(&mut self, snap: &Snapshot) -> Result<()> {
        write_atomic(&snapshot_path(&self.path), &encode_snapshot(snap))
    }

    fn load_snapshot(&mut self) -> Result<Option<Snapshot>> {
        read_snapshot(&snapshot_path(&self.path))
    }

    fn last_seq(&self) -> u64 {
        self.last
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::LogId;
    use proptest::prelude::*;

    fn cmd(i: u64) -> Command {
        Command::Squash { log: LogId(i) }
    }

    fn collect(log: &mut dyn CommandLog, from: u64) -> Vec<(u64, Command)> {
        let mut out = Vec::new();
        log.replay(from, &mut |s, c| {
            out.push((s, c));
            Ok(())
        })
        .unwrap();
        out
    }

    #[test]
    fn sequence_numbers_are_dense_from_one() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = FileCommandLog::open(dir.path().join("c.log")).unwrap();
        assert_eq!(collect(&mut log, 0), vec![]);
        assert_eq!(log.append_command(&cmd(7)).unwrap(), 1);
        for i in 0..99 {
            log.append_command(&cmd(i)).unwrap();
        }
        assert_eq!(log.last_seq(), 100);
        let reopened = &mut FileCommandLog::open(dir.path().join("c.log")).unwrap();
        let got = collect(reopened, 0);
        assert_eq!(got.len(), 100);
        assert_eq!(got[0], (1, cmd(7)));
        assert_eq!(collect(reopened, 98).len(), 3);
    }

    #[test]
    fn truncate_keeps_numbering() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.log");
        let mut log = FileCommandLog::open(&path).unwrap();
        for i in 0..5 {
            log.append_command(&cmd(i)).unwrap();
        }
        log.truncate(0).unwrap();
        assert_eq!(collect(&mut log, 0).len(), 5);
        log.truncate(3).unwrap();
        assert_eq!(log.append_command(&cmd(9)).unwrap(), 6);
        let seqs: Vec<u64> = collect(&mut log, 0).into_iter().map(|(s, _)| s).collect();
        assert_eq!(seqs, vec![4, 5, 6]);
        log.save_snapshot(&Snapshot { seq: 6, fingerprint: [1; 32], blob: vec![] }).unwrap();
        log.truncate(6).unwrap();
        drop(log);
        let log = FileCommandLog::open(&path).unwrap();
        assert_eq!(log.last_seq(), 6);
    }

    #[test]
    fn mid_log_corruption_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.log");
        let mut log = FileCommandLog::open(&path).unwrap();
        for i in 0..3 {
            log.append_command(&cmd(i)).unwrap();
        }
        drop(log);
        let mut bytes = fs::read(&path).unwrap();
        bytes[HEADER_LEN + 14] ^= 0xff;
        fs::write(&path, &bytes).unwrap();
        let err = FileCommandLog::open(&path).unwrap_err();
        assert_eq!(err.code, crate::ErrorCode::ProtocolError);
    }

    #[test]
    fn snapshot_round_trip_and_checksum() {
        let snap = Snapshot { seq: 42, fingerprint: [7; 32], blob: b"state".to_vec() };
        let mut bytes = encode_snapshot(&snap);
        assert_eq!(decode_snapshot(&bytes).unwrap(), snap);
        let n = bytes.len();
        bytes[n - 6] ^= 1;
        assert!(decode_snapshot(&bytes).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn torn_tail_drops_only_unfinished_records(cut in 0usize..400) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("c.log");
            let mut log = FileCommandLog::open(&path).unwrap();
            let mut ends = vec![HEADER_LEN];
            for i in 0..10 {
                log.append_command(&cmd(i)).unwrap();
                ends.push(fs::metadata(&path).unwrap().len() as usize);
            }
            drop(log);
            let bytes = fs::read(&path).unwrap();
            let cut = cut.min(bytes.len());
            fs::write(&path, &bytes[..cut]).unwrap();
            let mut log = FileCommandLog::open(&path).unwrap();
            let complete = ends.iter().skip(1).filter(|e| **e <= cut).count();
            let got = collect(&mut log, 0);
            prop_assert_eq!(got.len(), complete);
            prop_assert_eq!(log.append_command(&cmd(99)).unwrap(), complete as u64 + 1);
        }
    }
}
