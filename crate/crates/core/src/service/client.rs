use std::collections::HashMap;
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use crate::error::{EngineError, Result};
use crate::metastate::LogInfo;
use crate::types::{Assigned, LogId, Position};

use super::wire::{self, Frame, Reply, Request, RequestFrame, ResponseFrame};

type Waiters = Arc<Mutex<HashMap<u64, mpsc::Sender<ResponseFrame>>>>;

/// Connection to a server. Safe to share between threads: requests are
/// tagged with ids and answered out of order.
pub struct Client {
    writer: Mutex<TcpStream>,
    waiters: Waiters,
    next_id: AtomicU64,
    reader: Option<JoinHandle<()>>,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Client> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let waiters: Waiters = Arc::default();
        let mut read_half = std::io::BufReader::new(stream.try_clone()?);
        let w = waiters.clone();
        let reader = std::thread::spawn(move || {
            while let Ok(Some(Frame::Body(body))) = wire::read_frame(&mut read_half) {
                let Ok(frame) = ResponseFrame::decode(&body) else { break };
                if let Some(tx) = w.lock().expect("waiters").remove(&frame.req_id) {
                    let _ = tx.send(frame);
                }
            }
            // Dropping the senders wakes every caller still waiting.
            w.lock().expect("waiters").clear();
        });
        Ok(Client { writer: Mutex::new(stream), waiters, next_id: AtomicU64::new(1), reader: Some(reader) })
    }

    pub fn call(&self, request: Request) -> Result<Reply> {
        let req_id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = mpsc::channel();
        self.waiters.lock().expect("waiters").insert(req_id, tx);
        let bytes = RequestFrame { req_id, request }.encode();
        if let Err(e) = wire::write_all(&mut *self.writer.lock().expect("writer"), &bytes) {
            self.waiters.lock().expect("waiters").remove(&req_id);
            return Err(e.into());
        }
        rx.recv().map_err(|_| EngineError::storage("connection closed"))?.result
    }

    fn unexpected(reply: Reply) -> EngineError {
        EngineError::protocol(format!("unexpected reply {reply:?}"))
    }

    pub fn create_root(&self) -> Result<LogId> {
        match self.call(Request::CreateRoot)? {
            Reply::Log(l) => Ok(l),
            r => Err(Self::unexpected(r)),
        }
    }

    pub fn append(&self, log: LogId, payload: impl Into<Vec<u8>>) -> Result<Assigned> {
        match self.call(Request::Append { log, payload: payload.into() })? {
            Reply::Position(a) => Ok(a),
            r => Err(Self::unexpected(r)),
        }
    }

    pub fn read(&self, log: LogId, from: Position, to: Position) -> Result<Vec<Vec<u8>>> {
        match self.call(Request::Read { log, from, to })? {
            Reply::Records(r) => Ok(r),
            r => Err(Self::unexpected(r)),
        }
    }

    pub fn cfork(&self, parent: LogId, promotable: bool) -> Result<LogId> {
        self.cfork_with(parent, promotable, false)
    }

    pub fn cfork_with(&self, parent: LogId, promotable: bool, dedicated: bool) -> Result<LogId> {
        match self.call(Request::CFork { parent, promotable, dedicated })? {
            Reply::Log(l) => Ok(l),
            r => Err(Self::unexpected(r)),
        }
    }

    pub fn sfork(&self, parent: LogId, past: Option<Position>) -> Result<LogId> {
        self.sfork_with(parent, past, false)
    }

    pub fn sfork_with(&self, parent: LogId, past: Option<Position>, dedicated: bool) -> Result<LogId> {
        match self.call(Request::SFork { parent, past, dedicated })? {
            Reply::Log(l) => Ok(l),
            r => Err(Self::unexpected(r)),
        }
    }

    pub fn promote(&self, child: LogId) -> Result<Vec<LogId>> {
        match self.call(Request::Promote { child })? {
            Reply::Logs(l) => Ok(l),
            r => Err(Self::unexpected(r)),
        }
    }

    pub fn squash(&self, log: LogId) -> Result<Vec<LogId>> {
        match self.call(Request::Squash { log })? {
            Reply::Logs(l) => Ok(l),
            r => Err(Self::unexpected(r)),
        }
    }

    pub fn get_tail(&self, log: LogId) -> Result<Assigned> {
        match self.call(Request::GetTail { log })? {
            Reply::Position(a) => Ok(a),
            r => Err(Self::unexpected(r)),
        }
    }

    pub fn describe(&self) -> Result<Vec<LogInfo>> {
        match self.call(Request::Describe)? {
            Reply::Forest(f) => Ok(f),
            r => Err(Self::unexpected(r)),
        }
    }
}

impl Drop for Client {
    fn drop(&mut self) {
        if let Ok(w) = self.writer.lock() {
            let _ = w.shutdown(std::net::Shutdown::Both);
        }
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
    }
}
