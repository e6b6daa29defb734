use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use crate::error::{EngineError, Result};

use super::engine::Engine;
use super::wire::{self, Frame, Reply, Request, RequestFrame, ResponseFrame};

/// TCP front end. One thread per connection reads frames; each request runs
/// on its own thread so a slow append does not hold up the connection.
pub struct Server {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    conns: Arc<Mutex<Vec<TcpStream>>>,
    accept: Option<JoinHandle<()>>,
}

impl Server {
    pub fn start(engine: Arc<Engine>, listen: &str) -> Result<Server> {
        let listener = TcpListener::bind(listen)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let conns = Arc::new(Mutex::new(Vec::new()));
        let (s, c) = (stop.clone(), conns.clone());
        let accept = std::thread::Builder::new().name("accept".into()).spawn(move || {
            for stream in listener.incoming() {
                if s.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let _ = stream.set_nodelay(true);
                if let Ok(clone) = stream.try_clone() {
                    c.lock().expect("conns").push(clone);
                }
                let engine = engine.clone();
                std::thread::spawn(move || serve_connection(engine, stream));
            }
        })?;
        log::info!("listening on {addr}");
        Ok(Server { addr, stop, conns, accept: Some(accept) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Block until the accept loop ends (it only ends on shutdown).
    pub fn join(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        for c in self.conns.lock().expect("conns").drain(..) {
            let _ = c.shutdown(std::net::Shutdown::Both);
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop_now();
    }
}

fn serve_connection(engine: Arc<Engine>, stream: TcpStream) {
    let Ok(writer) = stream.try_clone() else { return };
    let writer = Arc::new(Mutex::new(writer));
    let mut reader = std::io::BufReader::new(stream);
    loop {
        let frame = match wire::read_frame(&mut reader) {
            Ok(Some(f)) => f,
            Ok(None) | Err(_) => return,
        };
        let parsed = match frame {
            Frame::Body(body) => RequestFrame::decode(&body),
            Frame::Oversized(len) => Err((0, 0, EngineError::protocol(format!("frame of {len} bytes exceeds limit")))),
        };
        match parsed {
            Ok(req) => {
                let (engine, writer) = (engine.clone(), writer.clone());
                std::thread::spawn(move || {
                    let opcode = req.request.opcode();
                    let result = handle(&engine, req.request);
                    respond(&writer, ResponseFrame { req_id: req.req_id, opcode, result });
                });
            }
            Err((req_id, opcode, err)) => respond(&writer, ResponseFrame { req_id, opcode, result: Err(err) }),
        }
    }
}

fn respond(writer: &Mutex<TcpStream>, frame: ResponseFrame) {
    let bytes = frame.encode();
    let mut w = writer.lock().expect("writer");
    let _ = wire::write_all(&mut *w, &bytes);
}

pub fn handle(engine: &Engine, req: Request) -> Result<Reply> {
    Ok(match req {
        Request::Append { log, payload } => Reply::Position(engine.append(log, payload)?),
        Request::Read { log, from, to } => Reply::Records(engine.read(log, from, to)?),
        Request::CFork { parent, promotable, dedicated } => Reply::Log(engine.cfork(parent, promotable, dedicated)?),
        Request::SFork { parent, past, dedicated } => Reply::Log(engine.sfork(parent, past, dedicated)?),
        Request::Promote { child } => Reply::Logs(engine.promote(child)?),
        Request::Squash { log } => Reply::Logs(engine.squash(log)?),
        Request::GetTail { log } => Reply::Position(engine.get_tail(log)?),
        Request::Describe => Reply::Forest(engine.describe()),
        Request::CreateRoot => Reply::Log(engine.create_root()?),
    })
}
