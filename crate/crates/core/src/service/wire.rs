//! Binary frames.
//!
//! Request:  `[u32 len][u64 request id][u8 opcode][body]`
//! Response: `[u32 len][u64 request id][u8 opcode][u8 status][body]`
//!
//! `len` counts the bytes after itself. Status 0 is success, anything else
//! is an [`ErrorCode`] and the body is `[string detail][opt u64 boundary]`.
//! Positions are `[u8 present][u64]`; a withheld position has present = 0.

use std::io::{self, Read, Write};

use crate::codec::{Decoder, Encoder};
use crate::error::{EngineError, ErrorCode, Result};
use crate::metastate::LogInfo;
use crate::types::{Assigned, LogDescriptor, LogId, LogKind, LogStatus, Position};

pub const OP_APPEND: u8 = 1;
pub const OP_READ: u8 = 2;
pub const OP_CFORK: u8 = 3;
pub const OP_SFORK: u8 = 4;
pub const OP_PROMOTE: u8 = 5;
pub const OP_SQUASH: u8 = 6;
pub const OP_GET_TAIL: u8 = 7;
pub const OP_DESCRIBE: u8 = 8;
pub const OP_CREATE_ROOT: u8 = 9;

pub const MAX_FRAME: u32 = 64 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    Append { log: LogId, payload: Vec<u8> },
    Read { log: LogId, from: Position, to: Position },
    CFork { parent: LogId, promotable: bool, dedicated: bool },
    SFork { parent: LogId, past: Option<Position>, dedicated: bool },
    Promote { child: LogId },
    Squash { log: LogId },
    GetTail { log: LogId },
    Describe,
    CreateRoot,
}

impl Request {
    pub fn opcode(&self) -> u8 {
        match self {
            Request::Append { .. } => OP_APPEND,
            Request::Read { .. } => OP_READ,
            Request::CFork { .. } => OP_CFORK,
            Request::SFork { .. } => OP_SFORK,
            Request::Promote { .. } => OP_PROMOTE,
            Request::Squash { .. } => OP_SQUASH,
            Request::GetTail { .. } => OP_GET_TAIL,
            Request::Describe => OP_DESCRIBE,
            Request::CreateRoot => OP_CREATE_ROOT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Position(Assigned),
    Records(Vec<Vec<u8>>),
    Log(LogId),
    Logs(Vec<LogId>),
    Forest(Vec<LogInfo>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestFrame {
    pub req_id: u64,
    pub request: Request,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseFrame {
    pub req_id: u64,
    pub opcode: u8,
    pub result: std::result::Result<Reply, EngineError>,
}

fn with_len(body: Vec<u8>) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

fn put_assigned(e: &mut Encoder, a: Assigned) {
    e.opt_u64(a.position().map(|p| p.0));
}

fn get_assigned(d: &mut Decoder) -> Result<Assigned> {
    Ok(d.opt_u64()?.map_or(Assigned::Withheld, |p| Assigned::At(Position(p))))
}

impl RequestFrame {
    /// Full frame including the length prefix.
    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.u64(self.req_id).u8(self.request.opcode());
        match &self.request {
            Request::Append { log, payload } => {
                e.u64(log.0).bytes(payload);
            }
            Request::Read { log, from, to } => {
                e.u64(log.0).u64(from.0).u64(to.0);
            }
            Request::CFork { parent, promotable, dedicated } => {
                e.u64(parent.0).bool(*promotable).bool(*dedicated);
            }
            Request::SFork { parent, past, dedicated } => {
                e.u64(parent.0).opt_u64(past.map(|p| p.0)).bool(*dedicated);
            }
            Request::Promote { child: log } | Request::Squash { log } | Request::GetTail { log } => {
                e.u64(log.0);
            }
            Request::Describe | Request::CreateRoot => {}
        }
        with_len(e.finish())
    }

    /// Decode a frame body (without its length prefix). On failure, returns
    /// whatever request id and opcode could be recovered so the error can
    /// still be answered.
    pub fn decode(body: &[u8]) -> std::result::Result<RequestFrame, (u64, u8, EngineError)> {
        let mut d = Decoder::new(body);
        let req_id = d.u64().map_err(|e| (0, 0, e))?;
        let opcode = d.u8().map_err(|e| (req_id, 0, e))?;
        let parse = |d: &mut Decoder| -> Result<Request> {
            let req = match opcode {
                OP_APPEND => Request::Append { log: LogId(d.u64()?), payload: d.bytes()?.to_vec() },
                OP_READ => Request::Read { log: LogId(d.u64()?), from: Position(d.u64()?), to: Position(d.u64()?) },
                OP_CFORK => Request::CFork { parent: LogId(d.u64()?), promotable: d.bool()?, dedicated: d.bool()? },
                OP_SFORK => Request::SFork { parent: LogId(d.u64()?), past: d.opt_u64()?.map(Position), dedicated: d.bool()? },
                OP_PROMOTE => Request::Promote { child: LogId(d.u64()?) },
                OP_SQUASH => Request::Squash { log: LogId(d.u64()?) },
                OP_GET_TAIL => Request::GetTail { log: LogId(d.u64()?) },
                OP_DESCRIBE => Request::Describe,
                OP_CREATE_ROOT => Request::CreateRoot,
                op => return Err(EngineError::protocol(format!("unknown opcode {op}"))),
            };
            d.finish()?;
            Ok(req)
        };
        parse(&mut d).map(|request| RequestFrame { req_id, request }).map_err(|e| (req_id, opcode, e))
    }
}

fn put_info(e: &mut Encoder, info: &LogInfo) {
    let d = &info.descriptor;
    e.u64(d.id.0)
        .u8(d.kind.as_u8())
        .opt_u64(d.parent.map(|p| p.0))
        .opt_u64(d.fork_point.map(|p| p.0))
        .bool(d.promotable)
        .u8(d.status.as_u8());
    match info.tail {
        None => {
            e.u8(0);
        }
        Some(a) => {
            e.u8(1);
            put_assigned(e, a);
        }
    }
}

fn get_info(d: &mut Decoder) -> Result<LogInfo> {
    let id = LogId(d.u64()?);
    let kind = LogKind::from_u8(d.u8()?).ok_or_else(|| EngineError::protocol("bad log kind"))?;
    let parent = d.opt_u64()?.map(LogId);
    let fork_point = d.opt_u64()?.map(Position);
    let promotable = d.bool()?;
    let status = LogStatus::from_u8(d.u8()?).ok_or_else(|| EngineError::protocol("bad log status"))?;
    let tail = if d.bool()? { Some(get_assigned(d)?) } else { None };
    Ok(LogInfo { descriptor: LogDescriptor { id, kind, parent, fork_point, promotable, status }, tail })
}

impl ResponseFrame {
    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.u64(self.req_id).u8(self.opcode);
        match &self.result {
            Err(err) => {
                e.u8(err.code as u8).str(&err.detail).opt_u64(err.boundary.map(|b| b.0));
            }
            Ok(reply) => {
                e.u8(0);
                match reply {
                    Reply::Position(a) => put_assigned(&mut e, *a),
                    Reply::Records(recs) => {
                        e.u32(recs.len() as u32);
                        for r in recs {
                            e.bytes(r);
                        }
                    }
                    Reply::Log(l) => {
                        e.u64(l.0);
                    }
                    Reply::Logs(ls) => {
                        e.u32(ls.len() as u32);
                        for l in ls {
                            e.u64(l.0);
                        }
                    }
                    Reply::Forest(infos) => {
                        e.u32(infos.len() as u32);
                        for i in infos {
                            put_info(&mut e, i);
                        }
                    }
                }
            }
        }
        with_len(e.finish())
    }

    pub fn decode(body: &[u8]) -> Result<ResponseFrame> {
        let mut d = Decoder::new(body);
        let req_id = d.u64()?;
        let opcode = d.u8()?;
        let status = d.u8()?;
        let result = if status != 0 {
            let code = ErrorCode::from_u8(status).ok_or_else(|| EngineError::protocol(format!("bad status {status}")))?;
            let detail = d.string()?;
            let boundary = d.opt_u64()?.map(Position);
            Err(EngineError { code, detail, boundary })
        } else {
            Ok(match opcode {
                OP_APPEND | OP_GET_TAIL => Reply::Position(get_assigned(&mut d)?),
                OP_READ => {
                    let n = d.u32()? as usize;
                    if n > d.remaining() / 4 {
                        return Err(EngineError::protocol("record count exceeds frame"));
                    }
                    let mut recs = Vec::with_capacity(n);
                    for _ in 0..n {
                        recs.push(d.bytes()?.to_vec());
                    }
                    Reply::Records(recs)
                }
                OP_CFORK | OP_SFORK | OP_CREATE_ROOT => Reply::Log(LogId(d.u64()?)),
                OP_PROMOTE | OP_SQUASH => {
                    let n = d.u32()? as usize;
                    if n > d.remaining() / 8 {
                        return Err(EngineError::protocol("log count exceeds frame"));
                    }
                    Reply::Logs((0..n).map(|_| d.u64().map(LogId)).collect::<Result<_>>()?)
                }
                OP_DESCRIBE => {
                    let n = d.u32()? as usize;
                    let mut infos = Vec::with_capacity(n.min(d.remaining()));
                    for _ in 0..n {
                        infos.push(get_info(&mut d)?);
                    }
                    Reply::Forest(infos)
                }
                op => return Err(EngineError::protocol(format!("unknown opcode {op}"))),
            })
        };
        d.finish()?;
        Ok(ResponseFrame { req_id, opcode, result })
    }
}

pub enum Frame {
    Body(Vec<u8>),
    /// Declared length above [`MAX_FRAME`]; the bytes were skipped.
    Oversized(u32),
}

/// Read one length-prefixed frame. `Ok(None)` on clean end of stream.
pub fn read_frame(r: &mut impl Read) -> io::Result<Option<Frame>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME {
        io::copy(&mut r.take(len as u64), &mut io::sink())?;
        return Ok(Some(Frame::Oversized(len)));
    }
    let mut body = vec![0; len as usize];
    r.read_exact(&mut body)?;
    Ok(Some(Frame::Body(body)))
}

pub fn write_all(w: &mut impl Write, bytes: &[u8]) -> io::Result<()> {
    w.write_all(bytes)?;
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_request() -> impl Strategy<Value = Request> {
        let log = any::<u64>().prop_map(LogId);
        prop_oneof![
            (log.clone(), prop::collection::vec(any::<u8>(), 0..64)).prop_map(|(log, payload)| Request::Append { log, payload }),
            (log.clone(), any::<u64>(), any::<u64>()).prop_map(|(log, f, t)| Request::Read { log, from: Position(f), to: Position(t) }),
            (log.clone(), any::<bool>(), any::<bool>()).prop_map(|(parent, promotable, dedicated)| Request::CFork {
                parent,
                promotable,
                dedicated
            }),
            (log.clone(), any::<Option<u64>>(), any::<bool>()).prop_map(|(parent, past, dedicated)| Request::SFork {
                parent,
                past: past.map(Position),
                dedicated
            }),
            log.clone().prop_map(|child| Request::Promote { child }),
            log.clone().prop_map(|log| Request::Squash { log }),
            log.prop_map(|log| Request::GetTail { log }),
            Just(Request::Describe),
            Just(Request::CreateRoot),
        ]
    }

    fn arb_assigned() -> impl Strategy<Value = Assigned> {
        prop_oneof![Just(Assigned::Withheld), any::<u64>().prop_map(|p| Assigned::At(Position(p)))]
    }

    fn arb_info() -> impl Strategy<Value = LogInfo> {
        (any::<u64>(), 0u8..3, any::<Option<u64>>(), any::<Option<u64>>(), any::<bool>(), 0u8..3, prop::option::of(arb_assigned()))
            .prop_map(|(id, k, parent, fp, promotable, st, tail)| LogInfo {
                descriptor: LogDescriptor {
                    id: LogId(id),
                    kind: LogKind::from_u8(k).unwrap(),
                    parent: parent.map(LogId),
                    fork_point: fp.map(Position),
                    promotable,
                    status: LogStatus::from_u8(st).unwrap(),
                },
                tail,
            })
    }

    fn arb_response() -> impl Strategy<Value = ResponseFrame> {
        let ok = prop_oneof![
            (prop_oneof![Just(OP_APPEND), Just(OP_GET_TAIL)], arb_assigned()).prop_map(|(op, a)| (op, Reply::Position(a))),
            prop::collection::vec(prop::collection::vec(any::<u8>(), 0..16), 0..6).prop_map(|r| (OP_READ, Reply::Records(r))),
            (prop_oneof![Just(OP_CFORK), Just(OP_SFORK), Just(OP_CREATE_ROOT)], any::<u64>())
                .prop_map(|(op, l)| (op, Reply::Log(LogId(l)))),
            (prop_oneof![Just(OP_PROMOTE), Just(OP_SQUASH)], prop::collection::vec(any::<u64>(), 0..6))
                .prop_map(|(op, ls)| (op, Reply::Logs(ls.into_iter().map(LogId).collect()))),
            prop::collection::vec(arb_info(), 0..4).prop_map(|i| (OP_DESCRIBE, Reply::Forest(i))),
        ];
        let err = (1u8..=9, ".{0,20}", any::<Option<u64>>(), 1u8..=9).prop_map(|(c, detail, b, op)| {
            (op, Err(EngineError { code: ErrorCode::from_u8(c).unwrap(), detail, boundary: b.map(Position) }))
        });
        (any::<u64>(), prop_oneof![ok.prop_map(|(op, r)| (op, Ok(r))), err]).prop_map(|(req_id, (opcode, result))| ResponseFrame {
            req_id,
            opcode,
            result,
        })
    }

    proptest! {
        #[test]
        fn request_round_trip(req_id in any::<u64>(), request in arb_request()) {
            let frame = RequestFrame { req_id, request };
            let bytes = frame.encode();
            prop_assert_eq!(u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize, bytes.len() - 4);
            prop_assert_eq!(RequestFrame::decode(&bytes[4..]).unwrap(), frame);
        }

        #[test]
        fn response_round_trip(frame in arb_response()) {
            let bytes = frame.encode();
            prop_assert_eq!(ResponseFrame::decode(&bytes[4..]).unwrap(), frame);
        }
    }

    #[test]
    fn withheld_is_flag_zero() {
        let f = ResponseFrame { req_id: 1, opcode: OP_APPEND, result: Ok(Reply::Position(Assigned::Withheld)) };
        assert_eq!(&f.encode()[4..], &[0, 0, 0, 0, 0, 0, 0, 1, OP_APPEND, 0, 0]);
    }

    #[test]
    fn malformed_request_keeps_its_id() {
        let (id, op, err) = RequestFrame::decode(&[0, 0, 0, 0, 0, 0, 0, 7, 42]).unwrap_err();
        assert_eq!((id, op, err.code), (7, 42, ErrorCode::ProtocolError));
    }
}
