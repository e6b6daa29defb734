//! Commands applied by the metadata state machine and written to the command log.

use serde::{Deserialize, Serialize};

use crate::codec::{Decoder, Encoder};
use crate::error::{EngineError, Result};
use crate::types::{LogId, ObjectId, ObjectRef, Position};

/// Metadata for one record inside a freshly written object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub log: LogId,
    pub byte_offset: u64,
    pub byte_length: u32,
}

impl RecordMeta {
    pub fn object_ref(&self, object_id: ObjectId) -> ObjectRef {
        ObjectRef::new(object_id, self.byte_offset, self.byte_length)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Command {
    CreateRoot,
    /// Records in list order are sequenced in that order.
    SequenceBatch {
        object_id: ObjectId,
        records: Vec<RecordMeta>,
    },
    CreateCFork {
        parent: LogId,
        promotable: bool,
    },
    CreateSFork {
        parent: LogId,
        past: Option<Position>,
    },
    Promote {
        child: LogId,
    },
    Squash {
        log: LogId,
    },
}

const TAG_ROOT: u8 = 0;
const TAG_BATCH: u8 = 1;
const TAG_CFORK: u8 = 2;
const TAG_SFORK: u8 = 3;
const TAG_PROMOTE: u8 = 4;
const TAG_SQUASH: u8 = 5;

impl Command {
    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        match self {
            Command::CreateRoot => {
                e.u8(TAG_ROOT);
            }
            Command::SequenceBatch { object_id, records } => {
                e.u8(TAG_BATCH).raw(&object_id.0).u32(records.len() as u32);
                for r in records {
                    e.u64(r.log.0).u64(r.byte_offset).u32(r.byte_length);
                }
            }
            Command::CreateCFork { parent, promotable } => {
                e.u8(TAG_CFORK).u64(parent.0).bool(*promotable);
            }
            Command::CreateSFork { parent, past } => {
                e.u8(TAG_SFORK).u64(parent.0).opt_u64(past.map(|p| p.0));
            }
            Command::Promote { child } => {
                e.u8(TAG_PROMOTE).u64(child.0);
            }
            Command::Squash { log } => {
                e.u8(TAG_SQUASH).u64(log.0);
            }
        }
        e.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Command> {
        let mut d = Decoder::new(bytes);
        let cmd = match d.u8()? {
            TAG_ROOT => Command::CreateRoot,
            TAG_BATCH => {
                let object_id = ObjectId(d.array()?);
                let n = d.u32()? as usize;
                if n > d.remaining() / 20 {
                    return Err(EngineError::protocol("record count exceeds payload"));
                }
                let mut records = Vec::with_capacity(n);
                for _ in 0..n {
                    records.push(RecordMeta { log: LogId(d.u64()?), byte_offset: d.u64()?, byte_length: d.u32()? });
                }
                Command::SequenceBatch { object_id, records }
            }
            TAG_CFORK => Command::CreateCFork { parent: LogId(d.u64()?), promotable: d.bool()? },
            TAG_SFORK => Command::CreateSFork { parent: LogId(d.u64()?), past: d.opt_u64()?.map(Position) },
            TAG_PROMOTE => Command::Promote { child: LogId(d.u64()?) },
            TAG_SQUASH => Command::Squash { log: LogId(d.u64()?) },
            t => return Err(EngineError::protocol(format!("unknown command tag {t}"))),
        };
        d.finish()?;
        Ok(cmd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_command() -> impl Strategy<Value = Command> {
        prop_oneof![
            Just(Command::CreateRoot),
            (any::<[u8; 16]>(), prop::collection::vec((any::<u64>(), any::<u64>(), any::<u32>()), 0..8)).prop_map(|(id, recs)| {
                Command::SequenceBatch {
                    object_id: ObjectId(id),
                    records: recs.into_iter().map(|(l, o, n)| RecordMeta { log: LogId(l), byte_offset: o, byte_length: n }).collect(),
                }
            }),
            (any::<u64>(), any::<bool>()).prop_map(|(p, promotable)| Command::CreateCFork { parent: LogId(p), promotable }),
            (any::<u64>(), any::<Option<u64>>()).prop_map(|(p, past)| Command::CreateSFork { parent: LogId(p), past: past.map(Position) }),
            any::<u64>().prop_map(|c| Command::Promote { child: LogId(c) }),
            any::<u64>().prop_map(|l| Command::Squash { log: LogId(l) }),
        ]
    }

    proptest! {
        #[test]
        fn encode_decode_identity(cmd in arb_command()) {
            prop_assert_eq!(Command::decode(&cmd.encode()).unwrap(), cmd);
        }
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let mut bytes = Command::Squash { log: LogId(3) }.encode();
        bytes.push(0);
        assert!(Command::decode(&bytes).is_err());
        assert!(Command::decode(&[42]).is_err());
    }
}
