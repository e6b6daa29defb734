//! Forkable, diskless shared log.
//!
//! Brokers batch appended records into immutable objects in an object store
//! and submit their metadata to a single metadata layer, which sequences
//! them into positions. Logs can be forked cheaply: a continuous fork keeps
//! seeing its parent's later appends, a severed fork stops inheriting at the
//! fork point. Promotable continuous forks can be merged back into their
//! parent or thrown away.

pub mod codec;
pub mod command;
pub mod error;
pub mod harness;
pub mod hli;
pub mod ltt;
pub mod metastate;
pub mod seqlog;
pub mod sequencer;
pub mod service;
pub mod store;
pub mod types;

pub use command::{Command, RecordMeta};
pub use error::{EngineError, ErrorCode, Result};
pub use metastate::{ApplyOutcome, ForestState};
pub use types::{Assigned, LogDescriptor, LogId, LogKind, LogStatus, ObjectId, ObjectRef, Position};
