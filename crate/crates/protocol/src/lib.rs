//! Wire protocol and task lifecycle state machine shared by the
//! coordinator, workers, the scheduler and the experiment harness.
//!
//! Pure functions and value types throughout; nothing here owns a socket
//! or a thread.

pub mod codec;
pub mod eventlog;
pub mod message;
pub mod state;

pub use codec::{
    decode_message, encode_message, read_message, write_message, CodecError, MalformedMessage,
    MAX_FRAME_BYTES, SCHEMA_VERSION,
};
pub use message::{
    AttemptOutcome, CommandAction, CommandMessage, Directive, HeartbeatMessage, Message,
    ObservedState, PreemptPrimitive, Priority, StateEvent, TaskId, TaskLaunchDescriptor,
    TaskRecord, TaskReport, WorkerId, WorkerRecord,
};
pub use state::{apply_transition, IllegalTransition, TaskState, TransitionEvent};
