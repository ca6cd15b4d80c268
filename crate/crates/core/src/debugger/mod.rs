//! Driver side of the restricted debugger.
//!
//! The shim speaks newline-delimited JSON over its standard streams. On
//! start it sends a greeting `{"id": 0, "output": ..., "state": ...}`; after
//! that each request `{"id", "verb", "arg"}` gets exactly one reply
//! `{"id", "output", "state"}` with the same id. `state.kind` is one of
//! `running`, `paused` (with `file` and `line`), `finished` or `error`.

mod command;
mod session;
mod transport;

pub use command::{whitelist_text, DebugCommand, Verb};
pub use session::{DebugSession, DebuggerLauncher, ReplyFrame, RequestFrame, SessionState, ShimState, ShimStateKind};
pub use transport::{ProcessShim, RecvError, ShimTransport};
