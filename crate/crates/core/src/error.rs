//! Error type shared by every subsystem in the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an operation's inputs was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A serialized model blob failed validation (magic, version, shape, length).
    #[error("corrupt model: {0}")]
    CorruptModel(String),

    /// An API was driven outside its allowed state machine (e.g. stepping a
    /// finished episode).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// A wire-level problem: malformed frame, unknown message type, or an
    /// `Error` envelope received from a peer.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// A text artifact (cloud file, CSV, config) could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
