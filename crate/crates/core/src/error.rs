use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("tensor has no nonzero entries")]
    EmptyTensor,
    #[error("mode {mode} has length 0")]
    ZeroLengthMode { mode: usize },
    #[error("coordinate {coord} out of range for mode {mode} of length {len}")]
    CoordinateOutOfRange { mode: usize, coord: usize, len: usize },
    #[error("expected {expected} coordinates per entry, got {got}")]
    OrderMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid encoding plan: {0}")]
    InvalidPlan(String),
    #[error("position {position} needs more than {bits} bits")]
    PositionOutOfRange { position: u128, bits: u32 },
    #[error("encoding needs {bits} bits, the widest supported word is 128")]
    EncodingTooWide { bits: u32 },
    #[error("action {action} is not valid in the current state")]
    InvalidAction { action: usize },
    #[error("state is terminal")]
    TerminalState,
    #[error("state is not terminal")]
    NonTerminalState,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("evaluation failed: {0}")]
    Evaluation(String),
}
