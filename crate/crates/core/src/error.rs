use alloc::string::String;

/// Errors raised by the learning components.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("stream capacity exceeded: depth {depth} holds at most {capacity} symbols")]
    CapacityExceeded { depth: u32, capacity: u64 },

    #[error("protocol violation: {0}")]
    Protocol(&'static str),

    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed state: {0}")]
    MalformedState(String),
}
