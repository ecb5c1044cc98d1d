use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which shared stream produced a message, for protocol errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    V,
    Rho,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::V => f.write_str("V"),
            Channel::Rho => f.write_str("RHO"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("numeric domain: {0}")]
    NumericDomain(String),

    /// `k` is the global step when known; node-level code only knows its local counter.
    #[error("numeric divergence at node {node} (local t={t}{})", .k.map(|k| format!(", global k={k}")).unwrap_or_default())]
    Divergence {
        node: usize,
        t: u64,
        k: Option<usize>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("parse error at byte offset {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    #[error("protocol error: {kind} message {from}->{to}: {msg}")]
    Protocol {
        kind: Channel,
        from: usize,
        to: usize,
        msg: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("equivalence failure at k={k}: {what} differs by {diff:e}")]
    Equivalence { k: usize, what: String, diff: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attach the global step index to a node-level divergence.
    pub fn at_global(self, k: usize) -> Self {
        match self {
            Error::Divergence { node, t, .. } => Error::Divergence {
                node,
                t,
                k: Some(k),
            },
            other => other,
        }
    }
}
