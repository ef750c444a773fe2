//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by topology construction, scoring, detection, and the
/// experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("node {node} out of range for {count} nodes")]
    NodeOutOfRange { node: usize, count: usize },

    #[error("self-loop edge at node {node} is not allowed")]
    SelfLoop { node: usize },

    #[error("edge ({i}, {j}) is not in the topology")]
    EdgeNotInTopology { i: usize, j: usize },

    #[error("observer {observer} has no neighbors to score")]
    EmptyNeighborhood { observer: usize },

    #[error("threshold {name} = {value} outside its valid domain")]
    InvalidThreshold { name: &'static str, value: f64 },

    #[error("comparison matrix entry ({row}, {col}) breaks reciprocity")]
    NonReciprocal { row: usize, col: usize },

    #[error("comparison matrix entry ({row}, {col}) must be positive")]
    NonPositiveEntry { row: usize, col: usize },

    #[error("fuzzy measure needs {expected} subset values, got {got}")]
    MissingSubsets { expected: usize, got: usize },

    #[error("fuzzy measure ground set larger than {max} criteria")]
    GroundSetTooLarge { max: usize },

    #[error("node {node} is not a configured attacker")]
    NotAnAttacker { node: usize },

    #[error("neighbor {neighbor} missing record for instance {instance}")]
    MissingInstanceRecord { neighbor: usize, instance: usize },

    #[error("observation log for node {observer} does not match its neighbor set")]
    NeighborMismatch { observer: usize },

    #[error("credential field {field} must be non-empty")]
    EmptyCredentialField { field: &'static str },

    #[error("issuer {issuer} is not on the trusted list")]
    UntrustedIssuer { issuer: String },

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("topology is not connected in expectation")]
    DisconnectedTopology,

    #[error("ledger invalid at block {index}")]
    LedgerInvalid { index: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
