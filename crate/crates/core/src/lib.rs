//! Simulator and library for insider-attack detection in gossip-consensus
//! networks.
//!
//! The pipeline: credential-gated node admission and trust scoring
//! ([`trust`]), randomized pairwise-averaging consensus over independent
//! instances ([`consensus`], [`sim`]), a stubborn attacker that pins its
//! state to a target value behind decaying masking noise ([`adversary`]),
//! layered drift-based detection and per-neighbor localization with
//! Monte-Carlo threshold calibration ([`detector`]), a hash-chained ledger of
//! confirmed verdicts ([`ledger`]), and an experiment harness that wires the
//! stages together and reports precision/recall/F1, false alarms, and
//! detection time ([`harness`], [`metrics`]).

pub mod adversary;
pub mod consensus;
pub mod detector;
pub mod error;
pub mod harness;
pub mod ledger;
pub mod metrics;
pub mod sim;
pub mod trust;

pub use error::{Error, Result};
