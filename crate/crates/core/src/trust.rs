//! Trust layer: credential-gated admission, fuzzy-measure validation,
//! normalized behavior metrics, pairwise-comparison weights, and the
//! indicator/rank/activity scores built from them.
//!
//! The four behavior metrics are normalized against neighborhood extrema.
//! Response time is suspicion-oriented (higher means more suspicious);
//! throughput, availability, and success rate are trust-oriented. The
//! aggregate indicator flips the response-time score so every component
//! points the same way before the weighted sum is compared to the
//! admission threshold.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

const AHP_TOL: f64 = 1e-10;
const AHP_MAX_ITER: usize = 100_000;
const RECIPROCAL_TOL: f64 = 1e-9;
const MEASURE_TOL: f64 = 1e-12;

/// Maximum ground-set size accepted for fuzzy measures (2^|Y| subset values).
pub const MAX_GROUND_SET: usize = 8;

/// Identity material a node presents when entering the network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Credential {
    pub node_id: usize,
    pub mac_address: Vec<u8>,
    pub public_key: Vec<u8>,
    pub issuer_id: String,
}

impl Credential {
    pub fn new(
        node_id: usize,
        mac_address: Vec<u8>,
        public_key: Vec<u8>,
        issuer_id: impl Into<String>,
    ) -> Result<Self> {
        let issuer_id = issuer_id.into();
        if mac_address.is_empty() {
            return Err(Error::EmptyCredentialField {
                field: "mac_address",
            });
        }
        if public_key.is_empty() {
            return Err(Error::EmptyCredentialField {
                field: "public_key",
            });
        }
        if issuer_id.is_empty() {
            return Err(Error::EmptyCredentialField { field: "issuer_id" });
        }
        Ok(Self {
            node_id,
            mac_address,
            public_key,
            issuer_id,
        })
    }
}

/// Registry of credentials issued by trusted certificate service providers.
#[derive(Debug, Clone, Default)]
pub struct CspRegistry {
    trusted_issuers: BTreeSet<String>,
    issued: BTreeMap<usize, Credential>,
}

impl CspRegistry {
    pub fn new(trusted_issuers: impl IntoIterator<Item = String>) -> Self {
        Self {
            trusted_issuers: trusted_issuers.into_iter().collect(),
            issued: BTreeMap::new(),
        }
    }

    pub fn is_trusted(&self, issuer: &str) -> bool {
        self.trusted_issuers.contains(issuer)
    }

    /// Record a credential; the issuer must already be on the trusted list.
    pub fn register(&mut self, credential: Credential) -> Result<()> {
        if !self.is_trusted(&credential.issuer_id) {
            return Err(Error::UntrustedIssuer {
                issuer: credential.issuer_id.clone(),
            });
        }
        self.issued.insert(credential.node_id, credential);
        Ok(())
    }

    pub fn credential(&self, node_id: usize) -> Option<&Credential> {
        self.issued.get(&node_id)
    }
}

/// Admission gate: `true` iff the presented credential was issued by a
/// trusted provider and matches the registry copy byte-for-byte. Every
/// failure mode maps to `false`; there is no error path.
pub fn authenticate(credential: &Credential, registry: &CspRegistry) -> bool {
    if !registry.is_trusted(&credential.issuer_id) {
        return false;
    }
    match registry.credential(credential.node_id) {
        Some(stored) => {
            stored.issuer_id == credential.issuer_id
                && stored.mac_address == credential.mac_address
                && stored.public_key == credential.public_key
        }
        None => false,
    }
}

/// One node's raw behavior readings plus the neighborhood extrema used to
/// normalize them. Raw values are clamped into their extrema range before
/// scoring, so every score lands in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSnapshot {
    pub response_time: f64,
    pub response_min: f64,
    pub response_max: f64,
    pub throughput: f64,
    pub throughput_min: f64,
    pub throughput_max: f64,
    pub failures: u32,
    pub failures_min: u32,
    pub failures_max: u32,
    pub fulfilled: u32,
    pub fulfilled_min: u32,
    pub fulfilled_max: u32,
}

impl MetricSnapshot {
    pub fn validate(&self) -> Result<()> {
        let ordered = self.response_min <= self.response_max
            && self.throughput_min <= self.throughput_max
            && self.failures_min <= self.failures_max
            && self.fulfilled_min <= self.fulfilled_max;
        if !ordered {
            return Err(Error::InvalidConfig {
                field: "metric_snapshot".into(),
                reason: "each extremum pair must satisfy min <= max".into(),
            });
        }
        Ok(())
    }

    /// Suspicion-oriented response-time score `(S_r − S_min)/(S_max − S_min)`.
    /// Returns 0 when the neighborhood range is degenerate.
    pub fn response_time_score(&self) -> f64 {
        normalized(self.response_time, self.response_min, self.response_max)
    }

    /// Trust-oriented throughput score `(G_r − G_min)/(G_max − G_min)`;
    /// 0 when the range is degenerate.
    pub fn throughput_score(&self) -> f64 {
        normalized(self.throughput, self.throughput_min, self.throughput_max)
    }

    /// Trust-oriented availability score `1 − (U_0 − U_min)/(U_max − U_min)`;
    /// 1 when the range is degenerate.
    pub fn availability_score(&self) -> f64 {
        1.0 - normalized(
            self.failures as f64,
            self.failures_min as f64,
            self.failures_max as f64,
        )
    }

    /// Trust-oriented success-rate score `1 − (T_0 − T_min)/(T_max − T_min)`;
    /// 1 when the range is degenerate.
    pub fn success_rate_score(&self) -> f64 {
        1.0 - normalized(
            self.fulfilled as f64,
            self.fulfilled_min as f64,
            self.fulfilled_max as f64,
        )
    }

    /// All four scores in aggregation order
    /// (response time, throughput, availability, success rate).
    pub fn scores(&self) -> [f64; 4] {
        [
            self.response_time_score(),
            self.throughput_score(),
            self.availability_score(),
            self.success_rate_score(),
        ]
    }
}

// When every neighbor reports the same value there is no evidence of
// deviation, so the fraction term is 0 for all four metric forms.
fn normalized(raw: f64, min: f64, max: f64) -> f64 {
    if max <= min {
        return 0.0;
    }
    let clamped = raw.clamp(min, max);
    (clamped - min) / (max - min)
}

/// Per-node trust summary: the four metric scores, the aggregation weights,
/// the admission indicator, the rank (indicator count over the window), and
/// the neighborhood-normalized activity level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrustProfile {
    pub scores: [f64; 4],
    pub weights: [f64; 4],
    pub indicator: bool,
    pub rank: f64,
    pub activity: f64,
}

/// Monotone set function over the power set of a small criterion set.
///
/// `values[mask]` is the measure of the subset encoded by `mask` over the
/// ground-set labels, so index 0 is the empty set and `2^|Y| − 1` the full
/// set.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyMeasure {
    labels: Vec<String>,
    values: Vec<f64>,
}

/// One broken fuzzy-measure axiom.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureViolation {
    /// The empty set must measure 0.
    EmptySet { value: f64 },
    /// The full ground set must measure 1.
    FullSet { value: f64 },
    /// A subset measuring more than one of its supersets.
    Monotonicity {
        subset: u32,
        superset: u32,
        subset_value: f64,
        superset_value: f64,
    },
}

/// Outcome of checking the boundary and monotonicity axioms.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureReport {
    pub valid: bool,
    pub violations: Vec<MeasureViolation>,
}

impl FuzzyMeasure {
    /// Wrap explicit subset values; `values.len()` must be `2^|labels|` and
    /// the ground set is capped at [`MAX_GROUND_SET`] criteria.
    pub fn new(labels: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if labels.len() > MAX_GROUND_SET {
            return Err(Error::GroundSetTooLarge {
                max: MAX_GROUND_SET,
            });
        }
        let expected = 1usize << labels.len();
        if values.len() != expected {
            return Err(Error::MissingSubsets {
                expected,
                got: values.len(),
            });
        }
        Ok(Self { labels, values })
    }

    /// Additive measure from non-negative per-criterion weights, normalized
    /// so the full set measures 1. Additive measures always satisfy the
    /// axioms.
    pub fn additive(labels: Vec<String>, weights: &[f64]) -> Result<Self> {
        if weights.len() != labels.len() {
            return Err(Error::InvalidConfig {
                field: "fuzzy_weights".into(),
                reason: "one weight per criterion required".into(),
            });
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 || !total.is_finite() || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidConfig {
                field: "fuzzy_weights".into(),
                reason: "weights must be non-negative with positive sum".into(),
            });
        }
        let n = labels.len();
        let values: Vec<f64> = (0u32..(1 << n) as u32)
            .map(|mask| {
                let sum: f64 = (0..n)
                    .filter(|&k| mask & (1 << k) != 0)
                    .map(|k| weights[k])
                    .sum();
                sum / total
            })
            .collect();
        Self::new(labels, values)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn value(&self, mask: u32) -> f64 {
        self.values[mask as usize]
    }

    /// Human-readable label set for a subset mask.
    pub fn describe(&self, mask: u32) -> String {
        let names: Vec<&str> = (0..self.labels.len())
            .filter(|&k| mask & (1 << k) != 0)
            .map(|k| self.labels[k].as_str())
            .collect();
        format!("{{{}}}", names.join(", "))
    }

    /// Check boundary values and monotonicity over every subset pair
    /// `P ⊆ Q`. Every violated pair is reported.
    pub fn validate(&self) -> MeasureReport {
        let full = (self.values.len() - 1) as u32;
        let mut violations = Vec::new();
        if self.values[0].abs() > MEASURE_TOL {
            violations.push(MeasureViolation::EmptySet {
                value: self.values[0],
            });
        }
        if (self.values[full as usize] - 1.0).abs() > MEASURE_TOL {
            violations.push(MeasureViolation::FullSet {
                value: self.values[full as usize],
            });
        }
        for superset in 0..=full {
            // Proper submask enumeration: visits every P ⊂ Q exactly once.
            let mut subset = superset.wrapping_sub(1) & superset;
            loop {
                if self.values[subset as usize] > self.values[superset as usize] + MEASURE_TOL {
                    violations.push(MeasureViolation::Monotonicity {
                        subset,
                        superset,
                        subset_value: self.values[subset as usize],
                        superset_value: self.values[superset as usize],
                    });
                }
                if subset == 0 {
                    break;
                }
                subset = subset.wrapping_sub(1) & superset;
            }
        }
        MeasureReport {
            valid: violations.is_empty(),
            violations,
        }
    }
}

/// Reciprocal pairwise-comparison matrix over the four nodal attributes
/// (or any K criteria): unit diagonal, `entries[j][i] = 1/entries[i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonMatrix {
    entries: Vec<Vec<f64>>,
}

impl ComparisonMatrix {
    pub fn new(entries: Vec<Vec<f64>>) -> Result<Self> {
        let k = entries.len();
        if k == 0 || entries.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidConfig {
                field: "comparison".into(),
                reason: "matrix must be square and non-empty".into(),
            });
        }
        for (i, row) in entries.iter().enumerate() {
            for (j, &value) in row.iter().enumerate() {
                if value <= 0.0 || !value.is_finite() {
                    return Err(Error::NonPositiveEntry { row: i, col: j });
                }
            }
        }
        for (i, row) in entries.iter().enumerate() {
            if (row[i] - 1.0).abs() > RECIPROCAL_TOL {
                return Err(Error::NonReciprocal { row: i, col: i });
            }
            for j in (i + 1)..k {
                if (entries[j][i] - 1.0 / row[j]).abs() > RECIPROCAL_TOL {
                    return Err(Error::NonReciprocal { row: j, col: i });
                }
            }
        }
        Ok(Self { entries })
    }

    /// Equal-preference matrix (all ones), yielding uniform weights.
    pub fn uniform(k: usize) -> Self {
        Self {
            entries: vec![vec![1.0; k]; k],
        }
    }

    pub fn order(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }
}

/// Attribute weights from a comparison matrix: the normalized principal
/// eigenvector, computed by power iteration. Components are positive and
/// sum to 1.
pub fn ahp_weights(cm: &ComparisonMatrix) -> Vec<f64> {
    let k = cm.order();
    let mut w = vec![1.0 / k as f64; k];
    for _ in 0..AHP_MAX_ITER {
        let mut next: Vec<f64> = cm
            .entries()
            .iter()
            .map(|row| row.iter().zip(&w).map(|(&a, &x)| a * x).sum())
            .collect();
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let delta = next
            .iter()
            .zip(&w)
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0, f64::max);
        w = next;
        if delta < AHP_TOL {
            break;
        }
    }
    w
}

/// Weighted admission indicator. The response-time score is flipped to
/// `1 − s_rt` so all four components are trust-oriented, then the weighted
/// aggregate is compared to the threshold (ties admit).
pub fn trust_indicator(scores: &[f64; 4], weights: &[f64; 4], tau: f64) -> Result<bool> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidThreshold {
            name: "tau",
            value: tau,
        });
    }
    let adjusted = [1.0 - scores[0], scores[1], scores[2], scores[3]];
    let aggregate: f64 = adjusted.iter().zip(weights).map(|(&s, &w)| s * w).sum();
    Ok(aggregate >= tau)
}

/// Node rank: how many window slots scored a positive indicator.
pub fn node_rank(indicator_history: &[bool]) -> f64 {
    indicator_history.iter().filter(|&&p| p).count() as f64
}

/// Activity level `(K_j − K_min)/(K_max − K_min)`, clamped to `[0, 1]`;
/// 0 when the neighborhood rank range is degenerate.
pub fn activity_level(rank: f64, rank_min: f64, rank_max: f64) -> f64 {
    normalized(rank, rank_min, rank_max)
}

impl fmt::Display for MeasureViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptySet { value } => write!(f, "empty set measures {value}, expected 0"),
            Self::FullSet { value } => write!(f, "full set measures {value}, expected 1"),
            Self::Monotonicity {
                subset,
                superset,
                subset_value,
                superset_value,
            } => write!(
                f,
                "subset {subset:#b} measures {subset_value} above its superset {superset:#b} at {superset_value}"
            ),
        }
    }
}
