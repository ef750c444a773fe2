//! Stubborn insider attacker model.
//!
//! An attacker's slot is immutable to gossip: after every iteration its state
//! is overwritten with the target value plus exponentially decaying masking
//! noise, so its trajectory mimics a legitimately converging node while it
//! drags the rest of the network toward the target.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::consensus::{expected_weight_matrix, Topology, WeightMatrix};
use crate::error::{Error, Result};

/// Per-instance target value(s): one scalar shared by every instance, or an
/// explicit list with one entry per instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Scalar(f64),
    PerInstance(Vec<f64>),
}

impl AlphaSpec {
    /// Expand to one target per instance.
    pub fn resolve(&self, instances: usize) -> Result<Vec<f64>> {
        match self {
            Self::Scalar(alpha) => Ok(vec![*alpha; instances]),
            Self::PerInstance(list) => {
                if list.len() != instances {
                    return Err(Error::InvalidConfig {
                        field: "attack.alpha".into(),
                        reason: format!("expected {} targets, got {}", instances, list.len()),
                    });
                }
                Ok(list.clone())
            }
        }
    }

    /// Mean target across instances.
    pub fn mean(&self) -> f64 {
        match self {
            Self::Scalar(alpha) => *alpha,
            Self::PerInstance(list) => {
                if list.is_empty() {
                    0.0
                } else {
                    list.iter().sum::<f64>() / list.len() as f64
                }
            }
        }
    }
}

/// Declarative attack description as it appears in the experiment config:
/// `{"attackers": [...], "alpha": x, "rho": r, "sigma": s, "start": k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub attackers: BTreeSet<usize>,
    pub alpha: AlphaSpec,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub start: usize,
}

fn default_rho() -> f64 {
    0.9
}

fn default_sigma() -> f64 {
    0.05
}

impl AttackSpec {
    pub fn validate(&self, node_count: usize) -> Result<()> {
        for &node in &self.attackers {
            if node >= node_count {
                return Err(Error::NodeOutOfRange {
                    node,
                    count: node_count,
                });
            }
        }
        if !self.attackers.is_empty() && self.attackers.len() >= node_count {
            return Err(Error::InvalidConfig {
                field: "attack.attackers".into(),
                reason: "at least one node must stay honest".into(),
            });
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidConfig {
                field: "attack.rho".into(),
                reason: format!("decay must lie in [0, 1), got {}", self.rho),
            });
        }
        if self.sigma < 0.0 {
            return Err(Error::InvalidConfig {
                field: "attack.sigma".into(),
                reason: format!("noise scale must be non-negative, got {}", self.sigma),
            });
        }
        Ok(())
    }
}

/// Runtime attack state: the spec resolved against a node count and instance
/// count, with per-attacker per-instance initial masks drawn like normal
/// initial states.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    attackers: BTreeSet<usize>,
    targets: Vec<f64>,
    rho: f64,
    sigma: f64,
    start: usize,
    masks: BTreeMap<usize, Vec<f64>>,
}

impl AttackConfig {
    pub fn new(
        spec: &AttackSpec,
        node_count: usize,
        instances: usize,
        masks: BTreeMap<usize, Vec<f64>>,
    ) -> Result<Self> {
        spec.validate(node_count)?;
        if masks.len() != spec.attackers.len()
            || masks.keys().any(|k| !spec.attackers.contains(k))
            || masks.values().any(|m| m.len() != instances)
        {
            return Err(Error::InvalidConfig {
                field: "attack.masks".into(),
                reason: "one mask per attacker per instance required".into(),
            });
        }
        Ok(Self {
            attackers: spec.attackers.clone(),
            targets: spec.alpha.resolve(instances)?,
            rho: spec.rho,
            sigma: spec.sigma,
            start: spec.start,
            masks,
        })
    }

    /// Resolve a spec by drawing masks from the given initial-state
    /// distribution, one per attacker per instance in ascending attacker
    /// order.
    pub fn from_spec<R: Rng + ?Sized>(
        spec: &AttackSpec,
        node_count: usize,
        instances: usize,
        init_mean: f64,
        init_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let normal = Normal::new(init_mean, init_std).map_err(|_| Error::InvalidConfig {
            field: "initial.std".into(),
            reason: "standard deviation must be finite and non-negative".into(),
        })?;
        let mut masks = BTreeMap::new();
        for &attacker in &spec.attackers {
            let draws: Vec<f64> = (0..instances).map(|_| normal.sample(rng)).collect();
            masks.insert(attacker, draws);
        }
        Self::new(spec, node_count, instances, masks)
    }

    pub fn attackers(&self) -> &BTreeSet<usize> {
        &self.attackers
    }

    pub fn is_attacker(&self, node: usize) -> bool {
        self.attackers.contains(&node)
    }

    pub fn target(&self, instance: usize) -> f64 {
        self.targets[instance]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn start_iteration(&self) -> usize {
        self.start
    }

    pub fn mask(&self, attacker: usize, instance: usize) -> Result<f64> {
        self.masks
            .get(&attacker)
            .map(|m| m[instance])
            .ok_or(Error::NotAnAttacker { node: attacker })
    }

    /// Masking noise `n(s) = (m − α)·ρ^s + σ·ρ^s·w` with `w` a standard
    /// normal draw; decays to 0 so the reported value slides from the mask
    /// toward the target. Callers must pass a configured attacker.
    pub fn masking_noise<R: Rng + ?Sized>(
        &self,
        attacker: usize,
        instance: usize,
        iteration: usize,
        rng: &mut R,
    ) -> f64 {
        let mask = self
            .masks
            .get(&attacker)
            .expect("masking_noise requires a configured attacker")[instance];
        let alpha = self.targets[instance];
        let decay = self.rho.powf(iteration as f64);
        let w: f64 = rand_distr::StandardNormal.sample(rng);
        (mask - alpha) * decay + self.sigma * decay * w
    }

    /// Reported attacker value `α + n(s)`. This replaces whatever gossip
    /// wrote to the attacker's slot at that iteration.
    pub fn attacker_update<R: Rng + ?Sized>(
        &self,
        attacker: usize,
        instance: usize,
        iteration: usize,
        rng: &mut R,
    ) -> Result<f64> {
        if !self.is_attacker(attacker) {
            return Err(Error::NotAnAttacker { node: attacker });
        }
        Ok(self.targets[instance] + self.masking_noise(attacker, instance, iteration, rng))
    }
}

/// Split a full state vector into (attacker sub-vector, normal sub-vector),
/// each in ascending node order.
pub fn partition_states(states: &[f64], attackers: &BTreeSet<usize>) -> (Vec<f64>, Vec<f64>) {
    let mut hostile = Vec::with_capacity(attackers.len());
    let mut normal = Vec::with_capacity(states.len().saturating_sub(attackers.len()));
    for (node, &value) in states.iter().enumerate() {
        if attackers.contains(&node) {
            hostile.push(value);
        } else {
            normal.push(value);
        }
    }
    (hostile, normal)
}

/// Inverse of [`partition_states`]: re-interleave the two sub-vectors into a
/// full state vector of `node_count` entries.
pub fn departition_states(
    hostile: &[f64],
    normal: &[f64],
    attackers: &BTreeSet<usize>,
    node_count: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(node_count);
    let mut h = hostile.iter();
    let mut n = normal.iter();
    for node in 0..node_count {
        if attackers.contains(&node) {
            out.push(*h.next().expect("attacker sub-vector too short"));
        } else {
            out.push(*n.next().expect("normal sub-vector too short"));
        }
    }
    out
}

/// Expected weight matrix of the attacked system: attacker rows become
/// identity rows (their states are immutable), normal rows keep their
/// attack-free expected weights.
pub fn blocked_expected_matrix(
    topology: &Topology,
    attackers: &BTreeSet<usize>,
) -> Result<WeightMatrix> {
    for &node in attackers {
        if node >= topology.node_count() {
            return Err(Error::NodeOutOfRange {
                node,
                count: topology.node_count(),
            });
        }
    }
    let base = expected_weight_matrix(topology);
    let mut entries = base.entries().to_vec();
    for &attacker in attackers {
        for (col, cell) in entries[attacker].iter_mut().enumerate() {
            *cell = if col == attacker { 1.0 } else { 0.0 };
        }
    }
    Ok(WeightMatrix::from_rows_unchecked(entries))
}
