//! Multi-instance simulation runner shared by the detector's calibration and
//! the experiment harness.
//!
//! Instances are independent: each gets its own seeded random source derived
//! from the root seed, draws one uniform edge per iteration, applies the
//! pairwise average, then overwrites every active attacker slot with its
//! reported value. Recorded trajectories are the detector's only input.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::adversary::AttackConfig;
use crate::consensus::{InstanceStates, Topology};
use crate::error::{Error, Result};

/// Normal distribution of attack-free initial states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialStateModel {
    pub mean: f64,
    pub std: f64,
}

impl InitialStateModel {
    pub fn validate(&self) -> Result<()> {
        if !self.std.is_finite() || self.std < 0.0 || !self.mean.is_finite() {
            return Err(Error::InvalidConfig {
                field: "initial".into(),
                reason: "mean must be finite and std non-negative".into(),
            });
        }
        Ok(())
    }

    fn distribution(&self) -> Result<Normal<f64>> {
        self.validate()?;
        Normal::new(self.mean, self.std).map_err(|_| Error::InvalidConfig {
            field: "initial.std".into(),
            reason: "not a valid normal distribution".into(),
        })
    }

    /// Draw an `instances x node_count` matrix of initial states.
    pub fn sample_matrix<R: Rng + ?Sized>(
        &self,
        instances: usize,
        node_count: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>> {
        let normal = self.distribution()?;
        Ok((0..instances)
            .map(|_| (0..node_count).map(|_| normal.sample(rng)).collect())
            .collect())
    }
}

/// Recorded states for every instance, iteration, and node.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    data: Vec<Vec<Vec<f64>>>,
}

impl Trajectories {
    pub fn instances(&self) -> usize {
        self.data.len()
    }

    pub fn iterations(&self) -> usize {
        self.data[0].len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.data[0][0].len()
    }

    /// State vector of `instance` at iteration `s`.
    pub fn state(&self, instance: usize, iteration: usize) -> &[f64] {
        &self.data[instance][iteration]
    }

    pub fn initial(&self, instance: usize) -> &[f64] {
        self.state(instance, 0)
    }

    pub fn final_state(&self, instance: usize) -> &[f64] {
        self.state(instance, self.iterations())
    }

    /// CSV export with columns `instance,iteration,node,state`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "instance,iteration,node,state")?;
        for (l, per_iter) in self.data.iter().enumerate() {
            for (s, states) in per_iter.iter().enumerate() {
                for (node, value) in states.iter().enumerate() {
                    writeln!(out, "{l},{s},{node},{value}")?;
                }
            }
        }
        Ok(())
    }
}

/// Stable stream derivation for per-instance random sources
/// (splitmix64-style mixing of root seed and stream index).
pub fn derive_seed(root: u64, stream: u64) -> u64 {
    let mut z = root
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Run every instance for `iterations` steps from the given initial states,
/// with optional attacker overrides, and record the full trajectories.
///
/// Attackers behave normally before their start iteration. From the start
/// iteration on, each attacker slot is rewritten after every gossip exchange
/// (and at initialization when the attack starts at 0), in ascending node
/// order.
pub fn simulate(
    topology: &Topology,
    initial: &[Vec<f64>],
    attack: Option<&AttackConfig>,
    iterations: usize,
    root_seed: u64,
) -> Result<Trajectories> {
    if initial.is_empty() {
        return Err(Error::InvalidConfig {
            field: "initial".into(),
            reason: "at least one instance required".into(),
        });
    }
    for row in initial {
        if row.len() != topology.node_count() {
            return Err(Error::InvalidConfig {
                field: "initial".into(),
                reason: format!(
                    "expected {} states per instance, got {}",
                    topology.node_count(),
                    row.len()
                ),
            });
        }
    }
    let instances = initial.len();
    let edge_count = topology.edge_count();
    let mut rngs: Vec<ChaCha20Rng> = (0..instances)
        .map(|l| ChaCha20Rng::seed_from_u64(derive_seed(root_seed, 1 + l as u64)))
        .collect();

    let mut states = InstanceStates::new(initial.to_vec())?;
    if let Some(atk) = attack {
        if atk.start_iteration() == 0 {
            for (l, rng) in rngs.iter_mut().enumerate() {
                for &a in atk.attackers() {
                    let value = atk.attacker_update(a, l, 0, rng)?;
                    states.set_state(l, a, value);
                }
            }
        }
    }
    let mut data: Vec<Vec<Vec<f64>>> = (0..instances)
        .map(|l| {
            let mut per_iter = Vec::with_capacity(iterations + 1);
            per_iter.push(states.states(l).to_vec());
            per_iter
        })
        .collect();

    for s in 1..=iterations {
        for (l, rng) in rngs.iter_mut().enumerate() {
            if edge_count > 0 {
                let edge = topology.edges()[rng.gen_range(0..edge_count)];
                states.gossip_step(topology, l, edge)?;
            }
            if let Some(atk) = attack {
                if s >= atk.start_iteration() {
                    for &a in atk.attackers() {
                        let value = atk.attacker_update(a, l, s, rng)?;
                        states.set_state(l, a, value);
                    }
                }
            }
            data[l].push(states.states(l).to_vec());
        }
        states.advance_iteration();
    }
    Ok(Trajectories { data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{AlphaSpec, AttackSpec};
    use std::collections::BTreeSet;

    #[test]
    fn test_simulate_is_deterministic() {
        let t = Topology::complete(4).unwrap();
        let init = vec![vec![1.0, 2.0, 3.0, 4.0]; 3];
        let a = simulate(&t, &init, None, 50, 99).unwrap();
        let b = simulate(&t, &init, None, 50, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn test_simulate_preserves_sum_without_attack() {
        let t = Topology::complete(5).unwrap();
        let init = vec![vec![1.0, 2.0, 3.0, 4.0, 5.0]];
        let traj = simulate(&t, &init, None, 200, 7).unwrap();
        let target: f64 = init[0].iter().sum();
        for s in 0..=200 {
            let sum: f64 = traj.state(0, s).iter().sum();
            assert!((sum - target).abs() < 1e-12);
        }
    }

    #[test]
    fn test_simulate_attacker_slot_pinned() {
        let t = Topology::complete(3).unwrap();
        let spec = AttackSpec {
            attackers: BTreeSet::from([1]),
            alpha: AlphaSpec::Scalar(5.0),
            rho: 0.0,
            sigma: 0.0,
            start: 0,
        };
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let atk = AttackConfig::from_spec(&spec, 3, 1, 0.0, 1.0, &mut rng).unwrap();
        let traj = simulate(&t, &[vec![0.0, 0.0, 0.0]], Some(&atk), 100, 3).unwrap();
        // rho = 0: from iteration 1 on the attacker reports exactly alpha.
        for s in 1..=100 {
            assert_eq!(traj.state(0, s)[1], 5.0);
        }
    }

    #[test]
    fn test_simulate_attack_starts_late() {
        let t = Topology::complete(2).unwrap();
        let spec = AttackSpec {
            attackers: BTreeSet::from([0]),
            alpha: AlphaSpec::Scalar(9.0),
            rho: 0.0,
            sigma: 0.0,
            start: 10,
        };
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let atk = AttackConfig::from_spec(&spec, 2, 1, 0.0, 1.0, &mut rng).unwrap();
        let traj = simulate(&t, &[vec![1.0, 3.0]], Some(&atk), 20, 3).unwrap();
        // Before onset both nodes sit at the plain average.
        assert_eq!(traj.state(0, 5), &[2.0, 2.0]);
        assert_eq!(traj.state(0, 20)[0], 9.0);
    }

    #[test]
    fn test_trajectories_csv_shape() {
        let t = Topology::complete(2).unwrap();
        let traj = simulate(&t, &[vec![1.0, 3.0]], None, 2, 1).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "instance,iteration,node,state");
        assert_eq!(lines.len(), 1 + 3 * 2);
    }

    #[test]
    fn test_derive_seed_distinct_streams() {
        let a = derive_seed(42, 0);
        let b = derive_seed(42, 1);
        let c = derive_seed(43, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }
}
