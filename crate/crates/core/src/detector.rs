//! Layered decentralized detection and localization.
//!
//! Each normal node observes only the first and last states of its direct
//! neighbors across the consensus instances. The per-neighbor drift score
//! feeds a network-level statistic (mean absolute deviation of drifts around
//! their neighborhood mean) tested against the threshold `delta1`; only on an
//! alarm does the per-neighbor localization statistic (absolute drift
//! against `epsilon`) run. Both thresholds come from Monte-Carlo calibration
//! against attack-free and attacked simulations.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{AttackConfig, AttackSpec};
use crate::consensus::{connected_in_expectation, expected_weight_matrix, Topology};
use crate::error::{Error, Result};
use crate::sim::{derive_seed, simulate, InitialStateModel, Trajectories};

/// Hypothesis outcome at any detection layer: `Clear` for "no attacker",
/// `Alarm` for "attacker present".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Clear,
    Alarm,
}

impl Verdict {
    pub fn is_alarm(self) -> bool {
        matches!(self, Self::Alarm)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Clear => write!(f, "clear"),
            Self::Alarm => write!(f, "alarm"),
        }
    }
}

/// Which side of the localization threshold marks an attacker. The literal
/// reading (absolute drift above the threshold) is the default; calibration
/// can flip it when the attack parameters make attackers the quieter side.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[default]
    #[serde(rename = "gt")]
    Gt,
    #[serde(rename = "lt")]
    Lt,
}

// Thresholds must be finite and strictly positive; NaN fails this check.
fn positive(value: f64) -> bool {
    value.is_finite() && value > 0.0
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gt => write!(f, "gt"),
            Self::Lt => write!(f, "lt"),
        }
    }
}

/// Detection thresholds as stored in the experiment config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionThresholds {
    pub delta1: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub direction: Direction,
}

/// First and last observed neighbor states, per instance, for one observer.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationLog {
    observer: usize,
    records: BTreeMap<usize, Vec<(f64, f64)>>,
}

impl ObservationLog {
    /// Build from explicit per-neighbor `(first, last)` pairs. The recorded
    /// neighbors must match the observer's neighbor set exactly and every
    /// neighbor must carry the same positive number of instance records.
    pub fn new(
        observer: usize,
        records: BTreeMap<usize, Vec<(f64, f64)>>,
        topology: &Topology,
    ) -> Result<Self> {
        let neighbors = topology.neighbor_set(observer)?;
        if records.keys().copied().collect::<Vec<_>>()
            != neighbors.iter().copied().collect::<Vec<_>>()
        {
            return Err(Error::NeighborMismatch { observer });
        }
        let mut instances = None;
        for (&neighbor, entries) in &records {
            match instances {
                None => {
                    if entries.is_empty() {
                        return Err(Error::MissingInstanceRecord {
                            neighbor,
                            instance: 0,
                        });
                    }
                    instances = Some(entries.len());
                }
                Some(expected) => {
                    if entries.len() != expected {
                        return Err(Error::MissingInstanceRecord {
                            neighbor,
                            instance: entries.len().min(expected),
                        });
                    }
                }
            }
        }
        Ok(Self { observer, records })
    }

    /// Extract an observer's view from recorded trajectories, reading the
    /// initial state and the state at `upto` for every neighbor.
    pub fn from_trajectories(
        trajectories: &Trajectories,
        topology: &Topology,
        observer: usize,
        upto: usize,
    ) -> Result<Self> {
        let neighbors = topology.neighbor_set(observer)?;
        let mut records = BTreeMap::new();
        for neighbor in neighbors {
            let entries: Vec<(f64, f64)> = (0..trajectories.instances())
                .map(|l| {
                    (
                        trajectories.initial(l)[neighbor],
                        trajectories.state(l, upto)[neighbor],
                    )
                })
                .collect();
            records.insert(neighbor, entries);
        }
        Self::new(observer, records, topology)
    }

    pub fn observer(&self) -> usize {
        self.observer
    }

    pub fn neighbors(&self) -> impl Iterator<Item = usize> + '_ {
        self.records.keys().copied()
    }

    pub fn instances(&self) -> usize {
        self.records.values().next().map_or(0, Vec::len)
    }
}

/// Per-neighbor drift score: the first-to-last state change averaged over
/// instances.
pub fn score_xi(log: &ObservationLog) -> BTreeMap<usize, f64> {
    log.records
        .iter()
        .map(|(&neighbor, entries)| {
            let total: f64 = entries.iter().map(|&(first, last)| last - first).sum();
            (neighbor, total / entries.len() as f64)
        })
        .collect()
}

/// Network-level statistic and verdict: the mean absolute deviation of the
/// neighbor drift scores around their mean, alarmed when strictly above
/// `delta1` (a tie stays clear).
pub fn network_detect(xi: &BTreeMap<usize, f64>, delta1: f64) -> Result<(f64, Verdict)> {
    if xi.is_empty() {
        return Err(Error::EmptyNeighborhood { observer: 0 });
    }
    if !positive(delta1) {
        return Err(Error::InvalidThreshold {
            name: "delta1",
            value: delta1,
        });
    }
    let n = xi.len() as f64;
    let mean: f64 = xi.values().sum::<f64>() / n;
    let c1: f64 = xi.values().map(|&v| (v - mean).abs()).sum::<f64>() / n;
    let verdict = if c1 > delta1 {
        Verdict::Alarm
    } else {
        Verdict::Clear
    };
    Ok((c1, verdict))
}

/// Per-neighbor localization: compare each absolute drift score against
/// `epsilon` on the configured attacker side.
pub fn localize(
    xi: &BTreeMap<usize, f64>,
    epsilon: f64,
    direction: Direction,
) -> Result<BTreeMap<usize, Verdict>> {
    if !positive(epsilon) {
        return Err(Error::InvalidThreshold {
            name: "epsilon",
            value: epsilon,
        });
    }
    Ok(xi
        .iter()
        .map(|(&neighbor, &score)| {
            let k1 = score.abs();
            let hostile = match direction {
                Direction::Gt => k1 > epsilon,
                Direction::Lt => k1 < epsilon,
            };
            let verdict = if hostile {
                Verdict::Alarm
            } else {
                Verdict::Clear
            };
            (neighbor, verdict)
        })
        .collect())
}

/// One observer's complete detection output. Neighbor verdicts are only
/// populated when the network layer alarmed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    pub observer: usize,
    pub xi: BTreeMap<usize, f64>,
    pub c1: f64,
    pub network_verdict: Verdict,
    pub neighbor_verdicts: BTreeMap<usize, Verdict>,
    pub delta1: f64,
    pub epsilon: f64,
    pub direction: Direction,
}

/// Run the layered pipeline for one observer: drift scores, network verdict,
/// and (only on alarm) per-neighbor localization.
pub fn detect(log: &ObservationLog, thresholds: &DetectionThresholds) -> Result<DetectionReport> {
    let xi = score_xi(log);
    if xi.is_empty() {
        return Err(Error::EmptyNeighborhood {
            observer: log.observer(),
        });
    }
    let (c1, network_verdict) = network_detect(&xi, thresholds.delta1)?;
    let neighbor_verdicts = if network_verdict.is_alarm() {
        localize(&xi, thresholds.epsilon, thresholds.direction)?
    } else {
        BTreeMap::new()
    };
    Ok(DetectionReport {
        observer: log.observer(),
        xi,
        c1,
        network_verdict,
        neighbor_verdicts,
        delta1: thresholds.delta1,
        epsilon: thresholds.epsilon,
        direction: thresholds.direction,
    })
}

/// Sever the link between an observer and a flagged neighbor. Absent edges
/// are a no-op, so repeated isolation is idempotent.
pub fn isolate(topology: &Topology, i: usize, j: usize) -> Topology {
    topology.without_edge(i, j)
}

/// Calibrated thresholds plus the rates they achieved on the calibration
/// samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub delta1: f64,
    pub epsilon: f64,
    pub direction: Direction,
    /// Fraction of attack-free observer verdicts that alarm at `delta1`.
    pub achieved_far: f64,
    /// Attacker-pair flag rate at `epsilon` (attacked sample), when an
    /// attack was configured.
    pub achieved_tpr: Option<f64>,
    /// Normal-pair flag rate at `epsilon`.
    pub achieved_fpr: Option<f64>,
}

impl CalibrationOutcome {
    pub fn thresholds(&self) -> DetectionThresholds {
        DetectionThresholds {
            delta1: self.delta1,
            epsilon: self.epsilon,
            direction: self.direction,
        }
    }
}

/// Calibrate `delta1` to the target false-alarm rate and pick the
/// localization threshold and side empirically.
///
/// `delta1` is the empirical `1 − target_far` quantile of the network
/// statistic pooled over every observer across `trials` attack-free
/// simulations. With an attack configured, `epsilon` and the direction
/// maximize the separation (flag-rate gap) between attacker and normal
/// neighbor pairs over `trials` attacked simulations; without one, `epsilon`
/// falls back to the same false-alarm quantile applied to absolute drift
/// scores. Trial seeds are `root_seed + trial` for the attack-free pass and
/// `root_seed + trials + trial` for the attacked pass.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_thresholds(
    topology: &Topology,
    init: &InitialStateModel,
    instances: usize,
    iterations: usize,
    attack: Option<&AttackSpec>,
    target_far: f64,
    trials: usize,
    root_seed: u64,
) -> Result<CalibrationOutcome> {
    if trials < 100 {
        return Err(Error::InvalidConfig {
            field: "calibration.trials".into(),
            reason: format!("at least 100 trials required, got {trials}"),
        });
    }
    if !(target_far > 0.0 && target_far < 1.0) {
        return Err(Error::InvalidThreshold {
            name: "target_far",
            value: target_far,
        });
    }
    if instances == 0 || iterations == 0 {
        return Err(Error::InvalidConfig {
            field: "instances/iterations".into(),
            reason: "calibration needs at least one instance and one iteration".into(),
        });
    }
    if !connected_in_expectation(&expected_weight_matrix(topology)) {
        return Err(Error::DisconnectedTopology);
    }

    // Attack-free pass: pool the network statistic and absolute drift scores
    // over every (trial, observer) pair.
    let mut h0_c1 = Vec::with_capacity(trials * topology.node_count());
    let mut h0_abs_xi = Vec::new();
    for trial in 0..trials {
        let seed = root_seed.wrapping_add(trial as u64);
        let mut init_rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, 0));
        let initial = init.sample_matrix(instances, topology.node_count(), &mut init_rng)?;
        let trajectories = simulate(topology, &initial, None, iterations, seed)?;
        for observer in 0..topology.node_count() {
            let log =
                ObservationLog::from_trajectories(&trajectories, topology, observer, iterations)?;
            let xi = score_xi(&log);
            if xi.is_empty() {
                continue;
            }
            let n = xi.len() as f64;
            let mean: f64 = xi.values().sum::<f64>() / n;
            h0_c1.push(xi.values().map(|&v| (v - mean).abs()).sum::<f64>() / n);
            h0_abs_xi.extend(xi.values().map(|v| v.abs()));
        }
    }
    let delta1 = upper_quantile(&mut h0_c1, target_far).max(f64::EPSILON);
    let achieved_far =
        h0_c1.iter().filter(|&&c| c > delta1).count() as f64 / h0_c1.len() as f64;

    let (epsilon, direction, achieved_tpr, achieved_fpr) = match attack {
        Some(spec) => {
            spec.validate(topology.node_count())?;
            let mut hostile = Vec::new();
            let mut normal = Vec::new();
            for trial in 0..trials {
                let seed = root_seed.wrapping_add(trials as u64 + trial as u64);
                let mut init_rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, 0));
                let initial =
                    init.sample_matrix(instances, topology.node_count(), &mut init_rng)?;
                let cfg = AttackConfig::from_spec(
                    spec,
                    topology.node_count(),
                    instances,
                    init.mean,
                    init.std,
                    &mut init_rng,
                )?;
                let trajectories =
                    simulate(topology, &initial, Some(&cfg), iterations, seed)?;
                for observer in 0..topology.node_count() {
                    if cfg.is_attacker(observer) {
                        continue;
                    }
                    let log = ObservationLog::from_trajectories(
                        &trajectories,
                        topology,
                        observer,
                        iterations,
                    )?;
                    for (neighbor, score) in score_xi(&log) {
                        if cfg.is_attacker(neighbor) {
                            hostile.push(score.abs());
                        } else {
                            normal.push(score.abs());
                        }
                    }
                }
            }
            let (eps, dir, tpr, fpr) = best_separation(&hostile, &normal);
            (eps, dir, Some(tpr), Some(fpr))
        }
        None => {
            let epsilon = upper_quantile(&mut h0_abs_xi, target_far).max(f64::EPSILON);
            (epsilon, Direction::Gt, None, None)
        }
    };

    Ok(CalibrationOutcome {
        delta1,
        epsilon,
        direction,
        achieved_far,
        achieved_tpr,
        achieved_fpr,
    })
}

/// Empirical threshold leaving at most `tail` of the samples strictly above
/// it: sort ascending and take index `ceil((1 − tail)·N) − 1`.
fn upper_quantile(samples: &mut [f64], tail: f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    let position = ((1.0 - tail) * n as f64).ceil() as usize;
    samples[position.clamp(1, n) - 1]
}

/// Pick the threshold and side maximizing the flag-rate gap between hostile
/// and normal pairs. Candidates are midpoints between adjacent pooled values
/// plus outer guards; ties keep the default (greater-than) side.
fn best_separation(hostile: &[f64], normal: &[f64]) -> (f64, Direction, f64, f64) {
    let mut pooled: Vec<f64> = hostile.iter().chain(normal).copied().collect();
    pooled.sort_by(f64::total_cmp);
    pooled.dedup();
    let mut candidates = Vec::with_capacity(pooled.len() + 1);
    if let (Some(&lo), Some(&hi)) = (pooled.first(), pooled.last()) {
        candidates.push((lo - 1.0).max(f64::EPSILON));
        candidates.extend(pooled.windows(2).map(|w| (w[0] + w[1]) / 2.0));
        candidates.push(hi + 1.0);
    } else {
        candidates.push(1.0);
    }

    let rate_above = |values: &[f64], threshold: f64| {
        if values.is_empty() {
            0.0
        } else {
            values.iter().filter(|&&v| v > threshold).count() as f64 / values.len() as f64
        }
    };

    let mut best = (f64::EPSILON, Direction::Gt, 0.0, 0.0);
    let mut best_gap = f64::NEG_INFINITY;
    for &threshold in &candidates {
        if !positive(threshold) {
            continue;
        }
        let hostile_above = rate_above(hostile, threshold);
        let normal_above = rate_above(normal, threshold);
        for direction in [Direction::Gt, Direction::Lt] {
            let (tpr, fpr) = match direction {
                Direction::Gt => (hostile_above, normal_above),
                Direction::Lt => (1.0 - hostile_above, 1.0 - normal_above),
            };
            let gap = tpr - fpr;
            if gap > best_gap {
                best_gap = gap;
                best = (threshold, direction, tpr, fpr);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xi_of(values: &[(usize, f64)]) -> BTreeMap<usize, f64> {
        values.iter().copied().collect()
    }

    #[test]
    fn test_score_xi_zero_drift() {
        let t = Topology::path(3).unwrap();
        let records = BTreeMap::from([
            (0, vec![(2.0, 2.0), (5.0, 5.0)]),
            (2, vec![(1.0, 1.0), (0.0, 0.0)]),
        ]);
        let log = ObservationLog::new(1, records, &t).unwrap();
        let xi = score_xi(&log);
        assert_eq!(xi[&0], 0.0);
        assert_eq!(xi[&2], 0.0);
    }

    #[test]
    fn test_score_xi_single_instance() {
        let t = Topology::complete(2).unwrap();
        let log = ObservationLog::new(0, BTreeMap::from([(1, vec![(2.0, 5.0)])]), &t).unwrap();
        assert_eq!(score_xi(&log)[&1], 3.0);
    }

    #[test]
    fn test_score_xi_averages_instances() {
        let t = Topology::complete(2).unwrap();
        let log =
            ObservationLog::new(0, BTreeMap::from([(1, vec![(0.0, 2.0), (1.0, 4.0)])]), &t)
                .unwrap();
        assert!((score_xi(&log)[&1] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn test_observation_log_rejects_wrong_neighbors() {
        let t = Topology::path(3).unwrap();
        // Observer 1 must record neighbors {0, 2}, not {0}.
        let err = ObservationLog::new(1, BTreeMap::from([(0, vec![(0.0, 0.0)])]), &t);
        assert!(matches!(err, Err(Error::NeighborMismatch { observer: 1 })));
    }

    #[test]
    fn test_observation_log_rejects_ragged_instances() {
        let t = Topology::path(3).unwrap();
        let records = BTreeMap::from([
            (0, vec![(0.0, 0.0), (1.0, 1.0)]),
            (2, vec![(0.0, 0.0)]),
        ]);
        assert!(matches!(
            ObservationLog::new(1, records, &t),
            Err(Error::MissingInstanceRecord { .. })
        ));
    }

    #[test]
    fn test_network_detect_equal_scores_clear() {
        let xi = xi_of(&[(0, 1.5), (1, 1.5), (2, 1.5)]);
        let (c1, verdict) = network_detect(&xi, 1e-6).unwrap();
        assert_eq!(c1, 0.0);
        assert_eq!(verdict, Verdict::Clear);
    }

    #[test]
    fn test_network_detect_outlier_alarm() {
        let xi = xi_of(&[(0, 0.0), (1, 0.0), (2, 6.0)]);
        let (c1, verdict) = network_detect(&xi, 2.0).unwrap();
        assert!((c1 - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(verdict, Verdict::Alarm);
        // A tie at the threshold stays clear.
        let (_, at_tie) = network_detect(&xi, 8.0 / 3.0).unwrap();
        assert_eq!(at_tie, Verdict::Clear);
    }

    #[test]
    fn test_network_detect_rejects_empty_or_bad_threshold() {
        assert!(network_detect(&BTreeMap::new(), 1.0).is_err());
        assert!(network_detect(&xi_of(&[(0, 1.0)]), 0.0).is_err());
    }

    #[test]
    fn test_localize_default_direction() {
        let xi = xi_of(&[(0, 0.0), (1, 10.0), (2, -0.4)]);
        let verdicts = localize(&xi, 1.0, Direction::Gt).unwrap();
        assert_eq!(verdicts[&0], Verdict::Clear);
        assert_eq!(verdicts[&1], Verdict::Alarm);
        assert_eq!(verdicts[&2], Verdict::Clear);
    }

    #[test]
    fn test_localize_flipped_direction() {
        let xi = xi_of(&[(0, 0.1), (1, 5.0)]);
        let verdicts = localize(&xi, 1.0, Direction::Lt).unwrap();
        assert_eq!(verdicts[&0], Verdict::Alarm);
        assert_eq!(verdicts[&1], Verdict::Clear);
    }

    #[test]
    fn test_localize_rejects_non_positive_epsilon() {
        assert!(localize(&xi_of(&[(0, 1.0)]), 0.0, Direction::Gt).is_err());
    }

    #[test]
    fn test_detect_layers_localization_behind_alarm() {
        let t = Topology::path(3).unwrap();
        let records = BTreeMap::from([(0, vec![(0.0, 0.0)]), (2, vec![(0.0, 0.0)])]);
        let log = ObservationLog::new(1, records, &t).unwrap();
        let report = detect(
            &log,
            &DetectionThresholds {
                delta1: 0.5,
                epsilon: 0.5,
                direction: Direction::Gt,
            },
        )
        .unwrap();
        assert_eq!(report.network_verdict, Verdict::Clear);
        assert!(report.neighbor_verdicts.is_empty());
    }

    #[test]
    fn test_isolate_removes_edge_idempotently() {
        let t = Topology::complete(3).unwrap();
        let cut = isolate(&t, 0, 1);
        assert_eq!(cut.edges(), &[(0, 2), (1, 2)]);
        assert_eq!(isolate(&cut, 0, 1).edges(), cut.edges());
    }

    #[test]
    fn test_upper_quantile_basic() {
        let mut values: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let q = upper_quantile(&mut values, 0.05);
        assert_eq!(q, 95.0);
        assert_eq!(values.iter().filter(|&&v| v > q).count(), 5);
    }

    #[test]
    fn test_best_separation_prefers_obvious_split() {
        let hostile = vec![5.0, 5.2, 4.9];
        let normal = vec![0.1, 0.2, 0.3];
        let (eps, dir, tpr, fpr) = best_separation(&hostile, &normal);
        assert_eq!(dir, Direction::Gt);
        assert!(eps > 0.3 && eps < 4.9);
        assert_eq!(tpr, 1.0);
        assert_eq!(fpr, 0.0);
    }

    #[test]
    fn test_best_separation_flips_direction() {
        let hostile = vec![0.1, 0.2];
        let normal = vec![3.0, 4.0];
        let (_, dir, tpr, fpr) = best_separation(&hostile, &normal);
        assert_eq!(dir, Direction::Lt);
        assert_eq!(tpr, 1.0);
        assert_eq!(fpr, 0.0);
    }

    #[test]
    fn test_calibrate_rejects_bad_inputs() {
        let t = Topology::complete(4).unwrap();
        let init = InitialStateModel {
            mean: 0.0,
            std: 1.0,
        };
        // Too few trials.
        assert!(calibrate_thresholds(&t, &init, 2, 10, None, 0.05, 50, 1).is_err());
        // target_far must be inside (0, 1).
        assert!(calibrate_thresholds(&t, &init, 2, 10, None, 1.0, 200, 1).is_err());
        // Disconnected topology.
        let broken = Topology::new(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(calibrate_thresholds(&broken, &init, 2, 10, None, 0.05, 200, 1).is_err());
    }
}
