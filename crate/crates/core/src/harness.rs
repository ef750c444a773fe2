//! End-to-end experiment orchestration: admit nodes, run the attacked gossip
//! instances, score trust, detect and localize, isolate flagged links, and
//! record everything in the hash-chained ledger.
//!
//! Runs are fully deterministic functions of the config and root seed. Wall
//! time is measured and reported on the side; file outputs only ever contain
//! seconds derived from the configured per-iteration wall time, so identical
//! seeds produce byte-identical CSV and ledger files.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::adversary::{AttackConfig, AttackSpec};
use crate::consensus::{
    connected_in_expectation, expected_weight_matrix, Topology, TopologySpec,
};
use crate::detector::{
    calibrate_thresholds, detect, isolate, CalibrationOutcome, DetectionReport,
    DetectionThresholds, ObservationLog, Verdict,
};
use crate::error::{Error, Result};
use crate::ledger::{Event, Ledger};
use crate::metrics::{detection_time, Confusion, MetricsReport};
use crate::sim::{derive_seed, simulate, InitialStateModel, Trajectories};
use crate::trust::{
    activity_level, ahp_weights, authenticate, node_rank, trust_indicator, ComparisonMatrix,
    Credential, CspRegistry, MetricSnapshot, TrustProfile,
};

const CRED_STREAM: u64 = 1 << 33;
const TRUST_STREAM: u64 = (1 << 33) + 1;
const NODES_SWEEP_STREAM: u64 = (1 << 33) + 2;

/// Calibration request carried by the config when no explicit thresholds are
/// set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRequest {
    pub target_far: f64,
    pub trials: usize,
}

impl Default for CalibrationRequest {
    fn default() -> Self {
        Self {
            target_far: 0.05,
            trials: 200,
        }
    }
}

/// Distributions behind the synthesized per-slot behavior metrics, with the
/// bias applied to attacker nodes (a flooding insider responds slower, moves
/// less traffic, restarts more, and fulfills fewer requests).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricModel {
    pub response_mean: f64,
    pub response_spread: f64,
    pub response_jitter: f64,
    pub throughput_mean: f64,
    pub throughput_spread: f64,
    pub throughput_jitter: f64,
    pub failure_mean: f64,
    pub failure_jitter: f64,
    pub fulfilled_mean: f64,
    pub fulfilled_jitter: f64,
    pub attacker_response_factor: f64,
    pub attacker_throughput_factor: f64,
    pub attacker_failure_boost: f64,
    pub attacker_fulfilled_factor: f64,
}

impl Default for MetricModel {
    fn default() -> Self {
        Self {
            response_mean: 100.0,
            response_spread: 10.0,
            response_jitter: 5.0,
            throughput_mean: 0.8,
            throughput_spread: 0.05,
            throughput_jitter: 0.02,
            failure_mean: 2.0,
            failure_jitter: 1.0,
            fulfilled_mean: 50.0,
            fulfilled_jitter: 5.0,
            attacker_response_factor: 1.5,
            attacker_throughput_factor: 0.7,
            attacker_failure_boost: 3.0,
            attacker_fulfilled_factor: 0.8,
        }
    }
}

/// Trust-layer configuration: the attribute comparison matrix, the admission
/// threshold, the indicator window, and the synthetic metric model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrustSection {
    pub comparison: Vec<Vec<f64>>,
    pub tau: f64,
    pub window: usize,
    pub metrics: MetricModel,
}

impl Default for TrustSection {
    fn default() -> Self {
        Self {
            comparison: vec![vec![1.0; 4]; 4],
            tau: 0.5,
            window: 50,
            metrics: MetricModel::default(),
        }
    }
}

/// Complete experiment description, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub topology: TopologySpec,
    pub initial: InitialStateModel,
    pub instances: usize,
    pub iterations: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackSpec>,
    #[serde(default)]
    pub trust: TrustSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionThresholds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationRequest>,
    /// Pinned per-iteration wall time used to derive the seconds column in
    /// file outputs. When absent, file outputs say "undefined" and only the
    /// measured value is printed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iter_wall_seconds: Option<f64>,
    #[serde(default = "default_sweep_trials")]
    pub sweep_trials: usize,
}

fn default_sweep_trials() -> usize {
    50
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        Topology::from_spec(&self.topology)?;
        self.initial.validate()?;
        if self.instances == 0 {
            return Err(Error::InvalidConfig {
                field: "instances".into(),
                reason: "at least one consensus instance required".into(),
            });
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig {
                field: "iterations".into(),
                reason: "at least one gossip iteration required".into(),
            });
        }
        if let Some(attack) = &self.attack {
            attack.validate(self.topology.nodes)?;
            attack.alpha.resolve(self.instances)?;
        }
        if self.trust.comparison.len() != 4
            || self.trust.comparison.iter().any(|row| row.len() != 4)
        {
            return Err(Error::InvalidConfig {
                field: "trust.comparison".into(),
                reason: "comparison matrix must be 4x4 (one row per attribute)".into(),
            });
        }
        ComparisonMatrix::new(self.trust.comparison.clone())?;
        if !(0.0..=1.0).contains(&self.trust.tau) {
            return Err(Error::InvalidConfig {
                field: "trust.tau".into(),
                reason: format!("threshold must lie in [0, 1], got {}", self.trust.tau),
            });
        }
        if self.trust.window == 0 {
            return Err(Error::InvalidConfig {
                field: "trust.window".into(),
                reason: "indicator window must be positive".into(),
            });
        }
        if let Some(detection) = &self.detection {
            if detection.delta1 <= 0.0 || !detection.delta1.is_finite() {
                return Err(Error::InvalidConfig {
                    field: "detection.delta1".into(),
                    reason: "threshold must be positive".into(),
                });
            }
            if detection.epsilon <= 0.0 || !detection.epsilon.is_finite() {
                return Err(Error::InvalidConfig {
                    field: "detection.epsilon".into(),
                    reason: "threshold must be positive".into(),
                });
            }
        }
        if let Some(calibration) = &self.calibration {
            if !(calibration.target_far > 0.0 && calibration.target_far < 1.0) {
                return Err(Error::InvalidConfig {
                    field: "calibration.target_far".into(),
                    reason: "false-alarm target must lie strictly inside (0, 1)".into(),
                });
            }
            if calibration.trials < 100 {
                return Err(Error::InvalidConfig {
                    field: "calibration.trials".into(),
                    reason: "at least 100 trials required".into(),
                });
            }
        }
        if let Some(wall) = self.iter_wall_seconds {
            if wall < 0.0 || !wall.is_finite() {
                return Err(Error::InvalidConfig {
                    field: "iter_wall_seconds".into(),
                    reason: "wall time per iteration must be non-negative".into(),
                });
            }
        }
        if self.sweep_trials == 0 {
            return Err(Error::InvalidConfig {
                field: "sweep_trials".into(),
                reason: "at least one trial per sweep point required".into(),
            });
        }
        Ok(())
    }
}

/// Everything one experiment run produces.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub topology: Topology,
    /// Topology after severing every flagged observer-neighbor link.
    pub isolated_topology: Topology,
    pub trajectories: Trajectories,
    pub reports: Vec<DetectionReport>,
    pub trust_profiles: Vec<TrustProfile>,
    pub metrics: MetricsReport,
    pub ledger: Ledger,
    pub thresholds: DetectionThresholds,
    pub calibration: Option<CalibrationOutcome>,
    pub first_alarm: Option<usize>,
    /// Measured seconds per gossip iteration (informational only; never
    /// written to file outputs).
    pub measured_iter_seconds: f64,
}

/// Resolve detection thresholds: use the configured ones, otherwise run
/// Monte-Carlo calibration first.
pub fn resolve_thresholds(
    config: &ExperimentConfig,
    topology: &Topology,
) -> Result<(DetectionThresholds, Option<CalibrationOutcome>)> {
    if let Some(thresholds) = config.detection {
        return Ok((thresholds, None));
    }
    let request = config.calibration.unwrap_or_default();
    let outcome = calibrate_thresholds(
        topology,
        &config.initial,
        config.instances,
        config.iterations,
        config.attack.as_ref(),
        request.target_far,
        request.trials,
        config.seed,
    )?;
    Ok((outcome.thresholds(), Some(outcome)))
}

/// Run the full pipeline for one config and seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let topology = Topology::from_spec(&config.topology)?;
    if !connected_in_expectation(&expected_weight_matrix(&topology)) {
        return Err(Error::DisconnectedTopology);
    }
    let nodes = topology.node_count();
    let attackers: BTreeSet<usize> = config
        .attack
        .as_ref()
        .map(|a| a.attackers.clone())
        .unwrap_or_default();

    let (thresholds, calibration) = resolve_thresholds(config, &topology)?;

    let mut ledger = Ledger::new();

    // Admission: every node presents a synthesized credential against the
    // one trusted provider; admissions land in the ledger at time 0.
    let mut cred_rng = ChaCha20Rng::seed_from_u64(derive_seed(config.seed, CRED_STREAM));
    let mut registry = CspRegistry::new(["csp-0".to_string()]);
    let mut credentials = Vec::with_capacity(nodes);
    for node in 0..nodes {
        let mut mac = vec![0u8; 6];
        cred_rng.fill(&mut mac[..]);
        let mut key = vec![0u8; 32];
        cred_rng.fill(&mut key[..]);
        let credential = Credential::new(node, mac, key, "csp-0")?;
        registry.register(credential.clone())?;
        credentials.push(credential);
    }
    for credential in &credentials {
        let accepted = authenticate(credential, &registry);
        ledger.append_event(
            &Event::Admission {
                node: credential.node_id as u32,
                accepted,
            },
            0,
        );
    }

    // Initial states and attacker masks come from one init stream, in that
    // order, matching the calibration trials.
    let mut init_rng = ChaCha20Rng::seed_from_u64(derive_seed(config.seed, 0));
    let initial = config
        .initial
        .sample_matrix(config.instances, nodes, &mut init_rng)?;
    let attack = match &config.attack {
        Some(spec) => Some(AttackConfig::from_spec(
            spec,
            nodes,
            config.instances,
            config.initial.mean,
            config.initial.std,
            &mut init_rng,
        )?),
        None => None,
    };

    let sim_started = Instant::now();
    let trajectories = simulate(
        &topology,
        &initial,
        attack.as_ref(),
        config.iterations,
        config.seed,
    )?;
    let elapsed = sim_started.elapsed().as_secs_f64();
    let measured_iter_seconds = elapsed / (config.instances * config.iterations) as f64;

    // Final detection pass at the last iteration, one report per normal
    // observer with at least one neighbor.
    let mut reports = Vec::new();
    for observer in 0..nodes {
        if attackers.contains(&observer) {
            continue;
        }
        if topology.neighbor_set(observer)?.is_empty() {
            continue;
        }
        let log = ObservationLog::from_trajectories(
            &trajectories,
            &topology,
            observer,
            config.iterations,
        )?;
        reports.push(detect(&log, &thresholds)?);
    }

    let attack_start = attack.as_ref().map(|a| a.start_iteration()).unwrap_or(0);
    let first_alarm = if attack.is_some() {
        first_alarm_iteration(
            &trajectories,
            &topology,
            &attackers,
            attack_start,
            thresholds.delta1,
        )
    } else {
        None
    };

    // Trust layer: synthesized behavior metrics scored over the window.
    let trust_profiles = synthesize_trust_profiles(
        &topology,
        &attackers,
        &config.trust,
        derive_seed(config.seed, TRUST_STREAM),
    )?;
    let final_ts = config.iterations as u64;
    for (node, profile) in trust_profiles.iter().enumerate() {
        ledger.append_event(
            &Event::TrustUpdate {
                node: node as u32,
                indicator: profile.indicator,
                rank: profile.rank,
                activity: profile.activity,
            },
            final_ts,
        );
    }

    // Confirmed verdicts and isolation of every flagged link.
    let mut isolated_topology = topology.clone();
    for report in &reports {
        for (&neighbor, verdict) in &report.neighbor_verdicts {
            if verdict.is_alarm() {
                ledger.append_event(
                    &Event::Verdict {
                        observer: report.observer as u32,
                        neighbor: neighbor as u32,
                        statistic: report.xi[&neighbor].abs(),
                        flagged: true,
                    },
                    final_ts,
                );
                if isolated_topology.contains_edge(report.observer, neighbor) {
                    isolated_topology = isolate(&isolated_topology, report.observer, neighbor);
                    ledger.append_event(
                        &Event::Isolation {
                            observer: report.observer as u32,
                            neighbor: neighbor as u32,
                        },
                        final_ts,
                    );
                }
            }
        }
    }

    let metrics = build_metrics(config, &topology, &attackers, &reports, first_alarm);

    Ok(ExperimentOutput {
        topology,
        isolated_topology,
        trajectories,
        reports,
        trust_profiles,
        metrics,
        ledger,
        thresholds,
        calibration,
        first_alarm,
        measured_iter_seconds,
    })
}

/// Earliest iteration at or after attack onset where any normal observer's
/// network statistic crosses the threshold.
fn first_alarm_iteration(
    trajectories: &Trajectories,
    topology: &Topology,
    attackers: &BTreeSet<usize>,
    attack_start: usize,
    delta1: f64,
) -> Option<usize> {
    let instances = trajectories.instances();
    let observers: Vec<(usize, Vec<usize>)> = (0..topology.node_count())
        .filter(|node| !attackers.contains(node))
        .map(|node| {
            let neighbors: Vec<usize> = topology
                .neighbor_set(node)
                .expect("node id in range")
                .into_iter()
                .collect();
            (node, neighbors)
        })
        .filter(|(_, neighbors)| !neighbors.is_empty())
        .collect();
    for s in attack_start.max(1)..=trajectories.iterations() {
        for (_, neighbors) in &observers {
            let xi: Vec<f64> = neighbors
                .iter()
                .map(|&j| {
                    (0..instances)
                        .map(|l| trajectories.state(l, s)[j] - trajectories.initial(l)[j])
                        .sum::<f64>()
                        / instances as f64
                })
                .collect();
            let mean: f64 = xi.iter().sum::<f64>() / xi.len() as f64;
            let c1: f64 = xi.iter().map(|v| (v - mean).abs()).sum::<f64>() / xi.len() as f64;
            if c1 > delta1 {
                return Some(s);
            }
        }
    }
    None
}

/// Simulated per-node behavior metrics scored over the trust window. Each
/// slot draws raw values around per-node latents (attackers biased), builds
/// snapshots against closed-neighborhood extrema, and evaluates the weighted
/// indicator; ranks count positive slots and activity normalizes ranks over
/// the closed neighborhood.
fn synthesize_trust_profiles(
    topology: &Topology,
    attackers: &BTreeSet<usize>,
    trust: &TrustSection,
    seed: u64,
) -> Result<Vec<TrustProfile>> {
    let nodes = topology.node_count();
    let model = &trust.metrics;
    let comparison = ComparisonMatrix::new(trust.comparison.clone())?;
    let weight_vec = ahp_weights(&comparison);
    let weights: [f64; 4] = [weight_vec[0], weight_vec[1], weight_vec[2], weight_vec[3]];

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let spread = |mean: f64, sd: f64, rng: &mut ChaCha20Rng| -> f64 {
        if sd <= 0.0 {
            mean
        } else {
            Normal::new(mean, sd).expect("finite parameters").sample(rng)
        }
    };

    struct Latent {
        response: f64,
        throughput: f64,
        failures: f64,
        fulfilled: f64,
    }
    let latents: Vec<Latent> = (0..nodes)
        .map(|node| {
            let hostile = attackers.contains(&node);
            let mut response = spread(model.response_mean, model.response_spread, &mut rng).max(1.0);
            let mut throughput =
                spread(model.throughput_mean, model.throughput_spread, &mut rng).clamp(0.01, 1.0);
            let mut failures = spread(model.failure_mean, model.failure_jitter, &mut rng).max(0.0);
            let mut fulfilled = spread(model.fulfilled_mean, model.fulfilled_jitter, &mut rng).max(1.0);
            if hostile {
                response *= model.attacker_response_factor;
                throughput = (throughput * model.attacker_throughput_factor).clamp(0.01, 1.0);
                failures += model.attacker_failure_boost;
                fulfilled *= model.attacker_fulfilled_factor;
            }
            Latent {
                response,
                throughput,
                failures,
                fulfilled,
            }
        })
        .collect();

    let mut histories = vec![Vec::with_capacity(trust.window); nodes];
    let mut last_scores = vec![[0.0f64; 4]; nodes];
    for _slot in 0..trust.window {
        let raw: Vec<(f64, f64, u32, u32)> = latents
            .iter()
            .map(|latent| {
                let response = spread(latent.response, model.response_jitter, &mut rng).max(0.0);
                let throughput =
                    spread(latent.throughput, model.throughput_jitter, &mut rng).clamp(0.0, 1.0);
                let failures =
                    spread(latent.failures, model.failure_jitter, &mut rng).max(0.0).round() as u32;
                let fulfilled = spread(latent.fulfilled, model.fulfilled_jitter, &mut rng)
                    .max(0.0)
                    .round() as u32;
                (response, throughput, failures, fulfilled)
            })
            .collect();
        for node in 0..nodes {
            // Extrema over the closed neighborhood (the node and everyone it
            // can hear from).
            let mut area: Vec<usize> = topology.neighbor_set(node)?.into_iter().collect();
            area.push(node);
            let fold = |f: fn(&(f64, f64, u32, u32)) -> f64| {
                let values: Vec<f64> = area.iter().map(|&k| f(&raw[k])).collect();
                let min = values.iter().copied().fold(f64::INFINITY, f64::min);
                let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (min, max)
            };
            let (response_min, response_max) = fold(|r| r.0);
            let (throughput_min, throughput_max) = fold(|r| r.1);
            let (failures_min, failures_max) = fold(|r| r.2 as f64);
            let (fulfilled_min, fulfilled_max) = fold(|r| r.3 as f64);
            let snapshot = MetricSnapshot {
                response_time: raw[node].0,
                response_min,
                response_max,
                throughput: raw[node].1,
                throughput_min,
                throughput_max,
                failures: raw[node].2,
                failures_min: failures_min as u32,
                failures_max: failures_max as u32,
                fulfilled: raw[node].3,
                fulfilled_min: fulfilled_min as u32,
                fulfilled_max: fulfilled_max as u32,
            };
            snapshot.validate()?;
            let scores = snapshot.scores();
            let indicator = trust_indicator(&scores, &weights, trust.tau)?;
            histories[node].push(indicator);
            last_scores[node] = scores;
        }
    }

    let ranks: Vec<f64> = histories.iter().map(|h| node_rank(h)).collect();
    let mut profiles = Vec::with_capacity(nodes);
    for node in 0..nodes {
        let mut area: Vec<usize> = topology.neighbor_set(node)?.into_iter().collect();
        area.push(node);
        let rank_min = area.iter().map(|&k| ranks[k]).fold(f64::INFINITY, f64::min);
        let rank_max = area
            .iter()
            .map(|&k| ranks[k])
            .fold(f64::NEG_INFINITY, f64::max);
        profiles.push(TrustProfile {
            scores: last_scores[node],
            weights,
            indicator: *histories[node].last().expect("window is positive"),
            rank: ranks[node],
            activity: activity_level(ranks[node], rank_min, rank_max),
        });
    }
    Ok(profiles)
}

fn build_metrics(
    config: &ExperimentConfig,
    topology: &Topology,
    attackers: &BTreeSet<usize>,
    reports: &[DetectionReport],
    first_alarm: Option<usize>,
) -> MetricsReport {
    let mut pairs = Confusion::default();
    for report in reports {
        for &neighbor in report.xi.keys() {
            let flagged = report
                .neighbor_verdicts
                .get(&neighbor)
                .is_some_and(|v| v.is_alarm());
            let hostile = attackers.contains(&neighbor);
            match (hostile, flagged) {
                (true, true) => pairs.true_positives += 1,
                (true, false) => pairs.false_negatives += 1,
                (false, true) => pairs.false_positives += 1,
                (false, false) => pairs.true_negatives += 1,
            }
        }
    }

    // Node-level verdicts: strict majority vote across the normal observers
    // adjacent to each node.
    let mut nodes_confusion = Confusion::default();
    for node in 0..topology.node_count() {
        let voters: Vec<&DetectionReport> = reports
            .iter()
            .filter(|r| r.xi.contains_key(&node))
            .collect();
        if voters.is_empty() {
            continue;
        }
        let flags = voters
            .iter()
            .filter(|r| {
                r.neighbor_verdicts
                    .get(&node)
                    .is_some_and(|v| v.is_alarm())
            })
            .count();
        let flagged = 2 * flags > voters.len();
        let hostile = attackers.contains(&node);
        match (hostile, flagged) {
            (true, true) => nodes_confusion.true_positives += 1,
            (true, false) => nodes_confusion.false_negatives += 1,
            (false, true) => nodes_confusion.false_positives += 1,
            (false, false) => nodes_confusion.true_negatives += 1,
        }
    }

    let alarmed = reports.iter().any(|r| r.network_verdict.is_alarm());
    let c1_mean = if reports.is_empty() {
        0.0
    } else {
        reports.iter().map(|r| r.c1).sum::<f64>() / reports.len() as f64
    };
    let false_alarms = if attackers.is_empty() {
        reports.iter().filter(|r| r.network_verdict.is_alarm()).count() as u64
    } else {
        0
    };
    let alpha_gap = config
        .attack
        .as_ref()
        .map(|a| (a.alpha.mean() - config.initial.mean).abs())
        .unwrap_or(0.0);
    let attack_start = config.attack.as_ref().map(|a| a.start).unwrap_or(0);
    let timed = detection_time(attack_start, first_alarm, config.iter_wall_seconds);

    let precision = pairs.precision();
    let recall = pairs.recall();
    let f1 = pairs.f1();
    MetricsReport {
        run_id: format!("run-{}", config.seed),
        seed: config.seed,
        nodes: topology.node_count(),
        attackers: attackers.len(),
        alpha_gap,
        instances: config.instances,
        iterations: config.iterations,
        c1_mean,
        detection_rate: if alarmed { 1.0 } else { 0.0 },
        pairs,
        precision,
        recall,
        f1,
        nodes_confusion,
        false_alarms,
        detection_time_iters: timed.map(|(iters, _)| iters as f64),
        detection_time_seconds: timed.and_then(|(_, secs)| secs),
    }
}

/// Swept experiment parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Target offset from the initial mean, in units of the initial std.
    AlphaGap,
    /// Attacker count; 0 turns the attack off.
    Attackers,
    /// Masking-noise scale.
    Sigma,
    /// Network size (regenerates a random connected topology per point).
    Nodes,
}

impl SweepParam {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "alpha_gap" => Ok(Self::AlphaGap),
            "attackers" => Ok(Self::Attackers),
            "sigma" => Ok(Self::Sigma),
            "nodes" => Ok(Self::Nodes),
            other => Err(Error::InvalidConfig {
                field: "sweep.param".into(),
                reason: format!(
                    "unknown parameter `{other}` (expected alpha_gap, attackers, sigma, or nodes)"
                ),
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::AlphaGap => "alpha_gap",
            Self::Attackers => "attackers",
            Self::Sigma => "sigma",
            Self::Nodes => "nodes",
        }
    }
}

/// One aggregated grid point of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub param: String,
    pub value: f64,
    pub metrics: MetricsReport,
}

fn configure_point(
    base: &ExperimentConfig,
    param: SweepParam,
    value: f64,
) -> Result<ExperimentConfig> {
    let mut config = base.clone();
    match param {
        SweepParam::AlphaGap => {
            let attack = config.attack.as_mut().ok_or_else(|| Error::InvalidConfig {
                field: "attack".into(),
                reason: "alpha_gap sweep needs a configured attack".into(),
            })?;
            attack.alpha = crate::adversary::AlphaSpec::Scalar(
                base.initial.mean + value * base.initial.std,
            );
        }
        SweepParam::Sigma => {
            let attack = config.attack.as_mut().ok_or_else(|| Error::InvalidConfig {
                field: "attack".into(),
                reason: "sigma sweep needs a configured attack".into(),
            })?;
            attack.sigma = value;
        }
        SweepParam::Attackers => {
            let count = value.round();
            if count < 0.0 || count.fract() != 0.0 {
                return Err(Error::InvalidConfig {
                    field: "sweep.values".into(),
                    reason: format!("attacker count must be a non-negative integer, got {value}"),
                });
            }
            let count = count as usize;
            if count == 0 {
                config.attack = None;
            } else {
                let attack = config.attack.as_mut().ok_or_else(|| Error::InvalidConfig {
                    field: "attack".into(),
                    reason: "attackers sweep needs a configured attack".into(),
                })?;
                let mut chosen: BTreeSet<usize> =
                    attack.attackers.iter().copied().take(count).collect();
                let mut candidate = 0usize;
                while chosen.len() < count && candidate < base.topology.nodes {
                    if !chosen.contains(&candidate) {
                        chosen.insert(candidate);
                    }
                    candidate += 1;
                }
                attack.attackers = chosen;
            }
        }
        SweepParam::Nodes => {
            let nodes = value.round();
            if nodes < 2.0 || nodes.fract() != 0.0 {
                return Err(Error::InvalidConfig {
                    field: "sweep.values".into(),
                    reason: format!("node count must be an integer >= 2, got {value}"),
                });
            }
            let nodes = nodes as usize;
            let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(
                base.seed,
                NODES_SWEEP_STREAM + nodes as u64,
            ));
            let topology = Topology::random_connected(nodes, 0.3, &mut rng)?;
            config.topology = topology.to_spec();
            if let Some(attack) = config.attack.as_mut() {
                attack.attackers.retain(|&a| a < nodes);
                if attack.attackers.is_empty() {
                    config.attack = None;
                }
            }
        }
    }
    Ok(config)
}

/// Run `sweep_trials` seeded experiments per grid value and aggregate the
/// metrics. Trial seeds are `config.seed + trial`, so a single-value grid at
/// one trial reproduces `run_experiment` exactly.
pub fn sweep(
    config: &ExperimentConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::InvalidConfig {
            field: "sweep.values".into(),
            reason: "grid must be non-empty".into(),
        });
    }
    config.validate()?;
    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let mut point_config = configure_point(config, param, value)?;
        point_config.validate()?;
        // Calibrate once per grid point; trials reuse the thresholds.
        if point_config.detection.is_none() {
            let topology = Topology::from_spec(&point_config.topology)?;
            let (thresholds, _) = resolve_thresholds(&point_config, &topology)?;
            point_config.detection = Some(thresholds);
        }

        let mut pairs = Confusion::default();
        let mut nodes_confusion = Confusion::default();
        let mut detection_sum = 0.0;
        let mut c1_sum = 0.0;
        let mut false_alarms = 0u64;
        let mut alarm_iters = Vec::new();
        let mut template = None;
        for trial in 0..config.sweep_trials {
            let mut trial_config = point_config.clone();
            trial_config.seed = config.seed.wrapping_add(trial as u64);
            let output = run_experiment(&trial_config)?;
            let m = output.metrics;
            pairs.add(&m.pairs);
            nodes_confusion.add(&m.nodes_confusion);
            detection_sum += m.detection_rate;
            c1_sum += m.c1_mean;
            false_alarms += m.false_alarms;
            if let Some(iters) = m.detection_time_iters {
                alarm_iters.push(iters);
            }
            template.get_or_insert(m);
        }
        let trials = config.sweep_trials as f64;
        let template = template.expect("at least one trial ran");
        let detection_time_iters = if alarm_iters.is_empty() {
            None
        } else {
            Some(alarm_iters.iter().sum::<f64>() / alarm_iters.len() as f64)
        };
        let precision = pairs.precision();
        let recall = pairs.recall();
        let f1 = pairs.f1();
        points.push(SweepPoint {
            param: param.name().to_string(),
            value,
            metrics: MetricsReport {
                run_id: format!("{}={}", param.name(), value),
                seed: config.seed,
                nodes: template.nodes,
                attackers: template.attackers,
                alpha_gap: template.alpha_gap,
                instances: template.instances,
                iterations: template.iterations,
                c1_mean: c1_sum / trials,
                detection_rate: detection_sum / trials,
                pairs,
                precision,
                recall,
                f1,
                nodes_confusion,
                false_alarms,
                detection_time_iters,
                detection_time_seconds: detection_time_iters
                    .and_then(|iters| config.iter_wall_seconds.map(|w| iters * w)),
            },
        });
    }
    Ok(points)
}

/// Write the sweep grid as CSV (fixed metric columns, one row per point).
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], out: &mut W) -> Result<()> {
    writeln!(out, "param,value,{}", MetricsReport::csv_header())?;
    for point in points {
        writeln!(
            out,
            "{},{},{}",
            point.param,
            point.value,
            point.metrics.csv_row()
        )?;
    }
    Ok(())
}

/// Write every artifact of a run into `dir`: `metrics.csv`, `metrics.json`,
/// `trajectories.csv`, `detection.csv`, `trust.csv`, `reports.json`,
/// `ledger.jsonl`, and `calibration.json` when calibration ran.
pub fn write_outputs(output: &ExperimentOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;

    let mut metrics = String::new();
    metrics.push_str(MetricsReport::csv_header());
    metrics.push('\n');
    metrics.push_str(&output.metrics.csv_row());
    metrics.push('\n');
    fs::write(dir.join("metrics.csv"), metrics)?;

    // Full report including the node-level majority-vote confusion, which
    // has no column in the fixed CSV schema.
    fs::write(
        dir.join("metrics.json"),
        serde_json::to_vec_pretty(&output.metrics)?,
    )?;

    let mut trajectories = Vec::new();
    output.trajectories.write_csv(&mut trajectories)?;
    fs::write(dir.join("trajectories.csv"), trajectories)?;

    let mut detection = String::from("observer,neighbor,xi,k1,verdict\n");
    for report in &output.reports {
        for (&neighbor, &xi) in &report.xi {
            let verdict = report
                .neighbor_verdicts
                .get(&neighbor)
                .copied()
                .unwrap_or(Verdict::Clear);
            detection.push_str(&format!(
                "{},{},{},{},{}\n",
                report.observer,
                neighbor,
                xi,
                xi.abs(),
                verdict
            ));
        }
    }
    fs::write(dir.join("detection.csv"), detection)?;

    let mut trust = String::from("node,s_rt,s_tp,s_av,s_sr,indicator,rank,activity\n");
    for (node, profile) in output.trust_profiles.iter().enumerate() {
        trust.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            node,
            profile.scores[0],
            profile.scores[1],
            profile.scores[2],
            profile.scores[3],
            profile.indicator as u8,
            profile.rank,
            profile.activity
        ));
    }
    fs::write(dir.join("trust.csv"), trust)?;

    fs::write(
        dir.join("reports.json"),
        serde_json::to_vec_pretty(&output.reports)?,
    )?;

    let mut ledger = Vec::new();
    output.ledger.write_jsonl(&mut ledger)?;
    fs::write(dir.join("ledger.jsonl"), ledger)?;

    if let Some(calibration) = &output.calibration {
        fs::write(
            dir.join("calibration.json"),
            serde_json::to_vec_pretty(calibration)?,
        )?;
    }
    Ok(())
}
