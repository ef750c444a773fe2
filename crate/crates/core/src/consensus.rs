//! Network topology and randomized pairwise-gossip averaging.
//!
//! A network is an undirected graph over node IDs `0..M`. Each gossip
//! iteration activates one uniformly random edge; the two endpoints replace
//! their states with the pair average, which preserves the state sum and
//! drives every node toward the global mean on connected topologies.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalue-gap slack used by [`connected_in_expectation`].
pub const CONNECTIVITY_SLACK: f64 = 1e-9;

const POWER_ITER_TOL: f64 = 1e-10;
const POWER_ITER_MAX: usize = 100_000;

/// JSON shape of a topology: `{"nodes": M, "edges": [[i, j], ...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub nodes: usize,
    pub edges: Vec<(usize, usize)>,
}

/// Undirected communication graph over `node_count` nodes.
///
/// Edges are stored unordered and deduplicated; the adjacency matrix is kept
/// symmetric with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<u8>>,
}

impl Topology {
    /// Build a topology from an edge list. Edges are normalized to `(min, max)`
    /// order and deduplicated; self-loops and out-of-range IDs are rejected.
    pub fn new(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidConfig {
                field: "nodes".into(),
                reason: "node count must be positive".into(),
            });
        }
        let mut set = BTreeSet::new();
        for &(i, j) in edges {
            if i == j {
                return Err(Error::SelfLoop { node: i });
            }
            for node in [i, j] {
                if node >= node_count {
                    return Err(Error::NodeOutOfRange {
                        node,
                        count: node_count,
                    });
                }
            }
            set.insert((i.min(j), i.max(j)));
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut adjacency = vec![vec![0u8; node_count]; node_count];
        for &(i, j) in &edges {
            adjacency[i][j] = 1;
            adjacency[j][i] = 1;
        }
        Ok(Self {
            node_count,
            edges,
            adjacency,
        })
    }

    pub fn from_spec(spec: &TopologySpec) -> Result<Self> {
        Self::new(spec.nodes, &spec.edges)
    }

    pub fn to_spec(&self) -> TopologySpec {
        TopologySpec {
            nodes: self.node_count,
            edges: self.edges.clone(),
        }
    }

    /// Parse a topology from its JSON document form.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: TopologySpec = serde_json::from_str(text)?;
        Self::from_spec(&spec)
    }

    /// Complete graph on `node_count` nodes.
    pub fn complete(node_count: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..node_count {
            for j in (i + 1)..node_count {
                edges.push((i, j));
            }
        }
        Self::new(node_count, &edges)
    }

    /// Path graph 0–1–…–(M−1).
    pub fn path(node_count: usize) -> Result<Self> {
        let edges: Vec<(usize, usize)> = (1..node_count).map(|i| (i - 1, i)).collect();
        Self::new(node_count, &edges)
    }

    /// Random connected graph: a uniformly random attachment tree plus each
    /// remaining pair independently with probability `extra_edge_prob`.
    pub fn random_connected<R: Rng + ?Sized>(
        node_count: usize,
        extra_edge_prob: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut edges = Vec::new();
        for v in 1..node_count {
            let parent = rng.gen_range(0..v);
            edges.push((parent, v));
        }
        let tree: BTreeSet<(usize, usize)> = edges.iter().copied().collect();
        for i in 0..node_count {
            for j in (i + 1)..node_count {
                if !tree.contains(&(i, j)) && rng.gen::<f64>() < extra_edge_prob {
                    edges.push((i, j));
                }
            }
        }
        Self::new(node_count, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Normalized, deduplicated edge list (the set ℱ), sorted ascending.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains_edge(&self, i: usize, j: usize) -> bool {
        i < self.node_count && j < self.node_count && self.adjacency[i][j] == 1
    }

    /// 0/1 adjacency matrix; symmetric with zero diagonal.
    pub fn adjacency(&self) -> &[Vec<u8>] {
        &self.adjacency
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].iter().map(|&a| a as usize).sum()
    }

    /// Neighbor set of node `i`: every `j` with an edge to `i`.
    pub fn neighbor_set(&self, i: usize) -> Result<BTreeSet<usize>> {
        if i >= self.node_count {
            return Err(Error::NodeOutOfRange {
                node: i,
                count: self.node_count,
            });
        }
        Ok(self.adjacency[i]
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == 1)
            .map(|(j, _)| j)
            .collect())
    }

    /// Copy of this topology with edge `(i, j)` removed. Removing an absent
    /// edge is a no-op, so the operation is idempotent.
    pub fn without_edge(&self, i: usize, j: usize) -> Self {
        if !self.contains_edge(i, j) {
            return self.clone();
        }
        let key = (i.min(j), i.max(j));
        let edges: Vec<(usize, usize)> =
            self.edges.iter().copied().filter(|&e| e != key).collect();
        Self::new(self.node_count, &edges).expect("filtered edge list stays valid")
    }
}

/// Per-instance node states evolving under gossip.
///
/// Holds an `L x M` state matrix plus an immutable copy of the initial
/// states. Pairwise averaging preserves each instance's state sum as long as
/// no attacker overrides fire.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceStates {
    states: Vec<Vec<f64>>,
    initial: Vec<Vec<f64>>,
    iteration: usize,
}

impl InstanceStates {
    pub fn new(initial: Vec<Vec<f64>>) -> Result<Self> {
        if initial.is_empty() || initial[0].is_empty() {
            return Err(Error::InvalidConfig {
                field: "initial".into(),
                reason: "state matrix must be non-empty".into(),
            });
        }
        let width = initial[0].len();
        if initial.iter().any(|row| row.len() != width) {
            return Err(Error::InvalidConfig {
                field: "initial".into(),
                reason: "state matrix must be rectangular".into(),
            });
        }
        Ok(Self {
            states: initial.clone(),
            initial,
            iteration: 0,
        })
    }

    pub fn instances(&self) -> usize {
        self.states.len()
    }

    pub fn node_count(&self) -> usize {
        self.states[0].len()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn states(&self, instance: usize) -> &[f64] {
        &self.states[instance]
    }

    /// Initial states as captured at construction; never mutated.
    pub fn initial(&self, instance: usize) -> &[f64] {
        &self.initial[instance]
    }

    pub fn set_state(&mut self, instance: usize, node: usize, value: f64) {
        self.states[instance][node] = value;
    }

    pub fn advance_iteration(&mut self) {
        self.iteration += 1;
    }

    /// One pairwise exchange on `edge` within `instance`: both endpoints move
    /// to their prior average; every other entry is untouched.
    pub fn gossip_step(
        &mut self,
        topology: &Topology,
        instance: usize,
        edge: (usize, usize),
    ) -> Result<()> {
        let (i, j) = edge;
        if !topology.contains_edge(i, j) {
            return Err(Error::EdgeNotInTopology { i, j });
        }
        let row = &mut self.states[instance];
        let avg = (row[i] + row[j]) / 2.0;
        row[i] = avg;
        row[j] = avg;
        Ok(())
    }
}

/// Dense `M x M` gossip weight matrix.
///
/// Matrices from [`pairwise_weight_matrix`] and [`expected_weight_matrix`]
/// are doubly stochastic; blocked matrices from the adversary module are only
/// row stochastic (attacker rows are identity rows).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    entries: Vec<Vec<f64>>,
}

impl WeightMatrix {
    /// Validate entries in `[0, 1]` and unit row sums, then wrap.
    pub fn from_rows(entries: Vec<Vec<f64>>) -> Result<Self> {
        let n = entries.len();
        if n == 0 || entries.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidConfig {
                field: "weight_matrix".into(),
                reason: "matrix must be square and non-empty".into(),
            });
        }
        for (r, row) in entries.iter().enumerate() {
            if row.iter().any(|&v| !(0.0..=1.0 + 1e-12).contains(&v)) {
                return Err(Error::InvalidConfig {
                    field: "weight_matrix".into(),
                    reason: format!("row {r} has an entry outside [0, 1]"),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig {
                    field: "weight_matrix".into(),
                    reason: format!("row {r} sums to {sum}, expected 1"),
                });
            }
        }
        Ok(Self { entries })
    }

    pub(crate) fn from_rows_unchecked(entries: Vec<Vec<f64>>) -> Self {
        Self { entries }
    }

    pub fn order(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let n = self.order();
        let mut sums = vec![0.0; n];
        for row in &self.entries {
            for (j, &v) in row.iter().enumerate() {
                sums[j] += v;
            }
        }
        sums
    }

    pub fn is_doubly_stochastic(&self, tol: f64) -> bool {
        self.row_sums().iter().all(|&s| (s - 1.0).abs() <= tol)
            && self.column_sums().iter().all(|&s| (s - 1.0).abs() <= tol)
    }

    /// Matrix-vector product `P · y`.
    pub fn apply(&self, state: &[f64]) -> Vec<f64> {
        self.entries
            .iter()
            .map(|row| row.iter().zip(state).map(|(&w, &y)| w * y).sum())
            .collect()
    }

    /// Magnitude of the second-largest eigenvalue, via power iteration on the
    /// matrix deflated by the known all-ones eigenvector. Assumes the matrix
    /// is symmetric stochastic, which holds for every expected weight matrix
    /// of an undirected topology.
    pub fn second_eigenvalue_magnitude(&self) -> f64 {
        let n = self.order();
        if n <= 1 {
            return 0.0;
        }
        // Deterministic start vector with mean removed, i.e. already in the
        // complement of span{1}.
        let mut x: Vec<f64> = (0..n).map(|i| ((i + 1) as f64).sin()).collect();
        center(&mut x);
        let norm = l2(&x);
        if norm == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= norm);

        let mut estimate = 0.0;
        for _ in 0..POWER_ITER_MAX {
            let mut y = self.apply(&x);
            // Re-center: removes the span{1} component that rounding lets
            // back in, which is exactly the deflation P - J/n.
            center(&mut y);
            let norm = l2(&y);
            if norm < 1e-300 {
                return 0.0;
            }
            y.iter_mut().for_each(|v| *v /= norm);
            if (norm - estimate).abs() < POWER_ITER_TOL {
                return norm;
            }
            estimate = norm;
            x = y;
        }
        estimate
    }
}

fn center(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Weight matrix of a single pairwise exchange between `i` and `j`:
/// rows `i` and `j` hold 0.5 at columns `i` and `j`, all other rows are
/// identity rows. The result is symmetric, idempotent, and doubly stochastic.
pub fn pairwise_weight_matrix(node_count: usize, i: usize, j: usize) -> Result<WeightMatrix> {
    if i == j {
        return Err(Error::SelfLoop { node: i });
    }
    for node in [i, j] {
        if node >= node_count {
            return Err(Error::NodeOutOfRange {
                node,
                count: node_count,
            });
        }
    }
    let mut entries = vec![vec![0.0; node_count]; node_count];
    for (r, row) in entries.iter_mut().enumerate() {
        row[r] = 1.0;
    }
    entries[i][i] = 0.5;
    entries[i][j] = 0.5;
    entries[j][j] = 0.5;
    entries[j][i] = 0.5;
    Ok(WeightMatrix::from_rows_unchecked(entries))
}

/// Expected gossip weight matrix `I − Σ/(2M) + (A + Aᵀ)/(2M)` with
/// `Σ_j = Σ_i (A_ij + A_ji)` on the diagonal. Symmetric and doubly
/// stochastic for any undirected topology.
pub fn expected_weight_matrix(topology: &Topology) -> WeightMatrix {
    let m = topology.node_count();
    let a = topology.adjacency();
    let scale = 2.0 * m as f64;
    let mut entries = vec![vec![0.0; m]; m];
    for i in 0..m {
        let sigma: f64 = (0..m).map(|k| (a[k][i] + a[i][k]) as f64).sum();
        entries[i][i] = 1.0 - sigma / scale;
        for j in 0..m {
            if j != i {
                entries[i][j] = (a[i][j] + a[j][i]) as f64 / scale;
            }
        }
    }
    WeightMatrix::from_rows_unchecked(entries)
}

/// True iff the second-largest eigenvalue magnitude of the expected weight
/// matrix is below `1 − 1e-9`. A single node counts as connected.
pub fn connected_in_expectation(pbar: &WeightMatrix) -> bool {
    pbar.second_eigenvalue_magnitude() < 1.0 - CONNECTIVITY_SLACK
}

/// Run one attack-free gossip instance for `steps` iterations and return the
/// full trajectory `y(0..=steps)`. Each iteration activates one edge drawn
/// uniformly from the edge set.
pub fn run_instance<R: Rng + ?Sized>(
    topology: &Topology,
    init: &[f64],
    steps: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if init.len() != topology.node_count() {
        return Err(Error::InvalidConfig {
            field: "init".into(),
            reason: format!(
                "expected {} states, got {}",
                topology.node_count(),
                init.len()
            ),
        });
    }
    let mut trajectory = Vec::with_capacity(steps + 1);
    let mut current = init.to_vec();
    trajectory.push(current.clone());
    if steps == 0 || topology.edge_count() == 0 {
        // With no edges there is nothing to average; the state is frozen.
        for _ in 0..steps {
            trajectory.push(current.clone());
        }
        return Ok(trajectory);
    }
    for _ in 0..steps {
        let (i, j) = topology.edges()[rng.gen_range(0..topology.edge_count())];
        let avg = (current[i] + current[j]) / 2.0;
        current[i] = avg;
        current[j] = avg;
        trajectory.push(current.clone());
    }
    Ok(trajectory)
}
