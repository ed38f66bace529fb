//! Leader-follower digraphs and the spectral quantities the observer gains
//! depend on.
//!
//! Followers are indexed `0..N` internally and `1..=N` in user-facing text.
//! The leader is implicit: it only appears through the pinning vector.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Weights below this are treated as absent edges during reachability.
pub const EDGE_EPS: f64 = 1e-15;

/// Absolute accuracy requested from the eigenvalue routine.
pub const EIG_TOL: f64 = 1e-13;

/// Weighted digraph of one leader and `N` followers.
///
/// `adjacency[(i, j)]` is the weight of the link j→i between followers and
/// `pinning[i]` the weight of the leader→i link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectedTopology {
    adjacency: Matrix,
    pinning: Vec<f64>,
}

impl DirectedTopology {
    pub fn new(adjacency: Matrix, pinning: Vec<f64>) -> Result<Self> {
        let n = pinning.len();
        if n == 0 {
            return Err(Error::Invalid("a topology needs at least one follower".into()));
        }
        if adjacency.rows() != n || adjacency.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "adjacency is {}x{} but there are {} followers",
                adjacency.rows(),
                adjacency.cols(),
                n
            )));
        }
        for i in 0..n {
            if adjacency[(i, i)] != 0.0 {
                return Err(Error::Invalid(format!(
                    "adjacency diagonal entry ({0},{0}) must be zero",
                    i + 1
                )));
            }
            for j in 0..n {
                let w = adjacency[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::Invalid(format!(
                        "adjacency entry ({},{}) = {} must be finite and nonnegative",
                        i + 1,
                        j + 1,
                        w
                    )));
                }
            }
        }
        for (i, &b) in pinning.iter().enumerate() {
            if !b.is_finite() || b < 0.0 {
                return Err(Error::Invalid(format!(
                    "pinning weight b_{} = {} must be finite and nonnegative",
                    i + 1,
                    b
                )));
            }
        }
        Ok(Self { adjacency, pinning })
    }

    /// Convenience constructor from nested rows.
    pub fn from_rows<R: AsRef<[f64]>>(adjacency: &[R], pinning: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_rows(adjacency)?, pinning.to_vec())
    }

    /// Recovers the topology from a sub-Laplacian `L0`: off-diagonal entries
    /// give `-a_ij` and row sums give `b_i`.
    pub fn from_sub_laplacian(l0: &Matrix) -> Result<Self> {
        if !l0.is_square() {
            return Err(Error::DimensionMismatch("sub-Laplacian must be square".into()));
        }
        let n = l0.rows();
        let mut adjacency = Matrix::zeros(n, n);
        let mut pinning = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    adjacency[(i, j)] = -l0[(i, j)];
                }
            }
            pinning[i] = l0.row(i).iter().sum();
        }
        Self::new(adjacency, pinning)
    }

    pub fn follower_count(&self) -> usize {
        self.pinning.len()
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    pub fn pinning(&self) -> &[f64] {
        &self.pinning
    }

    /// `[L0]_ii = b_i + Σ_j a_ij`, `[L0]_ij = -a_ij`.
    pub fn sub_laplacian(&self) -> Matrix {
        let n = self.follower_count();
        let mut l0 = Matrix::zeros(n, n);
        for i in 0..n {
            let mut diag = self.pinning[i];
            for j in 0..n {
                if i != j {
                    let a = self.adjacency[(i, j)];
                    l0[(i, j)] = -a;
                    diag += a;
                }
            }
            l0[(i, i)] = diag;
        }
        l0
    }

    /// Followers not reachable from the leader (0-based), in index order.
    pub fn unreachable_followers(&self) -> Vec<usize> {
        let n = self.follower_count();
        let mut seen = vec![false; n];
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| self.pinning[i] > EDGE_EPS).collect();
        for &i in &queue {
            seen[i] = true;
        }
        while let Some(j) = queue.pop_front() {
            // j→i exists when a_ij > 0.
            for i in 0..n {
                if !seen[i] && self.adjacency[(i, j)] > EDGE_EPS {
                    seen[i] = true;
                    queue.push_back(i);
                }
            }
        }
        (0..n).filter(|&i| !seen[i]).collect()
    }

    pub fn has_spanning_tree(&self) -> bool {
        self.unreachable_followers().is_empty()
    }
}

/// Where the Lyapunov weight vector of an analysis came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    /// `ρ = (L0ᵀ)⁻¹ 1_N`.
    RhoFromL0,
    /// A user-supplied common diagonal `H = diag(η)`.
    UserH,
}

/// Spectral summary of one topology: `L0`, the weight vector, the mirror
/// matrix and its smallest eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphAnalysis {
    pub sub_laplacian: Matrix,
    /// `ρ` for [`WeightSource::RhoFromL0`], `η` for [`WeightSource::UserH`].
    pub weights: Vec<f64>,
    pub mirror: Matrix,
    pub lambda_min: f64,
    pub max_weight: f64,
    pub weight_source: WeightSource,
}

impl GraphAnalysis {
    pub fn follower_count(&self) -> usize {
        self.weights.len()
    }

    /// `max(weights) / λ1(M)`, the smallest admissible β for this topology alone.
    pub fn beta_bound(&self) -> f64 {
        self.max_weight / self.lambda_min
    }
}

fn weighted_mirror(l0: &Matrix, weights: &[f64]) -> Matrix {
    let n = l0.rows();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = 0.5 * (weights[i] * l0[(i, j)] + l0[(j, i)] * weights[j]);
        }
    }
    m.symmetrize();
    m
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Full analysis with `ρ` solved from `L0ᵀ ρ = 1_N`.
pub fn build_analysis(topo: &DirectedTopology) -> Result<GraphAnalysis> {
    let unreachable = topo.unreachable_followers();
    if !unreachable.is_empty() {
        return Err(Error::NoSpanningTree {
            unreachable: unreachable.into_iter().map(|i| i + 1).collect(),
        });
    }
    let l0 = topo.sub_laplacian();
    let n = topo.follower_count();
    let rho = linalg::solve(&l0.transpose(), &vec![1.0; n])?;
    let mirror = weighted_mirror(&l0, &rho);
    let lambda_min = linalg::min_eig_symmetric(&mirror, EIG_TOL)?;
    Ok(GraphAnalysis {
        max_weight: max_of(&rho),
        sub_laplacian: l0,
        weights: rho,
        mirror,
        lambda_min,
        weight_source: WeightSource::RhoFromL0,
    })
}

/// Analysis with a user-chosen diagonal weight `H = diag(η)`.
pub fn mirror_with_h(topo: &DirectedTopology, eta: &[f64]) -> Result<GraphAnalysis> {
    let n = topo.follower_count();
    if eta.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "H has {} diagonal entries but there are {} followers",
            eta.len(),
            n
        )));
    }
    if let Some(i) = eta.iter().position(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::Invalid(format!(
            "H diagonal entry eta_{} = {} must be positive",
            i + 1,
            eta[i]
        )));
    }
    let l0 = topo.sub_laplacian();
    let mirror = weighted_mirror(&l0, eta);
    let lambda_min = linalg::min_eig_symmetric(&mirror, EIG_TOL)?;
    Ok(GraphAnalysis {
        max_weight: max_of(eta),
        sub_laplacian: l0,
        weights: eta.to_vec(),
        mirror,
        lambda_min,
        weight_source: WeightSource::UserH,
    })
}

/// Piecewise-constant, right-continuous switching signal over a set of
/// topologies. Topology indices in the schedule are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySequence {
    topologies: Vec<DirectedTopology>,
    schedule: Vec<(f64, usize)>,
    common_h: Option<Vec<f64>>,
}

impl TopologySequence {
    /// Validates the schedule, the spanning-tree condition on every topology
    /// and, when `common_h` is given, positivity of every `M(L_j)`.
    pub fn new(
        topologies: Vec<DirectedTopology>,
        schedule: Vec<(f64, usize)>,
        common_h: Option<Vec<f64>>,
    ) -> Result<Self> {
        let p = topologies.len();
        if p == 0 {
            return Err(Error::Invalid("at least one topology is required".into()));
        }
        let n = topologies[0].follower_count();
        if let Some(k) = topologies.iter().position(|t| t.follower_count() != n) {
            return Err(Error::DimensionMismatch(format!(
                "topology {} has {} followers, topology 1 has {}",
                k + 1,
                topologies[k].follower_count(),
                n
            )));
        }
        if schedule.is_empty() {
            return Err(Error::Invalid("switching schedule is empty".into()));
        }
        for w in schedule.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Invalid(format!(
                    "switch times must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        for &(t, idx) in &schedule {
            if !t.is_finite() {
                return Err(Error::Invalid(format!("switch time {t} is not finite")));
            }
            if idx == 0 || idx > p {
                return Err(Error::Invalid(format!(
                    "schedule references topology {idx}, valid range is 1..={p}"
                )));
            }
        }
        for (k, topo) in topologies.iter().enumerate() {
            let unreachable = topo.unreachable_followers();
            if !unreachable.is_empty() {
                return Err(Error::InfeasibleTopology(format!(
                    "topology {}: no leader-rooted spanning tree (unreachable followers {:?})",
                    k + 1,
                    unreachable.iter().map(|i| i + 1).collect::<Vec<_>>()
                )));
            }
        }
        if p > 1 && common_h.is_none() {
            return Err(Error::Invalid(
                "switching among several topologies requires a common diagonal H".into(),
            ));
        }
        let seq = Self {
            topologies,
            schedule,
            common_h,
        };
        if seq.common_h.is_some() {
            for (k, a) in seq.analyses()?.iter().enumerate() {
                if !(a.lambda_min > 0.0) {
                    return Err(Error::InfeasibleTopology(format!(
                        "topology {}: lambda_1(M(L)) = {} with the given H is not positive",
                        k + 1,
                        a.lambda_min
                    )));
                }
            }
        }
        Ok(seq)
    }

    /// A single fixed topology active from `t0` on.
    pub fn fixed(topology: DirectedTopology, t0: f64) -> Result<Self> {
        Self::new(vec![topology], vec![(t0, 1)], None)
    }

    pub fn topologies(&self) -> &[DirectedTopology] {
        &self.topologies
    }

    pub fn schedule(&self) -> &[(f64, usize)] {
        &self.schedule
    }

    pub fn common_h(&self) -> Option<&[f64]> {
        self.common_h.as_deref()
    }

    pub fn follower_count(&self) -> usize {
        self.topologies[0].follower_count()
    }

    /// 0-based index of the topology active at `t` (right-continuous).
    /// Times before the first entry use the first entry's topology.
    pub fn active_index(&self, t: f64) -> usize {
        let pos = self.schedule.partition_point(|&(s, _)| s <= t);
        let entry = if pos == 0 { 0 } else { pos - 1 };
        self.schedule[entry].1 - 1
    }

    /// Times at which the active topology actually changes. Entries that
    /// re-select the current topology are skipped.
    pub fn effective_switch_times(&self) -> Vec<f64> {
        self.schedule
            .windows(2)
            .filter(|w| w[0].1 != w[1].1)
            .map(|w| w[1].0)
            .collect()
    }

    /// One analysis per topology, weighted by `H` when present and by `ρ`
    /// otherwise.
    pub fn analyses(&self) -> Result<Vec<GraphAnalysis>> {
        self.topologies
            .iter()
            .map(|t| match &self.common_h {
                Some(eta) => mirror_with_h(t, eta),
                None => build_analysis(t),
            })
            .collect()
    }
}
