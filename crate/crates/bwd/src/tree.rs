//! Multi-treatment assignment over a binary tree of balancing walks.
//!
//! For k arms with target probabilities p, leaves hold the arms in order and
//! carry weights alpha(leaf_i) = p_i; internal weights are sums of children.
//! Each internal node v runs its own walk with marginal
//! q_v = alpha(left) / alpha(v), full horizon n, failure budget delta / k and
//! the shared phi and policy. A unit descends from the root, going left on
//! z = +1, so leaf probabilities telescope to exactly p.
//!
//! The tree shape is the complete binary tree of minimal height with the
//! 2^h - k rightmost leaves removed and single-child nodes contracted away;
//! for k a power of two it is simply the complete tree.

use crate::design::{DesignError, DesignParams, OverflowPolicy};
use crate::rng::child_seed;
use crate::walk::{Assignment, WalkError, WalkSnapshot, WalkState};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("need at least two groups, got {0}")]
    TooFewGroups(usize),
    #[error("group weight {index} is not positive: {value}")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("probabilities sum to {sum}, expected 1 (tolerance 1e-9)")]
    ProbabilitySum { sum: f64 },
    #[error("group sums disagree in dimension")]
    DimensionMismatch,
    #[error("snapshot count {got} does not match internal node count {expected}")]
    SnapshotCount { expected: usize, got: usize },
    #[error(transparent)]
    Design(#[from] DesignError),
}

/// Per-node view of the tree layout, exposed for audits and persistence.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeInfo {
    Leaf { treatment: usize, alpha: f64 },
    Internal { left: usize, right: usize, alpha: f64, q: f64 },
}

enum NodeKind {
    Leaf { treatment: usize },
    Internal { left: usize, right: usize, params: DesignParams, walk: WalkState },
}

struct TreeNode {
    alpha: f64,
    kind: NodeKind,
}

/// Result of routing one unit through the tree.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupAssignment {
    /// Arm index in 0..k.
    pub group: usize,
    /// z at each internal node along the path, root first.
    pub path_signs: Vec<i8>,
    /// True if any node on the path saw an overflow on this step.
    pub overflow_on_path: bool,
}

/// A k-arm design: one walk per internal node of the contracted tree.
pub struct TreeDesign {
    nodes: Vec<TreeNode>,
    root: usize,
    probs: Vec<f64>,
    d: usize,
}

impl TreeDesign {
    /// Builds the tree for target probabilities `probs` (positive, summing to
    /// one). Node walk seeds are forked from `seed` by construction order.
    pub fn build(
        probs: &[f64],
        n: usize,
        d: usize,
        phi: f64,
        delta: f64,
        policy: OverflowPolicy,
        seed: u64,
    ) -> Result<Self, TreeError> {
        let k = probs.len();
        if k < 2 {
            return Err(TreeError::TooFewGroups(k));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !(p > 0.0) || !p.is_finite() {
                return Err(TreeError::NonPositiveWeight { index: i, value: p });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(TreeError::ProbabilitySum { sum });
        }

        let height = (k as f64).log2().ceil() as u32;
        let slots = 1usize << height;
        let mut tree = TreeDesign { nodes: Vec::new(), root: 0, probs: probs.to_vec(), d };
        // Per-node failure budget.
        let node_delta = delta / k as f64;
        let mut next_walk = 0u64;
        tree.root = tree.build_range(
            probs, 0, slots, n, d, phi, node_delta, policy, seed, &mut next_walk,
        )?;
        Ok(tree)
    }

    /// Builds the contracted subtree over `count` leaf slots starting at leaf
    /// `offset`, holding the leaves offset..offset+m where m <= count.
    #[allow(clippy::too_many_arguments)]
    fn build_range(
        &mut self,
        probs: &[f64],
        offset: usize,
        count: usize,
        n: usize,
        d: usize,
        phi: f64,
        node_delta: f64,
        policy: OverflowPolicy,
        seed: u64,
        next_walk: &mut u64,
    ) -> Result<usize, TreeError> {
        let remaining = probs.len() - offset;
        if remaining == 1 || count == 1 {
            self.nodes.push(TreeNode {
                alpha: probs[offset],
                kind: NodeKind::Leaf { treatment: offset },
            });
            return Ok(self.nodes.len() - 1);
        }
        let half = count / 2;
        if remaining <= half {
            // The right half holds no surviving leaves: contract this node.
            return self.build_range(
                probs, offset, half, n, d, phi, node_delta, policy, seed, next_walk,
            );
        }
        let left = self.build_range(
            probs, offset, half, n, d, phi, node_delta, policy, seed, next_walk,
        )?;
        let right = self.build_range(
            probs,
            offset + half,
            half,
            n,
            d,
            phi,
            node_delta,
            policy,
            seed,
            next_walk,
        )?;
        let alpha = self.nodes[left].alpha + self.nodes[right].alpha;
        let q = self.nodes[left].alpha / alpha;
        let params = DesignParams::new(n, d, q, phi, node_delta, policy)?;
        let walk = WalkState::new(d, child_seed(seed, *next_walk));
        *next_walk += 1;
        self.nodes.push(TreeNode {
            alpha,
            kind: NodeKind::Internal { left, right, params, walk },
        });
        Ok(self.nodes.len() - 1)
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Layout of every node, indexed as in snapshots; the last entry is the
    /// root.
    pub fn topology(&self) -> Vec<NodeInfo> {
        self.nodes
            .iter()
            .map(|n| match &n.kind {
                NodeKind::Leaf { treatment } => {
                    NodeInfo::Leaf { treatment: *treatment, alpha: n.alpha }
                }
                NodeKind::Internal { left, right, params, .. } => NodeInfo::Internal {
                    left: *left,
                    right: *right,
                    alpha: n.alpha,
                    q: params.q(),
                },
            })
            .collect()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Marginals of the per-node walks, in node order.
    pub fn node_params(&self) -> Vec<&DesignParams> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.kind {
                NodeKind::Internal { params, .. } => Some(params),
                NodeKind::Leaf { .. } => None,
            })
            .collect()
    }

    /// Routes one unit; every internal node on the path consumes one step of
    /// its own walk.
    pub fn assign(&mut self, x: &[f64]) -> Result<GroupAssignment, WalkError> {
        let mut idx = self.root;
        let mut path_signs = Vec::new();
        let mut overflow = false;
        loop {
            let node = &mut self.nodes[idx];
            match &mut node.kind {
                NodeKind::Leaf { treatment } => {
                    return Ok(GroupAssignment {
                        group: *treatment,
                        path_signs,
                        overflow_on_path: overflow,
                    });
                }
                NodeKind::Internal { left, right, params, walk } => {
                    let a: Assignment = walk.assign(x, params)?;
                    path_signs.push(a.z);
                    overflow |= a.was_overflow;
                    idx = if a.z > 0 { *left } else { *right };
                }
            }
        }
    }

    /// Internal-node walk snapshots, in node index order.
    pub fn node_snapshots(&self) -> Vec<WalkSnapshot> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.kind {
                NodeKind::Internal { walk, .. } => Some(walk.snapshot()),
                NodeKind::Leaf { .. } => None,
            })
            .collect()
    }

    /// Restores internal-node walks from snapshots taken on an identically
    /// built tree.
    pub fn restore_node_snapshots(&mut self, snaps: &[WalkSnapshot]) -> Result<(), TreeError> {
        let walks: Vec<&mut TreeNode> = self
            .nodes
            .iter_mut()
            .filter(|n| matches!(n.kind, NodeKind::Internal { .. }))
            .collect();
        if walks.len() != snaps.len() {
            return Err(TreeError::SnapshotCount { expected: walks.len(), got: snaps.len() });
        }
        for (node, snap) in walks.into_iter().zip(snaps) {
            if let NodeKind::Internal { walk, .. } = &mut node.kind {
                *walk = WalkState::from_snapshot(snap);
            }
        }
        Ok(())
    }
}

/// Largest pairwise weighted discrepancy between per-group covariate sums:
///
/// ```text
/// max_{m1 < m2} 2 * || (s(m1)/a1 - s(m2)/a2) / (1/a1 + 1/a2) ||_inf
/// ```
///
/// Invariant under rescaling all weights by a positive constant. With k = 2
/// and weights proportional to (q, 1-q) this reduces to the infinity norm of
/// the eta-weighted covariate sum.
pub fn multi_discrepancy(sums: &[Vec<f64>], alpha: &[f64]) -> Result<f64, TreeError> {
    multi_discrepancy_norms(sums, alpha).map(|(_, linf)| linf)
}

/// Both the L2 and the L-infinity versions of the pairwise discrepancy.
pub fn multi_discrepancy_norms(
    sums: &[Vec<f64>],
    alpha: &[f64],
) -> Result<(f64, f64), TreeError> {
    let k = sums.len();
    if k < 2 || alpha.len() != k {
        return Err(TreeError::TooFewGroups(k.min(alpha.len())));
    }
    for (i, &a) in alpha.iter().enumerate() {
        if !(a > 0.0) || !a.is_finite() {
            return Err(TreeError::NonPositiveWeight { index: i, value: a });
        }
    }
    let d = sums[0].len();
    if sums.iter().any(|s| s.len() != d) {
        return Err(TreeError::DimensionMismatch);
    }
    let mut worst_l2: f64 = 0.0;
    let mut worst_linf: f64 = 0.0;
    for i in 0..k {
        for j in (i + 1)..k {
            let scale = 2.0 / (1.0 / alpha[i] + 1.0 / alpha[j]);
            let mut sq = 0.0;
            let mut linf: f64 = 0.0;
            for t in 0..d {
                let v = (sums[i][t] / alpha[i] - sums[j][t] / alpha[j]) * scale;
                sq += v * v;
                linf = linf.max(v.abs());
            }
            worst_l2 = worst_l2.max(sq.sqrt());
            worst_linf = worst_linf.max(linf);
        }
    }
    Ok((worst_l2, worst_linf))
}
