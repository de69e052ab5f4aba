//! End-to-end checks of the multi-arm tree: structural probability
//! telescoping, empirical leaf marginals, consistency between routed units
//! and the per-node walk states, the k = 2 reduction to a single walk, the
//! desk-scale discrepancy envelope, and exact resume from node snapshots.

use bwd::dgp::{self, DgpKind};
use bwd::estimators::{balance_bound, entropy_normalized};
use bwd::rng::child_seed;
use bwd::tree::{multi_discrepancy, NodeInfo, TreeDesign};
use bwd::{DesignParams, OverflowPolicy, WalkState};

/// Product of branch probabilities along every root-to-leaf path.
fn leaf_path_probabilities(tree: &TreeDesign) -> Vec<(usize, f64)> {
    let topo = tree.topology();
    let mut out = Vec::new();
    let mut stack = vec![(tree.root(), 1.0f64)];
    while let Some((idx, p)) = stack.pop() {
        match topo[idx] {
            NodeInfo::Leaf { treatment, .. } => out.push((treatment, p)),
            NodeInfo::Internal { left, right, q, .. } => {
                stack.push((left, p * q));
                stack.push((right, p * (1.0 - q)));
            }
        }
    }
    out.sort_by_key(|&(t, _)| t);
    out
}

#[test]
fn branch_probabilities_telescope_to_the_targets() {
    let cases: Vec<Vec<f64>> = vec![
        vec![0.5, 0.5],
        vec![1.0 / 3.0; 3],
        vec![0.1, 0.2, 0.3, 0.4],
        vec![0.35, 0.15, 0.3, 0.1, 0.1],
        vec![1.0 / 6.0; 6],
        vec![0.04, 0.06, 0.1, 0.2, 0.25, 0.15, 0.2],
        vec![0.125; 8],
    ];
    for probs in cases {
        let k = probs.len();
        let tree =
            TreeDesign::build(&probs, 100, 3, 0.2, 0.05, OverflowPolicy::Restart, 5).unwrap();
        let paths = leaf_path_probabilities(&tree);
        assert_eq!(paths.len(), k);
        for (t, p) in paths {
            assert!(
                (p - probs[t]).abs() < 1e-12,
                "k={k}: leaf {t} telescopes to {p}, target {}",
                probs[t]
            );
        }
        // One walk per internal node of a binary tree with k leaves.
        assert_eq!(tree.node_params().len(), k - 1);
    }
}

#[test]
fn leaf_marginals_match_targets_empirically() {
    let n = 1000;
    let runs = 100u64;
    for (ci, probs) in [vec![1.0 / 3.0; 3], vec![0.1, 0.2, 0.3, 0.4]].iter().enumerate() {
        let k = probs.len();
        let sample = dgp::generate(DgpKind::Linear, n, child_seed(300, ci as u64), 2);
        let mut counts = vec![0u64; k];
        for r in 0..runs {
            let seed = child_seed(child_seed(301, ci as u64), r);
            let mut tree =
                TreeDesign::build(probs, n, 4, 0.5, 0.05, OverflowPolicy::Restart, seed).unwrap();
            for i in 0..n {
                counts[tree.assign(sample.covariates(i)).unwrap().group] += 1;
            }
        }
        let total = (n as u64 * runs) as f64;
        for (g, &c) in counts.iter().enumerate() {
            let share = c as f64 / total;
            assert!(
                (share - probs[g]).abs() < 0.015,
                "k={k}: arm {g} share {share}, target {}",
                probs[g]
            );
        }
    }
}

/// Routes units and rebuilds every internal node's state from the public
/// per-unit outputs (group path signs + topology); the rebuilt vectors must
/// match the node snapshots.
#[test]
fn node_states_agree_with_routed_traffic() {
    let n = 500;
    let d = 4;
    let probs = vec![0.25; 4];
    let sample = dgp::generate(DgpKind::Linear, n, 88, 2);
    let mut tree = TreeDesign::build(&probs, n, d, 0.5, 0.05, OverflowPolicy::Restart, 89).unwrap();
    let topo = tree.topology();
    let mut shadow: Vec<Vec<f64>> = topo.iter().map(|_| vec![0.0; d]).collect();

    for i in 0..n {
        let x = sample.covariates(i).to_vec();
        let a = tree.assign(&x).unwrap();
        assert!(!a.overflow_on_path, "unexpected overflow would void the reconstruction");
        let mut idx = tree.root();
        for &z in &a.path_signs {
            let NodeInfo::Internal { left, right, q, .. } = topo[idx] else {
                panic!("path sign recorded at a leaf")
            };
            let eta = if z > 0 { 2.0 * (1.0 - q) } else { -2.0 * q };
            for (w, &xi) in shadow[idx].iter_mut().zip(&x) {
                *w += eta * xi;
            }
            idx = if z > 0 { left } else { right };
        }
        assert!(matches!(topo[idx], NodeInfo::Leaf { treatment, .. } if treatment == a.group));
    }

    let snaps = tree.node_snapshots();
    let internal_indices: Vec<usize> = (0..topo.len())
        .filter(|&i| matches!(topo[i], NodeInfo::Internal { .. }))
        .collect();
    assert_eq!(snaps.len(), internal_indices.len());
    for (snap, &idx) in snaps.iter().zip(&internal_indices) {
        for (j, (got, want)) in snap.w.iter().zip(&shadow[idx]).enumerate() {
            assert!(
                (got - want).abs() < 1e-9,
                "node {idx} w[{j}]: snapshot {got}, reconstruction {want}"
            );
        }
    }
}

/// A two-arm tree is exactly one walk: same seed derivation, same per-node
/// failure budget, and arm 0 on z = +1.
#[test]
fn two_arm_tree_reduces_to_the_plain_walk() {
    let n = 400;
    let d = 4;
    let delta = 0.05;
    for (ci, &p0) in [0.3, 0.7].iter().enumerate() {
        let seed = child_seed(600, ci as u64);
        let sample = dgp::generate(DgpKind::Linear, n, child_seed(601, ci as u64), 2);
        let mut tree = TreeDesign::build(
            &[p0, 1.0 - p0],
            n,
            d,
            0.5,
            delta,
            OverflowPolicy::Restart,
            seed,
        )
        .unwrap();
        let params =
            DesignParams::new(n, d, p0, 0.5, delta / 2.0, OverflowPolicy::Restart).unwrap();
        let mut walk = WalkState::new(d, child_seed(seed, 0));
        for i in 0..n {
            let x = sample.covariates(i);
            let a = tree.assign(x).unwrap();
            let b = walk.assign(x, &params).unwrap();
            assert_eq!(a.group, if b.z > 0 { 0 } else { 1 });
            assert_eq!(a.path_signs, vec![b.z]);
        }
    }
}

#[test]
fn discrepancy_stays_under_the_envelope_at_desk_scale() {
    let n = 2000;
    let d = 4;
    let phi = 0.5;
    let delta = 0.05;
    let runs = 30u64;
    for &k in &[3usize, 4, 8] {
        let probs = vec![1.0 / k as f64; k];
        let sample = dgp::generate(DgpKind::Linear, n, 1000 + k as u64, 2);
        let mut ok = 0u32;
        for r in 0..runs {
            let seed = child_seed(child_seed(700, k as u64), r);
            let mut tree =
                TreeDesign::build(&probs, n, d, phi, delta, OverflowPolicy::Restart, seed)
                    .unwrap();
            let mut sums = vec![vec![0.0; d]; k];
            for i in 0..n {
                let x = sample.covariates(i);
                let g = tree.assign(x).unwrap().group;
                for (acc, &xi) in sums[g].iter_mut().zip(x) {
                    *acc += xi;
                }
            }
            let disc = multi_discrepancy(&sums, &probs).unwrap();
            let per_node = tree
                .node_params()
                .iter()
                .map(|p| balance_bound(p.q(), d, n, delta / k as f64, phi))
                .fold(0.0f64, f64::max);
            let envelope = 2.0 * (k as f64).log2() * per_node;
            ok += u32::from(disc <= envelope);
        }
        assert!(ok >= runs as u32 - 2, "k={k}: bound held in only {ok}/{runs} runs");
    }
}

#[test]
fn eight_arms_fill_evenly() {
    let n = 4000;
    let k = 8;
    let sample = dgp::generate(DgpKind::Linear, n, 414, 2);
    let mut tree =
        TreeDesign::build(&vec![0.125; k], n, 4, 0.5, 0.05, OverflowPolicy::Restart, 415).unwrap();
    let mut counts = vec![0u64; k];
    for i in 0..n {
        counts[tree.assign(sample.covariates(i)).unwrap().group] += 1;
    }
    let h = entropy_normalized(&counts).unwrap();
    assert!(h >= 0.99, "entropy {h} under a balanced tree");
}

#[test]
fn ragged_tree_resumes_exactly_from_node_snapshots() {
    let n = 800;
    let d = 4;
    let probs = [0.35, 0.15, 0.3, 0.1, 0.1];
    let sample = dgp::generate(DgpKind::Linear, n, 520, 2);
    let build = || {
        TreeDesign::build(&probs, n, d, 0.3, 0.05, OverflowPolicy::Restart, 521).unwrap()
    };
    let mut original = build();
    for i in 0..300 {
        original.assign(sample.covariates(i)).unwrap();
    }
    let mut resumed = build();
    resumed.restore_node_snapshots(&original.node_snapshots()).unwrap();
    for i in 300..n {
        let x = sample.covariates(i);
        assert_eq!(original.assign(x).unwrap(), resumed.assign(x).unwrap(), "unit {i}");
    }
    assert_eq!(original.node_snapshots(), resumed.node_snapshots());
}
