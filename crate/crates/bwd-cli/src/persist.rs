//! Saving and restoring streaming designs. The state file is a versioned,
//! line-oriented `key = value` text format so a resumed session continues
//! the random stream bit-for-bit where the previous one stopped.

use crate::CliError;
use bwd::tree::TreeDesign;
use bwd::walk::{WalkSnapshot, WalkState};
use bwd::{DesignParams, OverflowPolicy};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

pub const STATE_VERSION: u64 = 1;

/// A design that can assign units one at a time and be persisted mid-run.
pub enum StreamDesign {
    Walk {
        params: DesignParams,
        state: WalkState,
    },
    /// The tree keeps per-node failure budgets; the top-level delta is
    /// carried alongside so saved files echo the configured value exactly.
    Tree {
        tree: TreeDesign,
        delta: f64,
    },
}

impl StreamDesign {
    pub fn d(&self) -> usize {
        match self {
            StreamDesign::Walk { params, .. } => params.d(),
            StreamDesign::Tree { tree, .. } => tree.d(),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            StreamDesign::Walk { params, .. } => params.n(),
            StreamDesign::Tree { tree, .. } => tree.node_params()[0].n(),
        }
    }

    pub fn k(&self) -> usize {
        match self {
            StreamDesign::Walk { .. } => 2,
            StreamDesign::Tree { tree, .. } => tree.k(),
        }
    }

    pub fn probs(&self) -> Vec<f64> {
        match self {
            StreamDesign::Walk { params, .. } => vec![1.0 - params.q(), params.q()],
            StreamDesign::Tree { tree, .. } => tree.probs().to_vec(),
        }
    }

    pub fn phi(&self) -> f64 {
        match self {
            StreamDesign::Walk { params, .. } => params.phi(),
            StreamDesign::Tree { tree, .. } => tree.node_params()[0].phi(),
        }
    }

    pub fn delta(&self) -> f64 {
        match self {
            StreamDesign::Walk { params, .. } => params.delta(),
            StreamDesign::Tree { delta, .. } => *delta,
        }
    }

    pub fn policy(&self) -> OverflowPolicy {
        match self {
            StreamDesign::Walk { params, .. } => params.policy(),
            StreamDesign::Tree { tree, .. } => tree.node_params()[0].policy(),
        }
    }

    /// Units assigned so far. Every unit passes through the tree root, so
    /// the root walk's step count is the tree's.
    pub fn assigned(&self) -> usize {
        match self {
            StreamDesign::Walk { state, .. } => state.step(),
            StreamDesign::Tree { tree, .. } => {
                tree.node_snapshots().last().map_or(0, |s| s.step)
            }
        }
    }
}

fn fmt_f64_list(values: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v}");
    }
    out
}

fn push_snapshot(out: &mut String, prefix: &str, snap: &WalkSnapshot) {
    let _ = writeln!(out, "{prefix}seed = {}", snap.seed);
    let _ = writeln!(out, "{prefix}step = {}", snap.step);
    let _ = writeln!(out, "{prefix}fallback_active = {}", snap.fallback_active);
    let _ = writeln!(out, "{prefix}restarts = {}", snap.restarts);
    let _ = writeln!(out, "{prefix}rng_position = {}", snap.rng_position);
    let _ = writeln!(out, "{prefix}w = {}", fmt_f64_list(&snap.w));
}

/// Renders the state file contents.
pub fn render(design: &StreamDesign, seed: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "version = {STATE_VERSION}");
    match design {
        StreamDesign::Walk { params, state } => {
            let _ = writeln!(out, "kind = walk");
            let _ = writeln!(out, "n = {}", params.n());
            let _ = writeln!(out, "d = {}", params.d());
            let _ = writeln!(out, "q = {}", params.q());
            let _ = writeln!(out, "phi = {}", params.phi());
            let _ = writeln!(out, "delta = {}", params.delta());
            let _ = writeln!(out, "policy = {}", params.policy());
            let _ = writeln!(out, "seed = {seed}");
            push_snapshot(&mut out, "", &state.snapshot());
        }
        StreamDesign::Tree { tree, delta } => {
            let node_params = tree.node_params();
            let shared = node_params[0];
            let _ = writeln!(out, "kind = tree");
            let _ = writeln!(out, "n = {}", shared.n());
            let _ = writeln!(out, "d = {}", tree.d());
            let _ = writeln!(out, "k = {}", tree.k());
            let _ = writeln!(out, "p = {}", fmt_f64_list(tree.probs()));
            let _ = writeln!(out, "phi = {}", shared.phi());
            let _ = writeln!(out, "delta = {delta}");
            let _ = writeln!(out, "policy = {}", shared.policy());
            let _ = writeln!(out, "seed = {seed}");
            let snaps = tree.node_snapshots();
            let _ = writeln!(out, "nodes = {}", snaps.len());
            for (i, snap) in snaps.iter().enumerate() {
                push_snapshot(&mut out, &format!("node.{i}."), snap);
            }
        }
    }
    out
}

/// Writes the state file.
pub fn save(path: &Path, design: &StreamDesign, seed: u64) -> Result<(), CliError> {
    std::fs::write(path, render(design, seed))
        .map_err(|e| CliError::io("cannot write state file", path, e))
}

struct KeyMap {
    map: HashMap<String, String>,
    path: String,
}

impl KeyMap {
    fn get(&self, key: &str) -> Result<&str, CliError> {
        self.map
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| CliError::Runtime(format!("state file {}: missing key `{key}`", self.path)))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.get(key)?;
        raw.parse::<T>().map_err(|e| {
            CliError::Runtime(format!("state file {}: key `{key}` = `{raw}`: {e}", self.path))
        })
    }

    fn parse_f64_list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        let raw = self.get(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| {
                    CliError::Runtime(format!(
                        "state file {}: key `{key}` entry `{f}`: {e}",
                        self.path
                    ))
                })
            })
            .collect()
    }

    fn snapshot(&self, prefix: &str) -> Result<WalkSnapshot, CliError> {
        Ok(WalkSnapshot {
            w: self.parse_f64_list(&format!("{prefix}w"))?,
            step: self.parse(&format!("{prefix}step"))?,
            fallback_active: self.parse(&format!("{prefix}fallback_active"))?,
            restarts: self.parse(&format!("{prefix}restarts"))?,
            seed: self.parse(&format!("{prefix}seed"))?,
            rng_position: self.parse(&format!("{prefix}rng_position"))?,
        })
    }
}

/// Reads a state file back into a live design plus its construction seed.
pub fn load(path: &Path) -> Result<(StreamDesign, u64), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io("cannot read state file", path, e))?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Runtime(format!(
                "state file {}:{}: expected `key = value`, got `{raw}`",
                path.display(),
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    let keys = KeyMap { map, path: path.display().to_string() };

    let version: u64 = keys.parse("version")?;
    if version != STATE_VERSION {
        return Err(CliError::Runtime(format!(
            "state file {}: unsupported version {version} (expected {STATE_VERSION})",
            path.display()
        )));
    }

    let n: usize = keys.parse("n")?;
    let d: usize = keys.parse("d")?;
    let phi: f64 = keys.parse("phi")?;
    let delta: f64 = keys.parse("delta")?;
    let policy: OverflowPolicy = keys.parse("policy")?;
    let seed: u64 = keys.parse("seed")?;

    match keys.get("kind")? {
        "walk" => {
            let q: f64 = keys.parse("q")?;
            let params = DesignParams::new(n, d, q, phi, delta, policy)
                .map_err(|e| CliError::Runtime(format!("state file {}: {e}", path.display())))?;
            let snap = keys.snapshot("")?;
            if snap.w.len() != d {
                return Err(CliError::Runtime(format!(
                    "state file {}: w has {} entries, d = {d}",
                    path.display(),
                    snap.w.len()
                )));
            }
            Ok((StreamDesign::Walk { params, state: WalkState::from_snapshot(&snap) }, seed))
        }
        "tree" => {
            let k: usize = keys.parse("k")?;
            let probs = keys.parse_f64_list("p")?;
            if probs.len() != k {
                return Err(CliError::Runtime(format!(
                    "state file {}: p has {} entries, k = {k}",
                    path.display(),
                    probs.len()
                )));
            }
            let mut tree = TreeDesign::build(&probs, n, d, phi, delta, policy, seed)
                .map_err(|e| CliError::Runtime(format!("state file {}: {e}", path.display())))?;
            let nodes: usize = keys.parse("nodes")?;
            let snaps = (0..nodes)
                .map(|i| keys.snapshot(&format!("node.{i}.")))
                .collect::<Result<Vec<_>, _>>()?;
            tree.restore_node_snapshots(&snaps)
                .map_err(|e| CliError::Runtime(format!("state file {}: {e}", path.display())))?;
            Ok((StreamDesign::Tree { tree, delta }, seed))
        }
        other => Err(CliError::Runtime(format!(
            "state file {}: unknown kind `{other}`",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bwd::OverflowPolicy;

    fn row(d: usize, i: usize) -> Vec<f64> {
        let mut x = vec![0.0; d];
        x[i % d] = if i % 3 == 0 { -0.8 } else { 0.6 };
        x
    }

    #[test]
    fn walk_state_round_trips_bit_exactly() {
        let params = DesignParams::new(100, 4, 0.3, 0.5, 0.05, OverflowPolicy::Restart).unwrap();
        let mut state = WalkState::new(4, 99);
        for i in 0..37 {
            state.assign(&row(4, i), &params).unwrap();
        }
        let design = StreamDesign::Walk { params: params.clone(), state };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("walk.state");
        save(&path, &design, 99).unwrap();

        let (loaded, seed) = load(&path).unwrap();
        assert_eq!(seed, 99);
        assert_eq!(loaded.assigned(), 37);
        let (StreamDesign::Walk { state: mut a, .. }, StreamDesign::Walk { state: mut b, .. }) =
            (design, loaded)
        else {
            panic!("expected walk states");
        };
        for i in 37..90 {
            assert_eq!(a.assign(&row(4, i), &params).unwrap(), b.assign(&row(4, i), &params).unwrap());
        }
        assert_eq!(a.w(), b.w());
    }

    #[test]
    fn tree_state_round_trips_and_keeps_the_configured_delta() {
        let probs = [0.35, 0.15, 0.3, 0.1, 0.1];
        let mut tree =
            TreeDesign::build(&probs, 400, 4, 0.5, 0.05, OverflowPolicy::Restart, 5).unwrap();
        for i in 0..123 {
            tree.assign(&row(4, i)).unwrap();
        }
        let design = StreamDesign::Tree { tree, delta: 0.05 };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tree.state");
        save(&path, &design, 5).unwrap();

        let (loaded, _) = load(&path).unwrap();
        assert_eq!(loaded.assigned(), 123);
        assert_eq!(loaded.delta(), 0.05);
        assert_eq!(loaded.k(), 5);
        let (StreamDesign::Tree { tree: mut a, .. }, StreamDesign::Tree { tree: mut b, .. }) =
            (design, loaded)
        else {
            panic!("expected trees");
        };
        for i in 123..400 {
            assert_eq!(a.assign(&row(4, i)).unwrap(), b.assign(&row(4, i)).unwrap());
        }
        assert_eq!(a.node_snapshots(), b.node_snapshots());
    }

    #[test]
    fn corrupt_and_mismatched_files_are_runtime_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.state");
        std::fs::write(&path, "version = 9\nkind = walk\n").unwrap();
        assert!(matches!(load(&path), Err(CliError::Runtime(_))));
        std::fs::write(&path, "version = 1\nkind = carousel\nn = 10\nd = 2\nphi = 0.5\ndelta = 0.05\npolicy = restart\nseed = 1\n").unwrap();
        assert!(matches!(load(&path), Err(CliError::Runtime(_))));
    }
}
