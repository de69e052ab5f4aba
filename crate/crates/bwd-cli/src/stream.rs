//! The `assign` subcommand: reads covariate rows one per line, assigns each
//! unit as it arrives, and can persist the design mid-stream so a later
//! session continues the exact same random stream.
//!
//! Output is CSV: `index,group,eta,was_overflow`. The header is written only
//! when the stream starts at index 0, so the concatenated output of a
//! split session is byte-identical to an uninterrupted one. Two-arm streams
//! report the signed label (+1 / -1) as the group; trees report the leaf
//! index and leave `eta` empty.

use crate::persist::{self, StreamDesign};
use crate::CliError;
use bwd::tree::TreeDesign;
use bwd::walk::{WalkError, WalkState};
use bwd::{DesignParams, OverflowPolicy};
use std::io::{BufRead, Write};
use std::path::PathBuf;

pub const STREAM_HEADER: &str = "index,group,eta,was_overflow";

/// Everything `assign` needs. Design fields are optional: a fresh stream
/// fills them with defaults (`d` is required), a resumed one checks any that
/// were given against the state file and refuses mismatches.
#[derive(Debug, Default, Clone)]
pub struct AssignOptions {
    pub input: Option<PathBuf>,
    pub state: Option<PathBuf>,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub k: Option<usize>,
    pub q: Option<f64>,
    pub p: Option<String>,
    pub phi: Option<f64>,
    pub delta: Option<f64>,
    pub policy: Option<String>,
    pub seed: Option<u64>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Target probabilities from the `q` / `p` / `k` flags, as in `simulate`.
fn resolve_probs(opts: &AssignOptions) -> Result<Vec<f64>, CliError> {
    if opts.q.is_some() && opts.p.is_some() {
        return Err(config_err("give either --q (two arms) or --p (k arms), not both"));
    }
    if let Some(ptext) = &opts.p {
        let probs: Vec<f64> = ptext
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| config_err(format!("probability entry `{f}`: {e}")))
            })
            .collect::<Result<_, _>>()?;
        if let Some(k) = opts.k {
            if k != probs.len() {
                return Err(config_err(format!(
                    "k = {k} does not match the {}-entry probability vector",
                    probs.len()
                )));
            }
        }
        Ok(probs)
    } else {
        let k = opts.k.unwrap_or(2);
        if k == 2 {
            let q = opts.q.unwrap_or(0.5);
            Ok(vec![1.0 - q, q])
        } else if opts.q.is_some() {
            Err(config_err("--q is two-arm shorthand; use --p when k > 2"))
        } else {
            Ok(vec![1.0 / k as f64; k])
        }
    }
}

fn build_fresh(opts: &AssignOptions) -> Result<(StreamDesign, u64), CliError> {
    let d = opts.d.ok_or_else(|| config_err("starting a new stream needs --d"))?;
    let n = opts.n.unwrap_or(1000);
    let phi = opts.phi.unwrap_or(0.5);
    let delta = opts.delta.unwrap_or(0.05);
    let policy: OverflowPolicy = opts
        .policy
        .as_deref()
        .unwrap_or("restart")
        .parse()
        .map_err(|e: bwd::DesignError| config_err(e.to_string()))?;
    let seed = opts.seed.unwrap_or(42);
    let probs = resolve_probs(opts)?;
    if probs.len() == 2 {
        let params = DesignParams::new(n, d, probs[1], phi, delta, policy)
            .map_err(|e| config_err(e.to_string()))?;
        Ok((StreamDesign::Walk { params, state: WalkState::new(d, seed) }, seed))
    } else {
        let tree = TreeDesign::build(&probs, n, d, phi, delta, policy, seed)
            .map_err(|e| config_err(e.to_string()))?;
        Ok((StreamDesign::Tree { tree, delta }, seed))
    }
}

/// Any design flag given alongside a resumed state must agree with it;
/// comparisons are exact, matching the values echoed in the state file.
fn check_resume_flags(
    opts: &AssignOptions,
    design: &StreamDesign,
    seed: u64,
    path: &std::path::Path,
) -> Result<(), CliError> {
    let mismatch = |field: &str, given: String, stored: String| {
        Err(config_err(format!(
            "--{field} {given} conflicts with state file {} ({field} = {stored})",
            path.display()
        )))
    };
    if let Some(n) = opts.n {
        if n != design.n() {
            return mismatch("n", n.to_string(), design.n().to_string());
        }
    }
    if let Some(d) = opts.d {
        if d != design.d() {
            return mismatch("d", d.to_string(), design.d().to_string());
        }
    }
    if let Some(k) = opts.k {
        if k != design.k() {
            return mismatch("k", k.to_string(), design.k().to_string());
        }
    }
    if opts.q.is_some() || opts.p.is_some() {
        let probs = resolve_probs(opts)?;
        if probs != design.probs() {
            let fmt = |v: &[f64]| {
                v.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",")
            };
            return mismatch("p", fmt(&probs), fmt(&design.probs()));
        }
    }
    if let Some(phi) = opts.phi {
        if phi != design.phi() {
            return mismatch("phi", phi.to_string(), design.phi().to_string());
        }
    }
    if let Some(delta) = opts.delta {
        if delta != design.delta() {
            return mismatch("delta", delta.to_string(), design.delta().to_string());
        }
    }
    if let Some(policy) = &opts.policy {
        let policy: OverflowPolicy =
            policy.parse().map_err(|e: bwd::DesignError| config_err(e.to_string()))?;
        if policy != design.policy() {
            return mismatch("policy", policy.to_string(), design.policy().to_string());
        }
    }
    if let Some(s) = opts.seed {
        if s != seed {
            return mismatch("seed", s.to_string(), seed.to_string());
        }
    }
    Ok(())
}

fn write_err(e: std::io::Error) -> CliError {
    CliError::Runtime(format!("cannot write output: {e}"))
}

/// Runs the stream: header (fresh streams only), one CSV row per assigned
/// unit, then a state save on clean end of input if a state path was given.
/// Rows that fail to parse or violate the norm bound are reported on stderr
/// and skipped without touching the design; a row of the wrong width or an
/// exhausted horizon aborts without saving.
pub fn run_assign(opts: &AssignOptions, out: &mut impl Write) -> Result<(), CliError> {
    let (mut design, seed) = match &opts.state {
        Some(path) if path.exists() => {
            let (design, seed) = persist::load(path)?;
            check_resume_flags(opts, &design, seed, path)?;
            (design, seed)
        }
        _ => build_fresh(opts)?,
    };

    let reader: Box<dyn BufRead> = match &opts.input {
        Some(path) => Box::new(std::io::BufReader::new(
            std::fs::File::open(path).map_err(|e| CliError::io("cannot open input", path, e))?,
        )),
        None => Box::new(std::io::stdin().lock()),
    };

    let d = design.d();
    let mut index = design.assigned();
    if index == 0 {
        writeln!(out, "{STREAM_HEADER}").map_err(write_err)?;
    }

    let mut x = vec![0.0; d];
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::Runtime(format!("cannot read input: {e}")))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d {
            return Err(CliError::Runtime(format!(
                "input line {}: {} fields, design expects d = {d}",
                lineno + 1,
                fields.len()
            )));
        }
        let mut ok = true;
        for (slot, field) in x.iter_mut().zip(&fields) {
            match field.trim().parse::<f64>() {
                Ok(v) => *slot = v,
                Err(e) => {
                    eprintln!("skipping input line {}: `{field}`: {e}", lineno + 1);
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }

        let row = match &mut design {
            StreamDesign::Walk { params, state } => match state.assign(&x, params) {
                Ok(a) => {
                    let eta = a.eta.map(|e| e.to_string()).unwrap_or_default();
                    Ok(format!("{index},{},{eta},{}", a.z, a.was_overflow))
                }
                Err(e) => Err(e),
            },
            StreamDesign::Tree { tree, .. } => match tree.assign(&x) {
                Ok(a) => Ok(format!("{index},{},,{}", a.group, a.overflow_on_path)),
                Err(e) => Err(e),
            },
        };
        match row {
            Ok(row) => {
                writeln!(out, "{row}").map_err(write_err)?;
                index += 1;
            }
            Err(WalkError::InputNorm { norm }) => {
                eprintln!("skipping input line {}: covariate norm {norm} exceeds 1", lineno + 1);
            }
            Err(e @ WalkError::HorizonExceeded { .. }) => {
                return Err(CliError::Runtime(format!("input line {}: {e}", lineno + 1)));
            }
            Err(e) => return Err(CliError::Runtime(format!("input line {}: {e}", lineno + 1))),
        }
    }

    if let Some(path) = &opts.state {
        persist::save(path, &design, seed)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows_text(range: std::ops::Range<usize>) -> String {
        let mut text = String::new();
        for i in range {
            let a = ((i as f64 * 0.37).sin()) * 0.7;
            let b = ((i as f64 * 0.61).cos()) * 0.7;
            text.push_str(&format!("{a},{b}\n"));
        }
        text
    }

    fn opts(dir: &std::path::Path, input: &str, with_state: bool) -> AssignOptions {
        let input_path = dir.join(format!("in-{}.csv", input.len()));
        std::fs::write(&input_path, input).unwrap();
        AssignOptions {
            input: Some(input_path),
            state: with_state.then(|| dir.join("walk.state")),
            d: Some(2),
            n: Some(500),
            seed: Some(11),
            ..AssignOptions::default()
        }
    }

    #[test]
    fn split_sessions_concatenate_to_the_uninterrupted_output() {
        let whole = tempfile::tempdir().unwrap();
        let mut single = Vec::new();
        run_assign(&opts(whole.path(), &rows_text(0..100), false), &mut single).unwrap();

        let split = tempfile::tempdir().unwrap();
        let mut first = Vec::new();
        run_assign(&opts(split.path(), &rows_text(0..50), true), &mut first).unwrap();
        let mut second = Vec::new();
        run_assign(&opts(split.path(), &rows_text(50..100), true), &mut second).unwrap();

        first.extend_from_slice(&second);
        assert_eq!(single, first);
        let text = String::from_utf8(single).unwrap();
        assert!(text.starts_with(STREAM_HEADER));
        assert_eq!(text.lines().count(), 101);
        let last = text.lines().last().unwrap();
        assert!(last.starts_with("99,"));
    }

    #[test]
    fn resume_rejects_conflicting_flags_but_accepts_matching_ones() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Vec::new();
        run_assign(&opts(dir.path(), &rows_text(0..10), true), &mut out).unwrap();

        let mut conflicting = opts(dir.path(), &rows_text(10..20), true);
        conflicting.q = Some(0.3);
        assert!(matches!(run_assign(&conflicting, &mut Vec::new()), Err(CliError::Config(_))));

        let mut matching = opts(dir.path(), &rows_text(10..20), true);
        matching.q = Some(0.5);
        run_assign(&matching, &mut Vec::new()).unwrap();
    }

    #[test]
    fn malformed_rows_are_skipped_and_do_not_advance_the_stream() {
        let dir = tempfile::tempdir().unwrap();
        let input = "0.1,0.2\nnot,numbers\n0.9,0.9\n# comment\n\n0.3,-0.4\n";
        let mut out = Vec::new();
        run_assign(&opts(dir.path(), input, true), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        // Header, then rows 0 and 1: the unparseable row and the norm
        // violation (|| (0.9, 0.9) || > 1) are both skipped.
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,"));
        assert!(lines[2].starts_with("1,"));
        let (design, _) = persist::load(&dir.path().join("walk.state")).unwrap();
        assert_eq!(design.assigned(), 2);
    }

    #[test]
    fn wrong_width_aborts_without_saving_state() {
        let dir = tempfile::tempdir().unwrap();
        let err = run_assign(&opts(dir.path(), "0.1,0.2,0.3\n", true), &mut Vec::new());
        assert!(matches!(err, Err(CliError::Runtime(_))));
        assert!(!dir.path().join("walk.state").exists());
    }

    #[test]
    fn empty_input_saves_a_fresh_state() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Vec::new();
        run_assign(&opts(dir.path(), "", true), &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{STREAM_HEADER}\n"));
        let (design, seed) = persist::load(&dir.path().join("walk.state")).unwrap();
        assert_eq!(design.assigned(), 0);
        assert_eq!(seed, 11);
    }

    #[test]
    fn multi_arm_streams_report_leaf_indices() {
        let dir = tempfile::tempdir().unwrap();
        let mut o = opts(dir.path(), &rows_text(0..30), false);
        o.p = Some("0.25,0.25,0.25,0.25".into());
        let mut out = Vec::new();
        run_assign(&o, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        for line in text.lines().skip(1) {
            let cells: Vec<&str> = line.split(',').collect();
            let group: usize = cells[1].parse().unwrap();
            assert!(group < 4);
            assert!(cells[2].is_empty());
        }
    }

    #[test]
    fn exhausted_horizon_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let mut o = opts(dir.path(), &rows_text(0..6), false);
        o.n = Some(5);
        let err = run_assign(&o, &mut Vec::new());
        assert!(matches!(err, Err(CliError::Runtime(_))));
    }
}
