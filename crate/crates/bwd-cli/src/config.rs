//! Experiment configuration: a flat `key = value` text file, CLI flag
//! overrides (flags win), defaults for everything else, and full validation
//! up front so a bad configuration never starts work.

use crate::CliError;
use bwd::baselines::{BaselineKind, BaselineState};
use bwd::dgp::DgpKind;
use bwd::tree::TreeDesign;
use bwd::{DesignParams, OverflowPolicy};
use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Which assignment mechanism the harness runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignChoice {
    /// The balancing walk: one walk for two arms, a tree of walks for k > 2.
    Bwd,
    Bernoulli,
    Complete,
    Efron,
    Smith,
    Alweiss,
    /// Assignments read from a file and scored through the same metrics.
    External,
}

impl DesignChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            DesignChoice::Bwd => "bwd",
            DesignChoice::Bernoulli => "bernoulli",
            DesignChoice::Complete => "complete",
            DesignChoice::Efron => "efron",
            DesignChoice::Smith => "smith",
            DesignChoice::Alweiss => "alweiss",
            DesignChoice::External => "external",
        }
    }

    pub fn baseline_kind(&self) -> Option<BaselineKind> {
        match self {
            DesignChoice::Bernoulli => Some(BaselineKind::Bernoulli),
            DesignChoice::Complete => Some(BaselineKind::CompleteRandomization),
            DesignChoice::Efron => Some(BaselineKind::Efron),
            DesignChoice::Smith => Some(BaselineKind::Smith),
            DesignChoice::Alweiss => Some(BaselineKind::Alweiss),
            _ => None,
        }
    }
}

impl FromStr for DesignChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bwd" => Ok(DesignChoice::Bwd),
            "bernoulli" => Ok(DesignChoice::Bernoulli),
            "complete" | "complete-randomization" | "complete_randomization" => {
                Ok(DesignChoice::Complete)
            }
            "efron" => Ok(DesignChoice::Efron),
            "smith" => Ok(DesignChoice::Smith),
            "alweiss" => Ok(DesignChoice::Alweiss),
            "external" => Ok(DesignChoice::External),
            other => Err(format!(
                "unknown design `{other}` (bwd | bernoulli | complete | efron | smith | alweiss | external)"
            )),
        }
    }
}

/// A fully resolved, validated experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub design: DesignChoice,
    pub dgp: DgpKind,
    pub n: usize,
    pub k: usize,
    /// Target arm probabilities, length k. For two arms `probs[1]` is the
    /// treatment probability q.
    pub probs: Vec<f64>,
    pub phi: f64,
    pub delta: f64,
    pub policy: OverflowPolicy,
    pub replications: usize,
    pub base_seed: u64,
    pub output: Option<PathBuf>,
    /// Record wall-clock nanoseconds per replication. Off by default: timing
    /// values are the one thing that would break byte-identical reruns.
    pub timing: bool,
    pub efron_bias: Option<f64>,
    pub smith_rho: Option<f64>,
    pub assignments_from: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Covariate dimension, fixed by the generating process.
    pub fn d(&self) -> usize {
        self.dgp.dimension()
    }

    /// Treatment probability reported in the CSV `q` column: P(arm 1).
    pub fn q(&self) -> f64 {
        self.probs[1]
    }
}

/// Unresolved settings: every field optional, merged in order
/// defaults < file < flags.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub design: Option<String>,
    pub dgp: Option<String>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub q: Option<f64>,
    pub p: Option<String>,
    pub phi: Option<f64>,
    pub delta: Option<f64>,
    pub policy: Option<String>,
    pub replications: Option<usize>,
    pub base_seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub timing: Option<bool>,
    pub efron_bias: Option<f64>,
    pub smith_rho: Option<f64>,
    pub assignments_from: Option<PathBuf>,
}

impl Overrides {
    /// Applies `other` on top of `self` (other wins where set).
    pub fn layered_under(self, other: Overrides) -> Overrides {
        Overrides {
            design: other.design.or(self.design),
            dgp: other.dgp.or(self.dgp),
            n: other.n.or(self.n),
            k: other.k.or(self.k),
            q: other.q.or(self.q),
            p: other.p.or(self.p),
            phi: other.phi.or(self.phi),
            delta: other.delta.or(self.delta),
            policy: other.policy.or(self.policy),
            replications: other.replications.or(self.replications),
            base_seed: other.base_seed.or(self.base_seed),
            output: other.output.or(self.output),
            timing: other.timing.or(self.timing),
            efron_bias: other.efron_bias.or(self.efron_bias),
            smith_rho: other.smith_rho.or(self.smith_rho),
            assignments_from: other.assignments_from.or(self.assignments_from),
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| config_err(format!("config key `{key}`: cannot parse `{value}`: {e}")))
}

/// Reads a flat `key = value` file. `#` starts a comment; blank lines are
/// ignored; keys may not repeat.
pub fn parse_config_file(path: &Path) -> Result<Overrides, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
    let mut out = Overrides::default();
    let mut seen = HashSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(config_err(format!(
                "{}:{}: expected `key = value`, got `{raw}`",
                path.display(),
                lineno + 1
            )));
        };
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            return Err(config_err(format!(
                "{}:{}: duplicate key `{key}`",
                path.display(),
                lineno + 1
            )));
        }
        match key {
            "design" => out.design = Some(value.to_string()),
            "dgp" => out.dgp = Some(value.to_string()),
            "n" => out.n = Some(parse_value(key, value)?),
            "k" => out.k = Some(parse_value(key, value)?),
            "q" => out.q = Some(parse_value(key, value)?),
            "p" => out.p = Some(value.to_string()),
            "phi" => out.phi = Some(parse_value(key, value)?),
            "delta" => out.delta = Some(parse_value(key, value)?),
            "policy" => out.policy = Some(value.to_string()),
            "replications" => out.replications = Some(parse_value(key, value)?),
            "base_seed" => out.base_seed = Some(parse_value(key, value)?),
            "output" => out.output = Some(PathBuf::from(value)),
            "timing" => out.timing = Some(parse_value(key, value)?),
            "efron_bias" => out.efron_bias = Some(parse_value(key, value)?),
            "smith_rho" => out.smith_rho = Some(parse_value(key, value)?),
            "assignments_from" => out.assignments_from = Some(PathBuf::from(value)),
            other => {
                return Err(config_err(format!(
                    "{}:{}: unknown config key `{other}`",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    Ok(out)
}

/// Parses a comma-separated probability vector.
fn parse_probs(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|e| config_err(format!("probability vector entry `{f}`: {e}")))
        })
        .collect()
}

/// Resolves file + flag settings into a validated config.
pub fn resolve(file: Option<Overrides>, flags: Overrides) -> Result<ExperimentConfig, CliError> {
    let merged = match file {
        Some(f) => f.layered_under(flags),
        None => flags,
    };

    let design: DesignChoice = merged
        .design
        .as_deref()
        .unwrap_or("bwd")
        .parse()
        .map_err(config_err)?;
    let dgp: DgpKind = merged
        .dgp
        .as_deref()
        .unwrap_or("linear")
        .parse()
        .map_err(|e: bwd::dgp::DgpError| config_err(e.to_string()))?;
    let policy: OverflowPolicy = merged
        .policy
        .as_deref()
        .unwrap_or("restart")
        .parse()
        .map_err(|e: bwd::DesignError| config_err(e.to_string()))?;
    let n = merged.n.unwrap_or(1000);
    let replications = merged.replications.unwrap_or(100);
    if replications < 1 {
        return Err(config_err("replications must be at least 1"));
    }
    let phi = merged.phi.unwrap_or(0.5);
    let delta = merged.delta.unwrap_or(0.05);
    let base_seed = merged.base_seed.unwrap_or(42);

    // Arm probabilities: `q` names the two-arm treatment share, `p` the full
    // vector. They are alternative spellings, not combinable.
    if merged.q.is_some() && merged.p.is_some() {
        return Err(config_err("give either `q` (two arms) or `p` (k arms), not both"));
    }
    let (k, probs) = if let Some(ptext) = &merged.p {
        let probs = parse_probs(ptext)?;
        if let Some(k) = merged.k {
            if k != probs.len() {
                return Err(config_err(format!(
                    "k = {k} does not match the {}-entry probability vector",
                    probs.len()
                )));
            }
        }
        (probs.len(), probs)
    } else {
        let k = merged.k.unwrap_or(2);
        if k == 2 {
            let q = merged.q.unwrap_or(0.5);
            (2, vec![1.0 - q, q])
        } else {
            if merged.q.is_some() {
                return Err(config_err("`q` is two-arm shorthand; use `p` when k > 2"));
            }
            (k, vec![1.0 / k as f64; k])
        }
    };
    if k < 2 {
        return Err(config_err("need at least two arms"));
    }

    let config = ExperimentConfig {
        design,
        dgp,
        n,
        k,
        probs,
        phi,
        delta,
        policy,
        replications,
        base_seed,
        output: merged.output,
        timing: merged.timing.unwrap_or(false),
        efron_bias: merged.efron_bias,
        smith_rho: merged.smith_rho,
        assignments_from: merged.assignments_from,
    };
    validate(&config)?;
    Ok(config)
}

/// Dry-constructs the configured design so every embedded parameter
/// invariant is checked before any replication work starts.
fn validate(config: &ExperimentConfig) -> Result<(), CliError> {
    let d = config.d();
    match config.design {
        DesignChoice::Bwd => {
            if config.k == 2 {
                DesignParams::new(config.n, d, config.q(), config.phi, config.delta, config.policy)
                    .map_err(|e| config_err(e.to_string()))?;
            } else {
                TreeDesign::build(
                    &config.probs,
                    config.n,
                    d,
                    config.phi,
                    config.delta,
                    config.policy,
                    0,
                )
                .map_err(|e| config_err(e.to_string()))?;
            }
        }
        DesignChoice::External => {
            if config.assignments_from.is_none() {
                return Err(config_err(
                    "design `external` needs `assignments_from` (or --assignments-from)",
                ));
            }
            let sum: f64 = config.probs.iter().sum();
            if config.probs.iter().any(|&v| !(v > 0.0 && v < 1.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(config_err("probabilities must lie in (0,1) and sum to 1"));
            }
        }
        _ => {
            let kind = config.design.baseline_kind().expect("covered above");
            let mut state =
                BaselineState::new(kind, &config.probs, config.n, d, config.delta, 0)
                    .map_err(|e| config_err(e.to_string()))?;
            if let Some(bias) = config.efron_bias {
                state = state.with_efron_bias(bias).map_err(|e| config_err(e.to_string()))?;
            }
            if let Some(rho) = config.smith_rho {
                let _ = state.with_smith_rho(rho).map_err(|e| config_err(e.to_string()))?;
            }
        }
    }
    if config.assignments_from.is_some() && config.design != DesignChoice::External {
        return Err(config_err("`assignments_from` only applies to design `external`"));
    }
    Ok(())
}
