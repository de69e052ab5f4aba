//! The replication loop behind `simulate`: seed derivation, per-replication
//! assignment and scoring, optional parallelism, and CSV rendering.
//!
//! Determinism contract: every replication draws from seeds derived only
//! from `base_seed` and the replication index, so output bytes are identical
//! across reruns and across `--jobs` settings (timing off).

use crate::config::{DesignChoice, ExperimentConfig};
use crate::driver::DesignDriver;
use crate::CliError;
use bwd::dgp::{arrival_order, generate};
use bwd::estimators::{
    aggregate, dim_estimate, dim_estimate_contrasts, entropy_normalized, imbalance,
    ReplicationRecord, Summary,
};
use bwd::rng::child_seed;
use bwd::tree::multi_discrepancy_norms;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

pub const CSV_HEADER: &str = "rep,design,dgp,n,d,k,q,phi,policy,tau_hat,tau_true,imbalance_l2,imbalance_linf,multi_disc,entropy,overflows,runtime_ns";

/// Everything `simulate` produces: the CSV text plus the structured results
/// for callers that want numbers instead of bytes.
pub struct SimulationOutput {
    pub csv: String,
    pub records: Vec<ReplicationRecord>,
    pub summary: Summary,
}

fn metrics_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Externally supplied assignments: one line per replication, each a
/// comma-separated list of n arm indices.
fn load_external(path: &Path, config: &ExperimentConfig) -> Result<Vec<Vec<usize>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io("cannot read assignments file", path, e))?;
    let rows: Vec<Vec<usize>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .enumerate()
        .map(|(lineno, line)| {
            line.split(',')
                .map(|f| {
                    f.trim().parse::<usize>().map_err(|e| {
                        CliError::Runtime(format!(
                            "assignments {}:{}: `{f}`: {e}",
                            path.display(),
                            lineno + 1
                        ))
                    })
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    if rows.len() != config.replications {
        return Err(CliError::Runtime(format!(
            "assignments {}: {} rows for {} replications",
            path.display(),
            rows.len(),
            config.replications
        )));
    }
    for (r, row) in rows.iter().enumerate() {
        if row.len() != config.n {
            return Err(CliError::Runtime(format!(
                "assignments {}: replication {r} has {} entries, n = {}",
                path.display(),
                row.len(),
                config.n
            )));
        }
        if let Some(&g) = row.iter().find(|&&g| g >= config.k) {
            return Err(CliError::Runtime(format!(
                "assignments {}: replication {r} assigns arm {g}, k = {}",
                path.display(),
                config.k
            )));
        }
    }
    Ok(rows)
}

/// Runs one replication end to end and scores it.
fn replicate(
    config: &ExperimentConfig,
    rep: usize,
    external: Option<&[usize]>,
) -> Result<ReplicationRecord, CliError> {
    let rep_seed = child_seed(config.base_seed, rep as u64);
    let dgp_seed = child_seed(rep_seed, 0);
    let design_seed = child_seed(rep_seed, 1);
    let sample = generate(config.dgp, config.n, dgp_seed, config.k);

    let mut groups = Vec::with_capacity(config.n);
    let mut overflow_count = 0u64;
    let mut runtime_ns = 0u64;
    match external {
        Some(row) => groups.extend_from_slice(row),
        None => {
            let mut driver = DesignDriver::build(config, design_seed)?;
            let timer = config.timing.then(Instant::now);
            for i in arrival_order(config.n) {
                let out = driver.step(sample.covariates(i))?;
                overflow_count += u64::from(out.was_overflow);
                groups.push(out.group);
            }
            if let Some(t) = timer {
                runtime_ns = t.elapsed().as_nanos() as u64;
            }
        }
    }

    let y_obs: Vec<f64> = groups.iter().enumerate().map(|(i, &g)| sample.outcome(i, g)).collect();
    let mut counts = vec![0u64; config.k];
    for &g in &groups {
        counts[g] += 1;
    }

    // Per-arm covariate sums feed the pairwise discrepancy; for two arms the
    // signed imbalance uses the centered labels eta = z - (2q - 1).
    let d = config.d();
    let mut sums = vec![vec![0.0; d]; config.k];
    for (i, &g) in groups.iter().enumerate() {
        for (s, &v) in sums[g].iter_mut().zip(sample.covariates(i)) {
            *s += v;
        }
    }
    let (disc_l2, disc_linf) =
        multi_discrepancy_norms(&sums, &config.probs).map_err(metrics_err)?;

    let (tau_hat, imbalance_l2, imbalance_linf) = if config.k == 2 {
        let q = config.q();
        let z: Vec<i8> = groups.iter().map(|&g| if g == 1 { 1 } else { -1 }).collect();
        let tau = dim_estimate(&z, &y_obs, q).map_err(metrics_err)?;
        let eta: Vec<f64> = z.iter().map(|&zi| zi as f64 - (2.0 * q - 1.0)).collect();
        let mut x_flat = Vec::with_capacity(config.n * d);
        for i in 0..config.n {
            x_flat.extend_from_slice(sample.covariates(i));
        }
        let (l2, linf) = imbalance(&eta, &x_flat, d).map_err(metrics_err)?;
        (vec![tau], l2, linf)
    } else {
        let tau = dim_estimate_contrasts(&groups, &y_obs, &config.probs).map_err(metrics_err)?;
        (tau, disc_l2, disc_linf)
    };

    Ok(ReplicationRecord {
        tau_hat,
        tau_true: sample.tau_true.clone(),
        imbalance_l2,
        imbalance_linf,
        multi_discrepancy: disc_linf,
        group_counts: counts,
        overflow_count,
        runtime_ns,
    })
}

fn join_semicolon(values: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(';');
        }
        let _ = write!(out, "{v}");
    }
    out
}

fn shared_columns(config: &ExperimentConfig) -> String {
    // phi and policy only describe the walk designs; the cells stay empty
    // for baselines and external scoring.
    let (phi, policy) = match config.design {
        DesignChoice::Bwd => (format!("{}", config.phi), config.policy.as_str().to_string()),
        _ => (String::new(), String::new()),
    };
    format!(
        "{},{},{},{},{},{},{},{}",
        config.design.as_str(),
        config.dgp.as_str(),
        config.n,
        config.d(),
        config.k,
        config.q(),
        phi,
        policy
    )
}

/// Runs the experiment and renders the CSV: one row per replication plus a
/// trailing `summary` row reusing the metric columns for aggregates
/// (tau_hat = bias, tau_true = MSE, imbalance and discrepancy = medians,
/// entropy = mean, overflows = replications with any overflow,
/// runtime_ns = mean).
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<SimulationOutput, CliError> {
    let external = match config.design {
        DesignChoice::External => {
            let path = config
                .assignments_from
                .as_ref()
                .ok_or_else(|| CliError::Config("design `external` needs an assignments file".into()))?;
            Some(load_external(path, config)?)
        }
        _ => None,
    };

    let run = |r: usize| replicate(config, r, external.as_ref().map(|rows| rows[r].as_slice()));
    let records: Vec<ReplicationRecord> = if jobs <= 1 {
        (0..config.replications).map(run).collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Runtime(format!("cannot build thread pool: {e}")))?;
        pool.install(|| {
            (0..config.replications)
                .into_par_iter()
                .map(run)
                .collect::<Result<Vec<_>, _>>()
        })?
    };

    let summary = aggregate(&records).map_err(metrics_err)?;
    let shared = shared_columns(config);
    let mut csv = String::new();
    csv.push_str(CSV_HEADER);
    csv.push('\n');
    for (r, rec) in records.iter().enumerate() {
        let entropy = entropy_normalized(&rec.group_counts).map_err(metrics_err)?;
        let _ = writeln!(
            csv,
            "{r},{shared},{},{},{},{},{},{},{},{}",
            join_semicolon(&rec.tau_hat),
            join_semicolon(&rec.tau_true),
            rec.imbalance_l2,
            rec.imbalance_linf,
            rec.multi_discrepancy,
            entropy,
            rec.overflow_count,
            rec.runtime_ns
        );
    }
    let overflow_reps = records.iter().filter(|rec| rec.overflow_count > 0).count();
    let _ = writeln!(
        csv,
        "summary,{shared},{},{},{},{},{},{},{},{}",
        summary.bias,
        summary.mse,
        summary.median_imbalance_l2,
        summary.median_imbalance_linf,
        summary.median_multi_discrepancy,
        summary.mean_entropy,
        overflow_reps,
        summary.runtime_mean_ns
    );

    Ok(SimulationOutput { csv, records, summary })
}

/// Renders one generated sample as CSV: covariates then all potential
/// outcomes per unit (`index,x_1..x_d,y_0..y_{k-1}`).
pub fn dgp_dump(kind: bwd::dgp::DgpKind, n: usize, seed: u64, arms: usize) -> String {
    let sample = generate(kind, n, seed, arms);
    let d = kind.dimension();
    let mut csv = String::from("index");
    for j in 1..=d {
        let _ = write!(csv, ",x_{j}");
    }
    for a in 0..arms {
        let _ = write!(csv, ",y_{a}");
    }
    csv.push('\n');
    for i in 0..n {
        let _ = write!(csv, "{i}");
        for v in sample.covariates(i) {
            let _ = write!(csv, ",{v}");
        }
        for a in 0..arms {
            let _ = write!(csv, ",{}", sample.outcome(i, a));
        }
        csv.push('\n');
    }
    csv
}
