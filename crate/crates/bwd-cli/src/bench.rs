//! The `bench` subcommand: wall-clock scaling of assignment throughput.
//!
//! For each stream length the harness makes two passes over pre-generated
//! covariates (generation is untimed): one uninstrumented pass for total
//! wall time, and one instrumented pass recording per-step latency. Chunk
//! medians of the latency series are regressed on stream position, so a
//! per-step cost that grows with the number of processed units shows up as
//! a positive slope.

use crate::CliError;
use bwd::baselines::{BaselineKind, BaselineState};
use bwd::rng::{child_seed, RngStream};
use bwd::walk::WalkState;
use bwd::{DesignParams, OverflowPolicy};
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

pub const BENCH_HEADER: &str =
    "design,n,d,total_ns,mean_step_ns,p50_step_ns,p90_step_ns,p99_step_ns,slope_ns_per_step,slope_drift_ns";

/// Designs worth timing: the walk and the no-op randomizer it competes with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchDesign {
    Bwd,
    Bernoulli,
}

impl BenchDesign {
    pub fn as_str(&self) -> &'static str {
        match self {
            BenchDesign::Bwd => "bwd",
            BenchDesign::Bernoulli => "bernoulli",
        }
    }
}

impl FromStr for BenchDesign {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bwd" => Ok(BenchDesign::Bwd),
            "bernoulli" => Ok(BenchDesign::Bernoulli),
            other => Err(format!("unknown bench design `{other}` (bwd | bernoulli)")),
        }
    }
}

/// One benchmarked stream length.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub design: BenchDesign,
    pub n: usize,
    pub d: usize,
    pub total_ns: u64,
    pub mean_step_ns: f64,
    pub p50_step_ns: f64,
    pub p90_step_ns: f64,
    pub p99_step_ns: f64,
    /// Least-squares slope of chunk-median latency versus stream position.
    pub slope_ns_per_step: f64,
    /// Slope extrapolated over the whole stream; near zero for flat latency.
    pub slope_drift_ns: f64,
}

impl BenchRow {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.design.as_str(),
            self.n,
            self.d,
            self.total_ns,
            self.mean_step_ns,
            self.p50_step_ns,
            self.p90_step_ns,
            self.p99_step_ns,
            self.slope_ns_per_step,
            self.slope_drift_ns
        )
    }
}

enum BenchState {
    Walk { state: WalkState, params: DesignParams },
    Bernoulli(BaselineState),
}

impl BenchState {
    fn build(design: BenchDesign, n: usize, d: usize, q: f64, phi: f64, seed: u64) -> Result<Self, CliError> {
        match design {
            BenchDesign::Bwd => {
                let params = DesignParams::new(n, d, q, phi, 0.05, OverflowPolicy::Restart)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                Ok(BenchState::Walk { state: WalkState::new(d, seed), params })
            }
            BenchDesign::Bernoulli => {
                let state = BaselineState::new(
                    BaselineKind::Bernoulli,
                    &[1.0 - q, q],
                    n,
                    d,
                    0.05,
                    seed,
                )
                .map_err(|e| CliError::Config(e.to_string()))?;
                Ok(BenchState::Bernoulli(state))
            }
        }
    }

    #[inline]
    fn step(&mut self, x: &[f64]) -> Result<(), CliError> {
        match self {
            BenchState::Walk { state, params } => {
                state.assign(x, params).map_err(|e| CliError::Runtime(e.to_string()))?;
            }
            BenchState::Bernoulli(state) => {
                state.assign(x).map_err(|e| CliError::Runtime(e.to_string()))?;
            }
        }
        Ok(())
    }
}

/// Synthetic unit-ball covariates: d coordinates uniform in [-1,1]/sqrt(d).
fn synthetic_rows(n: usize, d: usize, seed: u64) -> Vec<f64> {
    let mut rng = RngStream::new(seed);
    let scale = 1.0 / (d as f64).sqrt();
    (0..n * d).map(|_| (2.0 * rng.next_f64() - 1.0) * scale).collect()
}

fn sorted_percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = (p * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank]
}

fn ols_slope(points: &[(f64, f64)]) -> f64 {
    let m = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / m;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in points {
        num += (x - mean_x) * (y - mean_y);
        den += (x - mean_x) * (x - mean_x);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Benchmarks one design at each stream length.
pub fn run_bench(
    design: BenchDesign,
    n_values: &[usize],
    d: usize,
    q: f64,
    phi: f64,
    seed: u64,
) -> Result<Vec<BenchRow>, CliError> {
    if n_values.is_empty() {
        return Err(CliError::Config("bench needs at least one stream length".into()));
    }
    let mut rows = Vec::with_capacity(n_values.len());
    for (idx, &n) in n_values.iter().enumerate() {
        if n == 0 {
            return Err(CliError::Config("bench stream lengths must be positive".into()));
        }
        let run_seed = child_seed(seed, idx as u64);
        let x = synthetic_rows(n, d, child_seed(run_seed, 0));
        let design_seed = child_seed(run_seed, 1);

        // Warm-up over a prefix with a throwaway instance: pages, caches,
        // and branch predictors settle before anything is measured.
        let warm = n.min(10_000);
        let mut state = BenchState::build(design, n, d, q, phi, design_seed)?;
        for i in 0..warm {
            state.step(&x[i * d..(i + 1) * d])?;
        }

        // Pass 1: uninstrumented total.
        let mut state = BenchState::build(design, n, d, q, phi, design_seed)?;
        let started = Instant::now();
        for i in 0..n {
            state.step(&x[i * d..(i + 1) * d])?;
        }
        let total_ns = started.elapsed().as_nanos() as u64;

        // Pass 2: per-step latencies on a fresh instance with the same seed,
        // so both passes take identical decision paths.
        let mut state = BenchState::build(design, n, d, q, phi, design_seed)?;
        let mut latencies = Vec::with_capacity(n);
        for i in 0..n {
            let t = Instant::now();
            state.step(&x[i * d..(i + 1) * d])?;
            latencies.push(t.elapsed().as_nanos() as f64);
        }

        let chunks = n.min(100);
        let chunk_len = n / chunks;
        let points: Vec<(f64, f64)> = (0..chunks)
            .map(|c| {
                let mut v = latencies[c * chunk_len..(c + 1) * chunk_len].to_vec();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let center = (c * chunk_len + chunk_len / 2) as f64;
                (center, sorted_percentile(&v, 0.5))
            })
            .collect();
        let slope = ols_slope(&points);

        let mean = latencies.iter().sum::<f64>() / n as f64;
        latencies.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows.push(BenchRow {
            design,
            n,
            d,
            total_ns,
            mean_step_ns: mean,
            p50_step_ns: sorted_percentile(&latencies, 0.50),
            p90_step_ns: sorted_percentile(&latencies, 0.90),
            p99_step_ns: sorted_percentile(&latencies, 0.99),
            slope_ns_per_step: slope,
            slope_drift_ns: slope * n as f64,
        });
    }
    Ok(rows)
}

/// Renders bench rows as CSV.
pub fn render_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_HEADER);
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.to_csv_row());
    }
    out
}
