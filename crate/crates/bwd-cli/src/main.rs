//! `bwd`: simulation harness and streaming assigner for the balancing walk
//! design. Exit codes: 0 success (including --help/--version), 1 usage or
//! configuration errors, 2 runtime failures.

use bwd_cli::config::{self, Overrides};
use bwd_cli::stream::AssignOptions;
use bwd_cli::{bench, runner, stream, CliError};
use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "bwd", version, about = "Streaming covariate-balancing treatment assignment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a replicated experiment and emit one CSV row per replication.
    Simulate(SimulateArgs),
    /// Assign streamed covariate rows, optionally resuming a saved state.
    Assign(AssignArgs),
    /// Measure assignment throughput and per-step latency.
    Bench(BenchArgs),
    /// Dump one generated sample (covariates and potential outcomes).
    DgpDump(DgpDumpArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Flat `key = value` config file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// bwd | bernoulli | complete | efron | smith | alweiss | external
    #[arg(long)]
    design: Option<String>,
    /// quickblock | linear | lineardrift | linearseason | quadratic | cubic | sinusoidal
    #[arg(long)]
    dgp: Option<String>,
    /// Units per replication.
    #[arg(long)]
    n: Option<usize>,
    /// Number of arms (2 unless a probability vector says otherwise).
    #[arg(long)]
    k: Option<usize>,
    /// Two-arm treatment probability.
    #[arg(long)]
    q: Option<f64>,
    /// Comma-separated arm probabilities (k arms).
    #[arg(long)]
    p: Option<String>,
    /// Robustness weight in [0, 1).
    #[arg(long)]
    phi: Option<f64>,
    /// Failure budget in (0, 1).
    #[arg(long)]
    delta: Option<f64>,
    /// strict | random-fallback | restart
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Record wall-clock time per replication (breaks byte determinism).
    #[arg(long)]
    timing: bool,
    /// Efron bias parameter in (0, 1).
    #[arg(long)]
    efron_bias: Option<f64>,
    /// Smith exponent (>= 0).
    #[arg(long)]
    smith_rho: Option<f64>,
    /// Score externally generated assignments (design `external`):
    /// one comma-separated line of n arm indices per replication.
    #[arg(long)]
    assignments_from: Option<PathBuf>,
    /// Worker threads for replications (1 = sequential; output is
    /// identical either way).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct AssignArgs {
    /// Covariate rows, one comma-separated row per line (default: stdin).
    #[arg(long)]
    input: Option<PathBuf>,
    /// State file: loaded if it exists, saved on clean end of input.
    #[arg(long)]
    state: Option<PathBuf>,
    /// Stream horizon.
    #[arg(long)]
    n: Option<usize>,
    /// Covariate dimension (required when starting a new stream).
    #[arg(long)]
    d: Option<usize>,
    /// Number of arms.
    #[arg(long)]
    k: Option<usize>,
    /// Two-arm treatment probability.
    #[arg(long)]
    q: Option<f64>,
    /// Comma-separated arm probabilities (k arms).
    #[arg(long)]
    p: Option<String>,
    /// Robustness weight in [0, 1).
    #[arg(long)]
    phi: Option<f64>,
    /// Failure budget in (0, 1).
    #[arg(long)]
    delta: Option<f64>,
    /// strict | random-fallback | restart
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write assignments here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// bwd | bernoulli
    #[arg(long, default_value = "bwd")]
    design: String,
    /// Comma-separated stream lengths.
    #[arg(long, default_value = "10000,100000")]
    n: String,
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    #[arg(long, default_value_t = 0.5)]
    phi: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DgpDumpArgs {
    /// quickblock | linear | lineardrift | linearseason | quadratic | cubic | sinusoidal
    #[arg(long, default_value = "linear")]
    dgp: String,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Number of arms (columns y_0..y_{k-1}).
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Writes to the file when given, stdout otherwise.
fn emit(output: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match output {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| CliError::io("cannot write output", path, e))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(text.as_bytes())
                .and_then(|()| lock.flush())
                .map_err(|e| CliError::Runtime(format!("cannot write to stdout: {e}")))
        }
    }
}

fn run_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let file = args.config.as_deref().map(config::parse_config_file).transpose()?;
    let flags = Overrides {
        design: args.design,
        dgp: args.dgp,
        n: args.n,
        k: args.k,
        q: args.q,
        p: args.p,
        phi: args.phi,
        delta: args.delta,
        policy: args.policy,
        replications: args.replications,
        base_seed: args.base_seed,
        output: args.output,
        timing: args.timing.then_some(true),
        efron_bias: args.efron_bias,
        smith_rho: args.smith_rho,
        assignments_from: args.assignments_from,
    };
    let config = config::resolve(file, flags)?;
    let result = runner::run_experiment(&config, args.jobs)?;
    emit(config.output.as_ref(), &result.csv)
}

fn run_assign(args: AssignArgs) -> Result<(), CliError> {
    let opts = AssignOptions {
        input: args.input,
        state: args.state,
        n: args.n,
        d: args.d,
        k: args.k,
        q: args.q,
        p: args.p,
        phi: args.phi,
        delta: args.delta,
        policy: args.policy,
        seed: args.seed,
    };
    match &args.output {
        Some(path) => {
            let mut buf = Vec::new();
            stream::run_assign(&opts, &mut buf)?;
            std::fs::write(path, &buf).map_err(|e| CliError::io("cannot write output", path, e))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            stream::run_assign(&opts, &mut lock)
        }
    }
}

fn run_bench(args: BenchArgs) -> Result<(), CliError> {
    let design: bench::BenchDesign = args.design.parse().map_err(CliError::Config)?;
    let n_values: Vec<usize> = args
        .n
        .split(',')
        .map(|f| {
            f.trim()
                .parse::<usize>()
                .map_err(|e| CliError::Config(format!("bench length `{f}`: {e}")))
        })
        .collect::<Result<_, _>>()?;
    let rows = bench::run_bench(design, &n_values, args.d, args.q, args.phi, args.seed)?;
    emit(args.output.as_ref(), &bench::render_csv(&rows))
}

fn run_dgp_dump(args: DgpDumpArgs) -> Result<(), CliError> {
    let kind: bwd::dgp::DgpKind =
        args.dgp.parse().map_err(|e: bwd::dgp::DgpError| CliError::Config(e.to_string()))?;
    if args.n < 1 {
        return Err(CliError::Config("need at least one unit".into()));
    }
    if args.k < 2 {
        return Err(CliError::Config("need at least two arms".into()));
    }
    emit(args.output.as_ref(), &runner::dgp_dump(kind, args.n, args.seed, args.k))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => run_simulate(args),
        Command::Assign(args) => run_assign(args),
        Command::Bench(args) => run_bench(args),
        Command::DgpDump(args) => run_dgp_dump(args),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits 2 on usage errors by default; this tool reserves 2
            // for runtime failures and reports usage problems as 1.
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
