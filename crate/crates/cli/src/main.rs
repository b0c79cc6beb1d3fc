use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use faas_sched::engine::{simulate, SimError};
use faas_sched::harness::{self, HarnessError, SweepSpec, VaryDim};
use faas_sched::metrics::{mean_latency, percentile_latency, ratio_to_f64, validate_schedule};
use faas_sched::model::{ClusterConfig, Instance, PolicyConfig};
use faas_sched::workload::{
    dagify_instance, generate_chain_instance, read_instance, write_instance, GenParams, Range, WorkloadError,
};

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;
const EXIT_VALIDATION: u8 = 5;

#[derive(Parser)]
#[command(name = "faas-sched", version, about = "FaaS scheduling simulator and experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic chain (or out-tree) instances.
    Generate(GenerateArgs),
    /// Turn a chain instance into an out-tree instance.
    Dagify(DagifyArgs),
    /// Schedule one instance under one policy.
    Simulate(SimulateArgs),
    /// Run a grid of instances, clusters and policies into an aggregate CSV.
    Sweep(SweepArgs),
    /// Normalize an aggregate CSV and emit box statistics per variant.
    Report(ReportArgs),
    /// Check an instance file for structural errors.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    families: u32,
    /// Setup time range MIN:MAX.
    #[arg(long)]
    setup: Range,
    /// Chain length range MIN:MAX.
    #[arg(long)]
    chain: Range,
    #[arg(long, default_value_t = 1000)]
    tasks: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of instances; seeds run from --seed upwards.
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long)]
    dag: bool,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct DagifyArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    machines: usize,
    #[arg(long)]
    capacity: u64,
    /// "OW" or "<ordering>,<removal>,<wait|nowait>,<def|start|stbr>".
    #[arg(long)]
    policy: PolicyConfig,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the schedule as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Check the schedule and fail on any violation.
    #[arg(long)]
    validate: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    spec: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Aggregate CSV; existing rows are kept and skipped.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Aggregate CSV written by `sweep`.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    vary: VaryDim,
    /// Box-stat CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long = "in")]
    input: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl fmt::Display) -> Self {
        Failure { code, message: message.to_string() }
    }
}

impl From<WorkloadError> for Failure {
    fn from(e: WorkloadError) -> Self {
        let code = match e {
            WorkloadError::InvalidParams(_) => EXIT_USAGE,
            WorkloadError::Io { .. } | WorkloadError::Parse { .. } => EXIT_IO,
            WorkloadError::NotAChain { .. } | WorkloadError::Validation { .. } => EXIT_VALIDATION,
        };
        Failure::new(code, e)
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::InvalidInstance(_) => EXIT_VALIDATION,
            _ => EXIT_INFEASIBLE,
        };
        Failure::new(code, e)
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let code = match e {
            HarnessError::Io { .. } | HarnessError::Csv { .. } => EXIT_IO,
            HarnessError::Workload(w) => return w.into(),
            HarnessError::Reproduce { .. } => EXIT_INFEASIBLE,
            _ => EXIT_USAGE,
        };
        Failure::new(code, e)
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::new(EXIT_IO, format!("{}: {e}", path.display()))
}

fn summary(instance: &Instance) -> String {
    format!("n={} N={} n_f={}", instance.task_count(), instance.job_count(), instance.families.len())
}

fn generate(args: GenerateArgs) -> Result<(), Failure> {
    fs::create_dir_all(&args.out).map_err(|e| io_failure(&args.out, e))?;
    for seed in args.seed..args.seed + args.count {
        let mut params = GenParams::new(args.families, args.setup, args.chain, seed);
        params.tasks = args.tasks;
        let mut instance = generate_chain_instance(&params)?;
        let mut tag = params.tag("chain");
        if args.dag {
            instance = dagify_instance(&instance, harness::dag_seed(seed))?;
            tag = params.tag("dag");
        }
        let path = args.out.join(format!("{tag}.json"));
        write_instance(&instance, &path)?;
        println!("{} {}", path.display(), summary(&instance));
    }
    Ok(())
}

fn dagify(args: DagifyArgs) -> Result<(), Failure> {
    let instance = dagify_instance(&read_instance(&args.input)?, args.seed)?;
    write_instance(&instance, &args.out)?;
    println!("{} {}", args.out.display(), summary(&instance));
    Ok(())
}

fn simulate_cmd(args: SimulateArgs) -> Result<(), Failure> {
    let instance = read_instance(&args.input)?;
    let cluster = ClusterConfig::new(args.machines, args.capacity);
    let result = simulate(&instance, cluster, args.policy, args.seed)?;
    log::info!("simulated {} tasks in {:?}", result.tasks.len(), result.runtime);
    if let Some(out) = &args.out {
        fs::write(out, result.to_json() + "\n").map_err(|e| io_failure(out, e))?;
    }
    println!("mean={} p95={}", ratio_to_f64(mean_latency(&result)), percentile_latency(&result, 95));
    if args.validate {
        let violations = validate_schedule(&instance, cluster, &result);
        if !violations.is_empty() {
            for v in &violations {
                eprintln!("violation: {v}");
            }
            return Err(Failure::new(EXIT_VALIDATION, format!("{} schedule violations", violations.len())));
        }
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let spec = match (&args.spec, &args.preset) {
        (Some(path), _) => SweepSpec::from_file(path)?,
        (None, Some(name)) => SweepSpec::preset(name)?,
        (None, None) => unreachable!("clap requires --spec or --preset"),
    };
    if args.jobs == Some(0) {
        return Err(Failure::new(EXIT_USAGE, "--jobs must be >= 1"));
    }
    let outcome = harness::run_sweep(&spec, &args.out, args.jobs)?;
    eprintln!(
        "sweep: {} runs, {} executed, {} already present, {} failed",
        outcome.total,
        outcome.executed,
        outcome.skipped,
        outcome.failures.len()
    );
    if !outcome.failures.is_empty() {
        return Err(Failure::new(EXIT_INFEASIBLE, format!("{} cells failed", outcome.failures.len())));
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), Failure> {
    let rows = harness::read_rows(&args.input)?;
    let boxes = harness::report(&rows, args.vary)?;
    let written = match &args.out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| io_failure(path, e))?;
            harness::write_report(file, &boxes)
        }
        None => harness::write_report(std::io::stdout().lock(), &boxes),
    };
    written.map_err(|e| Failure::new(EXIT_IO, e))?;
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<(), Failure> {
    let instance = read_instance(&args.input)?;
    println!("ok {}", summary(&instance));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Dagify(a) => dagify(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Sweep(a) => sweep(a),
        Command::Report(a) => report(a),
        Command::Validate(a) => validate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
