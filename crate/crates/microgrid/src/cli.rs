//! Command-line interface.
//!
//! Exit codes: 0 success; 1 configuration, scenario, or artifact errors;
//! 2 dispatch infeasibility (priority shortfall or unabsorbable PV
//! surplus); 3 schedule validation violations.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::domain::{load_config, MicrogridConfig};
use crate::pipeline::{
    risk_console_summary, run_risk, schedule_console_summary, solve_all, validate_artifacts,
    write_schedule_artifacts, PipelineError,
};
use crate::scenario_io::{
    generate_scenarios, read_base_profiles, read_scenarios, write_scenarios, GeneratorSpec,
    ScenarioSet, DEFAULT_SCENARIO_COUNT,
};
use crate::scheduler::SolveOptions;

const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(
    name = "microgrid",
    version,
    about = "Day-ahead dispatch optimization and curtailment risk analysis for an islanded residential microgrid"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every scenario's day-ahead dispatch and write schedule CSVs
    Schedule(ScheduleArgs),
    /// Build the loss matrix from schedule artifacts and write risk CSVs
    Risk(RiskArgs),
    /// Check schedule artifacts against every dispatch constraint
    Validate(ValidateArgs),
    /// Write a synthetic scenario CSV
    Generate(GenerateArgs),
}

#[derive(Args)]
struct SourceArgs {
    /// Config file (key = value lines); built-in defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario CSV to load instead of generating
    #[arg(long, conflicts_with_all = ["seed", "count"])]
    scenarios: Option<PathBuf>,
    /// Generator seed (used when --scenarios is absent; default 42)
    #[arg(long)]
    seed: Option<u64>,
    /// Number of scenarios to generate (default 187)
    #[arg(long)]
    count: Option<usize>,
    /// Base demand/PV profile CSV for the generator
    #[arg(long, default_value = "data/base_profiles.csv")]
    profiles: PathBuf,
}

#[derive(Args)]
struct ScheduleArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Output directory for schedule_<id>.csv and summary.csv
    #[arg(long)]
    out: PathBuf,
    /// Relative optimality gap for the branch-and-bound search
    #[arg(long, default_value_t = 1e-4)]
    gap: f64,
    /// Per-scenario time limit in seconds
    #[arg(long = "time-limit", default_value_t = 60.0)]
    time_limit: f64,
    /// Worker thread count (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct RiskArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Directory holding schedule artifacts; risk CSVs are written there
    #[arg(long)]
    out: PathBuf,
    /// Tail fraction for VaR/cVaR (0.05 = worst 5%)
    #[arg(long, default_value_t = 0.05)]
    tail: f64,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Directory holding schedule artifacts
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Scenario CSV to write
    #[arg(long)]
    out: PathBuf,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = if e.is_infeasibility() { 2 } else { 1 };
        let mut message = e.to_string();
        if let PipelineError::Scenarios { failures } = &e {
            for (id, err) in failures {
                message.push_str(&format!("\n  scenario {id}: {err}"));
            }
        }
        Failure::new(code, message)
    }
}

fn load_cfg(source: &SourceArgs) -> Result<MicrogridConfig, Failure> {
    match &source.config {
        Some(path) => load_config(path).map_err(|e| Failure::new(1, e.to_string())),
        None => Ok(MicrogridConfig::default()),
    }
}

fn load_set(config: &MicrogridConfig, source: &SourceArgs) -> Result<ScenarioSet, Failure> {
    if let Some(path) = &source.scenarios {
        return read_scenarios(path, &config.time).map_err(|e| Failure::new(1, e.to_string()));
    }
    let (demand, pv) = read_base_profiles(&source.profiles, &config.time)
        .map_err(|e| Failure::new(1, e.to_string()))?;
    let mut spec = GeneratorSpec::new(source.seed.unwrap_or(DEFAULT_SEED), demand, pv);
    spec.scenario_count = source.count.unwrap_or(DEFAULT_SCENARIO_COUNT);
    generate_scenarios(&spec, &config.time).map_err(|e| Failure::new(1, e.to_string()))
}

fn cmd_schedule(args: &ScheduleArgs) -> Result<(), Failure> {
    let config = load_cfg(&args.source)?;
    config
        .time
        .require_full_day()
        .map_err(|e| Failure::new(1, e.to_string()))?;
    if !(args.gap >= 0.0) {
        return Err(Failure::new(1, "--gap must be nonnegative"));
    }
    let set = load_set(&config, &args.source)?;
    let options = SolveOptions {
        optimality_gap: args.gap,
        time_limit_secs: args.time_limit,
        ..SolveOptions::default()
    };
    let results = solve_all(&config, &set, &options, args.jobs)?;
    write_schedule_artifacts(&results, &args.out).map_err(PipelineError::from)?;
    println!("{}", schedule_console_summary(&results));
    println!("artifacts written to {}", args.out.display());
    Ok(())
}

fn cmd_risk(args: &RiskArgs) -> Result<(), Failure> {
    if !(args.tail > 0.0 && args.tail < 1.0) {
        return Err(Failure::new(1, "--tail must lie strictly between 0 and 1"));
    }
    let config = load_cfg(&args.source)?;
    let set = load_set(&config, &args.source)?;
    let report = run_risk(&config, &set, &args.out, args.tail)?;
    println!("{}", risk_console_summary(&report, set.scenarios.len()));
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), Failure> {
    let config = load_cfg(&args.source)?;
    let set = load_set(&config, &args.source)?;
    let outcomes = validate_artifacts(&config, &set, &args.out)?;
    if outcomes.is_empty() {
        println!("all schedules valid");
        return Ok(());
    }
    let mut message = String::new();
    for (file, violations) in &outcomes {
        for v in violations {
            message.push_str(&format!("{file}: {v}\n"));
        }
    }
    message.push_str(&format!("{} schedule(s) failed validation", outcomes.len()));
    Err(Failure::new(3, message))
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), Failure> {
    let config = load_cfg(&args.source)?;
    let set = load_set(&config, &args.source)?;
    write_scenarios(&set, &args.out).map_err(|e| Failure::new(1, e.to_string()))?;
    println!(
        "wrote {} scenarios to {}",
        set.scenarios.len(),
        args.out.display()
    );
    Ok(())
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Schedule(args) => cmd_schedule(args),
        Command::Risk(args) => cmd_risk(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Generate(args) => cmd_generate(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", f.message);
            f.code
        }
    }
}
