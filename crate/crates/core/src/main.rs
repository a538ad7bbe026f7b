//! Command-line front end: `run`, `validate` and `bench` subcommands.
//!
//! Exit codes: 0 on success, 1 on configuration/usage errors, 2 on runtime
//! failures (solver breakdown, I/O).

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use irsbeam::sim::{
    emit_results, run_bench, run_scenario, BenchConfig, OutputFormat, Scenario, ScenarioError,
};

#[derive(Parser)]
#[command(
    name = "irsbeam",
    about = "Monte Carlo evaluation of robust IRS-aided MISO beamforming designs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario sweep and write CSV or JSON results.
    Run(RunArgs),
    /// Check a scenario file against all invariants.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Time BSUM sweeps over a dimension grid and emit JSON.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// csv or json.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Overrides the scenario's master seed (MASTER_SEED env applies when
    /// neither is given).
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the scenario's trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let code = cli_main(std::env::args_os());
    ExitCode::from(code)
}

/// Parses argv and dispatches; returns the process exit code.
fn cli_main<I>(argv: I) -> u8
where
    I: IntoIterator<Item = OsString>,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own usage/help text; anything that is a real
            // usage problem exits 1, --help/--version exit 0.
            if e.use_stderr() {
                eprint!("{e}");
                return 1;
            }
            print!("{e}");
            return 0;
        }
    };
    match cli.command {
        Command::Run(args) => match cmd_run(args) {
            Ok(()) => 0,
            Err(e) => exit_code_for(&e),
        },
        Command::Validate { scenario } => match cmd_validate(&scenario) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("invalid: {e}");
                1
            }
        },
        Command::Bench { config, out } => match cmd_bench(&config, out.as_deref()) {
            Ok(()) => 0,
            Err(e) => exit_code_for(&e),
        },
    }
}

fn exit_code_for(err: &ScenarioError) -> u8 {
    eprintln!("error: {err}");
    match err {
        ScenarioError::Config(_) | ScenarioError::Invalid(_) | ScenarioError::Parse { .. } => 1,
        ScenarioError::Io { .. } | ScenarioError::TooManyFailures { .. } => 2,
    }
}

fn cmd_run(args: RunArgs) -> Result<(), ScenarioError> {
    let format: OutputFormat = args.format.parse().map_err(ScenarioError::Invalid)?;
    let mut scenario = Scenario::from_json_file(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.master_seed = seed;
    } else if let Ok(env_seed) = std::env::var("MASTER_SEED") {
        let parsed = env_seed.parse::<u64>().map_err(|_| {
            ScenarioError::Invalid(format!(
                "MASTER_SEED must be a decimal integer, got {env_seed:?}"
            ))
        })?;
        scenario.master_seed = parsed;
    }
    if let Some(trials) = args.trials {
        scenario.trials = trials;
    }
    scenario.validate()?;

    let result = match args.threads {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            pool.install(|| run_scenario(&scenario))?
        }
        _ => run_scenario(&scenario)?,
    };

    emit_results(&result, format, &args.out)?;

    // Console summary: one line per (value, scheme).
    for point in &result.points {
        for sr in &point.schemes {
            println!(
                "{}={} {:<11} mean {:.4} bits/s/Hz (±{:.4}, {} trials, {} failed)",
                result.sweep_param.as_str(),
                point.sweep_value,
                sr.scheme.as_str(),
                sr.mean_sum_rate,
                sr.ci95_half_width,
                sr.trials.len(),
                sr.failed_trials.len(),
            );
        }
    }
    Ok(())
}

fn cmd_validate(path: &std::path::Path) -> Result<(), ScenarioError> {
    let scenario = Scenario::from_json_file(path)?;
    scenario.validate()?;
    println!("ok: scenario is valid");
    Ok(())
}

fn cmd_bench(path: &std::path::Path, out: Option<&std::path::Path>) -> Result<(), ScenarioError> {
    let config = BenchConfig::from_json_file(path)?;
    let report = run_bench(&config)?;
    let mut payload = serde_json::to_string_pretty(&report).expect("report serializes");
    payload.push('\n');
    match out {
        Some(p) => std::fs::write(p, payload).map_err(|source| ScenarioError::Io {
            path: p.to_path_buf(),
            source,
        })?,
        None => print!("{payload}"),
    }
    Ok(())
}
