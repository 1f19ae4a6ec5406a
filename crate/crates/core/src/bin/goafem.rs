use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use goafem::bench::{make_preset, reference_goal, ExampleId};
use goafem::export::write_csv_rows;
use goafem::verify::{build_reference, verify_rows, VERIFY_HEADER};
use goafem::{run, Error, ProblemSpec, RunConfig, Strategy};

#[derive(Parser)]
#[command(name = "goafem", version, about = "Goal-oriented adaptive FEM benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive loop on a benchmark preset.
    Run(RunArgs),
    /// Re-run a recorded benchmark and probe it against a fine reference.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Example {
    Ex1,
    Ex2,
}

impl From<Example> for ExampleId {
    fn from(e: Example) -> Self {
        match e {
            Example::Ex1 => ExampleId::Ex1,
            Example::Ex2 => ExampleId::Ex2,
        }
    }
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    example: Example,
    #[arg(long)]
    preset: String,
    #[arg(long, default_value_t = Strategy::Hpz)]
    strategy: Strategy,
    #[arg(long, default_value_t = 0.6)]
    theta: f64,
    #[arg(long, default_value_t = 1e-7)]
    newton_tol: f64,
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
    #[arg(long)]
    target_elements: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    snapshot_every: Option<usize>,
    /// Also write wall-clock times into record.csv (breaks byte-identical output).
    #[arg(long)]
    record_wall_time: bool,
}

#[derive(clap::Args)]
struct VerifyArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value_t = 2)]
    refine_extra: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Saved next to `record.csv` so that `verify` can reproduce the run.
#[derive(Serialize, Deserialize)]
struct SavedRun {
    example: ExampleId,
    preset: String,
    reference_goal: f64,
    config: RunConfig,
}

const SAVED_RUN: &str = "config.json";

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run_command(args),
        Command::Verify(args) => verify_command(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_) | Error::ProblemData(_) | Error::UnsupportedDegree(_) => 2,
        Error::NewtonFailure { .. } | Error::IndefiniteSystem { .. } => 3,
        Error::Io { .. } | Error::Csv { .. } => 4,
        _ => 1,
    }
}

fn run_command(args: RunArgs) -> goafem::Result<()> {
    let example = ExampleId::from(args.example);
    let spec: ProblemSpec = make_preset(example, &args.preset)?;
    let config = RunConfig {
        strategy: args.strategy,
        theta: args.theta,
        newton_tol: args.newton_tol,
        max_iterations: args.max_iters,
        target_elements: args.target_elements,
        out_dir: Some(args.out.clone()),
        snapshot_every: args.snapshot_every,
        record_wall_time: args.record_wall_time,
        keep_states: false,
        ..RunConfig::default()
    };
    config.validate()?;
    let goal = reference_goal(&spec)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let saved = SavedRun {
        example,
        preset: args.preset,
        reference_goal: goal,
        config: RunConfig {
            out_dir: None,
            ..config.clone()
        },
    };
    write_json(&args.out.join(SAVED_RUN), &saved)?;
    let outcome = run(&spec, &config, Some(goal))?;
    if let Some(last) = outcome.record.last() {
        println!(
            "{} iterations, {} elements, goal error {}",
            outcome.record.len(),
            last.n_elements,
            last.goal_error.map_or("n/a".to_string(), |e| format!("{e:.3e}"))
        );
    }
    match outcome.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn verify_command(args: VerifyArgs) -> goafem::Result<()> {
    let path = args.run.join(SAVED_RUN);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let saved: SavedRun =
        serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    let spec: ProblemSpec = make_preset(saved.example, &saved.preset)?;
    let config = RunConfig {
        out_dir: None,
        snapshot_every: None,
        keep_states: true,
        ..saved.config
    };
    let outcome = run(&spec, &config, Some(saved.reference_goal))?;
    if let Some(e) = outcome.failure {
        return Err(e);
    }
    let finest = &outcome
        .states
        .last()
        .ok_or_else(|| Error::InsufficientData("run produced no iterates".into()))?
        .primal;
    let reference = build_reference(&spec, finest, args.refine_extra, 1e-10)?;
    let (rows, report) = verify_rows(&spec, &outcome.states, &reference, (1.0, 1.0, 1.0))?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_csv_rows(&args.out.join("verify.csv"), &VERIFY_HEADER, &rows)?;
    println!(
        "reference: {} elements; max ratio after burn-in {}; goal/Qbar spread {}",
        reference.mesh.n_elements(),
        report
            .max_ratio_after_burn_in()
            .map_or("n/a".to_string(), |r| format!("{r:.4}")),
        report
            .goal_ratio_spread()
            .map_or("n/a".to_string(), |r| format!("{r:.2}"))
    );
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> goafem::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
