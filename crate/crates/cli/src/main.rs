//! `gridrl` command-line interface.
//!
//! Exit codes: 0 success, 1 usage, input or configuration error, 2 insecure
//! or non-converged, 3 unresolved after training.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use gridrl::env::Stage;
use gridrl::error::Error;
use gridrl::grid::{load_case, GridCase};
use gridrl::pipeline::{self, read_metrics, write_metrics_csv, PolicyCheckpoint, RunConfig, RunStatus};
use gridrl::power_flow::{check_limits, solve, PowerFlowSolution, SolverSettings};
use gridrl::security::{total_reward, write_contingency_report, RewardConfig};

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 1;
const EXIT_INSECURE: u8 = 2;
const EXIT_UNRESOLVED: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "gridrl", version, about = "AC power flow, N-1 screening and line-flow control by reinforcement learning")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the AC power flow of a case and list limit violations.
    Solve(SolveArgs),
    /// Screen every single-branch outage and write the contingency report.
    Nminus1(ScreenArgs),
    /// Train one stage of the pipeline.
    Train(TrainArgs),
    /// Run generator control, then load control if overloads remain.
    RunMsdrl(RunArgs),
    /// Roll out a trained policy greedily on a case.
    Apply(ApplyArgs),
    /// Convert a metrics log to `episode,steps,return` CSV.
    ExportMetrics(ExportArgs),
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    case: Option<PathBuf>,
    /// Run configuration supplying solver settings (and the case when
    /// `--case` is absent).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write `buses.csv` and `branches.csv` into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScreenArgs {
    #[arg(long)]
    case: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write `contingency_report.csv` into this directory instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Contingency-sweep worker threads.
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config file and `GRIDRL_SEED`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config file and `GRIDRL_OUT`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StageArg {
    /// Generator control.
    One,
    /// Load control.
    Two,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value = "one")]
    stage: StageArg,
}

#[derive(Debug, Args)]
struct ApplyArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    case: PathBuf,
    /// Directory receiving `applied_case.json` and `apply_summary.json`.
    #[arg(long)]
    out: PathBuf,
    /// Run configuration supplying solver, reward and episode settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// `metrics.jsonl` written by training.
    #[arg(long)]
    log: PathBuf,
    /// CSV file to write; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .parse_default_env()
        .init();
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Nminus1(a) => cmd_nminus1(a),
        Command::Train(a) => cmd_train(a),
        Command::RunMsdrl(a) => cmd_run_msdrl(a),
        Command::Apply(a) => cmd_apply(a),
        Command::ExportMetrics(a) => cmd_export_metrics(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::NotConverged => EXIT_INSECURE,
                _ => EXIT_INPUT,
            })
        }
    }
}

type CmdResult = Result<u8, Error>;

/// Case plus solver and reward settings, from `--case` and/or `--config`.
fn case_and_settings(case: Option<PathBuf>, config: Option<PathBuf>) -> Result<(GridCase, SolverSettings, RewardConfig), Error> {
    let (solver, reward, config_case) = match config {
        Some(path) => {
            let cfg = RunConfig::load(&path)?;
            (cfg.solver, cfg.reward, Some(cfg.case))
        }
        None => (SolverSettings::default(), RewardConfig::default(), None),
    };
    let path = case
        .or(config_case)
        .ok_or_else(|| Error::Config("either --case or --config is required".into()))?;
    Ok((load_case(&path)?, solver, reward))
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })
}

fn cmd_solve(args: SolveArgs) -> CmdResult {
    let (case, solver, _) = case_and_settings(args.case, args.config)?;
    let solution = solve(&case, &solver)?;
    println!("converged: {}", solution.converged);
    println!("iterations: {}", solution.iterations);
    println!("max_mismatch_pu: {:e}", solution.max_mismatch);
    if !solution.converged {
        return Ok(EXIT_INSECURE);
    }
    println!("losses_mw: {:.6}", solution.total_losses() * case.base_mva);
    let violations = check_limits(&case, &solution)?;
    println!("violations: {}", violations.len());
    for v in &violations {
        println!("  {:?} {:?}: value {:.6} pu, bound {:.6} pu, excess {:.6} pu", v.element, v.quantity, v.value, v.bound, v.excess);
    }
    if let Some(dir) = args.out {
        create_dir(&dir)?;
        write_solution_csv(&case, &solution, &dir)?;
    }
    Ok(EXIT_OK)
}

/// Bus voltages and branch flows in file units.
fn write_solution_csv(case: &GridCase, s: &PowerFlowSolution, dir: &Path) -> Result<(), Error> {
    let base = case.base_mva;
    let path = dir.join("buses.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["bus_id", "v_pu", "angle_deg", "p_inj_mw", "q_inj_mvar"])?;
    for (i, bus) in case.buses.iter().enumerate() {
        w.write_record([
            bus.id.to_string(),
            s.v_mag[i].to_string(),
            s.v_ang[i].to_degrees().to_string(),
            (s.p_inj[i] * base).to_string(),
            (s.q_inj[i] * base).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Io { path: path.clone(), source: e })?;

    let path = dir.join("branches.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["branch_id", "from_bus", "to_bus", "p_from_mw", "q_from_mvar", "p_to_mw", "q_to_mvar", "p_limit_mw"])?;
    for (k, br) in case.branches.iter().enumerate() {
        w.write_record([
            br.id.to_string(),
            br.from_bus.to_string(),
            br.to_bus.to_string(),
            (s.branch_p_from[k] * base).to_string(),
            (s.branch_q_from[k] * base).to_string(),
            (s.branch_p_to[k] * base).to_string(),
            (s.branch_q_to[k] * base).to_string(),
            br.p_limit_mw.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Io { path, source: e })?;
    Ok(())
}

fn cmd_nminus1(args: ScreenArgs) -> CmdResult {
    let (case, solver, mut reward) = case_and_settings(args.case, args.config)?;
    if let Some(n) = args.parallel {
        reward.workers = n;
    }
    let breakdown = total_reward(&case, &reward, &solver)?;
    match args.out {
        Some(dir) => {
            create_dir(&dir)?;
            let path = dir.join("contingency_report.csv");
            let file = fs::File::create(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            write_contingency_report(&breakdown, io::BufWriter::new(file))?;
        }
        None => write_contingency_report(&breakdown, io::stdout().lock())?,
    }
    eprintln!(
        "r_total {:.9} (base {:.9}, contingencies {:.9}); overloaded branches {:?}",
        breakdown.r_total,
        breakdown.r_base,
        breakdown.r_con,
        breakdown.overloaded_branches()
    );
    if !breakdown.base_converged {
        eprintln!("base case did not converge");
    }
    Ok(if breakdown.is_secure() { EXIT_OK } else { EXIT_INSECURE })
}

fn run_config(args: &RunArgs) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(n) = args.parallel {
        cfg.reward.workers = n;
    }
    Ok(cfg)
}

fn cmd_train(args: TrainArgs) -> CmdResult {
    let cfg = run_config(&args.run)?;
    let stage = match args.stage {
        StageArg::One => Stage::GeneratorControl,
        StageArg::Two => Stage::LoadControl,
    };
    info!("training {stage} with seed {}", cfg.seed);
    let result = pipeline::train_single(&cfg, stage)?;
    println!("stage: {}", result.stage);
    println!("episodes: {}", result.episodes);
    println!("best_episode: {}", result.best_episode);
    println!("greedy_steps: {}", result.evaluation.steps());
    println!("greedy_return: {}", result.evaluation.greedy_return);
    println!("resolved: {}", result.resolved);
    println!("checkpoint: {}", result.checkpoint_path.display());
    Ok(if result.resolved { EXIT_OK } else { EXIT_UNRESOLVED })
}

fn cmd_run_msdrl(args: RunArgs) -> CmdResult {
    let cfg = run_config(&args)?;
    info!("running both stages with seed {}", cfg.seed);
    let outcome = pipeline::run_msdrl(&cfg)?;
    for s in &outcome.summary.stages {
        println!(
            "{}: episodes {}, greedy steps {}, resolved {}",
            s.stage, s.episodes, s.greedy_steps, s.resolved
        );
    }
    println!("status: {}", status_name(outcome.status));
    println!("r_total: {}", outcome.final_breakdown.r_total);
    println!("summary: {}", cfg.output_dir.join("summary.json").display());
    Ok(match outcome.status {
        RunStatus::Resolved => EXIT_OK,
        RunStatus::Unresolved => EXIT_UNRESOLVED,
    })
}

fn status_name(status: RunStatus) -> &'static str {
    match status {
        RunStatus::Resolved => "resolved",
        RunStatus::Unresolved => "unresolved",
    }
}

fn cmd_apply(args: ApplyArgs) -> CmdResult {
    let (solver, mut reward, stage_one, stage_two) = match &args.config {
        Some(path) => {
            let cfg = RunConfig::load(path)?;
            (cfg.solver, cfg.reward, cfg.stage_one.episode, cfg.stage_two.episode)
        }
        None => Default::default(),
    };
    if let Some(n) = args.parallel {
        reward.workers = n;
    }
    let stage = PolicyCheckpoint::load(&args.checkpoint)?.binding.action.stage;
    let episode = match stage {
        Stage::GeneratorControl => stage_one,
        Stage::LoadControl => stage_two,
    };
    create_dir(&args.out)?;
    let case_out = args.out.join("applied_case.json");
    if same_file(&case_out, &args.case) {
        return Err(Error::Config(format!("refusing to overwrite the input case {}", args.case.display())));
    }
    let summary = pipeline::apply_policy(&args.checkpoint, &args.case, &case_out, &solver, &reward, &episode)?;
    let path = args.out.join("apply_summary.json");
    let mut text = serde_json::to_string_pretty(&summary).expect("apply summary serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?;
    println!("stage: {}", summary.stage);
    println!("steps: {}", summary.steps);
    println!("r_total: {}", summary.r_total);
    println!("resolved: {}", summary.resolved);
    println!("case: {}", case_out.display());
    Ok(if summary.resolved { EXIT_OK } else { EXIT_UNRESOLVED })
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

fn cmd_export_metrics(args: ExportArgs) -> CmdResult {
    let records = read_metrics(&args.log)?;
    match args.out {
        Some(path) => {
            let file = fs::File::create(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            write_metrics_csv(&records, io::BufWriter::new(file))?;
        }
        None => {
            let mut out = io::stdout().lock();
            write_metrics_csv(&records, &mut out)?;
            out.flush().map_err(|e| Error::Io { path: "<stdout>".into(), source: e })?;
        }
    }
    info!("exported {} records", records.len());
    Ok(EXIT_OK)
}
