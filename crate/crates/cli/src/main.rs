use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use outage_core::evaluator::{check_feasibility, compute_objective, ResidualMode};
use outage_core::io::{
    generate_instance, parse_instance, parse_solution, write_instance, write_report,
    write_solution, DemandProfile, GeneratorParams, Report,
};
use outage_core::model::Instance;
use outage_core::pipeline::{run_pipeline, PipelineConfig, PipelineError, PipelineOutcome};
use outage_core::satgen::{encode_1in3sat, Formula};
use outage_core::scheduler::{Budget, SchedulerConfig};
use outage_core::search::{SaParams, SearchBudget};
use outage_core::Exec;

const EXIT_IO: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(
    name = "outage",
    version,
    about = "Outage scheduling and refuel planning for a nuclear fleet"
)]
struct Cli {
    /// -v for phase progress, -vv for search details.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Schedule outages, plan refuels and dispatch every scenario.
    Solve(SolveArgs),
    /// Check a solution against an instance and report violations.
    Validate(ValidateArgs),
    /// Write a random instance built around a feasible witness.
    Generate(GenerateArgs),
    /// Encode a 1-in-3-SAT formula as a scheduling instance.
    EncodeSat(EncodeArgs),
    /// Print the size of an instance.
    Stats(StatsArgs),
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    /// Solution file; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Total wall-clock budget in seconds.
    #[arg(long, env = "OUTAGE_TIME_BUDGET", default_value_t = 60.0)]
    time_budget: f64,
    /// Share of the budget given to the schedule search.
    #[arg(long, env = "OUTAGE_SCHEDULER_SHARE", default_value_t = 1.0 / 6.0)]
    scheduler_share: f64,
    /// Deterministic mode: annealing moves instead of a time budget.
    #[arg(long, env = "OUTAGE_ITERATIONS")]
    iterations: Option<u64>,
    /// Schedule search nodes in deterministic mode.
    #[arg(long, env = "OUTAGE_CP_NODES", default_value_t = 200_000)]
    cp_nodes: u64,
    #[arg(long, env = "OUTAGE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "OUTAGE_REFUEL_QUANTUM", default_value_t = 1000.0)]
    refuel_quantum: f64,
    /// Breakpoints of the type-1 cost approximation (default 3 per type-2 plant).
    #[arg(long, env = "OUTAGE_BREAKPOINTS")]
    breakpoints: Option<usize>,
    /// Independent annealing chains.
    #[arg(long, env = "OUTAGE_CHAINS", default_value_t = 1)]
    chains: usize,
    /// Average the residual fuel value over scenarios instead of summing it.
    #[arg(long, env = "OUTAGE_AVERAGED_RESIDUAL")]
    averaged_residual: bool,
    /// Disable thread parallelism.
    #[arg(long, env = "OUTAGE_SEQUENTIAL")]
    sequential: bool,
    #[command(flatten)]
    sa: SaArgs,
}

#[derive(Args)]
struct SaArgs {
    #[arg(long, env = "OUTAGE_SA_COOLING_RATIO", default_value_t = 0.995)]
    sa_cooling_ratio: f64,
    #[arg(long, env = "OUTAGE_SA_START_ACCEPT_RATIO", default_value_t = 0.5)]
    sa_start_accept_ratio: f64,
    #[arg(long, env = "OUTAGE_SA_STOP_IDLE", default_value_t = 125)]
    sa_stop_idle: usize,
    #[arg(long, env = "OUTAGE_SA_N_PLATEAU", default_value_t = 100)]
    sa_n_plateau: usize,
    #[arg(long, env = "OUTAGE_SA_K_RESTART", default_value_t = 2.0)]
    sa_k_restart: f64,
    #[arg(long, env = "OUTAGE_SA_M_IDLE", default_value_t = 50)]
    sa_m_idle: usize,
    #[arg(long, env = "OUTAGE_SA_MOVE_RADIUS", default_value_t = 20)]
    sa_move_radius: usize,
    #[arg(long, env = "OUTAGE_SA_CALIBRATION_PROBES", default_value_t = 1000)]
    sa_calibration_probes: usize,
}

#[derive(Args)]
struct ValidateArgs {
    instance: PathBuf,
    solution: PathBuf,
    /// Report file; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, env = "OUTAGE_AVERAGED_RESIDUAL")]
    averaged_residual: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    plants: usize,
    #[arg(long, default_value_t = 3)]
    flexible: usize,
    #[arg(long, default_value_t = 2)]
    cycles: usize,
    #[arg(long, default_value_t = 20)]
    weeks: usize,
    #[arg(long, default_value_t = 7)]
    steps_per_week: usize,
    #[arg(long, default_value_t = 3)]
    scenarios: usize,
    #[arg(long, default_value_t = 0.5)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    overproduction_steps: usize,
    #[arg(long, default_value_t = 0.95)]
    demand_base: f64,
    #[arg(long, default_value_t = 0.1)]
    demand_amplitude: f64,
    #[arg(long, default_value_t = 0.03)]
    demand_noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the witness solution here.
    #[arg(long)]
    witness: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    /// Clause file: `p cnf n m` header, three literals and a 0 per line.
    formula: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    instance: PathBuf,
}

/// Failure with the exit code it maps to.
struct Failure(u8, anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(EXIT_IO, e.into())
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn load_instance(path: &Path) -> Result<Instance> {
    parse_instance(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn residual(averaged: bool) -> ResidualMode {
    if averaged {
        ResidualMode::Averaged
    } else {
        ResidualMode::Summed
    }
}

fn pipeline_config(args: &SolveArgs) -> Result<PipelineConfig> {
    let s = &args.sa;
    let sa = SaParams {
        cooling_ratio: s.sa_cooling_ratio,
        start_accept_ratio: s.sa_start_accept_ratio,
        stop_idle: s.sa_stop_idle,
        n_plateau: s.sa_n_plateau,
        k_restart: s.sa_k_restart,
        m_idle: s.sa_m_idle,
        move_radius: s.sa_move_radius,
        calibration_probes: s.sa_calibration_probes,
        seed: args.seed,
    };
    sa.validate().map_err(anyhow::Error::msg)?;
    anyhow::ensure!(
        args.time_budget.is_finite() && args.time_budget > 0.0,
        "time budget must be positive"
    );
    anyhow::ensure!(
        args.scheduler_share > 0.0 && args.scheduler_share < 1.0,
        "scheduler share must lie in (0, 1)"
    );
    anyhow::ensure!(args.refuel_quantum > 0.0, "refuel quantum must be positive");
    anyhow::ensure!(args.chains >= 1, "at least one chain");
    if let Some(b) = args.breakpoints {
        anyhow::ensure!(b >= 2, "at least two breakpoints");
    }
    let (budget, hard_budget, search_budget) = match args.iterations {
        Some(moves) => (
            Budget::Nodes(args.cp_nodes),
            Some(Budget::Nodes(args.cp_nodes.saturating_mul(100))),
            SearchBudget::Moves(moves),
        ),
        None => {
            let total = args.time_budget;
            let cp = total * args.scheduler_share;
            (
                Budget::Time(Duration::from_secs_f64(cp)),
                Some(Budget::Time(
                    Duration::from_secs_f64(total * 0.5).max(Duration::from_secs_f64(cp)),
                )),
                SearchBudget::Time(Duration::from_secs_f64(total - cp)),
            )
        }
    };
    Ok(PipelineConfig {
        scheduler: SchedulerConfig {
            refuel_quantum: args.refuel_quantum,
            budget,
            hard_budget,
            seed: args.seed,
            ..SchedulerConfig::default()
        },
        sa,
        search_budget,
        chains: args.chains,
        breakpoints: args.breakpoints,
        residual: residual(args.averaged_residual),
        exec: if args.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        },
    })
}

fn summary(out: &PipelineOutcome, io: Duration) {
    let t = &out.timings;
    eprintln!("objective      {:.6}", out.objective);
    eprintln!("violations     {}", out.violations.len());
    eprintln!(
        "search cost    {:.6} -> {:.6} ({} moves{})",
        out.search_cost.0,
        out.search_cost.1,
        out.moves,
        if out.fell_back {
            ", fell back to the initial schedule"
        } else {
            ""
        }
    );
    eprintln!(
        "cp             {:.3?} ({} nodes, {} incumbents)",
        t.cp,
        out.scheduler_nodes,
        out.incumbents.len()
    );
    eprintln!("search         {:.3?}", t.search);
    eprintln!("  delta eval   {:.3?}", t.delta_evaluation);
    eprintln!("modulation     {:.3?}", t.modulation);
    eprintln!("evaluation     {:.3?}", t.evaluation);
    eprintln!("i/o            {io:.3?}");
}

fn solve(args: SolveArgs) -> Result<u8, Failure> {
    let clock = Instant::now();
    let instance = load_instance(&args.instance)?;
    let config = pipeline_config(&args)?;
    let mut io = clock.elapsed();
    info!(
        "{} type-2 plants, {} flexible plants, {} steps, {} scenarios",
        instance.type2.len(),
        instance.type1.len(),
        instance.steps(),
        instance.scenario_count()
    );
    let out = match run_pipeline(&instance, &config) {
        Ok(out) => out,
        Err(e @ (PipelineError::Scheduler(_) | PipelineError::Modulation(_))) => {
            return Err(Failure(EXIT_SOLVER, e.into()))
        }
        Err(e) => return Err(Failure(EXIT_IO, e.into())),
    };
    let clock = Instant::now();
    let text = write_solution(
        &instance,
        &out.solution.schedule,
        &out.solution.production,
        out.objective,
    )?;
    emit(args.output.as_deref(), &text)?;
    io += clock.elapsed();
    summary(&out, io);
    Ok(if out.violations.is_empty() {
        0
    } else {
        EXIT_INFEASIBLE
    })
}

fn validate(args: ValidateArgs) -> Result<u8, Failure> {
    let instance = load_instance(&args.instance)?;
    let (schedule, production, _) = parse_solution(&instance, &read(&args.solution)?)
        .with_context(|| format!("parsing {}", args.solution.display()))?;
    let violations = check_feasibility(&instance, &schedule, &production)?;
    let objective = compute_objective(
        &instance,
        &schedule,
        &production,
        residual(args.averaged_residual),
    )?;
    let report = Report {
        feasible: violations.is_empty(),
        objective,
        violations,
    };
    emit(args.output.as_deref(), &write_report(&report))?;
    eprintln!(
        "{} violations, objective {objective:.6}",
        report.violations.len()
    );
    Ok(if report.feasible { 0 } else { EXIT_INFEASIBLE })
}

fn generate(args: GenerateArgs) -> Result<u8, Failure> {
    let params = GeneratorParams {
        plants: args.plants,
        flexible: args.flexible,
        cycles: args.cycles,
        weeks: args.weeks,
        steps_per_week: args.steps_per_week,
        scenarios: args.scenarios,
        demand: DemandProfile {
            base: args.demand_base,
            amplitude: args.demand_amplitude,
            noise: args.demand_noise,
        },
        density: args.density,
        overproduction_steps: args.overproduction_steps,
        seed: args.seed,
    };
    let g = generate_instance(&params)?;
    emit(args.output.as_deref(), &write_instance(&g.instance))?;
    if let Some(path) = &args.witness {
        let w = &g.witness;
        let objective = compute_objective(
            &g.instance,
            &w.schedule,
            &w.production,
            ResidualMode::Summed,
        )?;
        let text = write_solution(&g.instance, &w.schedule, &w.production, objective)?;
        emit(Some(path), &text)?;
    }
    Ok(0)
}

fn encode_sat(args: EncodeArgs) -> Result<u8, Failure> {
    let formula: Formula = read(&args.formula)?
        .parse()
        .with_context(|| format!("parsing {}", args.formula.display()))?;
    let instance = encode_1in3sat(&formula);
    info!(
        "{} variables, {} clauses -> {} plants, {} coupling constraints",
        formula.vars,
        formula.clauses.len(),
        instance.type2.len(),
        instance.coupling.len()
    );
    emit(args.output.as_deref(), &write_instance(&instance))?;
    Ok(0)
}

fn stats(args: StatsArgs) -> Result<u8, Failure> {
    let inst = load_instance(&args.instance)?;
    let c = &inst.coupling;
    let outages: usize = inst.type2.iter().map(|p| p.cycles.len()).sum();
    let mandatory = inst
        .outage_ids()
        .filter(|&id| inst.cycle(id).latest.is_some())
        .count();
    println!("type-2 plants       {}", inst.type2.len());
    println!("flexible plants     {}", inst.type1.len());
    println!("outages             {outages} ({mandatory} mandatory)");
    println!("weeks               {}", inst.weeks());
    println!("time steps          {}", inst.steps());
    println!("hours per step      {}", inst.grid.hours_per_step());
    println!("scenarios           {}", inst.scenario_count());
    println!("separations         {}", c.separations.len());
    println!("max offline         {}", c.max_offline.len());
    println!("resources           {}", c.resources.len());
    println!("offline capacity    {}", c.offline_capacity.len());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("OUTAGE_LOG")
        .init();
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Validate(a) => validate(a),
        Command::Generate(a) => generate(a),
        Command::EncodeSat(a) => encode_sat(a),
        Command::Stats(a) => stats(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
