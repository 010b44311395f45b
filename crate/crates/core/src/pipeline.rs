//! The three phases chained: constraint search for a schedule, annealing
//! over start weeks, then modulation and per-scenario dispatch.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{check_feasibility_with, compute_objective, ResidualMode, Violation};
use crate::model::{Instance, ModelError, Schedule, Solution};
use crate::modulation::{modulate_all, modulate_min_scenario, MinScenarioPlan, ModulationError};
use crate::par::Exec;
use crate::planner::{plan_plant, PlantPlan, PwlCost};
use crate::scheduler::{solve_schedule_with, SchedulerConfig, SchedulerError};
use crate::search::{anneal_chains, SaParams, SearchBudget, Searcher};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub scheduler: SchedulerConfig,
    pub sa: SaParams,
    pub search_budget: SearchBudget,
    pub chains: usize,
    /// Equidistant breakpoints of the type-1 cost approximation; `None`
    /// uses three per type-2 plant.
    pub breakpoints: Option<usize>,
    pub residual: ResidualMode,
    pub exec: Exec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scheduler: SchedulerConfig::default(),
            sa: SaParams::default(),
            search_budget: SearchBudget::Time(Duration::from_secs(50)),
            chains: 1,
            breakpoints: None,
            residual: ResidualMode::default(),
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    /// Schedule search, including the planner checks of incumbents.
    pub cp: Duration,
    /// Whole annealing phase.
    pub search: Duration,
    /// Share of the annealing phase spent pricing moves (summed over chains).
    pub delta_evaluation: Duration,
    pub modulation: Duration,
    pub evaluation: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub solution: Solution,
    pub objective: f64,
    pub violations: Vec<Violation>,
    pub timings: PhaseTimings,
    pub scheduler_nodes: u64,
    /// Surrogate value of each accepted schedule incumbent.
    pub incumbents: Vec<f64>,
    /// Approximated cost before and after annealing.
    pub search_cost: (f64, f64),
    pub moves: u64,
    /// True when modulation failed on the annealed schedule and the
    /// pre-annealing schedule was used instead.
    pub fell_back: bool,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("schedule search failed")]
    Scheduler(#[from] SchedulerError),
    #[error("modulation failed")]
    Modulation(#[from] ModulationError),
}

/// Plans every plant with refuels starting from their lower bounds.
pub fn initial_plans(
    exec: Exec,
    instance: &Instance,
    schedule: &Schedule,
) -> Option<Vec<PlantPlan>> {
    let plans = exec.map_range(instance.type2.len(), |i| {
        let floor: Vec<f64> = instance.type2[i]
            .cycles
            .iter()
            .map(|c| c.min_refuel)
            .collect();
        plan_plant(instance, i, &schedule.starts[i], &floor)
            .ok()
            .filter(|p| p.feasible)
    });
    plans.into_iter().collect()
}

struct Accepted {
    schedule: Schedule,
    plans: Vec<PlantPlan>,
    min: MinScenarioPlan,
}

pub fn run_pipeline(
    instance: &Instance,
    config: &PipelineConfig,
) -> Result<PipelineOutcome, PipelineError> {
    instance.validate()?;
    let exec = config.exec;
    let mut timings = PhaseTimings::default();

    let clock = Instant::now();
    let mut accepted: Option<Accepted> = None;
    let quantum = config.scheduler.refuel_quantum;
    let result = solve_schedule_with(instance, &config.scheduler, |schedule| {
        let Some(plans) = initial_plans(exec, instance, schedule) else {
            return false;
        };
        match modulate_min_scenario(instance, schedule, &plans, quantum) {
            Ok(min) => {
                accepted = Some(Accepted {
                    schedule: schedule.clone(),
                    plans,
                    min,
                });
                true
            }
            Err(_) => false,
        }
    })?;
    let accepted = accepted.expect("an accepted incumbent backs every result");
    timings.cp = clock.elapsed();
    log::info!(
        "schedule found: surrogate {:.3}, {} nodes, {} incumbents",
        result.surrogate,
        result.nodes,
        result.incumbents.len()
    );

    let clock = Instant::now();
    let pwl = PwlCost::build_with(
        exec,
        instance,
        config
            .breakpoints
            .unwrap_or_else(|| PwlCost::default_breakpoints(instance)),
    );
    let searcher = Searcher::new(instance, &pwl, config.residual).with_exec(exec);
    let start = searcher.state_from_plans(accepted.schedule.clone(), accepted.plans.clone());
    let run = anneal_chains(
        &searcher,
        &start,
        &config.sa,
        config.search_budget,
        config.chains,
    );
    timings.search = clock.elapsed();
    timings.delta_evaluation = run.delta_time;
    log::info!(
        "annealing: {} moves, {} accepted, {} restarts, cost {:.3} -> {:.3}",
        run.moves,
        run.accepted,
        run.restarts,
        run.initial_cost,
        run.best_cost()
    );

    let clock = Instant::now();
    let best = &run.best;
    let (min, fell_back) =
        match modulate_min_scenario(instance, &best.schedule, &best.plans, quantum) {
            Ok(min) => (min, false),
            Err(e) => {
                log::warn!(
                    "modulation failed on the annealed schedule ({e}); using the initial schedule"
                );
                (accepted.min, true)
            }
        };
    let scenarios = modulate_all(exec, instance, &min, config.residual);
    timings.modulation = clock.elapsed();

    let clock = Instant::now();
    let solution = Solution {
        schedule: min.schedule,
        production: scenarios.into_iter().map(|s| s.production).collect(),
    };
    let objective = compute_objective(
        instance,
        &solution.schedule,
        &solution.production,
        config.residual,
    )?;
    let violations =
        check_feasibility_with(exec, instance, &solution.schedule, &solution.production)?;
    timings.evaluation = clock.elapsed();

    Ok(PipelineOutcome {
        solution,
        objective,
        violations,
        timings,
        scheduler_nodes: result.nodes,
        incumbents: result.incumbents,
        search_cost: (run.initial_cost, run.best_cost()),
        moves: run.moves,
        fell_back,
    })
}
