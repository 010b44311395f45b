//! Search state under the approximated cost, incremental scheduling checks
//! and delta evaluation of single moves.

use thiserror::Error;

use super::moves::Move;
use crate::evaluator::{separation_excess, ResidualMode};
use crate::model::{Instance, ModelError, OutageId, Schedule, TOLERANCE};
use crate::par::Exec;
use crate::planner::{plan_plant, PlantPlan, PwlCost};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("plant {plant} has no feasible production plan for the schedule")]
    Infeasible { plant: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Approximated cost split into its three terms: total is
/// `refuel + type1 - residual`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CostParts {
    pub refuel: f64,
    pub type1: f64,
    /// Weighted value of the fuel left at the horizon.
    pub residual: f64,
}

impl CostParts {
    pub fn total(&self) -> f64 {
        self.refuel + self.type1 - self.residual
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchState {
    pub schedule: Schedule,
    pub plans: Vec<PlantPlan>,
    /// Total type-2 production per step.
    pub totals: Vec<f64>,
    pub cost: CostParts,
}

impl SearchState {
    pub fn cost(&self) -> f64 {
        self.cost.total()
    }

    /// Largest gap between the cached totals and a fresh sum of the plans.
    pub fn total_drift(&self) -> f64 {
        self.totals
            .iter()
            .enumerate()
            .map(|(t, &c)| (c - self.plans.iter().map(|p| p.production[t]).sum::<f64>()).abs())
            .fold(0.0, f64::max)
    }
}

/// A replanned plant for a move that passed every check.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub mv: Move,
    pub plan: PlantPlan,
    pub delta: CostParts,
}

impl Candidate {
    pub fn delta(&self) -> f64 {
        self.delta.total()
    }
}

/// Outage → incident coupling constraints.
#[derive(Debug, Clone)]
struct Incidence {
    separations: Vec<Vec<Vec<usize>>>,
    max_offline: Vec<Vec<Vec<usize>>>,
    resources: Vec<Vec<Vec<usize>>>,
    capacity: Vec<Vec<usize>>,
    max_offline_members: Vec<Vec<OutageId>>,
    resource_members: Vec<Vec<OutageId>>,
    capacity_members: Vec<Vec<usize>>,
    capacity_scope: Vec<Vec<bool>>,
}

impl Incidence {
    fn new(instance: &Instance) -> Self {
        let empty = || -> Vec<Vec<Vec<usize>>> {
            instance
                .type2
                .iter()
                .map(|p| vec![Vec::new(); p.cycles.len()])
                .collect()
        };
        let distinct = |ids: &[OutageId]| {
            let mut v = ids.to_vec();
            v.sort_unstable();
            v.dedup();
            v
        };
        let coupling = &instance.coupling;
        let mut separations = empty();
        for (n, s) in coupling.separations.iter().enumerate() {
            separations[s.first.plant][s.first.cycle].push(n);
            if s.second != s.first {
                separations[s.second.plant][s.second.cycle].push(n);
            }
        }
        let max_offline_members: Vec<_> = coupling
            .max_offline
            .iter()
            .map(|c| distinct(&c.outages))
            .collect();
        let resource_members: Vec<_> = coupling
            .resources
            .iter()
            .map(|c| distinct(&c.outages))
            .collect();
        let mut max_offline = empty();
        for (n, m) in max_offline_members.iter().enumerate() {
            for id in m {
                max_offline[id.plant][id.cycle].push(n);
            }
        }
        let mut resources = empty();
        for (n, m) in resource_members.iter().enumerate() {
            for id in m {
                resources[id.plant][id.cycle].push(n);
            }
        }
        let mut capacity = vec![Vec::new(); instance.type2.len()];
        let mut capacity_members = Vec::new();
        let mut capacity_scope = Vec::new();
        for (n, c) in coupling.offline_capacity.iter().enumerate() {
            let mut plants = c.plants.clone();
            plants.sort_unstable();
            plants.dedup();
            for &i in &plants {
                capacity[i].push(n);
            }
            capacity_members.push(plants);
            let mut scope = vec![false; instance.steps()];
            for &h in &c.weeks {
                for t in instance.grid.steps_of(h) {
                    scope[t] = true;
                }
            }
            capacity_scope.push(scope);
        }
        Incidence {
            separations,
            max_offline,
            resources,
            capacity,
            max_offline_members,
            resource_members,
            capacity_members,
            capacity_scope,
        }
    }
}

/// Immutable context shared by every chain.
#[derive(Debug, Clone)]
pub struct Searcher<'a> {
    pub instance: &'a Instance,
    pub pwl: &'a PwlCost,
    /// Multiplier on the residual fuel value of the full-production plan.
    pub residual_weight: f64,
    pub exec: Exec,
    incidence: Incidence,
}

impl<'a> Searcher<'a> {
    pub fn new(instance: &'a Instance, pwl: &'a PwlCost, mode: ResidualMode) -> Self {
        let s = instance.scenario_count();
        Searcher {
            instance,
            pwl,
            residual_weight: s as f64 * mode.scenario_weight(s),
            exec: Exec::default(),
            incidence: Incidence::new(instance),
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    /// Plans every plant for `schedule`, starting from its refuels.
    pub fn state(&self, schedule: Schedule) -> Result<SearchState, SearchError> {
        let plans = self
            .exec
            .map_range(self.instance.type2.len(), |i| {
                plan_plant(self.instance, i, &schedule.starts[i], &schedule.refuels[i])
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(plant) = plans.iter().position(|p| !p.feasible) {
            return Err(SearchError::Infeasible { plant });
        }
        Ok(self.state_from_plans(schedule, plans))
    }

    /// Builds a state around precomputed plans; refuels are taken from the plans.
    pub fn state_from_plans(&self, mut schedule: Schedule, plans: Vec<PlantPlan>) -> SearchState {
        for (i, p) in plans.iter().enumerate() {
            schedule.refuels[i] = p.refuels.clone();
        }
        let totals = (0..self.instance.steps())
            .map(|t| plans.iter().map(|p| p.production[t]).sum())
            .collect();
        let cost = self.evaluate(&schedule, &plans);
        SearchState {
            schedule,
            plans,
            totals,
            cost,
        }
    }

    /// Full recomputation of the approximated cost.
    pub fn evaluate(&self, schedule: &Schedule, plans: &[PlantPlan]) -> CostParts {
        let inst = self.instance;
        let refuel = inst
            .type2
            .iter()
            .enumerate()
            .map(|(i, p)| {
                p.cycles
                    .iter()
                    .zip(&schedule.refuels[i])
                    .map(|(c, r)| c.refuel_cost * r)
                    .sum::<f64>()
            })
            .sum();
        let type1 = (0..inst.steps())
            .map(|t| {
                self.pwl
                    .approx_cost(t, plans.iter().map(|p| p.production[t]).sum())
            })
            .sum();
        let residual = self.residual_weight
            * inst
                .type2
                .iter()
                .zip(plans)
                .map(|(p, plan)| p.final_fuel_price * plan.final_fuel())
                .sum::<f64>();
        CostParts {
            refuel,
            type1,
            residual,
        }
    }

    fn offline_at(&self, schedule: &Schedule, plant: usize, week: usize) -> bool {
        self.instance.type2[plant]
            .cycles
            .iter()
            .zip(&schedule.starts[plant])
            .any(|(c, s)| s.is_some_and(|s| week >= s && week < s + c.duration))
    }

    /// Checks the outage-order, bound and coupling constraints touched by
    /// `mv`, assuming the rest of `schedule` already satisfies them.
    pub fn check_move_feasible(&self, schedule: &Schedule, mv: Move) -> bool {
        let inst = self.instance;
        let OutageId { plant: i, cycle: k } = mv.outage;
        let c = inst.cycle(mv.outage);
        let m = mv.target;
        let row = &schedule.starts[i];
        if row[k].is_none()
            || m + c.duration > inst.weeks()
            || c.earliest.is_some_and(|to| m < to)
            || c.latest.is_some_and(|ta| m > ta)
        {
            return false;
        }
        if k > 0 {
            match row[k - 1] {
                Some(prev) if prev + inst.type2[i].cycles[k - 1].duration <= m => {}
                _ => return false,
            }
        }
        if let Some(Some(next)) = row.get(k + 1) {
            if m + c.duration > *next {
                return false;
            }
        }
        let start_of = |id: OutageId| {
            if id == mv.outage {
                Some(m)
            } else {
                schedule.start(id)
            }
        };
        let inc = &self.incidence;
        for &n in &inc.separations[i][k] {
            let sep = &inst.coupling.separations[n];
            if let (Some(a), Some(b)) = (start_of(sep.first), start_of(sep.second)) {
                if separation_excess(inst, sep, a, b).is_some() {
                    return false;
                }
            }
        }
        for &n in &inc.max_offline[i][k] {
            let con = &inst.coupling.max_offline[n];
            let active = |id: OutageId| {
                start_of(id)
                    .is_some_and(|s| con.week >= s && con.week < s + inst.cycle(id).duration)
            };
            if active(mv.outage)
                && inc.max_offline_members[n]
                    .iter()
                    .filter(|&&id| active(id))
                    .count()
                    > con.limit
            {
                return false;
            }
        }
        if !inc.resources[i][k].is_empty() {
            let mut weeks: Vec<usize> = c
                .resource_weeks(m)
                .flatten()
                .filter(|&h| h < inst.weeks())
                .collect();
            weeks.sort_unstable();
            weeks.dedup();
            for &n in &inc.resources[i][k] {
                let cap = inst.coupling.resources[n].capacity;
                for &h in &weeks {
                    let used = inc.resource_members[n]
                        .iter()
                        .filter(|&&id| {
                            start_of(id).is_some_and(|s| {
                                inst.cycle(id).resource_weeks(s).any(|r| r.contains(&h))
                            })
                        })
                        .count();
                    if used > cap {
                        return false;
                    }
                }
            }
        }
        for &n in &inc.capacity[i] {
            let limit = inst.coupling.offline_capacity[n].limit;
            for t in inst.grid.steps_of_weeks(m, m + c.duration) {
                if !inc.capacity_scope[n][t] {
                    continue;
                }
                let week = inst.grid.week_of(t);
                let total: f64 = inc.capacity_members[n]
                    .iter()
                    .filter(|&&p| p == i || self.offline_at(schedule, p, week))
                    .map(|&p| inst.type2[p].pmax[t])
                    .sum();
                if total > limit + TOLERANCE {
                    return false;
                }
            }
        }
        true
    }

    /// Replans the moved plant and prices the change. `None` when the
    /// planner cannot make the plant feasible.
    pub fn delta_evaluate(&self, state: &SearchState, mv: Move) -> Option<Candidate> {
        let inst = self.instance;
        let i = mv.outage.plant;
        let mut row = state.schedule.starts[i].clone();
        row[mv.outage.cycle] = Some(mv.target);
        let old = &state.plans[i];
        let plan = plan_plant(inst, i, &row, &old.refuels).ok()?;
        if !plan.feasible {
            return None;
        }
        let cycles = &inst.type2[i].cycles;
        let refuel = cycles
            .iter()
            .zip(plan.refuels.iter().zip(&old.refuels))
            .map(|(c, (new, old))| c.refuel_cost * (new - old))
            .sum();
        let mut type1 = 0.0;
        for (t, (&new, &was)) in plan.production.iter().zip(&old.production).enumerate() {
            if new != was {
                let total = state.totals[t];
                type1 +=
                    self.pwl.approx_cost(t, total - was + new) - self.pwl.approx_cost(t, total);
            }
        }
        let residual = self.residual_weight
            * inst.type2[i].final_fuel_price
            * (plan.final_fuel() - old.final_fuel());
        Some(Candidate {
            mv,
            plan,
            delta: CostParts {
                refuel,
                type1,
                residual,
            },
        })
    }

    pub fn apply(&self, state: &mut SearchState, cand: Candidate) {
        let i = cand.mv.outage.plant;
        let old = &state.plans[i];
        for (t, total) in state.totals.iter_mut().enumerate() {
            *total += cand.plan.production[t] - old.production[t];
        }
        state.schedule.starts[i][cand.mv.outage.cycle] = Some(cand.mv.target);
        state.schedule.refuels[i] = cand.plan.refuels.clone();
        state.cost.refuel += cand.delta.refuel;
        state.cost.type1 += cand.delta.type1;
        state.cost.residual += cand.delta.residual;
        state.plans[i] = cand.plan;
    }
}
