//! Removes type-2 overproduction by modulating plants below full power.
//!
//! The minimum-demand scenario is handled first, walking the steps in
//! order and letting the planner repair refuels. Refuels are then frozen
//! and every scenario is shaved again from full production against its own
//! demand. The flexible plants finally cover what is left, cheapest first.

use thiserror::Error;

use crate::evaluator::{scenario_cost, ResidualMode};
use crate::model::{
    row_timeline, Instance, ModelError, PlantTimeline, Production, Schedule, TOLERANCE,
};
use crate::par::Exec;
use crate::planner::{
    dispatch_type1, min_scenario_cap, plan_production, simulate_plan, type2_room, PlantPlan,
};

const MAX_ROUNDS_PER_STEP: usize = 10_000;
/// Refuel repairs reshape whole campaigns, so steps already shaved are
/// checked again.
const MAX_PASSES: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModulationError {
    #[error("overproduction of {excess} at step {step} cannot be removed")]
    Overproduction { step: usize, excess: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Plans meeting the minimum-demand cap; their refuels are final.
#[derive(Debug, Clone, PartialEq)]
pub struct MinScenarioPlan {
    pub schedule: Schedule,
    pub plans: Vec<PlantPlan>,
    /// Requested reduction below full power, `[i][t]`.
    pub modulation: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioProduction {
    pub production: Production,
    pub cost: f64,
    /// False when the broadcast minimum-demand plan was cheaper or the
    /// scenario pass failed.
    pub own_plan: bool,
}

struct Shaver<'a> {
    instance: &'a Instance,
    timelines: Vec<PlantTimeline>,
    rows: &'a [Vec<Option<usize>>],
}

impl Shaver<'_> {
    /// Plants that may be modulated at `t`, earliest campaign end first.
    fn candidates(&self, plans: &[PlantPlan], t: usize) -> Vec<usize> {
        let mut out: Vec<(usize, usize)> = (0..plans.len())
            .filter(|&i| {
                let span = self.timelines[i].span_at(t);
                let threshold = self.instance.type2[i].campaign(span.cycle).threshold;
                span.campaign.contains(&t)
                    && plans[i].production[t] > TOLERANCE
                    && plans[i].fuel[t] >= threshold
            })
            .map(|i| (self.timelines[i].span_at(t).campaign.end, i))
            .collect();
        out.sort_unstable();
        out.into_iter().map(|(_, i)| i).collect()
    }

    fn budget_left(&self, plan: &PlantPlan, plant: usize, t: usize) -> f64 {
        let spans = &self.timelines[plant].spans;
        let n = spans.partition_point(|s| s.outage.start <= t) - 1;
        self.instance.type2[plant]
            .campaign(spans[n].cycle)
            .max_modulation
            - plan.modulation[n]
    }

    /// Lowers production at every step until the totals fit `cap`.
    /// `replan` rebuilds one plant for a trial modulation vector;
    /// `fallback` gets a last chance when no plant can be modulated.
    fn shave<R, B>(
        &self,
        cap: &[f64],
        plans: &mut [PlantPlan],
        mods: &mut [Vec<f64>],
        replan: R,
        mut fallback: B,
    ) -> Result<(), ModulationError>
    where
        R: Fn(usize, &[f64], &[f64]) -> Option<PlantPlan>,
        B: FnMut(&mut [PlantPlan], &[Vec<f64>], usize) -> bool,
    {
        let d = self.instance.grid.hours_per_step();
        let over_at = |plans: &[PlantPlan], t: usize| {
            plans.iter().map(|p| p.production[t]).sum::<f64>() - cap[t]
        };
        for _ in 0..MAX_PASSES {
            for t in 0..self.instance.steps() {
                for _ in 0..MAX_ROUNDS_PER_STEP {
                    let over = over_at(plans, t);
                    if over <= TOLERANCE {
                        break;
                    }
                    let mut progress = false;
                    for i in self.candidates(plans, t) {
                        let amount = over
                            .min(plans[i].production[t])
                            .min(self.budget_left(&plans[i], i, t) / d);
                        if amount <= TOLERANCE {
                            continue;
                        }
                        let mut trial = mods[i].clone();
                        trial[t] += amount;
                        if let Some(plan) = replan(i, &plans[i].refuels, &trial) {
                            if plan.feasible
                                && plan.production[t] < plans[i].production[t] - 0.5 * TOLERANCE
                            {
                                plans[i] = plan;
                                mods[i] = trial;
                                progress = true;
                                break;
                            }
                        }
                    }
                    if !progress && !fallback(plans, mods, t) {
                        return Err(ModulationError::Overproduction {
                            step: t,
                            excess: over,
                        });
                    }
                }
                let over = over_at(plans, t);
                if over > TOLERANCE {
                    return Err(ModulationError::Overproduction {
                        step: t,
                        excess: over,
                    });
                }
            }
            if (0..self.instance.steps()).all(|t| over_at(plans, t) <= TOLERANCE) {
                return Ok(());
            }
        }
        match (0..self.instance.steps())
            .map(|t| (t, over_at(plans, t)))
            .find(|&(_, o)| o > TOLERANCE)
        {
            Some((step, excess)) => Err(ModulationError::Overproduction { step, excess }),
            None => Ok(()),
        }
    }
}

/// Caps total type-2 production by the minimum-demand room at every step,
/// repairing refuels where modulation leaves too much fuel. As a last
/// resort the most recent refuel of a producing plant is lowered by one
/// quantum.
pub fn modulate_min_scenario(
    instance: &Instance,
    schedule: &Schedule,
    plans: &[PlantPlan],
    quantum: f64,
) -> Result<MinScenarioPlan, ModulationError> {
    let timelines = (0..instance.type2.len())
        .map(|i| row_timeline(instance, i, &schedule.starts[i]))
        .collect::<Result<Vec<_>, _>>()?;
    let shaver = Shaver {
        instance,
        timelines,
        rows: &schedule.starts,
    };
    let mut plans = plans.to_vec();
    let mut mods = vec![vec![0.0; instance.steps()]; plans.len()];
    let cap = min_scenario_cap(instance);
    let replan = |i: usize, refuels: &[f64], m: &[f64]| {
        plan_production(instance, i, &shaver.rows[i], refuels, m).ok()
    };
    let fallback = |plans: &mut [PlantPlan], mods: &[Vec<f64>], t: usize| {
        let mut order: Vec<usize> = (0..plans.len())
            .filter(|&i| plans[i].production[t] > TOLERANCE)
            .collect();
        order.sort_by_key(|&i| (shaver.timelines[i].span_at(t).campaign.end, i));
        for i in order {
            let Some(k) = shaver.timelines[i].span_at(t).cycle else {
                continue;
            };
            let min = instance.type2[i].cycles[k].min_refuel;
            if plans[i].refuels[k] - min <= TOLERANCE {
                continue;
            }
            let mut refuels = plans[i].refuels.clone();
            refuels[k] = (refuels[k] - quantum).max(min);
            if let Ok(plan) = plan_production(instance, i, &shaver.rows[i], &refuels, &mods[i]) {
                if plan.feasible && plan.production[t] < plans[i].production[t] - 0.5 * TOLERANCE {
                    plans[i] = plan;
                    return true;
                }
            }
        }
        false
    };
    shaver.shave(&cap, &mut plans, &mut mods, replan, fallback)?;
    let mut schedule = schedule.clone();
    for (i, p) in plans.iter().enumerate() {
        schedule.refuels[i] = p.refuels.clone();
    }
    Ok(MinScenarioPlan {
        schedule,
        plans,
        modulation: mods,
    })
}

fn fill(instance: &Instance, s: usize, type2: Vec<Vec<f64>>) -> Production {
    let t_end = instance.steps();
    let mut type1 = vec![vec![0.0; t_end]; instance.type1.len()];
    for t in 0..t_end {
        let total: f64 = type2.iter().map(|row| row[t]).sum();
        let (levels, _) = dispatch_type1(instance, t, s, total);
        for (j, p) in levels.into_iter().enumerate() {
            type1[j][t] = p;
        }
    }
    Production { type1, type2 }
}

/// Production for scenario `s` with refuels frozen: a fresh modulation
/// pass from full production against the scenario's own demand, compared
/// with the minimum-demand plan; the cheaper one is kept. The flexible
/// plants fill the remaining demand.
pub fn modulate_per_scenario(
    instance: &Instance,
    min: &MinScenarioPlan,
    s: usize,
    mode: ResidualMode,
) -> ScenarioProduction {
    let schedule = &min.schedule;
    let broadcast = fill(
        instance,
        s,
        min.plans.iter().map(|p| p.production.clone()).collect(),
    );
    let broadcast_cost = scenario_cost(instance, schedule, &broadcast, s, mode);
    let fallback = ScenarioProduction {
        production: broadcast,
        cost: broadcast_cost,
        own_plan: false,
    };
    let Ok(timelines) = (0..instance.type2.len())
        .map(|i| row_timeline(instance, i, &schedule.starts[i]))
        .collect::<Result<Vec<_>, _>>()
    else {
        return fallback;
    };
    let shaver = Shaver {
        instance,
        timelines,
        rows: &schedule.starts,
    };
    let replan = |i: usize, refuels: &[f64], m: &[f64]| {
        simulate_plan(instance, i, &shaver.rows[i], refuels, m).ok()
    };
    let Some(mut plans) = (0..instance.type2.len())
        .map(|i| replan(i, &schedule.refuels[i], &[]).filter(|p| p.feasible))
        .collect::<Option<Vec<_>>>()
    else {
        return fallback;
    };
    let cap: Vec<f64> = (0..instance.steps())
        .map(|t| type2_room(instance, t, s))
        .collect();
    let mut mods = vec![vec![0.0; instance.steps()]; plans.len()];
    if shaver
        .shave(&cap, &mut plans, &mut mods, replan, |_, _, _| false)
        .is_err()
    {
        return fallback;
    }
    let own = fill(
        instance,
        s,
        plans.into_iter().map(|p| p.production).collect(),
    );
    let cost = scenario_cost(instance, schedule, &own, s, mode);
    if cost < fallback.cost {
        ScenarioProduction {
            production: own,
            cost,
            own_plan: true,
        }
    } else {
        fallback
    }
}

/// [`modulate_per_scenario`] for every scenario.
pub fn modulate_all(
    exec: Exec,
    instance: &Instance,
    min: &MinScenarioPlan,
    mode: ResidualMode,
) -> Vec<ScenarioProduction> {
    exec.map_range(instance.scenario_count(), |s| {
        modulate_per_scenario(instance, min, s, mode)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::check_feasibility;
    use crate::model::*;
    use crate::planner::plan_plant;

    fn limits(max_modulation: f64) -> CampaignLimits {
        CampaignLimits {
            threshold: 0.0,
            max_modulation,
            profile: PowerProfile::linear(0.0, 0.0),
        }
    }

    /// Plants with ample fuel, one flexible plant, demand per step.
    fn instance(campaign_ends: &[usize], demand: Vec<f64>, budget: f64) -> Instance {
        let t = demand.len();
        let grid = TimeGrid::uniform(t, 1, 1.0).unwrap();
        let type2 = campaign_ends
            .iter()
            .map(|&end| Type2Plant {
                pmax: vec![10.0; t],
                initial_fuel: 1000.0,
                final_fuel_price: 0.0,
                initial_campaign: limits(budget),
                cycles: vec![Cycle {
                    duration: 1,
                    earliest: Some(end),
                    latest: Some(end),
                    min_refuel: 0.0,
                    max_refuel: 0.0,
                    keep_ratio: 1.0,
                    reload_offset: 0.0,
                    max_fuel_before: 1e9,
                    max_fuel_after: 1e9,
                    refuel_cost: 0.0,
                    resource_windows: vec![],
                    campaign: limits(budget),
                }],
            })
            .collect();
        Instance {
            grid,
            type1: vec![Type1Plant {
                pmin: vec![vec![0.0]; t],
                pmax: vec![vec![100.0]; t],
                cost: vec![vec![1.0]; t],
            }],
            type2,
            scenarios: ScenarioSet {
                count: 1,
                demand: demand.into_iter().map(|d| vec![d]).collect(),
                epsilon: 0.0,
            },
            coupling: CouplingConstraints::default(),
        }
    }

    fn start(inst: &Instance) -> (Schedule, Vec<PlantPlan>) {
        let mut s = Schedule::empty(inst);
        for (i, p) in inst.type2.iter().enumerate() {
            s.starts[i][0] = p.cycles[0].earliest;
        }
        let plans = (0..inst.type2.len())
            .map(|i| plan_plant(inst, i, &s.starts[i], &s.refuels[i]).unwrap())
            .collect();
        (s, plans)
    }

    #[test]
    fn no_overproduction_is_a_no_op() {
        let inst = instance(&[3], vec![50.0; 6], 100.0);
        let (s, plans) = start(&inst);
        let out = modulate_min_scenario(&inst, &s, &plans, 1.0).unwrap();
        assert_eq!(out.plans, plans);
    }

    #[test]
    fn single_step_is_lowered_by_the_excess() {
        let mut demand = vec![50.0; 6];
        demand[1] = 5.0;
        let inst = instance(&[4], demand, 100.0);
        let (s, plans) = start(&inst);
        let out = modulate_min_scenario(&inst, &s, &plans, 1.0).unwrap();
        assert!((out.plans[0].production[1] - 5.0).abs() < 1e-9);
        assert_eq!(out.plans[0].production[0], 10.0);
        let scen = modulate_per_scenario(&inst, &out, 0, ResidualMode::Summed);
        assert!(check_feasibility(&inst, &out.schedule, &[scen.production])
            .unwrap()
            .is_empty());
    }

    #[test]
    fn earlier_campaign_end_is_modulated_first() {
        let mut demand = vec![50.0; 10];
        demand[1] = 15.0;
        let inst = instance(&[7, 3], demand, 100.0);
        let (s, plans) = start(&inst);
        let out = modulate_min_scenario(&inst, &s, &plans, 1.0).unwrap();
        assert_eq!(out.plans[0].production[1], 10.0);
        assert!((out.plans[1].production[1] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn exhausted_budget_is_infeasible() {
        let mut demand = vec![50.0; 6];
        demand[2] = 0.0;
        let inst = instance(&[4], demand, 3.0);
        let (s, plans) = start(&inst);
        assert!(matches!(
            modulate_min_scenario(&inst, &s, &plans, 1.0),
            Err(ModulationError::Overproduction { step: 2, .. })
        ));
    }
}
