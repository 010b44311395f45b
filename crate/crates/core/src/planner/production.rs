//! Greedy production for a single plant, ignoring demand: full power while
//! fuel lasts, the declining profile below the threshold, nothing once the
//! profile can no longer be sustained. Refuels are repaired downwards when
//! fuel bounds around an outage break, then raised in small increments
//! while that buys more production.

use crate::model::{row_timeline, Instance, ModelError, PlantTimeline, TOLERANCE};

/// Fraction of the remaining headroom added per refuel increment.
pub const INCREMENT_FRACTION: f64 = 0.02;

const MAX_REPAIRS_PER_CYCLE: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Failure {
    /// Fuel above the bound when outage `cycle` starts.
    Amax { cycle: usize, excess: f64 },
    /// Fuel above the bound right after outage `cycle`.
    Smax { cycle: usize, excess: f64 },
    /// Forced or requested modulation over budget in a campaign.
    Modulation { cycle: Option<usize>, excess: f64 },
}

/// Production and fuel of one plant for the demand-free scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantPlan {
    /// `[t]`
    pub production: Vec<f64>,
    /// `[t]`, `T + 1` entries.
    pub fuel: Vec<f64>,
    /// `[k]`
    pub refuels: Vec<f64>,
    /// Modulation used per timeline span, in power-hours.
    pub modulation: Vec<f64>,
    pub feasible: bool,
}

impl PlantPlan {
    pub fn final_fuel(&self) -> f64 {
        self.fuel[self.fuel.len() - 1]
    }
}

struct Simulation {
    production: Vec<f64>,
    fuel: Vec<f64>,
    modulation: Vec<f64>,
    failure: Option<Failure>,
}

/// Level at a campaign step with fuel `x`: full power (minus any requested
/// modulation) above the threshold, the profile target below it when there
/// is enough fuel for one step at that target, zero otherwise.
#[inline]
pub fn step_level(
    x: f64,
    pmax: f64,
    modulation: f64,
    threshold: f64,
    fraction: f64,
    d: f64,
) -> f64 {
    if x >= threshold {
        (pmax - modulation).min(x / d).max(0.0)
    } else {
        let px = fraction * pmax;
        if x >= px * d {
            px
        } else {
            0.0
        }
    }
}

fn simulate(
    instance: &Instance,
    plant: usize,
    timeline: &PlantTimeline,
    refuels: &[f64],
    modulation: &[f64],
) -> Simulation {
    let p2 = &instance.type2[plant];
    let d = instance.grid.hours_per_step();
    let t_end = instance.steps();
    let mut production = vec![0.0; t_end];
    let mut fuel = vec![0.0; t_end + 1];
    let mut used = vec![0.0; timeline.spans.len()];
    let mut failure = None;
    let mut x = p2.initial_fuel;
    fuel[0] = x;
    for (n, span) in timeline.spans.iter().enumerate() {
        if let Some(k) = span.cycle {
            let c = &p2.cycles[k];
            let t0 = span.outage.start;
            for t in span.outage.clone() {
                if t == t0 {
                    if failure.is_none() && x > c.max_fuel_before + TOLERANCE {
                        failure = Some(Failure::Amax {
                            cycle: k,
                            excess: x - c.max_fuel_before,
                        });
                    }
                    x = c.reload(x, refuels[k]);
                    if failure.is_none() && x > c.max_fuel_after + TOLERANCE {
                        failure = Some(Failure::Smax {
                            cycle: k,
                            excess: x - c.max_fuel_after,
                        });
                    }
                }
                fuel[t + 1] = x;
            }
        }
        let limits = p2.campaign(span.cycle);
        for t in span.campaign.clone() {
            let pmax = p2.pmax[t];
            let m = modulation.get(t).copied().unwrap_or(0.0);
            let p = step_level(x, pmax, m, limits.threshold, limits.profile.fraction(x), d);
            if x >= limits.threshold {
                used[n] += (pmax - p) * d;
            }
            production[t] = p;
            x -= p * d;
            fuel[t + 1] = x;
        }
        if failure.is_none() && used[n] > limits.max_modulation + TOLERANCE {
            failure = Some(Failure::Modulation {
                cycle: span.cycle,
                excess: used[n] - limits.max_modulation,
            });
        }
    }
    Simulation {
        production,
        fuel,
        modulation: used,
        failure,
    }
}

fn plan_from(sim: Simulation, refuels: Vec<f64>) -> PlantPlan {
    PlantPlan {
        feasible: sim.failure.is_none(),
        production: sim.production,
        fuel: sim.fuel,
        modulation: sim.modulation,
        refuels,
    }
}

/// Refuels clamped into their bounds for scheduled outages and zeroed for
/// unscheduled ones.
fn normalized_refuels(
    instance: &Instance,
    plant: usize,
    row: &[Option<usize>],
    refuels: &[f64],
) -> Vec<f64> {
    instance.type2[plant]
        .cycles
        .iter()
        .enumerate()
        .map(|(k, c)| match row[k] {
            Some(_) => refuels[k].clamp(c.min_refuel, c.max_refuel),
            None => 0.0,
        })
        .collect()
}

/// Lowers the latest reducible refuel strictly before `cycle` by up to
/// `amount`. Returns false when nothing can be reduced.
fn reduce_before(
    instance: &Instance,
    plant: usize,
    refuels: &mut [f64],
    cycle: usize,
    amount: f64,
) -> bool {
    let cycles = &instance.type2[plant].cycles;
    for j in (0..cycle).rev() {
        let room = refuels[j] - cycles[j].min_refuel;
        if room > TOLERANCE {
            refuels[j] -= room.min(amount + TOLERANCE);
            return true;
        }
    }
    false
}

/// Below the threshold a plant holding less than one step at the profile
/// level stops producing and keeps its fuel until the next outage. Raises
/// the previous refuel so that the campaign reaches that point at the
/// threshold instead, where the fuel can still be burnt.
fn raise_stalled(
    instance: &Instance,
    plant: usize,
    timeline: &PlantTimeline,
    sim: &Simulation,
    refuels: &mut [f64],
    cycle: usize,
) -> bool {
    let Some(n) = timeline.spans.iter().position(|s| s.cycle == Some(cycle)) else {
        return false;
    };
    let Some(prev) = n.checked_sub(1).map(|m| &timeline.spans[m]) else {
        return false;
    };
    let Some(j) = prev.cycle else { return false };
    let c = &instance.type2[plant].cycles[j];
    let x_end = sim.fuel[prev.campaign.end];
    if x_end >= c.campaign.threshold {
        return false;
    }
    let up = c.campaign.threshold - x_end + TOLERANCE;
    let after = sim.fuel[prev.outage.start + 1];
    if refuels[j] + up <= c.max_refuel && after + up <= c.max_fuel_after {
        refuels[j] += up;
        return true;
    }
    false
}

/// A campaign step above the threshold with less than one step of fuel
/// at the requested level produces less than asked, which counts as
/// modulation. Moves the refuel of cycle `k` so that the first such step
/// either holds a full step of fuel or falls below the threshold.
fn shift_forced_step(
    instance: &Instance,
    plant: usize,
    timeline: &PlantTimeline,
    sim: &Simulation,
    refuels: &mut [f64],
    k: usize,
    modulation: &[f64],
) -> bool {
    let p2 = &instance.type2[plant];
    let c = &p2.cycles[k];
    let d = instance.grid.hours_per_step();
    let Some(span) = timeline.spans.iter().find(|s| s.cycle == Some(k)) else {
        return false;
    };
    let threshold = c.campaign.threshold;
    let forced = span.campaign.clone().find(|&t| {
        let x = sim.fuel[t];
        let want = p2.pmax[t] - modulation.get(t).copied().unwrap_or(0.0);
        x >= threshold && x < want * d - TOLERANCE
    });
    let Some(t) = forced else { return false };
    let x = sim.fuel[t];
    let want = p2.pmax[t] - modulation.get(t).copied().unwrap_or(0.0);
    let up = want * d - x + TOLERANCE;
    let after = sim.fuel[span.outage.start + 1];
    if refuels[k] + up <= c.max_refuel && after + up <= c.max_fuel_after {
        refuels[k] += up;
        return true;
    }
    let down = x - threshold + TOLERANCE;
    if refuels[k] - down >= c.min_refuel {
        refuels[k] -= down;
        return true;
    }
    false
}

/// Pure simulation of the row with the given refuels and requested
/// modulation; no repair.
pub fn simulate_plan(
    instance: &Instance,
    plant: usize,
    row: &[Option<usize>],
    refuels: &[f64],
    modulation: &[f64],
) -> Result<PlantPlan, ModelError> {
    let timeline = row_timeline(instance, plant, row)?;
    let refuels = normalized_refuels(instance, plant, row, refuels);
    Ok(plan_from(
        simulate(instance, plant, &timeline, &refuels, modulation),
        refuels,
    ))
}

/// Forward simulation with backtracking refuel repair. `modulation[t]` is
/// the requested reduction below full power (may be empty).
pub fn plan_production(
    instance: &Instance,
    plant: usize,
    row: &[Option<usize>],
    refuels: &[f64],
    modulation: &[f64],
) -> Result<PlantPlan, ModelError> {
    let timeline = row_timeline(instance, plant, row)?;
    Ok(plan_with_timeline(
        instance, plant, row, &timeline, refuels, modulation,
    ))
}

fn plan_with_timeline(
    instance: &Instance,
    plant: usize,
    row: &[Option<usize>],
    timeline: &PlantTimeline,
    refuels: &[f64],
    modulation: &[f64],
) -> PlantPlan {
    let cycles = &instance.type2[plant].cycles;
    let mut refuels = normalized_refuels(instance, plant, row, refuels);
    let cap = MAX_REPAIRS_PER_CYCLE * cycles.len().max(1);
    for _ in 0..cap {
        let sim = simulate(instance, plant, timeline, &refuels, modulation);
        let repaired = match sim.failure {
            None => return plan_from(sim, refuels),
            Some(Failure::Modulation { cycle: Some(k), .. }) => {
                shift_forced_step(instance, plant, timeline, &sim, &mut refuels, k, modulation)
            }
            Some(Failure::Modulation { cycle: None, .. }) => false,
            Some(Failure::Amax { cycle, excess }) => {
                reduce_before(instance, plant, &mut refuels, cycle, excess)
                    || raise_stalled(instance, plant, timeline, &sim, &mut refuels, cycle)
            }
            Some(Failure::Smax { cycle, excess }) => {
                let room = refuels[cycle] - cycles[cycle].min_refuel;
                if room > TOLERANCE {
                    refuels[cycle] -= room.min(excess + TOLERANCE);
                    true
                } else {
                    let q = cycles[cycle].keep_ratio;
                    q > 0.0 && reduce_before(instance, plant, &mut refuels, cycle, excess / q)
                }
            }
        };
        if !repaired {
            return plan_from(sim, refuels);
        }
    }
    let sim = simulate(instance, plant, timeline, &refuels, modulation);
    let mut plan = plan_from(sim, refuels);
    plan.feasible = false;
    plan
}

fn full_production_from(
    instance: &Instance,
    plant: usize,
    timeline: &PlantTimeline,
    plan: &PlantPlan,
    cycle: usize,
) -> bool {
    let pmax = &instance.type2[plant].pmax;
    timeline
        .spans
        .iter()
        .filter(|s| s.cycle.is_some_and(|k| k >= cycle))
        .flat_map(|s| s.campaign.clone())
        .all(|t| plan.production[t] >= pmax[t] - TOLERANCE)
}

/// Raises refuels, last campaign first, in steps of a fixed fraction of the
/// remaining headroom while the downstream campaigns are short of fuel. An
/// increment that breaks feasibility is dropped and the next campaign is
/// tried. Never lowers a refuel.
pub fn increase_refuels(
    instance: &Instance,
    plant: usize,
    row: &[Option<usize>],
    plan: PlantPlan,
    modulation: &[f64],
) -> Result<PlantPlan, ModelError> {
    let timeline = row_timeline(instance, plant, row)?;
    Ok(increase_with_timeline(
        instance, plant, row, &timeline, plan, modulation,
    ))
}

fn increase_with_timeline(
    instance: &Instance,
    plant: usize,
    row: &[Option<usize>],
    timeline: &PlantTimeline,
    mut plan: PlantPlan,
    modulation: &[f64],
) -> PlantPlan {
    if !plan.feasible {
        return plan;
    }
    let cycles = &instance.type2[plant].cycles;
    let scheduled = row.iter().take_while(|s| s.is_some()).count();
    for k in (0..scheduled).rev() {
        loop {
            if full_production_from(instance, plant, timeline, &plan, k) {
                break;
            }
            let step = INCREMENT_FRACTION * (cycles[k].max_refuel - plan.refuels[k]);
            if step < TOLERANCE {
                break;
            }
            let mut refuels = plan.refuels.clone();
            refuels[k] += step;
            let sim = simulate(instance, plant, timeline, &refuels, modulation);
            if sim.failure.is_some() {
                break;
            }
            plan = plan_from(sim, refuels);
        }
    }
    plan
}

/// Repair then raise: the full planner used after scheduling and inside
/// the local search.
pub fn plan_plant(
    instance: &Instance,
    plant: usize,
    row: &[Option<usize>],
    refuels: &[f64],
) -> Result<PlantPlan, ModelError> {
    let timeline = row_timeline(instance, plant, row)?;
    let plan = plan_with_timeline(instance, plant, row, &timeline, refuels, &[]);
    Ok(increase_with_timeline(
        instance,
        plant,
        row,
        &timeline,
        plan,
        &[],
    ))
}
