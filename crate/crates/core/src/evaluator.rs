//! Exact feasibility checker and objective. Every heuristic in the crate is
//! tested against this module.

use serde::{Deserialize, Serialize};

use crate::model::{
    derive_campaigns, CampaignSpan, Instance, ModelError, OutageId, PlantTimeline, Production,
    Schedule, TOLERANCE,
};
use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    OutageBounds,
    ReloadBounds,
    Demand,
    Type1Bounds,
    Type2Upper,
    MaxModulation,
    PowerProfile,
    FuelNonneg,
    Amax,
    Smax,
    Separation,
    MaxOffline,
    Resource,
    OfflineCapacity,
    OutageOrder,
}

impl ViolationKind {
    /// Kinds that only depend on the schedule.
    pub fn is_scheduling(self) -> bool {
        use ViolationKind::*;
        matches!(
            self,
            OutageBounds | Separation | MaxOffline | Resource | OfflineCapacity | OutageOrder
        )
    }
}

/// Where a violation happened. Unused coordinates are `None`.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Location {
    pub plant: Option<usize>,
    pub cycle: Option<usize>,
    pub step: Option<usize>,
    pub scenario: Option<usize>,
    pub week: Option<usize>,
    /// Index into the relevant coupling constraint list.
    pub constraint: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub location: Location,
    pub magnitude: f64,
}

impl Violation {
    fn new(kind: ViolationKind, location: Location, magnitude: f64) -> Self {
        let magnitude = if magnitude.is_nan() {
            f64::MAX
        } else {
            magnitude
        };
        Violation {
            kind,
            location,
            magnitude,
        }
    }
}

fn at(plant: usize, cycle: Option<usize>) -> Location {
    Location {
        plant: Some(plant),
        cycle,
        ..Location::default()
    }
}

/// How the residual-fuel term of the objective is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ResidualMode {
    /// Residual fuel summed over scenarios without averaging.
    #[default]
    Summed,
    /// Residual fuel averaged over scenarios like the type-1 term.
    Averaged,
}

impl ResidualMode {
    /// Weight applied to one scenario's residual fuel value.
    pub fn scenario_weight(self, scenarios: usize) -> f64 {
        match self {
            ResidualMode::Summed => 1.0,
            ResidualMode::Averaged => 1.0 / scenarios as f64,
        }
    }
}

/// First step and cycle of every scheduled outage of `plant` that starts
/// inside the horizon, in step order.
fn reload_steps(instance: &Instance, schedule: &Schedule, plant: usize) -> Vec<(usize, usize)> {
    let h = instance.weeks();
    let mut out: Vec<(usize, usize)> = schedule.starts[plant]
        .iter()
        .enumerate()
        .filter_map(|(k, s)| {
            s.filter(|&w| w < h)
                .map(|w| (instance.grid.week_start(w), k))
        })
        .collect();
    out.sort_unstable();
    out
}

/// Fuel trajectory of one plant (`T + 1` entries) for the given production row.
pub fn simulate_plant_fuel(
    instance: &Instance,
    schedule: &Schedule,
    plant: usize,
    production: &[f64],
) -> Vec<f64> {
    let p2 = &instance.type2[plant];
    let d = instance.grid.hours_per_step();
    let t_end = instance.steps();
    let reloads = reload_steps(instance, schedule, plant);
    let mut next_reload = reloads.iter().peekable();
    let mut x = Vec::with_capacity(t_end + 1);
    let mut cur = p2.initial_fuel;
    x.push(cur);
    for (t, &p) in production.iter().enumerate().take(t_end) {
        let mut reloaded = false;
        while let Some(&&(step, k)) = next_reload.peek() {
            if step != t {
                break;
            }
            next_reload.next();
            if !reloaded {
                cur = p2.cycles[k].reload(cur, schedule.refuels[plant][k]);
                reloaded = true;
            }
        }
        if !reloaded {
            cur -= p * d;
        }
        x.push(cur);
    }
    x
}

/// Fuel trajectories `x[i][t]` for one scenario's production.
pub fn simulate_fuel(
    instance: &Instance,
    schedule: &Schedule,
    production: &Production,
) -> Vec<Vec<f64>> {
    (0..instance.type2.len())
        .map(|i| simulate_plant_fuel(instance, schedule, i, &production.type2[i]))
        .collect()
}

fn check_dimensions(
    instance: &Instance,
    schedule: &Schedule,
    productions: &[Production],
) -> Result<(), ModelError> {
    let t = instance.steps();
    let bad = |msg: &str| Err(ModelError::Structural(msg.to_string()));
    if schedule.starts.len() != instance.type2.len()
        || schedule.refuels.len() != instance.type2.len()
    {
        return bad("schedule plant count does not match the instance");
    }
    for (i, p) in instance.type2.iter().enumerate() {
        if schedule.starts[i].len() != p.cycles.len() || schedule.refuels[i].len() != p.cycles.len()
        {
            return bad("schedule cycle count does not match the instance");
        }
    }
    if productions.len() != instance.scenario_count() {
        return bad("one production per scenario is required");
    }
    for prod in productions {
        if prod.type1.len() != instance.type1.len()
            || prod.type2.len() != instance.type2.len()
            || prod
                .type1
                .iter()
                .chain(prod.type2.iter())
                .any(|row| row.len() != t)
        {
            return bad("production dimensions do not match the instance");
        }
    }
    Ok(())
}

fn distinct(ids: &[OutageId]) -> Vec<OutageId> {
    let mut v = ids.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Active weeks of outage `id` when it starts at `start`.
fn active(instance: &Instance, id: OutageId, start: usize, week: usize) -> bool {
    week >= start && week < start + instance.cycle(id).duration
}

fn uses_resource(instance: &Instance, id: OutageId, start: usize, week: usize) -> bool {
    instance
        .cycle(id)
        .resource_weeks(start)
        .any(|r| r.contains(&week))
}

/// Does an outage occupying weeks `[start, start + duration)` intersect `[w0, w1]`?
pub(crate) fn intersects_window(start: usize, duration: usize, window: (usize, usize)) -> bool {
    start <= window.1 && start + duration > window.0
}

/// Smallest amount by which a separation is violated, or `None` when it holds.
pub(crate) fn separation_excess(
    instance: &Instance,
    sep: &crate::model::Separation,
    start_a: usize,
    start_b: usize,
) -> Option<f64> {
    let da = instance.cycle(sep.first).duration;
    let db = instance.cycle(sep.second).duration;
    if !(intersects_window(start_a, da, sep.window) && intersects_window(start_b, db, sep.window)) {
        return None;
    }
    let diff = start_a as i64 - start_b as i64;
    if diff >= sep.min_after || -diff >= sep.min_before {
        return None;
    }
    Some((sep.min_after - diff).min(sep.min_before + diff) as f64)
}

/// Violations of the constraints that only involve the schedule: outage
/// bounds and order, reload bounds and all coupling constraints.
pub fn check_schedule(instance: &Instance, schedule: &Schedule) -> Vec<Violation> {
    use ViolationKind::*;
    let mut out = Vec::new();
    let h = instance.weeks();
    for (i, plant) in instance.type2.iter().enumerate() {
        let mut prev_end: Option<usize> = None;
        let mut gap = false;
        for (k, cycle) in plant.cycles.iter().enumerate() {
            let r = schedule.refuels[i][k];
            match schedule.starts[i][k] {
                None => {
                    gap = true;
                    if cycle.latest.is_some() {
                        out.push(Violation::new(OutageBounds, at(i, Some(k)), 1.0));
                    }
                    if !(r.abs() <= TOLERANCE) {
                        out.push(Violation::new(ReloadBounds, at(i, Some(k)), r.abs()));
                    }
                }
                Some(w) => {
                    if gap {
                        out.push(Violation::new(OutageOrder, at(i, Some(k)), 1.0));
                    }
                    if let Some(e) = prev_end.filter(|&e| w < e) {
                        out.push(Violation::new(OutageOrder, at(i, Some(k)), (e - w) as f64));
                    }
                    if w + cycle.duration > h {
                        out.push(Violation::new(
                            OutageOrder,
                            at(i, Some(k)),
                            (w + cycle.duration - h) as f64,
                        ));
                    }
                    prev_end = Some(w + cycle.duration);
                    if let Some(to) = cycle.earliest.filter(|&to| w < to) {
                        out.push(Violation::new(
                            OutageBounds,
                            at(i, Some(k)),
                            (to - w) as f64,
                        ));
                    }
                    if let Some(ta) = cycle.latest.filter(|&ta| w > ta) {
                        out.push(Violation::new(
                            OutageBounds,
                            at(i, Some(k)),
                            (w - ta) as f64,
                        ));
                    }
                    if !(r >= cycle.min_refuel - TOLERANCE) {
                        out.push(Violation::new(
                            ReloadBounds,
                            at(i, Some(k)),
                            cycle.min_refuel - r,
                        ));
                    } else if !(r <= cycle.max_refuel + TOLERANCE) {
                        out.push(Violation::new(
                            ReloadBounds,
                            at(i, Some(k)),
                            r - cycle.max_refuel,
                        ));
                    }
                }
            }
        }
    }

    for (n, sep) in instance.coupling.separations.iter().enumerate() {
        let (Some(a), Some(b)) = (schedule.start(sep.first), schedule.start(sep.second)) else {
            continue;
        };
        if let Some(excess) = separation_excess(instance, sep, a, b) {
            out.push(Violation::new(
                Separation,
                Location {
                    plant: Some(sep.first.plant),
                    cycle: Some(sep.first.cycle),
                    constraint: Some(n),
                    ..Location::default()
                },
                excess,
            ));
        }
    }

    for (n, c) in instance.coupling.max_offline.iter().enumerate() {
        let count = distinct(&c.outages)
            .iter()
            .filter(|&&id| {
                schedule
                    .start(id)
                    .is_some_and(|s| active(instance, id, s, c.week))
            })
            .count();
        if count > c.limit {
            out.push(Violation::new(
                MaxOffline,
                Location {
                    week: Some(c.week),
                    constraint: Some(n),
                    ..Location::default()
                },
                (count - c.limit) as f64,
            ));
        }
    }

    for (n, c) in instance.coupling.resources.iter().enumerate() {
        let outages = distinct(&c.outages);
        for week in 0..h {
            let count = outages
                .iter()
                .filter(|&&id| {
                    schedule
                        .start(id)
                        .is_some_and(|s| uses_resource(instance, id, s, week))
                })
                .count();
            if count > c.capacity {
                out.push(Violation::new(
                    Resource,
                    Location {
                        week: Some(week),
                        constraint: Some(n),
                        ..Location::default()
                    },
                    (count - c.capacity) as f64,
                ));
            }
        }
    }

    if !instance.coupling.offline_capacity.is_empty() {
        let offline = offline_mask(instance, schedule);
        for (n, c) in instance.coupling.offline_capacity.iter().enumerate() {
            let mut plants = c.plants.clone();
            plants.sort_unstable();
            plants.dedup();
            let mut weeks = c.weeks.clone();
            weeks.sort_unstable();
            weeks.dedup();
            for &week in &weeks {
                for t in instance.grid.steps_of(week) {
                    let total: f64 = plants
                        .iter()
                        .filter(|&&i| offline[i][t])
                        .map(|&i| instance.type2[i].pmax[t])
                        .sum();
                    if total > c.limit + TOLERANCE {
                        out.push(Violation::new(
                            OfflineCapacity,
                            Location {
                                step: Some(t),
                                week: Some(week),
                                constraint: Some(n),
                                ..Location::default()
                            },
                            total - c.limit,
                        ));
                    }
                }
            }
        }
    }
    out
}

/// `mask[i][t]` is true when plant `i` is in some outage at step `t`.
pub fn offline_mask(instance: &Instance, schedule: &Schedule) -> Vec<Vec<bool>> {
    instance
        .type2
        .iter()
        .enumerate()
        .map(|(i, plant)| {
            let mut mask = vec![false; instance.steps()];
            for (k, s) in schedule.starts[i].iter().enumerate() {
                if let Some(w) = *s {
                    for t in instance
                        .grid
                        .steps_of_weeks(w, w + plant.cycles[k].duration)
                    {
                        mask[t] = true;
                    }
                }
            }
            mask
        })
        .collect()
}

/// Production-side checks for one type-2 plant in one scenario: outage
/// zeros, upper bounds, modulation budgets, declining profile, fuel sign,
/// and the fuel bounds around each outage.
pub fn check_type2_plant(
    instance: &Instance,
    schedule: &Schedule,
    timeline: &PlantTimeline,
    plant: usize,
    production: &[f64],
    scenario: Option<usize>,
) -> Vec<Violation> {
    use ViolationKind::*;
    let mut out = Vec::new();
    let p2 = &instance.type2[plant];
    let d = instance.grid.hours_per_step();
    let eps = instance.scenarios.epsilon;
    let x = simulate_plant_fuel(instance, schedule, plant, production);
    let loc = |cycle: Option<usize>, step: Option<usize>| Location {
        plant: Some(plant),
        cycle,
        step,
        scenario,
        ..Location::default()
    };
    for (t, &xt) in x.iter().enumerate() {
        if xt < -TOLERANCE {
            out.push(Violation::new(FuelNonneg, loc(None, Some(t)), -xt));
        }
    }
    for CampaignSpan {
        cycle,
        outage,
        campaign,
    } in &timeline.spans
    {
        if let Some(k) = *cycle {
            let c = &p2.cycles[k];
            for t in outage.clone() {
                if production[t].abs() > TOLERANCE {
                    out.push(Violation::new(
                        Type2Upper,
                        loc(Some(k), Some(t)),
                        production[t].abs(),
                    ));
                }
            }
            let t0 = outage.start;
            if x[t0] > c.max_fuel_before + TOLERANCE {
                out.push(Violation::new(
                    Amax,
                    loc(Some(k), Some(t0)),
                    x[t0] - c.max_fuel_before,
                ));
            }
            if x[t0 + 1] > c.max_fuel_after + TOLERANCE {
                out.push(Violation::new(
                    Smax,
                    loc(Some(k), Some(t0)),
                    x[t0 + 1] - c.max_fuel_after,
                ));
            }
        }
        let limits = p2.campaign(*cycle);
        let mut modulation = 0.0;
        for t in campaign.clone() {
            let p = production[t];
            let pmax = p2.pmax[t];
            let xt = x[t];
            if p < -TOLERANCE {
                out.push(Violation::new(Type2Upper, loc(*cycle, Some(t)), -p));
                continue;
            }
            let upper_ok = p <= pmax + TOLERANCE;
            let px = limits.profile.fraction(xt) * pmax;
            let band_ok = p >= (1.0 - eps) * px - TOLERANCE && p <= (1.0 + eps) * px + TOLERANCE;
            let zero_ok = p.abs() <= TOLERANCE;
            let profile_ok = if (xt - px * d).abs() <= TOLERANCE {
                band_ok || zero_ok
            } else if xt >= px * d {
                band_ok
            } else {
                zero_ok
            };
            let above = xt >= limits.threshold;
            let borderline = (xt - limits.threshold).abs() <= TOLERANCE;
            if above {
                modulation += (pmax - p) * d;
            }
            if borderline {
                if !(upper_ok || profile_ok) {
                    out.push(Violation::new(Type2Upper, loc(*cycle, Some(t)), p - pmax));
                }
            } else if above {
                if !upper_ok {
                    out.push(Violation::new(Type2Upper, loc(*cycle, Some(t)), p - pmax));
                }
            } else if !profile_ok {
                let excess = if zero_ok || (xt < px * d) {
                    p.abs()
                } else if p < (1.0 - eps) * px {
                    (1.0 - eps) * px - p
                } else {
                    p - (1.0 + eps) * px
                };
                out.push(Violation::new(
                    PowerProfile,
                    loc(*cycle, Some(t)),
                    excess.max(TOLERANCE * 2.0),
                ));
            }
        }
        if modulation > limits.max_modulation + TOLERANCE {
            out.push(Violation::new(
                MaxModulation,
                loc(*cycle, None),
                modulation - limits.max_modulation,
            ));
        }
    }
    out
}

/// Demand and type-1 bound checks for one scenario.
fn check_scenario_balance(
    instance: &Instance,
    production: &Production,
    s: usize,
) -> Vec<Violation> {
    use ViolationKind::*;
    let mut out = Vec::new();
    for t in 0..instance.steps() {
        let mut total = 0.0;
        for (j, plant) in instance.type1.iter().enumerate() {
            let p = production.type1[j][t];
            total += p;
            let loc = Location {
                plant: Some(j),
                step: Some(t),
                scenario: Some(s),
                ..Location::default()
            };
            if !(p >= plant.pmin[t][s] - TOLERANCE) {
                out.push(Violation::new(Type1Bounds, loc, plant.pmin[t][s] - p));
            } else if !(p <= plant.pmax[t][s] + TOLERANCE) {
                out.push(Violation::new(Type1Bounds, loc, p - plant.pmax[t][s]));
            }
        }
        total += production.type2.iter().map(|row| row[t]).sum::<f64>();
        let gap = total - instance.scenarios.demand[t][s];
        if !(gap.abs() <= TOLERANCE) {
            out.push(Violation::new(
                Demand,
                Location {
                    step: Some(t),
                    scenario: Some(s),
                    ..Location::default()
                },
                gap.abs(),
            ));
        }
    }
    out
}

/// Every violated constraint of the solution, in canonical order.
///
/// When the schedule itself is structurally broken (overlapping outages,
/// outages past the horizon) only schedule-level violations are reported.
pub fn check_feasibility(
    instance: &Instance,
    schedule: &Schedule,
    productions: &[Production],
) -> Result<Vec<Violation>, ModelError> {
    check_feasibility_with(Exec::default(), instance, schedule, productions)
}

pub fn check_feasibility_with(
    exec: Exec,
    instance: &Instance,
    schedule: &Schedule,
    productions: &[Production],
) -> Result<Vec<Violation>, ModelError> {
    check_dimensions(instance, schedule, productions)?;
    let mut out = check_schedule(instance, schedule);
    if let Ok(timelines) = derive_campaigns(instance, schedule) {
        let per_scenario = exec.map_range(instance.scenario_count(), |s| {
            let prod = &productions[s];
            let mut v = check_scenario_balance(instance, prod, s);
            for (i, tl) in timelines.iter().enumerate() {
                v.extend(check_type2_plant(
                    instance,
                    schedule,
                    tl,
                    i,
                    &prod.type2[i],
                    Some(s),
                ));
            }
            v
        });
        out.extend(per_scenario.into_iter().flatten());
    }
    sort_violations(&mut out);
    Ok(out)
}

pub fn sort_violations(v: &mut [Violation]) {
    v.sort_by(|a, b| (a.kind, a.location).cmp(&(b.kind, b.location)));
}

/// Objective value; feasibility is not required.
pub fn compute_objective(
    instance: &Instance,
    schedule: &Schedule,
    productions: &[Production],
    mode: ResidualMode,
) -> Result<f64, ModelError> {
    check_dimensions(instance, schedule, productions)?;
    Ok(refuel_cost(instance, schedule)
        + productions
            .iter()
            .enumerate()
            .map(|(s, prod)| scenario_cost(instance, schedule, prod, s, mode))
            .sum::<f64>())
}

/// `sum C_{i,k} r(i,k)`
pub fn refuel_cost(instance: &Instance, schedule: &Schedule) -> f64 {
    instance
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
        .sum()
}

/// Scenario `s`'s weighted contribution: averaged type-1 cost minus the
/// weighted residual fuel value.
pub fn scenario_cost(
    instance: &Instance,
    schedule: &Schedule,
    production: &Production,
    s: usize,
    mode: ResidualMode,
) -> f64 {
    let scenarios = instance.scenario_count() as f64;
    let d = instance.grid.hours_per_step();
    let type1: f64 = instance
        .type1
        .iter()
        .zip(&production.type1)
        .map(|(plant, row)| {
            row.iter()
                .enumerate()
                .map(|(t, p)| plant.cost[t][s] * p * d)
                .sum::<f64>()
        })
        .sum();
    let residual: f64 = instance
        .type2
        .iter()
        .enumerate()
        .map(|(i, plant)| {
            let x = simulate_plant_fuel(instance, schedule, i, &production.type2[i]);
            plant.final_fuel_price * x[instance.steps()]
        })
        .sum();
    type1 / scenarios - mode.scenario_weight(instance.scenario_count()) * residual
}
