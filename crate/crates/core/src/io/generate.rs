//! Random desk-scale instances built around a feasible witness.
//!
//! The witness schedule and its production come first; fuel bounds,
//! modulation budgets, demand and coupling constraints are then sampled so
//! that the witness satisfies all of them.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::check_feasibility;
use crate::model::{
    CampaignLimits, CouplingConstraints, Cycle, Instance, MaxOffline, OfflineCapacity, OutageId,
    PowerProfile, Production, ResourceLimit, ResourceWindow, ScenarioSet, Schedule, Separation,
    Solution, TimeGrid, Type1Plant, Type2Plant,
};
use crate::planner::{dispatch_type1, simulate_plan, type2_room};

/// Demand as a fraction of the fleet's type-2 capacity: a seasonal sine of
/// relative `amplitude` around `base`, plus relative uniform `noise`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandProfile {
    pub base: f64,
    pub amplitude: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// Type-2 plants.
    pub plants: usize,
    /// Flexible plants.
    pub flexible: usize,
    pub cycles: usize,
    pub weeks: usize,
    pub steps_per_week: usize,
    pub scenarios: usize,
    pub demand: DemandProfile,
    /// Fraction in `[0, 1]` scaling how many coupling constraints and
    /// outage bounds are sampled.
    pub density: f64,
    /// Steps where the witness runs modulated and demand sits just above
    /// it, so that full power overproduces.
    pub overproduction_steps: usize,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            plants: 4,
            flexible: 3,
            cycles: 2,
            weeks: 20,
            steps_per_week: 7,
            scenarios: 3,
            demand: DemandProfile {
                base: 0.95,
                amplitude: 0.1,
                noise: 0.03,
            },
            density: 0.5,
            overproduction_steps: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerateError {
    #[error("invalid generator parameters: {0}")]
    Params(String),
    #[error("generated witness is infeasible: {0}")]
    Witness(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub instance: Instance,
    pub witness: Solution,
}

impl GeneratorParams {
    fn check(&self) -> Result<(), GenerateError> {
        let bad = |m: &str| Err(GenerateError::Params(m.to_string()));
        if self.plants == 0
            || self.flexible == 0
            || self.cycles == 0
            || self.steps_per_week == 0
            || self.scenarios == 0
        {
            return bad("all counts must be at least 1");
        }
        if self.weeks < 2 {
            return bad("at least two weeks are needed to place an outage after a campaign");
        }
        if !(0.0..=1.0).contains(&self.density) {
            return bad("density must lie in [0, 1]");
        }
        let d = &self.demand;
        if !(d.base > 0.0
            && d.amplitude >= 0.0
            && d.noise >= 0.0
            && d.base.is_finite()
            && d.amplitude < 1.0)
        {
            return bad("demand needs base > 0 and 0 <= amplitude < 1, noise >= 0");
        }
        if self.overproduction_steps > self.weeks * self.steps_per_week {
            return bad("more overproduction steps than time steps");
        }
        Ok(())
    }
}

struct PlantDraft {
    pmax: f64,
    row: Vec<Option<usize>>,
    durations: Vec<usize>,
    refuels: Vec<f64>,
    keep_ratio: f64,
    threshold: f64,
    floor: f64,
    refuel_cost: f64,
}

fn profile(threshold: f64, floor: f64) -> PowerProfile {
    PowerProfile::new(vec![
        (0.0, floor),
        (0.5 * threshold, 0.5 * (1.0 + floor) + 0.05),
        (threshold, 1.0),
    ])
}

fn limits(threshold: f64, floor: f64, max_modulation: f64) -> CampaignLimits {
    CampaignLimits {
        threshold,
        max_modulation,
        profile: profile(threshold, floor),
    }
}

/// Builds an instance and a witness solution; a pure function of `params`.
pub fn generate_instance(params: &GeneratorParams) -> Result<Generated, GenerateError> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let spw = params.steps_per_week;
    let h = params.weeks;
    let d = 168.0 / spw as f64;
    let grid = TimeGrid::uniform(h, spw, d).map_err(|e| GenerateError::Params(e.to_string()))?;
    let t_end = grid.steps();
    let s_count = params.scenarios;
    let k_count = params.cycles;

    // flexible price levels come first: refuel costs are set relative to them
    let scenario_price: Vec<f64> = (0..s_count).map(|_| rng.gen_range(30.0..60.0)).collect();
    let plant_markup: Vec<f64> = (0..params.flexible)
        .map(|_| rng.gen_range(1.0..1.03))
        .collect();
    let mean_price = scenario_price.iter().sum::<f64>() / s_count as f64;

    // witness outages and refuels
    let camp = (h / (k_count + 1)).clamp(2, 8);
    let mut drafts = Vec::with_capacity(params.plants);
    for _ in 0..params.plants {
        let pmax = rng.gen_range(80.0..120.0);
        let week_energy = pmax * d * spw as f64;
        let mut cursor = rng.gen_range(1..=camp.min(6));
        let mut row = vec![None; k_count];
        let mut durations = Vec::with_capacity(k_count);
        for slot in row.iter_mut() {
            let da = rng.gen_range(1..=3usize).min(h);
            durations.push(da);
            if cursor + da <= h {
                *slot = Some(cursor);
            }
            cursor += da + rng.gen_range((camp / 2).max(1)..=camp + camp / 2);
        }
        // make sure an out-of-horizon gap never precedes a scheduled outage
        if let Some(first_gap) = row.iter().position(Option::is_none) {
            for s in &mut row[first_gap..] {
                *s = None;
            }
        }
        let refuels = (0..k_count)
            .map(|k| {
                let start = row[k].map(|w| w + durations[k]).unwrap_or(h);
                let end = row.get(k + 1).copied().flatten().unwrap_or(h);
                let weeks = end.saturating_sub(start).max(1) as f64;
                (weeks * week_energy * rng.gen_range(0.7..1.1)).round()
            })
            .collect();
        drafts.push(PlantDraft {
            pmax,
            row,
            durations,
            refuels,
            keep_ratio: rng.gen_range(0.3..0.6),
            threshold: week_energy * rng.gen_range(0.5..1.5),
            floor: rng.gen_range(0.3..0.5),
            refuel_cost: mean_price * rng.gen_range(0.3..0.5),
        });
    }

    // initial fuel covers most of the first campaign
    let initial_fuel: Vec<f64> = drafts
        .iter()
        .map(|p| {
            let weeks = p.row[0].unwrap_or(h) as f64;
            (weeks * p.pmax * d * spw as f64 * rng.gen_range(0.8..1.2)).round()
        })
        .collect();

    // provisional instance with loose bounds, used to simulate the witness
    let loose_cycle = |p: &PlantDraft, k: usize| Cycle {
        duration: p.durations[k],
        earliest: None,
        latest: None,
        min_refuel: 0.0,
        max_refuel: f64::MAX,
        keep_ratio: p.keep_ratio,
        reload_offset: 0.0,
        max_fuel_before: f64::MAX,
        max_fuel_after: f64::MAX,
        refuel_cost: p.refuel_cost,
        resource_windows: vec![],
        campaign: limits(p.threshold, p.floor, f64::MAX),
    };
    let mut type2: Vec<Type2Plant> = drafts
        .iter()
        .zip(&initial_fuel)
        .map(|(p, &xi)| Type2Plant {
            pmax: vec![p.pmax; t_end],
            initial_fuel: xi,
            final_fuel_price: 0.8 * p.refuel_cost,
            initial_campaign: limits(p.threshold, p.floor, f64::MAX),
            cycles: (0..k_count).map(|k| loose_cycle(p, k)).collect(),
        })
        .collect();
    let mut instance = Instance {
        grid: grid.clone(),
        type1: vec![],
        type2: type2.clone(),
        scenarios: ScenarioSet {
            count: s_count,
            demand: vec![vec![0.0; s_count]; t_end],
            epsilon: 0.05,
        },
        coupling: CouplingConstraints::default(),
    };

    let simulate = |instance: &Instance, mods: &[Vec<f64>]| {
        drafts
            .iter()
            .enumerate()
            .map(|(i, p)| {
                simulate_plan(instance, i, &p.row, &p.refuels, &mods[i])
                    .expect("witness rows are ordered")
            })
            .collect::<Vec<_>>()
    };
    let mut mods = vec![vec![0.0; t_end]; params.plants];
    let full = simulate(&instance, &mods);

    // modulated witness steps: some plant runs below full power there
    let mut over_steps: Vec<usize> = Vec::new();
    let mut steps: Vec<usize> = (0..t_end).collect();
    steps.shuffle(&mut rng);
    for &t in &steps {
        if over_steps.len() == params.overproduction_steps {
            break;
        }
        let producing: Vec<usize> = (0..params.plants)
            .filter(|&i| {
                full[i].production[t] >= drafts[i].pmax - 1e-9
                    && full[i].fuel[t] >= drafts[i].threshold
            })
            .collect();
        if let Some(&i) = producing.choose(&mut rng) {
            mods[i][t] = (drafts[i].pmax * rng.gen_range(0.2..0.5)).round();
            over_steps.push(t);
        }
    }
    if over_steps.len() < params.overproduction_steps {
        return Err(GenerateError::Params(
            "not enough full-power steps for the requested overproduction".into(),
        ));
    }
    over_steps.sort_unstable();
    let plans = simulate(&instance, &mods);

    // fuel bounds, reload ranges and modulation budgets around the witness
    for (i, (plant, draft)) in type2.iter_mut().zip(&drafts).enumerate() {
        let plan = &plans[i];
        let week_energy = draft.pmax * d * spw as f64;
        let timeline = crate::model::row_timeline(&instance, i, &draft.row).expect("ordered row");
        let peak = plan.fuel.iter().copied().fold(0.0, f64::max);
        for (k, c) in plant.cycles.iter_mut().enumerate() {
            let r = draft.refuels[k];
            c.min_refuel = (r * rng.gen_range(0.3..0.7)).round();
            c.max_refuel = (r * rng.gen_range(1.2..1.6)).round();
            let (before, after) = match draft.row[k] {
                Some(w) => {
                    let t0 = grid.week_start(w);
                    (plan.fuel[t0], plan.fuel[t0 + 1])
                }
                None => (peak, peak + c.max_refuel),
            };
            c.max_fuel_before = (before + week_energy * rng.gen_range(0.5..2.0)).round();
            c.max_fuel_after = (after + week_energy * rng.gen_range(0.5..2.0)).round();
            let windows = if rng.gen_bool(0.5) {
                vec![ResourceWindow {
                    offset: 0,
                    weeks: c.duration,
                }]
            } else {
                vec![ResourceWindow {
                    offset: -1,
                    weeks: c.duration + 1,
                }]
            };
            c.resource_windows = windows;
        }
        for (n, span) in timeline.spans.iter().enumerate() {
            let energy: f64 = span.campaign.clone().map(|t| plant.pmax[t] * d).sum();
            let budget = (plan.modulation[n] + energy * rng.gen_range(0.15..0.35)).ceil();
            match span.cycle {
                None => plant.initial_campaign.max_modulation = budget,
                Some(k) => plant.cycles[k].campaign.max_modulation = budget,
            }
        }
        // cycles the witness leaves out never get a campaign span
        for k in timeline.spans.len().saturating_sub(1)..k_count {
            if draft.row[k].is_none() {
                plant.cycles[k].campaign.max_modulation = (week_energy * camp as f64 * 0.25).ceil();
            }
        }
    }

    // flexible plants
    let witness_total: Vec<f64> = (0..t_end)
        .map(|t| plans.iter().map(|p| p.production[t]).sum())
        .collect();
    let capacity2: f64 = drafts.iter().map(|p| p.pmax).sum();
    let peak_demand =
        capacity2 * params.demand.base * (1.0 + params.demand.amplitude + params.demand.noise);
    let flex_total = peak_demand * rng.gen_range(1.3..1.5);
    let shares: Vec<f64> = (0..params.flexible)
        .map(|_| rng.gen_range(0.5..1.5))
        .collect();
    let share_sum: f64 = shares.iter().sum();
    let phase = rng.gen_range(0.0..2.0 * PI);
    let type1: Vec<Type1Plant> = shares
        .iter()
        .enumerate()
        .map(|(j, &share)| {
            let pmax = (flex_total * share / share_sum).round();
            let pmin = if j > 0 && rng.gen_bool(0.25) {
                (pmax * rng.gen_range(0.0..0.05)).round()
            } else {
                0.0
            };
            let cost = (0..t_end)
                .map(|t| {
                    let season = 1.0 + 0.1 * (2.0 * PI * t as f64 / t_end as f64 + phase).sin();
                    scenario_price
                        .iter()
                        .map(|p| p * plant_markup[j] * season)
                        .collect()
                })
                .collect();
            Type1Plant {
                pmin: vec![vec![pmin; s_count]; t_end],
                pmax: vec![vec![pmax; s_count]; t_end],
                cost,
            }
        })
        .collect();
    let pmin_sum: f64 = type1.iter().map(|p| p.pmin[0][0]).sum();
    let pmax_sum: f64 = type1.iter().map(|p| p.pmax[0][0]).sum();

    let dp = params.demand;
    let demand: Vec<Vec<f64>> = (0..t_end)
        .map(|t| {
            let lo = witness_total[t] + pmin_sum;
            let hi = witness_total[t] + pmax_sum;
            (0..s_count)
                .map(|s| {
                    if over_steps.binary_search(&t).is_ok() {
                        return (lo + rng.gen_range(0.0..1.0)).min(hi);
                    }
                    let season =
                        (2.0 * PI * t as f64 / t_end as f64 + phase + 0.3 * s as f64).sin();
                    let raw = capacity2
                        * dp.base
                        * (1.0 + dp.amplitude * season + dp.noise * rng.gen_range(-1.0..1.0));
                    raw.clamp(lo, hi)
                })
                .collect()
        })
        .collect();

    // outage bounds and coupling constraints around the witness
    let mut schedule = Schedule {
        starts: drafts.iter().map(|p| p.row.clone()).collect(),
        refuels: drafts
            .iter()
            .map(|p| {
                p.row
                    .iter()
                    .zip(&p.refuels)
                    .map(|(s, &r)| if s.is_some() { r } else { 0.0 })
                    .collect()
            })
            .collect(),
    };
    let scheduled: Vec<OutageId> = schedule.scheduled_ids().collect();
    let rho = params.density;
    for &id in &scheduled {
        if rng.gen_bool(rho) {
            let w = schedule.start(id).expect("scheduled");
            let c = &mut type2[id.plant].cycles[id.cycle];
            c.earliest = Some(w.saturating_sub(rng.gen_range(0..=3)));
            c.latest = Some((w + rng.gen_range(0..=3)).min(h - c.duration));
        }
    }
    instance.type2 = type2;
    let coupling = sample_coupling(&mut rng, &instance, &schedule, &scheduled, rho);

    instance.type1 = type1;
    instance.scenarios.demand = demand;
    instance.coupling = coupling;
    instance
        .validate()
        .map_err(|e| GenerateError::Witness(e.to_string()))?;

    for (i, p) in plans.iter().enumerate() {
        schedule.refuels[i] = p.refuels.clone();
    }
    let productions: Vec<Production> = (0..s_count)
        .map(|s| {
            let mut type1 = vec![vec![0.0; t_end]; instance.type1.len()];
            for t in 0..t_end {
                debug_assert!(witness_total[t] <= type2_room(&instance, t, s) + 1e-6);
                let (levels, _) = dispatch_type1(&instance, t, s, witness_total[t]);
                for (j, p) in levels.into_iter().enumerate() {
                    type1[j][t] = p;
                }
            }
            Production {
                type1,
                type2: plans.iter().map(|p| p.production.clone()).collect(),
            }
        })
        .collect();
    let violations = check_feasibility(&instance, &schedule, &productions)
        .map_err(|e| GenerateError::Witness(e.to_string()))?;
    if let Some(v) = violations.first() {
        return Err(GenerateError::Witness(format!(
            "{:?} at {:?}",
            v.kind, v.location
        )));
    }
    Ok(Generated {
        instance,
        witness: Solution {
            schedule,
            production: productions,
        },
    })
}

fn sample_coupling(
    rng: &mut ChaCha8Rng,
    instance: &Instance,
    schedule: &Schedule,
    scheduled: &[OutageId],
    rho: f64,
) -> CouplingConstraints {
    let h = instance.weeks();
    let plants = instance.type2.len();
    let mut out = CouplingConstraints::default();
    let count = |rng: &mut ChaCha8Rng, scale: f64| {
        let x = rho * scale;
        x.floor() as usize + usize::from(rng.gen_bool(x.fract()))
    };
    let all: Vec<OutageId> = instance.outage_ids().collect();
    let start = |id: OutageId| schedule.start(id);

    let pairs: Vec<(OutageId, OutageId)> = scheduled
        .iter()
        .flat_map(|&a| {
            scheduled
                .iter()
                .filter(move |b| b.plant > a.plant)
                .map(move |&b| (a, b))
        })
        .collect();
    for _ in 0..count(rng, plants as f64) {
        let Some(&(a, b)) = pairs.choose(rng) else {
            break;
        };
        let (wa, wb) = (start(a).expect("scheduled"), start(b).expect("scheduled"));
        let diff = wa as i64 - wb as i64;
        let (min_after, min_before) = if diff >= 0 {
            (diff - rng.gen_range(0..=2), rng.gen_range(1..=5))
        } else {
            (rng.gen_range(1..=5), -diff - rng.gen_range(0..=2))
        };
        let lo = wa.min(wb).saturating_sub(rng.gen_range(0..=4));
        let hi = (wa.max(wb) + rng.gen_range(0..=4)).min(h - 1);
        out.separations.push(Separation {
            first: a,
            second: b,
            min_after,
            min_before,
            window: (lo, hi),
        });
    }

    for _ in 0..count(rng, h as f64 / 2.0) {
        let week = rng.gen_range(0..h);
        let size = rng.gen_range(2..=all.len().clamp(2, 5)).min(all.len());
        let outages: Vec<OutageId> = all.choose_multiple(rng, size).copied().collect();
        let active = outages
            .iter()
            .filter(|&&id| {
                start(id).is_some_and(|s| week >= s && week < s + instance.cycle(id).duration)
            })
            .count();
        out.max_offline.push(MaxOffline {
            week,
            outages,
            limit: active + usize::from(rng.gen_bool(0.5)),
        });
    }

    for _ in 0..count(rng, 2.0) {
        let size = rng.gen_range(2..=all.len().clamp(2, 6)).min(all.len());
        let outages: Vec<OutageId> = all.choose_multiple(rng, size).copied().collect();
        let peak = (0..h)
            .map(|w| {
                outages
                    .iter()
                    .filter(|&&id| {
                        start(id).is_some_and(|s| {
                            instance.cycle(id).resource_weeks(s).any(|r| r.contains(&w))
                        })
                    })
                    .count()
            })
            .max()
            .unwrap_or(0);
        out.resources.push(ResourceLimit {
            outages,
            capacity: peak,
        });
    }

    let offline = crate::evaluator::offline_mask(instance, schedule);
    for _ in 0..count(rng, 2.0) {
        let size = rng.gen_range(2..=plants.max(2)).min(plants);
        let members: Vec<usize> = (0..plants)
            .collect::<Vec<_>>()
            .choose_multiple(rng, size)
            .copied()
            .collect();
        let len = rng.gen_range(3..=8).min(h);
        let first = rng.gen_range(0..=h - len);
        let weeks: Vec<usize> = (first..first + len).collect();
        let peak = weeks
            .iter()
            .flat_map(|&w| instance.grid.steps_of(w))
            .map(|t| {
                members
                    .iter()
                    .filter(|&&i| offline[i][t])
                    .map(|&i| instance.type2[i].pmax[t])
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        out.offline_capacity.push(OfflineCapacity {
            plants: members,
            limit: peak.ceil(),
            weeks,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_params() {
        let p = GeneratorParams {
            weeks: 1,
            ..GeneratorParams::default()
        };
        assert!(matches!(
            generate_instance(&p),
            Err(GenerateError::Params(_))
        ));
        let p = GeneratorParams {
            density: 1.5,
            ..GeneratorParams::default()
        };
        assert!(matches!(
            generate_instance(&p),
            Err(GenerateError::Params(_))
        ));
    }

    #[test]
    fn default_dimensions() {
        let g = generate_instance(&GeneratorParams::default()).unwrap();
        assert_eq!(g.instance.type2.len(), 4);
        assert_eq!(g.instance.steps(), 140);
        assert_eq!(g.instance.scenario_count(), 3);
    }
}
