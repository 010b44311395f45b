//! Cheap fuel estimates used while searching for a schedule, and the
//! surrogate objective (estimated offline type-2 capacity).

use crate::model::{Instance, Schedule, TimeGrid, Type2Plant};

/// `beta[h]`: fuel burnt at full power during weeks `0..h`. Has `H + 1` entries.
pub fn accumulate_beta(plant: &Type2Plant, grid: &TimeGrid) -> Vec<f64> {
    let d = grid.hours_per_step();
    let mut beta = Vec::with_capacity(grid.weeks() + 1);
    let mut acc = 0.0;
    beta.push(acc);
    for h in 0..grid.weeks() {
        acc += d * grid.steps_of(h).map(|t| plant.pmax[t]).sum::<f64>();
        beta.push(acc);
    }
    beta
}

/// Pre-outage estimate adjusted for the declining profile: identity above
/// the threshold, linear down to zero at `-threshold`.
#[inline]
pub fn adjusted_fuel(raw: f64, threshold: f64) -> f64 {
    (raw + 0.5 * (2.0 * threshold).min(threshold - raw).max(0.0)).max(0.0)
}

/// Average fuel burnt per week at full power.
pub fn weekly_rate(plant: &Type2Plant, grid: &TimeGrid) -> f64 {
    plant.pmax.iter().sum::<f64>() * grid.hours_per_step() / grid.weeks() as f64
}

/// Estimates for one plant, indexed by cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct FuelRow {
    /// Fuel used in the campaign before each outage.
    pub used: Vec<f64>,
    /// Raw estimate before each outage.
    pub raw_before: Vec<f64>,
    /// Profile-adjusted estimate before each outage.
    pub before: Vec<f64>,
    /// Estimate right after each outage.
    pub after: Vec<f64>,
}

/// Estimates for the whole fleet.
#[derive(Debug, Clone, PartialEq)]
pub struct FuelEstimate {
    pub beta: Vec<Vec<f64>>,
    pub rows: Vec<FuelRow>,
    pub alpha: Vec<f64>,
    /// Last scheduled outage per plant.
    pub last: Vec<Option<usize>>,
}

/// Walks the cycles of one plant. Unscheduled outages get zero estimates.
pub fn estimate_fuel_chain(
    plant: &Type2Plant,
    row: &[Option<usize>],
    refuels: &[f64],
    beta: &[f64],
) -> FuelRow {
    let n = plant.cycles.len();
    let mut out = FuelRow {
        used: vec![0.0; n],
        raw_before: vec![0.0; n],
        before: vec![0.0; n],
        after: vec![0.0; n],
    };
    let mut prev_after = plant.initial_fuel;
    let mut prev_end = 0usize;
    for (k, cycle) in plant.cycles.iter().enumerate() {
        let Some(start) = row[k] else { break };
        let used = beta[start] - beta[prev_end.min(start)];
        let raw = prev_after - used;
        let threshold = plant.campaign(k.checked_sub(1)).threshold;
        let before = adjusted_fuel(raw, threshold);
        let after = cycle.reload(before, refuels[k]);
        out.used[k] = used;
        out.raw_before[k] = raw;
        out.before[k] = before;
        out.after[k] = after;
        prev_after = after;
        prev_end = start + cycle.duration;
    }
    out
}

pub fn estimate_fuel(instance: &Instance, schedule: &Schedule) -> FuelEstimate {
    let beta: Vec<Vec<f64>> = instance
        .type2
        .iter()
        .map(|p| accumulate_beta(p, &instance.grid))
        .collect();
    let rows = instance
        .type2
        .iter()
        .enumerate()
        .map(|(i, p)| estimate_fuel_chain(p, &schedule.starts[i], &schedule.refuels[i], &beta[i]))
        .collect();
    FuelEstimate {
        beta,
        rows,
        alpha: instance
            .type2
            .iter()
            .map(|p| weekly_rate(p, &instance.grid))
            .collect(),
        last: schedule
            .starts
            .iter()
            .map(|row| {
                row.iter()
                    .take_while(|s| s.is_some())
                    .count()
                    .checked_sub(1)
            })
            .collect(),
    }
}

/// `alpha * max(0, gap - fuel / alpha)`, zero for plants that never produce.
#[inline]
pub fn offline_term(alpha: f64, gap_weeks: f64, fuel: f64) -> f64 {
    if alpha > 0.0 {
        alpha * (gap_weeks - fuel / alpha).max(0.0)
    } else {
        0.0
    }
}

/// Surrogate contribution of one plant.
pub fn plant_surrogate(
    plant: &Type2Plant,
    row: &[Option<usize>],
    fuel: &FuelRow,
    alpha: f64,
    weeks: usize,
) -> f64 {
    let mut total = 0.0;
    let mut last: Option<usize> = None;
    for (k, start) in row.iter().enumerate() {
        let Some(w) = *start else { break };
        total += match last {
            None => offline_term(alpha, w as f64, plant.initial_fuel),
            Some(j) => {
                let end = row[j].expect("scheduled") + plant.cycles[j].duration;
                offline_term(alpha, w as f64 - end as f64, fuel.after[j])
            }
        };
        last = Some(k);
    }
    total
        + match last {
            None => offline_term(alpha, weeks as f64, plant.initial_fuel),
            Some(j) => {
                let end = row[j].expect("scheduled") + plant.cycles[j].duration;
                offline_term(alpha, weeks as f64 - end as f64, fuel.after[j])
            }
        }
}

/// Estimated offline type-2 capacity summed over plants.
pub fn surrogate_objective(
    instance: &Instance,
    schedule: &Schedule,
    estimates: &FuelEstimate,
) -> f64 {
    instance
        .type2
        .iter()
        .enumerate()
        .map(|(i, p)| {
            plant_surrogate(
                p,
                &schedule.starts[i],
                &estimates.rows[i],
                estimates.alpha[i],
                instance.weeks(),
            )
        })
        .sum()
}
