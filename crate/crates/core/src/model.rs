//! Domain types shared by every phase: the time grid, plants, cycles,
//! scenarios, coupling constraints, schedules and productions.
//!
//! Everything here is immutable once an [`Instance`] has been validated.
//! Week indices are `usize`; an unscheduled outage is `None` in memory and
//! `-1` in files.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance used for every comparison against a bound.
pub const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invariant `{invariant}` violated at {path}")]
    Validation {
        invariant: &'static str,
        path: String,
    },
    #[error("structural error: {0}")]
    Structural(String),
}

impl ModelError {
    fn invalid(invariant: &'static str, path: impl Into<String>) -> Self {
        ModelError::Validation {
            invariant,
            path: path.into(),
        }
    }
}

/// Two nested discretizations of the horizon: weeks made of contiguous,
/// equally long time steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TimeGridRaw", into = "TimeGridRaw")]
pub struct TimeGrid {
    hours_per_step: f64,
    /// `week_starts[h]..week_starts[h + 1]` are the steps of week `h`.
    week_starts: Vec<usize>,
    week_of_step: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TimeGridRaw {
    hours_per_step: f64,
    week_lengths: Vec<usize>,
}

impl TryFrom<TimeGridRaw> for TimeGrid {
    type Error = ModelError;

    fn try_from(raw: TimeGridRaw) -> Result<Self, Self::Error> {
        TimeGrid::new(raw.hours_per_step, &raw.week_lengths)
    }
}

impl From<TimeGrid> for TimeGridRaw {
    fn from(grid: TimeGrid) -> Self {
        TimeGridRaw {
            hours_per_step: grid.hours_per_step,
            week_lengths: (0..grid.weeks()).map(|h| grid.steps_of(h).len()).collect(),
        }
    }
}

impl TimeGrid {
    pub fn new(hours_per_step: f64, week_lengths: &[usize]) -> Result<Self, ModelError> {
        if !(hours_per_step.is_finite() && hours_per_step > 0.0) {
            return Err(ModelError::invalid(
                "hours per step > 0",
                "grid.hours_per_step",
            ));
        }
        if week_lengths.is_empty() {
            return Err(ModelError::invalid(
                "at least one week",
                "grid.week_lengths",
            ));
        }
        let mut week_starts = Vec::with_capacity(week_lengths.len() + 1);
        let mut week_of_step = Vec::new();
        week_starts.push(0);
        for (h, &len) in week_lengths.iter().enumerate() {
            if len == 0 {
                return Err(ModelError::invalid(
                    "every week has at least one step",
                    format!("grid.week_lengths[{h}]"),
                ));
            }
            week_of_step.extend(std::iter::repeat(h).take(len));
            week_starts.push(week_of_step.len());
        }
        Ok(TimeGrid {
            hours_per_step,
            week_starts,
            week_of_step,
        })
    }

    pub fn uniform(
        weeks: usize,
        steps_per_week: usize,
        hours_per_step: f64,
    ) -> Result<Self, ModelError> {
        Self::new(hours_per_step, &vec![steps_per_week; weeks])
    }

    /// `T`
    pub fn steps(&self) -> usize {
        self.week_of_step.len()
    }

    /// `H`
    pub fn weeks(&self) -> usize {
        self.week_starts.len() - 1
    }

    /// `D`
    pub fn hours_per_step(&self) -> f64 {
        self.hours_per_step
    }

    pub fn week_of(&self, step: usize) -> usize {
        self.week_of_step[step]
    }

    pub fn steps_of(&self, week: usize) -> Range<usize> {
        self.week_starts[week]..self.week_starts[week + 1]
    }

    /// Steps of the half-open week range `[first, end)`, clamped to the horizon.
    pub fn steps_of_weeks(&self, first: usize, end: usize) -> Range<usize> {
        let h = self.weeks();
        let first = first.min(h);
        let end = end.clamp(first, h);
        self.week_starts[first]..self.week_starts[end]
    }

    /// First step of week `week`; `week == H` yields `T`.
    pub fn week_start(&self, week: usize) -> usize {
        self.week_starts[week.min(self.weeks())]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Type1Plant {
    /// `[t][s]`
    pub pmin: Vec<Vec<f64>>,
    /// `[t][s]`
    pub pmax: Vec<Vec<f64>>,
    /// Currency per power-hour, `[t][s]`.
    pub cost: Vec<Vec<f64>>,
}

/// Fraction of maximum power available below the profile threshold, as a
/// non-decreasing piecewise-linear function of the fuel level. Points are
/// `(fuel, fraction)`, sorted by fuel; the last point sits at the threshold
/// with fraction one. Below the first point the first fraction applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PowerProfile {
    points: Vec<(f64, f64)>,
}

impl PowerProfile {
    pub fn new(points: Vec<(f64, f64)>) -> Self {
        PowerProfile { points }
    }

    /// A profile that drops linearly from one at `threshold` to `floor` at zero fuel.
    pub fn linear(threshold: f64, floor: f64) -> Self {
        if threshold <= 0.0 {
            return PowerProfile::new(vec![(0.0, 1.0)]);
        }
        PowerProfile::new(vec![(0.0, floor), (threshold, 1.0)])
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn fraction(&self, fuel: f64) -> f64 {
        let pts = &self.points;
        let idx = pts.partition_point(|&(x, _)| x <= fuel);
        if idx == 0 {
            return pts[0].1;
        }
        if idx == pts.len() {
            return pts[pts.len() - 1].1;
        }
        let (x0, y0) = pts[idx - 1];
        let (x1, y1) = pts[idx];
        y0 + (fuel - x0) * (y1 - y0) / (x1 - x0)
    }

    fn validate(&self, threshold: f64, path: &str) -> Result<(), ModelError> {
        if self.points.is_empty() {
            return Err(ModelError::invalid("profile has at least one point", path));
        }
        for (n, &(x, y)) in self.points.iter().enumerate() {
            if !(x.is_finite() && (0.0..=1.0).contains(&y)) {
                return Err(ModelError::invalid(
                    "profile values in [0, 1]",
                    format!("{path}[{n}]"),
                ));
            }
        }
        for w in self.points.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].1 >= w[0].1) {
                return Err(ModelError::invalid(
                    "profile breakpoints strictly increasing in fuel, non-decreasing in value",
                    path,
                ));
            }
        }
        if (self.fraction(threshold) - 1.0).abs() > TOLERANCE {
            return Err(ModelError::invalid(
                "profile equals one at the threshold",
                path,
            ));
        }
        Ok(())
    }
}

/// Production rules of one campaign: profile threshold, modulation budget
/// and the declining profile itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignLimits {
    /// Fuel level below which the declining profile applies.
    pub threshold: f64,
    /// Maximum accumulated modulation, in power-hours.
    pub max_modulation: f64,
    pub profile: PowerProfile,
}

/// Weeks, relative to the outage start, during which an outage consumes
/// maintenance resources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceWindow {
    pub offset: i64,
    pub weeks: usize,
}

/// One outage together with the production campaign that follows it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    /// Outage length in weeks.
    pub duration: usize,
    pub earliest: Option<usize>,
    /// When defined the outage must be scheduled.
    pub latest: Option<usize>,
    pub min_refuel: f64,
    pub max_refuel: f64,
    /// Fraction of the pre-outage fuel kept through the reload (`< 1`).
    pub keep_ratio: f64,
    /// Constant added to the fuel level by the reload.
    pub reload_offset: f64,
    /// Fuel bound when the outage starts.
    pub max_fuel_before: f64,
    /// Fuel bound right after the reload.
    pub max_fuel_after: f64,
    /// Currency per reloaded fuel unit.
    pub refuel_cost: f64,
    pub resource_windows: Vec<ResourceWindow>,
    pub campaign: CampaignLimits,
}

impl Cycle {
    /// Fuel level after a reload of `refuel` into a plant holding `fuel`.
    #[inline]
    pub fn reload(&self, fuel: f64, refuel: f64) -> f64 {
        self.keep_ratio * fuel + refuel + self.reload_offset
    }

    /// Weeks `[first, end)` during which the outage starting in `start` uses
    /// resources, one range per window, clamped at zero.
    pub fn resource_weeks(&self, start: usize) -> impl Iterator<Item = Range<usize>> + '_ {
        self.resource_windows.iter().map(move |w| {
            let first = (start as i64 + w.offset).max(0) as usize;
            let end = (start as i64 + w.offset + w.weeks as i64).max(0) as usize;
            first..end.max(first)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Type2Plant {
    /// `[t]`
    pub pmax: Vec<f64>,
    pub initial_fuel: f64,
    /// Value per unit of fuel left at the end of the horizon.
    pub final_fuel_price: f64,
    /// Rules for the campaign before the first outage.
    pub initial_campaign: CampaignLimits,
    pub cycles: Vec<Cycle>,
}

impl Type2Plant {
    /// Limits of the campaign following `cycle`, or of the initial campaign.
    pub fn campaign(&self, cycle: Option<usize>) -> &CampaignLimits {
        match cycle {
            None => &self.initial_campaign,
            Some(k) => &self.cycles[k].campaign,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub count: usize,
    /// `[t][s]`
    pub demand: Vec<Vec<f64>>,
    /// Relative width of the declining profile band.
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OutageId {
    pub plant: usize,
    pub cycle: usize,
}

impl OutageId {
    pub fn new(plant: usize, cycle: usize) -> Self {
        OutageId { plant, cycle }
    }
}

/// `start(first) - start(second) >= min_after  OR  start(second) - start(first) >= min_before`,
/// enforced only when both outages intersect the week window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub first: OutageId,
    pub second: OutageId,
    pub min_after: i64,
    pub min_before: i64,
    /// Inclusive week interval.
    pub window: (usize, usize),
}

/// At most `limit` of `outages` may be active in `week`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxOffline {
    pub week: usize,
    pub outages: Vec<OutageId>,
    pub limit: usize,
}

/// At most `capacity` of `outages` may use resources in any week.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceLimit {
    pub outages: Vec<OutageId>,
    pub capacity: usize,
}

/// During every step of `weeks`, the summed `pmax` of offline plants in
/// `plants` may not exceed `limit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineCapacity {
    pub plants: Vec<usize>,
    pub limit: f64,
    pub weeks: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CouplingConstraints {
    pub separations: Vec<Separation>,
    pub max_offline: Vec<MaxOffline>,
    pub resources: Vec<ResourceLimit>,
    pub offline_capacity: Vec<OfflineCapacity>,
}

impl CouplingConstraints {
    pub fn len(&self) -> usize {
        self.separations.len()
            + self.max_offline.len()
            + self.resources.len()
            + self.offline_capacity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub grid: TimeGrid,
    pub type1: Vec<Type1Plant>,
    pub type2: Vec<Type2Plant>,
    pub scenarios: ScenarioSet,
    pub coupling: CouplingConstraints,
}

fn check_matrix(m: &[Vec<f64>], rows: usize, cols: usize, path: &str) -> Result<(), ModelError> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(ModelError::invalid("array dimensions match T and S", path));
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ModelError::invalid("finite values", path));
    }
    Ok(())
}

impl Instance {
    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn weeks(&self) -> usize {
        self.grid.weeks()
    }

    pub fn scenario_count(&self) -> usize {
        self.scenarios.count
    }

    pub fn max_cycles(&self) -> usize {
        self.type2.iter().map(|p| p.cycles.len()).max().unwrap_or(0)
    }

    pub fn cycle(&self, id: OutageId) -> &Cycle {
        &self.type2[id.plant].cycles[id.cycle]
    }

    pub fn outage_ids(&self) -> impl Iterator<Item = OutageId> + '_ {
        self.type2
            .iter()
            .enumerate()
            .flat_map(|(i, p)| (0..p.cycles.len()).map(move |k| OutageId::new(i, k)))
    }

    /// Checks every structural and numeric invariant.
    pub fn validate(&self) -> Result<(), ModelError> {
        let t = self.steps();
        let h = self.weeks();
        let s = self.scenarios.count;
        if s == 0 {
            return Err(ModelError::invalid(
                "at least one scenario",
                "scenarios.count",
            ));
        }
        check_matrix(&self.scenarios.demand, t, s, "scenarios.demand")?;
        if self.scenarios.demand.iter().flatten().any(|&d| d < 0.0) {
            return Err(ModelError::invalid("demand >= 0", "scenarios.demand"));
        }
        if !(0.0..1.0).contains(&self.scenarios.epsilon) {
            return Err(ModelError::invalid("0 <= epsilon < 1", "scenarios.epsilon"));
        }
        for (j, p) in self.type1.iter().enumerate() {
            check_matrix(&p.pmin, t, s, &format!("type1[{j}].pmin"))?;
            check_matrix(&p.pmax, t, s, &format!("type1[{j}].pmax"))?;
            check_matrix(&p.cost, t, s, &format!("type1[{j}].cost"))?;
            for tt in 0..t {
                for ss in 0..s {
                    if !(0.0 <= p.pmin[tt][ss] && p.pmin[tt][ss] <= p.pmax[tt][ss]) {
                        return Err(ModelError::invalid(
                            "0 <= pmin <= pmax",
                            format!("type1[{j}].pmin[{tt}][{ss}]"),
                        ));
                    }
                }
            }
        }
        for (i, p) in self.type2.iter().enumerate() {
            let path = format!("type2[{i}]");
            if p.pmax.len() != t || p.pmax.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
                return Err(ModelError::invalid(
                    "pmax has T non-negative entries",
                    format!("{path}.pmax"),
                ));
            }
            if !(p.initial_fuel.is_finite() && p.initial_fuel >= 0.0) {
                return Err(ModelError::invalid(
                    "initial fuel >= 0",
                    format!("{path}.initial_fuel"),
                ));
            }
            validate_campaign(&p.initial_campaign, &format!("{path}.initial_campaign"))?;
            for (k, c) in p.cycles.iter().enumerate() {
                let cpath = format!("{path}.cycles[{k}]");
                if c.duration == 0 || c.duration > h {
                    return Err(ModelError::invalid(
                        "1 <= outage duration <= H",
                        format!("{cpath}.duration"),
                    ));
                }
                if !(0.0 <= c.min_refuel && c.min_refuel <= c.max_refuel) {
                    return Err(ModelError::invalid(
                        "reload bounds order (0 <= min_refuel <= max_refuel)",
                        format!("{cpath}.min_refuel"),
                    ));
                }
                if !(c.keep_ratio < 1.0 && c.keep_ratio.is_finite()) {
                    return Err(ModelError::invalid(
                        "keep ratio < 1",
                        format!("{cpath}.keep_ratio"),
                    ));
                }
                if let (Some(lo), Some(hi)) = (c.earliest, c.latest) {
                    if lo > hi {
                        return Err(ModelError::invalid(
                            "earliest <= latest",
                            format!("{cpath}.earliest"),
                        ));
                    }
                }
                validate_campaign(&c.campaign, &format!("{cpath}.campaign"))?;
            }
        }
        self.validate_coupling()
    }

    fn validate_coupling(&self) -> Result<(), ModelError> {
        let exists = |id: &OutageId| {
            id.plant < self.type2.len() && id.cycle < self.type2[id.plant].cycles.len()
        };
        let h = self.weeks();
        for (n, c) in self.coupling.separations.iter().enumerate() {
            if !exists(&c.first) || !exists(&c.second) {
                return Err(ModelError::invalid(
                    "referenced outages exist",
                    format!("coupling.separations[{n}]"),
                ));
            }
            if c.window.0 > c.window.1 {
                return Err(ModelError::invalid(
                    "window is ordered",
                    format!("coupling.separations[{n}].window"),
                ));
            }
        }
        for (n, c) in self.coupling.max_offline.iter().enumerate() {
            if !c.outages.iter().all(exists) || c.week >= h {
                return Err(ModelError::invalid(
                    "referenced outages and week exist",
                    format!("coupling.max_offline[{n}]"),
                ));
            }
        }
        for (n, c) in self.coupling.resources.iter().enumerate() {
            if !c.outages.iter().all(exists) {
                return Err(ModelError::invalid(
                    "referenced outages exist",
                    format!("coupling.resources[{n}]"),
                ));
            }
        }
        for (n, c) in self.coupling.offline_capacity.iter().enumerate() {
            if c.plants.iter().any(|&i| i >= self.type2.len()) || c.weeks.iter().any(|&w| w >= h) {
                return Err(ModelError::invalid(
                    "referenced plants and weeks exist",
                    format!("coupling.offline_capacity[{n}]"),
                ));
            }
            if !(c.limit >= 0.0) {
                return Err(ModelError::invalid(
                    "offline capacity limit >= 0",
                    format!("coupling.offline_capacity[{n}]"),
                ));
            }
        }
        Ok(())
    }
}

fn validate_campaign(c: &CampaignLimits, path: &str) -> Result<(), ModelError> {
    if !(c.threshold >= 0.0 && c.max_modulation >= 0.0) {
        return Err(ModelError::invalid(
            "threshold and modulation budget >= 0",
            path,
        ));
    }
    c.profile.validate(c.threshold, &format!("{path}.profile"))
}

/// Shared decisions: outage start weeks and refuel amounts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// `[i][k]`
    pub starts: Vec<Vec<Option<usize>>>,
    /// `[i][k]`
    pub refuels: Vec<Vec<f64>>,
}

impl Schedule {
    /// Every outage unscheduled, every refuel zero.
    pub fn empty(instance: &Instance) -> Self {
        Schedule {
            starts: instance
                .type2
                .iter()
                .map(|p| vec![None; p.cycles.len()])
                .collect(),
            refuels: instance
                .type2
                .iter()
                .map(|p| vec![0.0; p.cycles.len()])
                .collect(),
        }
    }

    pub fn start(&self, id: OutageId) -> Option<usize> {
        self.starts[id.plant][id.cycle]
    }

    pub fn is_scheduled(&self, id: OutageId) -> bool {
        self.start(id).is_some()
    }

    pub fn scheduled_count(&self, plant: usize) -> usize {
        self.starts[plant]
            .iter()
            .take_while(|s| s.is_some())
            .count()
    }

    pub fn scheduled_ids(&self) -> impl Iterator<Item = OutageId> + '_ {
        self.starts.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, s)| s.is_some())
                .map(move |(k, _)| OutageId::new(i, k))
        })
    }

    /// Checks the ordering invariants for one plant.
    pub fn check_plant_order(&self, instance: &Instance, plant: usize) -> Result<(), ModelError> {
        check_row_order(instance, plant, &self.starts[plant])
    }
}

/// Ordering invariants of one plant's start row: no scheduled outage after
/// an unscheduled one, no overlap, everything inside the horizon.
pub fn check_row_order(
    instance: &Instance,
    plant: usize,
    row: &[Option<usize>],
) -> Result<(), ModelError> {
    let cycles = &instance.type2[plant].cycles;
    if row.len() != cycles.len() {
        return Err(ModelError::Structural(format!(
            "plant {plant}: schedule row has wrong length"
        )));
    }
    let mut prev_end: Option<usize> = None;
    let mut seen_gap = false;
    for (k, start) in row.iter().enumerate() {
        match *start {
            None => seen_gap = true,
            Some(_) if seen_gap => {
                return Err(ModelError::Structural(format!(
                    "plant {plant}: outage {k} scheduled after an unscheduled one"
                )))
            }
            Some(s) => {
                if prev_end.is_some_and(|e| s < e) {
                    return Err(ModelError::Structural(format!(
                        "plant {plant}: outage {k} overlaps its predecessor"
                    )));
                }
                if s + cycles[k].duration > instance.weeks() {
                    return Err(ModelError::Structural(format!(
                        "plant {plant}: outage {k} ends after the horizon"
                    )));
                }
                prev_end = Some(s + cycles[k].duration);
            }
        }
    }
    Ok(())
}

/// Outage and campaign step ranges of one plant. The campaign before the
/// first outage has `cycle == None` and an empty outage range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CampaignSpan {
    pub cycle: Option<usize>,
    pub outage: Range<usize>,
    pub campaign: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantTimeline {
    pub spans: Vec<CampaignSpan>,
}

impl PlantTimeline {
    /// Span containing `step`, either in its outage or its campaign.
    pub fn span_at(&self, step: usize) -> &CampaignSpan {
        let idx = self.spans.partition_point(|s| s.outage.start <= step);
        &self.spans[idx.saturating_sub(1)]
    }
}

/// Unfolds scheduled outages into step intervals, one timeline per plant.
pub fn derive_campaigns(
    instance: &Instance,
    schedule: &Schedule,
) -> Result<Vec<PlantTimeline>, ModelError> {
    (0..instance.type2.len())
        .map(|i| plant_timeline(instance, schedule, i))
        .collect()
}

pub fn plant_timeline(
    instance: &Instance,
    schedule: &Schedule,
    plant: usize,
) -> Result<PlantTimeline, ModelError> {
    row_timeline(instance, plant, &schedule.starts[plant])
}

/// Timeline of one plant given only its start row.
pub fn row_timeline(
    instance: &Instance,
    plant: usize,
    row: &[Option<usize>],
) -> Result<PlantTimeline, ModelError> {
    check_row_order(instance, plant, row)?;
    let grid = &instance.grid;
    let cycles = &instance.type2[plant].cycles;
    let t_end = grid.steps();
    let mut spans = vec![CampaignSpan {
        cycle: None,
        outage: 0..0,
        campaign: 0..t_end,
    }];
    for (k, start) in row.iter().enumerate() {
        let Some(week) = *start else { break };
        let outage = grid.steps_of_weeks(week, week + cycles[k].duration);
        spans.last_mut().expect("non-empty").campaign.end = outage.start;
        spans.push(CampaignSpan {
            cycle: Some(k),
            campaign: outage.end..t_end,
            outage,
        });
    }
    Ok(PlantTimeline { spans })
}

/// Per-scenario production: `type1[j][t]` and `type2[i][t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Production {
    pub type1: Vec<Vec<f64>>,
    pub type2: Vec<Vec<f64>>,
}

impl Production {
    pub fn zeros(instance: &Instance) -> Self {
        let t = instance.steps();
        Production {
            type1: vec![vec![0.0; t]; instance.type1.len()],
            type2: vec![vec![0.0; t]; instance.type2.len()],
        }
    }
}

/// A complete candidate answer: schedule plus one production per scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub schedule: Schedule,
    pub production: Vec<Production>,
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy_instance(
        weeks: usize,
        steps_per_week: usize,
        durations: &[usize],
    ) -> Instance {
        let grid = TimeGrid::uniform(weeks, steps_per_week, 1.0).unwrap();
        let t = grid.steps();
        let limits = CampaignLimits {
            threshold: 0.0,
            max_modulation: 0.0,
            profile: PowerProfile::linear(0.0, 0.0),
        };
        let cycles = durations
            .iter()
            .map(|&d| Cycle {
                duration: d,
                earliest: None,
                latest: None,
                min_refuel: 0.0,
                max_refuel: 10.0,
                keep_ratio: 0.9,
                reload_offset: 0.0,
                max_fuel_before: 100.0,
                max_fuel_after: 100.0,
                refuel_cost: 1.0,
                resource_windows: vec![],
                campaign: limits.clone(),
            })
            .collect();
        Instance {
            grid,
            type1: vec![],
            type2: vec![Type2Plant {
                pmax: vec![1.0; t],
                initial_fuel: 10.0,
                final_fuel_price: 1.0,
                initial_campaign: limits,
                cycles,
            }],
            scenarios: ScenarioSet {
                count: 1,
                demand: vec![vec![0.0]; t],
                epsilon: 0.0,
            },
            coupling: CouplingConstraints::default(),
        }
    }

    #[test]
    fn grid_maps_steps_to_weeks() {
        let g = TimeGrid::new(2.0, &[2, 3, 1]).unwrap();
        assert_eq!(g.steps(), 6);
        assert_eq!(g.weeks(), 3);
        assert_eq!(g.steps_of(1), 2..5);
        assert_eq!(
            (0..6).map(|t| g.week_of(t)).collect::<Vec<_>>(),
            vec![0, 0, 1, 1, 1, 2]
        );
        assert!(TimeGrid::new(0.0, &[1]).is_err());
        assert!(TimeGrid::new(1.0, &[1, 0]).is_err());
    }

    #[test]
    fn single_outage_unfolds_to_one_week() {
        let inst = toy_instance(4, 1, &[1]);
        let mut sched = Schedule::empty(&inst);
        sched.starts[0][0] = Some(2);
        let tl = derive_campaigns(&inst, &sched).unwrap();
        assert_eq!(tl[0].spans[1].outage, 2..3);
        assert_eq!(tl[0].spans[1].campaign, 3..4);
        assert_eq!(tl[0].spans[0].campaign, 0..2);
    }

    #[test]
    fn unscheduled_plant_has_one_campaign() {
        let inst = toy_instance(4, 2, &[1, 1]);
        let tl = derive_campaigns(&inst, &Schedule::empty(&inst)).unwrap();
        assert_eq!(tl[0].spans.len(), 1);
        assert_eq!(tl[0].spans[0].campaign, 0..8);
        assert!(tl[0].spans[0].outage.is_empty());
    }

    #[test]
    fn two_cycles_on_five_weeks() {
        let inst = toy_instance(5, 1, &[1, 1]);
        let mut sched = Schedule::empty(&inst);
        sched.starts[0] = vec![Some(1), Some(3)];
        let tl = &derive_campaigns(&inst, &sched).unwrap()[0];
        assert_eq!(tl.spans[1].campaign, 2..3);
        assert_eq!(tl.spans[2].campaign, 4..5);
        assert_eq!(tl.span_at(3).cycle, Some(1));
        assert_eq!(tl.span_at(2).cycle, Some(0));
        assert_eq!(tl.span_at(0).cycle, None);
    }

    #[test]
    fn overlapping_outages_are_structural_errors() {
        let inst = toy_instance(6, 1, &[2, 1]);
        let mut sched = Schedule::empty(&inst);
        sched.starts[0] = vec![Some(1), Some(2)];
        assert!(matches!(
            derive_campaigns(&inst, &sched),
            Err(ModelError::Structural(_))
        ));
        sched.starts[0] = vec![None, Some(4)];
        assert!(matches!(
            derive_campaigns(&inst, &sched),
            Err(ModelError::Structural(_))
        ));
    }

    #[test]
    fn profile_interpolates_and_clamps() {
        let p = PowerProfile::new(vec![(0.0, 0.2), (5.0, 0.6), (10.0, 1.0)]);
        assert_eq!(p.fraction(-1.0), 0.2);
        assert!((p.fraction(2.5) - 0.4).abs() < 1e-12);
        assert_eq!(p.fraction(10.0), 1.0);
        assert_eq!(p.fraction(50.0), 1.0);
    }

    #[test]
    fn validation_names_the_broken_invariant() {
        let mut inst = toy_instance(3, 1, &[1]);
        assert!(inst.validate().is_ok());
        inst.type2[0].cycles[0].min_refuel = 20.0;
        match inst.validate() {
            Err(ModelError::Validation { invariant, .. }) => {
                assert!(invariant.contains("reload bounds"))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest::proptest! {
        #[test]
        fn spans_partition_the_horizon(starts in proptest::collection::vec(0usize..3, 0..4), spw in 1usize..3) {
            let inst = toy_instance(16, spw, &[1, 2, 1, 1]);
            let mut sched = Schedule::empty(&inst);
            let mut week = 0;
            for (k, gap) in starts.iter().enumerate() {
                week += gap;
                let d = inst.type2[0].cycles[k].duration;
                if week + d > 16 { break; }
                sched.starts[0][k] = Some(week);
                week += d;
            }
            let tl = derive_campaigns(&inst, &sched).unwrap();
            let again = derive_campaigns(&inst, &sched).unwrap();
            proptest::prop_assert_eq!(&tl, &again);
            let mut covered = vec![0u8; inst.steps()];
            for span in &tl[0].spans {
                for t in span.outage.clone().chain(span.campaign.clone()) { covered[t] += 1; }
            }
            proptest::prop_assert!(covered.iter().all(|&c| c == 1));
        }
    }
}
