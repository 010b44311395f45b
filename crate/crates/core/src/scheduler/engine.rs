//! Depth-first search over (scheduled?, start week, refuel) per outage with
//! forward checking on the coupling constraints and branch-and-bound on the
//! surrogate objective.
//!
//! Outages are visited cycle by cycle, and within a cycle by a seeded random
//! permutation of the plants. Scheduling is tried before skipping, the
//! earliest week first and the largest refuel first.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::estimate::{accumulate_beta, adjusted_fuel, offline_term, weekly_rate};
use crate::evaluator::separation_excess;
use crate::model::{Cycle, Instance, ModelError, OutageId, Schedule, TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Budget {
    /// Search nodes; deterministic.
    Nodes(u64),
    /// Wall-clock time.
    Time(Duration),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    /// Fuel units per discrete refuel step.
    pub refuel_quantum: f64,
    /// Once spent, the search stops as soon as it holds a schedule.
    pub budget: Budget,
    /// Absolute cap; `None` keeps searching until the first schedule.
    pub hard_budget: Option<Budget>,
    pub seed: u64,
    /// Keep improving the surrogate after the first schedule.
    pub bnb: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            refuel_quantum: 1000.0,
            budget: Budget::Time(Duration::from_secs(10)),
            hard_budget: None,
            seed: 0,
            bnb: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchedulerError {
    #[error("search budget exhausted after {nodes} nodes without a feasible schedule")]
    BudgetExhausted { nodes: u64 },
    #[error("no feasible schedule exists (search exhausted after {nodes} nodes)")]
    Infeasible { nodes: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleResult {
    pub schedule: Schedule,
    pub surrogate: f64,
    pub nodes: u64,
    /// Surrogate value of every accepted incumbent, in discovery order.
    pub incumbents: Vec<f64>,
    /// True when the whole tree was explored.
    pub complete: bool,
}

/// Finds a schedule satisfying the exact scheduling constraints and the
/// approximate fuel bounds.
pub fn solve_schedule(
    instance: &Instance,
    config: &SchedulerConfig,
) -> Result<ScheduleResult, SchedulerError> {
    solve_schedule_with(instance, config, |_| true)
}

/// Like [`solve_schedule`], but a complete assignment only becomes an
/// incumbent when `accept` agrees.
pub fn solve_schedule_with<F>(
    instance: &Instance,
    config: &SchedulerConfig,
    accept: F,
) -> Result<ScheduleResult, SchedulerError>
where
    F: FnMut(&Schedule) -> bool,
{
    instance.validate()?;
    assert!(
        config.refuel_quantum > 0.0,
        "refuel quantum must be positive"
    );
    let mut engine = Engine::new(instance, config, accept);
    let root_ok = engine.root();
    if root_ok {
        engine.dfs(0);
    }
    let nodes = engine.nodes;
    match engine.best.take() {
        Some((surrogate, schedule)) => Ok(ScheduleResult {
            schedule,
            surrogate,
            nodes,
            incumbents: engine.incumbents,
            complete: !engine.stopped,
        }),
        None if engine.stopped => Err(SchedulerError::BudgetExhausted { nodes }),
        None => Err(SchedulerError::Infeasible { nodes }),
    }
}

struct Var {
    id: OutageId,
    duration: usize,
    mandatory: bool,
}

struct Engine<'a, F> {
    inst: &'a Instance,
    cfg: &'a SchedulerConfig,
    accept: F,
    weeks: usize,
    words: usize,
    vars: Vec<Var>,
    var_of: Vec<Vec<usize>>,
    order: Vec<usize>,
    dom: Vec<u64>,
    trail: Vec<(usize, u64)>,
    assigned: Vec<Option<usize>>,
    refuels: Vec<Vec<f64>>,
    /// Cycles `>= closed_from[i]` are unscheduled.
    closed_from: Vec<usize>,
    decided: Vec<usize>,
    last_end: Vec<usize>,
    last_after: Vec<f64>,
    beta: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    sep_of: Vec<Vec<usize>>,
    maxoff_of: Vec<Vec<usize>>,
    res_of: Vec<Vec<usize>>,
    cap_of_plant: Vec<Vec<usize>>,
    maxoff_members: Vec<Vec<usize>>,
    res_members: Vec<Vec<usize>>,
    cap_members: Vec<Vec<usize>>,
    cap_in_scope: Vec<Vec<bool>>,
    maxoff_count: Vec<usize>,
    res_usage: Vec<Vec<usize>>,
    cap_sum: Vec<Vec<f64>>,
    fuel_conflicts: Vec<u64>,
    lb: f64,
    nodes: u64,
    started: Instant,
    stopped: bool,
    best: Option<(f64, Schedule)>,
    incumbents: Vec<f64>,
}

impl<'a, F: FnMut(&Schedule) -> bool> Engine<'a, F> {
    fn new(inst: &'a Instance, cfg: &'a SchedulerConfig, accept: F) -> Self {
        let weeks = inst.weeks();
        let words = weeks.div_ceil(64).max(1);
        let mut vars = Vec::new();
        let mut var_of = Vec::new();
        for (i, plant) in inst.type2.iter().enumerate() {
            let last_mandatory = plant.cycles.iter().rposition(|c| c.latest.is_some());
            let mut row = Vec::new();
            for (k, c) in plant.cycles.iter().enumerate() {
                row.push(vars.len());
                vars.push(Var {
                    id: OutageId::new(i, k),
                    duration: c.duration,
                    mandatory: last_mandatory.is_some_and(|m| k <= m),
                });
            }
            var_of.push(row);
        }
        let mut rho: Vec<usize> = (0..inst.type2.len()).collect();
        rho.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
        let order = (0..inst.max_cycles())
            .flat_map(|k| {
                rho.iter()
                    .filter_map(move |&i| (k < inst.type2[i].cycles.len()).then_some((i, k)))
            })
            .map(|(i, k)| var_of[i][k])
            .collect();

        let var_index = |id: &OutageId| var_of[id.plant][id.cycle];
        let mut sep_of = vec![Vec::new(); vars.len()];
        for (n, s) in inst.coupling.separations.iter().enumerate() {
            sep_of[var_index(&s.first)].push(n);
            if s.second != s.first {
                sep_of[var_index(&s.second)].push(n);
            }
        }
        let dedup_vars = |ids: &[OutageId]| {
            let mut v: Vec<usize> = ids.iter().map(var_index).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let maxoff_members: Vec<Vec<usize>> = inst
            .coupling
            .max_offline
            .iter()
            .map(|c| dedup_vars(&c.outages))
            .collect();
        let res_members: Vec<Vec<usize>> = inst
            .coupling
            .resources
            .iter()
            .map(|c| dedup_vars(&c.outages))
            .collect();
        let mut maxoff_of = vec![Vec::new(); vars.len()];
        for (n, m) in maxoff_members.iter().enumerate() {
            for &v in m {
                maxoff_of[v].push(n);
            }
        }
        let mut res_of = vec![Vec::new(); vars.len()];
        for (n, m) in res_members.iter().enumerate() {
            for &v in m {
                res_of[v].push(n);
            }
        }
        let mut cap_members = Vec::new();
        let mut cap_in_scope = Vec::new();
        let mut cap_of_plant = vec![Vec::new(); inst.type2.len()];
        for (n, c) in inst.coupling.offline_capacity.iter().enumerate() {
            let mut plants = c.plants.clone();
            plants.sort_unstable();
            plants.dedup();
            for &i in &plants {
                cap_of_plant[i].push(n);
            }
            cap_members.push(plants);
            let mut scope = vec![false; inst.steps()];
            for &h in &c.weeks {
                for t in inst.grid.steps_of(h) {
                    scope[t] = true;
                }
            }
            cap_in_scope.push(scope);
        }
        let now = Instant::now();
        Engine {
            inst,
            cfg,
            accept,
            weeks,
            words,
            dom: vec![0; vars.len() * words],
            trail: Vec::new(),
            assigned: vec![None; vars.len()],
            refuels: inst
                .type2
                .iter()
                .map(|p| vec![0.0; p.cycles.len()])
                .collect(),
            closed_from: inst.type2.iter().map(|p| p.cycles.len()).collect(),
            decided: vec![0; inst.type2.len()],
            last_end: vec![0; inst.type2.len()],
            last_after: inst.type2.iter().map(|p| p.initial_fuel).collect(),
            beta: inst
                .type2
                .iter()
                .map(|p| accumulate_beta(p, &inst.grid))
                .collect(),
            alpha: inst
                .type2
                .iter()
                .map(|p| weekly_rate(p, &inst.grid))
                .collect(),
            sep_of,
            maxoff_of,
            res_of,
            cap_of_plant,
            maxoff_count: vec![0; maxoff_members.len()],
            res_usage: vec![vec![0; weeks]; res_members.len()],
            cap_sum: vec![vec![0.0; inst.steps()]; cap_members.len()],
            maxoff_members,
            res_members,
            cap_members,
            cap_in_scope,
            fuel_conflicts: vec![0; inst.type2.len()],
            lb: 0.0,
            nodes: 0,
            started: now,
            stopped: false,
            best: None,
            incumbents: Vec::new(),
            vars,
            var_of,
            order,
        }
    }

    // ---- domains ----

    fn remove(&mut self, v: usize, w: usize) {
        let idx = v * self.words + w / 64;
        let bit = 1u64 << (w % 64);
        if self.dom[idx] & bit != 0 {
            self.trail.push((idx, self.dom[idx]));
            self.dom[idx] &= !bit;
        }
    }

    fn first_from(&self, v: usize, lo: usize) -> Option<usize> {
        if lo >= self.weeks {
            return None;
        }
        let base = v * self.words;
        let mut word = lo / 64;
        let mut bits = self.dom[base + word] & (!0u64 << (lo % 64));
        loop {
            if bits != 0 {
                let w = word * 64 + bits.trailing_zeros() as usize;
                return (w < self.weeks).then_some(w);
            }
            word += 1;
            if word >= self.words {
                return None;
            }
            bits = self.dom[base + word];
        }
    }

    fn undo_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let (idx, old) = self.trail.pop().expect("non-empty");
            self.dom[idx] = old;
        }
    }

    /// Still undecided and not forced off by an earlier skipped cycle.
    fn open(&self, v: usize) -> bool {
        let id = self.vars[v].id;
        self.assigned[v].is_none() && id.cycle < self.closed_from[id.plant]
    }

    // ---- root ----

    fn root(&mut self) -> bool {
        for v in 0..self.vars.len() {
            let c = self.inst.cycle(self.vars[v].id);
            let lo = c.earliest.unwrap_or(0);
            let hi = c.latest.unwrap_or(usize::MAX);
            for w in 0..self.weeks {
                if w >= lo && w <= hi && w + c.duration <= self.weeks {
                    self.dom[v * self.words + w / 64] |= 1u64 << (w % 64);
                }
            }
        }
        for n in 0..self.maxoff_members.len() {
            if self.inst.coupling.max_offline[n].limit == 0 {
                self.close_max_offline(n, usize::MAX);
            }
        }
        for n in 0..self.res_members.len() {
            if self.inst.coupling.resources[n].capacity == 0 {
                for h in 0..self.weeks {
                    self.close_resource_week(n, h, usize::MAX);
                }
            }
        }
        for n in 0..self.cap_members.len() {
            self.prune_capacity(n, 0, self.weeks);
        }
        // plants without cycles contribute a constant last term
        for (i, plant) in self.inst.type2.iter().enumerate() {
            if plant.cycles.is_empty() {
                self.lb += offline_term(self.alpha[i], self.weeks as f64, plant.initial_fuel);
            }
        }
        (0..self.inst.type2.len()).all(|i| self.chain_ok(i))
    }

    // ---- propagation ----

    fn resource_weeks(&self, v: usize, start: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .inst
            .cycle(self.vars[v].id)
            .resource_weeks(start)
            .flat_map(|r| r.start.min(self.weeks)..r.end.min(self.weeks))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Updates counters for `v` starting at `w`; `sign` is +1 or -1.
    fn count(&mut self, v: usize, w: usize, add: bool) {
        let da = self.vars[v].duration;
        for &n in &self.maxoff_of[v].clone() {
            let week = self.inst.coupling.max_offline[n].week;
            if week >= w && week < w + da {
                if add {
                    self.maxoff_count[n] += 1;
                } else {
                    self.maxoff_count[n] -= 1;
                }
            }
        }
        let used = self.resource_weeks(v, w);
        for &n in &self.res_of[v].clone() {
            for &h in &used {
                if add {
                    self.res_usage[n][h] += 1;
                } else {
                    self.res_usage[n][h] -= 1;
                }
            }
        }
        let plant = self.vars[v].id.plant;
        for &n in &self.cap_of_plant[plant].clone() {
            for t in self.inst.grid.steps_of_weeks(w, w + da) {
                if self.cap_in_scope[n][t] {
                    let p = self.inst.type2[plant].pmax[t];
                    if add {
                        self.cap_sum[n][t] += p;
                    } else {
                        self.cap_sum[n][t] -= p;
                    }
                }
            }
        }
    }

    fn close_max_offline(&mut self, n: usize, except: usize) {
        let week = self.inst.coupling.max_offline[n].week;
        for o in self.maxoff_members[n].clone() {
            if o == except || !self.open(o) {
                continue;
            }
            let da = self.vars[o].duration;
            for wo in (week + 1).saturating_sub(da)..=week.min(self.weeks - 1) {
                self.remove(o, wo);
            }
        }
    }

    fn close_resource_week(&mut self, n: usize, h: usize, except: usize) {
        for o in self.res_members[n].clone() {
            if o == except || !self.open(o) {
                continue;
            }
            let windows = self.inst.cycle(self.vars[o].id).resource_windows.clone();
            for win in windows {
                // wo + offset <= h < wo + offset + len
                let hi = h as i64 - win.offset;
                let lo = hi - win.weeks as i64 + 1;
                for wo in lo.max(0)..=hi.min(self.weeks as i64 - 1) {
                    if wo >= 0 {
                        self.remove(o, wo as usize);
                    }
                }
            }
        }
    }

    /// Removes weeks of open outages in constraint `n` whose span overlaps
    /// weeks `[from, to)` and would push the offline capacity over its limit.
    fn prune_capacity(&mut self, n: usize, from: usize, to: usize) {
        let limit = self.inst.coupling.offline_capacity[n].limit;
        for i in self.cap_members[n].clone() {
            let pmax = &self.inst.type2[i].pmax;
            for v in self.var_of[i].clone() {
                if !self.open(v) {
                    continue;
                }
                let da = self.vars[v].duration;
                let lo = (from + 1).saturating_sub(da);
                let mut w = self.first_from(v, lo);
                while let Some(wo) = w {
                    if wo >= to {
                        break;
                    }
                    let over = self.inst.grid.steps_of_weeks(wo, wo + da).any(|t| {
                        self.cap_in_scope[n][t] && self.cap_sum[n][t] + pmax[t] > limit + TOLERANCE
                    });
                    if over {
                        self.remove(v, wo);
                    }
                    w = self.first_from(v, wo + 1);
                }
            }
        }
    }

    /// Forward checking after `v` was placed at `w` (counters already
    /// updated). Returns false on a wipe-out.
    fn propagate(&mut self, v: usize, w: usize) -> bool {
        let id = self.vars[v].id;
        let da = self.vars[v].duration;
        for n in self.sep_of[v].clone() {
            let sep = &self.inst.coupling.separations[n];
            let v_first = sep.first == id;
            let other_id = if v_first { sep.second } else { sep.first };
            let o = self.var_of[other_id.plant][other_id.cycle];
            if let Some(wo) = self.assigned[o] {
                let (a, b) = if v_first { (w, wo) } else { (wo, w) };
                if separation_excess(self.inst, sep, a, b).is_some() {
                    return false;
                }
                continue;
            }
            if !self.open(o) {
                continue;
            }
            let mut cur = self.first_from(o, 0);
            while let Some(wo) = cur {
                let (a, b) = if v_first { (w, wo) } else { (wo, w) };
                if separation_excess(self.inst, &self.inst.coupling.separations[n], a, b).is_some()
                {
                    self.remove(o, wo);
                }
                cur = self.first_from(o, wo + 1);
            }
        }
        for n in self.maxoff_of[v].clone() {
            let c = &self.inst.coupling.max_offline[n];
            if c.week >= w && c.week < w + da {
                if self.maxoff_count[n] > c.limit {
                    return false;
                }
                if self.maxoff_count[n] == c.limit {
                    self.close_max_offline(n, v);
                }
            }
        }
        let used = self.resource_weeks(v, w);
        for n in self.res_of[v].clone() {
            let cap = self.inst.coupling.resources[n].capacity;
            for &h in &used {
                if self.res_usage[n][h] > cap {
                    return false;
                }
                if self.res_usage[n][h] == cap {
                    self.close_resource_week(n, h, v);
                }
            }
        }
        for n in self.cap_of_plant[id.plant].clone() {
            let limit = self.inst.coupling.offline_capacity[n].limit;
            if self
                .inst
                .grid
                .steps_of_weeks(w, w + da)
                .any(|t| self.cap_in_scope[n][t] && self.cap_sum[n][t] > limit + TOLERANCE)
            {
                return false;
            }
            self.prune_capacity(n, w, w + da);
        }
        (0..self.inst.type2.len()).all(|i| self.chain_ok(i))
    }

    /// Can the remaining mandatory outages of plant `i` still be placed in
    /// order within their domains?
    fn chain_ok(&self, i: usize) -> bool {
        let rows = &self.var_of[i];
        let Some(last) = rows.iter().rposition(|&v| self.vars[v].mandatory) else {
            return true;
        };
        if self.decided[i] > last {
            return true;
        }
        if self.closed_from[i] <= last {
            return false;
        }
        let mut cursor = self.last_end[i];
        for &v in &rows[self.decided[i]..=last] {
            if self.assigned[v].is_some() {
                continue;
            }
            match self.first_from(v, cursor) {
                Some(w) => cursor = w + self.vars[v].duration,
                None => return false,
            }
        }
        true
    }

    // ---- search ----

    fn spent(&self, budget: Budget) -> bool {
        match budget {
            Budget::Nodes(n) => self.nodes >= n,
            Budget::Time(d) => self.started.elapsed() >= d,
        }
    }

    fn check_budget(&mut self) {
        let check_time = self.nodes % 64 == 0;
        let soft = match self.cfg.budget {
            Budget::Time(_) if !check_time => false,
            b => self.spent(b),
        };
        let hard = match self.cfg.hard_budget {
            Some(Budget::Time(_)) if !check_time => false,
            Some(b) => self.spent(b),
            None => false,
        };
        if hard || (soft && self.best.is_some()) {
            self.stopped = true;
        }
    }

    fn prunes(&self, bound: f64) -> bool {
        match &self.best {
            Some((best, _)) if self.cfg.bnb => bound >= best - 1e-9 * best.abs().max(1.0),
            _ => false,
        }
    }

    fn refuel_candidates(&self, c: &Cycle) -> Vec<f64> {
        let q = self.cfg.refuel_quantum;
        let mut out = vec![c.max_refuel];
        let top = ((c.max_refuel - TOLERANCE) / q).floor();
        let bottom = ((c.min_refuel + TOLERANCE) / q).ceil();
        let mut m = top;
        while m >= bottom && m >= 0.0 {
            let r = m * q;
            if r > c.min_refuel && r < c.max_refuel {
                out.push(r);
            }
            m -= 1.0;
        }
        if c.min_refuel < c.max_refuel {
            out.push(c.min_refuel);
        }
        out
    }

    fn leaf(&mut self) {
        if self.prunes(self.lb) {
            return;
        }
        let mut schedule = Schedule::empty(self.inst);
        for v in 0..self.vars.len() {
            let id = self.vars[v].id;
            if let Some(w) = self.assigned[v] {
                schedule.starts[id.plant][id.cycle] = Some(w);
                schedule.refuels[id.plant][id.cycle] = self.refuels[id.plant][id.cycle];
            }
        }
        if (self.accept)(&schedule) {
            log::debug!("incumbent {:.3} after {} nodes", self.lb, self.nodes);
            self.incumbents.push(self.lb);
            self.best = Some((self.lb, schedule));
            if !self.cfg.bnb {
                self.stopped = true;
            }
        }
    }

    fn dfs(&mut self, n: usize) {
        if self.stopped {
            return;
        }
        self.nodes += 1;
        self.check_budget();
        if self.stopped {
            return;
        }
        if n == self.order.len() {
            self.leaf();
            return;
        }
        let v = self.order[n];
        let OutageId { plant: i, cycle: k } = self.vars[v].id;
        if k >= self.closed_from[i] {
            self.dfs(n + 1);
            return;
        }
        let inst = self.inst;
        let plant = &inst.type2[i];
        let cycle = &plant.cycles[k];
        let da = cycle.duration;
        let alpha = self.alpha[i];
        let threshold = plant.campaign(k.checked_sub(1)).threshold;
        let is_last = k + 1 == plant.cycles.len();
        let candidates = self.refuel_candidates(cycle);

        let mut week = self.first_from(v, self.last_end[i]);
        while let Some(w) = week {
            let (end, after_prev) = (self.last_end[i], self.last_after[i]);
            let used = self.beta[i][w] - self.beta[i][end.min(w)];
            let before = adjusted_fuel(after_prev - used, threshold);
            if before > cycle.max_fuel_before + TOLERANCE {
                self.fuel_conflicts[i] += 1;
                week = self.first_from(v, w + 1);
                continue;
            }
            let term = offline_term(alpha, w as f64 - end as f64, after_prev);
            if self.prunes(self.lb + term) {
                break;
            }
            let mark = self.trail.len();
            self.assigned[v] = Some(w);
            self.count(v, w, true);
            if self.propagate(v, w) {
                self.last_end[i] = w + da;
                self.decided[i] += 1;
                for &r in &candidates {
                    let after = cycle.reload(before, r);
                    if after > cycle.max_fuel_after + TOLERANCE {
                        self.fuel_conflicts[i] += 1;
                        continue;
                    }
                    self.last_after[i] = after;
                    self.refuels[i][k] = r;
                    let add = term
                        + if is_last {
                            offline_term(alpha, self.weeks as f64 - (w + da) as f64, after)
                        } else {
                            0.0
                        };
                    let conflicts = self.fuel_conflicts[i];
                    self.lb += add;
                    if !self.prunes(self.lb) {
                        self.dfs(n + 1);
                    }
                    self.lb -= add;
                    // a smaller refuel only helps when this plant's own fuel bounds bit
                    if self.stopped || self.fuel_conflicts[i] == conflicts {
                        break;
                    }
                }
                self.refuels[i][k] = 0.0;
                self.decided[i] -= 1;
                self.last_end[i] = end;
                self.last_after[i] = after_prev;
            }
            self.count(v, w, false);
            self.assigned[v] = None;
            self.undo_to(mark);
            if self.stopped {
                return;
            }
            week = self.first_from(v, w + 1);
        }

        if self.vars[v].mandatory {
            return;
        }
        let old = self.closed_from[i];
        self.closed_from[i] = k;
        let add = offline_term(
            alpha,
            self.weeks as f64 - self.last_end[i] as f64,
            self.last_after[i],
        );
        self.lb += add;
        if !self.prunes(self.lb) && (0..inst.type2.len()).all(|p| p != i || self.chain_ok(p)) {
            self.dfs(n + 1);
        }
        self.lb -= add;
        self.closed_from[i] = old;
    }
}
