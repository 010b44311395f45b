//! The neighborhood: shift one scheduled outage to another start week.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Instance, OutageId, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Move {
    pub outage: OutageId,
    pub target: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Entry {
    outage: OutageId,
    lo: usize,
    /// Current start, skipped when it falls inside `lo..=hi`.
    skip: Option<usize>,
}

/// Uniform sampler over every (scheduled outage, target week) pair within
/// the outage's bounds and the move radius, excluding the current week.
#[derive(Debug, Clone, Default)]
pub struct MoveSampler {
    entries: Vec<Entry>,
    /// Exclusive prefix sums of candidate counts; `cumulative[n + 1]` ends entry `n`.
    cumulative: Vec<usize>,
}

impl MoveSampler {
    pub fn len(&self) -> usize {
        self.cumulative.last().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn decode(&self, index: usize) -> Move {
        let n = self.cumulative.partition_point(|&c| c <= index) - 1;
        let e = self.entries[n];
        let mut target = e.lo + (index - self.cumulative[n]);
        if e.skip.is_some_and(|s| target >= s) {
            target += 1;
        }
        Move {
            outage: e.outage,
            target,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Move> {
        (!self.is_empty()).then(|| self.decode(rng.gen_range(0..self.len())))
    }

    pub fn moves(&self) -> impl Iterator<Item = Move> + '_ {
        (0..self.len()).map(|i| self.decode(i))
    }
}

/// Candidate targets `m` for each scheduled outage: inside `[to, ta]`, with
/// `m + da <= H` and `|start - m| < radius`.
pub fn enumerate_moves(instance: &Instance, schedule: &Schedule, radius: usize) -> MoveSampler {
    let mut sampler = MoveSampler {
        entries: Vec::new(),
        cumulative: vec![0],
    };
    if radius == 0 {
        return sampler;
    }
    let weeks = instance.weeks();
    for id in schedule.scheduled_ids() {
        let start = schedule.start(id).expect("scheduled");
        let c = instance.cycle(id);
        if c.duration > weeks {
            continue;
        }
        let lo = c
            .earliest
            .unwrap_or(0)
            .max(start.saturating_sub(radius - 1));
        let hi = c
            .latest
            .unwrap_or(usize::MAX)
            .min(start + radius - 1)
            .min(weeks - c.duration);
        if lo > hi {
            continue;
        }
        let inside = (lo..=hi).contains(&start);
        let count = hi - lo + 1 - inside as usize;
        if count == 0 {
            continue;
        }
        sampler.entries.push(Entry {
            outage: id,
            lo,
            skip: inside.then_some(start),
        });
        sampler.cumulative.push(sampler.len() + count);
    }
    sampler
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn instance(weeks: usize, earliest: Option<usize>, latest: Option<usize>) -> Instance {
        let grid = TimeGrid::uniform(weeks, 1, 1.0).unwrap();
        let t = grid.steps();
        let limits = CampaignLimits {
            threshold: 0.0,
            max_modulation: 0.0,
            profile: PowerProfile::linear(0.0, 0.0),
        };
        Instance {
            grid,
            type1: vec![],
            type2: vec![Type2Plant {
                pmax: vec![1.0; t],
                initial_fuel: 0.0,
                final_fuel_price: 0.0,
                initial_campaign: limits.clone(),
                cycles: vec![Cycle {
                    duration: 1,
                    earliest,
                    latest,
                    min_refuel: 0.0,
                    max_refuel: 0.0,
                    keep_ratio: 0.0,
                    reload_offset: 0.0,
                    max_fuel_before: 0.0,
                    max_fuel_after: 0.0,
                    refuel_cost: 0.0,
                    resource_windows: vec![],
                    campaign: limits,
                }],
            }],
            scenarios: ScenarioSet {
                count: 1,
                demand: vec![vec![0.0]; t],
                epsilon: 0.0,
            },
            coupling: CouplingConstraints::default(),
        }
    }

    fn targets(inst: &Instance, start: usize, radius: usize) -> Vec<usize> {
        let mut s = Schedule::empty(inst);
        s.starts[0][0] = Some(start);
        enumerate_moves(inst, &s, radius)
            .moves()
            .map(|m| m.target)
            .collect()
    }

    #[test]
    fn bounds_and_radius() {
        assert_eq!(
            targets(&instance(20, Some(5), Some(9)), 7, 20),
            vec![5, 6, 8, 9]
        );
        let wide = targets(&instance(100, None, None), 50, 20);
        assert_eq!(wide, (31..=69).filter(|&m| m != 50).collect::<Vec<_>>());
    }

    #[test]
    fn unscheduled_outages_never_move() {
        let inst = instance(10, None, None);
        assert!(enumerate_moves(&inst, &Schedule::empty(&inst), 20).is_empty());
    }

    #[test]
    fn sampling_is_uniform() {
        use rand::SeedableRng;
        let inst = instance(100, None, None);
        let mut s = Schedule::empty(&inst);
        s.starts[0][0] = Some(50);
        let sampler = enumerate_moves(&inst, &s, 20);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut counts = vec![0usize; 100];
        for _ in 0..n {
            counts[sampler.sample(&mut rng).unwrap().target] += 1;
        }
        let cells = sampler.len() as f64;
        let expected = n as f64 / cells;
        let chi2: f64 = sampler
            .moves()
            .map(|m| (counts[m.target] as f64 - expected).powi(2) / expected)
            .sum();
        // 37 degrees of freedom, 99.9th percentile about 69.3
        assert!(chi2 < 69.3, "chi2 {chi2}");
        assert_eq!(counts[50], 0);
    }
}
