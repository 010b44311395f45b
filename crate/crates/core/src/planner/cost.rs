//! Type-1 cost as a function of total type-2 production.
//!
//! For one scenario and step the flexible plants cover the remaining demand
//! in merit order, which gives a convex, non-increasing piecewise-linear
//! cost. Averaging over scenarios keeps both properties. The exact form
//! keeps every kink; the approximation samples it on an equidistant grid so
//! evaluation needs no search.

use serde::{Deserialize, Serialize};

use crate::model::{Instance, ScenarioSet};
use crate::par::Exec;

/// Slope multiplier for demand that the flexible plants cannot cover.
pub const PENALTY_FACTOR: f64 = 10.0;

/// Elementwise minimum demand over scenarios.
pub fn min_demand_scenario(scenarios: &ScenarioSet) -> Vec<f64> {
    scenarios
        .demand
        .iter()
        .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
        .collect()
}

/// Type-2 room left in scenario `s` at step `t` once every flexible plant
/// runs at its minimum.
pub fn type2_room(instance: &Instance, t: usize, s: usize) -> f64 {
    instance.scenarios.demand[t][s] - instance.type1.iter().map(|p| p.pmin[t][s]).sum::<f64>()
}

/// Per-step cap on total type-2 production that keeps every scenario
/// balanced: the minimum over scenarios of [`type2_room`].
pub fn min_scenario_cap(instance: &Instance) -> Vec<f64> {
    (0..instance.steps())
        .map(|t| {
            (0..instance.scenario_count())
                .map(|s| type2_room(instance, t, s))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Flexible plants at `(t, s)` sorted cheapest first (ties by index).
pub fn merit_order(instance: &Instance, t: usize, s: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..instance.type1.len()).collect();
    order.sort_by(|&a, &b| {
        instance.type1[a].cost[t][s]
            .total_cmp(&instance.type1[b].cost[t][s])
            .then(a.cmp(&b))
    });
    order
}

/// Flexible production covering `demand - type2` at `(t, s)`: every plant
/// at its minimum, then the remainder cheapest first. Returns the per-plant
/// levels and the uncovered amount (zero when capacity suffices).
pub fn dispatch_type1(instance: &Instance, t: usize, s: usize, type2: f64) -> (Vec<f64>, f64) {
    let mut levels: Vec<f64> = instance.type1.iter().map(|p| p.pmin[t][s]).collect();
    let mut rest = type2_room(instance, t, s) - type2;
    for j in merit_order(instance, t, s) {
        if rest <= 0.0 {
            break;
        }
        let plant = &instance.type1[j];
        let add = rest.min(plant.pmax[t][s] - plant.pmin[t][s]);
        levels[j] += add;
        rest -= add;
    }
    (levels, rest.max(0.0))
}

fn penalty_price(instance: &Instance, t: usize, s: usize) -> f64 {
    let local = instance
        .type1
        .iter()
        .map(|p| p.cost[t][s])
        .fold(0.0, f64::max);
    if local > 0.0 {
        return PENALTY_FACTOR * local;
    }
    let global = instance
        .type1
        .iter()
        .flat_map(|p| p.cost.iter().flatten())
        .copied()
        .fold(0.0, f64::max);
    PENALTY_FACTOR * if global > 0.0 { global } else { 1.0 }
}

/// One scenario's cost curve at one step.
#[derive(Debug, Clone)]
struct ScenarioCurve {
    room: f64,
    base: f64,
    /// `(width, price)` cheapest first, followed by the penalty band.
    bands: Vec<(f64, f64)>,
    d: f64,
}

impl ScenarioCurve {
    fn new(instance: &Instance, t: usize, s: usize) -> Self {
        let d = instance.grid.hours_per_step();
        let base = d * instance
            .type1
            .iter()
            .map(|p| p.pmin[t][s] * p.cost[t][s])
            .sum::<f64>();
        let bands = merit_order(instance, t, s)
            .into_iter()
            .map(|j| {
                let p = &instance.type1[j];
                (p.pmax[t][s] - p.pmin[t][s], p.cost[t][s])
            })
            .filter(|&(w, _)| w > 0.0)
            .collect();
        ScenarioCurve {
            room: type2_room(instance, t, s),
            base,
            bands,
            d,
        }
        .with_penalty(penalty_price(instance, t, s))
    }

    fn with_penalty(mut self, price: f64) -> Self {
        self.bands.push((f64::INFINITY, price));
        self
    }

    fn cost(&self, type2: f64) -> f64 {
        let mut slack = (self.room - type2).max(0.0);
        let mut total = 0.0;
        for &(width, price) in &self.bands {
            if slack <= 0.0 {
                break;
            }
            let used = slack.min(width);
            total += used * price;
            slack -= used;
        }
        self.base + self.d * total
    }

    /// Kink positions in type-2 production space.
    fn kinks(&self) -> impl Iterator<Item = f64> + '_ {
        let mut cum = 0.0;
        std::iter::once(self.room).chain(self.bands.iter().filter(|b| b.0.is_finite()).map(
            move |b| {
                cum += b.0;
                self.room - cum
            },
        ))
    }
}

/// Exact averaged cost at one step, stored as sorted breakpoints on
/// `[0, max room]`; constant to the right of the last breakpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactPwl {
    pub points: Vec<(f64, f64)>,
}

impl ExactPwl {
    pub fn eval(&self, type2: f64) -> f64 {
        let x = type2.max(0.0);
        let pts = &self.points;
        let idx = pts.partition_point(|p| p.0 <= x);
        if idx == pts.len() {
            return pts[pts.len() - 1].1;
        }
        let (x0, y0) = pts[idx - 1];
        let (x1, y1) = pts[idx];
        y0 + (x - x0) * (y1 - y0) / (x1 - x0)
    }

    /// Right end of the sloped part.
    pub fn domain_end(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }
}

/// Equidistant sampling of an [`ExactPwl`] on `[0, domain_end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquidistantPwl {
    pub interval: f64,
    pub values: Vec<f64>,
}

impl EquidistantPwl {
    pub fn from_exact(exact: &ExactPwl, count: usize) -> Self {
        assert!(count >= 2, "at least two breakpoints");
        let end = exact.domain_end();
        let interval = end / (count - 1) as f64;
        let values = (0..count)
            .map(|i| {
                if i + 1 == count {
                    exact.eval(end)
                } else {
                    exact.eval(i as f64 * interval)
                }
            })
            .collect();
        EquidistantPwl { interval, values }
    }

    /// Constant-time interpolation between the two neighbouring samples.
    #[inline]
    pub fn eval(&self, type2: f64) -> f64 {
        let last = self.values.len() - 1;
        if !(self.interval > 0.0) {
            return self.values[last];
        }
        let pos = type2.max(0.0) / self.interval;
        let low = pos.floor() as usize;
        if low >= last {
            return self.values[last];
        }
        let high = (pos.ceil() as usize).min(last);
        if low == high {
            return self.values[low];
        }
        let (a, b) = (self.values[low], self.values[high]);
        a + (pos - low as f64) * (b - a)
    }
}

/// Exact and approximated averaged type-1 cost for every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwlCost {
    pub exact: Vec<ExactPwl>,
    pub approx: Vec<EquidistantPwl>,
    pub breakpoint_count: usize,
}

impl PwlCost {
    pub fn build(instance: &Instance, breakpoint_count: usize) -> Self {
        Self::build_with(Exec::default(), instance, breakpoint_count)
    }

    pub fn build_with(exec: Exec, instance: &Instance, breakpoint_count: usize) -> Self {
        let exact = exec.map_range(instance.steps(), |t| build_type1_cost(instance, t));
        let approx = exec.map_slice(&exact, |e| EquidistantPwl::from_exact(e, breakpoint_count));
        PwlCost {
            exact,
            approx,
            breakpoint_count,
        }
    }

    /// Default count: three breakpoints per type-2 plant, at least two.
    pub fn default_breakpoints(instance: &Instance) -> usize {
        (3 * instance.type2.len()).max(2)
    }

    #[inline]
    pub fn approx_cost(&self, t: usize, type2: f64) -> f64 {
        self.approx[t].eval(type2)
    }

    pub fn exact_cost(&self, t: usize, type2: f64) -> f64 {
        self.exact[t].eval(type2)
    }
}

/// Exact averaged type-1 cost curve at step `t`.
pub fn build_type1_cost(instance: &Instance, t: usize) -> ExactPwl {
    let s_count = instance.scenario_count();
    let curves: Vec<ScenarioCurve> = (0..s_count)
        .map(|s| ScenarioCurve::new(instance, t, s))
        .collect();
    let mut xs: Vec<f64> = vec![0.0];
    xs.extend(curves.iter().flat_map(|c| c.kinks()).filter(|&x| x > 0.0));
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    let eval = |x: f64| curves.iter().map(|c| c.cost(x)).sum::<f64>() / s_count as f64;
    ExactPwl {
        points: xs.into_iter().map(|x| (x, eval(x))).collect(),
    }
}

/// Direct evaluation of the averaged cost without breakpoints; used as an
/// independent check of [`ExactPwl`].
pub fn averaged_cost_direct(instance: &Instance, t: usize, type2: f64) -> f64 {
    let d = instance.grid.hours_per_step();
    let s_count = instance.scenario_count();
    (0..s_count)
        .map(|s| {
            let (levels, missing) = dispatch_type1(instance, t, s, type2.max(0.0));
            let paid: f64 = levels
                .iter()
                .zip(&instance.type1)
                .map(|(p, plant)| p * plant.cost[t][s])
                .sum();
            d * (paid + missing * penalty_price(instance, t, s))
        })
        .sum::<f64>()
        / s_count as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn instance(demand: Vec<Vec<f64>>, plants: &[(f64, f64, f64)]) -> Instance {
        let t = demand.len();
        let s = demand[0].len();
        Instance {
            grid: TimeGrid::uniform(t, 1, 1.0).unwrap(),
            type1: plants
                .iter()
                .map(|&(pmin, pmax, cost)| Type1Plant {
                    pmin: vec![vec![pmin; s]; t],
                    pmax: vec![vec![pmax; s]; t],
                    cost: vec![vec![cost; s]; t],
                })
                .collect(),
            type2: vec![],
            scenarios: ScenarioSet {
                count: s,
                demand,
                epsilon: 0.0,
            },
            coupling: CouplingConstraints::default(),
        }
    }

    #[test]
    fn min_demand_is_elementwise() {
        let inst = instance(vec![vec![3.0, 5.0], vec![4.0, 2.0]], &[]);
        assert_eq!(min_demand_scenario(&inst.scenarios), vec![3.0, 2.0]);
        let single = instance(vec![vec![7.0], vec![1.0]], &[]);
        assert_eq!(min_demand_scenario(&single.scenarios), vec![7.0, 1.0]);
    }

    #[test]
    fn single_plant_fill() {
        let inst = instance(vec![vec![10.0]], &[(0.0, 10.0, 2.0)]);
        let f = build_type1_cost(&inst, 0);
        for x in [0.0, 2.5, 7.0, 10.0, 15.0] {
            let want = if x >= 10.0 { 0.0 } else { 2.0 * (10.0 - x) };
            assert!((f.eval(x) - want).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn two_plants_knee_at_cheap_capacity() {
        let inst = instance(vec![vec![10.0]], &[(0.0, 4.0, 1.0), (0.0, 10.0, 3.0)]);
        let f = build_type1_cost(&inst, 0);
        // cheap plant covers the last 4 units of slack, so the knee sits at P2 = 6
        assert!((f.eval(6.0) - 4.0).abs() < 1e-12);
        assert!((f.eval(8.0) - 2.0).abs() < 1e-12);
        assert!((f.eval(2.0) - (4.0 + 3.0 * 4.0)).abs() < 1e-12);
        assert!(f.points.iter().any(|p| (p.0 - 6.0).abs() < 1e-12));
    }

    #[test]
    fn interpolation_indices() {
        let p = EquidistantPwl {
            interval: 100.0,
            values: vec![0.0, 10.0, 30.0, 60.0],
        };
        assert_eq!(p.eval(150.0), 20.0);
        assert_eq!(p.eval(200.0), 30.0);
        assert_eq!(p.eval(1e9), 60.0);
    }

    #[test]
    fn breakpoint_count_bound() {
        let inst = instance(
            vec![vec![10.0, 12.0, 9.0]],
            &[(0.0, 4.0, 1.0), (1.0, 8.0, 2.0), (0.0, 20.0, 3.0)],
        );
        let f = build_type1_cost(&inst, 0);
        assert!(f.points.len() <= 3 * 3 + 1);
    }

    proptest::proptest! {
        #[test]
        fn approx_bounds_exact_from_above(
            demand in proptest::collection::vec(50.0f64..500.0, 1..5),
            caps in proptest::collection::vec((0.0f64..20.0, 20.0f64..200.0, 1.0f64..50.0), 1..5),
            count in 2usize..20,
            x in 0.0f64..600.0,
        ) {
            let inst = instance(vec![demand], &caps);
            let exact = build_type1_cost(&inst, 0);
            let approx = EquidistantPwl::from_exact(&exact, count);
            let scale = exact.eval(0.0).abs().max(1.0);
            proptest::prop_assert!(approx.eval(x) >= exact.eval(x) - 1e-9 * scale);
            let direct = averaged_cost_direct(&inst, 0, x);
            proptest::prop_assert!((direct - exact.eval(x)).abs() <= 1e-9 * scale);
            for w in exact.points.windows(3) {
                let s1 = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                let s2 = (w[2].1 - w[1].1) / (w[2].0 - w[1].0);
                proptest::prop_assert!(s1 <= s2 + 1e-9 * scale && s2 <= 1e-9 * scale);
            }
        }
    }
}
